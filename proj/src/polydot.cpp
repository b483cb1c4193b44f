#include "sdcc/polydot.hpp"

#include <boost/multiprecision/gmp.hpp>

namespace sdcc::polydot {

std::vector<SplitPair> enumerate_codes(int m) {
  if (m < 1) throw std::invalid_argument("polydot: block count must be positive");
  std::vector<SplitPair> out;
  for (int s = 1; s <= m; ++s) {
    if (m % s == 0) out.push_back({s, m / s});
  }
  return out;
}

CodeParams CodeParams::make(int N, int s, int t) {
  if (N < 1 || s < 1 || t < 1) {
    throw std::invalid_argument("polydot: N, s and t must be positive");
  }
  if (N % s != 0 || N % t != 0) {
    throw std::invalid_argument("polydot: N=" + std::to_string(N) + " is not divisible by s=" +
                                std::to_string(s) + " and t=" + std::to_string(t));
  }
  return CodeParams{N, s, t};
}

CodeProfile derive_profile_relaxed(double N, double s, double t, double omega, double mu_enc,
                                   double mu_dec) {
  if (!(omega >= 1.0)) throw std::invalid_argument("polydot: redundancy ratio must be >= 1");
  if (!(mu_enc > 0.0) || !(mu_dec > 0.0)) {
    throw std::invalid_argument("polydot: encoder and decoder rates must be positive");
  }
  if (!(N > 0.0) || !(s > 0.0) || !(t > 0.0)) {
    throw std::invalid_argument("polydot: N, s and t must be positive");
  }
  CodeProfile p;
  const double n2 = N * N;
  p.K = t * t * (2.0 * s - 1.0);
  p.I_in = 2.0 * p.K * omega * n2 / (s * t);
  p.I_out = p.K * omega * n2 / (t * t);
  p.I_out_purged = p.K * n2 / (t * t);
  p.C_ops = p.K * omega * n2 * N / (s * t * t);
  p.T_enc_mean = p.K * omega * n2 / mu_enc;
  p.T_dec_mean = (n2 * p.K + p.K * p.K * p.K) / mu_dec;
  return p;
}

CodeProfile derive_profile(const CodeParams& params, double omega, double mu_enc, double mu_dec) {
  return derive_profile_relaxed(params.N, params.s, params.t, omega, mu_enc, mu_dec);
}

namespace detail {

std::optional<Matrix<Rational>> decode_integral(std::span<const TaskResult<Rational>> used,
                                                const CodeParams& params,
                                                std::span<const int> exponents) {
  using boost::multiprecision::mpz_int;
  const std::size_t n = used.size();
  const int br = params.a_rows();
  std::vector<mpz_int> x(n);
  std::vector<Matrix<mpz_int>> values(n, Matrix<mpz_int>(br, br));
  for (std::size_t r = 0; r < n; ++r) {
    if (denominator(used[r].eval_point) != 1) return std::nullopt;
    x[r] = numerator(used[r].eval_point);
    for (int i = 0; i < br; ++i) {
      for (int j = 0; j < br; ++j) {
        const Rational& v = used[r].value(i, j);
        if (denominator(v) != 1) return std::nullopt;
        values[r](i, j) = numerator(v);
      }
    }
  }

  std::vector<mpz_int> master(n + 1, mpz_int(0));
  master[0] = 1;
  for (std::size_t q = 0; q < n; ++q) {
    for (std::size_t k = q + 1; k > 0; --k) master[k] = master[k - 1] - x[q] * master[k];
    master[0] = -x[q] * master[0];
  }

  // basis r has numerator master / (x - x_r) and denominator prod_{q != r} (x_r - x_q)
  std::vector<std::vector<mpz_int>> numer(n, std::vector<mpz_int>(exponents.size()));
  std::vector<mpz_int> denom(n);
  std::vector<mpz_int> quotient(n);
  mpz_int common = 1;
  for (std::size_t r = 0; r < n; ++r) {
    quotient[n - 1] = master[n];
    for (std::size_t k = n - 1; k > 0; --k) quotient[k - 1] = master[k] + x[r] * quotient[k];
    denom[r] = 1;
    for (std::size_t q = 0; q < n; ++q) {
      if (q != r) denom[r] *= x[r] - x[q];
    }
    if (denom[r] == 0) throw DecodeError("polydot: duplicate evaluation point");
    for (std::size_t e = 0; e < exponents.size(); ++e) {
      numer[r][e] = quotient[static_cast<std::size_t>(exponents[e])];
    }
    common = lcm(common, mpz_int(abs(denom[r])));
  }
  for (std::size_t r = 0; r < n; ++r) {
    const mpz_int scale = common / denom[r];
    for (auto& w : numer[r]) w *= scale;
  }

  const int t = params.t;
  Matrix<Rational> C(params.N, params.N);
  mpz_int acc;
  std::size_t e = 0;
  for (int l = 0; l < t; ++l) {
    for (int i = 0; i < t; ++i, ++e) {
      for (int a = 0; a < br; ++a) {
        for (int b = 0; b < br; ++b) {
          acc = 0;
          for (std::size_t r = 0; r < n; ++r) acc += values[r](a, b) * numer[r][e];
          C(i * br + a, l * br + b) = Rational(acc, common);
        }
      }
    }
  }
  return C;
}

}  // namespace detail

}  // namespace sdcc::polydot
