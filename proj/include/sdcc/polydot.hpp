#pragma once

// PolyDot distributed matrix-multiplication code.
//
// A (N x N) is cut into t row-blocks by s column-blocks, B into s row-blocks
// by t column-blocks. Task r receives the matrix polynomials
//
//   PA(x) = sum_{i<t, j<s} A(i,j) x^(t*j + i)
//   PB(x) = sum_{k<s, l<t} B(k,l) x^(t*(2s-1)*l + t*(s-1-k))
//
// evaluated at x_r and returns PA(x_r) * PB(x_r). The product polynomial has
// degree t^2(2s-1) - 1, so any K = t^2(2s-1) distinct evaluations determine
// it; block C(i,l) is the coefficient of x^(t*(2s-1)*l + t*(s-1) + i).

#include <compare>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include <Eigen/Dense>
#include <boost/multiprecision/eigen.hpp>
#include <boost/multiprecision/gmp.hpp>

namespace sdcc::polydot {

/// Exact scalar used wherever decode fidelity is asserted.
using Rational = boost::multiprecision::number<boost::multiprecision::gmp_rational,
                                               boost::multiprecision::et_off>;

template <class T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

class DecodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SplitPair {
  int s = 1;
  int t = 1;
  auto operator<=>(const SplitPair&) const = default;
};

/// All (s, t) with s * t == m, sorted by s ascending.
std::vector<SplitPair> enumerate_codes(int m);

/// Block layout of one multiplication job.
struct CodeParams {
  int N = 1;
  int s = 1;
  int t = 1;

  int m() const { return s * t; }
  /// Number of critical tasks, t^2 (2s - 1).
  int critical_tasks() const { return t * t * (2 * s - 1); }
  int a_rows() const { return N / t; }
  int a_cols() const { return N / s; }

  /// Throws std::invalid_argument unless s, t >= 1 and both divide N.
  static CodeParams make(int N, int s, int t);
};

/// Per-job cost figures of a code choice.
struct CodeProfile {
  double K = 0;             // critical tasks
  double I_in = 0;          // master -> workers, symbols per job
  double I_out = 0;         // workers -> fusion, symbols per job
  double I_out_purged = 0;  // output volume when redundant results are purged
  double C_ops = 0;         // operations per job, redundancy included
  double T_enc_mean = 0;
  double T_dec_mean = 0;
};

CodeProfile derive_profile(const CodeParams& params, double omega, double mu_enc, double mu_dec);

/// Same formulas with a real-valued t, used by the all-integer s sweep where
/// t = m / s need not be integral.
CodeProfile derive_profile_relaxed(double N, double s, double t, double omega, double mu_enc,
                                   double mu_dec);

template <class T>
struct TaskPayload {
  T eval_point;
  Matrix<T> a_eval;  // (N/t) x (N/s)
  Matrix<T> b_eval;  // (N/s) x (N/t)
};

template <class T>
struct TaskResult {
  T eval_point;
  Matrix<T> value;  // (N/t) x (N/t)
};

namespace detail {

inline void check_square(Eigen::Index rows, Eigen::Index cols, int N, const char* name) {
  if (rows != N || cols != N) {
    throw std::invalid_argument(std::string("polydot: ") + name + " must be " +
                                std::to_string(N) + "x" + std::to_string(N));
  }
}

}  // namespace detail

/// Evaluates PA and PB at a single point.
template <class T>
TaskPayload<T> encode_at(const Matrix<T>& A, const Matrix<T>& B, const CodeParams& params,
                         const T& x) {
  detail::check_square(A.rows(), A.cols(), params.N, "A");
  detail::check_square(B.rows(), B.cols(), params.N, "B");
  const int s = params.s;
  const int t = params.t;
  const int br = params.a_rows();
  const int bc = params.a_cols();

  // powers[e] = x^e up to the largest exponent used by PB
  const int max_exp = t * (2 * s - 1) * (t - 1) + t * (s - 1);
  std::vector<T> powers(static_cast<std::size_t>(max_exp) + 1);
  powers[0] = T(1);
  for (int e = 1; e <= max_exp; ++e) powers[e] = powers[e - 1] * x;

  TaskPayload<T> out{x, Matrix<T>::Zero(br, bc), Matrix<T>::Zero(bc, br)};
  for (int i = 0; i < t; ++i) {
    for (int j = 0; j < s; ++j) {
      out.a_eval += A.block(i * br, j * bc, br, bc) * powers[t * j + i];
    }
  }
  for (int k = 0; k < s; ++k) {
    for (int l = 0; l < t; ++l) {
      out.b_eval += B.block(k * bc, l * br, bc, br) * powers[t * (2 * s - 1) * l + t * (s - 1 - k)];
    }
  }
  return out;
}

/// One payload per task, evaluated at x_r = r + 1.
template <class T>
std::vector<TaskPayload<T>> encode_job(const Matrix<T>& A, const Matrix<T>& B,
                                       const CodeParams& params, int num_tasks) {
  if (num_tasks < params.critical_tasks()) {
    throw std::invalid_argument("polydot: num_tasks " + std::to_string(num_tasks) +
                                " below recovery threshold " +
                                std::to_string(params.critical_tasks()));
  }
  std::vector<TaskPayload<T>> payloads;
  payloads.reserve(static_cast<std::size_t>(num_tasks));
  for (int r = 0; r < num_tasks; ++r) payloads.push_back(encode_at(A, B, params, T(r + 1)));
  return payloads;
}

template <class T>
TaskResult<T> compute_task(const TaskPayload<T>& payload) {
  if (payload.a_eval.cols() != payload.b_eval.rows()) {
    throw std::invalid_argument("polydot: payload blocks are not conformable");
  }
  return {payload.eval_point, payload.a_eval * payload.b_eval};
}

/// Lagrange basis in monomial form: weights[k][r] is the coefficient of x^k in
/// the r-th basis polynomial, computed only for the requested exponents.
template <class T>
std::vector<std::vector<T>> lagrange_weights(std::span<const T> points,
                                             std::span<const int> exponents) {
  const std::size_t n = points.size();
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      if (points[a] == points[b]) throw DecodeError("polydot: duplicate evaluation point");
    }
  }
  // master(x) = prod (x - x_q), coefficients low to high
  std::vector<T> master(n + 1, T(0));
  master[0] = T(1);
  for (std::size_t q = 0; q < n; ++q) {
    for (std::size_t k = q + 1; k > 0; --k) master[k] = master[k - 1] - points[q] * master[k];
    master[0] = -points[q] * master[0];
  }

  std::vector<std::vector<T>> weights(exponents.size(), std::vector<T>(n));
  std::vector<T> quotient(n);
  for (std::size_t r = 0; r < n; ++r) {
    // master(x) / (x - x_r) by synthetic division
    quotient[n - 1] = master[n];
    for (std::size_t k = n - 1; k > 0; --k) quotient[k - 1] = master[k] + points[r] * quotient[k];
    T denom(1);
    for (std::size_t q = 0; q < n; ++q) {
      if (q != r) denom *= points[r] - points[q];
    }
    for (std::size_t e = 0; e < exponents.size(); ++e) {
      weights[e][r] = quotient[static_cast<std::size_t>(exponents[e])] / denom;
    }
  }
  return weights;
}

/// Monomial coefficients of the unique degree < n polynomial through the
/// given matrix-valued samples.
template <class T>
std::vector<Matrix<T>> interpolate_coefficients(std::span<const TaskResult<T>> samples) {
  if (samples.empty()) return {};
  std::vector<T> points;
  points.reserve(samples.size());
  for (const auto& s : samples) points.push_back(s.eval_point);
  std::vector<int> exponents(samples.size());
  for (std::size_t k = 0; k < exponents.size(); ++k) exponents[k] = static_cast<int>(k);

  const auto weights = lagrange_weights<T>(points, exponents);
  std::vector<Matrix<T>> coeffs;
  coeffs.reserve(samples.size());
  const auto rows = samples.front().value.rows();
  const auto cols = samples.front().value.cols();
  for (const auto& row : weights) {
    Matrix<T> c = Matrix<T>::Zero(rows, cols);
    for (std::size_t r = 0; r < samples.size(); ++r) c += samples[r].value * row[r];
    coeffs.push_back(std::move(c));
  }
  return coeffs;
}

namespace detail {
/// Integer-only decode used when every point and result entry is integral:
/// one shared denominator instead of a gcd per rational operation. Empty
/// when some input is not integral.
std::optional<Matrix<Rational>> decode_integral(std::span<const TaskResult<Rational>> used,
                                                const CodeParams& params,
                                                std::span<const int> exponents);
}  // namespace detail

/// Reassembles A * B from the first K results. Only the t^2 coefficients that
/// carry output blocks are interpolated.
template <class T>
Matrix<T> decode_job(std::span<const TaskResult<T>> results, const CodeParams& params) {
  const int K = params.critical_tasks();
  if (static_cast<int>(results.size()) < K) {
    throw DecodeError("polydot: need " + std::to_string(K) + " results, got " +
                      std::to_string(results.size()));
  }
  const auto used = results.first(static_cast<std::size_t>(K));
  const int s = params.s;
  const int t = params.t;
  const int br = params.a_rows();
  for (const auto& r : used) {
    if (r.value.rows() != br || r.value.cols() != br) {
      throw std::invalid_argument("polydot: result block has wrong shape");
    }
  }

  std::vector<T> points;
  points.reserve(used.size());
  for (const auto& r : used) points.push_back(r.eval_point);
  std::vector<int> exponents;
  exponents.reserve(static_cast<std::size_t>(t * t));
  for (int l = 0; l < t; ++l) {
    for (int i = 0; i < t; ++i) exponents.push_back(t * (2 * s - 1) * l + t * (s - 1) + i);
  }
  if constexpr (std::is_same_v<T, Rational>) {
    if (auto C = detail::decode_integral(used, params, exponents)) return *std::move(C);
  }
  const auto weights = lagrange_weights<T>(points, exponents);

  Matrix<T> C = Matrix<T>::Zero(params.N, params.N);
  std::size_t e = 0;
  for (int l = 0; l < t; ++l) {
    for (int i = 0; i < t; ++i, ++e) {
      Matrix<T> block = Matrix<T>::Zero(br, br);
      for (std::size_t r = 0; r < used.size(); ++r) block += used[r].value * weights[e][r];
      C.block(i * br, l * br, br, br) = block;
    }
  }
  return C;
}

template <class T>
Matrix<T> decode_job(const std::vector<TaskResult<T>>& results, const CodeParams& params) {
  return decode_job(std::span<const TaskResult<T>>(results), params);
}

template <class T>
std::vector<Matrix<T>> interpolate_coefficients(const std::vector<TaskResult<T>>& samples) {
  return interpolate_coefficients(std::span<const TaskResult<T>>(samples));
}

}  // namespace sdcc::polydot
