#include <doctest.h>

#include <cmath>
#include <random>

#include "sdcc/delay_model.hpp"
#include "support/oracles.hpp"

using namespace sdcc;

namespace {

ScaledRates mm1(double r, std::optional<double> rc = std::nullopt) {
  return ScaledRates{r, rc, 1.0 / r};
}

}  // namespace

TEST_CASE("WorkerProfile validation") {
  CHECK_THROWS_AS((WorkerProfile{0.0, 1.0, std::nullopt}.validate()), std::invalid_argument);
  CHECK_THROWS_AS((WorkerProfile{2.0, 3.0, std::nullopt}.validate()), std::invalid_argument);
  CHECK_THROWS_AS((WorkerProfile{1.0, 1.0, -1.0}.validate()), std::invalid_argument);
  CHECK_NOTHROW((WorkerProfile{2.0, 4.0, 0.0}.validate()));
}

TEST_CASE("scaling formulas") {
  const WorkerProfile w{4.0, 20.0, 30.0};
  const auto s = scale(w, 0.1, 150.0);
  CHECK(s.r_comp == doctest::Approx(2.5));
  REQUIRE(s.r_comm.has_value());
  CHECK(*s.r_comm == doctest::Approx(2.0));
  CHECK(s.a == doctest::Approx(0.25));
  CHECK(s.xi() == doctest::Approx(0.4 + 0.5 - 0.25));
  CHECK_FALSE(scale(w, 0.1).r_comm.has_value());
}

TEST_CASE("per-worker response time") {
  const WorkerProfile w{0.5, 0.5, std::nullopt};  // exponential service, mean 0.5
  CHECK(per_worker_response_time(w, 0.0, 1.0) == doctest::Approx(0.5));
  CHECK(per_worker_response_time(w, 0.25, 1.0) == doctest::Approx(1.0 / (2.0 - 0.25)));
  CHECK(per_worker_response_time(w, 1.999, 1.0) > 100);
  CHECK_THROWS_AS(per_worker_response_time(w, 2.0, 1.0), UnstableQueueError);
}

TEST_CASE("avg_execution_time equals a literal re-summation") {
  polydot::CodeProfile code;
  code.I_in = 40;
  code.I_out = 10;
  code.T_enc_mean = 0.7;
  code.T_dec_mean = 1.3;
  const double lambda = 0.2;
  const std::vector<WorkerProfile> ws{{1.0, 2.0, 100.0}, {2.0, 5.0, 50.0}, {0.5, 0.3, std::nullopt}};
  const LoadSplit split{{0.3, 0.2, 0.5}, std::nullopt};
  const auto d = avg_execution_time(ws, split, lambda, code);

  double comp = 0, in = 0, out = 0;
  for (std::size_t p = 0; p < ws.size(); ++p) {
    const double r = 1.0 / (lambda * ws[p].mean_job_time);
    const double a = 0.5 * lambda * ws[p].second_moment_job_time / ws[p].mean_job_time;
    const double phi = split.phi[p];
    comp += (a * phi * phi / (r - phi) + phi / r) / lambda;
    if (ws[p].comm_rate) {
      in += phi * code.I_in / *ws[p].comm_rate;
      out += phi * code.I_out / *ws[p].comm_rate;
    }
  }
  CHECK(d.compute == doctest::Approx(comp / 3));
  CHECK(d.comm_in == doctest::Approx(in / 3));
  CHECK(d.comm_out == doctest::Approx(out / 3));
  CHECK(d.total() == doctest::Approx((comp + in + out) / 3 + 2.0));

  const std::vector<WorkerProfile> twins{{1.0, 2.0, 10.0}, {1.0, 2.0, 10.0}};
  const LoadSplit half{{0.5, 0.5}, std::nullopt};
  const auto d2 = avg_execution_time(twins, half, 0.5, code);
  CHECK(d2.total() == doctest::Approx(avg_execution_time(
                                          std::vector<WorkerProfile>{twins[1], twins[0]}, half, 0.5, code)
                                          .total()));
}

TEST_CASE("worker validity") {
  polydot::CodeProfile code;
  code.I_in = 100;
  code.I_out = 50;
  code.T_enc_mean = 1;
  code.T_dec_mean = 2;
  CHECK(is_valid_worker({10.0, 200.0, 1000.0}, code));
  const auto v = check_validity({1.0, 2.0, 1000.0}, code);  // 1/E[T] = 1 > 1/T_dec = 0.5
  CHECK_FALSE(v.decode);
  CHECK(v.encode);
  CHECK_FALSE(is_valid_worker({10.0, 200.0, 5.0}, code));
  CHECK(is_valid_worker({10.0, 200.0, std::nullopt}, code));
}

TEST_CASE("select_workers takes the shortest valid fastest prefix") {
  polydot::CodeProfile code;
  code.T_enc_mean = 1e-9;
  code.T_dec_mean = 1e-9;
  const double lambda = 1.0;
  std::vector<WorkerProfile> pool(10, WorkerProfile{2.0, 8.0, std::nullopt});  // r_comp 0.5 each
  auto sel = select_workers(pool, lambda, 2.0, 1.0, code);
  CHECK(sel.size() == 6);

  pool[7].mean_job_time = 0.5;  // fastest, r_comp 2
  pool[7].second_moment_job_time = 0.5;
  sel = select_workers(pool, lambda, 2.0, 1.0, code);
  REQUIRE(sel.size() == 3);
  CHECK(sel[0] == 7);
  CHECK(sel[1] == 0);  // ties by index

  // minimality: dropping the last worker falls short
  double total = 0;
  for (std::size_t i = 0; i + 1 < sel.size(); ++i) total += 1.0 / (lambda * pool[sel[i]].mean_job_time);
  CHECK(total < 3.0);

  CHECK_THROWS_AS(select_workers(pool, lambda, 0.2, 1.5, code), std::invalid_argument);
  code.T_dec_mean = 100;
  CHECK_THROWS_AS(select_workers(pool, lambda, 2.0, 1.0, code), InfeasibleError);
}

TEST_CASE("phi_of_eta branches and limits") {
  const ScaledRates w{2.0, 4.0, 0.3};
  const double xi = w.xi();
  CHECK(phi_of_eta(w, xi - 1, 0.01) == 0.01);
  CHECK(phi_of_eta(w, xi, 0.01) == 0.01);
  CHECK(phi_of_eta(w, 1e12, 0.0) == doctest::Approx(2.0).epsilon(1e-5));
  double prev = 0;
  for (double eta = xi; eta < xi + 50; eta += 0.37) {
    const double v = phi_of_eta(w, eta, 0.0);
    CHECK(v >= prev);
    prev = v;
  }
  // M/M/1 reduction
  const ScaledRates m = mm1(1.5, 3.0);
  const double eta = 5;
  CHECK(phi_of_eta(m, eta, 0.0) ==
        doctest::Approx(1.5 * (1 - std::sqrt((1 / 1.5) / (eta - 1 / 3.0)))));
}

TEST_CASE("optimal_split basics") {
  const std::vector<ScaledRates> twins{mm1(1.0), mm1(1.0)};
  const std::vector<double> zero(2, 0.0);
  const auto s = optimal_split(twins, zero);
  CHECK(s.phi[0] == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(s.phi[1] == doctest::Approx(0.5).epsilon(1e-9));
  REQUIRE(s.eta.has_value());

  const std::vector<ScaledRates> weak{mm1(0.4), mm1(0.5)};
  CHECK_THROWS_AS(optimal_split(weak, zero), InfeasibleError);
  CHECK_THROWS_AS(optimal_split(twins, std::vector<double>{0.6, 0.6}), InfeasibleError);
  CHECK_THROWS_AS(optimal_split(twins, std::vector<double>{1.0, 0.0}), InfeasibleError);
}

TEST_CASE("optimal_split dominates random splits and matches the gradient oracle") {
  std::mt19937_64 gen(2024);
  for (int inst = 0; inst < 25; ++inst) {
    const std::size_t P = 2 + inst % 7;
    const auto w = oracle::random_instance(gen, P, true, false);
    const std::vector<double> lo(P, 1e-3);
    const auto split = optimal_split(w, lo);
    CHECK(split.sum() == doctest::Approx(1.0).epsilon(1e-9));
    for (std::size_t p = 0; p < P; ++p) {
      CHECK(split.phi[p] >= lo[p]);
      CHECK(split.phi[p] <= w[p].r_comp - 1e-12);
    }
    CHECK(kkt_residual(split, w, lo) <= 1e-8);

    const double f = split_objective(w, split.phi);
    CHECK(f == doctest::Approx(oracle::objective(w, split.phi)).epsilon(1e-12));
    const auto pg = oracle::projected_gradient(w, lo);
    CHECK(std::abs(f - oracle::objective(w, pg)) <= 1e-6 * std::abs(f));

    oracle::SplitSampler sampler(w, lo, split.phi, 77 + inst);
    for (int k = 0; k < 2000; ++k) CHECK(f <= oracle::objective(w, sampler.next()) + 1e-12);
  }
}

TEST_CASE("closed-form waterfilling agrees with the binary search") {
  std::mt19937_64 gen(8);
  SUBCASE("spec instance") {
    std::vector<ScaledRates> w;
    for (double r : {0.9, 0.8, 0.5, 0.3, 0.2}) w.push_back(mm1(r));
    const std::vector<double> lo(5, 0.01);
    const auto a = optimal_split_mm1_nocomm(w, 0.01);
    const auto b = optimal_split(w, lo);
    for (std::size_t p = 0; p < 5; ++p) CHECK(std::abs(a.phi[p] - b.phi[p]) <= 1e-8);
  }
  SUBCASE("single worker") {
    const std::vector<ScaledRates> w{mm1(2.0)};
    const auto a = optimal_split_mm1_nocomm(w, 0.0);
    CHECK(a.phi[0] == doctest::Approx(1.0));
    REQUIRE(a.eta.has_value());
    CHECK(*a.eta == doctest::Approx(std::pow(std::sqrt(2.0) / (2.0 - 1.0), 2)));
  }
  SUBCASE("unsorted input is rejected") {
    const std::vector<ScaledRates> w{mm1(0.5), mm1(0.9)};
    CHECK_THROWS_AS(optimal_split_mm1_nocomm(w, 0.0), std::invalid_argument);
  }
  SUBCASE("random instances") {
    for (int inst = 0; inst < 30; ++inst) {
      auto w = oracle::random_instance(gen, 2 + inst % 7, false, true);
      std::sort(w.begin(), w.end(), [](auto& x, auto& y) { return x.r_comp > y.r_comp; });
      const std::vector<double> lo(w.size(), 1e-3);
      const auto a = optimal_split_mm1_nocomm(w, 1e-3);
      const auto b = optimal_split(w, lo);
      const auto c = optimal_split_nocomm(w, lo);
      for (std::size_t p = 0; p < w.size(); ++p) {
        CHECK(std::abs(a.phi[p] - b.phi[p]) <= 1e-8);
        CHECK(std::abs(c.phi[p] - b.phi[p]) <= 1e-8);
      }
    }
  }
}

TEST_CASE("nocomm variant is the limit of huge links") {
  std::mt19937_64 gen(4);
  for (int inst = 0; inst < 10; ++inst) {
    auto w = oracle::random_instance(gen, 4, true, false);
    const std::vector<double> lo(4, 1e-3);
    const auto a = optimal_split_nocomm(w, lo);
    for (auto& x : w) x.r_comm = 1e13;
    const auto b = optimal_split(w, lo);
    for (std::size_t p = 0; p < 4; ++p) CHECK(std::abs(a.phi[p] - b.phi[p]) <= 1e-8);
  }
}

TEST_CASE("KKT residual certifies non-optimal splits") {
  const std::vector<ScaledRates> w{{2.0, 5.0, 0.4}, {0.8, 1.0, 0.9}, {0.5, std::nullopt, 1.5}};
  const std::vector<double> lo(3, 1e-3);
  const LoadSplit uniform{{1.0 / 3, 1.0 / 3, 1.0 / 3}, std::nullopt};
  CHECK(kkt_residual(uniform, w, lo) > 1e-3);
  const auto opt = optimal_split(w, lo);
  CHECK(kkt_residual(opt, w, lo) <= 1e-8);
  LoadSplit fitted = opt;
  fitted.eta.reset();
  CHECK(kkt_residual(fitted, w, lo) <= 1e-8);

  // interior optimum: every feasible pairwise shift raises the objective
  const std::vector<ScaledRates> v{{1.0, 5.0, 0.6}, {0.9, 3.0, 0.7}, {0.8, std::nullopt, 1.0}};
  const auto inner = optimal_split(v, lo);
  for (double p : inner.phi) REQUIRE(p > 0.1);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      if (i == j) continue;
      auto bumped = inner.phi;
      bumped[i] += 1e-3;
      bumped[j] -= 1e-3;
      CHECK(split_objective(v, bumped) > split_objective(v, inner.phi));
    }
}

TEST_CASE("objective is strictly convex along random chords") {
  std::mt19937_64 gen(31);
  std::uniform_real_distribution<double> u(0.01, 0.99);
  for (int inst = 0; inst < 20; ++inst) {
    const auto w = oracle::random_instance(gen, 3 + inst % 5, true, false);
    const std::vector<double> lo(w.size(), 1e-3);
    oracle::SplitSampler sampler(w, lo, optimal_split(w, lo).phi, inst);
    for (int k = 0; k < 50; ++k) {
      const auto x = sampler.next();
      const auto y = sampler.next();
      const double th = u(gen);
      std::vector<double> z(x.size());
      for (std::size_t p = 0; p < x.size(); ++p) z[p] = th * x[p] + (1 - th) * y[p];
      const double lhs = split_objective(w, z);
      const double rhs = th * split_objective(w, x) + (1 - th) * split_objective(w, y);
      CHECK(lhs < rhs);
    }
  }
}

TEST_CASE("dual sum is monotone in eta") {
  std::mt19937_64 gen(5);
  const auto w = oracle::random_instance(gen, 6, true, false);
  double prev = -1;
  for (double eta = -2; eta < 60; eta += 0.25) {
    double s = 0;
    for (const auto& x : w) s += phi_of_eta(x, eta, 1e-3);
    CHECK(s >= prev);
    prev = s;
  }
}

TEST_CASE("plan_search picks the cheapest feasible code") {
  PlanRequest req;
  req.lambda = 1e-3;
  req.N = 100;
  req.omega = 1;
  req.theta = 2;
  req.mu_enc = 1e4;
  req.mu_dec = 1e5;
  std::mt19937_64 gen(1);
  std::uniform_real_distribution<double> op(0, 1000), cr(0, 200);
  for (int i = 0; i < 150; ++i) req.pool.push_back({op(gen), cr(gen)});
  req.codes = polydot::enumerate_codes(50);

  const Plan plan = plan_search(req);
  CHECK(50 % plan.code.s == 0);
  CHECK(plan.chosen.feasible);
  CHECK(plan.chosen.split.sum() == doctest::Approx(1.0).epsilon(1e-9));
  double total = 0;
  for (const auto& wp : plan.chosen.selected_profiles) total += 1.0 / (req.lambda * wp.mean_job_time);
  CHECK(total >= 3.0);
  for (const auto& code : req.codes) {
    const auto ev = evaluate_code(req, code.s, code.t);
    if (ev.feasible) CHECK(plan.d_exe() <= ev.delay.total());
  }
  // recomputing the delay from the reported pieces reproduces it
  CHECK(plan.d_exe() == doctest::Approx(avg_execution_time(plan.chosen.selected_profiles,
                                                           plan.chosen.split, req.lambda,
                                                           plan.chosen.profile)
                                            .total()));

  PlanRequest one = req;
  one.codes = {plan.code};
  CHECK(plan_search(one).code == plan.code);

  PlanRequest none = req;
  none.pool.resize(3);
  CHECK_THROWS_AS(plan_search(none), NoPlanError);
}
