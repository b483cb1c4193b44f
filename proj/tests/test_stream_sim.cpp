#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "sdcc/stream_sim.hpp"

using namespace sdcc;
using namespace sdcc::sim;

namespace {

Scenario three_workers(bool comm) {
  Scenario sc;
  sc.lambda = 0.6;
  sc.K = 6;
  sc.omega = 1.5;
  sc.I_in = 30;
  sc.I_out = 20;
  sc.T_enc = 0.3;
  sc.T_dec = 0.7;
  auto link = [&](double c) { return comm ? std::optional<double>(c) : std::nullopt; };
  sc.workers = {{4.0, link(40), {}}, {2.5, link(25), {}}, {1.5, link(30), {}}};
  sc.jobs = 300;
  sc.reoptimize_every = 7;
  return sc;
}

// Batch-means standard error of a correlated sequence.
double batch_stderr(const std::vector<double>& x, int batches) {
  const std::size_t n = x.size() / batches;
  std::vector<double> means;
  for (int b = 0; b < batches; ++b) {
    means.push_back(std::accumulate(x.begin() + b * n, x.begin() + (b + 1) * n, 0.0) / n);
  }
  const double m = std::accumulate(means.begin(), means.end(), 0.0) / batches;
  double v = 0;
  for (double y : means) v += (y - m) * (y - m);
  return std::sqrt(v / (batches - 1) / batches);
}

}  // namespace

TEST_CASE("static allocation by largest remainder") {
  CHECK(allocate_tasks_static(std::vector<double>{0.5, 0.5}, 10) == std::vector<int>{5, 5});
  const double third = 1.0 / 3;
  CHECK(allocate_tasks_static(std::vector<double>{third, third, third}, 10) ==
        std::vector<int>{4, 3, 3});
  CHECK(allocate_tasks_static(std::vector<double>{0.0, 1.0}, 7) == std::vector<int>{0, 7});
  std::mt19937_64 gen(1);
  std::exponential_distribution<double> ex(1.0);
  for (int k = 0; k < 200; ++k) {
    std::vector<double> phi(1 + k % 9);
    double s = 0;
    for (auto& v : phi) s += (v = ex(gen));
    for (auto& v : phi) v /= s;
    const int total = 1 + static_cast<int>(gen() % 5000);
    const auto counts = allocate_tasks_static(phi, total);
    CHECK(std::accumulate(counts.begin(), counts.end(), 0) == total);
    for (std::size_t p = 0; p < phi.size(); ++p) CHECK(std::abs(counts[p] - phi[p] * total) < 1.0);
  }
}

TEST_CASE("task count guards float noise") {
  CHECK(task_count(7900, 1.2) == 9480);
  CHECK(task_count(7900, 1.7) == 13430);
  CHECK(task_count(10, 1.5) == 15);
  CHECK(task_count(3, 1.5) == 5);
  CHECK(task_count(1, 1.0) == 1);
}

TEST_CASE("uniform policy") {
  CHECK(policy_uniform(4).phi == std::vector<double>(4, 0.25));
  CHECK(policy_uniform(1).phi == std::vector<double>{1.0});
}

TEST_CASE("in-order delay") {
  bool complete = false;
  const std::vector<double> arr{0, 1, 2};
  CHECK(in_order_delay(arr, std::vector<double>{5, 3, 9}, &complete) == doctest::Approx(16.0 / 3));
  CHECK(complete);
  CHECK(in_order_delay(arr, std::vector<double>{1, 2, 3}) == doctest::Approx(1.0));
  const double nan = std::nan("");
  CHECK(in_order_delay(arr, std::vector<double>{5, nan, 9}, &complete) == doctest::Approx(5.0));
  CHECK_FALSE(complete);
}

TEST_CASE("regression slope test") {
  std::vector<double> x, y, flat;
  std::mt19937_64 gen(3);
  std::normal_distribution<double> noise(0, 1);
  for (int i = 0; i < 200; ++i) {
    x.push_back(i);
    y.push_back(2 + 0.5 * i + noise(gen));
    flat.push_back(3 + noise(gen));
  }
  const auto r = regression_slope(x, y);
  CHECK(r.slope == doctest::Approx(0.5).epsilon(0.02));
  CHECK(r.p_value < 1e-10);
  CHECK(regression_slope(x, flat).p_value > 1e-3);
}

TEST_CASE("scenario validation") {
  Scenario sc = three_workers(false);
  sc.policy = Policy::Static;
  sc.phi = {0.5, 0.5};
  CHECK_THROWS_AS(run_simulation(sc, 1), std::invalid_argument);
  sc = three_workers(false);
  sc.omega = 0.9;
  CHECK_THROWS_AS(run_simulation(sc, 1), std::invalid_argument);
  sc = three_workers(false);
  sc.reinforce = true;
  sc.engine = Engine::Recurrence;
  CHECK_THROWS_AS(run_simulation(sc, 1), std::invalid_argument);
}

TEST_CASE("both engines agree on shared inputs") {
  for (int pol = 0; pol < 4; ++pol)
    for (int purge = 0; purge < 2; ++purge)
      for (int comm = 0; comm < 2; ++comm)
        for (std::uint64_t seed = 1; seed < 4; ++seed) {
          Scenario sc = three_workers(comm);
          sc.policy = static_cast<Policy>(pol);
          if (sc.policy == Policy::Static) sc.phi = {0.5, 0.3, 0.2};
          sc.purge = purge;
          sc.record_tasks = true;
          sc.engine = Engine::Recurrence;
          const auto a = run_simulation(sc, seed);
          sc.engine = Engine::EventQueue;
          const auto b = run_simulation(sc, seed);
          CAPTURE(pol);
          CAPTURE(purge);
          CAPTURE(comm);
          CHECK(a.metrics.mean_in_order_delay == doctest::Approx(b.metrics.mean_in_order_delay).epsilon(1e-12));
          CHECK(a.metrics.tasks_computed == b.metrics.tasks_computed);
          CHECK(a.metrics.tasks_purged == b.metrics.tasks_purged);
        }
}

TEST_CASE("runs are deterministic in the seed") {
  Scenario sc = three_workers(true);
  sc.purge = true;
  sc.record_tasks = true;
  const auto a = run_simulation(sc, 42);
  const auto b = run_simulation(sc, 42);
  const auto c = run_simulation(sc, 43);
  REQUIRE(a.jobs.size() == b.jobs.size());
  for (std::size_t j = 0; j < a.jobs.size(); ++j) {
    CHECK(a.jobs[j].completion == b.jobs[j].completion);
    CHECK(a.jobs[j].delivery == b.jobs[j].delivery);
  }
  CHECK(a.tasks.size() == b.tasks.size());
  CHECK(a.metrics.mean_in_order_delay != c.metrics.mean_in_order_delay);
}

TEST_CASE("task conservation and job invariants") {
  for (bool purge : {false, true})
    for (bool reinforce : {false, true}) {
      Scenario sc = three_workers(true);
      sc.purge = purge;
      sc.reinforce = reinforce;
      sc.record_tasks = true;
      const auto r = run_simulation(sc, 7);
      std::uint64_t done = 0, purged = 0, pending = 0;
      for (const auto& t : r.tasks) {
        done += t.status == TaskStatus::Done;
        purged += t.status == TaskStatus::Purged;
        pending += t.status == TaskStatus::Pending;
      }
      CHECK(done + purged + pending == r.metrics.tasks_generated);
      CHECK(r.tasks.size() == r.metrics.tasks_generated);
      CHECK(done == r.metrics.tasks_computed);
      CHECK(purged == r.metrics.tasks_purged);
      if (!purge) CHECK(purged == 0);

      double prev_delivery = 0;
      std::uint64_t gen_sum = 0;
      for (const auto& j : r.jobs) {
        gen_sum += j.tasks_generated;
        CHECK(j.tasks_generated >= static_cast<std::uint32_t>(task_count(sc.K, sc.omega)));
        CHECK(j.completion >= j.arrival);
        CHECK(j.delivery >= j.completion);
        CHECK(j.delivery >= prev_delivery);
        prev_delivery = j.delivery;
      }
      CHECK(gen_sum == r.metrics.tasks_generated);
    }
}

TEST_CASE("purging keeps the load between 1 and omega") {
  Scenario sc = three_workers(true);
  sc.lambda = 0.3;
  sc.omega = 1.5;
  sc.K = 10;
  sc.purge = false;
  const auto off = run_simulation(sc, 5);
  CHECK(off.metrics.computational_load == doctest::Approx(1.5));
  sc.purge = true;
  const auto on = run_simulation(sc, 5);
  CHECK(on.metrics.computational_load >= 1.0);
  CHECK(on.metrics.computational_load <= 1.5);
  CHECK(on.metrics.tasks_purged > 0);
}

TEST_CASE("purging has no effect at omega = 1") {
  Scenario sc = three_workers(true);
  sc.omega = 1.0;
  const auto off = run_simulation(sc, 11);
  sc.purge = true;
  const auto on = run_simulation(sc, 11);
  CHECK(on.metrics.mean_in_order_delay == off.metrics.mean_in_order_delay);
  CHECK(on.metrics.tasks_purged == 0);
  CHECK(on.metrics.computational_load == doctest::Approx(1.0));
}

TEST_CASE("empty-system reduction") {
  Scenario sc;
  sc.workers = {{2.0, std::nullopt, {}}};
  sc.lambda = 1e-4;
  sc.K = 1;
  sc.T_enc = 0.25;
  sc.T_dec = 0.5;
  sc.policy = Policy::Static;
  sc.phi = {1.0};
  sc.jobs = 20000;
  const auto r = run_simulation(sc, 3);
  CHECK(r.metrics.mean_in_order_delay == doctest::Approx(0.25 + 0.5 + 0.5).epsilon(0.03));
}

TEST_CASE("single-worker queue matches the Pollaczek-Khinchin mean") {
  for (auto law : {ServiceLaw::Exponential, ServiceLaw::Deterministic, ServiceLaw::Gamma}) {
    Scenario sc;
    sc.workers = {{1.0, std::nullopt, {}}};
    sc.lambda = 0.6;
    sc.K = 1;
    sc.law = law;
    sc.gamma_shape = 3;
    sc.policy = Policy::Static;
    sc.phi = {1.0};
    sc.jobs = 100000;
    const auto r = run_simulation(sc, 19);
    std::vector<double> lat;
    for (const auto& j : r.jobs) lat.push_back(j.completion - j.arrival);
    const double mean = std::accumulate(lat.begin(), lat.end(), 0.0) / lat.size();
    const double se = batch_stderr(lat, 50);
    const double analytic = per_worker_response_time(declared_profile(sc, 0), 1.0, sc.lambda);
    CAPTURE(static_cast<int>(law));
    CHECK(std::abs(mean - analytic) <= 3 * se);
  }
}

TEST_CASE("declared profiles follow the service law") {
  Scenario sc;
  sc.workers = {{4.0, std::nullopt, {}}};
  sc.K = 5;
  sc.omega = 2.0;  // 10 tasks of mean 0.25
  sc.law = ServiceLaw::Exponential;
  auto w = declared_profile(sc, 0);
  CHECK(w.mean_job_time == doctest::Approx(2.5));
  CHECK(w.second_moment_job_time == doctest::Approx(2.5 * 2.5 * 1.1));
  sc.law = ServiceLaw::Deterministic;
  CHECK(declared_profile(sc, 0).second_moment_job_time == doctest::Approx(6.25));
}

TEST_CASE("ideal dispatch beats the optimal split on paired seeds") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Scenario sc = three_workers(false);
    sc.lambda = 0.4;
    sc.jobs = 2000;
    sc.policy = Policy::Ideal;
    const auto ideal = run_simulation(sc, seed);
    sc.policy = Policy::Optimal;
    const auto opt = run_simulation(sc, seed);
    CHECK(ideal.metrics.mean_in_order_delay <= opt.metrics.mean_in_order_delay);
  }
}

TEST_CASE("two identical workers share ideal work evenly") {
  Scenario sc;
  sc.workers = {{1.0, std::nullopt, {}}, {1.0, std::nullopt, {}}};
  sc.lambda = 0.1;
  sc.K = 8;
  sc.policy = Policy::Ideal;
  sc.jobs = 20000;
  const auto r = run_simulation(sc, 2);
  const auto& u = r.metrics.per_worker_utilization;
  CHECK(u[0] == doctest::Approx(u[1]).epsilon(0.03));
  CHECK(u[0] == doctest::Approx(0.4).epsilon(0.05));
}

TEST_CASE("stability dichotomy on queue growth") {
  Scenario sc;
  sc.workers = {{4.0, std::nullopt, {}}, {0.5, std::nullopt, {}}};
  sc.K = 4;
  sc.lambda = 0.4;              // r_comp = (2.5, 0.3125)
  sc.policy = Policy::Uniform;  // 0.5 > 0.3125 on the slow worker
  sc.track_queues = true;
  sc.jobs = 4000;
  const auto r = run_simulation(sc, 9);
  std::vector<double> t, q0, q1;
  for (std::size_t i = r.queues.size() / 2; i < r.queues.size(); ++i) {
    t.push_back(r.queues[i].time);
    q0.push_back(r.queues[i].length[0]);
    q1.push_back(r.queues[i].length[1]);
  }
  const auto grow = regression_slope(t, q1);
  CHECK(grow.slope > 0);
  CHECK(grow.p_value < 0.01);
  CHECK(*std::max_element(q0.begin(), q0.end()) < 60);

  sc.policy = Policy::Optimal;
  const auto s = run_simulation(sc, 9);
  CHECK_FALSE(s.metrics.truncated);
  CHECK(s.metrics.jobs_delivered == sc.jobs);
}

TEST_CASE("no reinforcement when every worker runs on schedule") {
  Scenario sc = three_workers(false);
  sc.law = ServiceLaw::Deterministic;
  sc.reinforce = true;
  sc.policy = Policy::Static;
  sc.phi = {0.5, 0.3, 0.2};
  sc.alpha = 0.5;
  sc.beta = 0.5;
  sc.lambda = 0.05;
  const auto r = run_simulation(sc, 1);
  CHECK(r.reinforcements.empty());
  CHECK(r.metrics.reinforcement_tasks == 0);
}

TEST_CASE("reinforcement targets a straggling job and respects worker order") {
  Scenario sc;
  sc.workers = {{1.0, std::nullopt, {{0.5, 2.0}}}, {0.25, std::nullopt, {}}, {0.125, std::nullopt, {}}};
  sc.K = 10;
  sc.omega = 1.5;
  sc.law = ServiceLaw::Deterministic;
  sc.policy = Policy::Static;
  sc.phi = {0.8, 0.2, 0.0};
  sc.alpha = sc.beta = 0.5;
  sc.threshold = 0;
  sc.jobs = 1;
  sc.arrival_times = {0.0};
  sc.record_tasks = true;
  sc.engine = Engine::EventQueue;
  const auto off = run_simulation(sc, 1);
  sc.reinforce = true;
  const auto on = run_simulation(sc, 1);

  CHECK(off.jobs[0].completion == doctest::Approx(13.0));
  REQUIRE_FALSE(on.reinforcements.empty());
  const auto& ev = on.reinforcements.front();
  CHECK(ev.worker == 2);
  CHECK(ev.time == doctest::Approx(3.0));
  CHECK(ev.tasks == 1);
  CHECK(ev.mu_delta > 0);
  CHECK(on.jobs[0].completion == doctest::Approx(12.0));
  CHECK(on.jobs[0].completion < off.jobs[0].completion);
}

TEST_CASE("reinforcement never lands on a worker holding earlier work") {
  Scenario sc = three_workers(true);
  sc.workers[0].slowdown = {{40.0, 3.0}};
  sc.reinforce = true;
  sc.alpha = sc.beta = 0.3;
  sc.lambda = 0.4;
  sc.record_tasks = true;
  const auto r = run_simulation(sc, 4);
  REQUIRE_FALSE(r.reinforcements.empty());
  for (const auto& ev : r.reinforcements) {
    for (const auto& t : r.tasks) {
      if (t.worker != ev.worker || t.job > ev.job || t.reinforcement) continue;
      const bool held = t.enqueue <= ev.time && t.finish > ev.time;
      CHECK_FALSE(held);
    }
  }
  // feedback rate is cumulative per job
  std::map<std::uint32_t, double> last;
  for (const auto& ev : r.reinforcements) {
    CHECK(ev.mu_n > 0);
    last[ev.job] = ev.mu_n;
  }
}
