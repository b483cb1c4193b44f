#pragma once

// Seeded simulator of the master -> workers -> fusion pipeline.
//
// Jobs arrive as a Poisson stream. Each job is encoded, cut into
// ceil(K * omega) symbolic tasks and spread over the workers. A worker is a
// tandem of three FIFO stations: input link, compute, output link. The fusion
// node decodes a job once K task results have arrived and releases results
// in arrival order.
//
// Two engines share one model. Without reinforcement, a job-by-job recurrence
// over the tandem stations gives exact timestamps at a fraction of the cost of
// an event queue. Reinforcement needs feedback at every completion and runs
// on a classic event queue. Both draw service times from the same per-worker
// streams in the same order, so they agree on shared inputs.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "sdcc/delay_model.hpp"
#include "sdcc/moment_estimator.hpp"

namespace sdcc::sim {

enum class ServiceLaw { Exponential, Deterministic, Gamma };

enum class Policy {
  Optimal,  // dual-bisection split, re-solved periodically from feedback estimates
  Uniform,  // 1/P to every worker
  Ideal,    // non-causal central queue, work handed out as workers free up
  Static,   // caller-supplied split, never re-solved
};

enum class Engine { Auto, Recurrence, EventQueue };

/// From `start` on, task times on the worker are multiplied by `factor`.
struct SlowdownPhase {
  double start = 0;
  double factor = 1;
};

struct SimWorker {
  double task_rate = 1;  // 1 / mean task time
  std::optional<double> comm_rate;
  std::vector<SlowdownPhase> slowdown;  // sorted by start
};

struct Scenario {
  std::vector<SimWorker> workers;
  double lambda = 1e-3;
  int K = 1;
  double omega = 1;
  double I_in = 0;  // symbols per job, split evenly over the job's tasks
  double I_out = 0;
  double T_enc = 0;
  double T_dec = 0;
  bool include_codec = true;

  ServiceLaw law = ServiceLaw::Exponential;
  double gamma_shape = 2;

  Policy policy = Policy::Optimal;
  std::vector<double> phi;  // Static split, or the Optimal starting split when non-empty
  double phi_lower = 1e-3;
  int reoptimize_every = 20;

  bool purge = false;
  bool reinforce = false;
  double threshold = 0;
  double alpha = 0.01;
  double beta = 0.01;
  int estimator_block = 1;  // feedback samples folded per estimator update
  BlockMode block_mode = BlockMode::Sequential;

  std::size_t jobs = 200;
  double horizon_factor = 50;            // cap = horizon_factor * jobs / lambda
  std::vector<double> arrival_times;     // overrides the Poisson stream when non-empty

  bool record_tasks = false;
  bool track_queues = false;
  Engine engine = Engine::Auto;

  int tasks_per_job() const;
  double horizon() const;
};

enum class TaskStatus : std::uint8_t { Done, Purged, Pending };

struct TaskTrace {
  std::uint32_t job = 0;
  std::uint32_t worker = 0;
  double enqueue = 0;  // dispatch or reinforcement time
  double start = 0;    // compute start; NaN if never computed
  double finish = 0;   // compute end, or the drop time for purged tasks
  TaskStatus status = TaskStatus::Pending;
  bool reinforcement = false;
};

struct JobTrace {
  std::uint32_t id = 0;
  double arrival = 0;
  double completion = 0;  // NaN when unresolved at the horizon
  double delivery = 0;    // NaN unless every earlier job was delivered
  std::uint32_t tasks_generated = 0;
  std::uint32_t tasks_computed = 0;
};

struct ReinforcementEvent {
  double time = 0;
  std::uint32_t job = 0;
  std::uint32_t worker = 0;
  std::uint32_t tasks = 0;
  double mu_delta = 0;
  double mu_n = 0;
};

struct QueueSample {
  double time = 0;
  std::vector<std::uint32_t> length;  // live tasks per worker before the job is dispatched
};

struct SimMetrics {
  double mean_in_order_delay = 0;
  double mean_completion_latency = 0;
  double computational_load = 0;
  std::vector<double> per_worker_utilization;
  std::vector<std::uint32_t> max_queue_length;
  std::size_t jobs_completed = 0;
  std::size_t jobs_delivered = 0;
  bool truncated = false;
  std::uint64_t tasks_generated = 0;
  std::uint64_t tasks_computed = 0;
  std::uint64_t tasks_purged = 0;
  std::uint64_t reinforcement_tasks = 0;
  double makespan = 0;
};

struct SimResult {
  SimMetrics metrics;
  std::vector<JobTrace> jobs;
  std::vector<TaskTrace> tasks;  // only with record_tasks
  std::vector<QueueSample> queues;  // only with track_queues
  std::vector<ReinforcementEvent> reinforcements;
  std::vector<std::vector<double>> splits;  // split in force after each re-solve
};

SimResult run_simulation(const Scenario& scenario, std::uint64_t seed);

/// Task counts per worker by largest remainder, summing to ceil(K omega).
/// Ties in the remainder go to the lower index.
std::vector<int> allocate_tasks_static(std::span<const double> phi, int total_tasks);

/// ceil(K omega) guarded against float noise such as 7900 * 1.2.
int task_count(int K, double omega);

LoadSplit policy_uniform(std::size_t workers);

/// Mean of delivery - arrival with delivery the running max of completion
/// times. Returns the mean over the fully completed prefix; `complete` is
/// cleared when a job is missing.
double in_order_delay(std::span<const double> arrivals, std::span<const double> completions,
                      bool* complete = nullptr);

/// Declared job moments of a simulated worker under the scenario's law.
WorkerProfile declared_profile(const Scenario& scenario, std::size_t worker);

/// Scaled rates of every worker from declared moments.
std::vector<ScaledRates> declared_rates(const Scenario& scenario);

struct SlopeTest {
  double slope = 0;
  double intercept = 0;
  double p_value = 1;  // two-sided, H0: slope = 0
  std::size_t n = 0;
};

/// Least squares fit y = intercept + slope x with a Student-t test on slope.
SlopeTest regression_slope(std::span<const double> x, std::span<const double> y);

}  // namespace sdcc::sim
