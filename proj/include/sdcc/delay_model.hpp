#pragma once

// Queueing delay model and load-split optimisation for a set of heterogeneous
// M/G/1 workers fed by a Poisson job stream of rate lambda.
//
// Rates are "scaled" to job fractions per mean inter-arrival time:
//   r_comp = 1 / (lambda E[T])          computational
//   r_comm = c / ((I_in + I_out) lambda) communication
//   a      = 0.5 lambda E[T^2] / E[T]
// The split objective is sum_p a phi^2/(r_comp - phi) + (1/r_comp + 1/r_comm) phi.

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sdcc/polydot.hpp"

namespace sdcc {

class InfeasibleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnstableQueueError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Job-level service moments of one worker. An empty comm_rate means the
/// link is unlimited and communication terms are dropped.
struct WorkerProfile {
  double mean_job_time = 1.0;
  double second_moment_job_time = 1.0;
  std::optional<double> comm_rate;

  /// Throws std::invalid_argument on E[T] <= 0, E[T^2] < E[T]^2 or c < 0.
  void validate() const;
};

/// Raw capability of a pool member: operations and symbols per time unit.
struct WorkerSpec {
  double op_rate = 1.0;
  std::optional<double> comm_rate;
};

/// Job moments of a worker under a code choice. Task times are exponential
/// with rate K*omega*op_rate/C, so the job time is Gamma with shape K*omega:
/// E[T] = C/op_rate and E[T^2] = (1 + 1/(K omega)) E[T]^2.
WorkerProfile job_profile(const WorkerSpec& spec, const polydot::CodeProfile& code, double omega);

struct ScaledRates {
  double r_comp = 1.0;
  std::optional<double> r_comm;
  double a = 1.0;

  double comm_cost() const { return r_comm ? 1.0 / *r_comm : 0.0; }
  /// 1/r_comp + 1/r_comm - a; the activation offset of the dual.
  double xi() const { return 1.0 / r_comp + comm_cost() - a; }
};

/// io_symbols = I_in + I_out per job.
ScaledRates scale(const WorkerProfile& w, double lambda, double io_symbols);
/// Communication ignored.
ScaledRates scale(const WorkerProfile& w, double lambda);

struct LoadSplit {
  std::vector<double> phi;
  std::optional<double> eta;

  double sum() const;
};

/// Mean M/G/1 response (wait + service) of a worker receiving phi of each job.
/// Throws UnstableQueueError when phi >= r_comp.
double per_worker_response_time(const ScaledRates& w, double phi, double lambda);
double per_worker_response_time(const WorkerProfile& w, double phi, double lambda);

struct ExecutionDelay {
  double encode = 0;
  double comm_in = 0;
  double compute = 0;
  double comm_out = 0;
  double decode = 0;

  double comm() const { return comm_in + comm_out; }
  double total() const { return encode + comm_in + compute + comm_out + decode; }
};

/// Average job execution time with the 1/P parallel normalisation.
ExecutionDelay avg_execution_time(std::span<const WorkerProfile> workers, const LoadSplit& split,
                                  double lambda, const polydot::CodeProfile& code);

/// Split objective; +inf when any phi reaches its r_comp.
double split_objective(std::span<const ScaledRates> rates, std::span<const double> phi);

struct Validity {
  bool encode = false;    // 1/E[T_enc] >= 1/E[T]
  bool inbound = false;   // c/I_in >= 1/E[T]
  bool outbound = false;  // c/I_out >= 1/E[T]
  bool decode = false;    // 1/E[T_dec] >= 1/E[T]

  bool valid() const { return encode && inbound && outbound && decode; }
};

Validity check_validity(const WorkerProfile& w, const polydot::CodeProfile& code);
inline bool is_valid_worker(const WorkerProfile& w, const polydot::CodeProfile& code) {
  return check_validity(w, code).valid();
}

/// Indices (into pool) of the shortest prefix of valid workers, taken in
/// decreasing 1/E[T] order, whose r_comp sum reaches 1 + theta.
std::vector<std::size_t> select_workers(std::span<const WorkerProfile> pool, double lambda,
                                        double theta, double omega,
                                        const polydot::CodeProfile& code);

double phi_of_eta(const ScaledRates& w, double eta, double phi_lower);

struct SolverOptions {
  double tolerance = 1e-9;  // on |sum phi - 1|
  int max_iterations = 200;
  double saturation_margin = 1e-12;
};

LoadSplit optimal_split(std::span<const ScaledRates> rates, std::span<const double> phi_lower,
                        const SolverOptions& opts = {});

/// optimal_split with every r_comm treated as unlimited.
LoadSplit optimal_split_nocomm(std::span<const ScaledRates> rates,
                               std::span<const double> phi_lower, const SolverOptions& opts = {});

/// Closed-form waterfilling for M/M/1 workers (a = 1/r_comp) without
/// communication. rates must be sorted by r_comp, non-increasing.
LoadSplit optimal_split_mm1_nocomm(std::span<const ScaledRates> rates, double phi_lower);

/// Largest violation of the KKT system (stationarity, primal and dual
/// feasibility, complementary slackness). When split.eta is empty the
/// multiplier is fitted to the stationarity values of the free coordinates.
double kkt_residual(const LoadSplit& split, std::span<const ScaledRates> rates,
                    std::span<const double> phi_lower);

struct CodeEvaluation {
  double s = 0;
  double t = 0;
  polydot::CodeProfile profile;
  int encode_ok = 0;
  int inbound_ok = 0;
  int outbound_ok = 0;
  int decode_ok = 0;
  int valid = 0;
  bool feasible = false;
  std::string reason;
  std::vector<std::size_t> selected;
  std::vector<WorkerProfile> selected_profiles;
  double sum_r_comp = 0;
  LoadSplit split;
  ExecutionDelay delay;
};

struct PlanRequest {
  std::vector<WorkerSpec> pool;
  double lambda = 1e-3;
  double omega = 1.0;
  double theta = 2.0;
  std::vector<polydot::SplitPair> codes;
  int N = 100;
  double mu_enc = 1e4;
  double mu_dec = 1e5;
  double phi_lower = 1e-3;
};

/// Worker selection, split and delay for one (s, t). t may be fractional.
CodeEvaluation evaluate_code(const PlanRequest& req, double s, double t);

struct Plan {
  polydot::SplitPair code;
  CodeEvaluation chosen;
  std::vector<CodeEvaluation> skipped;

  double d_exe() const { return chosen.delay.total(); }
};

class NoPlanError : public InfeasibleError {
 public:
  NoPlanError(std::string what, std::vector<CodeEvaluation> skipped)
      : InfeasibleError(std::move(what)), skipped_(std::move(skipped)) {}
  const std::vector<CodeEvaluation>& skipped() const { return skipped_; }

 private:
  std::vector<CodeEvaluation> skipped_;
};

/// Minimises the predicted execution time over req.codes.
Plan plan_search(const PlanRequest& req);

}  // namespace sdcc
