#pragma once

// Experiment configuration, worker-pool generation, sweeps and CSV output.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sdcc/delay_model.hpp"
#include "sdcc/stream_sim.hpp"

namespace sdcc::scenario {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Range {
  double lo = 0;
  double hi = 1;
};

enum class Selection {
  SortedValid,   // valid workers by decreasing 1/E[T] until sum r_comp >= 1 + theta
  ArrivalOrder,  // pool order, no validity filter, same rate target
};

struct PoolSpec {
  int count = 150;
  Range compute_rate{0, 1000};
  std::optional<Range> comm_rate = Range{0, 200};  // empty: unlimited links
  Selection selection = Selection::SortedValid;
};

enum class PurgeMode { Off, On, Both };
enum class SAdmissible { Divisors, All };

struct Config {
  std::string scenario_id = "default";
  double arrival_rate = 1e-3;
  int N = 100;
  int m = 50;
  std::optional<polydot::SplitPair> code;  // fixed (s, t) for simulate and sweep-omega
  double omega = 1.0;
  std::vector<double> omega_grid{1.0};
  double theta = 2.0;
  double phi_lower = 1e-3;
  PoolSpec pool;
  double mu_enc = 1e4;
  double mu_dec = 1e5;
  bool include_codec = true;
  std::vector<sim::Policy> policies{sim::Policy::Optimal, sim::Policy::Uniform, sim::Policy::Ideal};
  PurgeMode purge = PurgeMode::Off;
  bool reinforcement = false;
  double threshold = 0;
  double alpha = 0.01;
  double beta = 0.01;
  int block = 1;
  int reoptimize_every = 20;
  int replicates = 50;
  int jobs = 200;
  std::uint64_t seed = 1;
  SAdmissible s_admissible = SAdmissible::Divisors;
  sim::ServiceLaw service_law = sim::ServiceLaw::Exponential;
  double gamma_shape = 2;
  double horizon_factor = 50;
  bool trace_tasks = true;

  /// Throws ConfigError on any broken invariant.
  void validate() const;
};

Config parse_config(const std::string& json_text);
Config load_config(const std::filesystem::path& path);

sim::Policy parse_policy(const std::string& name);
std::string policy_name(sim::Policy p);
std::vector<sim::Policy> parse_policy_list(const std::string& csv);
PurgeMode parse_purge(const std::string& mode);
std::vector<bool> purge_settings(PurgeMode mode);

/// Stable 64-bit mix of the given parts (splitmix64 chain, FNV-1a for text).
std::uint64_t seed_hash(std::uint64_t base, const std::string& scenario,
                        std::initializer_list<std::uint64_t> parts);
std::uint64_t pool_seed(const Config& cfg, int replicate);
/// Shared by every policy and purge setting so runs are paired.
std::uint64_t run_seed(const Config& cfg, std::size_t omega_index, int replicate);

std::vector<WorkerSpec> generate_pool(const PoolSpec& spec, std::uint64_t seed);

/// Everything needed to simulate one (code, omega, pool) cell.
struct RunSetup {
  double s = 0;
  double t = 0;
  polydot::CodeProfile profile;
  std::vector<std::size_t> selected;   // pool indices
  std::vector<WorkerProfile> profiles;  // job moments of the selected workers
  std::vector<double> r_comp;
  sim::Scenario scenario;               // policy fields left at defaults
};

/// Throws InfeasibleError when the pool cannot reach 1 + theta.
RunSetup build_run(const Config& cfg, double s, double t, double omega,
                   const std::vector<WorkerSpec>& pool);

void apply_policy(sim::Scenario& sc, const Config& cfg, sim::Policy policy, bool purge);

PlanRequest plan_request(const Config& cfg, const std::vector<WorkerSpec>& pool, double omega);
/// Codes a plan may choose: divisor pairs of m only. The all-integer s mode
/// applies to sweep_s alone, since a non-divisor s has no integral t.
std::vector<polydot::SplitPair> code_options(const Config& cfg);

// ---- sweeps ---------------------------------------------------------------

struct SweepSRow {
  double s = 0;
  double t = 0;
  CodeEvaluation eval;
};

std::vector<SweepSRow> sweep_s(const Config& cfg, int replicate = 0);

struct RunOutcome {
  double mean_delay = 0;
  double load = 0;
  bool completed = false;
  bool truncated = false;
  sim::SimResult detail;  // traces kept only when requested
};

struct SummaryRow {
  std::string scenario_id;
  std::string policy;
  double omega = 1;
  double s = 0;
  double t = 0;
  bool purge = false;
  bool reinforce = false;
  int replicates = 0;
  int runs_completed = 0;
  int runs_truncated = 0;
  int runs_infeasible = 0;
  double mean_delay = 0;
  std::optional<double> stderr_delay;
  double median_delay = 0;
  double iqr_delay = 0;
  double mean_load = 0;
  std::optional<double> stderr_load;
  double reference_delay = 0;  // 1/(3 lambda)
  bool feasible = true;
};

struct SweepOmegaResult {
  std::vector<SummaryRow> summary;
  // runs[cell][replicate]; cell order: omega, purge, policy
  std::vector<std::vector<RunOutcome>> runs;
};

struct SweepOptions {
  bool keep_traces = false;
  unsigned threads = 0;  // 0: hardware concurrency
};

SweepOmegaResult sweep_omega(const Config& cfg, const std::vector<double>& omegas,
                             const SweepOptions& opts = {});

SummaryRow summarize(const Config& cfg, const std::string& policy, double omega, double s, double t,
                     bool purge, const std::vector<RunOutcome>& runs);

// ---- validate-code ----------------------------------------------------------

struct ValidationReport {
  int trials = 0;
  int passed = 0;
  int subset_checks = 0;
  int subset_passed = 0;
};

/// Random integer matrices through encode, compute and decode in exact
/// arithmetic. Throws std::invalid_argument when s or t does not divide N.
ValidationReport validate_code(int N, int s, int t, int trials, std::uint64_t seed,
                               double omega = 1.5);

// ---- CSV ----------------------------------------------------------------------

void write_sweep_csv(std::ostream& out, const std::vector<SweepSRow>& rows);
void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows);
void write_jobs_header(std::ostream& out);
void write_jobs_csv(std::ostream& out, const std::string& tag_policy, double omega, bool purge,
                    int replicate, const sim::SimResult& r);
void write_tasks_header(std::ostream& out);
void write_tasks_csv(std::ostream& out, const std::string& tag_policy, double omega, bool purge,
                     int replicate, const sim::SimResult& r);

/// Shortest round-trip formatting used by every CSV writer.
std::string fmt(double v);

}  // namespace sdcc::scenario
