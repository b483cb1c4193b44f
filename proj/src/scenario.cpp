#include "sdcc/scenario.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace sdcc::scenario {

using nlohmann::json;

namespace {

Range parse_range(const json& j, const char* key) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
    throw ConfigError(std::string("pool.") + key + " must be [lo, hi]");
  }
  return Range{j[0].get<double>(), j[1].get<double>()};
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

sim::ServiceLaw parse_law(const std::string& s) {
  if (s == "exponential") return sim::ServiceLaw::Exponential;
  if (s == "deterministic") return sim::ServiceLaw::Deterministic;
  if (s == "gamma") return sim::ServiceLaw::Gamma;
  throw ConfigError("unknown service_law '" + s + "'");
}

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double quantile(std::vector<double> v, double q) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = static_cast<std::size_t>(std::ceil(pos));
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

std::pair<double, std::optional<double>> mean_stderr(const std::vector<double>& v) {
  if (v.empty()) return {std::nan(""), std::nullopt};
  const double n = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  if (v.size() < 2) return {mean, std::nullopt};
  double ss = 0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / (n - 1) / n)};
}

/// Runs fn(i) for i in [0, n) on a small thread pool; results land by index.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(n, 1)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  for (unsigned k = 0; k < threads; ++k) {
    pool.emplace_back([&, k] {
      try {
        for (std::size_t i = next++; i < n; i = next++) fn(i);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

void Config::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (!(arrival_rate > 0)) fail("arrival_rate must be positive");
  if (N < 1 || m < 1) fail("N and m must be positive");
  if (!(omega >= 1)) fail("omega must be at least 1");
  if (omega_grid.empty()) fail("omega_grid must not be empty");
  for (double o : omega_grid) {
    if (!(o >= 1)) fail("every omega_grid entry must be at least 1");
  }
  const double max_omega = std::max(omega, *std::max_element(omega_grid.begin(), omega_grid.end()));
  if (theta < max_omega - 1 - 1e-12) fail("theta must be at least omega - 1");
  if (!(phi_lower >= 0)) fail("phi_lower must be non-negative");
  if (pool.count < 1) fail("pool.count must be positive");
  if (!(pool.compute_rate.lo >= 0) || !(pool.compute_rate.hi > pool.compute_rate.lo)) {
    fail("pool.compute_rate must satisfy 0 <= lo < hi");
  }
  if (pool.comm_rate && (!(pool.comm_rate->lo >= 0) || !(pool.comm_rate->hi > pool.comm_rate->lo))) {
    fail("pool.comm_rate must satisfy 0 <= lo < hi");
  }
  if (!(mu_enc > 0) || !(mu_dec > 0)) fail("mu_enc and mu_dec must be positive");
  if (policies.empty()) fail("policies must not be empty");
  if (!(alpha > 0 && alpha <= 1) || !(beta > 0 && beta <= 1)) fail("alpha and beta must lie in (0, 1]");
  if (block < 1) fail("block must be at least 1");
  if (reoptimize_every < 1) fail("reoptimize_every must be at least 1");
  if (replicates < 1) fail("replicates must be at least 1");
  if (jobs < 1) fail("jobs must be at least 1");
  if (code && (code->s < 1 || code->t < 1)) fail("code.s and code.t must be positive");
  if (!(gamma_shape > 0)) fail("gamma_shape must be positive");
  if (!(horizon_factor > 0)) fail("horizon_factor must be positive");
}

namespace {

Config parse_object(const json& j);

}  // namespace

Config parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  try {
    return parse_object(j);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config has a value of the wrong type: ") + e.what());
  }
}

namespace {

void reject_unknown(const json& j, std::initializer_list<const char*> known, const std::string& where) {
  for (const auto& item : j.items()) {
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return item.key() == k; })) {
      throw ConfigError("unknown config key '" + where + item.key() + "'");
    }
  }
}

Config parse_object(const json& j) {
  reject_unknown(j,
                 {"scenario_id", "arrival_rate", "N", "m", "code", "omega", "omega_grid", "theta",
                  "phi_lower", "pool", "mu_enc", "mu_dec", "include_codec", "policies", "purge",
                  "reinforcement", "threshold", "alpha", "beta", "block", "reoptimize_every",
                  "replicates", "jobs", "seed", "s_admissible", "service_law", "gamma_shape",
                  "horizon_factor", "trace_tasks"},
                 "");
  Config c;
  read(j, "scenario_id", c.scenario_id);
  read(j, "arrival_rate", c.arrival_rate);
  read(j, "N", c.N);
  read(j, "m", c.m);
  if (j.contains("code") && !j.at("code").is_null()) {
    const auto& code = j.at("code");
    if (!code.contains("s") || !code.contains("t")) throw ConfigError("code needs s and t");
    c.code = polydot::SplitPair{code["s"].get<int>(), code["t"].get<int>()};
  }
  read(j, "omega", c.omega);
  if (j.contains("omega_grid")) {
    read(j, "omega_grid", c.omega_grid);
  } else {
    c.omega_grid = {c.omega};
  }
  read(j, "theta", c.theta);
  read(j, "phi_lower", c.phi_lower);
  if (j.contains("pool")) {
    const auto& p = j.at("pool");
    if (!p.is_object()) throw ConfigError("pool must be an object");
    reject_unknown(p, {"count", "compute_rate", "comm_rate", "selection"}, "pool.");
    read(p, "count", c.pool.count);
    if (p.contains("compute_rate")) c.pool.compute_rate = parse_range(p.at("compute_rate"), "compute_rate");
    if (p.contains("comm_rate")) {
      if (p.at("comm_rate").is_null()) {
        c.pool.comm_rate.reset();
      } else {
        c.pool.comm_rate = parse_range(p.at("comm_rate"), "comm_rate");
      }
    }
    if (p.contains("selection")) {
      const auto sel = p.at("selection").get<std::string>();
      if (sel == "sorted-valid") {
        c.pool.selection = Selection::SortedValid;
      } else if (sel == "arrival-order") {
        c.pool.selection = Selection::ArrivalOrder;
      } else {
        throw ConfigError("pool.selection must be sorted-valid or arrival-order");
      }
    }
  }
  read(j, "mu_enc", c.mu_enc);
  read(j, "mu_dec", c.mu_dec);
  read(j, "include_codec", c.include_codec);
  if (j.contains("policies")) {
    c.policies.clear();
    for (const auto& p : j.at("policies")) c.policies.push_back(parse_policy(p.get<std::string>()));
  }
  if (j.contains("purge")) c.purge = parse_purge(j.at("purge").get<std::string>());
  read(j, "reinforcement", c.reinforcement);
  read(j, "threshold", c.threshold);
  read(j, "alpha", c.alpha);
  read(j, "beta", c.beta);
  read(j, "block", c.block);
  read(j, "reoptimize_every", c.reoptimize_every);
  read(j, "replicates", c.replicates);
  read(j, "jobs", c.jobs);
  read(j, "seed", c.seed);
  if (j.contains("s_admissible")) {
    const auto v = j.at("s_admissible").get<std::string>();
    if (v == "divisors") {
      c.s_admissible = SAdmissible::Divisors;
    } else if (v == "all") {
      c.s_admissible = SAdmissible::All;
    } else {
      throw ConfigError("s_admissible must be divisors or all");
    }
  }
  if (j.contains("service_law")) c.service_law = parse_law(j.at("service_law").get<std::string>());
  read(j, "gamma_shape", c.gamma_shape);
  read(j, "horizon_factor", c.horizon_factor);
  read(j, "trace_tasks", c.trace_tasks);
  c.validate();
  return c;
}

}  // namespace

Config load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

sim::Policy parse_policy(const std::string& name) {
  if (name == "optimal") return sim::Policy::Optimal;
  if (name == "uniform") return sim::Policy::Uniform;
  if (name == "ideal") return sim::Policy::Ideal;
  throw ConfigError("unknown policy '" + name + "'");
}

std::string policy_name(sim::Policy p) {
  switch (p) {
    case sim::Policy::Optimal: return "optimal";
    case sim::Policy::Uniform: return "uniform";
    case sim::Policy::Ideal: return "ideal";
    case sim::Policy::Static: return "static";
  }
  return "unknown";
}

std::vector<sim::Policy> parse_policy_list(const std::string& csv) {
  std::vector<sim::Policy> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(parse_policy(item));
  }
  if (out.empty()) throw ConfigError("empty policy list");
  return out;
}

PurgeMode parse_purge(const std::string& mode) {
  if (mode == "off") return PurgeMode::Off;
  if (mode == "on") return PurgeMode::On;
  if (mode == "both") return PurgeMode::Both;
  throw ConfigError("purge must be on, off or both");
}

std::vector<bool> purge_settings(PurgeMode mode) {
  switch (mode) {
    case PurgeMode::Off: return {false};
    case PurgeMode::On: return {true};
    case PurgeMode::Both: return {false, true};
  }
  return {false};
}

std::uint64_t seed_hash(std::uint64_t base, const std::string& scenario,
                        std::initializer_list<std::uint64_t> parts) {
  std::uint64_t text = 0xcbf29ce484222325ULL;
  for (unsigned char ch : scenario) {
    text ^= ch;
    text *= 0x100000001b3ULL;
  }
  std::uint64_t h = splitmix(base);
  h = splitmix(h ^ text);
  for (std::uint64_t p : parts) h = splitmix(h ^ p);
  return h;
}

std::uint64_t pool_seed(const Config& cfg, int replicate) {
  return seed_hash(cfg.seed, cfg.scenario_id, {0x9001ULL, static_cast<std::uint64_t>(replicate)});
}

std::uint64_t run_seed(const Config& cfg, std::size_t omega_index, int replicate) {
  return seed_hash(cfg.seed, cfg.scenario_id,
                   {0x7e57ULL, omega_index, static_cast<std::uint64_t>(replicate)});
}

std::vector<WorkerSpec> generate_pool(const PoolSpec& spec, std::uint64_t seed) {
  if (spec.count < 1) throw std::invalid_argument("generate_pool: count must be positive");
  if (!(spec.compute_rate.hi > spec.compute_rate.lo) || spec.compute_rate.lo < 0) {
    throw std::invalid_argument("generate_pool: degenerate compute_rate range");
  }
  if (spec.comm_rate && (!(spec.comm_rate->hi > spec.comm_rate->lo) || spec.comm_rate->lo < 0)) {
    throw std::invalid_argument("generate_pool: degenerate comm_rate range");
  }
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> mu(spec.compute_rate.lo, spec.compute_rate.hi);
  std::vector<WorkerSpec> pool;
  pool.reserve(static_cast<std::size_t>(spec.count));
  auto positive = [](double v) { return v > 0 ? v : std::numeric_limits<double>::min(); };
  for (int p = 0; p < spec.count; ++p) {
    WorkerSpec w;
    w.op_rate = positive(mu(gen));
    if (spec.comm_rate) {
      std::uniform_real_distribution<double> c(spec.comm_rate->lo, spec.comm_rate->hi);
      w.comm_rate = positive(c(gen));
    }
    pool.push_back(w);
  }
  return pool;
}

RunSetup build_run(const Config& cfg, double s, double t, double omega,
                   const std::vector<WorkerSpec>& pool) {
  RunSetup r;
  r.s = s;
  r.t = t;
  r.profile = polydot::derive_profile_relaxed(cfg.N, s, t, omega, cfg.mu_enc, cfg.mu_dec);
  const double K = r.profile.K;
  if (std::abs(K - std::round(K)) > 1e-9) {
    throw std::invalid_argument("simulation needs an integral task threshold K");
  }

  std::vector<WorkerProfile> all;
  all.reserve(pool.size());
  for (const auto& w : pool) all.push_back(job_profile(w, r.profile, omega));

  if (cfg.pool.selection == Selection::SortedValid) {
    r.selected = select_workers(all, cfg.arrival_rate, cfg.theta, omega, r.profile);
  } else {
    double total = 0;
    for (std::size_t p = 0; p < all.size() && total < 1.0 + cfg.theta; ++p) {
      r.selected.push_back(p);
      total += 1.0 / (cfg.arrival_rate * all[p].mean_job_time);
    }
    if (total < 1.0 + cfg.theta) {
      throw InfeasibleError("pool reaches r_comp sum " + std::to_string(total) + " < " +
                            std::to_string(1.0 + cfg.theta));
    }
  }

  auto& sc = r.scenario;
  sc.lambda = cfg.arrival_rate;
  sc.K = static_cast<int>(std::lround(K));
  sc.omega = omega;
  sc.I_in = r.profile.I_in;
  sc.I_out = r.profile.I_out;
  sc.T_enc = r.profile.T_enc_mean;
  sc.T_dec = r.profile.T_dec_mean;
  sc.include_codec = cfg.include_codec;
  sc.law = cfg.service_law;
  sc.gamma_shape = cfg.gamma_shape;
  sc.phi_lower = cfg.phi_lower;
  sc.reoptimize_every = cfg.reoptimize_every;
  sc.threshold = cfg.threshold;
  sc.alpha = cfg.alpha;
  sc.beta = cfg.beta;
  sc.estimator_block = cfg.block;
  sc.jobs = static_cast<std::size_t>(cfg.jobs);
  sc.horizon_factor = cfg.horizon_factor;
  const double tasks = K * omega;
  for (std::size_t idx : r.selected) {
    r.profiles.push_back(all[idx]);
    r.r_comp.push_back(1.0 / (cfg.arrival_rate * all[idx].mean_job_time));
    sc.workers.push_back(sim::SimWorker{tasks * pool[idx].op_rate / r.profile.C_ops,
                                        pool[idx].comm_rate, {}});
  }
  return r;
}

void apply_policy(sim::Scenario& sc, const Config& cfg, sim::Policy policy, bool purge) {
  sc.policy = policy;
  sc.purge = purge;
  sc.reinforce = cfg.reinforcement && policy != sim::Policy::Ideal;
}

PlanRequest plan_request(const Config& cfg, const std::vector<WorkerSpec>& pool, double omega) {
  PlanRequest req;
  req.pool = pool;
  req.lambda = cfg.arrival_rate;
  req.omega = omega;
  req.theta = cfg.theta;
  req.codes = code_options(cfg);
  req.N = cfg.N;
  req.mu_enc = cfg.mu_enc;
  req.mu_dec = cfg.mu_dec;
  req.phi_lower = cfg.phi_lower;
  return req;
}

std::vector<polydot::SplitPair> code_options(const Config& cfg) {
  return polydot::enumerate_codes(cfg.m);
}

std::vector<SweepSRow> sweep_s(const Config& cfg, int replicate) {
  const auto pool = generate_pool(cfg.pool, pool_seed(cfg, replicate));
  const PlanRequest req = plan_request(cfg, pool, cfg.omega);
  std::vector<SweepSRow> rows;
  std::vector<double> s_values;
  if (cfg.s_admissible == SAdmissible::Divisors) {
    for (const auto& c : polydot::enumerate_codes(cfg.m)) s_values.push_back(c.s);
  } else {
    for (int s = 1; s <= cfg.m; ++s) s_values.push_back(s);
  }
  for (double s : s_values) {
    const double t = static_cast<double>(cfg.m) / s;
    rows.push_back({s, t, evaluate_code(req, s, t)});
  }
  return rows;
}

SummaryRow summarize(const Config& cfg, const std::string& policy, double omega, double s, double t,
                     bool purge, const std::vector<RunOutcome>& runs) {
  SummaryRow row;
  row.scenario_id = cfg.scenario_id;
  row.policy = policy;
  row.omega = omega;
  row.s = s;
  row.t = t;
  row.purge = purge;
  row.reinforce = cfg.reinforcement && policy != "ideal";
  row.replicates = static_cast<int>(runs.size());
  row.reference_delay = 1.0 / (3.0 * cfg.arrival_rate);
  std::vector<double> delays;
  std::vector<double> loads;
  for (const auto& r : runs) {
    if (r.truncated) ++row.runs_truncated;
    if (!r.completed && !r.truncated) ++row.runs_infeasible;
    if (r.completed) {
      ++row.runs_completed;
      delays.push_back(r.mean_delay);
      loads.push_back(r.load);
    }
  }
  row.feasible = row.runs_infeasible < row.replicates;
  std::tie(row.mean_delay, row.stderr_delay) = mean_stderr(delays);
  std::tie(row.mean_load, row.stderr_load) = mean_stderr(loads);
  row.median_delay = quantile(delays, 0.5);
  row.iqr_delay = quantile(delays, 0.75) - quantile(delays, 0.25);
  return row;
}

SweepOmegaResult sweep_omega(const Config& cfg, const std::vector<double>& omegas,
                             const SweepOptions& opts) {
  if (!cfg.code) throw ConfigError("sweep-omega needs a fixed code {s, t}");
  const double s = cfg.code->s;
  const double t = cfg.code->t;
  const auto purges = purge_settings(cfg.purge);
  const std::size_t R = static_cast<std::size_t>(cfg.replicates);

  // Pools and run setups are shared by all policies of a replicate.
  std::vector<std::vector<WorkerSpec>> pools(R);
  for (std::size_t r = 0; r < R; ++r) pools[r] = generate_pool(cfg.pool, pool_seed(cfg, static_cast<int>(r)));
  std::vector<std::vector<std::optional<RunSetup>>> setups(omegas.size(),
                                                           std::vector<std::optional<RunSetup>>(R));
  for (std::size_t o = 0; o < omegas.size(); ++o) {
    for (std::size_t r = 0; r < R; ++r) {
      try {
        setups[o][r] = build_run(cfg, s, t, omegas[o], pools[r]);
      } catch (const InfeasibleError&) {
        setups[o][r].reset();
      }
    }
  }

  const std::size_t cells = omegas.size() * purges.size() * cfg.policies.size();
  SweepOmegaResult out;
  out.runs.assign(cells, std::vector<RunOutcome>(R));
  auto cell_index = [&](std::size_t o, std::size_t pu, std::size_t po) {
    return (o * purges.size() + pu) * cfg.policies.size() + po;
  };

  parallel_for(cells * R, opts.threads, [&](std::size_t flat) {
    const std::size_t cell = flat / R;
    const std::size_t r = flat % R;
    const std::size_t po = cell % cfg.policies.size();
    const std::size_t pu = (cell / cfg.policies.size()) % purges.size();
    const std::size_t o = cell / (cfg.policies.size() * purges.size());
    auto& outcome = out.runs[cell][r];
    if (!setups[o][r]) return;
    sim::Scenario sc = setups[o][r]->scenario;
    apply_policy(sc, cfg, cfg.policies[po], purges[pu]);
    sc.record_tasks = opts.keep_traces && cfg.trace_tasks && r == 0;
    sim::SimResult res;
    try {
      res = sim::run_simulation(sc, run_seed(cfg, o, static_cast<int>(r)));
    } catch (const InfeasibleError&) {
      return;
    }
    outcome.mean_delay = res.metrics.mean_in_order_delay;
    outcome.load = res.metrics.computational_load;
    outcome.truncated = res.metrics.truncated;
    outcome.completed = !res.metrics.truncated && res.metrics.jobs_delivered == sc.jobs;
    if (opts.keep_traces) outcome.detail = std::move(res);
  });

  for (std::size_t o = 0; o < omegas.size(); ++o) {
    for (std::size_t pu = 0; pu < purges.size(); ++pu) {
      for (std::size_t po = 0; po < cfg.policies.size(); ++po) {
        out.summary.push_back(summarize(cfg, policy_name(cfg.policies[po]), omegas[o], s, t,
                                        purges[pu], out.runs[cell_index(o, pu, po)]));
      }
    }
  }
  return out;
}

ValidationReport validate_code(int N, int s, int t, int trials, std::uint64_t seed, double omega) {
  using polydot::Rational;
  using Mat = polydot::Matrix<Rational>;
  const auto params = polydot::CodeParams::make(N, s, t);
  const int K = params.critical_tasks();
  const int n_tasks = sim::task_count(K, omega);
  std::mt19937_64 gen(seed);
  std::uniform_int_distribution<int> entry(-9, 9);
  ValidationReport rep;
  for (int trial = 0; trial < trials; ++trial) {
    Mat A(N, N);
    Mat B(N, N);
    for (int i = 0; i < N; ++i) {
      for (int j = 0; j < N; ++j) {
        A(i, j) = entry(gen);
        B(i, j) = entry(gen);
      }
    }
    const Mat expected = A * B;
    const auto payloads = polydot::encode_job(A, B, params, n_tasks);
    std::vector<polydot::TaskResult<Rational>> results;
    results.reserve(payloads.size());
    for (const auto& p : payloads) results.push_back(polydot::compute_task(p));

    ++rep.trials;
    if (polydot::decode_job(results, params) == expected) ++rep.passed;

    // a shuffled K-subset, the last K and the first K
    std::vector<polydot::TaskResult<Rational>> subset(results.end() - K, results.end());
    std::vector<polydot::TaskResult<Rational>> shuffled = results;
    std::shuffle(shuffled.begin(), shuffled.end(), gen);
    shuffled.resize(static_cast<std::size_t>(K));
    for (const auto* pick : {&subset, &shuffled}) {
      ++rep.subset_checks;
      if (polydot::decode_job(*pick, params) == expected) ++rep.subset_passed;
    }
  }
  return rep;
}

std::string fmt(double v) {
  if (std::isnan(v)) return "";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepSRow>& rows) {
  out << "s,t,K,enc_ok,in_ok,out_ok,dec_ok,valid,feasible,selected,sum_r_comp,"
         "d_enc,d_comm_in,d_comp,d_comm_out,d_dec,d_exe,reason\n";
  for (const auto& r : rows) {
    const auto& e = r.eval;
    out << fmt(r.s) << ',' << fmt(r.t) << ',' << fmt(e.profile.K) << ',' << e.encode_ok << ','
        << e.inbound_ok << ',' << e.outbound_ok << ',' << e.decode_ok << ',' << e.valid << ','
        << (e.feasible ? 1 : 0) << ',' << e.selected.size() << ',' << fmt(e.sum_r_comp) << ',';
    if (e.feasible) {
      out << fmt(e.delay.encode) << ',' << fmt(e.delay.comm_in) << ',' << fmt(e.delay.compute) << ','
          << fmt(e.delay.comm_out) << ',' << fmt(e.delay.decode) << ',' << fmt(e.delay.total());
    } else {
      out << ",,,,,";
    }
    std::string reason = e.reason;
    std::replace(reason.begin(), reason.end(), ',', ';');
    out << ',' << reason << '\n';
  }
}


void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows) {
  out << "scenario_id,policy,omega,s,t,purge,reinforce,replicates,runs_completed,runs_truncated,"
         "runs_infeasible,mean_delay,stderr_delay,median_delay,iqr_delay,mean_load,stderr_load,"
         "reference_delay,feasible\n";
  for (const auto& r : rows) {
    out << r.scenario_id << ',' << r.policy << ',' << fmt(r.omega) << ',' << fmt(r.s) << ','
        << fmt(r.t) << ',' << (r.purge ? "on" : "off") << ',' << (r.reinforce ? "on" : "off") << ','
        << r.replicates << ',' << r.runs_completed << ',' << r.runs_truncated << ','
        << r.runs_infeasible << ',' << fmt(r.mean_delay) << ','
        << (r.stderr_delay ? fmt(*r.stderr_delay) : "") << ',' << fmt(r.median_delay) << ','
        << fmt(r.iqr_delay) << ',' << fmt(r.mean_load) << ','
        << (r.stderr_load ? fmt(*r.stderr_load) : "") << ',' << fmt(r.reference_delay) << ','
        << (r.feasible ? 1 : 0) << '\n';
  }
}

void write_jobs_header(std::ostream& out) {
  out << "policy,omega,purge,replicate,job,arrival,completion,delivery,tasks_generated,"
         "tasks_computed\n";
}

void write_jobs_csv(std::ostream& out, const std::string& policy, double omega, bool purge,
                    int replicate, const sim::SimResult& r) {
  for (const auto& j : r.jobs) {
    out << policy << ',' << fmt(omega) << ',' << (purge ? "on" : "off") << ',' << replicate << ','
        << j.id << ',' << fmt(j.arrival) << ',' << fmt(j.completion) << ',' << fmt(j.delivery) << ','
        << j.tasks_generated << ',' << j.tasks_computed << '\n';
  }
}

void write_tasks_header(std::ostream& out) {
  out << "policy,omega,purge,replicate,job,worker,enqueue,start,finish,status,reinforcement\n";
}

void write_tasks_csv(std::ostream& out, const std::string& policy, double omega, bool purge,
                     int replicate, const sim::SimResult& r) {
  for (const auto& t : r.tasks) {
    const char* status = t.status == sim::TaskStatus::Done     ? "done"
                         : t.status == sim::TaskStatus::Purged ? "purged"
                                                               : "pending";
    out << policy << ',' << fmt(omega) << ',' << (purge ? "on" : "off") << ',' << replicate << ','
        << t.job << ',';
    if (t.worker != std::numeric_limits<std::uint32_t>::max()) out << t.worker;
    out << ',' << fmt(t.enqueue) << ',' << fmt(t.start) << ',' << fmt(t.finish) << ',' << status
        << ',' << (t.reinforcement ? 1 : 0) << '\n';
  }
}

}  // namespace sdcc::scenario
