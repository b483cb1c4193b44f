// Command-line front end: plan, simulate, sweep-s, sweep-omega, validate-code.
//
// Exit codes: 0 success, 1 configuration error, 2 infeasible plan,
// 3 code validation mismatch.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "sdcc/scenario.hpp"

namespace fs = std::filesystem;
using namespace sdcc;
using namespace sdcc::scenario;

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitInfeasible = 2;
constexpr int kExitMismatch = 3;

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  std::optional<int> replicates;
  std::string policies;
  std::string purge;
  std::string reinforce;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool sim_flags) {
  cmd->add_option("--config", f.config, "JSON scenario file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", f.seed, "base seed (overrides the config)");
  cmd->add_option("--out", f.out, "output directory");
  if (!sim_flags) return;
  cmd->add_option("--replicates", f.replicates, "seeded replicates per cell")->check(CLI::PositiveNumber);
  cmd->add_option("--policies", f.policies, "comma list of optimal,uniform,ideal");
  cmd->add_option("--purge", f.purge, "on, off or both")->check(CLI::IsMember({"on", "off", "both"}));
  cmd->add_option("--reinforce", f.reinforce, "on or off")->check(CLI::IsMember({"on", "off"}));
}

Config resolve(const CommonFlags& f) {
  Config cfg = load_config(f.config);
  if (f.seed) cfg.seed = *f.seed;
  if (f.replicates) cfg.replicates = *f.replicates;
  if (!f.policies.empty()) cfg.policies = parse_policy_list(f.policies);
  if (!f.purge.empty()) cfg.purge = parse_purge(f.purge);
  if (!f.reinforce.empty()) cfg.reinforcement = f.reinforce == "on";
  cfg.validate();
  return cfg;
}

std::ofstream open_out(const std::string& dir, const std::string& name) {
  fs::create_directories(dir);
  std::ofstream out(fs::path(dir) / name, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + (fs::path(dir) / name).string());
  return out;
}

void print_plan(const Plan& plan, double lambda) {
  const auto& e = plan.chosen;
  std::cout << "code: s=" << plan.code.s << " t=" << plan.code.t << " K=" << e.profile.K << "\n";
  std::cout << "workers (" << e.selected.size() << "), sum r_comp=" << fmt(e.sum_r_comp) << "\n";
  std::cout << "  pool_index,mean_job_time,r_comp,phi\n";
  double sum = 0;
  for (std::size_t i = 0; i < e.selected.size(); ++i) {
    const double r = 1.0 / (lambda * e.selected_profiles[i].mean_job_time);
    std::cout << "  " << e.selected[i] << ',' << fmt(e.selected_profiles[i].mean_job_time) << ','
              << fmt(r) << ',' << fmt(e.split.phi[i]) << "\n";
    sum += e.split.phi[i];
  }
  std::cout << "sum phi=" << fmt(sum) << "\n";
  std::cout << "D_exe=" << fmt(e.delay.total()) << " (enc " << fmt(e.delay.encode) << ", comm_in "
            << fmt(e.delay.comm_in) << ", comp " << fmt(e.delay.compute) << ", comm_out "
            << fmt(e.delay.comm_out) << ", dec " << fmt(e.delay.decode) << ")\n";
  std::cout << "infeasible codes skipped: " << plan.skipped.size() << "\n";
}

int cmd_plan(const CommonFlags& f) {
  const Config cfg = resolve(f);
  const auto pool = generate_pool(cfg.pool, pool_seed(cfg, 0));
  try {
    const Plan plan = plan_search(plan_request(cfg, pool, cfg.omega));
    print_plan(plan, cfg.arrival_rate);
    auto out = open_out(f.out, "plan.csv");
    out << "s,t,K,pool_index,r_comp,phi,d_exe\n";
    for (std::size_t i = 0; i < plan.chosen.selected.size(); ++i) {
      out << plan.code.s << ',' << plan.code.t << ',' << fmt(plan.chosen.profile.K) << ','
          << plan.chosen.selected[i] << ','
          << fmt(1.0 / (cfg.arrival_rate * plan.chosen.selected_profiles[i].mean_job_time)) << ','
          << fmt(plan.chosen.split.phi[i]) << ',' << fmt(plan.d_exe()) << '\n';
    }
  } catch (const NoPlanError& e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    for (const auto& sk : e.skipped()) {
      std::cerr << "  s=" << fmt(sk.s) << " t=" << fmt(sk.t) << ": " << sk.reason << "\n";
    }
    return kExitInfeasible;
  }
  return 0;
}

int run_cells(const CommonFlags& f, const Config& cfg, const std::vector<double>& omegas,
              bool traces) {
  SweepOptions opts;
  opts.keep_traces = traces;
  const auto result = sweep_omega(cfg, omegas, opts);
  {
    auto out = open_out(f.out, "summary.csv");
    write_summary_csv(out, result.summary);
  }
  if (traces) {
    auto jobs = open_out(f.out, "jobs.csv");
    auto tasks = open_out(f.out, "tasks.csv");
    write_jobs_header(jobs);
    write_tasks_header(tasks);
    const auto purges = purge_settings(cfg.purge);
    std::size_t cell = 0;
    for (double omega : omegas) {
      for (bool purge : purges) {
        for (auto policy : cfg.policies) {
          const auto& runs = result.runs[cell++];
          for (std::size_t r = 0; r < runs.size(); ++r) {
            write_jobs_csv(jobs, policy_name(policy), omega, purge, static_cast<int>(r), runs[r].detail);
            write_tasks_csv(tasks, policy_name(policy), omega, purge, static_cast<int>(r), runs[r].detail);
          }
        }
      }
    }
  }
  bool any = false;
  for (const auto& row : result.summary) any = any || row.runs_infeasible < row.replicates;
  if (!any) {
    std::cerr << "infeasible: no replicate pool reaches the selection target\n";
    return kExitInfeasible;
  }
  write_summary_csv(std::cout, result.summary);
  return 0;
}

int cmd_simulate(const CommonFlags& f) {
  Config cfg = resolve(f);
  if (!cfg.code) {
    const auto pool = generate_pool(cfg.pool, pool_seed(cfg, 0));
    try {
      cfg.code = plan_search(plan_request(cfg, pool, cfg.omega)).code;
    } catch (const NoPlanError& e) {
      std::cerr << "infeasible: " << e.what() << "\n";
      return kExitInfeasible;
    }
  }
  return run_cells(f, cfg, {cfg.omega}, true);
}

int cmd_sweep_omega(const CommonFlags& f) {
  const Config cfg = resolve(f);
  return run_cells(f, cfg, cfg.omega_grid, false);
}

int cmd_sweep_s(const CommonFlags& f) {
  const Config cfg = resolve(f);
  const auto rows = sweep_s(cfg);
  auto out = open_out(f.out, "sweep.csv");
  write_sweep_csv(out, rows);
  write_sweep_csv(std::cout, rows);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stream coded computation planner and simulator"};
  app.require_subcommand(1);

  CommonFlags plan_f, sim_f, ss_f, so_f;
  add_common(app.add_subcommand("plan", "choose code, workers and split"), plan_f, false);
  add_common(app.add_subcommand("simulate", "simulate the configured scenario"), sim_f, true);
  add_common(app.add_subcommand("sweep-s", "planner quantities across s"), ss_f, false);
  add_common(app.add_subcommand("sweep-omega", "simulate across the omega grid"), so_f, true);

  int N = 12, s = 3, t = 2, trials = 20;
  double omega = 1.5;
  std::uint64_t vseed = 1;
  auto* vc = app.add_subcommand("validate-code", "exact encode/decode round trips");
  vc->add_option("--N", N, "matrix side")->check(CLI::PositiveNumber);
  vc->add_option("--s", s, "column split of A")->check(CLI::PositiveNumber);
  vc->add_option("--t", t, "row split of A")->check(CLI::PositiveNumber);
  vc->add_option("--trials", trials, "random trials")->check(CLI::PositiveNumber);
  vc->add_option("--omega", omega, "redundancy for subset checks");
  vc->add_option("--seed", vseed, "matrix seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // --help and friends exit 0; any bad flag or missing file is a config error
    return app.exit(e) == 0 ? 0 : kExitConfig;
  }

  try {
    if (app.got_subcommand("plan")) return cmd_plan(plan_f);
    if (app.got_subcommand("simulate")) return cmd_simulate(sim_f);
    if (app.got_subcommand("sweep-s")) return cmd_sweep_s(ss_f);
    if (app.got_subcommand("sweep-omega")) return cmd_sweep_omega(so_f);
    if (app.got_subcommand("validate-code")) {
      const auto rep = validate_code(N, s, t, trials, vseed, omega);
      std::cout << "decode " << rep.passed << "/" << rep.trials << " exact, subsets "
                << rep.subset_passed << "/" << rep.subset_checks << " exact\n";
      return rep.passed == rep.trials && rep.subset_passed == rep.subset_checks ? 0 : kExitMismatch;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const InfeasibleError& e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    return kExitInfeasible;
  }
  return 0;
}
