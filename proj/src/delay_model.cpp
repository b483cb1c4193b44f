#include "sdcc/delay_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace sdcc {

namespace {

void require_same_size(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw std::invalid_argument(std::string("delay_model: size mismatch in ") + what);
}

double activation_threshold(const ScaledRates& w, double phi_lower) {
  const double gap = w.r_comp - phi_lower;
  return w.a * w.r_comp * w.r_comp / (gap * gap) + w.xi();
}

double sum_phi(std::span<const ScaledRates> rates, std::span<const double> phi_lower, double eta) {
  double total = 0;
  for (std::size_t p = 0; p < rates.size(); ++p) total += phi_of_eta(rates[p], eta, phi_lower[p]);
  return total;
}

void check_split_feasible(std::span<const ScaledRates> rates, std::span<const double> phi_lower) {
  require_same_size(rates.size(), phi_lower.size(), "phi_lower");
  if (rates.empty()) throw InfeasibleError("optimal_split: no workers");
  double lower_sum = 0;
  double rate_sum = 0;
  for (std::size_t p = 0; p < rates.size(); ++p) {
    if (!(rates[p].r_comp > 0) || !(rates[p].a > 0)) {
      throw std::invalid_argument("optimal_split: scaled rates must be positive");
    }
    if (phi_lower[p] < 0 || phi_lower[p] >= rates[p].r_comp) {
      throw InfeasibleError("optimal_split: lower bound of worker " + std::to_string(p) +
                            " is not below its r_comp");
    }
    lower_sum += phi_lower[p];
    rate_sum += rates[p].r_comp;
  }
  if (lower_sum > 1.0) {
    throw InfeasibleError("optimal_split: lower bounds sum to " + std::to_string(lower_sum));
  }
  if (rate_sum <= 1.0) {
    throw InfeasibleError("optimal_split: total r_comp " + std::to_string(rate_sum) +
                          " cannot carry a full job");
  }
}

}  // namespace

void WorkerProfile::validate() const {
  if (!(mean_job_time > 0)) throw std::invalid_argument("worker: E[T] must be positive");
  if (!(second_moment_job_time >= mean_job_time * mean_job_time * (1.0 - 1e-12))) {
    throw std::invalid_argument("worker: E[T^2] must be at least E[T]^2");
  }
  if (comm_rate && !(*comm_rate >= 0)) {
    throw std::invalid_argument("worker: communication rate must be non-negative");
  }
}

WorkerProfile job_profile(const WorkerSpec& spec, const polydot::CodeProfile& code, double omega) {
  if (!(spec.op_rate > 0)) throw std::invalid_argument("worker: op_rate must be positive");
  const double mean = code.C_ops / spec.op_rate;
  const double shape = code.K * omega;
  return WorkerProfile{mean, (1.0 + 1.0 / shape) * mean * mean, spec.comm_rate};
}

ScaledRates scale(const WorkerProfile& w, double lambda, double io_symbols) {
  ScaledRates r = scale(w, lambda);
  if (w.comm_rate) r.r_comm = *w.comm_rate / (io_symbols * lambda);
  return r;
}

ScaledRates scale(const WorkerProfile& w, double lambda) {
  if (!(lambda > 0)) throw std::invalid_argument("arrival rate must be positive");
  w.validate();
  ScaledRates r;
  r.r_comp = 1.0 / (lambda * w.mean_job_time);
  r.a = 0.5 * lambda * w.second_moment_job_time / w.mean_job_time;
  return r;
}

double LoadSplit::sum() const { return std::accumulate(phi.begin(), phi.end(), 0.0); }

double per_worker_response_time(const ScaledRates& w, double phi, double lambda) {
  if (phi >= w.r_comp) {
    throw UnstableQueueError("worker queue is unstable: phi " + std::to_string(phi) +
                             " >= r_comp " + std::to_string(w.r_comp));
  }
  return (w.a * phi / (w.r_comp - phi) + 1.0 / w.r_comp) / lambda;
}

double per_worker_response_time(const WorkerProfile& w, double phi, double lambda) {
  return per_worker_response_time(scale(w, lambda), phi, lambda);
}

ExecutionDelay avg_execution_time(std::span<const WorkerProfile> workers, const LoadSplit& split,
                                  double lambda, const polydot::CodeProfile& code) {
  require_same_size(workers.size(), split.phi.size(), "split");
  if (workers.empty()) throw std::invalid_argument("avg_execution_time: no workers");
  const double P = static_cast<double>(workers.size());
  ExecutionDelay d;
  for (std::size_t p = 0; p < workers.size(); ++p) {
    const ScaledRates r = scale(workers[p], lambda);
    const double phi = split.phi[p];
    if (phi >= r.r_comp) {
      throw UnstableQueueError("avg_execution_time: worker " + std::to_string(p) +
                               " is past saturation");
    }
    d.compute += (r.a * phi * phi / (r.r_comp - phi) + phi / r.r_comp) / lambda;
    if (workers[p].comm_rate) {
      d.comm_in += phi * code.I_in / *workers[p].comm_rate;
      d.comm_out += phi * code.I_out / *workers[p].comm_rate;
    }
  }
  d.compute /= P;
  d.comm_in /= P;
  d.comm_out /= P;
  d.encode = code.T_enc_mean;
  d.decode = code.T_dec_mean;
  return d;
}

double split_objective(std::span<const ScaledRates> rates, std::span<const double> phi) {
  require_same_size(rates.size(), phi.size(), "objective");
  double f = 0;
  for (std::size_t p = 0; p < rates.size(); ++p) {
    const auto& w = rates[p];
    if (phi[p] >= w.r_comp) return std::numeric_limits<double>::infinity();
    f += w.a * phi[p] * phi[p] / (w.r_comp - phi[p]) + (1.0 / w.r_comp + w.comm_cost()) * phi[p];
  }
  return f;
}

Validity check_validity(const WorkerProfile& w, const polydot::CodeProfile& code) {
  const double service_rate = 1.0 / w.mean_job_time;
  Validity v;
  v.encode = 1.0 / code.T_enc_mean >= service_rate;
  v.decode = 1.0 / code.T_dec_mean >= service_rate;
  v.inbound = !w.comm_rate || *w.comm_rate / code.I_in >= service_rate;
  v.outbound = !w.comm_rate || *w.comm_rate / code.I_out >= service_rate;
  return v;
}

std::vector<std::size_t> select_workers(std::span<const WorkerProfile> pool, double lambda,
                                        double theta, double omega,
                                        const polydot::CodeProfile& code) {
  if (theta < omega - 1.0) {
    throw std::invalid_argument("select_workers: theta must be at least omega - 1");
  }
  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  // stable sort keeps index order among equal service rates
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return pool[x].mean_job_time < pool[y].mean_job_time;
  });

  std::vector<std::size_t> chosen;
  double total = 0;
  for (std::size_t idx : order) {
    if (!is_valid_worker(pool[idx], code)) continue;
    chosen.push_back(idx);
    total += 1.0 / (lambda * pool[idx].mean_job_time);
    if (total >= 1.0 + theta) return chosen;
  }
  std::ostringstream msg;
  msg << "select_workers: valid workers reach r_comp sum " << total << " < " << 1.0 + theta;
  throw InfeasibleError(msg.str());
}

double phi_of_eta(const ScaledRates& w, double eta, double phi_lower) {
  const double xi = w.xi();
  if (!(eta > xi)) return phi_lower;
  const double v = w.r_comp * (1.0 - std::sqrt(w.a / (eta - xi)));
  return std::max(v, phi_lower);
}

LoadSplit optimal_split(std::span<const ScaledRates> rates, std::span<const double> phi_lower,
                        const SolverOptions& opts) {
  check_split_feasible(rates, phi_lower);

  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (std::size_t p = 0; p < rates.size(); ++p) {
    lo = std::min(lo, rates[p].xi());
    hi = std::max(hi, activation_threshold(rates[p], phi_lower[p]));
  }
  // Every worker is active above hi; widen until the split covers a job.
  double width = std::max(hi - lo, 1.0);
  while (sum_phi(rates, phi_lower, hi) < 1.0) {
    width *= 2.0;
    hi = lo + width;
    if (!std::isfinite(hi)) throw InfeasibleError("optimal_split: dual bracket diverged");
  }

  double eta = hi;
  double total = sum_phi(rates, phi_lower, eta);
  for (int it = 0; it < opts.max_iterations && std::abs(total - 1.0) > opts.tolerance; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const double s = sum_phi(rates, phi_lower, mid);
    if (s < 1.0) {
      lo = mid;
    } else {
      hi = mid;
    }
    eta = mid;
    total = s;
  }

  LoadSplit out;
  out.eta = eta;
  out.phi.reserve(rates.size());
  for (std::size_t p = 0; p < rates.size(); ++p) {
    const double cap = rates[p].r_comp - opts.saturation_margin;
    out.phi.push_back(std::min(phi_of_eta(rates[p], eta, phi_lower[p]), cap));
  }

  // One Newton step on eta moves the free coordinates by dphi/deta each and
  // puts the split on the simplex without breaking stationarity.
  const double residual = 1.0 - out.sum();
  std::vector<double> slope(rates.size(), 0.0);
  double total_slope = 0;
  for (std::size_t p = 0; p < rates.size(); ++p) {
    const auto& w = rates[p];
    if (out.phi[p] <= phi_lower[p] || !(w.a > 0)) continue;
    const double gap = w.r_comp - out.phi[p];
    slope[p] = gap * gap * gap / (2.0 * w.a * w.r_comp * w.r_comp);
    total_slope += slope[p];
  }
  if (residual != 0 && total_slope > 0) {
    const double step = residual / total_slope;
    for (std::size_t p = 0; p < rates.size(); ++p) {
      const double cap = rates[p].r_comp - opts.saturation_margin;
      out.phi[p] = std::clamp(out.phi[p] + slope[p] * step, phi_lower[p], cap);
    }
    out.eta = eta + step;
  }
  return out;
}

LoadSplit optimal_split_nocomm(std::span<const ScaledRates> rates,
                               std::span<const double> phi_lower, const SolverOptions& opts) {
  std::vector<ScaledRates> stripped(rates.begin(), rates.end());
  for (auto& r : stripped) r.r_comm.reset();
  return optimal_split(stripped, phi_lower, opts);
}

LoadSplit optimal_split_mm1_nocomm(std::span<const ScaledRates> rates, double phi_lower) {
  const std::size_t P = rates.size();
  if (P == 0) throw InfeasibleError("waterfilling: no workers");
  for (std::size_t p = 0; p < P; ++p) {
    const double r = rates[p].r_comp;
    if (p > 0 && r > rates[p - 1].r_comp) {
      throw std::invalid_argument("waterfilling: workers must be sorted by r_comp, descending");
    }
    if (std::abs(rates[p].a * r - 1.0) > 1e-9) {
      throw std::invalid_argument("waterfilling: worker moments are not M/M/1 (a != 1/r_comp)");
    }
    if (!(phi_lower < r)) throw InfeasibleError("waterfilling: lower bound reaches r_comp");
  }
  if (phi_lower * static_cast<double>(P) > 1.0) {
    throw InfeasibleError("waterfilling: lower bounds exceed one job");
  }

  auto threshold = [&](std::size_t p) {
    const double r = rates[p].r_comp;
    return r / ((r - phi_lower) * (r - phi_lower));
  };

  double sqrt_sum = 0;
  double rate_sum = 0;
  for (std::size_t active = 1; active <= P; ++active) {
    sqrt_sum += std::sqrt(rates[active - 1].r_comp);
    rate_sum += rates[active - 1].r_comp;
    const double denom = rate_sum + static_cast<double>(P - active) * phi_lower - 1.0;
    if (denom <= 0) continue;
    const double eta = (sqrt_sum / denom) * (sqrt_sum / denom);
    if (!(threshold(active - 1) < eta)) continue;
    if (active < P && !(eta <= threshold(active))) continue;

    LoadSplit out;
    out.eta = eta;
    out.phi.assign(P, phi_lower);
    for (std::size_t p = 0; p < active; ++p) {
      const double r = rates[p].r_comp;
      out.phi[p] = r * (1.0 - std::sqrt(1.0 / (eta * r)));
    }
    return out;
  }
  throw InfeasibleError("waterfilling: no consistent activation count");
}

double kkt_residual(const LoadSplit& split, std::span<const ScaledRates> rates,
                    std::span<const double> phi_lower) {
  require_same_size(rates.size(), split.phi.size(), "kkt split");
  require_same_size(rates.size(), phi_lower.size(), "kkt phi_lower");
  const std::size_t P = rates.size();

  auto gradient = [&](std::size_t p, double phi) {
    const double gap = rates[p].r_comp - phi;
    return rates[p].a * rates[p].r_comp * rates[p].r_comp / (gap * gap) + rates[p].xi();
  };

  double eta = 0;
  if (split.eta) {
    eta = *split.eta;
  } else {
    double gmin = std::numeric_limits<double>::infinity();
    double gmax = -std::numeric_limits<double>::infinity();
    double tmin = std::numeric_limits<double>::infinity();
    for (std::size_t p = 0; p < P; ++p) {
      tmin = std::min(tmin, activation_threshold(rates[p], phi_lower[p]));
      if (split.phi[p] > phi_lower[p] && split.phi[p] < rates[p].r_comp) {
        const double g = gradient(p, split.phi[p]);
        gmin = std::min(gmin, g);
        gmax = std::max(gmax, g);
      }
    }
    eta = std::isfinite(gmin) ? 0.5 * (gmin + gmax) : tmin;
  }

  double worst = std::abs(split.sum() - 1.0);
  for (std::size_t p = 0; p < P; ++p) {
    const double phi = split.phi[p];
    if (phi >= rates[p].r_comp) return std::numeric_limits<double>::infinity();
    worst = std::max(worst, phi_lower[p] - phi);
    const double delta = std::max(activation_threshold(rates[p], phi_lower[p]) - eta, 0.0);
    worst = std::max(worst, std::abs(gradient(p, phi) - delta - eta));
    worst = std::max(worst, std::abs(delta * (phi_lower[p] - phi)));
  }
  return worst;
}

CodeEvaluation evaluate_code(const PlanRequest& req, double s, double t) {
  CodeEvaluation ev;
  ev.s = s;
  ev.t = t;
  ev.profile = polydot::derive_profile_relaxed(req.N, s, t, req.omega, req.mu_enc, req.mu_dec);

  std::vector<WorkerProfile> profiles;
  profiles.reserve(req.pool.size());
  for (const auto& spec : req.pool) {
    profiles.push_back(job_profile(spec, ev.profile, req.omega));
    const Validity v = check_validity(profiles.back(), ev.profile);
    ev.encode_ok += v.encode;
    ev.inbound_ok += v.inbound;
    ev.outbound_ok += v.outbound;
    ev.decode_ok += v.decode;
    ev.valid += v.valid();
  }

  try {
    ev.selected = select_workers(profiles, req.lambda, req.theta, req.omega, ev.profile);
  } catch (const InfeasibleError& e) {
    ev.reason = e.what();
    return ev;
  }
  std::vector<ScaledRates> rates;
  for (std::size_t idx : ev.selected) {
    ev.selected_profiles.push_back(profiles[idx]);
    rates.push_back(scale(profiles[idx], req.lambda, ev.profile.I_in + ev.profile.I_out));
    ev.sum_r_comp += rates.back().r_comp;
  }
  const std::vector<double> lower(rates.size(), req.phi_lower);
  try {
    ev.split = optimal_split(rates, lower);
    ev.delay = avg_execution_time(ev.selected_profiles, ev.split, req.lambda, ev.profile);
  } catch (const InfeasibleError& e) {
    ev.reason = e.what();
    return ev;
  } catch (const UnstableQueueError& e) {
    ev.reason = e.what();
    return ev;
  }
  ev.feasible = true;
  return ev;
}

Plan plan_search(const PlanRequest& req) {
  if (req.codes.empty()) throw std::invalid_argument("plan_search: no code options");
  Plan plan;
  bool found = false;
  for (const auto& code : req.codes) {
    CodeEvaluation ev = evaluate_code(req, code.s, code.t);
    if (!ev.feasible) {
      plan.skipped.push_back(std::move(ev));
      continue;
    }
    if (!found || ev.delay.total() < plan.chosen.delay.total()) {
      plan.code = code;
      plan.chosen = std::move(ev);
      found = true;
    }
  }
  if (!found) {
    std::ostringstream msg;
    msg << "no feasible code among " << req.codes.size() << " options";
    throw NoPlanError(msg.str(), std::move(plan.skipped));
  }
  return plan;
}

}  // namespace sdcc
