#include "sdcc/moment_estimator.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sdcc {

namespace {

void check_factor(double f, const char* name) {
  if (!(f > 0 && f <= 1)) throw std::invalid_argument(std::string(name) + " must lie in (0, 1]");
}

}  // namespace

MomentEstimate::MomentEstimate(double mean, double second, double alpha, double beta)
    : mean_(mean), second_(second), alpha_(alpha), beta_(beta) {
  check_factor(alpha, "alpha");
  check_factor(beta, "beta");
  if (mean < 0 || second < 0) throw std::invalid_argument("moment estimates must be non-negative");
}

MomentEstimate MomentEstimate::from_job_moments(double job_mean, double job_second,
                                                double tasks_per_job, double alpha, double beta) {
  if (!(tasks_per_job >= 1)) throw std::invalid_argument("tasks_per_job must be at least 1");
  const double n = tasks_per_job;
  const double task_mean = job_mean / n;
  const double task_second =
      std::max((job_second - n * (n - 1) * task_mean * task_mean) / n, task_mean * task_mean);
  return MomentEstimate(task_mean, task_second, alpha, beta);
}

void MomentEstimate::update(double u) {
  if (!(u >= 0)) throw std::invalid_argument("observed task time must be non-negative");
  mean_ = (1 - alpha_) * mean_ + alpha_ * u;
  second_ = (1 - beta_) * second_ + beta_ * u * u;
  ++count_;
}

void MomentEstimate::update_block(std::span<const double> samples, BlockMode mode) {
  if (mode == BlockMode::Sequential) {
    for (double u : samples) update(u);
    return;
  }
  for (double u : samples) {
    if (!(u >= 0)) throw std::invalid_argument("observed task time must be non-negative");
  }
  const std::size_t L = samples.size();
  if (L == 0) return;
  double m = std::pow(1 - alpha_, static_cast<double>(L)) * mean_;
  double s = std::pow(1 - beta_, static_cast<double>(L)) * second_;
  for (std::size_t i = 1; i <= L; ++i) {
    const double u = samples[L - i];  // u(l - i + 1), newest first
    const double li = static_cast<double>(L - i);
    const double ii = static_cast<double>(i);
    m += std::pow(1 - alpha_, li) * std::pow(alpha_, ii) * u;
    s += std::pow(1 - beta_, li) * std::pow(beta_, ii) * u * u;
  }
  mean_ = m;
  second_ = s;
  count_ += L;
}

JobMoments MomentEstimate::job_moments(double K, double omega) const {
  const double n = K * omega;
  if (!(n >= 1)) throw std::invalid_argument("job_moments: K * omega must be at least 1");
  JobMoments jm;
  jm.mean = n * mean_;
  jm.second = std::max(n * second_ + n * (n - 1) * mean_ * mean_, jm.mean * jm.mean);
  return jm;
}

}  // namespace sdcc
