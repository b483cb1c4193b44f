#pragma once

// Exponentially weighted estimates of a worker's per-task service moments,
// refreshed from completion feedback and lifted to whole-job moments.

#include <cstddef>
#include <span>

namespace sdcc {

enum class BlockMode {
  Sequential,    // fold the block one sample at a time
  PowerWeighted,  // weights (1-a)^(L-i) a^i on u(l-i+1), prior scaled by (1-a)^L
};

struct JobMoments {
  double mean = 0;
  double second = 0;
};

class MomentEstimate {
 public:
  MomentEstimate() = default;
  MomentEstimate(double mean, double second, double alpha, double beta);

  /// Seeds the estimate from declared job moments, treating the job as the
  /// sum of tasks_per_job i.i.d. task times.
  static MomentEstimate from_job_moments(double job_mean, double job_second, double tasks_per_job,
                                         double alpha, double beta);

  void update(double u);
  void update_block(std::span<const double> samples, BlockMode mode = BlockMode::Sequential);

  /// Moments of a job made of K * omega tasks run back to back:
  /// E[T] = n E, E[T^2] = n S + n(n-1) E^2 with n = K omega.
  JobMoments job_moments(double K, double omega) const;

  double mean() const { return mean_; }
  double second() const { return second_; }
  double alpha() const { return alpha_; }
  double beta() const { return beta_; }
  std::size_t sample_count() const { return count_; }

 private:
  double mean_ = 0;
  double second_ = 0;
  double alpha_ = 0.01;
  double beta_ = 0.01;
  std::size_t count_ = 0;
};

}  // namespace sdcc
