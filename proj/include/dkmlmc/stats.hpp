#pragma once

#include <cstdint>
#include <span>

namespace dkmlmc {

/// Single-pass mean/variance (optionally third and fourth central moments)
/// with a pairwise merge.
class MomentAccumulator {
public:
  explicit MomentAccumulator(bool higher_moments = false) : higher_(higher_moments) {}

  void push(double x);
  void merge(const MomentAccumulator& other);

  std::uint64_t count() const { return n_; }
  double mean() const { return mean_; }
  double m2() const { return m2_; }
  /// Unbiased sample variance; 0 for fewer than two samples.
  double variance() const { return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }
  /// sqrt(variance / count)
  double standard_error() const;

  bool has_higher_moments() const { return higher_; }
  double skewness() const;
  /// Plain (non-excess) kurtosis n M4 / M2².
  double kurtosis() const;

private:
  bool higher_ = false;
  std::uint64_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
  double m3_ = 0.0;
  double m4_ = 0.0;
};

MomentAccumulator merge(MomentAccumulator a, const MomentAccumulator& b);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
};

/// Ordinary least squares y ≈ slope·x + intercept (at least two points).
LinearFit fit_line(std::span<const double> x, std::span<const double> y);

/// Least-squares slope of log2(values) against levels; needs ≥ 3 points and
/// strictly positive values.
double fit_decay_slope(std::span<const double> levels, std::span<const double> values);

}  // namespace dkmlmc
