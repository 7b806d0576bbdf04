#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace rpmeas {

// Streaming mean / covariance (Welford) with Chan's pairwise merge.
class Moments {
 public:
  Moments() = default;
  explicit Moments(int dim);

  void add(std::span<const double> x);
  void merge(const Moments& other);

  int dim() const { return dim_; }
  std::size_t count() const { return n_; }
  const std::vector<double>& mean() const { return mean_; }
  // Unbiased sample covariance, row-major d x d.
  std::vector<double> covariance() const;
  // sqrt(diag(cov) / n)
  std::vector<double> mean_stderr() const;

 private:
  int dim_ = 0;
  std::size_t n_ = 0;
  std::vector<double> mean_;
  std::vector<double> m2_;
};

class ScalarMoments {
 public:
  void add(double x);
  void merge(const ScalarMoments& other);
  std::size_t count() const { return n_; }
  double mean() const { return mean_; }
  double variance() const { return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }
  double stderr_of_mean() const;

 private:
  std::size_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

// Two-sample energy statistic  2 E|X-Y| - E|X-X'| - E|Y-Y'|  (V-statistic form) for
// row-major samples of dimension d.
double energy_distance(std::span<const double> a, std::span<const double> b, int dim);

struct PermutationTest {
  double statistic = 0.0;
  double threshold = 0.0;  // (1 - alpha) quantile of the permutation distribution
  double p_value = 1.0;
  bool passes = true;      // statistic <= threshold
};

// Permutation test of equal distributions with the energy statistic. Pools at most
// `max_per_sample` rows from each sample (evenly strided) to bound the O(n^2) cost.
PermutationTest energy_permutation_test(std::span<const double> a, std::span<const double> b,
                                        int dim, int n_permutations, double alpha,
                                        std::uint64_t seed, std::size_t max_per_sample = 1000);

// Least-squares slope and intercept of y on x.
struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
};
LinearFit fit_line(std::span<const double> x, std::span<const double> y);

}  // namespace rpmeas
