#include "rpmeas/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "rpmeas/error.hpp"
#include "rpmeas/parallel.hpp"

namespace rpmeas {

Moments::Moments(int dim)
    : dim_(dim),
      mean_(static_cast<std::size_t>(dim), 0.0),
      m2_(static_cast<std::size_t>(dim) * static_cast<std::size_t>(dim), 0.0) {}

void Moments::add(std::span<const double> x) {
  const auto d = static_cast<std::size_t>(dim_);
  ++n_;
  const double inv = 1.0 / static_cast<double>(n_);
  double delta[16];
  std::vector<double> heap;
  double* dl = delta;
  if (d > 16) {
    heap.resize(d);
    dl = heap.data();
  }
  for (std::size_t i = 0; i < d; ++i) {
    dl[i] = x[i] - mean_[i];
    mean_[i] += dl[i] * inv;
  }
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) m2_[i * d + j] += dl[i] * (x[j] - mean_[j]);
}

void Moments::merge(const Moments& other) {
  if (other.n_ == 0) return;
  if (n_ == 0) {
    *this = other;
    return;
  }
  const auto d = static_cast<std::size_t>(dim_);
  const double na = static_cast<double>(n_), nb = static_cast<double>(other.n_);
  const double n = na + nb;
  std::vector<double> delta(d);
  for (std::size_t i = 0; i < d; ++i) delta[i] = other.mean_[i] - mean_[i];
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j)
      m2_[i * d + j] += other.m2_[i * d + j] + delta[i] * delta[j] * na * nb / n;
  for (std::size_t i = 0; i < d; ++i) mean_[i] += delta[i] * nb / n;
  n_ += other.n_;
}

std::vector<double> Moments::covariance() const {
  std::vector<double> c(m2_.size(), 0.0);
  if (n_ < 2) return c;
  const double inv = 1.0 / static_cast<double>(n_ - 1);
  for (std::size_t k = 0; k < c.size(); ++k) c[k] = m2_[k] * inv;
  return c;
}

std::vector<double> Moments::mean_stderr() const {
  const auto d = static_cast<std::size_t>(dim_);
  const auto c = covariance();
  std::vector<double> se(d, 0.0);
  if (n_ == 0) return se;
  for (std::size_t i = 0; i < d; ++i) se[i] = std::sqrt(std::max(0.0, c[i * d + i]) / static_cast<double>(n_));
  return se;
}

void ScalarMoments::add(double x) {
  ++n_;
  const double delta = x - mean_;
  mean_ += delta / static_cast<double>(n_);
  m2_ += delta * (x - mean_);
}

void ScalarMoments::merge(const ScalarMoments& other) {
  if (other.n_ == 0) return;
  if (n_ == 0) {
    *this = other;
    return;
  }
  const double na = static_cast<double>(n_), nb = static_cast<double>(other.n_);
  const double delta = other.mean_ - mean_;
  m2_ += other.m2_ + delta * delta * na * nb / (na + nb);
  mean_ += delta * nb / (na + nb);
  n_ += other.n_;
}

double ScalarMoments::stderr_of_mean() const {
  return n_ > 0 ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0;
}

namespace {

double row_distance(const double* a, const double* b, int dim) {
  double s = 0.0;
  for (int k = 0; k < dim; ++k) {
    const double d = a[k] - b[k];
    s += d * d;
  }
  return std::sqrt(s);
}

// Energy statistic of the split (labels[i] == 0 vs 1) from a precomputed distance matrix.
double energy_from_matrix(const std::vector<double>& dist, const std::vector<std::uint8_t>& labels,
                          std::size_t n) {
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  std::size_t nx = 0;
  for (auto l : labels) nx += (l == 0);
  const std::size_t ny = n - nx;
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = dist.data() + i * n;
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = row[j];
      if (labels[i] != labels[j]) {
        sxy += v;
      } else if (labels[i] == 0) {
        sxx += v;
      } else {
        syy += v;
      }
    }
  }
  const double fx = static_cast<double>(nx), fy = static_cast<double>(ny);
  return 2.0 * sxy / (fx * fy) - 2.0 * sxx / (fx * fx) - 2.0 * syy / (fy * fy);
}

std::vector<double> stride_rows(std::span<const double> s, int dim, std::size_t max_rows) {
  const std::size_t n = s.size() / static_cast<std::size_t>(dim);
  if (n <= max_rows) return {s.begin(), s.end()};
  std::vector<double> out;
  out.reserve(max_rows * static_cast<std::size_t>(dim));
  for (std::size_t k = 0; k < max_rows; ++k) {
    const std::size_t i = k * n / max_rows;
    for (int c = 0; c < dim; ++c) out.push_back(s[i * static_cast<std::size_t>(dim) + static_cast<std::size_t>(c)]);
  }
  return out;
}

}  // namespace

double energy_distance(std::span<const double> a, std::span<const double> b, int dim) {
  const std::size_t na = a.size() / static_cast<std::size_t>(dim), nb = b.size() / static_cast<std::size_t>(dim);
  if (na == 0 || nb == 0) throw ValidationError("samples", "energy distance needs nonempty samples");
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < na; ++i)
    for (std::size_t j = 0; j < nb; ++j) sab += row_distance(&a[i * dim], &b[j * dim], dim);
  for (std::size_t i = 0; i < na; ++i)
    for (std::size_t j = i + 1; j < na; ++j) saa += row_distance(&a[i * dim], &a[j * dim], dim);
  for (std::size_t i = 0; i < nb; ++i)
    for (std::size_t j = i + 1; j < nb; ++j) sbb += row_distance(&b[i * dim], &b[j * dim], dim);
  const double fa = static_cast<double>(na), fb = static_cast<double>(nb);
  return 2.0 * sab / (fa * fb) - 2.0 * saa / (fa * fa) - 2.0 * sbb / (fb * fb);
}

PermutationTest energy_permutation_test(std::span<const double> a, std::span<const double> b,
                                        int dim, int n_permutations, double alpha,
                                        std::uint64_t seed, std::size_t max_per_sample) {
  const auto xa = stride_rows(a, dim, max_per_sample);
  const auto xb = stride_rows(b, dim, max_per_sample);
  const std::size_t na = xa.size() / static_cast<std::size_t>(dim), nb = xb.size() / static_cast<std::size_t>(dim);
  if (na < 2 || nb < 2) throw ValidationError("samples", "permutation test needs >= 2 rows per sample");
  const std::size_t n = na + nb;
  std::vector<double> pooled(xa);
  pooled.insert(pooled.end(), xb.begin(), xb.end());
  std::vector<double> dist(n * n, 0.0);
  parallel_for(n, [&](std::size_t i) {
    for (std::size_t j = 0; j < n; ++j)
      dist[i * n + j] = row_distance(&pooled[i * dim], &pooled[j * dim], dim);
  });
  std::vector<std::uint8_t> labels(n, 1);
  std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(na), 0);

  PermutationTest out;
  out.statistic = energy_from_matrix(dist, labels, n);
  // Each permutation gets its own engine so the result does not depend on scheduling.
  std::vector<double> perm_stats(static_cast<std::size_t>(n_permutations));
  parallel_for(perm_stats.size(), [&](std::size_t k) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(k)};
    std::mt19937_64 engine(seq);
    auto shuffled = labels;
    std::shuffle(shuffled.begin(), shuffled.end(), engine);
    perm_stats[k] = energy_from_matrix(dist, shuffled, n);
  });
  std::vector<double> sorted = perm_stats;
  std::sort(sorted.begin(), sorted.end());
  const auto q = static_cast<std::size_t>(std::ceil((1.0 - alpha) * static_cast<double>(sorted.size()))) - 1;
  out.threshold = sorted[std::min(q, sorted.size() - 1)];
  const auto exceed = std::count_if(perm_stats.begin(), perm_stats.end(),
                                    [&](double s) { return s >= out.statistic; });
  out.p_value = (1.0 + static_cast<double>(exceed)) / (1.0 + static_cast<double>(perm_stats.size()));
  out.passes = out.statistic <= out.threshold;
  return out;
}

LinearFit fit_line(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw ValidationError("fit", "need >= 2 matching points");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  if (sxx == 0.0) throw ValidationError("fit", "degenerate abscissae");
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  return f;
}

}  // namespace rpmeas
