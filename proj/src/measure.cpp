#include "rpmeas/measure.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "rpmeas/error.hpp"
#include "rpmeas/parallel.hpp"

namespace rpmeas {

namespace {

std::vector<std::int64_t> phase_offsets(const TimeGrid& grid, int n_phases) {
  const auto k = grid.steps_per_period();
  if (n_phases <= 0 || k % n_phases != 0)
    throw GridError("phases: " + std::to_string(n_phases) + " does not divide the " +
                    std::to_string(k) + " steps of one period");
  std::vector<std::int64_t> out;
  for (int j = 0; j < n_phases; ++j) out.push_back(j * (k / n_phases));
  return out;
}

bool finite_row(std::span<const double> x) {
  for (double v : x)
    if (!std::isfinite(v)) return false;
  return true;
}

std::vector<double> finite_rows(std::span<const double> rows, int dim) {
  std::vector<double> out;
  out.reserve(rows.size());
  const auto d = static_cast<std::size_t>(dim);
  for (std::size_t i = 0; i + d <= rows.size(); i += d) {
    auto r = rows.subspan(i, d);
    if (finite_row(r)) out.insert(out.end(), r.begin(), r.end());
  }
  return out;
}

Moments moments_of(std::span<const double> rows, int dim) {
  Moments m(dim);
  const auto d = static_cast<std::size_t>(dim);
  for (std::size_t i = 0; i + d <= rows.size(); i += d) {
    auto r = rows.subspan(i, d);
    if (finite_row(r)) m.add(r);
  }
  return m;
}

}  // namespace

std::span<const double> EmpiricalPeriodicMeasure::cloud(int period_index, std::size_t phase) const {
  const auto d = static_cast<std::size_t>(dim);
  const std::size_t block = n_paths * d;
  const std::size_t offset = (static_cast<std::size_t>(period_index) * n_phases() + phase) * block;
  return {samples.data() + offset, block};
}

std::vector<double> EmpiricalPeriodicMeasure::pooled_cloud(std::size_t phase) const {
  std::vector<double> out;
  for (int j = 0; j < record_periods; ++j) {
    const auto rows = finite_rows(cloud(j, phase), dim);
    out.insert(out.end(), rows.begin(), rows.end());
  }
  return out;
}

EmpiricalPeriodicMeasure estimate_periodic_measure(const PeriodicSdeModel& model,
                                                   const InitialCondition& initial,
                                                   std::size_t n_paths, const NoiseSpec& spec,
                                                   const MeasureOptions& options) {
  if (n_paths < 100) throw ValidationError("n_paths", "periodic measure needs N >= 100");
  if (options.record_periods < 1) throw ValidationError("record_periods", "must be at least 1");
  if (options.burn_in_periods < 0) throw ValidationError("burn_in_periods", "must be nonnegative");
  if (initial.dim != model.dim || initial.rows() == 0)
    throw ValidationError("initial", "initial states do not match the model dimension");
  const TimeGrid grid(spec.dt, model.period);
  const auto offsets = phase_offsets(grid, options.n_phases);
  const auto k = grid.steps_per_period();
  const auto d = static_cast<std::size_t>(model.dim);
  const std::size_t n_phases = offsets.size();
  const auto m_periods = static_cast<std::size_t>(options.record_periods);

  EmpiricalPeriodicMeasure out;
  out.dim = model.dim;
  out.period = model.period;
  for (auto o : offsets) out.phases.push_back(grid.time(o));
  out.n_paths = n_paths;
  out.record_periods = options.record_periods;
  out.burn_in_periods = options.burn_in_periods;
  out.seed = spec.seed;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  out.samples.assign(m_periods * n_phases * n_paths * d, nan);
  out.final_states.assign(n_paths * d, nan);
  NoiseSpec s = spec;
  s.noise_dim = model.noise_dim;

  std::vector<unsigned char> diverged(n_paths, 0);
  parallel_for(n_paths, [&](std::size_t i) {
    Stepper stepper(model, grid);
    NoiseStream stream(s, options.stream_base + i);
    std::vector<double> x(initial.row(i).begin(), initial.row(i).end());
    std::int64_t at = 0;
    try {
      for (std::size_t j = 0; j < m_periods; ++j) {
        for (std::size_t p = 0; p < n_phases; ++p) {
          const std::int64_t target = (options.burn_in_periods + static_cast<std::int64_t>(j)) * k + offsets[p];
          stepper.advance(x, at, target, StreamNoise{stream});
          at = target;
          std::copy(x.begin(), x.end(),
                    out.samples.begin() + static_cast<std::ptrdiff_t>(((j * n_phases + p) * n_paths + i) * d));
        }
      }
      const std::int64_t end = (options.burn_in_periods + static_cast<std::int64_t>(m_periods)) * k;
      stepper.advance(x, at, end, StreamNoise{stream});
      std::copy(x.begin(), x.end(), out.final_states.begin() + static_cast<std::ptrdiff_t>(i * d));
    } catch (const DivergenceError&) {
      diverged[i] = 1;
      for (std::size_t j = 0; j < m_periods * n_phases; ++j)
        std::fill_n(out.samples.begin() + static_cast<std::ptrdiff_t>((j * n_paths + i) * d), d, nan);
      std::fill_n(out.final_states.begin() + static_cast<std::ptrdiff_t>(i * d), d, nan);
    }
  });
  std::size_t n_div = 0;
  for (auto v : diverged) n_div += v;
  check_divergence_fraction(n_div, n_paths, "estimate_periodic_measure");
  if (n_div > 0) out.final_states = finite_rows(out.final_states, model.dim);

  for (std::size_t p = 0; p < n_phases; ++p) {
    Moments pooled(model.dim);
    for (std::size_t j = 0; j < m_periods; ++j)
      pooled.merge(moments_of(out.cloud(static_cast<int>(j), p), model.dim));
    out.moments.push_back(std::move(pooled));
  }
  if (m_periods >= 2) {
    const Moments first = moments_of(out.cloud(0, 0), model.dim);
    const Moments last = moments_of(out.cloud(static_cast<int>(m_periods - 1), 0), model.dim);
    const auto sa = first.mean_stderr(), sb = last.mean_stderr();
    for (std::size_t c = 0; c < d; ++c) {
      const double se = std::sqrt(sa[c] * sa[c] + sb[c] * sb[c]);
      const double diff = std::abs(first.mean()[c] - last.mean()[c]);
      out.burn_in_drift = std::max(out.burn_in_drift, se > 0.0 ? diff / se : (diff > 0.0 ? 1e300 : 0.0));
    }
    out.burn_in_ok = out.burn_in_drift <= 4.0;
  }
  return out;
}

AveragedMeasure averaged_measure(const EmpiricalPeriodicMeasure& measure) {
  Moments pooled(measure.dim);
  for (const auto& m : measure.moments) pooled.merge(m);
  return AveragedMeasure{pooled.count(), pooled.mean(), pooled.covariance()};
}

PeriodicityDistance periodicity_distance(const EmpiricalPeriodicMeasure& measure, std::size_t phase,
                                         int period_j, int n_permutations, double alpha,
                                         std::uint64_t seed, std::size_t max_per_sample) {
  if (measure.record_periods < 2)
    throw ValidationError("record_periods", "periodicity distance needs at least 2 recorded periods");
  if (phase >= measure.n_phases()) throw ValidationError("phase", "out of range");
  if (period_j < 0) period_j = measure.record_periods - 2;
  if (period_j + 1 >= measure.record_periods) throw ValidationError("period_j", "out of range");
  const int d = measure.dim;
  const auto a = finite_rows(measure.cloud(period_j, phase), d);
  const auto b = finite_rows(measure.cloud(period_j + 1, phase), d);
  const Moments ma = moments_of(a, d), mb = moments_of(b, d);
  const auto ca = ma.covariance(), cb = mb.covariance();

  PeriodicityDistance out;
  double trace = 0.0, mean_diff = 0.0, cov_diff = 0.0, cov_norm = 0.0;
  for (int i = 0; i < d; ++i) {
    trace += ca[static_cast<std::size_t>(i * d + i)];
    const double dm = ma.mean()[static_cast<std::size_t>(i)] - mb.mean()[static_cast<std::size_t>(i)];
    mean_diff += dm * dm;
  }
  for (std::size_t i = 0; i < ca.size(); ++i) {
    cov_diff += (ca[i] - cb[i]) * (ca[i] - cb[i]);
    cov_norm += ca[i] * ca[i];
  }
  // Identical point masses have zero scale; report exact zeros rather than 0/0.
  out.mean_difference = mean_diff == 0.0 ? 0.0 : std::sqrt(mean_diff / std::max(trace, 1e-300));
  out.covariance_difference = cov_diff == 0.0 ? 0.0 : std::sqrt(cov_diff / std::max(cov_norm, 1e-300));
  const auto test = energy_permutation_test(a, b, d, n_permutations, alpha, seed, max_per_sample);
  out.energy = test.statistic;
  out.energy_threshold = test.threshold;
  out.p_value = test.p_value;
  out.passes = test.passes;
  out.value = std::max({out.mean_difference, out.covariance_difference, out.energy});
  return out;
}

bool Box::contains(std::span<const double> x) const {
  for (std::size_t i = 0; i < x.size(); ++i)
    if (x[i] < lo[i] || x[i] > hi[i]) return false;
  return true;
}

KrylovCurve krylov_diagnostic(const PeriodicSdeModel& model, std::span<const double> x_start,
                              const EmpiricalPeriodicMeasure& measure, std::size_t phase,
                              const std::vector<Box>& boxes, int n_periods, std::size_t n_paths,
                              const NoiseSpec& spec, std::uint64_t stream_base) {
  if (phase >= measure.n_phases()) throw ValidationError("phase", "out of range");
  if (n_periods < 1) throw ValidationError("n_periods", "must be positive");
  const auto d = static_cast<std::size_t>(model.dim);
  for (const auto& b : boxes)
    if (b.lo.size() != d || b.hi.size() != d) throw ValidationError("boxes", "dimension mismatch");
  const TimeGrid grid(spec.dt, model.period);
  const auto k = grid.steps_per_period();
  const auto offset = grid.exact(measure.phases[phase]);
  const std::size_t n_boxes = boxes.size();
  const auto np = static_cast<std::size_t>(n_periods);

  KrylovCurve out;
  const auto ref = measure.pooled_cloud(phase);
  const std::size_t n_ref = ref.size() / d;
  for (const auto& b : boxes) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n_ref; ++i) hits += b.contains(std::span<const double>(ref.data() + i * d, d));
    out.reference.push_back(static_cast<double>(hits) / static_cast<double>(n_ref));
  }

  NoiseSpec s = spec;
  s.noise_dim = model.noise_dim;
  using Counts = std::vector<std::size_t>;  // [period][box]
  auto counts = block_reduce<Counts>(
      n_paths, 16, [&] { return Counts(np * n_boxes, 0); },
      [&](Counts& acc, std::size_t i) {
        Stepper stepper(model, grid);
        NoiseStream stream(s, stream_base + i);
        std::vector<double> x(x_start.begin(), x_start.end());
        std::int64_t at = 0;
        try {
          for (std::size_t n = 0; n < np; ++n) {
            const std::int64_t target = static_cast<std::int64_t>(n) * k + offset;
            stepper.advance(x, at, target, StreamNoise{stream});
            at = target;
            for (std::size_t b = 0; b < n_boxes; ++b) acc[n * n_boxes + b] += boxes[b].contains(x);
          }
        } catch (const DivergenceError&) {
          // counted as outside every box from here on
        }
      },
      [](Counts& into, Counts&& from) {
        for (std::size_t j = 0; j < into.size(); ++j) into[j] += from[j];
      });

  out.deviation.assign(n_boxes, {});
  for (std::size_t b = 0; b < n_boxes; ++b) {
    double running = 0.0;
    for (std::size_t n = 0; n < np; ++n) {
      running += static_cast<double>(counts[n * n_boxes + b]) / static_cast<double>(n_paths);
      out.deviation[b].push_back(std::abs(running / static_cast<double>(n + 1) - out.reference[b]));
    }
  }
  return out;
}

ErgodicAverage ergodic_average_observable(const PeriodicSdeModel& model, const Observable& observable,
                                          std::span<const double> x_start, double phase_time,
                                          int n_periods, const NoiseSpec& spec, int burn_in_periods,
                                          std::uint64_t stream) {
  if (n_periods < 1) throw ValidationError("n_periods", "must be positive");
  const TimeGrid grid(spec.dt, model.period);
  const auto k = grid.steps_per_period();
  const auto offset = grid.exact(phase_time);
  NoiseSpec s = spec;
  s.noise_dim = model.noise_dim;
  Stepper stepper(model, grid);
  NoiseStream noise(s, stream);
  std::vector<double> x(x_start.begin(), x_start.end());
  std::vector<double> values;
  std::int64_t at = 0;
  const double tc = grid.coefficient_time(offset);
  for (int n = 0; n < n_periods; ++n) {
    const std::int64_t target = static_cast<std::int64_t>(burn_in_periods + n) * k + offset;
    stepper.advance(x, at, target, StreamNoise{noise});
    at = target;
    values.push_back(observable(tc, x));
  }
  ErgodicAverage out;
  double sum = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    sum += values[i];
    out.running.push_back(sum / static_cast<double>(i + 1));
  }
  out.value = out.running.back();
  // Batch means over 20 contiguous batches absorb the serial correlation of snapshots.
  const std::size_t n_batches = std::min<std::size_t>(20, values.size());
  const std::size_t len = values.size() / n_batches;
  ScalarMoments batches;
  for (std::size_t b = 0; b < n_batches; ++b) {
    double acc = 0.0;
    for (std::size_t i = b * len; i < (b + 1) * len; ++i) acc += values[i];
    batches.add(acc / static_cast<double>(len));
  }
  out.std_error = n_batches > 1 ? batches.stderr_of_mean() : 0.0;
  return out;
}

GaussianDensity::GaussianDensity(std::vector<double> mean, std::vector<double> covariance)
    : mean_(std::move(mean)) {
  const auto d = static_cast<Eigen::Index>(mean_.size());
  if (d == 0 || covariance.size() != static_cast<std::size_t>(d * d))
    throw ValidationError("covariance", "shape does not match the mean");
  cov_ = Eigen::Map<const Eigen::MatrixXd>(covariance.data(), d, d);
  cov_ = 0.5 * (cov_ + cov_.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov_);
  const auto& ev = eig.eigenvalues();
  const double lo = ev.minCoeff(), hi = ev.maxCoeff();
  double m2 = 1.0;
  for (double v : mean_) m2 = std::max(m2, v * v);
  // zero spread relative to the location scale counts as singular too
  if (!(lo > 1e-12 * m2) || hi / lo >= 1e12)
    throw DegenerateError("singular covariance (condition number >= 1e12); use density_kde or regularize");
  prec_ = eig.eigenvectors() * ev.cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
  log_norm_ = -0.5 * (static_cast<double>(d) * std::log(2.0 * std::numbers::pi) + ev.array().log().sum());
}

double GaussianDensity::value(std::span<const double> x) const {
  const auto d = static_cast<Eigen::Index>(mean_.size());
  Eigen::VectorXd z(d);
  for (Eigen::Index i = 0; i < d; ++i) z(i) = x[static_cast<std::size_t>(i)] - mean_[static_cast<std::size_t>(i)];
  return std::exp(log_norm_ - 0.5 * z.dot(prec_ * z));
}

void GaussianDensity::score(std::span<const double> x, std::span<double> out) const {
  const auto d = static_cast<Eigen::Index>(mean_.size());
  Eigen::VectorXd z(d);
  for (Eigen::Index i = 0; i < d; ++i) z(i) = x[static_cast<std::size_t>(i)] - mean_[static_cast<std::size_t>(i)];
  const Eigen::VectorXd g = -(prec_ * z);
  for (Eigen::Index i = 0; i < d; ++i) out[static_cast<std::size_t>(i)] = g(i);
}

void GaussianDensity::gradient(std::span<const double> x, std::span<double> out) const {
  score(x, out);
  const double rho = value(x);
  for (auto& v : out) v *= rho;
}

GaussianDensity density_gaussian(const EmpiricalPeriodicMeasure& measure, std::size_t phase) {
  if (phase >= measure.n_phases()) throw ValidationError("phase", "out of range");
  return GaussianDensity(measure.mean(phase), measure.covariance(phase));
}

KernelDensity::KernelDensity(int dim, std::vector<double> centers, Bandwidth rule, std::size_t max_centers)
    : d_(dim) {
  const auto d = static_cast<std::size_t>(dim);
  if (dim <= 0 || centers.empty() || centers.size() % d != 0)
    throw ValidationError("samples", "kernel centers must be a nonempty multiple of dim");
  centers = finite_rows(centers, dim);
  std::size_t n = centers.size() / d;
  if (n == 0) throw ValidationError("samples", "no finite kernel centers");
  if (max_centers > 0 && n > max_centers) {
    std::vector<double> sub;
    sub.reserve(max_centers * d);
    for (std::size_t k = 0; k < max_centers; ++k) {
      const std::size_t i = k * n / max_centers;
      sub.insert(sub.end(), centers.begin() + static_cast<std::ptrdiff_t>(i * d),
                 centers.begin() + static_cast<std::ptrdiff_t>((i + 1) * d));
    }
    centers = std::move(sub);
    n = max_centers;
  }
  n_ = n;
  centers_ = std::move(centers);
  const Moments m = moments_of(centers_, dim);
  const auto cov = m.covariance();
  const double nd = static_cast<double>(n), dd = static_cast<double>(dim);
  double factor = std::pow(nd, -1.0 / (dd + 4.0));
  if (rule == Bandwidth::Silverman) factor *= std::pow(4.0 / (dd + 2.0), 1.0 / (dd + 4.0));
  h_.resize(d);
  norm_ = 1.0 / nd;
  for (std::size_t j = 0; j < d; ++j) {
    const double sd = std::sqrt(std::max(0.0, cov[j * d + j]));
    // A zero-spread coordinate keeps a tiny bandwidth so the estimate concentrates on the point.
    h_[j] = std::max(sd * factor, 1e-8 * std::max(1.0, std::abs(m.mean()[j])));
    norm_ /= h_[j] * std::sqrt(2.0 * std::numbers::pi);
  }
}

double KernelDensity::value(std::span<const double> x) const {
  const auto d = static_cast<std::size_t>(d_);
  double sum = 0.0;
  for (std::size_t i = 0; i < n_; ++i) {
    double q = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double u = (x[j] - centers_[i * d + j]) / h_[j];
      q += u * u;
    }
    sum += std::exp(-0.5 * q);
  }
  return norm_ * sum;
}

double KernelDensity::evaluate(std::span<const double> x, std::span<double> grad, std::span<double> hess) const {
  const auto d = static_cast<std::size_t>(d_);
  std::fill(grad.begin(), grad.end(), 0.0);
  std::fill(hess.begin(), hess.end(), 0.0);
  std::vector<double> v(d);
  double sum = 0.0;
  for (std::size_t i = 0; i < n_; ++i) {
    double q = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double u = (x[j] - centers_[i * d + j]) / h_[j];
      q += u * u;
      v[j] = -u / h_[j];  // d/dx_j of log kernel
    }
    const double w = std::exp(-0.5 * q);
    sum += w;
    for (std::size_t j = 0; j < d; ++j) {
      grad[j] += w * v[j];
      for (std::size_t l = 0; l < d; ++l) hess[j * d + l] += w * v[j] * v[l];
      hess[j * d + j] -= w / (h_[j] * h_[j]);
    }
  }
  for (auto& g : grad) g *= norm_;
  for (auto& h : hess) h *= norm_;
  return norm_ * sum;
}

KernelDensity density_kde(const EmpiricalPeriodicMeasure& measure, std::size_t phase, Bandwidth rule,
                          std::size_t max_centers) {
  if (phase >= measure.n_phases()) throw ValidationError("phase", "out of range");
  auto cloud = measure.pooled_cloud(phase);
  if (cloud.size() / static_cast<std::size_t>(measure.dim) < 500)
    throw ValidationError("n_paths", "density_kde needs at least 500 samples");
  return KernelDensity(measure.dim, std::move(cloud), rule, max_centers);
}

}  // namespace rpmeas
