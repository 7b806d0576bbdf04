#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "rpmeas/integrate.hpp"
#include "rpmeas/model.hpp"
#include "rpmeas/noise.hpp"
#include "rpmeas/stats.hpp"

namespace rpmeas {

struct MeasureOptions {
  int n_phases = 8;
  int burn_in_periods = 50;
  int record_periods = 4;
  std::uint64_t stream_base = streams::kMeasure;
};

// Per-phase sample clouds on the Poincare sections t_k = k tau / K, recorded over M
// consecutive periods after burn-in and pooled across periods.
struct EmpiricalPeriodicMeasure {
  int dim = 0;
  double period = 1.0;
  std::vector<double> phases;        // t_k
  std::size_t n_paths = 0;
  int record_periods = 0;
  int burn_in_periods = 0;
  std::uint64_t seed = 0;
  std::vector<Moments> moments;      // pooled over periods, one per phase
  std::vector<double> samples;       // [period][phase][path][dim]
  std::vector<double> final_states;  // phase-0 cloud one period after the last record
  bool burn_in_ok = true;            // first and last recorded period agree at phase 0
  double burn_in_drift = 0.0;        // max_j |mean difference| / stderr

  std::size_t n_phases() const { return phases.size(); }
  std::span<const double> cloud(int period_index, std::size_t phase) const;
  // All M*N samples of one phase, period-major.
  std::vector<double> pooled_cloud(std::size_t phase) const;
  std::vector<double> mean(std::size_t phase) const { return moments[phase].mean(); }
  std::vector<double> covariance(std::size_t phase) const { return moments[phase].covariance(); }
};

EmpiricalPeriodicMeasure estimate_periodic_measure(const PeriodicSdeModel& model,
                                                   const InitialCondition& initial,
                                                   std::size_t n_paths, const NoiseSpec& spec,
                                                   const MeasureOptions& options = {});

struct AveragedMeasure {
  std::size_t count = 0;
  std::vector<double> mean;
  std::vector<double> covariance;
};

// Equal-weight pool over all phases.
AveragedMeasure averaged_measure(const EmpiricalPeriodicMeasure& measure);

struct PeriodicityDistance {
  double mean_difference = 0.0;        // |m_j - m_j+1| / sqrt(tr Sigma)
  double covariance_difference = 0.0;  // ||Sigma_j - Sigma_j+1||_F / ||Sigma_j||_F
  double energy = 0.0;
  double energy_threshold = 0.0;       // 95% permutation quantile
  double p_value = 1.0;
  double value = 0.0;                  // max of the three distances
  bool passes = true;                  // permutation test passes
};

// Compares the phase-k clouds of recorded periods j and j + 1 (default: last two).
PeriodicityDistance periodicity_distance(const EmpiricalPeriodicMeasure& measure, std::size_t phase,
                                         int period_j = -1, int n_permutations = 200,
                                         double alpha = 0.05, std::uint64_t seed = 0,
                                         std::size_t max_per_sample = 1000);

struct Box {
  std::vector<double> lo;
  std::vector<double> hi;
  bool contains(std::span<const double> x) const;
};

struct KrylovCurve {
  std::vector<double> reference;              // mu_t(A) from the measure, per box
  std::vector<std::vector<double>> deviation; // [box][N-1]: |(1/N) sum_n P(s,x; t + n tau, A) - mu_t(A)|
};

// Cesaro averages of indicator frequencies of N_paths trajectories started at x_start at
// time 0, sampled at t_k + n tau for n = 0..n_periods-1.
KrylovCurve krylov_diagnostic(const PeriodicSdeModel& model, std::span<const double> x_start,
                              const EmpiricalPeriodicMeasure& measure, std::size_t phase,
                              const std::vector<Box>& boxes, int n_periods, std::size_t n_paths,
                              const NoiseSpec& spec, std::uint64_t stream_base = streams::kDiagnostic);

struct ErgodicAverage {
  std::vector<double> running;  // running mean after n + 1 snapshots
  double value = 0.0;
  double std_error = 0.0;       // batch-means estimate
};

// (1/N) sum_n phi(t_k, X_{t_k + n tau}) along one path from x_start, after burn_in periods.
ErgodicAverage ergodic_average_observable(const PeriodicSdeModel& model, const Observable& observable,
                                          std::span<const double> x_start, double phase_time,
                                          int n_periods, const NoiseSpec& spec, int burn_in_periods = 10,
                                          std::uint64_t stream = streams::kDiagnostic);

// Gaussian surrogate N(m, Sigma) of one phase cloud.
class GaussianDensity {
 public:
  GaussianDensity(std::vector<double> mean, std::vector<double> covariance);

  int dim() const { return static_cast<int>(mean_.size()); }
  const std::vector<double>& mean() const { return mean_; }
  const Eigen::MatrixXd& covariance() const { return cov_; }
  const Eigen::MatrixXd& precision() const { return prec_; }
  double value(std::span<const double> x) const;
  void gradient(std::span<const double> x, std::span<double> out) const;
  // grad rho / rho = -Sigma^{-1} (x - m)
  void score(std::span<const double> x, std::span<double> out) const;

 private:
  std::vector<double> mean_;
  Eigen::MatrixXd cov_;
  Eigen::MatrixXd prec_;
  double log_norm_ = 0.0;
};

// Throws DegenerateError when the covariance is singular (condition number >= 1e12).
GaussianDensity density_gaussian(const EmpiricalPeriodicMeasure& measure, std::size_t phase);

enum class Bandwidth { Scott, Silverman };

// Product-Gaussian kernel density estimate with analytic gradient and Hessian.
class KernelDensity {
 public:
  KernelDensity(int dim, std::vector<double> centers, Bandwidth rule = Bandwidth::Scott,
                std::size_t max_centers = 2000);

  int dim() const { return d_; }
  const std::vector<double>& bandwidth() const { return h_; }
  std::size_t n_centers() const { return n_; }
  double value(std::span<const double> x) const;
  // value, gradient (d) and Hessian (d x d, row-major) in one pass.
  double evaluate(std::span<const double> x, std::span<double> grad, std::span<double> hess) const;

 private:
  int d_;
  std::size_t n_;
  std::vector<double> centers_;
  std::vector<double> h_;
  double norm_ = 1.0;
};

KernelDensity density_kde(const EmpiricalPeriodicMeasure& measure, std::size_t phase,
                          Bandwidth rule = Bandwidth::Scott, std::size_t max_centers = 2000);

}  // namespace rpmeas
