#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <random>
#include <span>
#include <vector>

#include <boost/random/normal_distribution.hpp>

namespace rpmeas {

struct NoiseSpec {
  std::uint64_t seed = 0;
  double dt = 1e-3;
  int noise_dim = 1;
  double origin = 0.0;  // grid time of the first increment
};

// Grid index of time t on the lattice {n dt}; throws GridError when t is off-grid.
std::int64_t grid_index(double t, double dt);

// Sequential N(0, dt I_m) increments for one (seed, stream) pair. The engine is
// seeded through std::seed_seq from the seed and stream words, so streams are
// reproducible and do not share state.
class NoiseStream {
 public:
  NoiseStream(const NoiseSpec& spec, std::uint64_t stream_index);
  NoiseStream(const NoiseSpec& spec, std::uint64_t stream_index, std::uint64_t substream);

  void next(std::span<double> dw);
  double standard_normal() { return normal_(engine_); }
  int noise_dim() const { return m_; }

 private:
  std::mt19937_64 engine_;
  boost::random::normal_distribution<double> normal_;
  double sqrt_dt_;
  int m_;
};

// Brownian increments on the grid origin + j dt, j = 0..n_steps-1. Storage is
// shared and immutable; shifting only moves the view, which realizes the Wiener
// shift theta_{k dt} exactly.
class WienerPath {
 public:
  WienerPath() = default;
  WienerPath(double origin, double dt, int noise_dim, std::vector<double> increments);

  double origin() const { return origin_; }
  double dt() const { return dt_; }
  int noise_dim() const { return m_; }
  std::size_t n_steps() const { return total_ - begin_; }
  std::int64_t first_index() const { return first_index_; }
  // Grid time just past the last increment.
  double end_time() const { return origin_ + static_cast<double>(n_steps()) * dt_; }

  std::span<const double> increment(std::size_t j) const {
    return {data_->data() + (begin_ + j) * static_cast<std::size_t>(m_),
            static_cast<std::size_t>(m_)};
  }
  // Increment covering [n dt, (n+1) dt] for absolute grid index n.
  std::span<const double> increment_at_index(std::int64_t n) const;
  bool covers(std::int64_t first, std::int64_t last) const {
    return first >= first_index_ && last <= first_index_ + static_cast<std::int64_t>(n_steps());
  }

  friend WienerPath shift(const WienerPath& path, std::int64_t k_steps);

 private:
  std::shared_ptr<const std::vector<double>> data_;
  std::size_t begin_ = 0;
  std::size_t total_ = 0;
  double origin_ = 0.0;
  double dt_ = 1.0;
  std::int64_t first_index_ = 0;
  int m_ = 0;
};

// Increments on the absolute grid, generated in chunks of `chunk_steps`. Chunk c of a
// stream has its own engine, so any window [n0, n1) is produced without generating
// what precedes it and the same absolute index always yields the same increment.
// Sequential requests are cheap; a jump re-seeds and skips within the chunk.
class ChunkedNoise {
 public:
  ChunkedNoise(const NoiseSpec& spec, std::uint64_t stream_index, std::int64_t chunk_steps,
               std::int64_t index_offset = 0);

  // Increment for absolute grid step n (shifted by index_offset, which realizes theta).
  void operator()(std::int64_t n, std::span<double> dw);

 private:
  void seek(std::int64_t n);

  NoiseSpec spec_;
  std::uint64_t stream_;
  std::int64_t chunk_;
  std::int64_t offset_;
  std::int64_t next_ = 0;
  bool started_ = false;
  std::unique_ptr<NoiseStream> current_;
};

WienerPath sample_path(const NoiseSpec& spec, std::size_t n_steps, std::uint64_t stream_index);

// theta_{k dt}: increments re-indexed by k steps, origin unchanged. Throws
// WindowError when the shifted view leaves the sampled storage.
WienerPath shift(const WienerPath& path, std::int64_t k_steps);

// Binary dump: magic "RPMWIENR", u32 m, f64 dt, u64 n_steps, then n_steps*m f64,
// all little-endian.
void write_increments(std::ostream& os, const WienerPath& path);
WienerPath read_increments(std::istream& is, double origin = 0.0);

// Stream-index families keep the noise used by different stages of one experiment
// disjoint while deriving everything from a single seed.
namespace streams {
inline constexpr std::uint64_t kEnsemble = 0;
inline constexpr std::uint64_t kMeasure = 1ULL << 40;
inline constexpr std::uint64_t kPullback = 2ULL << 40;
inline constexpr std::uint64_t kResponse = 3ULL << 40;
inline constexpr std::uint64_t kCorrelation = 4ULL << 40;
inline constexpr std::uint64_t kInitial = 5ULL << 40;
inline constexpr std::uint64_t kDiagnostic = 6ULL << 40;
}  // namespace streams

}  // namespace rpmeas
