#include "rpmeas/noise.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>

#include "rpmeas/error.hpp"

namespace rpmeas {

namespace {

constexpr char kMagic[8] = {'R', 'P', 'M', 'W', 'I', 'E', 'N', 'R'};

std::mt19937_64 derive_engine(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return std::mt19937_64(seq);
}

std::mt19937_64 derive_engine(std::uint64_t seed, std::uint64_t stream, std::uint64_t sub) {
  // The trailing marker word keeps (stream, sub) engines distinct from plain stream engines.
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    static_cast<std::uint32_t>(sub),    static_cast<std::uint32_t>(sub >> 32),
                    0x5eedu};
  return std::mt19937_64(seq);
}

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

template <class T>
void put_le(std::ostream& os, T value) {
  static_assert(std::endian::native == std::endian::little, "little-endian host assumed");
  char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  os.write(bytes, sizeof(T));
}

template <class T>
T get_le(std::istream& is) {
  char bytes[sizeof(T)];
  if (!is.read(bytes, sizeof(T))) throw std::runtime_error("truncated increment dump");
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

}  // namespace

std::int64_t grid_index(double t, double dt) {
  const double q = t / dt;
  const double n = std::round(q);
  if (std::abs(q - n) > 1e-7 * std::max(1.0, std::abs(n)))
    throw GridError("time " + std::to_string(t) + " is not on the dt = " + std::to_string(dt) +
                    " grid");
  return static_cast<std::int64_t>(n);
}

NoiseStream::NoiseStream(const NoiseSpec& spec, std::uint64_t stream_index)
    : engine_(derive_engine(spec.seed, stream_index)),
      sqrt_dt_(std::sqrt(spec.dt)),
      m_(spec.noise_dim) {
  if (!(spec.dt > 0.0)) throw ValidationError("dt", "must be positive");
}

NoiseStream::NoiseStream(const NoiseSpec& spec, std::uint64_t stream_index, std::uint64_t substream)
    : engine_(derive_engine(spec.seed, stream_index, substream)),
      sqrt_dt_(std::sqrt(spec.dt)),
      m_(spec.noise_dim) {
  if (!(spec.dt > 0.0)) throw ValidationError("dt", "must be positive");
}

ChunkedNoise::ChunkedNoise(const NoiseSpec& spec, std::uint64_t stream_index,
                           std::int64_t chunk_steps, std::int64_t index_offset)
    : spec_(spec), stream_(stream_index), chunk_(chunk_steps), offset_(index_offset) {
  if (chunk_steps <= 0) throw ValidationError("chunk_steps", "must be positive");
}

void ChunkedNoise::seek(std::int64_t n) {
  const std::int64_t c = floor_div(n, chunk_);
  current_ = std::make_unique<NoiseStream>(spec_, stream_, static_cast<std::uint64_t>(c));
  std::vector<double> skip(static_cast<std::size_t>(spec_.noise_dim));
  for (std::int64_t j = c * chunk_; j < n; ++j) current_->next(skip);
  next_ = n;
  started_ = true;
}

void ChunkedNoise::operator()(std::int64_t n, std::span<double> dw) {
  n += offset_;
  if (!started_ || n != next_) {
    seek(n);
  } else if (floor_div(n, chunk_) * chunk_ == n) {
    current_ = std::make_unique<NoiseStream>(spec_, stream_, static_cast<std::uint64_t>(floor_div(n, chunk_)));
  }
  current_->next(dw);
  next_ = n + 1;
}

void NoiseStream::next(std::span<double> dw) {
  for (int k = 0; k < m_; ++k) dw[static_cast<std::size_t>(k)] = sqrt_dt_ * normal_(engine_);
}

WienerPath::WienerPath(double origin, double dt, int noise_dim, std::vector<double> increments)
    : origin_(origin), dt_(dt), m_(noise_dim) {
  if (!(dt > 0.0)) throw ValidationError("dt", "must be positive");
  if (noise_dim < 0) throw ValidationError("noise_dim", "must be nonnegative");
  first_index_ = grid_index(origin, dt);
  if (m_ > 0 && increments.size() % static_cast<std::size_t>(m_) != 0)
    throw ValidationError("increments", "size is not a multiple of noise_dim");
  total_ = m_ > 0 ? increments.size() / static_cast<std::size_t>(m_) : 0;
  data_ = std::make_shared<const std::vector<double>>(std::move(increments));
}

std::span<const double> WienerPath::increment_at_index(std::int64_t n) const {
  const std::int64_t j = n - first_index_;
  if (j < 0 || j >= static_cast<std::int64_t>(n_steps()))
    throw WindowError("grid index " + std::to_string(n) + " outside the sampled noise window");
  return increment(static_cast<std::size_t>(j));
}

WienerPath sample_path(const NoiseSpec& spec, std::size_t n_steps, std::uint64_t stream_index) {
  NoiseStream stream(spec, stream_index);
  const auto m = static_cast<std::size_t>(spec.noise_dim);
  std::vector<double> inc(n_steps * m);
  for (std::size_t j = 0; j < n_steps; ++j) stream.next(std::span<double>(inc.data() + j * m, m));
  return WienerPath(spec.origin, spec.dt, spec.noise_dim, std::move(inc));
}

WienerPath shift(const WienerPath& path, std::int64_t k_steps) {
  const auto begin = static_cast<std::int64_t>(path.begin_) + k_steps;
  if (begin < 0 || begin > static_cast<std::int64_t>(path.total_))
    throw WindowError("shift by " + std::to_string(k_steps) +
                      " steps leaves the sampled window; pre-sample a longer path");
  WienerPath out = path;
  out.begin_ = static_cast<std::size_t>(begin);
  return out;
}

void write_increments(std::ostream& os, const WienerPath& path) {
  os.write(kMagic, sizeof(kMagic));
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(path.noise_dim()));
  put_le<double>(os, path.dt());
  put_le<std::uint64_t>(os, path.n_steps());
  for (std::size_t j = 0; j < path.n_steps(); ++j)
    for (double v : path.increment(j)) put_le<double>(os, v);
}

WienerPath read_increments(std::istream& is, double origin) {
  char magic[8];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("not an increment dump (bad magic)");
  const auto m = get_le<std::uint32_t>(is);
  const auto dt = get_le<double>(is);
  const auto n = get_le<std::uint64_t>(is);
  std::vector<double> inc(n * m);
  for (auto& v : inc) v = get_le<double>(is);
  return WienerPath(origin, dt, static_cast<int>(m), std::move(inc));
}

}  // namespace rpmeas
