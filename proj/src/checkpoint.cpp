#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "mvjump/error.hpp"
#include "mvjump/particle.hpp"

namespace mvjump {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes a little-endian host");

constexpr char kMagic[4] = {'M', 'V', 'J', 'F'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::istream& in) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw InvalidArgument("checkpoint: truncated header");
  return v;
}

}  // namespace

void write_checkpoint(std::ostream& out, const Checkpoint& cp) {
  const MeasureFlow& f = cp.flow;
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kVersion);
  put<std::uint64_t>(out, f.dim());
  put<std::uint64_t>(out, f.particles());
  put<std::uint64_t>(out, f.size());
  put<double>(out, f.grid().t0());
  put<double>(out, f.grid().horizon());
  put<double>(out, f.grid().dt());
  put<std::uint64_t>(out, cp.seed);
  put<std::uint64_t>(out, cp.model_fingerprint);
  for (std::size_t k = 0; k < f.size(); ++k) {
    const auto c = f.cloud(k);
    out.write(reinterpret_cast<const char*>(c.data()), static_cast<std::streamsize>(c.size() * sizeof(double)));
  }
  if (!out) throw Error("checkpoint: write failed");
}

Checkpoint read_checkpoint(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) throw InvalidArgument("checkpoint: bad magic");
  const auto version = get<std::uint32_t>(in);
  if (version != kVersion) throw InvalidArgument("checkpoint: unsupported version " + std::to_string(version));
  const auto d = get<std::uint64_t>(in), n = get<std::uint64_t>(in), count = get<std::uint64_t>(in);
  const auto t0 = get<double>(in), horizon = get<double>(in), dt = get<double>(in);
  Checkpoint cp;
  cp.seed = get<std::uint64_t>(in);
  cp.model_fingerprint = get<std::uint64_t>(in);
  const TimeGrid grid(t0, horizon, dt);
  if (grid.size() != count || d == 0 || n == 0 || d > (1u << 20) || n > (1ull << 32))
    throw InvalidArgument("checkpoint: inconsistent header");
  std::vector<double> states(count * n * d);
  if (!in.read(reinterpret_cast<char*>(states.data()), static_cast<std::streamsize>(states.size() * sizeof(double))))
    throw InvalidArgument("checkpoint: truncated data");
  cp.flow = MeasureFlow(grid, n, d, std::move(states));
  return cp;
}

void write_checkpoint(const std::string& path, const Checkpoint& cp) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open checkpoint for writing: " + path);
  write_checkpoint(out, cp);
}

Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open checkpoint: " + path);
  return read_checkpoint(in);
}

}  // namespace mvjump
