#include "mvjump/sampler.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "mvjump/error.hpp"
#include "mvjump/philox.hpp"

namespace mvjump {

std::string_view role_name(StreamRole role) {
  switch (role) {
    case StreamRole::BaseBrownian:
      return "base_brownian";
    case StreamRole::BaseJumps:
      return "base_jumps";
    case StreamRole::HatBrownian:
      return "hat_brownian";
    case StreamRole::HatJumps:
      return "hat_jumps";
    case StreamRole::InitialCondition:
      return "initial_condition";
    case StreamRole::Auxiliary:
      return "auxiliary";
  }
  return "unknown";
}

StreamRole role_from_name(std::string_view name) {
  for (auto r : {StreamRole::BaseBrownian, StreamRole::BaseJumps, StreamRole::HatBrownian,
                 StreamRole::HatJumps, StreamRole::InitialCondition, StreamRole::Auxiliary})
    if (role_name(r) == name) return r;
  throw InvalidArgument("unknown stream role: " + std::string(name));
}

std::array<double, 4> keyed_uniforms(const NoiseStreamKey& key, std::uint32_t block) {
  const PhiloxKey k{static_cast<std::uint32_t>(key.seed), static_cast<std::uint32_t>(key.seed >> 32)};
  const PhiloxCounter c{(block & 0xFFFFu) | (key.sub << 16), static_cast<std::uint32_t>(key.index),
                        key.particle,
                        static_cast<std::uint32_t>(key.role) |
                            (static_cast<std::uint32_t>(key.index >> 32) << 8)};
  const PhiloxCounter r = philox4x32_10(c, k);
  // One 128-bit output gives two 53-bit uniforms; the second call (top
  // counter bit set) gives the other two.
  const PhiloxCounter r2 = philox4x32_10({c[0], c[1], c[2], c[3] ^ 0x80000000u}, k);
  return {philox_uniform(r[0], r[1]), philox_uniform(r[2], r[3]), philox_uniform(r2[0], r2[1]),
          philox_uniform(r2[2], r2[3])};
}

void standard_normals(const NoiseStreamKey& key, std::span<double> out) {
  std::uint32_t block = 0;
  for (std::size_t i = 0; i < out.size(); i += 4, ++block) {
    const auto u = keyed_uniforms(key, block);
    // Box-Muller on both pairs.
    const double r0 = std::sqrt(-2.0 * std::log(u[0]));
    const double r1 = std::sqrt(-2.0 * std::log(u[2]));
    const double a0 = 2.0 * std::numbers::pi * u[1];
    const double a1 = 2.0 * std::numbers::pi * u[3];
    const double z[4] = {r0 * std::cos(a0), r0 * std::sin(a0), r1 * std::cos(a1),
                         r1 * std::sin(a1)};
    for (std::size_t j = 0; j < 4 && i + j < out.size(); ++j) out[i + j] = z[j];
  }
}

void gaussian_increment(const NoiseStreamKey& key, double dt, std::span<double> out) {
  if (!(dt > 0.0)) throw InvalidArgument("gaussian_increment: dt must be positive");
  standard_normals(key, out);
  const double scale = std::sqrt(dt);
  for (double& v : out) v *= scale;
}

std::vector<double> gaussian_increment(const NoiseStreamKey& key, double dt, std::size_t m) {
  std::vector<double> out(m);
  gaussian_increment(key, dt, std::span<double>(out));
  return out;
}

std::vector<JumpEvent> sample_jump_events(const NoiseStreamKey& key, const JumpMeasure& nu,
                                          double horizon, double t0) {
  if (!(horizon >= 0.0)) throw InvalidArgument("sample_jump_events: horizon must be >= 0");
  std::vector<JumpEvent> events;
  const double rate = nu.total_mass();
  if (rate <= 0.0 || horizon == 0.0) return events;
  const double end = t0 + horizon;
  double t = t0;
  NoiseStreamKey k = key;
  for (std::uint64_t idx = 0;; ++idx) {
    k.index = idx;
    const auto u = keyed_uniforms(k, 0);
    t += -std::log(u[0]) / rate;
    if (t > end) break;
    std::uint32_t extra_block = 1;
    const auto more = [&k, &extra_block, buf = std::array<double, 4>{}, pos = 4]() mutable {
      if (pos == 4) {
        buf = keyed_uniforms(k, extra_block++);
        pos = 0;
      }
      return buf[pos++];
    };
    events.push_back({t, nu.sample(u[1], u[2], more)});
  }
  return events;
}

}  // namespace mvjump
