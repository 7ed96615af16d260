#pragma once

// Keyed random sources for the Brownian drivers B, B-hat and the Poisson
// random measures N, N-hat.
//
// Every draw is addressed by a NoiseStreamKey and computed from it alone,
// so trajectories do not depend on evaluation order or worker count.
//
// Counter layout for Philox4x32 (key = seed):
//   c0 = block index (low 16 bits) | sub-stream << 16
//   c1 = step or event index (low 32 bits)
//   c2 = particle id
//   c3 = stream role (low 8 bits) | step high bits << 8

#include <array>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "mvjump/jump_measure.hpp"

namespace mvjump {

enum class StreamRole : std::uint8_t {
  BaseBrownian = 1,
  BaseJumps = 2,
  HatBrownian = 3,
  HatJumps = 4,
  InitialCondition = 5,
  Auxiliary = 6,  // slicing directions, audit probes, resampling
};

std::string_view role_name(StreamRole role);
StreamRole role_from_name(std::string_view name);

struct NoiseStreamKey {
  std::uint64_t seed = 0;
  StreamRole role = StreamRole::BaseBrownian;
  std::uint32_t particle = 0;
  std::uint64_t index = 0;  // step index for Brownian draws, event index for jumps
  std::uint32_t sub = 0;    // sub-stream, e.g. Brownian-bridge refinements within a step
};

// Four uniforms on (0,1) for block `block` of the keyed stream.
std::array<double, 4> keyed_uniforms(const NoiseStreamKey& key, std::uint32_t block);

// m independent standard normals, deterministic in key.
void standard_normals(const NoiseStreamKey& key, std::span<double> out);

// m independent N(0, dt) draws. Throws InvalidArgument for dt <= 0.
std::vector<double> gaussian_increment(const NoiseStreamKey& key, double dt, std::size_t m);
void gaussian_increment(const NoiseStreamKey& key, double dt, std::span<double> out);

struct JumpEvent {
  double time;
  JumpMark mark;
};

// Homogeneous Poisson event times of rate nu(U) on [t0, t0 + horizon] with
// i.i.d. marks ~ nu/nu(U). The key's index field is ignored; event k is
// drawn from index k.
std::vector<JumpEvent> sample_jump_events(const NoiseStreamKey& key, const JumpMeasure& nu,
                                          double horizon, double t0 = 0.0);

}  // namespace mvjump
