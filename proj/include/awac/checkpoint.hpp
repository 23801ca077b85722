#pragma once

#include <cstdint>
#include <filesystem>

#include "awac/env.hpp"
#include "awac/ppo.hpp"

namespace awac {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Binary policy checkpoint:
//   8 bytes   magic "AWACPOL1"
//   u32       format version
//   u64       header length, then a JSON header (shapes, parameter counts)
//   f64[]     actor parameters, then critic parameters (little-endian)
//   u64       FNV-1a checksum of everything after the magic
// Round trips are bit-exact.
void save_policy(const PolicyParams& policy, const std::filesystem::path& path);

// Throws IoError on a missing, truncated or corrupt file or an unknown version.
PolicyParams load_policy(const std::filesystem::path& path);

// As above, and throws ConfigError when the stored shapes do not fit `config`.
PolicyParams load_policy(const std::filesystem::path& path, const EnvConfig& config);

void check_policy_shape(const PolicyParams& policy, const EnvConfig& config);

}  // namespace awac
