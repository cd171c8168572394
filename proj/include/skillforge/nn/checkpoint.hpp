#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace skillforge::nn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedParams {
  std::string name;
  Eigen::VectorXd params;

  friend bool operator==(const NamedParams& a, const NamedParams& b) {
    return a.name == b.name && a.params.size() == b.params.size() && a.params == b.params;
  }
};

using Checkpoint = std::vector<NamedParams>;

/// Binary layout: "SKF1", u32 version, u32 count, then per entry u32 name
/// length, UTF-8 name, u64 element count and little-endian f64 values.
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& nets);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const Checkpoint& nets, const std::filesystem::path& path);
/// Throws FormatError on bad magic or truncation, VersionError on an unknown version.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Entry lookup; throws FormatError naming the missing entry.
const Eigen::VectorXd& find_entry(const Checkpoint& ckpt, const std::string& name);

}  // namespace skillforge::nn
