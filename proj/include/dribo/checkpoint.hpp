#pragma once

// Binary checkpoint container.
//
//   offset  size  field
//   0       8     magic "DRIBOCKP"
//   8       4     format version (u32, little-endian), currently 1
//   12      4     header length L (u32)
//   16      L     header text: "key=value\n" lines (model config and run metadata)
//   16+L    8     tensor count (u64)
//   then per tensor:
//           4     name length (u32), followed by the name bytes
//           4     rank (u32), followed by rank u64 dimensions
//           8*n   values as IEEE-754 binary64, little-endian
//
// Every integer is little-endian regardless of host byte order.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dribo/params.hpp"

namespace dribo {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    std::map<std::string, std::string> header;
    std::vector<std::pair<std::string, ndgrad::Tensor>> tensors;

    /// Appends every registry entry under "<prefix>/<name>".
    void add_registry(const std::string& prefix, const ParamRegistry& registry);
    /// Builds a registry from all tensors stored under a prefix, preserving order.
    ParamRegistry extract_registry(const std::string& prefix) const;
    /// Overwrites values of an existing registry; names and shapes must match exactly.
    void load_into(const std::string& prefix, ParamRegistry& registry) const;
    bool has_prefix(const std::string& prefix) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes);

}  // namespace dribo
