#pragma once

#include <string>
#include <vector>

#include "tsg/tensor.hpp"

namespace tsg {

// Flat parameter checkpoint:
//   magic "SCG1", version u32 LE,
//   then per parameter: name length u32 LE, name bytes (UTF-8),
//   rank u64 LE, dims u64 LE each, payload f64 LE.
inline constexpr uint32_t kCheckpointVersion = 1;

struct CheckpointEntry {
  std::string name;
  Shape shape;
  std::vector<double> data;
};

void save_checkpoint(const std::string& path, const std::vector<Parameter>& params);
std::vector<CheckpointEntry> load_checkpoint(const std::string& path);

// Copies entries into same-named parameters. Missing, extra or
// shape-mismatched entries raise VersionError.
void restore_parameters(const std::vector<CheckpointEntry>& entries,
                        std::vector<Parameter>& params);

}  // namespace tsg
