#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "argan/config.hpp"
#include "argan/layers.hpp"

namespace argan {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Layout: "ARGN", version u32, config length u32 + config text, then
/// tensors until end of file, each as name length u32, name bytes, ndim u32,
/// dims u32 x ndim, float32 payload. All integers and floats little-endian.
struct CheckpointData {
  ArganConfig config;
  NamedTensors<float> tensors;
};

std::vector<std::uint8_t> encode_checkpoint(const ArganConfig& cfg, const NamedTensors<float>& tensors);
CheckpointData decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::string& path, const ArganConfig& cfg, const NamedTensors<float>& tensors);
CheckpointData load_checkpoint(const std::string& path);

/// Copies loaded values into `targets` by name. Missing or unexpected names
/// and shape mismatches raise an error naming the tensor.
void restore_tensors(const NamedTensors<float>& targets, const NamedTensors<float>& loaded);

}  // namespace argan
