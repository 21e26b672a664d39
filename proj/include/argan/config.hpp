#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include "argan/networks.hpp"

namespace argan {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ArganConfig {
  int N = 3;
  double lambda = 0.7;
  int image_size = 32;
  int depth = 5;
  int base_channels = 64;
  int channel_cap = 512;
  int batch_size = 4;
  double lr = 2e-4;
  double momentum_mu = 0.9;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int iterations = 2000;
  std::uint64_t seed = 1;
  bool share_weights = true;
  bool semi_supervised = false;
  // Width and depth of the detector's conv stack.
  int detector_channels = 64;
  int detector_layers = 10;
  // Write an intermediate checkpoint every this many iterations (0: only at the end).
  int checkpoint_every = 0;

  bool operator==(const ArganConfig&) const = default;
};

/// Throws ConfigError when an invariant fails.
void validate(const ArganConfig& cfg);

/// `key = value` lines; '#' starts a comment. Unknown keys, duplicates and
/// malformed values are errors that name the line. The result is validated.
ArganConfig parse_config(const std::string& text);
ArganConfig load_config(const std::string& path);

/// One `key = value` line per field in declaration order, shortest
/// round-trip formatting for floats.
std::string serialize_config(const ArganConfig& cfg);

NetConfig net_config(const ArganConfig& cfg);

}  // namespace argan
