#pragma once

#include "isds/graphs.hpp"
#include "isds/msm.hpp"
#include "isds/sds.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace isds {

std::uint32_t crc32(const void* data, std::size_t len);

// Binary tensor container: magic, length-prefixed JSON header, then a
// row-major little-endian float64 payload whose CRC the header pins.
struct DatasetContainer {
  int schema_version = 1;
  std::string role;  // latent | observed | regime
  int N = 0, T = 0, dim = 0;
  std::uint64_t seed = 0;
  std::string generator_tag;
  std::vector<double> payload;  // N * T * dim values

  double& at(int i, int t, int d) { return payload[(static_cast<std::size_t>(i) * T + t) * dim + d]; }
  double at(int i, int t, int d) const {
    return payload[(static_cast<std::size_t>(i) * T + t) * dim + d];
  }
};

void write_container(const std::string& path, const DatasetContainer& c);
DatasetContainer read_container(const std::string& path);

// atomic write-temp-rename
void atomic_write_file(const std::string& path, const std::string& contents);
std::string read_file(const std::string& path);

struct Checkpoint {
  std::string kind;  // "iMSM" or "iSDS"
  MsmModel prior;
  std::optional<SdsModel> sds;  // engaged for iSDS; prior duplicated inside
  std::string meta_json = "{}";
};

std::string checkpoint_to_json(const Checkpoint& ckpt);
Checkpoint checkpoint_from_json(const std::string& text);
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// Dataset directory helpers used by the CLI: containers plus the ground-truth
// sidecar (generator checkpoint, graphs, seed).
struct DatasetPaths {
  std::string dir;
  std::string observations() const { return dir + "/observations.isds"; }
  std::string latents() const { return dir + "/latents.isds"; }
  std::string regimes() const { return dir + "/regimes.isds"; }
  std::string sidecar() const { return dir + "/ground_truth.json"; }
  std::string meta() const { return dir + "/meta.json"; }
};

std::string graphs_to_json(const RegimeGraphSet& graphs);
RegimeGraphSet graphs_from_json(const std::string& text);

}  // namespace isds
