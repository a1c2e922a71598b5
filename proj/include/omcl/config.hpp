#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "omcl/error.hpp"

namespace omcl {

// Training configuration. Defaults follow the tuned recipe: batch 64,
// Adam at 1e-3, m = -0.1, t = 0.1, lambda = 0.5, descriptors matching the
// batch 1:1, adaptive scale trained at 0.1x the model rate.
struct TrainConfig {
  std::string dataset_path;
  std::string split_file;
  int trial = -1;  // -1 trains every trial in the split file
  std::string backbone = "small-cnn";
  std::vector<int> mlp_hidden = {64};
  int embed_dim = 128;
  int batch_size = 64;
  int epochs = 200;
  double lr = 1e-3;
  double s0 = 16.0;
  double margin = -0.1;
  double threshold = 0.1;
  double lambda = 0.5;
  int descriptors = -1;  // -1 matches the batch size
  std::string descriptor_mode = "cube-project";
  std::string scoring = "threshold-channel";
  uint64_t seed = 2023;
  bool enable_mlas = true;
  bool enable_oss = true;
  bool adaptive_scale = true;
  bool augment = true;
  int threads = 0;  // 0 keeps the library default; 1 forces serial kernels
  std::string label;  // free-form tag carried into reports
  std::string out_dir = "out";
};

// Reads .json, or a flat key = value file for any other extension.
// Dashes and underscores in keys are interchangeable.
TrainConfig load_config(const std::string& path);
void apply_config_text(TrainConfig& cfg, const std::string& text, bool is_json,
                       const std::string& origin);

std::string config_to_json(const TrainConfig& cfg);
// FNV-1a hash of the canonical JSON form, as 16 hex digits.
std::string config_digest(const TrainConfig& cfg);

uint64_t fnv1a64_bytes(const void* data, size_t len);
std::string hex64(uint64_t value);

}  // namespace omcl
