#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "omcl/rng.hpp"
#include "omcl/tensor.hpp"

namespace omcl {

// Raw uint8 image collection in HWC layout with original class ids.
struct ImageDataset {
  int h = 0, w = 0, ch = 0;
  int64_t count = 0;
  std::vector<uint8_t> pixels;  // count * h * w * ch
  std::vector<int> labels;      // original ids in [0, num_classes)
  std::string tag;              // "train" | "test"
  int num_classes = 0;

  const uint8_t* image(int64_t i) const {
    return pixels.data() + static_cast<size_t>(i) * h * w * ch;
  }
  int64_t image_size() const { return static_cast<int64_t>(h) * w * ch; }
};

// Loads {split}_images.npy / {split}_labels.npy from a directory, or the
// same members from a single .npz archive. Grayscale (N,H,W) arrays get a
// trailing channel of 1.
ImageDataset load_dataset(const std::string& path, const std::string& split);

// One trial's known/unknown class partition. Known ids are kept in
// ascending order and map to model classes 1..C by position.
struct OpenSetSplit {
  int trial = 0;
  std::vector<int> known;
  std::vector<int> unknown;
  std::vector<int> pinned;
  uint64_t master_seed = 0;

  int num_known() const { return static_cast<int>(known.size()); }
  // Model class 1..C for a known original id, kUnknownClass otherwise.
  int remap(int original) const;
  // Original id for model class 1..C.
  int unmap(int model_class) const;
};

// K trials of ceil(C/2) known classes, deterministic in master_seed.
// Pinned classes are always placed in the known set.
std::vector<OpenSetSplit> make_splits(int c_total, int k, uint64_t master_seed,
                                      const std::vector<int>& pinned = {});

struct SplitFile {
  std::string dataset;
  uint64_t master_seed = 0;
  std::vector<OpenSetSplit> trials;
};

std::string splits_to_json(const SplitFile& file);
SplitFile splits_from_json_text(const std::string& text);
void save_splits(const std::string& path, const SplitFile& file);
SplitFile load_splits(const std::string& path);

// Per-channel mean/std of pixel intensities scaled to [0,1], computed over
// the training images of the known classes only.
struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> stddev;  // floored at 1e-6
};

ChannelStats compute_channel_stats(const ImageDataset& train,
                                   const std::vector<int>& known_ids);
std::string stats_to_json(const ChannelStats& stats);
ChannelStats stats_from_json_text(const std::string& text);

struct AugmentOptions {
  bool enabled = true;
  int pad = 4;
  double flip_prob = 0.5;
};

// Zero-pads by `pad`, crops back to h x w at offset (dy, dx), then
// mirrors horizontally when flip is set. Offsets are in [0, 2*pad].
void crop_and_flip(const uint8_t* src, uint8_t* dst, int h, int w, int ch, int dy,
                   int dx, bool flip, int pad);

// Mirrors an HWC image in place around its vertical axis (an involution).
void flip_horizontal(uint8_t* img, int h, int w, int ch);

struct Batch {
  Tensor images;                     // [B, H, W, ch], standardized floats
  std::vector<int> labels;           // model classes 1..C
  std::vector<int64_t> source_index; // position in the source dataset
};

// All batches of one training epoch over the known-class samples: full
// shuffle (stream "shuffle"), optional augmentation (stream "augment"),
// standardization with `stats`, final short batch kept. Deterministic in
// (master_seed, trial, epoch).
std::vector<Batch> epoch_batches(const ImageDataset& ds, const OpenSetSplit& split,
                                 const ChannelStats& stats, const AugmentOptions& aug,
                                 int batch_size, uint64_t master_seed, int epoch);

// Unshuffled, unaugmented batches over the given sample indices.
std::vector<Batch> eval_batches(const ImageDataset& ds, const OpenSetSplit& split,
                                const ChannelStats& stats,
                                const std::vector<int64_t>& indices, int batch_size);

}  // namespace omcl
