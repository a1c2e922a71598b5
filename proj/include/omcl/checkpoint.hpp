#pragma once

#include <array>
#include <string>
#include <vector>

#include "omcl/model.hpp"

namespace omcl {

// Checkpoint file layout (little-endian throughout):
//
//   "OMCL"                       4 bytes magic
//   u32  format version          currently 1
//   u8   architecture            0 mlp, 1 small-cnn
//   i32  in_h, in_w, in_ch, embed_dim
//   u32  n_hidden, then i32 per mlp hidden width
//   i32  num_classes
//   f64  margin, threshold, lambda
//   f64  s                       current scale value
//   u32  n_rng_streams, then 4 x u64 per stream state
//   u32  n_tensors, then per tensor:
//        u16 name length, name bytes,
//        u8 rank, i32 per dimension, f64 per value
//
// The tensor list holds the backbone parameters in order, then "head_w",
// then the normalization constants "input_mean" and "input_std".
void save_checkpoint(const std::string& path, const Model& model,
                     const std::vector<std::array<uint64_t, 4>>& rng_states = {});

Model load_checkpoint(const std::string& path,
                      std::vector<std::array<uint64_t, 4>>* rng_states = nullptr);

}  // namespace omcl
