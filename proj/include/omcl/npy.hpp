#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "omcl/error.hpp"

namespace omcl {

// Minimal NPY (format version 1.0) and NPZ reader/writer for the dataset
// dtypes: uint8 ('|u1') and int64 ('<i8'), C order only. Fortran order,
// other dtypes, and truncated files raise DataError.
struct NpyArray {
  enum class Dtype : uint8_t { u8, i64 };
  Dtype dtype = Dtype::u8;
  std::vector<int64_t> shape;
  std::vector<uint8_t> u8;     // filled when dtype == u8
  std::vector<int64_t> i64;    // filled when dtype == i64

  int64_t count() const;
  // Labels arrive as (N,) or (N,1) in either dtype; this flattens to int.
  std::vector<int> as_int_vector() const;
};

NpyArray parse_npy(const std::vector<uint8_t>& bytes, const std::string& origin);
NpyArray load_npy(const std::string& path);
void save_npy(const std::string& path, const NpyArray& array);

// ZIP member access for .npz archives (stored and deflated entries).
std::vector<std::string> npz_member_names(const std::string& path);
bool npz_has_member(const std::string& path, const std::string& name);
NpyArray load_npz_member(const std::string& path, const std::string& name);

std::vector<uint8_t> read_file(const std::string& path);

}  // namespace omcl
