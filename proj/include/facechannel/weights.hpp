#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "facechannel/tensor.hpp"

namespace facechannel {

/// One named tensor as stored in a weight file (always f32 on disk).
struct TensorBlob {
  std::string name;
  Shape shape;
  std::vector<float> data;
};

/// Binary weight-file format, little-endian throughout:
///   magic "FCW1" | u32 tensor count | per tensor:
///   u16 name length | name bytes (UTF-8) | u8 rank | u32 dims[rank] |
///   f32 data, row-major.
void write_weight_file(const std::string& path, const std::vector<TensorBlob>& blobs);
std::vector<TensorBlob> read_weight_file(const std::string& path);

} // namespace facechannel
