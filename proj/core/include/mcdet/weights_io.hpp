#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "mcdet/network.hpp"
#include "mcdet/tensor.hpp"

namespace mcdet {

// Binary weights file:
//   magic "IFODW1" (6 bytes), u32 record count, then per record:
//   u32 name length, name bytes, u32 rank, rank x u32 dims,
//   prod(dims) x f32 payload. All integers and floats little-endian.

struct WeightRecord {
  std::string name;
  Tensor<float> tensor;
};

void write_weights_file(const std::string& path, const std::vector<WeightRecord>& records);

/// Reads the whole file or throws FormatError; never returns partial data.
std::vector<WeightRecord> read_weights_file(const std::string& path);

struct LoadReport {
  std::size_t loaded = 0;
  std::vector<std::string> skipped;
};

template <typename T>
void save_weights(const Network<T>& network, const std::string& path);

/// Loads named tensors into `network`. With `strict`, every tensor in the
/// file must match a network tensor by name and shape (ConfigError
/// otherwise); without it, mismatches are skipped with a warning. The
/// network is left untouched when any error is raised.
template <typename T>
LoadReport load_weights(Network<T>& network, const std::string& path, bool strict);

}  // namespace mcdet
