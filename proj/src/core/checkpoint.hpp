#pragma once

#include <string>
#include <vector>

#include "tensor.hpp"

namespace convrec {

// Binary tensor container: 8-byte format tag, version, named manifest with
// shapes and dtype, then little-endian IEEE-754 arrays in manifest order.
// Values are held as float64 in memory; storage dtype is per entry.
enum class Dtype : uint8_t { F32 = 0, F64 = 1 };

struct TensorEntry {
  std::string name;
  Shape shape;
  Dtype dtype = Dtype::F32;
  std::vector<double> data;
};

void save_container(const std::string& path,
                    const std::vector<TensorEntry>& entries);
std::vector<TensorEntry> load_container(const std::string& path);

}  // namespace convrec
