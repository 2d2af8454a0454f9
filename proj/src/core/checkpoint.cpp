#include "checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace convrec {

namespace {

constexpr char kMagic[8] = {'C', 'V', 'R', 'T', 'N', 'S', '0', '1'};
constexpr uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "container format is little-endian; big-endian hosts are not supported");

template <typename T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw DataError("container: truncated file");
  return v;
}

}  // namespace

void save_container(const std::string& path,
                    const std::vector<TensorEntry>& entries) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("container: cannot open " + path + " for writing");
  os.write(kMagic, sizeof(kMagic));
  put<uint32_t>(os, kVersion);
  put<uint64_t>(os, entries.size());
  for (const auto& e : entries) {
    if (shape_numel(e.shape) != static_cast<int64_t>(e.data.size()))
      throw ShapeError("container: entry " + e.name + " shape " +
                       shape_str(e.shape) + " does not match data size " +
                       std::to_string(e.data.size()));
    put<uint32_t>(os, static_cast<uint32_t>(e.name.size()));
    os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    put<uint8_t>(os, static_cast<uint8_t>(e.dtype));
    put<uint32_t>(os, static_cast<uint32_t>(e.shape.size()));
    for (int d : e.shape) put<uint32_t>(os, static_cast<uint32_t>(d));
  }
  for (const auto& e : entries) {
    if (e.dtype == Dtype::F64) {
      os.write(reinterpret_cast<const char*>(e.data.data()),
               static_cast<std::streamsize>(e.data.size() * sizeof(double)));
    } else {
      std::vector<float> f(e.data.size());
      for (size_t i = 0; i < e.data.size(); ++i)
        f[i] = static_cast<float>(e.data[i]);
      os.write(reinterpret_cast<const char*>(f.data()),
               static_cast<std::streamsize>(f.size() * sizeof(float)));
    }
  }
  if (!os) throw DataError("container: write failed for " + path);
}

std::vector<TensorEntry> load_container(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("container: cannot open " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw DataError("container: " + path + " has wrong format tag");
  uint32_t version = get<uint32_t>(is);
  if (version != kVersion)
    throw DataError("container: unsupported version " +
                    std::to_string(version));
  uint64_t count = get<uint64_t>(is);
  std::vector<TensorEntry> entries(count);
  for (auto& e : entries) {
    uint32_t name_len = get<uint32_t>(is);
    e.name.resize(name_len);
    is.read(e.name.data(), name_len);
    e.dtype = static_cast<Dtype>(get<uint8_t>(is));
    uint32_t ndim = get<uint32_t>(is);
    e.shape.resize(ndim);
    for (auto& d : e.shape) d = static_cast<int>(get<uint32_t>(is));
    if (!is) throw DataError("container: truncated manifest in " + path);
  }
  for (auto& e : entries) {
    size_t n = static_cast<size_t>(shape_numel(e.shape));
    e.data.resize(n);
    if (e.dtype == Dtype::F64) {
      is.read(reinterpret_cast<char*>(e.data.data()),
              static_cast<std::streamsize>(n * sizeof(double)));
    } else {
      std::vector<float> f(n);
      is.read(reinterpret_cast<char*>(f.data()),
              static_cast<std::streamsize>(n * sizeof(float)));
      for (size_t i = 0; i < n; ++i) e.data[i] = static_cast<double>(f[i]);
    }
    if (!is) throw DataError("container: truncated data in " + path);
  }
  return entries;
}

}  // namespace convrec
