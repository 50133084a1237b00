#include "cdnas/snapshot.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace cdnas {

void write_u32(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw IoError("truncated snapshot header");
  return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
         std::uint32_t(b[3]) << 24;
}

void write_snapshot(std::ostream& os, const Tensor<float>& t) {
  os.write(kSnapshotMagic, 4);
  os.put(static_cast<char>(kSnapshotVersion));
  write_u32(os, static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) write_u32(os, static_cast<std::uint32_t>(d));
  for (float v : t.data()) write_u32(os, std::bit_cast<std::uint32_t>(v));
  if (!os) throw IoError("failed to write tensor snapshot");
}

Tensor<float> read_snapshot(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kSnapshotMagic, 4) != 0) {
    throw IoError("not a tensor snapshot (bad magic)");
  }
  const int version = is.get();
  if (version != kSnapshotVersion) {
    throw IoError("unsupported snapshot version " + std::to_string(version));
  }
  const auto rank = read_u32(is);
  if (rank > 16) throw IoError("implausible snapshot rank " + std::to_string(rank));
  Shape shape(rank);
  for (auto& d : shape) d = read_u32(is);
  Tensor<float> t(shape);
  for (auto& v : t.data()) v = std::bit_cast<float>(read_u32(is));
  return t;
}

void save_snapshot(const std::filesystem::path& path, const Tensor<float>& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  write_snapshot(os, t);
}

Tensor<float> load_snapshot(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  return read_snapshot(is);
}

}  // namespace cdnas
