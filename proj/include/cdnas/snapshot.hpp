#pragma once

#include <filesystem>
#include <iosfwd>

#include "cdnas/tensor.hpp"

namespace cdnas {

/// Tensor snapshot: "CDNT", version byte, u32 rank, u32 dims, then row-major
/// f32 values. All integers and floats little-endian.
inline constexpr char kSnapshotMagic[4] = {'C', 'D', 'N', 'T'};
inline constexpr std::uint8_t kSnapshotVersion = 1;

void write_snapshot(std::ostream& os, const Tensor<float>& t);
Tensor<float> read_snapshot(std::istream& is);

void save_snapshot(const std::filesystem::path& path, const Tensor<float>& t);
Tensor<float> load_snapshot(const std::filesystem::path& path);

// Little-endian primitives shared with the checkpoint archive.
void write_u32(std::ostream& os, std::uint32_t v);
std::uint32_t read_u32(std::istream& is);

}  // namespace cdnas
