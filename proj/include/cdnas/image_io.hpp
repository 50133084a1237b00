#pragma once

#include <filesystem>

#include "cdnas/tensor.hpp"

namespace cdnas {

/// Binary PPM (P6, maxval 255). Values are clamped to [0, 1] and rounded to
/// 8 bits; 3 x H x W in, 3 x H x W out.
void write_ppm(const std::filesystem::path& path, const Tensor<float>& image);
Tensor<float> read_ppm(const std::filesystem::path& path);

/// Rounds to the nearest of the 256 levels a PPM can hold, so a write/read
/// round trip is exact.
float quantize8(float v);

/// (x - min) / (max - min), zeros when constant. For visualizing dynamic images.
Tensor<float> normalize_range(const Tensor<float>& image);

}  // namespace cdnas
