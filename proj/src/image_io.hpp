#pragma once

#include <filesystem>

#include "feature_store.hpp"

namespace diffsketch::image_io {

// 8-bit PNG in any color type; converted to RGB in [0,1].
store::Image read_png_rgb(const std::filesystem::path& path);
// Single channel in [0,1]; color inputs are reduced by luminance.
store::Sketch read_png_gray(const std::filesystem::path& path);
// H x W x 1 or H x W x 3 tensor in [0,1], quantised with rounding.
void write_png(const std::filesystem::path& path, const Tensor32& hwc);

}  // namespace diffsketch::image_io
