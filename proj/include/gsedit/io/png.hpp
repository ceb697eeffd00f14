#pragma once

#include "gsedit/numerics/tensor.hpp"

#include <filesystem>

namespace gsedit::io {

/// 8-bit RGB PNG from [3 x H x W] (or [1 x H x W], written as gray) values
/// in linear [0,1]: clamp, scale by 255, round half up.
void write_png(const std::filesystem::path& path, const numerics::DTensor& image);

/// Returns [3 x H x W] in [0,1]. Gray and alpha inputs are expanded/dropped.
numerics::DTensor read_png(const std::filesystem::path& path);

std::uint8_t quantize_unit(double v);

} // namespace gsedit::io
