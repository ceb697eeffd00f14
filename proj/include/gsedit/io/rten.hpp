#pragma once

// .rten: one JSON header line
//   {"dtype":"f32","shape":[...],"order":"row-major","endian":"little"}\n
// followed by the raw little-endian float32 payload.

#include "gsedit/numerics/tensor.hpp"

#include <filesystem>
#include <string>

namespace gsedit::io {

std::string encode_rten(const numerics::DTensor& t);
numerics::DTensor decode_rten(const std::string& bytes);

void write_rten(const std::filesystem::path& path, const numerics::DTensor& t);
numerics::DTensor read_rten(const std::filesystem::path& path);

} // namespace gsedit::io
