#pragma once

#include "gsedit/cimln/model.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>

namespace gsedit::cimln {

/// Directory with one <name>.rten per parameter and a manifest.json listing
/// names, shapes and the config. `extra` is stored under "train".
void save_checkpoint(const std::filesystem::path& dir, const CimlnModel& model,
                     const nlohmann::json& extra = nlohmann::json::object());
CimlnModel load_checkpoint(const std::filesystem::path& dir);

} // namespace gsedit::cimln
