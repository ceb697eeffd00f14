#pragma once

#include "gsedit/splat/scene.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <vector>

namespace gsedit::splat {

// {"gaussians":[{"opacity":f,"mean":[3],"scale":[3],"rotation":[4],"color":[3]},...]}
nlohmann::json scene_to_json(const GaussianScene& scene);
GaussianScene scene_from_json(const nlohmann::json& j);

// {"fx","fy","cx","cy","width","height","world_to_camera":[16 row-major]}
nlohmann::json camera_to_json(const Camera& cam);
Camera camera_from_json(const nlohmann::json& j);

// A camera file holds either one camera object or an array of them.
std::vector<Camera> cameras_from_json(const nlohmann::json& j);
nlohmann::json cameras_to_json(const std::vector<Camera>& cams);

GaussianScene load_scene(const std::filesystem::path& path);
void save_scene(const std::filesystem::path& path, const GaussianScene& scene);
std::vector<Camera> load_cameras(const std::filesystem::path& path);
void save_cameras(const std::filesystem::path& path, const std::vector<Camera>& cams);

} // namespace gsedit::splat
