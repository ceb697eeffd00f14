#include "gsedit/splat/scene_io.hpp"
#include "gsedit/io/files.hpp"

#include <fmt/format.h>

namespace gsedit::splat {

using nlohmann::json;

json scene_to_json(const GaussianScene& scene) {
    json arr = json::array();
    for (const auto& g : scene.gaussians) {
        arr.push_back({{"opacity", g.opacity},
                       {"mean", {g.mean.x(), g.mean.y(), g.mean.z()}},
                       {"scale", {g.scale.x(), g.scale.y(), g.scale.z()}},
                       {"rotation", g.rotation},
                       {"color", {g.color.x(), g.color.y(), g.color.z()}}});
    }
    return {{"gaussians", arr}};
}

namespace {
Eigen::Vector3d vec3(const json& j, const char* key) {
    const auto v = j.at(key).get<std::vector<double>>();
    if (v.size() != 3) throw std::invalid_argument(fmt::format("'{}' must have 3 entries", key));
    return {v[0], v[1], v[2]};
}
} // namespace

GaussianScene scene_from_json(const json& j) {
    GaussianScene scene;
    for (const auto& item : j.at("gaussians")) {
        Gaussian g;
        g.opacity = item.at("opacity").get<double>();
        g.mean = vec3(item, "mean");
        g.scale = vec3(item, "scale");
        const auto q = item.at("rotation").get<std::vector<double>>();
        if (q.size() != 4) throw std::invalid_argument("'rotation' must have 4 entries");
        g.rotation = {q[0], q[1], q[2], q[3]};
        g.color = vec3(item, "color");
        scene.gaussians.push_back(g);
    }
    scene.validate();
    return scene;
}

json camera_to_json(const Camera& cam) {
    std::vector<double> m;
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) m.push_back(cam.world_to_camera(r, c));
    return {{"fx", cam.fx}, {"fy", cam.fy},         {"cx", cam.cx},
            {"cy", cam.cy}, {"width", cam.width}, {"height", cam.height},
            {"world_to_camera", m}};
}

Camera camera_from_json(const json& j) {
    Camera cam;
    cam.fx = j.at("fx").get<double>();
    cam.fy = j.at("fy").get<double>();
    cam.cx = j.at("cx").get<double>();
    cam.cy = j.at("cy").get<double>();
    cam.width = j.at("width").get<int>();
    cam.height = j.at("height").get<int>();
    const auto m = j.at("world_to_camera").get<std::vector<double>>();
    if (m.size() != 16) throw std::invalid_argument("'world_to_camera' must have 16 entries");
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) cam.world_to_camera(r, c) = m[static_cast<std::size_t>(r * 4 + c)];
    cam.validate();
    return cam;
}

std::vector<Camera> cameras_from_json(const json& j) {
    std::vector<Camera> cams;
    if (j.is_array()) {
        for (const auto& c : j) cams.push_back(camera_from_json(c));
    } else if (j.contains("cameras")) {
        for (const auto& c : j.at("cameras")) cams.push_back(camera_from_json(c));
    } else {
        cams.push_back(camera_from_json(j));
    }
    return cams;
}

json cameras_to_json(const std::vector<Camera>& cams) {
    json arr = json::array();
    for (const auto& c : cams) arr.push_back(camera_to_json(c));
    return arr;
}

GaussianScene load_scene(const std::filesystem::path& path) {
    return scene_from_json(json::parse(io::read_file(path)));
}

void save_scene(const std::filesystem::path& path, const GaussianScene& scene) {
    io::write_file_atomic(path, scene_to_json(scene).dump(1) + "\n");
}

std::vector<Camera> load_cameras(const std::filesystem::path& path) {
    return cameras_from_json(json::parse(io::read_file(path)));
}

void save_cameras(const std::filesystem::path& path, const std::vector<Camera>& cams) {
    io::write_file_atomic(path, cameras_to_json(cams).dump(1) + "\n");
}

} // namespace gsedit::splat
