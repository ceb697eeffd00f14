#include "gsedit/cimln/checkpoint.hpp"

#include "gsedit/io/files.hpp"
#include "gsedit/io/rten.hpp"

#include <fmt/format.h>

namespace gsedit::cimln {

namespace fs = std::filesystem;
using nlohmann::json;

void save_checkpoint(const fs::path& dir, const CimlnModel& model, const json& extra) {
    fs::create_directories(dir);
    json params = json::array();
    for (const auto& p : model.params()) {
        io::write_rten(dir / (p.name + ".rten"), p.value);
        params.push_back({{"name", p.name}, {"shape", p.value.shape()}});
    }
    json manifest{{"format", "gsedit-cimln"},
                  {"version", 1},
                  {"config", {{"features", model.config().features}, {"window", model.config().window}}},
                  {"parameters", params},
                  {"train", extra}};
    io::write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

CimlnModel load_checkpoint(const fs::path& dir) {
    json manifest;
    try {
        manifest = json::parse(io::read_file(dir / "manifest.json"));
    } catch (const json::exception& e) {
        throw io::IoError(fmt::format("{}: bad manifest: {}", (dir / "manifest.json").string(), e.what()));
    }
    if (manifest.value("format", "") != "gsedit-cimln") {
        throw io::IoError(fmt::format("{} is not a cimln checkpoint", dir.string()));
    }
    ModelConfig config;
    config.features = manifest.at("config").at("features").get<int>();
    config.window = manifest.at("config").at("window").get<int>();
    std::vector<NamedParam> params;
    for (const auto& entry : manifest.at("parameters")) {
        const auto name = entry.at("name").get<std::string>();
        auto t = io::read_rten(dir / (name + ".rten"));
        if (t.shape() != entry.at("shape").get<numerics::Shape>()) {
            throw io::IoError(fmt::format("checkpoint tensor {} does not match its manifest shape", name));
        }
        params.push_back({name, t});
    }
    return CimlnModel(config, std::move(params));
}

} // namespace gsedit::cimln
