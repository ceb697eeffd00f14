#pragma once

#include "gsedit/diffusion/predictor.hpp"
#include "gsedit/pipeline/metrics.hpp"
#include "gsedit/splat/scene.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace gsedit::pipeline {

/// A failure inside one pipeline stage; what() is the bare message.
class StageError : public std::runtime_error {
public:
    StageError(std::string stage, const std::string& message)
        : std::runtime_error(message), stage_(std::move(stage)) {}
    const std::string& stage() const { return stage_; }

private:
    std::string stage_;
};

struct EditJob {
    std::filesystem::path scene_path;
    std::filesystem::path cameras_path;
    diffusion::EditSpec edit;
    std::vector<int> reference_ids{0};
    double lambda = 0.5;
    int diffusion_steps = 50;
    double beta_start = 1e-4;
    double beta_end = 0.02;
    std::optional<std::filesystem::path> cimln_checkpoint;
    std::filesystem::path output_dir;
    std::uint64_t seed = 0;
    int refit_steps = 300;
    double refit_lr = 0.02;
    std::vector<int> save_latents_at;  // diffusion steps whose latents are written out

    /// Field checks that need no I/O.
    void validate() const;
};

/// Relative paths in the job resolve against `base_dir`.
EditJob job_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
nlohmann::json job_to_json(const EditJob& job);
EditJob load_job(const std::filesystem::path& path);

struct EditResult {
    splat::GaussianScene scene;
    MetricReport report;
    std::vector<numerics::DTensor> original;   // renders before editing
    std::vector<numerics::DTensor> edited;     // diffusion output, clamped to [0,1]
    std::vector<numerics::DTensor> rerender;   // renders of the refit scene
};

/// render -> enhance depth (with a checkpoint) -> edit loop -> refit ->
/// re-render -> metrics. Writes every intermediate into job.output_dir.
/// Throws StageError naming the failing stage.
EditResult edit_scene(const EditJob& job);

} // namespace gsedit::pipeline
