#pragma once

#include <json.hpp>

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "stylemill/model.hpp"

namespace sm {

// Single-file checkpoint: metadata JSON + named-array table + one
// contiguous float32 little-endian blob. Arrays round-trip bitwise; any
// structural damage (bad magic/version/offsets, truncation) is a hard
// load error.
struct Checkpoint {
    nlohmann::ordered_json metadata;
    std::vector<std::pair<std::string, Tensor>> arrays;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// ---- model-level glue ----

// Architecture metadata block for a StyleModel.
nlohmann::ordered_json arch_metadata(const StyleModel& model);

// Errors out naming the field and both values on any mismatch.
void validate_arch(const nlohmann::ordered_json& meta, const ModelConfig& expected);

void save_model(const std::filesystem::path& path, StyleModel& model, const std::string& stage,
                uint64_t creation_seed);
StyleModel load_model(const std::filesystem::path& path);
std::string model_stage(const std::filesystem::path& path);  // stage recorded in metadata

// Projector-only checkpoint (the contrastive training artifact).
struct ProjectorCheckpoint {
    ProjectorParams params;
    std::vector<int64_t> hidden;
    uint64_t encoder_seed = 0;
    int64_t encoder_dim = 0;
    int64_t encoder_grid = 0;
    std::vector<double> epoch_loss;
};

void save_projector(const std::filesystem::path& path, const ProjectorCheckpoint& pc,
                    uint64_t creation_seed);
ProjectorCheckpoint load_projector(const std::filesystem::path& path);

}  // namespace sm
