#pragma once

#include <json.hpp>

#include <filesystem>
#include <string>

#include "stylemill/control.hpp"
#include "stylemill/corpus.hpp"
#include "stylemill/diffusion.hpp"

namespace sm {

// Flat key-value run configuration. Every tunable named by the project
// has a default here; unknown keys in a config file are hard errors, and
// every run logs the fully resolved document.
struct RunConfig {
    // model architecture
    int64_t image_h = 32, image_w = 32;
    int64_t frames = 8;
    int64_t patch = 4;
    int64_t width = 64;
    int64_t blocks = 4;
    int64_t heads = 4;
    int64_t ffn_mult = 4;
    int64_t lora_rank = 4;
    int64_t n_styles = 15, n_objects = 15;

    // encoder
    int64_t encoder_dim = 64;
    int64_t encoder_grid = 4;  // square patch grid
    uint64_t encoder_seed = 1234;

    // style extractor
    int64_t n_query_tokens = 4;
    int64_t keep_k = 0;  // 0 = auto: max(1, round(0.06 * P))
    int64_t agg_heads = 4;
    double alpha_margin = 0.5;
    double mse_lambda = 1.0;
    int64_t projector_hidden = 128;

    // projector training recipe
    int64_t projector_epochs = 100;
    int64_t projector_batch = 8;
    double projector_lr = 1e-4;

    // diffusion substrate
    std::string schedule = "linear";
    int64_t train_timesteps = 1000;
    int64_t sample_steps = 50;
    int64_t dataset_steps = 20;  // reverse steps for pair generation

    // guidance
    double cfg_text = 12.5;
    double cfg_style = 6.0;

    // motion adapter
    double alpha_motion = -0.3;      // inference default
    double motion_train_alpha = 1.0; // still-video training scale
    // conditioning dropout (base & style stages)
    double p_drop = 0.1;

    // stage recipes
    int64_t base_steps = 3000, base_batch = 4;
    double base_lr = 1e-3;
    int64_t motion_steps = 2000, motion_batch = 4;
    double motion_lr = 1e-3;
    int64_t style_steps = 5000, style_batch = 4;
    double style_lr = 1e-3;
    int64_t control_steps = 3000, control_batch = 4;
    double control_lr = 1e-3;

    // content control
    int64_t tile_factor = 4;
    std::string condition = "gray_tile";
    double canny_low = 0.1;
    double canny_high = 0.3;

    // pair dataset
    int64_t jigsaw_rows = 4, jigsaw_cols = 4;
    bool jigsaw_rotate = false;
    int64_t gen_workers = 1;

    // procedural corpus
    uint64_t corpus_seed = 77;
    double corpus_min_speed = 1.0;
    double corpus_max_speed = 3.0;

    static RunConfig defaults() { return {}; }
    static RunConfig from_json(const nlohmann::ordered_json& j);
    static RunConfig from_file(const std::filesystem::path& path);
    nlohmann::ordered_json to_json() const;

    void validate() const;
    ModelConfig model_config() const;
    CorpusConfig corpus_config() const;
    NoiseSchedule make_schedule() const;
    GuidanceConfig guidance() const { return {cfg_text, cfg_style}; }
    int64_t resolved_keep_k() const;
};

}  // namespace sm
