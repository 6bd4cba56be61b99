#pragma once

#include <vector>

#include "stylemill/model.hpp"
#include "stylemill/rng.hpp"

namespace sm {

enum class ScheduleKind { Linear, Cosine };

ScheduleKind parse_schedule_kind(const std::string& name);

// Cumulative signal fractions for an epsilon-prediction forward process.
// alpha_bar is strictly decreasing, within (0, 1], alpha_bar[0] ~ 1.
struct NoiseSchedule {
    std::vector<double> alpha_bar;
    ScheduleKind kind = ScheduleKind::Linear;

    static NoiseSchedule linear(int64_t steps);
    static NoiseSchedule cosine(int64_t steps);
    // For oracles/tests: explicit alpha_bar values (validated).
    static NoiseSchedule from_alpha_bar(std::vector<double> alpha_bar);

    int64_t steps() const { return static_cast<int64_t>(alpha_bar.size()); }
    double ab(int64_t t) const;
};

// x_t = sqrt(ab_t) x0 + sqrt(1 - ab_t) noise
Tensor q_sample(const Tensor& x0, int64_t t, const Tensor& noise, const NoiseSchedule& s);

struct GuidanceConfig {
    double s_text = 12.5;
    double s_style = 6.0;
};

// eps = eps_u + s_text (eps_t - eps_u) + s_style (eps_ts - eps_t),
// computed in expanded-coefficient form so (1,1) returns eps_ts exactly
// and s_style = 0 degrades to plain text CFG.
Tensor cfg_combine(const Tensor& eps_uncond, const Tensor& eps_text, const Tensor& eps_text_style,
                   const GuidanceConfig& g);

// Descending unique timesteps for a subsampled deterministic (eta = 0)
// DDIM loop; the final step lands on t = 0.
std::vector<int64_t> ddim_timesteps(int64_t train_steps, int64_t sample_steps);
Tensor predict_x0(const Tensor& x, const Tensor& eps, double ab_t);
// ab_prev = 1 finishes the chain (returns the x0 prediction).
Tensor ddim_step(const Tensor& x, const Tensor& eps, double ab_t, double ab_prev);

// ---- training ----

struct TrainItem {
    Tensor video;  // [T,H,W,3] target
    TextCond text;
    Tensor style_selected_rows;  // [k, D]; style stage only
    Tensor style_global;         // [C]; style stage only (frozen projector output)
    Tensor condition;            // [T,H,W,cc]; control stage only
};

struct TrainStepConfig {
    TrainStage stage = TrainStage::Base;
    double p_drop = 0.1;        // base/style stages: null-conditioning dropout
    double alpha_motion = 0.0;  // motion stage trains at 1.0
};

// One optimizer step of the epsilon-prediction MSE on a batch; gradients
// flow only into the params held by `opt` (the stage's trainable set).
// Returns the batch loss. Aborts on non-finite loss.
double training_step(StyleModel& model, const NoiseSchedule& sched,
                     const std::vector<TrainItem>& batch, Adam& opt, Rng& rng,
                     const TrainStepConfig& cfg);

// Independent dropout decisions for (text, style) conditioning.
struct DropDecision {
    bool drop_text = false;
    bool drop_style = false;
};
DropDecision draw_dropout(Rng& rng, double p_drop);

// ---- sampling ----

struct SampleRequest {
    int64_t frames = 8;
    int64_t steps = 50;
    TextCond text;                         // may be null
    const Tensor* style_tokens = nullptr;  // [M, C]
    const Tensor* condition = nullptr;     // [T,H,W,cc]; requires model.control
    GuidanceConfig guidance;
    double alpha_motion = -0.3;
    uint64_t seed = 0;
};

// Deterministic DDIM sampling with decoupled CFG (three denoiser
// evaluations per step); output clipped to [0, 1].
Tensor sample(const StyleModel& model, const NoiseSchedule& sched, const SampleRequest& req);

// Builds style tokens from a style image: projected global embedding +
// texture tokens of the k patches least similar to the prompt.
Tensor build_style_tokens(const StyleModel& model, const ImageEncoder& encoder,
                          const TextEmbedder& text_embedder, const Tensor& style_image,
                          const TextCond& text);

// Gray-tile (or ablation) conditioned style transfer of a content video.
struct TransferRequest {
    int64_t steps = 50;
    TextCond text;
    const Tensor* style_tokens = nullptr;
    ConditionKind condition_kind = ConditionKind::GrayTile;
    int64_t tile_factor = 4;
    CannyConfig canny;
    GuidanceConfig guidance;
    double alpha_motion = -0.3;
    uint64_t seed = 0;
};

Tensor style_transfer(const StyleModel& model, const NoiseSchedule& sched,
                      const Tensor& content_video, const TransferRequest& req);

}  // namespace sm
