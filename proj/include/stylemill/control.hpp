#pragma once

#include <vector>

#include "stylemill/dit.hpp"

namespace sm {

enum class ConditionKind { GrayTile, RgbTile, Canny };

std::string condition_kind_name(ConditionKind k);
ConditionKind parse_condition_kind(const std::string& name);
int64_t condition_channels(ConditionKind k);

// Rec.601 luma. Pixels with equal channels pass through unchanged, so
// grayscale inputs are fixed points.
Tensor to_gray(const Tensor& image);        // [H,W,3] -> [H,W,1]
Tensor to_gray_video(const Tensor& video);  // [T,H,W,3] -> [T,H,W,1]

// s x s average pooling followed by nearest-neighbor upsampling; the
// factor must divide both spatial dims. Idempotent.
Tensor tile_blur(const Tensor& image, int64_t s);        // [H,W,C]
Tensor tile_blur_video(const Tensor& video, int64_t s);  // [T,H,W,C]

struct CannyConfig {
    double low = 0.1;
    double high = 0.3;
};

// Two-threshold edge map with gaussian smoothing, non-maximum suppression
// and hysteresis; output is binary {0, 1}.
Tensor canny_edges(const Tensor& image, const CannyConfig& cfg = {});  // [H,W,3] -> [H,W,1]

// Content condition for transfer: gray tile by default, RGB tile and
// Canny kept for the condition ablation.
struct TileCondition {
    Tensor video;  // [T,H,W,cc]
    int64_t tile_factor = 1;
    ConditionKind kind = ConditionKind::GrayTile;
};

TileCondition make_condition(const Tensor& content_video, ConditionKind kind, int64_t tile_factor,
                             const CannyConfig& canny = {});

// Vanilla block: 2D self-attn, temporal attn, text cross-attn, FFN.
// No style cross-attention, no motion adapter. out_proj (zero-init)
// emits the residual handed to the style network.
struct ControlBlockParams {
    SublayerMod mod_2d, mod_temporal, mod_cross, mod_ffn;
    AttnParams attn_2d, attn_temporal, tca;
    LinearParams ffn1, ffn2;
    LinearParams out_proj;

    void collect(ParamRefs& out);
};

// B/2 vanilla blocks fed by the patchified channel-concat of x_t and the
// condition; residual i is added to style block 2i.
struct ControlStack {
    ModelConfig cfg;
    int64_t cond_channels = 1;
    LinearParams patch_embed;
    MlpParams t_mlp;
    std::vector<ControlBlockParams> block;

    static ControlStack init(const ModelConfig& cfg, int64_t cond_channels, uint64_t seed);
    void collect(ParamRefs& out);
};

std::vector<ag::Var> control_forward(ag::Graph& g, Binder& bind, const ControlStack& cs, ag::Var x,
                                     ag::Var cond, ag::Var text_tokens, int64_t t);
std::vector<Tensor> control_forward(const ControlStack& cs, const Tensor& x, const Tensor& cond,
                                    const Tensor& text_tokens, int64_t t);

}  // namespace sm
