#pragma once

#include <optional>
#include <vector>

#include "stylemill/nn.hpp"

namespace sm {

// Architecture hyperparameters shared by the backbone, the control stack
// and the checkpoints that persist them.
struct ModelConfig {
    int64_t image_h = 32, image_w = 32;
    int64_t frames = 8;
    int64_t patch = 4;
    int64_t width = 64;   // token width C
    int blocks = 4;       // B
    int heads = 4;
    int64_t ffn_mult = 4;
    int64_t n_styles = 15, n_objects = 15;
    int64_t lora_rank = 4;

    void validate() const;
    int64_t grid_h() const { return image_h / patch; }
    int64_t grid_w() const { return image_w / patch; }
    int64_t spatial_tokens() const { return grid_h() * grid_w(); }
    int64_t patch_dim() const { return patch * patch * 3; }
};

// Text conditioning is an id pair; the reserved null id backs
// classifier-free guidance.
struct TextCond {
    bool is_null = true;
    int64_t style_id = 0, object_id = 0;

    static TextCond null_cond() { return {}; }
    static TextCond ids(int64_t style, int64_t object) { return {false, style, object}; }
};

// Low-rank factors for one temporal-attention projection:
// y = x W + alpha * (x A_down) A_up. A_up starts at zero so a fresh
// adapter is a no-op at any alpha.
struct LoraFactor {
    Param down;  // [C, r]
    Param up;    // [r, C]
};

struct MotionAdapter {
    LoraFactor q, k, v;
    int64_t rank = 0;
    double alpha = 1.0;  // training-time scale; inference overrides per call
};

// y = x W + alpha * (x A_down) A_up, factored (never materializes the
// merged weight). adapter == nullptr behaves as alpha = 0.
Tensor lora_apply(const Tensor& x, const Tensor& w, const LoraFactor* adapter, double alpha);
ag::Var lora_apply(ag::Graph& g, Binder& bind, ag::Var x, ag::Var w, const LoraFactor* adapter,
                   double alpha);

struct AttnParams {
    LinearParams wq, wk, wv, wo;
};

// RMSNorm gain plus the timestep-scale projection feeding it:
// u = (1 + W_s t_emb) * RMSNorm(x).
struct SublayerMod {
    Param gain;
    LinearParams t_scale;  // zero-init: scale starts at exactly 1
};

struct DiTBlockParams {
    SublayerMod mod_2d, mod_temporal, mod_cross, mod_ffn;
    AttnParams attn_2d;
    AttnParams attn_temporal;
    AttnParams tca;  // text cross-attention
    AttnParams sca;  // style cross-attention; wo zero-init at creation
    LinearParams ffn1, ffn2;

    void collect(ParamRefs& out);
};

// F_out = TCA(F_in, text) + SCA(F_in, style). Style must have >= 1 row.
ag::Var dual_cross_attention(ag::Graph& g, Binder& bind, const AttnParams& tca,
                             const AttnParams& sca, ag::Var f_in, ag::Var text_tokens,
                             ag::Var style_tokens, int heads);

// u = (1 + W_s t_emb) * RMSNorm(x); shared by backbone and control blocks.
ag::Var sublayer_modulate(ag::Graph& g, Binder& bind, const SublayerMod& mod, ag::Var x,
                          ag::Var t_emb);
// Projected self-attention sublayer (optionally LoRA-adapted q/k/v).
ag::Var self_attention_sublayer(ag::Graph& g, Binder& bind, const AttnParams& a, ag::Var u,
                                int64_t frames, int64_t sites, int heads, ag::AttnAxis axis,
                                const MotionAdapter* adapter, double alpha,
                                bool identity_probs = false);
// Plain cross-attention sublayer over a fixed key/value token set.
ag::Var cross_attention_sublayer(ag::Graph& g, Binder& bind, const AttnParams& a, ag::Var u,
                                 ag::Var kv_tokens, int heads);

// Toy video diffusion transformer: patchify -> B blocks of
// (2D self-attn, temporal self-attn with LoRA, dual cross-attn, FFN),
// each sublayer gated by RMSNorm and a timestep scale -> linear head ->
// unpatchify. Epsilon-prediction, pixel space.
struct VideoDiT {
    ModelConfig cfg;
    LinearParams patch_embed;
    MlpParams t_mlp;
    Param text_style_emb;   // [n_styles, C]
    Param text_object_emb;  // [n_objects, C]
    Param text_null_emb;    // [1, C]
    std::vector<DiTBlockParams> block;
    Param head_gain;
    LinearParams head_scale;  // timestep scale for the head norm
    LinearParams head;        // zero-init

    std::optional<std::vector<MotionAdapter>> adapters;  // one per block when attached

    static VideoDiT init(const ModelConfig& cfg, uint64_t seed);
    void attach_adapters(uint64_t seed);

    // Base backbone params ("dit."), adapters ("motion.") when attached.
    void collect(ParamRefs& out);

    Tensor text_token(const TextCond& cond) const;  // [1, C]
    ag::Var text_token(ag::Graph& g, Binder& bind, const TextCond& cond) const;
};

struct DenoiseArgs {
    int64_t t = 0;  // timestep index into the training schedule
    TextCond text;
    const Tensor* style_tokens = nullptr;  // [M, C]; null = all-zero style (CFG null)
    const std::vector<Tensor>* control_residuals = nullptr;  // B/2 token-shaped tensors
    double alpha_motion = 0.0;
    bool identity_temporal_probs = false;  // test hook: ablate temporal mixing
};

// Graph-level variant; style/control enter as graph vars so gradients can
// flow into the branches that produced them.
struct DenoiseVarArgs {
    int64_t t = 0;
    TextCond text;
    ag::Var style = nullptr;
    const std::vector<ag::Var>* control = nullptr;
    double alpha_motion = 0.0;
    bool identity_temporal_probs = false;
};

// One block. x is the token grid [T*S, C]; control_residual may be null.
ag::Var dit_block(ag::Graph& g, Binder& bind, const DiTBlockParams& p, ag::Var x, ag::Var t_emb,
                  ag::Var text_tokens, ag::Var style_tokens, const MotionAdapter* adapter,
                  double alpha_motion, int64_t frames, int64_t sites, int heads,
                  ag::Var control_residual = nullptr, bool identity_temporal_probs = false);

// Full forward; x is [T, H, W, 3], the result has the same shape.
ag::Var denoiser_forward(ag::Graph& g, Binder& bind, const VideoDiT& m, ag::Var x,
                         const DenoiseVarArgs& args);
Tensor denoiser_forward(const VideoDiT& m, const Tensor& x, const DenoiseArgs& args);

// Sinusoidal embedding of a scalar position.
Tensor sinusoidal_embedding(double pos, int64_t dim);
// Fixed per-token positional table ([T*S, C]): 2D spatial halves + frame term.
Tensor positional_table(const ModelConfig& cfg, int64_t frames);

// Patchify index maps: token layout [T*S, p*p*ch] <-> pixel layout [T,H,W,ch].
std::vector<int64_t> patchify_indices(const ModelConfig& cfg, int64_t frames, int64_t channels = 3);
std::vector<int64_t> unpatchify_indices(const ModelConfig& cfg, int64_t frames, int64_t channels = 3);

}  // namespace sm
