#include "stylemill/dit.hpp"

#include <cmath>

#include "stylemill/error.hpp"
#include "stylemill/rng.hpp"

namespace sm {

void ModelConfig::validate() const {
    SM_CHECK(patch >= 1 && image_h % patch == 0 && image_w % patch == 0, "config: patch ", patch,
             " must divide image ", image_h, "x", image_w);
    SM_CHECK(width >= 2 && width % 2 == 0, "config: width must be even, got ", width);
    SM_CHECK(heads >= 1 && width % heads == 0, "config: heads ", heads, " must divide width ", width);
    SM_CHECK(blocks >= 1, "config: need at least one block");
    SM_CHECK(frames >= 1, "config: frames must be >= 1");
    SM_CHECK(ffn_mult >= 1, "config: ffn_mult must be >= 1");
    SM_CHECK(lora_rank >= 1, "config: lora rank must be >= 1");
    SM_CHECK(n_styles >= 1 && n_objects >= 1, "config: empty text id space");
}

Tensor sinusoidal_embedding(double pos, int64_t dim) {
    SM_CHECK(dim >= 2 && dim % 2 == 0, "sinusoidal_embedding: dim must be even");
    Tensor e({dim});
    const int64_t half = dim / 2;
    for (int64_t i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) /
                                     static_cast<double>(half));
        e[2 * i] = std::sin(pos * freq);
        e[2 * i + 1] = std::cos(pos * freq);
    }
    return e;
}

Tensor positional_table(const ModelConfig& cfg, int64_t frames) {
    const int64_t s = cfg.spatial_tokens(), c = cfg.width;
    Tensor table({frames * s, c});
    for (int64_t f = 0; f < frames; ++f) {
        const Tensor tf = sinusoidal_embedding(static_cast<double>(f), c);
        for (int64_t gy = 0; gy < cfg.grid_h(); ++gy) {
            const Tensor ty = sinusoidal_embedding(static_cast<double>(gy), c / 2);
            for (int64_t gx = 0; gx < cfg.grid_w(); ++gx) {
                const Tensor tx = sinusoidal_embedding(static_cast<double>(gx), c / 2);
                double* row = table.data() + (f * s + gy * cfg.grid_w() + gx) * c;
                for (int64_t i = 0; i < c / 2; ++i) {
                    row[i] = ty[i] + tf[i];
                    row[c / 2 + i] = tx[i] + tf[c / 2 + i];
                }
            }
        }
    }
    return table;
}

std::vector<int64_t> patchify_indices(const ModelConfig& cfg, int64_t frames, int64_t channels) {
    const int64_t p = cfg.patch, gw = cfg.grid_w(), gh = cfg.grid_h();
    const int64_t h = cfg.image_h, w = cfg.image_w;
    std::vector<int64_t> idx(static_cast<size_t>(frames * gh * gw * p * p * channels));
    size_t o = 0;
    for (int64_t f = 0; f < frames; ++f)
        for (int64_t gy = 0; gy < gh; ++gy)
            for (int64_t gx = 0; gx < gw; ++gx)
                for (int64_t py = 0; py < p; ++py)
                    for (int64_t px = 0; px < p; ++px)
                        for (int64_t c = 0; c < channels; ++c)
                            idx[o++] = ((f * h + gy * p + py) * w + gx * p + px) * channels + c;
    return idx;
}

std::vector<int64_t> unpatchify_indices(const ModelConfig& cfg, int64_t frames, int64_t channels) {
    const std::vector<int64_t> fwd = patchify_indices(cfg, frames, channels);
    std::vector<int64_t> inv(fwd.size());
    for (size_t i = 0; i < fwd.size(); ++i) inv[static_cast<size_t>(fwd[i])] = static_cast<int64_t>(i);
    return inv;
}

// ---- lora ----

Tensor lora_apply(const Tensor& x, const Tensor& w, const LoraFactor* adapter, double alpha) {
    Shape out_shape = x.shape();
    out_shape.back() = w.dim(1);
    Tensor y(out_shape);
    matmul_into(y, x, w);
    if (adapter && alpha != 0.0) {
        Tensor lo({x.rows(), adapter->down.value.dim(1)});
        matmul_into(lo, x, adapter->down.value);
        Tensor hi(out_shape);
        matmul_into(hi, lo, adapter->up.value);
        y.add_scaled_(hi, alpha);
    }
    return y;
}

ag::Var lora_apply(ag::Graph& g, Binder& bind, ag::Var x, ag::Var w, const LoraFactor* adapter,
                   double alpha) {
    ag::Var y = ag::linear(g, x, w, nullptr);
    if (adapter && alpha != 0.0) {
        ag::Var lo = ag::linear(g, x, bind(adapter->down), nullptr);
        ag::Var hi = ag::linear(g, lo, bind(adapter->up), nullptr);
        y = ag::add(g, y, ag::scale(g, hi, alpha));
    }
    return y;
}

namespace {

// Linear with an optional LoRA path on the weight matrix (bias untouched).
ag::Var linear_lora(ag::Graph& g, Binder& bind, const LinearParams& lp, const LoraFactor* f,
                    double alpha, ag::Var x) {
    ag::Var y = ag::linear(g, x, bind(lp.w), bind(lp.b));
    if (f && alpha != 0.0) {
        ag::Var lo = ag::linear(g, x, bind(f->down), nullptr);
        ag::Var hi = ag::linear(g, lo, bind(f->up), nullptr);
        y = ag::add(g, y, ag::scale(g, hi, alpha));
    }
    return y;
}

AttnParams init_attn(const std::string& name, int64_t width, Rng& rng, bool zero_out = false) {
    AttnParams a;
    a.wq = LinearParams::init(name + ".wq", width, width, rng);
    a.wk = LinearParams::init(name + ".wk", width, width, rng);
    a.wv = LinearParams::init(name + ".wv", width, width, rng);
    a.wo = LinearParams::init(name + ".wo", width, width, rng, zero_out);
    return a;
}

void collect_attn(AttnParams& a, ParamRefs& out) {
    a.wq.collect(out);
    a.wk.collect(out);
    a.wv.collect(out);
    a.wo.collect(out);
}

SublayerMod init_mod(const std::string& name, int64_t width, Rng& rng) {
    SublayerMod m;
    m.gain.name = name + ".gain";
    m.gain.value = Tensor::full({width}, 1.0);
    m.t_scale = LinearParams::init(name + ".t_scale", width, width, rng, /*zero_weights=*/true);
    return m;
}

void collect_mod(SublayerMod& m, ParamRefs& out) {
    out.push_back(&m.gain);
    m.t_scale.collect(out);
}

}  // namespace

ag::Var sublayer_modulate(ag::Graph& g, Binder& bind, const SublayerMod& mod, ag::Var x,
                          ag::Var t_emb) {
    const int64_t width = mod.gain.value.numel();
    ag::Var s = ag::add_scalar(g, mod.t_scale.forward(g, bind, t_emb), 1.0);
    ag::Var u = ag::rmsnorm(g, x, bind(mod.gain));
    return ag::row_scale(g, u, ag::reshape(g, s, {width}));
}

ag::Var self_attention_sublayer(ag::Graph& g, Binder& bind, const AttnParams& a, ag::Var u,
                                int64_t frames, int64_t sites, int heads, ag::AttnAxis axis,
                                const MotionAdapter* adapter, double alpha, bool identity_probs) {
    ag::Var q = linear_lora(g, bind, a.wq, adapter ? &adapter->q : nullptr, alpha, u);
    ag::Var k = linear_lora(g, bind, a.wk, adapter ? &adapter->k : nullptr, alpha, u);
    ag::Var v = linear_lora(g, bind, a.wv, adapter ? &adapter->v : nullptr, alpha, u);
    ag::Var o = ag::mha_self(g, q, k, v, frames, sites, heads, axis, identity_probs);
    return a.wo.forward(g, bind, o);
}

ag::Var cross_attention_sublayer(ag::Graph& g, Binder& bind, const AttnParams& a, ag::Var u,
                                 ag::Var kv_tokens, int heads) {
    ag::Var q = a.wq.forward(g, bind, u);
    ag::Var k = a.wk.forward(g, bind, kv_tokens);
    ag::Var v = a.wv.forward(g, bind, kv_tokens);
    return a.wo.forward(g, bind, ag::cross_attn(g, q, k, v, heads));
}

ag::Var dual_cross_attention(ag::Graph& g, Binder& bind, const AttnParams& tca,
                             const AttnParams& sca, ag::Var f_in, ag::Var text_tokens,
                             ag::Var style_tokens, int heads) {
    SM_CHECK(style_tokens->value.rows() >= 1, "dual_cross_attention: style token set is empty");
    SM_CHECK(style_tokens->value.cols() == f_in->value.cols(),
             "dual_cross_attention: style width ", style_tokens->value.cols(), " != ",
             f_in->value.cols());
    ag::Var t_out = cross_attention_sublayer(g, bind, tca, f_in, text_tokens, heads);
    ag::Var s_out = cross_attention_sublayer(g, bind, sca, f_in, style_tokens, heads);
    return ag::add(g, t_out, s_out);
}

void DiTBlockParams::collect(ParamRefs& out) {
    collect_mod(mod_2d, out);
    collect_mod(mod_temporal, out);
    collect_mod(mod_cross, out);
    collect_mod(mod_ffn, out);
    collect_attn(attn_2d, out);
    collect_attn(attn_temporal, out);
    collect_attn(tca, out);
    collect_attn(sca, out);
    ffn1.collect(out);
    ffn2.collect(out);
}

VideoDiT VideoDiT::init(const ModelConfig& cfg, uint64_t seed) {
    cfg.validate();
    Rng rng(mix_seed(seed, 0xD17));
    VideoDiT m;
    m.cfg = cfg;
    m.patch_embed = LinearParams::init("dit.patch_embed", cfg.patch_dim(), cfg.width, rng);
    m.t_mlp = MlpParams::init("dit.t_mlp", cfg.width, {cfg.width}, cfg.width, rng);
    m.text_style_emb.name = "dit.text_style_emb";
    m.text_style_emb.value = randn({cfg.n_styles, cfg.width}, rng, 0.5);
    m.text_object_emb.name = "dit.text_object_emb";
    m.text_object_emb.value = randn({cfg.n_objects, cfg.width}, rng, 0.5);
    m.text_null_emb.name = "dit.text_null_emb";
    m.text_null_emb.value = randn({1, cfg.width}, rng, 0.5);
    for (int b = 0; b < cfg.blocks; ++b) {
        const std::string base = "dit.block" + std::to_string(b);
        DiTBlockParams blk;
        blk.mod_2d = init_mod(base + ".mod_2d", cfg.width, rng);
        blk.mod_temporal = init_mod(base + ".mod_temporal", cfg.width, rng);
        blk.mod_cross = init_mod(base + ".mod_cross", cfg.width, rng);
        blk.mod_ffn = init_mod(base + ".mod_ffn", cfg.width, rng);
        blk.attn_2d = init_attn(base + ".attn2d", cfg.width, rng);
        blk.attn_temporal = init_attn(base + ".attn3d", cfg.width, rng);
        blk.tca = init_attn(base + ".tca", cfg.width, rng);
        blk.sca = init_attn(base + ".sca", cfg.width, rng, /*zero_out=*/true);
        blk.ffn1 = LinearParams::init(base + ".ffn1", cfg.width, cfg.width * cfg.ffn_mult, rng);
        blk.ffn2 = LinearParams::init(base + ".ffn2", cfg.width * cfg.ffn_mult, cfg.width, rng);
        m.block.push_back(std::move(blk));
    }
    m.head_gain.name = "dit.head.gain";
    m.head_gain.value = Tensor::full({cfg.width}, 1.0);
    m.head_scale = LinearParams::init("dit.head.t_scale", cfg.width, cfg.width, rng, true);
    m.head = LinearParams::init("dit.head.out", cfg.width, cfg.patch_dim(), rng, true);
    return m;
}

void VideoDiT::attach_adapters(uint64_t seed) {
    SM_CHECK(!adapters.has_value(), "adapters already attached");
    Rng rng(mix_seed(seed, 0x10AA));
    std::vector<MotionAdapter> list;
    for (int b = 0; b < cfg.blocks; ++b) {
        const std::string base = "motion.block" + std::to_string(b);
        MotionAdapter a;
        a.rank = cfg.lora_rank;
        auto mk = [&](const char* tag) {
            LoraFactor f;
            f.down.name = base + "." + tag + ".down";
            f.down.value = randn({cfg.width, cfg.lora_rank}, rng, 0.01);
            f.up.name = base + "." + tag + ".up";
            f.up.value = Tensor::zeros({cfg.lora_rank, cfg.width});
            return f;
        };
        a.q = mk("q");
        a.k = mk("k");
        a.v = mk("v");
        list.push_back(std::move(a));
    }
    adapters = std::move(list);
}

void VideoDiT::collect(ParamRefs& out) {
    patch_embed.collect(out);
    t_mlp.collect(out);
    out.push_back(&text_style_emb);
    out.push_back(&text_object_emb);
    out.push_back(&text_null_emb);
    for (auto& b : block) b.collect(out);
    out.push_back(&head_gain);
    head_scale.collect(out);
    head.collect(out);
    if (adapters)
        for (auto& a : *adapters)
            for (LoraFactor* f : {&a.q, &a.k, &a.v}) {
                out.push_back(&f->down);
                out.push_back(&f->up);
            }
}

Tensor VideoDiT::text_token(const TextCond& cond) const {
    Tensor t({1, cfg.width});
    if (cond.is_null) {
        for (int64_t j = 0; j < cfg.width; ++j) t[j] = text_null_emb.value[j];
        return t;
    }
    SM_CHECK(cond.style_id >= 0 && cond.style_id < cfg.n_styles, "unknown style id ", cond.style_id);
    SM_CHECK(cond.object_id >= 0 && cond.object_id < cfg.n_objects, "unknown object id ",
             cond.object_id);
    for (int64_t j = 0; j < cfg.width; ++j)
        t[j] = text_style_emb.value.at(cond.style_id, j) + text_object_emb.value.at(cond.object_id, j);
    return t;
}

ag::Var VideoDiT::text_token(ag::Graph& g, Binder& bind, const TextCond& cond) const {
    if (cond.is_null) return ag::take_row(g, bind(text_null_emb), 0);
    SM_CHECK(cond.style_id >= 0 && cond.style_id < cfg.n_styles, "unknown style id ", cond.style_id);
    SM_CHECK(cond.object_id >= 0 && cond.object_id < cfg.n_objects, "unknown object id ",
             cond.object_id);
    return ag::add(g, ag::take_row(g, bind(text_style_emb), cond.style_id),
                   ag::take_row(g, bind(text_object_emb), cond.object_id));
}

ag::Var dit_block(ag::Graph& g, Binder& bind, const DiTBlockParams& p, ag::Var x, ag::Var t_emb,
                  ag::Var text_tokens, ag::Var style_tokens, const MotionAdapter* adapter,
                  double alpha_motion, int64_t frames, int64_t sites, int heads,
                  ag::Var control_residual, bool identity_temporal_probs) {
    ag::Var u = sublayer_modulate(g, bind, p.mod_2d, x, t_emb);
    x = ag::add(g, x, self_attention_sublayer(g, bind, p.attn_2d, u, frames, sites, heads,
                                              ag::AttnAxis::Spatial, nullptr, 0.0));

    u = sublayer_modulate(g, bind, p.mod_temporal, x, t_emb);
    x = ag::add(g, x, self_attention_sublayer(g, bind, p.attn_temporal, u, frames, sites, heads,
                                              ag::AttnAxis::Temporal, adapter, alpha_motion,
                                              identity_temporal_probs));

    u = sublayer_modulate(g, bind, p.mod_cross, x, t_emb);
    x = ag::add(g, x, dual_cross_attention(g, bind, p.tca, p.sca, u, text_tokens, style_tokens, heads));

    u = sublayer_modulate(g, bind, p.mod_ffn, x, t_emb);
    x = ag::add(g, x, p.ffn2.forward(g, bind, ag::gelu(g, p.ffn1.forward(g, bind, u))));

    if (control_residual) {
        SM_CHECK(control_residual->value.same_shape(x->value), "control residual shape mismatch");
        x = ag::add(g, x, control_residual);
    }
    return x;
}

ag::Var denoiser_forward(ag::Graph& g, Binder& bind, const VideoDiT& m, ag::Var x,
                         const DenoiseVarArgs& args) {
    const ModelConfig& cfg = m.cfg;
    SM_CHECK(x->value.ndim() == 4 && x->value.dim(3) == 3, "denoiser: expected [T,H,W,3], got ",
             shape_str(x->value.shape()));
    SM_CHECK(x->value.dim(1) == cfg.image_h && x->value.dim(2) == cfg.image_w,
             "denoiser: image dims ", x->value.dim(1), "x", x->value.dim(2),
             " do not match config ", cfg.image_h, "x", cfg.image_w);
    const int64_t frames = x->value.dim(0);
    const int64_t sites = cfg.spatial_tokens();

    ag::Var style = args.style;
    if (!style) style = g.leaf(Tensor::zeros({1, cfg.width}));
    SM_CHECK(style->value.cols() == cfg.width && style->value.rows() >= 1,
             "denoiser: style tokens must be [M>=1, ", cfg.width, "]");

    if (args.control) {
        SM_CHECK(cfg.blocks % 2 == 0, "denoiser: control requires an even block count");
        SM_CHECK(static_cast<int>(args.control->size()) == cfg.blocks / 2,
                 "denoiser: expected ", cfg.blocks / 2, " control residuals, got ",
                 args.control->size());
    }
    if (m.adapters)
        SM_CHECK(static_cast<int>(m.adapters->size()) == cfg.blocks, "denoiser: adapter count mismatch");

    ag::Var tokens = ag::reindex(g, x, patchify_indices(cfg, frames),
                                 {frames * sites, cfg.patch_dim()});
    tokens = m.patch_embed.forward(g, bind, tokens);
    tokens = ag::add(g, tokens, g.leaf(positional_table(cfg, frames)));

    ag::Var t_emb = g.leaf(sinusoidal_embedding(static_cast<double>(args.t), cfg.width).reshaped(
        {1, cfg.width}));
    t_emb = m.t_mlp.forward(g, bind, t_emb);

    ag::Var text_tokens = m.text_token(g, bind, args.text);

    for (int b = 0; b < cfg.blocks; ++b) {
        const MotionAdapter* adapter = m.adapters ? &(*m.adapters)[static_cast<size_t>(b)] : nullptr;
        ag::Var residual = nullptr;
        if (args.control && b % 2 == 0) residual = (*args.control)[static_cast<size_t>(b / 2)];
        tokens = dit_block(g, bind, m.block[static_cast<size_t>(b)], tokens, t_emb, text_tokens,
                           style, adapter, args.alpha_motion, frames, sites, cfg.heads, residual,
                           args.identity_temporal_probs);
    }

    ag::Var u = ag::rmsnorm(g, tokens, bind(m.head_gain));
    ag::Var s = ag::add_scalar(g, m.head_scale.forward(g, bind, t_emb), 1.0);
    u = ag::row_scale(g, u, ag::reshape(g, s, {cfg.width}));
    ag::Var out = m.head.forward(g, bind, u);
    return ag::reindex(g, out, unpatchify_indices(cfg, frames),
                       {frames, cfg.image_h, cfg.image_w, 3});
}

Tensor denoiser_forward(const VideoDiT& m, const Tensor& x, const DenoiseArgs& args) {
    ag::Graph g;
    Binder bind(g);
    DenoiseVarArgs va;
    va.t = args.t;
    va.text = args.text;
    va.alpha_motion = args.alpha_motion;
    va.identity_temporal_probs = args.identity_temporal_probs;
    if (args.style_tokens) va.style = g.leaf(*args.style_tokens);
    std::vector<ag::Var> control_vars;
    if (args.control_residuals) {
        for (const Tensor& r : *args.control_residuals) control_vars.push_back(g.leaf(r));
        va.control = &control_vars;
    }
    return denoiser_forward(g, bind, m, g.leaf(x), va)->value;
}

}  // namespace sm
