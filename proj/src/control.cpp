#include "stylemill/control.hpp"

#include <cmath>
#include <deque>

#include "stylemill/error.hpp"
#include "stylemill/rng.hpp"

namespace sm {

std::string condition_kind_name(ConditionKind k) {
    switch (k) {
        case ConditionKind::GrayTile: return "gray_tile";
        case ConditionKind::RgbTile: return "rgb_tile";
        case ConditionKind::Canny: return "canny";
    }
    fail("bad ConditionKind");
}

ConditionKind parse_condition_kind(const std::string& name) {
    if (name == "gray_tile") return ConditionKind::GrayTile;
    if (name == "rgb_tile") return ConditionKind::RgbTile;
    if (name == "canny") return ConditionKind::Canny;
    fail("unknown condition kind '", name, "'");
}

int64_t condition_channels(ConditionKind k) { return k == ConditionKind::RgbTile ? 3 : 1; }

Tensor to_gray(const Tensor& image) {
    SM_CHECK(image.ndim() == 3 && image.dim(2) == 3, "to_gray: expected [H,W,3], got ",
             shape_str(image.shape()));
    const int64_t h = image.dim(0), w = image.dim(1);
    Tensor out({h, w, 1});
    for (int64_t i = 0; i < h * w; ++i) {
        const double r = image[i * 3], g = image[i * 3 + 1], b = image[i * 3 + 2];
        out[i] = (r == g && g == b) ? r : 0.299 * r + 0.587 * g + 0.114 * b;
    }
    return out;
}

Tensor to_gray_video(const Tensor& video) {
    SM_CHECK(video.ndim() == 4 && video.dim(3) == 3, "to_gray_video: expected [T,H,W,3]");
    const int64_t t = video.dim(0), h = video.dim(1), w = video.dim(2);
    Tensor out({t, h, w, 1});
    for (int64_t i = 0; i < t * h * w; ++i) {
        const double r = video[i * 3], g = video[i * 3 + 1], b = video[i * 3 + 2];
        out[i] = (r == g && g == b) ? r : 0.299 * r + 0.587 * g + 0.114 * b;
    }
    return out;
}

Tensor tile_blur(const Tensor& image, int64_t s) {
    SM_CHECK(image.ndim() == 3, "tile_blur: expected [H,W,C]");
    const int64_t h = image.dim(0), w = image.dim(1), c = image.dim(2);
    SM_CHECK(s >= 1 && h % s == 0 && w % s == 0, "tile_blur: factor ", s, " must divide dims ", h,
             "x", w);
    if (s == 1) return image;
    Tensor out(image.shape());
    const double inv = 1.0 / static_cast<double>(s * s);
    for (int64_t by = 0; by < h / s; ++by)
        for (int64_t bx = 0; bx < w / s; ++bx)
            for (int64_t ch = 0; ch < c; ++ch) {
                const double first = image[(by * s * w + bx * s) * c + ch];
                double sum = 0.0;
                bool constant = true;
                for (int64_t oy = 0; oy < s; ++oy)
                    for (int64_t ox = 0; ox < s; ++ox) {
                        const double v = image[((by * s + oy) * w + bx * s + ox) * c + ch];
                        constant = constant && v == first;
                        sum += v;
                    }
                // constant blocks pass through exactly (keeps the op idempotent)
                const double avg = constant ? first : sum * inv;
                for (int64_t oy = 0; oy < s; ++oy)
                    for (int64_t ox = 0; ox < s; ++ox)
                        out[((by * s + oy) * w + bx * s + ox) * c + ch] = avg;
            }
    return out;
}

Tensor tile_blur_video(const Tensor& video, int64_t s) {
    SM_CHECK(video.ndim() == 4, "tile_blur_video: expected [T,H,W,C]");
    const int64_t t = video.dim(0), h = video.dim(1), w = video.dim(2), c = video.dim(3);
    Tensor out(video.shape());
    const int64_t stride = h * w * c;
    for (int64_t f = 0; f < t; ++f) {
        Tensor frame({h, w, c});
        for (int64_t i = 0; i < stride; ++i) frame[i] = video[f * stride + i];
        const Tensor blurred = tile_blur(frame, s);
        for (int64_t i = 0; i < stride; ++i) out[f * stride + i] = blurred[i];
    }
    return out;
}

Tensor canny_edges(const Tensor& image, const CannyConfig& cfg) {
    SM_CHECK(cfg.low <= cfg.high, "canny: low threshold above high");
    const Tensor gray = to_gray(image);
    const int64_t h = gray.dim(0), w = gray.dim(1);

    // 5x5 gaussian, sigma ~1.4, reflect borders
    static const double k[5] = {0.0545, 0.2442, 0.4026, 0.2442, 0.0545};
    auto reflect = [](int64_t i, int64_t n) {
        if (i < 0) return -i;
        if (i >= n) return 2 * n - 2 - i;
        return i;
    };
    Tensor tmp({h, w}), smooth({h, w});
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) {
            double s = 0.0, wsum = 0.0;
            for (int d = -2; d <= 2; ++d) {
                s += k[d + 2] * gray[y * w + reflect(x + d, w)];
                wsum += k[d + 2];
            }
            tmp[y * w + x] = s / wsum;
        }
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) {
            double s = 0.0, wsum = 0.0;
            for (int d = -2; d <= 2; ++d) {
                s += k[d + 2] * tmp[reflect(y + d, h) * w + x];
                wsum += k[d + 2];
            }
            smooth[y * w + x] = s / wsum;
        }

    // Sobel
    Tensor mag({h, w}), dir({h, w});
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) {
            auto at = [&](int64_t yy, int64_t xx) { return smooth[reflect(yy, h) * w + reflect(xx, w)]; };
            const double gx = at(y - 1, x + 1) + 2 * at(y, x + 1) + at(y + 1, x + 1) -
                              at(y - 1, x - 1) - 2 * at(y, x - 1) - at(y + 1, x - 1);
            const double gy = at(y + 1, x - 1) + 2 * at(y + 1, x) + at(y + 1, x + 1) -
                              at(y - 1, x - 1) - 2 * at(y - 1, x) - at(y - 1, x + 1);
            mag[y * w + x] = std::sqrt(gx * gx + gy * gy);
            dir[y * w + x] = std::atan2(gy, gx);
        }

    // Non-maximum suppression along the quantized gradient direction.
    Tensor thin({h, w});
    for (int64_t y = 1; y + 1 < h; ++y)
        for (int64_t x = 1; x + 1 < w; ++x) {
            const double a = dir[y * w + x];
            const int sector = static_cast<int>(std::lround(a / (3.14159265358979323846 / 4.0))) & 3;
            int64_t dy = 0, dx = 0;
            switch (sector) {
                case 0: dy = 0; dx = 1; break;
                case 1: dy = 1; dx = 1; break;
                case 2: dy = 1; dx = 0; break;
                default: dy = 1; dx = -1; break;
            }
            const double m = mag[y * w + x];
            if (m >= mag[(y + dy) * w + x + dx] && m >= mag[(y - dy) * w + x - dx])
                thin[y * w + x] = m;
        }

    // Double threshold + hysteresis (8-connected).
    Tensor out({h, w, 1});
    std::deque<int64_t> queue;
    std::vector<uint8_t> weak(static_cast<size_t>(h * w), 0);
    for (int64_t i = 0; i < h * w; ++i) {
        if (thin[i] >= cfg.high) {
            out[i] = 1.0;
            queue.push_back(i);
        } else if (thin[i] >= cfg.low) {
            weak[static_cast<size_t>(i)] = 1;
        }
    }
    while (!queue.empty()) {
        const int64_t i = queue.front();
        queue.pop_front();
        const int64_t y = i / w, x = i % w;
        for (int64_t dy = -1; dy <= 1; ++dy)
            for (int64_t dx = -1; dx <= 1; ++dx) {
                const int64_t yy = y + dy, xx = x + dx;
                if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
                const int64_t j = yy * w + xx;
                if (weak[static_cast<size_t>(j)] && out[j] == 0.0) {
                    out[j] = 1.0;
                    queue.push_back(j);
                }
            }
    }
    return out;
}

TileCondition make_condition(const Tensor& content_video, ConditionKind kind, int64_t tile_factor,
                             const CannyConfig& canny) {
    SM_CHECK(content_video.ndim() == 4 && content_video.dim(3) == 3,
             "make_condition: expected [T,H,W,3]");
    TileCondition cond;
    cond.kind = kind;
    cond.tile_factor = tile_factor;
    switch (kind) {
        case ConditionKind::GrayTile:
            cond.video = tile_blur_video(to_gray_video(content_video), tile_factor);
            break;
        case ConditionKind::RgbTile:
            cond.video = tile_blur_video(content_video, tile_factor);
            break;
        case ConditionKind::Canny: {
            const int64_t t = content_video.dim(0), h = content_video.dim(1), w = content_video.dim(2);
            cond.video = Tensor({t, h, w, 1});
            for (int64_t f = 0; f < t; ++f) {
                Tensor frame({h, w, 3});
                for (int64_t i = 0; i < h * w * 3; ++i) frame[i] = content_video[f * h * w * 3 + i];
                const Tensor e = canny_edges(frame, canny);
                for (int64_t i = 0; i < h * w; ++i) cond.video[f * h * w + i] = e[i];
            }
            break;
        }
    }
    return cond;
}

void ControlBlockParams::collect(ParamRefs& out) {
    for (SublayerMod* m : {&mod_2d, &mod_temporal, &mod_cross, &mod_ffn}) {
        out.push_back(&m->gain);
        m->t_scale.collect(out);
    }
    for (AttnParams* a : {&attn_2d, &attn_temporal, &tca}) {
        a->wq.collect(out);
        a->wk.collect(out);
        a->wv.collect(out);
        a->wo.collect(out);
    }
    ffn1.collect(out);
    ffn2.collect(out);
    out_proj.collect(out);
}

namespace {

SublayerMod init_cmod(const std::string& name, int64_t width, Rng& rng) {
    SublayerMod m;
    m.gain.name = name + ".gain";
    m.gain.value = Tensor::full({width}, 1.0);
    m.t_scale = LinearParams::init(name + ".t_scale", width, width, rng, true);
    return m;
}

AttnParams init_cattn(const std::string& name, int64_t width, Rng& rng) {
    AttnParams a;
    a.wq = LinearParams::init(name + ".wq", width, width, rng);
    a.wk = LinearParams::init(name + ".wk", width, width, rng);
    a.wv = LinearParams::init(name + ".wv", width, width, rng);
    a.wo = LinearParams::init(name + ".wo", width, width, rng);
    return a;
}

}  // namespace

ControlStack ControlStack::init(const ModelConfig& cfg, int64_t cond_channels, uint64_t seed) {
    cfg.validate();
    SM_CHECK(cfg.blocks % 2 == 0, "control: backbone block count ", cfg.blocks, " must be even");
    SM_CHECK(cond_channels == 1 || cond_channels == 3, "control: condition channels must be 1 or 3");
    Rng rng(mix_seed(seed, 0xC0));
    ControlStack cs;
    cs.cfg = cfg;
    cs.cond_channels = cond_channels;
    cs.patch_embed = LinearParams::init("control.patch_embed",
                                        cfg.patch * cfg.patch * (3 + cond_channels), cfg.width, rng);
    cs.t_mlp = MlpParams::init("control.t_mlp", cfg.width, {cfg.width}, cfg.width, rng);
    for (int b = 0; b < cfg.blocks / 2; ++b) {
        const std::string base = "control.block" + std::to_string(b);
        ControlBlockParams blk;
        blk.mod_2d = init_cmod(base + ".mod_2d", cfg.width, rng);
        blk.mod_temporal = init_cmod(base + ".mod_temporal", cfg.width, rng);
        blk.mod_cross = init_cmod(base + ".mod_cross", cfg.width, rng);
        blk.mod_ffn = init_cmod(base + ".mod_ffn", cfg.width, rng);
        blk.attn_2d = init_cattn(base + ".attn2d", cfg.width, rng);
        blk.attn_temporal = init_cattn(base + ".attn3d", cfg.width, rng);
        blk.tca = init_cattn(base + ".tca", cfg.width, rng);
        blk.ffn1 = LinearParams::init(base + ".ffn1", cfg.width, cfg.width * cfg.ffn_mult, rng);
        blk.ffn2 = LinearParams::init(base + ".ffn2", cfg.width * cfg.ffn_mult, cfg.width, rng);
        blk.out_proj = LinearParams::init(base + ".out_proj", cfg.width, cfg.width, rng,
                                          /*zero_weights=*/true);
        cs.block.push_back(std::move(blk));
    }
    return cs;
}

void ControlStack::collect(ParamRefs& out) {
    patch_embed.collect(out);
    t_mlp.collect(out);
    for (auto& b : block) b.collect(out);
}

std::vector<ag::Var> control_forward(ag::Graph& g, Binder& bind, const ControlStack& cs, ag::Var x,
                                     ag::Var cond, ag::Var text_tokens, int64_t t) {
    const ModelConfig& cfg = cs.cfg;
    SM_CHECK(x->value.ndim() == 4 && x->value.dim(3) == 3, "control: x must be [T,H,W,3]");
    SM_CHECK(cond->value.ndim() == 4 && cond->value.dim(3) == cs.cond_channels,
             "control: condition must be [T,H,W,", cs.cond_channels, "], got ",
             shape_str(cond->value.shape()));
    SM_CHECK(cond->value.dim(0) == x->value.dim(0) && cond->value.dim(1) == x->value.dim(1) &&
                 cond->value.dim(2) == x->value.dim(2),
             "control: condition dims do not match target");
    SM_CHECK(cond->value.all_finite(), "control: non-finite condition");
    const int64_t frames = x->value.dim(0);
    const int64_t sites = cfg.spatial_tokens();

    ag::Var tok_x = ag::reindex(g, x, patchify_indices(cfg, frames, 3),
                                {frames * sites, cfg.patch * cfg.patch * 3});
    ag::Var tok_c = ag::reindex(g, cond, patchify_indices(cfg, frames, cs.cond_channels),
                                {frames * sites, cfg.patch * cfg.patch * cs.cond_channels});
    ag::Var tokens = cs.patch_embed.forward(g, bind, ag::concat_cols(g, tok_x, tok_c));
    tokens = ag::add(g, tokens, g.leaf(positional_table(cfg, frames)));

    ag::Var t_emb = g.leaf(sinusoidal_embedding(static_cast<double>(t), cfg.width).reshaped(
        {1, cfg.width}));
    t_emb = cs.t_mlp.forward(g, bind, t_emb);

    std::vector<ag::Var> residuals;
    for (const auto& p : cs.block) {
        ag::Var u = sublayer_modulate(g, bind, p.mod_2d, tokens, t_emb);
        tokens = ag::add(g, tokens, self_attention_sublayer(g, bind, p.attn_2d, u, frames, sites,
                                                            cfg.heads, ag::AttnAxis::Spatial,
                                                            nullptr, 0.0));
        u = sublayer_modulate(g, bind, p.mod_temporal, tokens, t_emb);
        tokens = ag::add(g, tokens, self_attention_sublayer(g, bind, p.attn_temporal, u, frames,
                                                            sites, cfg.heads, ag::AttnAxis::Temporal,
                                                            nullptr, 0.0));
        u = sublayer_modulate(g, bind, p.mod_cross, tokens, t_emb);
        tokens = ag::add(g, tokens, cross_attention_sublayer(g, bind, p.tca, u, text_tokens, cfg.heads));
        u = sublayer_modulate(g, bind, p.mod_ffn, tokens, t_emb);
        tokens = ag::add(g, tokens, p.ffn2.forward(g, bind, ag::gelu(g, p.ffn1.forward(g, bind, u))));
        residuals.push_back(p.out_proj.forward(g, bind, tokens));
    }
    return residuals;
}

std::vector<Tensor> control_forward(const ControlStack& cs, const Tensor& x, const Tensor& cond,
                                    const Tensor& text_tokens, int64_t t) {
    ag::Graph g;
    Binder bind(g);
    auto vars = control_forward(g, bind, cs, g.leaf(x), g.leaf(cond), g.leaf(text_tokens), t);
    std::vector<Tensor> out;
    out.reserve(vars.size());
    for (ag::Var v : vars) out.push_back(v->value);
    return out;
}

}  // namespace sm
