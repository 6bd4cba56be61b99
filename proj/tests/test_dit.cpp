#include <doctest.h>

#include "fd_check.hpp"
#include "stylemill/dit.hpp"
#include "stylemill/rng.hpp"

using namespace sm;

namespace {

ModelConfig mini_config() {
    ModelConfig c;
    c.image_h = 8;
    c.image_w = 8;
    c.frames = 2;
    c.patch = 4;
    c.width = 16;
    c.blocks = 2;
    c.heads = 2;
    c.ffn_mult = 2;
    c.n_styles = 3;
    c.n_objects = 3;
    c.lora_rank = 2;
    return c;
}

Tensor rand_t(Shape shape, uint64_t seed, double scale = 1.0) {
    Rng rng(seed);
    return randn(std::move(shape), rng, scale);
}

// Fresh models have a zero-init head (output identically zero); give it
// weight so output-sensitivity checks are meaningful.
void randomize_head(VideoDiT& m, uint64_t seed) {
    Rng rng(seed);
    m.head.w.value = randn(m.head.w.value.shape(), rng, 0.2);
}

MotionAdapter random_adapter(int64_t width, int64_t rank, uint64_t seed) {
    Rng rng(seed);
    MotionAdapter a;
    a.rank = rank;
    auto mk = [&](const char* tag) {
        LoraFactor f;
        f.down.name = std::string("t.") + tag + ".down";
        f.down.value = randn({width, rank}, rng, 0.3);
        f.up.name = std::string("t.") + tag + ".up";
        f.up.value = randn({rank, width}, rng, 0.3);
        return f;
    };
    a.q = mk("q");
    a.k = mk("k");
    a.v = mk("v");
    return a;
}

}  // namespace

TEST_CASE("lora_apply: alpha = 0 leaves the base projection unchanged") {
    const Tensor x = rand_t({3, 4}, 1);
    const Tensor w = rand_t({4, 4}, 2);
    MotionAdapter a = random_adapter(4, 2, 3);
    Tensor base({3, 4});
    matmul_into(base, x, w);
    CHECK(max_abs_diff(lora_apply(x, w, &a.q, 0.0), base) == 0.0);
    CHECK(max_abs_diff(lora_apply(x, w, nullptr, 1.0), base) == 0.0);
}

TEST_CASE("lora_apply: rank-1 unit factors reproduce the unit vector") {
    // r=1, A_down = e1, A_up = e1^T, alpha=1, x = e1^T, W = 0 -> y = e1^T
    const int64_t d = 4;
    Tensor x = Tensor::zeros({1, d});
    x[0] = 1.0;
    const Tensor w = Tensor::zeros({d, d});
    LoraFactor f;
    f.down.value = Tensor::zeros({d, 1});
    f.down.value[0] = 1.0;
    f.up.value = Tensor::zeros({1, d});
    f.up.value[0] = 1.0;
    const Tensor y = lora_apply(x, w, &f, 1.0);
    CHECK(y[0] == 1.0);
    for (int64_t j = 1; j < d; ++j) CHECK(y[j] == 0.0);
}

TEST_CASE("lora_apply is linear in alpha") {
    const Tensor x = rand_t({3, 6}, 4);
    const Tensor w = rand_t({6, 6}, 5);
    MotionAdapter a = random_adapter(6, 2, 6);
    const Tensor y0 = lora_apply(x, w, &a.v, 0.0);
    const Tensor y1 = lora_apply(x, w, &a.v, 1.0);
    const Tensor y2 = lora_apply(x, w, &a.v, 2.0);
    for (int64_t i = 0; i < y0.numel(); ++i)
        CHECK(y2[i] - y0[i] == doctest::Approx(2.0 * (y1[i] - y0[i])).epsilon(1e-9));
}

TEST_CASE("lora path gradients match finite differences") {
    auto build = [](ag::Graph& g, std::vector<ag::Var>& v) {
        // v: x, W, A_down, A_up
        ag::Var base = ag::linear(g, v[0], v[1], nullptr);
        ag::Var lo = ag::linear(g, v[0], v[2], nullptr);
        ag::Var hi = ag::linear(g, lo, v[3], nullptr);
        ag::Var y = ag::add(g, base, ag::scale(g, hi, 0.7));
        return ag::mean_all(g, ag::mul(g, y, y));
    };
    auto rep = testing::fd_check(
        {rand_t({3, 5}, 7), rand_t({5, 5}, 8), rand_t({5, 2}, 9, 0.5), rand_t({2, 5}, 10, 0.5)},
        build);
    CHECK(rep.max_rel_err < 1e-6);
}

TEST_CASE("freshly initialized SCA adds exactly nothing") {
    const ModelConfig cfg = mini_config();
    const VideoDiT m = VideoDiT::init(cfg, 11);
    const DiTBlockParams& blk = m.block[0];
    CHECK(blk.sca.wo.w.value.max_abs() == 0.0);

    ag::Graph g;
    Binder bind(g);
    ag::Var f_in = g.leaf(rand_t({6, 16}, 12));
    ag::Var text = g.leaf(rand_t({1, 16}, 13));
    ag::Var style = g.leaf(rand_t({3, 16}, 14));

    ag::Var dual = dual_cross_attention(g, bind, blk.tca, blk.sca, f_in, text, style, cfg.heads);
    ag::Var tca_only = cross_attention_sublayer(g, bind, blk.tca, f_in, text, cfg.heads);
    CHECK(max_abs_diff(dual->value, tca_only->value) == 0.0);
}

TEST_CASE("repeated style rows renormalize to the single-row output") {
    const ModelConfig cfg = mini_config();
    VideoDiT m = VideoDiT::init(cfg, 15);
    DiTBlockParams& blk = m.block[0];
    // make SCA actually contribute
    Rng rng(16);
    blk.sca.wo.w.value = randn({16, 16}, rng, 0.3);

    ag::Graph g;
    Binder bind(g);
    ag::Var f_in = g.leaf(rand_t({5, 16}, 17));
    ag::Var text = g.leaf(rand_t({1, 16}, 18));
    const Tensor one_row = rand_t({1, 16}, 19);
    Tensor repeated({3, 16});
    for (int64_t i = 0; i < 3; ++i)
        for (int64_t j = 0; j < 16; ++j) repeated.at(i, j) = one_row[j];

    ag::Var a = dual_cross_attention(g, bind, blk.tca, blk.sca, f_in, text, g.leaf(one_row), cfg.heads);
    ag::Var b = dual_cross_attention(g, bind, blk.tca, blk.sca, f_in, text, g.leaf(repeated), cfg.heads);
    CHECK(max_abs_diff(a->value, b->value) < 1e-12);
}

TEST_CASE("dual cross-attention rejects an empty style set and checks widths") {
    const ModelConfig cfg = mini_config();
    const VideoDiT m = VideoDiT::init(cfg, 20);
    ag::Graph g;
    Binder bind(g);
    ag::Var f_in = g.leaf(rand_t({4, 16}, 21));
    ag::Var text = g.leaf(rand_t({1, 16}, 22));
    CHECK_THROWS(dual_cross_attention(g, bind, m.block[0].tca, m.block[0].sca, f_in, text,
                                      g.leaf(Tensor::zeros({0, 16})), cfg.heads));
    CHECK_THROWS(dual_cross_attention(g, bind, m.block[0].tca, m.block[0].sca, f_in, text,
                                      g.leaf(Tensor::zeros({2, 8})), cfg.heads));
}

TEST_CASE("SCA gradients match finite differences") {
    const int64_t c = 8;
    auto build = [c](ag::Graph& g, std::vector<ag::Var>& v) {
        // v: f_in, style, wq, wk, wv, wo
        ag::Var q = ag::linear(g, v[0], v[2], nullptr);
        ag::Var k = ag::linear(g, v[1], v[3], nullptr);
        ag::Var val = ag::linear(g, v[1], v[4], nullptr);
        ag::Var o = ag::linear(g, ag::cross_attn(g, q, k, val, 2), v[5], nullptr);
        return ag::sum_all(g, ag::mul(g, o, o));  // gradient of |F_out|^2
    };
    auto rep = testing::fd_check({rand_t({4, c}, 23), rand_t({3, c}, 24), rand_t({c, c}, 25),
                                  rand_t({c, c}, 26), rand_t({c, c}, 27), rand_t({c, c}, 28)},
                                 build);
    CHECK(rep.max_rel_err < 1e-6);
}

TEST_CASE("T=1: temporal attention equals its identity-probs ablation") {
    ModelConfig cfg = mini_config();
    cfg.frames = 1;
    VideoDiT m = VideoDiT::init(cfg, 29);
    randomize_head(m, 290);
    const Tensor x = rand_t({1, 8, 8, 3}, 30);

    DenoiseArgs a;
    a.t = 3;
    a.text = TextCond::ids(0, 1);
    DenoiseArgs b = a;
    b.identity_temporal_probs = true;

    CHECK(max_abs_diff(denoiser_forward(m, x, a), denoiser_forward(m, x, b)) < 1e-6);
}

TEST_CASE("fully zero-initialized block passes tokens through") {
    const ModelConfig cfg = mini_config();
    VideoDiT m = VideoDiT::init(cfg, 31);
    DiTBlockParams& blk = m.block[0];
    for (AttnParams* a : {&blk.attn_2d, &blk.attn_temporal, &blk.tca, &blk.sca}) {
        a->wo.w.value.fill(0.0);
        a->wo.b.value.fill(0.0);
    }
    blk.ffn2.w.value.fill(0.0);
    blk.ffn2.b.value.fill(0.0);

    ag::Graph g;
    Binder bind(g);
    const Tensor x = rand_t({cfg.frames * cfg.spatial_tokens(), cfg.width}, 32);
    ag::Var t_emb = g.leaf(rand_t({1, cfg.width}, 33));
    ag::Var out = dit_block(g, bind, blk, g.leaf(x), t_emb, g.leaf(rand_t({1, cfg.width}, 34)),
                            g.leaf(rand_t({2, cfg.width}, 35)), nullptr, 0.0, cfg.frames,
                            cfg.spatial_tokens(), cfg.heads);
    CHECK(max_abs_diff(out->value, x) == 0.0);
}

TEST_CASE("zero control residual leaves a block unchanged") {
    const ModelConfig cfg = mini_config();
    const VideoDiT m = VideoDiT::init(cfg, 36);
    ag::Graph g;
    Binder bind(g);
    const Tensor x = rand_t({cfg.frames * cfg.spatial_tokens(), cfg.width}, 37);
    ag::Var t_emb = g.leaf(rand_t({1, cfg.width}, 38));
    ag::Var text = g.leaf(rand_t({1, cfg.width}, 39));
    ag::Var style = g.leaf(rand_t({2, cfg.width}, 40));
    ag::Var a = dit_block(g, bind, m.block[0], g.leaf(x), t_emb, text, style, nullptr, 0.0,
                          cfg.frames, cfg.spatial_tokens(), cfg.heads);
    ag::Var zero = g.leaf(Tensor::zeros({cfg.frames * cfg.spatial_tokens(), cfg.width}));
    ag::Var b = dit_block(g, bind, m.block[0], g.leaf(x), t_emb, text, style, nullptr, 0.0,
                          cfg.frames, cfg.spatial_tokens(), cfg.heads, zero);
    CHECK(max_abs_diff(a->value, b->value) == 0.0);
}

TEST_CASE("denoiser forward is deterministic and validates inputs") {
    const ModelConfig cfg = mini_config();
    VideoDiT m = VideoDiT::init(cfg, 41);
    randomize_head(m, 410);
    const Tensor x = rand_t({2, 8, 8, 3}, 42);
    DenoiseArgs args;
    args.t = 5;
    args.text = TextCond::ids(1, 2);

    const Tensor a = denoiser_forward(m, x, args);
    const Tensor b = denoiser_forward(m, x, args);
    CHECK(max_abs_diff(a, b) == 0.0);
    CHECK(a.same_shape(x));

    // null conditioning is accepted
    DenoiseArgs null_args;
    null_args.t = 5;
    const Tensor c = denoiser_forward(m, x, null_args);
    CHECK(c.all_finite());

    // wrong residual count (mini config has B=2 blocks -> expects 1)
    std::vector<Tensor> three(3, Tensor::zeros({2 * cfg.spatial_tokens(), cfg.width}));
    DenoiseArgs bad = args;
    bad.control_residuals = &three;
    CHECK_THROWS(denoiser_forward(m, x, bad));

    CHECK_THROWS(denoiser_forward(m, rand_t({2, 6, 8, 3}, 43), args));  // wrong dims
    DenoiseArgs bad_text = args;
    bad_text.text = TextCond::ids(99, 0);
    CHECK_THROWS(denoiser_forward(m, x, bad_text));
}

TEST_CASE("B/2 zero control residuals equal the no-control forward") {
    const ModelConfig cfg = mini_config();
    VideoDiT m = VideoDiT::init(cfg, 44);
    randomize_head(m, 440);
    const Tensor x = rand_t({2, 8, 8, 3}, 45);
    DenoiseArgs args;
    args.t = 2;
    args.text = TextCond::ids(0, 0);
    const Tensor plain = denoiser_forward(m, x, args);

    std::vector<Tensor> zeros(static_cast<size_t>(cfg.blocks / 2),
                              Tensor::zeros({2 * cfg.spatial_tokens(), cfg.width}));
    DenoiseArgs with = args;
    with.control_residuals = &zeros;
    CHECK(max_abs_diff(denoiser_forward(m, x, with), plain) == 0.0);
}

TEST_CASE("alpha = 0 end-to-end equivalence with adapters attached") {
    const ModelConfig cfg = mini_config();
    VideoDiT bare = VideoDiT::init(cfg, 46);
    VideoDiT with = VideoDiT::init(cfg, 46);
    randomize_head(bare, 460);
    randomize_head(with, 460);
    with.attach_adapters(47);
    // give the adapters nonzero factors: the zero must come from alpha alone
    Rng rng(48);
    for (auto& a : *with.adapters)
        for (LoraFactor* f : {&a.q, &a.k, &a.v}) {
            f->down.value = randn(f->down.value.shape(), rng, 0.3);
            f->up.value = randn(f->up.value.shape(), rng, 0.3);
        }

    const Tensor x = rand_t({2, 8, 8, 3}, 49);
    DenoiseArgs args;
    args.t = 7;
    args.text = TextCond::ids(2, 2);
    args.alpha_motion = 0.0;
    CHECK(max_abs_diff(denoiser_forward(bare, x, args), denoiser_forward(with, x, args)) < 1e-6);

    args.alpha_motion = 1.0;
    CHECK(max_abs_diff(denoiser_forward(bare, x, args), denoiser_forward(with, x, args)) > 1e-9);
}

TEST_CASE("zero-init adapters leave a base model unchanged at any alpha") {
    const ModelConfig cfg = mini_config();
    VideoDiT bare = VideoDiT::init(cfg, 50);
    VideoDiT with = VideoDiT::init(cfg, 50);
    randomize_head(bare, 500);
    randomize_head(with, 500);
    with.attach_adapters(51);  // A_up = 0 by construction

    const Tensor x = rand_t({2, 8, 8, 3}, 52);
    DenoiseArgs args;
    args.t = 1;
    args.text = TextCond::ids(1, 1);
    for (double alpha : {-1.0, -0.3, 0.0, 1.0}) {
        args.alpha_motion = alpha;
        CHECK(max_abs_diff(denoiser_forward(bare, x, args), denoiser_forward(with, x, args)) < 1e-6);
    }
}

TEST_CASE("patchify indices invert exactly") {
    const ModelConfig cfg = mini_config();
    const auto fwd = patchify_indices(cfg, 2);
    const auto inv = unpatchify_indices(cfg, 2);
    for (size_t i = 0; i < fwd.size(); ++i)
        CHECK(inv[static_cast<size_t>(fwd[i])] == static_cast<int64_t>(i));
}
