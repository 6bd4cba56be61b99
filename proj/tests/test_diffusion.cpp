#include <doctest.h>

#include <cmath>

#include "stylemill/corpus.hpp"
#include "stylemill/diffusion.hpp"

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

StyleModel mini_model(uint64_t seed) {
    StyleModel m;
    m.cfg = mini_config();
    m.dit = VideoDiT::init(m.cfg, seed);
    Rng rng(mix_seed(seed, 0xF00D));
    m.dit.head.w.value = randn(m.dit.head.w.value.shape(), rng, 0.2);
    return m;
}

Tensor snapshot(const ParamRefs& refs) {
    int64_t total = 0;
    for (const Param* p : refs) total += p->value.numel();
    Tensor flat({total});
    int64_t o = 0;
    for (const Param* p : refs)
        for (int64_t i = 0; i < p->value.numel(); ++i) flat[o++] = p->value[i];
    return flat;
}
}  // namespace

TEST_CASE("schedules satisfy their invariants") {
    for (const NoiseSchedule& s : {NoiseSchedule::linear(1000), NoiseSchedule::cosine(1000)}) {
        CHECK(s.steps() == 1000);
        CHECK(s.ab(0) > 0.99);
        double prev = 1.1;
        for (int64_t t = 0; t < s.steps(); ++t) {
            CHECK(s.ab(t) > 0.0);
            CHECK(s.ab(t) <= 1.0);
            CHECK(s.ab(t) < prev);
            prev = s.ab(t);
        }
    }
    CHECK_THROWS(NoiseSchedule::from_alpha_bar({0.5, 0.6}));   // not decreasing
    CHECK_THROWS(NoiseSchedule::from_alpha_bar({0.5, 0.0}));   // zero not allowed
    CHECK_THROWS(NoiseSchedule::linear(1000).ab(1000));        // out of range
}

TEST_CASE("q_sample worked examples") {
    const NoiseSchedule s = NoiseSchedule::from_alpha_bar({1.0, 0.25, 1e-12});
    Rng rng(1);
    const Tensor x0 = randn({2, 3}, rng);
    const Tensor noise = randn({2, 3}, rng);

    CHECK(max_abs_diff(q_sample(x0, 0, noise, s), x0) == 0.0);  // ab = 1 -> x0 exactly

    Tensor one({1}, {2.0});
    Tensor zero({1}, {0.0});
    CHECK(q_sample(one, 1, zero, s)[0] == doctest::Approx(1.0).epsilon(1e-12));  // sqrt(0.25)*2

    const Tensor near_noise = q_sample(x0, 2, noise, s);  // ab -> 0 -> x_t ~ noise
    CHECK(max_abs_diff(near_noise, noise) < 1e-5);

    CHECK_THROWS(q_sample(x0, 3, noise, s));               // t out of range
    CHECK_THROWS(q_sample(x0, 0, randn({4, 3}, rng), s));  // wrong noise shape
}

TEST_CASE("cfg_combine worked examples and algebra") {
    Rng rng(2);
    const Tensor eu = randn({4}, rng), et = randn({4}, rng), ets = randn({4}, rng);

    // (1,1) returns the full-conditioning branch exactly
    CHECK(max_abs_diff(cfg_combine(eu, et, ets, {1.0, 1.0}), ets) == 0.0);

    // s_style = 0 is plain text CFG
    const Tensor text_only = cfg_combine(eu, et, ets, {7.5, 0.0});
    for (int64_t i = 0; i < 4; ++i)
        CHECK(text_only[i] == doctest::Approx(eu[i] + 7.5 * (et[i] - eu[i])).epsilon(1e-12));

    // scalar example with the defaults
    Tensor u({1}, {0.0}), t({1}, {1.0}), ts({1}, {2.0});
    CHECK(cfg_combine(u, t, ts, {12.5, 6.0})[0] == doctest::Approx(18.5).epsilon(1e-12));

    // collinearity in each scale
    auto diff = [](const Tensor& a, const Tensor& b) { return max_abs_diff(a, b); };
    for (double base : {0.0, 3.0}) {
        Tensor lo = cfg_combine(eu, et, ets, {base, 2.0});
        Tensor mid = cfg_combine(eu, et, ets, {base + 1.0, 2.0});
        Tensor hi = cfg_combine(eu, et, ets, {base + 2.0, 2.0});
        Tensor two_mid = mid;
        two_mid.add_(mid);
        Tensor sum = lo;
        sum.add_(hi);
        CHECK(diff(two_mid, sum) < 1e-12);
    }
}

TEST_CASE("ddim timesteps are descending, unique, end at zero") {
    for (auto [train, steps] : std::vector<std::pair<int64_t, int64_t>>{{1000, 50}, {10, 10}, {7, 3}, {100, 1}}) {
        const auto ts = ddim_timesteps(train, steps);
        CHECK(static_cast<int64_t>(ts.size()) == steps);
        CHECK(ts.back() == 0);
        for (size_t i = 1; i < ts.size(); ++i) CHECK(ts[i] < ts[i - 1]);
        CHECK(ts.front() < train);
    }
    CHECK_THROWS(ddim_timesteps(10, 11));
}

TEST_CASE("ddim_step closes the chain at ab_prev = 1") {
    Rng rng(3);
    const Tensor x = randn({5}, rng), eps = randn({5}, rng);
    const Tensor x0 = predict_x0(x, eps, 0.5);
    CHECK(max_abs_diff(ddim_step(x, eps, 0.5, 1.0), x0) == 0.0);
    // one forward-consistency check: q_sample(x0, eps) at ab returns x
    for (int64_t i = 0; i < 5; ++i)
        CHECK(std::sqrt(0.5) * x0[i] + std::sqrt(0.5) * eps[i] == doctest::Approx(x[i]).epsilon(1e-12));
}

TEST_CASE("dropout frequency approximates p_drop") {
    Rng rng(4);
    int text_drops = 0, style_drops = 0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
        const DropDecision d = draw_dropout(rng, 0.1);
        text_drops += d.drop_text;
        style_drops += d.drop_style;
    }
    CHECK(std::fabs(text_drops / static_cast<double>(n) - 0.1) < 0.01);
    CHECK(std::fabs(style_drops / static_cast<double>(n) - 0.1) < 0.01);
}

TEST_CASE("training stages leave out-of-stage parameters bitwise untouched") {
    StyleModel model = mini_model(5);
    model.dit.attach_adapters(6);
    Rng er(7);
    ExtractorParams ex;
    ex.projector = ProjectorParams::init(8, {8}, 16, 8);
    ex.agg = TextureAggParams::init(2, 8, 16, 2, 9);
    ex.keep_k = 2;
    model.extractor = std::move(ex);
    model.control = ControlStack::init(model.cfg, 1, 10);

    const ShapeCorpus corpus({8, 8, 2, 3, 3, 11});
    const NoiseSchedule sched = NoiseSchedule::linear(50);

    auto run_one = [&](TrainStage stage) {
        TrainItem item;
        item.video = corpus.render_video(0, 1, 12);
        item.text = TextCond::ids(0, 1);
        if (stage == TrainStage::Style) {
            item.style_selected_rows = randn({2, 8}, er);
            item.style_global = randn({16}, er);
        }
        if (stage == TrainStage::Control)
            item.condition = make_condition(item.video, ConditionKind::GrayTile, 2).video;
        TrainStepConfig cfg;
        cfg.stage = stage;
        cfg.alpha_motion = stage == TrainStage::MotionAdapter ? 1.0 : 0.0;
        cfg.p_drop = 0.0;
        Adam opt(model.stage_params(stage), 1e-2);
        Rng rng(13);
        return training_step(model, sched, {item}, opt, rng, cfg);
    };

    for (TrainStage stage : {TrainStage::Base, TrainStage::MotionAdapter, TrainStage::Style,
                             TrainStage::Control}) {
        CAPTURE(stage_name(stage));
        const auto in_stage = model.stage_params(stage);
        const auto in_set = to_set(in_stage);
        ParamRefs frozen;
        for (Param* p : model.all_params())
            if (!in_set.count(p)) frozen.push_back(p);

        const Tensor before_frozen = snapshot(frozen);
        const Tensor before_stage = snapshot(in_stage);
        const double loss = run_one(stage);
        CHECK(std::isfinite(loss));
        CHECK(max_abs_diff(snapshot(frozen), before_frozen) == 0.0);
        CHECK(max_abs_diff(snapshot(in_stage), before_stage) > 0.0);  // the stage actually moved
    }
}

TEST_CASE("sampling is deterministic under a fixed seed") {
    StyleModel model = mini_model(14);
    const NoiseSchedule sched = NoiseSchedule::linear(50);
    SampleRequest req;
    req.frames = 2;
    req.steps = 5;
    req.text = TextCond::ids(1, 2);
    req.guidance = {2.0, 1.0};
    req.seed = 99;
    const Tensor a = sample(model, sched, req);
    const Tensor b = sample(model, sched, req);
    CHECK(max_abs_diff(a, b) == 0.0);
    for (int64_t i = 0; i < a.numel(); ++i) CHECK((0.0 <= a[i] && a[i] <= 1.0));

    req.seed = 100;
    CHECK(max_abs_diff(sample(model, sched, req), a) > 0.0);
}

TEST_CASE("T=1 sampling yields a single image") {
    StyleModel model = mini_model(15);
    const NoiseSchedule sched = NoiseSchedule::linear(50);
    SampleRequest req;
    req.frames = 1;
    req.steps = 4;
    req.seed = 5;
    const Tensor img = sample(model, sched, req);
    CHECK(img.dim(0) == 1);
}

TEST_CASE("zero-init control branch does not change sampling") {
    StyleModel model = mini_model(16);
    const NoiseSchedule sched = NoiseSchedule::linear(50);

    SampleRequest plain;
    plain.frames = 2;
    plain.steps = 4;
    plain.text = TextCond::ids(0, 0);
    plain.guidance = {1.5, 1.0};
    plain.seed = 7;
    const Tensor without = sample(model, sched, plain);

    model.control = ControlStack::init(model.cfg, 1, 17);  // zero-init out projections
    const ShapeCorpus corpus({8, 8, 2, 3, 3, 18});
    const Tensor cond = make_condition(corpus.render_video(0, 0, 3), ConditionKind::GrayTile, 2).video;
    SampleRequest with = plain;
    with.condition = &cond;
    CHECK(max_abs_diff(sample(model, sched, with), without) == 0.0);
}

TEST_CASE("style transfer validates inputs and preserves frame count") {
    StyleModel model = mini_model(19);
    const NoiseSchedule sched = NoiseSchedule::linear(50);
    const ShapeCorpus corpus({8, 8, 3, 3, 3, 20});
    const Tensor content = corpus.render_video(0, 1, 4);

    TransferRequest req;
    req.steps = 3;
    req.tile_factor = 2;
    req.seed = 1;
    CHECK_THROWS(style_transfer(model, sched, content, req));  // no control stack

    model.control = ControlStack::init(model.cfg, 1, 21);
    const Tensor out = style_transfer(model, sched, content, req);
    CHECK(out.dim(0) == 3);
    CHECK(out.all_finite());

    req.condition_kind = ConditionKind::RgbTile;  // stack expects 1 channel
    CHECK_THROWS(style_transfer(model, sched, content, req));
}

TEST_CASE("still-video motion training wires alpha = 1") {
    StyleModel model = mini_model(22);
    model.dit.attach_adapters(23);
    const ShapeCorpus corpus({8, 8, 2, 3, 3, 24});
    const NoiseSchedule sched = NoiseSchedule::linear(50);

    TrainItem item;
    item.video = corpus.render_still_video(1, 1, 25);
    // still video: all frames identical
    const int64_t stride = 8 * 8 * 3;
    for (int64_t i = 0; i < stride; ++i) CHECK(item.video[i] == item.video[stride + i]);
    item.text = TextCond::ids(1, 1);

    TrainStepConfig cfg;
    cfg.stage = TrainStage::MotionAdapter;
    cfg.alpha_motion = 1.0;
    Adam opt(model.stage_params(TrainStage::MotionAdapter), 1e-2);
    Rng rng(26);
    const double loss = training_step(model, sched, {item}, opt, rng, cfg);
    CHECK(std::isfinite(loss));
}
