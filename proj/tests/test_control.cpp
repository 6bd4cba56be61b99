#include <doctest.h>

#include <cmath>

#include "stylemill/control.hpp"
#include "stylemill/corpus.hpp"
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
    return c;
}
}  // namespace

TEST_CASE("to_gray worked examples") {
    Tensor img({1, 2, 3});
    img[0] = img[1] = img[2] = 0.5;           // gray pixel
    img[3] = 1.0; img[4] = 0.0; img[5] = 0.0; // pure red
    const Tensor g = to_gray(img);
    CHECK(g[0] == 0.5);  // gray fixed point, exact
    CHECK(g[1] == doctest::Approx(0.299).epsilon(1e-12));
}

TEST_CASE("to_gray passes grayscale-equal input through unchanged") {
    Rng rng(3);
    Tensor img({4, 4, 3});
    for (int64_t i = 0; i < 16; ++i) {
        const double v = rng.uniform();
        img[i * 3] = img[i * 3 + 1] = img[i * 3 + 2] = v;
    }
    const Tensor g = to_gray(img);
    for (int64_t i = 0; i < 16; ++i) CHECK(g[i] == img[i * 3]);

    // idempotence: replicate gray to 3 channels and convert again
    Tensor rep({4, 4, 3});
    for (int64_t i = 0; i < 16; ++i) rep[i * 3] = rep[i * 3 + 1] = rep[i * 3 + 2] = g[i];
    CHECK(max_abs_diff(to_gray(rep), g) == 0.0);
}

TEST_CASE("tile_blur worked examples") {
    Rng rng(4);
    Tensor img({4, 4, 1});
    for (int64_t i = 0; i < 16; ++i) img[i] = rng.uniform();
    CHECK(max_abs_diff(tile_blur(img, 1), img) == 0.0);  // s=1 identity

    Tensor two({2, 2, 1}, {0.0, 0.0, 1.0, 1.0});
    const Tensor blurred = tile_blur(two, 2);
    for (int64_t i = 0; i < 4; ++i) CHECK(blurred[i] == 0.5);

    CHECK_THROWS(tile_blur(img, 3));  // 3 does not divide 4
}

TEST_CASE("tile_blur is idempotent and conserves the mean") {
    Rng rng(5);
    Tensor img({8, 8, 1});
    for (int64_t i = 0; i < img.numel(); ++i) img[i] = rng.uniform();
    for (int64_t s : {2, 4, 8}) {
        const Tensor once = tile_blur(img, s);
        CHECK(max_abs_diff(tile_blur(once, s), once) == 0.0);
        double m0 = 0.0, m1 = 0.0;
        for (int64_t i = 0; i < img.numel(); ++i) {
            m0 += img[i];
            m1 += once[i];
        }
        CHECK(std::fabs(m0 - m1) / img.numel() < 1e-13);
    }
}

TEST_CASE("canny produces a binary edge map around a square") {
    Tensor img = Tensor::full({16, 16, 3}, 0.1);
    for (int64_t y = 5; y < 11; ++y)
        for (int64_t x = 5; x < 11; ++x)
            for (int64_t c = 0; c < 3; ++c) img[(y * 16 + x) * 3 + c] = 0.9;
    const Tensor edges = canny_edges(img, {0.05, 0.15});
    double count = 0.0;
    for (int64_t i = 0; i < edges.numel(); ++i) {
        CHECK((edges[i] == 0.0 || edges[i] == 1.0));
        count += edges[i];
    }
    CHECK(count > 8);            // the square boundary shows up
    CHECK(count < 16 * 16 / 2);  // and it is sparse
    CHECK_THROWS(canny_edges(img, {0.5, 0.1}));  // low > high
}

TEST_CASE("make_condition: kinds, channels and value ranges") {
    const ShapeCorpus corpus({16, 16, 2, 4, 4, 9});
    const Tensor video = corpus.render_video(1, 2, 5);

    const TileCondition gray = make_condition(video, ConditionKind::GrayTile, 4);
    CHECK(gray.video.dim(3) == 1);
    const TileCondition rgb = make_condition(video, ConditionKind::RgbTile, 4);
    CHECK(rgb.video.dim(3) == 3);
    const TileCondition canny = make_condition(video, ConditionKind::Canny, 4);
    CHECK(canny.video.dim(3) == 1);
    for (const Tensor* t : {&gray.video, &rgb.video, &canny.video}) {
        CHECK(t->all_finite());
        for (int64_t i = 0; i < t->numel(); ++i) CHECK((0.0 <= (*t)[i] && (*t)[i] <= 1.0));
    }
    CHECK_THROWS(parse_condition_kind("depth"));
}

TEST_CASE("grayscale content passes through gray-tile preprocessing as gray") {
    // R=G=B content -> the gray condition equals the tile of any channel
    Rng rng(6);
    Tensor video({2, 8, 8, 3});
    for (int64_t i = 0; i < 2 * 64; ++i) {
        const double v = rng.uniform();
        video[i * 3] = video[i * 3 + 1] = video[i * 3 + 2] = v;
    }
    const TileCondition cond = make_condition(video, ConditionKind::GrayTile, 2);
    const Tensor direct = tile_blur_video(to_gray_video(video), 2);
    CHECK(max_abs_diff(cond.video, direct) == 0.0);
}

TEST_CASE("zero-init control stack emits zero residuals") {
    const ModelConfig cfg = mini_config();
    const ControlStack cs = ControlStack::init(cfg, 1, 7);
    Rng rng(8);
    const Tensor x = randn({2, 8, 8, 3}, rng);
    const Tensor cond = randn({2, 8, 8, 1}, rng);
    const Tensor text = randn({1, 16}, rng);
    const auto residuals = control_forward(cs, x, cond, text, 3);
    CHECK(residuals.size() == 1);  // B/2 with B=2
    for (const Tensor& r : residuals) CHECK(r.max_abs() == 0.0);
}

TEST_CASE("control residual count is B/2 and deterministic") {
    ModelConfig cfg = mini_config();
    cfg.blocks = 4;
    ControlStack cs = ControlStack::init(cfg, 1, 9);
    Rng rng(10);
    // un-zero the output projections so determinism is non-trivial
    for (auto& b : cs.block) b.out_proj.w.value = randn(b.out_proj.w.value.shape(), rng, 0.1);

    const Tensor x = randn({2, 8, 8, 3}, rng);
    const Tensor cond = randn({2, 8, 8, 1}, rng);
    const Tensor text = randn({1, 16}, rng);
    const auto r1 = control_forward(cs, x, cond, text, 5);
    const auto r2 = control_forward(cs, x, cond, text, 5);
    CHECK(r1.size() == 2);
    for (size_t i = 0; i < r1.size(); ++i) CHECK(max_abs_diff(r1[i], r2[i]) == 0.0);
    CHECK(r1[0].max_abs() > 0.0);
}

TEST_CASE("control stack rejects odd block counts and bad conditions") {
    ModelConfig cfg = mini_config();
    cfg.blocks = 3;
    CHECK_THROWS(ControlStack::init(cfg, 1, 11));

    const ControlStack cs = ControlStack::init(mini_config(), 1, 12);
    Rng rng(13);
    const Tensor x = randn({2, 8, 8, 3}, rng);
    const Tensor text = randn({1, 16}, rng);
    CHECK_THROWS(control_forward(cs, x, randn({2, 8, 8, 3}, rng), text, 1));  // wrong channels
    CHECK_THROWS(control_forward(cs, x, randn({1, 8, 8, 1}, rng), text, 1));  // wrong frames
}
