#include <doctest.h>

#include <cmath>

#include "stylemill/corpus.hpp"
#include "stylemill/metrics.hpp"
#include "stylemill/rng.hpp"
#include "stylemill/view_transform.hpp"

using namespace sm;

TEST_CASE("dynamic degree worked examples") {
    Tensor still({3, 2, 2, 1});
    still.fill(0.25);
    CHECK(dynamic_degree(still) == 0.0);

    Tensor flip({2, 2, 2, 1});
    for (int64_t i = 4; i < 8; ++i) flip[i] = 1.0;  // frame 0 zeros, frame 1 ones
    CHECK(dynamic_degree(flip) == doctest::Approx(1.0).epsilon(1e-12));

    Tensor ramp({3, 1, 1, 1}, {0.0, 0.5, 1.0});
    CHECK(dynamic_degree(ramp) == doctest::Approx(0.5).epsilon(1e-12));

    Tensor single({1, 2, 2, 1});
    CHECK_THROWS(dynamic_degree(single));
}

TEST_CASE("dynamic degree ignores constant offsets") {
    Rng rng(1);
    Tensor v = randn({4, 3, 3, 2}, rng);
    Tensor shifted = v;
    for (int64_t i = 0; i < v.numel(); ++i) shifted[i] += 0.37;
    CHECK(dynamic_degree(v) == doctest::Approx(dynamic_degree(shifted)).epsilon(1e-12));
}

TEST_CASE("motion smoothness worked examples") {
    Tensor still({3, 2, 2, 1});
    still.fill(0.5);
    CHECK(motion_smoothness(still) == 1.0);

    // constant velocity: values 0.1, 0.2, 0.3, 0.4 per frame
    Tensor lin({4, 1, 1, 1}, {0.1, 0.2, 0.3, 0.4});
    CHECK(motion_smoothness(lin) == doctest::Approx(1.0).epsilon(1e-9));

    Tensor zigzag({3, 1, 1, 1}, {0.0, 1.0, 0.0});
    CHECK(motion_smoothness(zigzag) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

    Tensor two({2, 1, 1, 1});
    CHECK_THROWS(motion_smoothness(two));
}

TEST_CASE("style similarity: self is 1, jigsaw view stays style-consistent") {
    const StatImageEncoder enc(32, 4, 4, 5);
    const ShapeCorpus corpus({32, 32, 1, 6, 6, 7});

    // a trained-enough projector proxy: random nonzero MLP
    ProjectorParams proj = ProjectorParams::init(32, {32}, 16, 9);
    Rng rng(11);
    for (auto& l : proj.mlp.layers) l.w.value = randn(l.w.value.shape(), rng, 0.4);

    const Tensor ref = corpus.render_image(2, 3, 13);
    CHECK(style_similarity({ref}, ref, enc, proj) == doctest::Approx(1.0).epsilon(1e-6));

    const ViewTransform v = make_view(ViewKind::Jigsaw, 32, 32, 4, 4, 15);
    const Tensor rearranged = apply(v, ref);
    const double sim = style_similarity({rearranged}, ref, enc, proj);
    CHECK(sim > 0.9);  // pixel rearrangement preserves the style signal

    // antipodal projected embeddings give -1: feed the negated frame
    // through a linear-only projector
    ProjectorParams lin = ProjectorParams::init(32, {}, 16, 17);
    lin.mlp.layers[0].w.value = randn({32, 16}, rng, 0.3);
    const EmbeddingBundle b = enc.encode(ref);
    const Tensor pos = global_project(lin, b.global);
    Tensor neg_emb = b.global;
    for (int64_t i = 0; i < neg_emb.numel(); ++i) neg_emb[i] = -neg_emb[i];
    const Tensor neg = global_project(lin, neg_emb);
    CHECK(cosine(pos, neg) == doctest::Approx(-1.0).epsilon(1e-9));

    ProjectorParams zero = ProjectorParams::init(32, {32}, 16, 19);  // untrained -> zero output
    CHECK_THROWS(style_similarity({ref}, ref, enc, zero));
}

TEST_CASE("text alignment extremes") {
    const StatImageEncoder enc(16, 4, 4, 21);
    const TextEmbedder te(3, 3, 16, 23);
    const ShapeCorpus corpus({16, 16, 1, 3, 3, 25});
    const Tensor img = corpus.render_image(0, 0, 1);

    // identical vectors -> 1: compare embedding with itself through cosine
    const Tensor e = enc.encode(img).global;
    CHECK(cosine(e, e) == doctest::Approx(1.0).epsilon(1e-12));
    Tensor orth({4}, {1.0, 0.0, 0.0, 0.0});
    Tensor orth2({4}, {0.0, 1.0, 0.0, 0.0});
    CHECK(cosine(orth, orth2) == 0.0);

    const double ta = text_alignment({img, img}, 0, 0, enc, te);
    CHECK(std::isfinite(ta));
    CHECK_THROWS(text_alignment({img}, 5, 0, enc, te));
}

TEST_CASE("report aggregation is the arithmetic mean and metrics are order-invariant") {
    EvalReport rep;
    EvalItemReport a;
    a.name = "a";
    a.style_similarity = 0.2;
    a.text_alignment = 0.4;
    a.dynamic_degree = 1.0;
    a.motion_smoothness = 0.5;
    EvalItemReport b = a;
    b.name = "b";
    b.style_similarity = 0.6;
    rep.items = {a, b};
    CHECK(rep.aggregate().style_similarity == doctest::Approx(0.4).epsilon(1e-12));

    EvalReport swapped;
    swapped.items = {b, a};
    CHECK(swapped.aggregate().style_similarity ==
          doctest::Approx(rep.aggregate().style_similarity).epsilon(1e-15));

    CHECK(rep.proxy);
    CHECK(rep.to_json().find("proxy") != std::string::npos);

    EvalReport empty;
    CHECK(empty.aggregate().style_similarity == 0.0);
}
