#include <doctest.h>

#include <algorithm>

#include "stylemill/corpus.hpp"
#include "stylemill/encoder.hpp"
#include "stylemill/rng.hpp"
#include "stylemill/view_transform.hpp"

using namespace sm;

namespace {
std::vector<std::vector<double>> patch_rows(const Tensor& patches) {
    std::vector<std::vector<double>> rows;
    for (int64_t i = 0; i < patches.rows(); ++i) {
        std::vector<double> r(static_cast<size_t>(patches.cols()));
        for (int64_t j = 0; j < patches.cols(); ++j) r[static_cast<size_t>(j)] = patches.at(i, j);
        rows.push_back(std::move(r));
    }
    return rows;
}
}  // namespace

TEST_CASE("jigsaw-permuted image yields an identical patch-row multiset") {
    const StatImageEncoder enc(32, 4, 4, 9);
    const ShapeCorpus corpus({32, 32, 1, 5, 5, 123});
    const Tensor img = corpus.render_image(2, 3, 77);

    // piece grid equal to the patch grid
    const ViewTransform v = make_view(ViewKind::Jigsaw, 32, 32, 4, 4, 55);
    const Tensor img_b = apply(v, img);

    auto rows_a = patch_rows(enc.encode(img).patches);
    auto rows_b = patch_rows(enc.encode(img_b).patches);
    std::sort(rows_a.begin(), rows_a.end());
    std::sort(rows_b.begin(), rows_b.end());
    CHECK(rows_a == rows_b);
    CHECK(rows_a != patch_rows(enc.encode(img).patches));  // the permutation really moved rows
}

TEST_CASE("constant gray image gives identical patch rows") {
    const StatImageEncoder enc(16, 4, 4, 1);
    const Tensor img = Tensor::full({32, 32, 3}, 0.5);
    const EmbeddingBundle b = enc.encode(img);
    for (int64_t i = 1; i < b.patches.rows(); ++i)
        for (int64_t j = 0; j < b.patches.cols(); ++j)
            CHECK(b.patches.at(i, j) == b.patches.at(0, j));
}

TEST_CASE("encoding is deterministic in the encoder seed") {
    const ShapeCorpus corpus({32, 32, 1, 5, 5, 123});
    const Tensor img = corpus.render_image(1, 1, 3);
    const StatImageEncoder e1(32, 4, 4, 42), e2(32, 4, 4, 42), e3(32, 4, 4, 43);
    CHECK(max_abs_diff(e1.encode(img).global, e2.encode(img).global) == 0.0);
    CHECK(max_abs_diff(e1.encode(img).patches, e2.encode(img).patches) == 0.0);
    CHECK(max_abs_diff(e1.encode(img).global, e3.encode(img).global) > 0.0);
}

TEST_CASE("encoder outputs stay bounded over a corpus") {
    const StatImageEncoder enc(64, 4, 4, 7);
    const ShapeCorpus corpus({32, 32, 1, 10, 8, 5});
    double max_entry = 0.0;
    for (int64_t s = 0; s < 10; ++s)
        for (int64_t o = 0; o < 4; ++o) {
            const EmbeddingBundle b = enc.encode(corpus.render_image(s, o, 100 + s));
            CHECK(b.global.all_finite());
            CHECK(b.patches.all_finite());
            max_entry = std::max({max_entry, b.global.max_abs(), b.patches.max_abs()});
        }
    CHECK(max_entry < 10.0);
}

TEST_CASE("encoder rejects malformed input") {
    const StatImageEncoder enc(16, 4, 4, 1);
    CHECK_THROWS(enc.encode(Tensor::zeros({30, 32, 3})));  // grid does not divide
    Tensor bad = Tensor::zeros({32, 32, 3});
    bad[5] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS(enc.encode(bad));
}

TEST_CASE("text embedder basics") {
    const TextEmbedder te(5, 7, 16, 99);
    CHECK(max_abs_diff(te.embed(2, 3), te.embed(2, 3)) == 0.0);
    CHECK(max_abs_diff(te.embed(2, 3), te.embed(2, 4)) > 0.0);
    CHECK(l2_norm(te.embed(0, 0)) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(l2_norm(te.null_embedding()) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_THROWS(te.embed(5, 0));   // unknown style id
    CHECK_THROWS(te.embed(0, 7));   // unknown object id
    CHECK_THROWS(te.embed(-1, 0));
    CHECK_THROWS(TextEmbedder(0, 5, 16, 1));
}
