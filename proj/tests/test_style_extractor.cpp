#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fd_check.hpp"
#include "stylemill/rng.hpp"
#include "stylemill/style_extractor.hpp"

using namespace sm;

namespace {

// Brute-force selection oracle: full stable sort over (cosine, index),
// written independently of select_patches.
std::vector<int64_t> brute_force_selection(const Tensor& f_p, const Tensor& f_text, int64_t k) {
    const int64_t p = f_p.rows(), d = f_p.cols();
    double tn = 0.0;
    for (int64_t j = 0; j < d; ++j) tn += f_text[j] * f_text[j];
    tn = std::sqrt(tn);
    std::vector<std::pair<double, int64_t>> sims;
    for (int64_t i = 0; i < p; ++i) {
        double dot = 0.0, nn = 0.0;
        for (int64_t j = 0; j < d; ++j) {
            dot += f_p.at(i, j) * f_text[j];
            nn += f_p.at(i, j) * f_p.at(i, j);
        }
        sims.emplace_back(nn > 0.0 ? dot / (std::sqrt(nn) * tn) : 0.0, i);
    }
    std::stable_sort(sims.begin(), sims.end());
    std::vector<int64_t> kept;
    for (int64_t i = 0; i < k; ++i) kept.push_back(sims[static_cast<size_t>(i)].second);
    return kept;
}

Tensor rand_t(Shape shape, uint64_t seed, double scale = 1.0) {
    Rng rng(seed);
    return randn(std::move(shape), rng, scale);
}

}  // namespace

TEST_CASE("zero-initialized projector maps everything to zero") {
    const ProjectorParams p = ProjectorParams::init(8, {16}, 6, 42);
    const Tensor out = global_project(p, rand_t({8}, 1));
    CHECK(out.numel() == 6);
    CHECK(out.max_abs() == 0.0);

    const Tensor out2 = global_project(p, rand_t({8}, 2));
    CHECK(max_abs_diff(out, out2) == 0.0);
    CHECK_THROWS(global_project(p, rand_t({9}, 3)));
}

TEST_CASE("contrastive loss worked examples") {
    // a == p, |a-n| = 2, margin 0.5 -> hinge clamps at zero
    Tensor a({2}, {1.0, 0.0});
    Tensor n({2}, {3.0, 0.0});
    CHECK(contrastive_loss(a, a, n, 0.5, 0.0) == 0.0);
    // a == p, |a-n| = 2, margin 3 -> 1.0
    CHECK(contrastive_loss(a, a, n, 3.0, 0.0) == doctest::Approx(1.0).epsilon(1e-12));
    // a=(1,0), p=(0,0), n=(3,0), margin 0.5, lambda 1 -> 0 + 0.5
    Tensor p({2}, {0.0, 0.0});
    CHECK(contrastive_loss(a, p, n, 0.5, 1.0) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("hinge is zero whenever |a-n| >= |a-p| + margin") {
    Rng rng(7);
    for (int i = 0; i < 200; ++i) {
        const Tensor a = randn({6}, rng), p = randn({6}, rng);
        Tensor n = randn({6}, rng);
        Tensor ap = a;
        ap.add_scaled_(p, -1.0);
        const double margin = 0.1 + rng.uniform();
        // push n radially away from a until the separation condition holds
        Tensor an = n;
        an.add_scaled_(a, -1.0);
        const double need = (l2_norm(ap) + margin) / std::max(1e-9, l2_norm(an)) * 1.001;
        for (int64_t j = 0; j < 6; ++j) n[j] = a[j] + an[j] * need;
        CHECK(contrastive_loss(a, p, n, margin, 0.0) == 0.0);
    }
}

TEST_CASE("contrastive loss gradient matches finite differences") {
    auto build = [](ag::Graph& g, std::vector<ag::Var>& v) {
        return contrastive_loss(g, v[0], v[1], v[2], 0.5, 1.0);
    };
    auto rep = testing::fd_check({rand_t({6}, 11), rand_t({6}, 12), rand_t({6}, 13)}, build);
    CHECK(rep.max_rel_err < 1e-6);
}

TEST_CASE("projector gradient matches finite differences") {
    ProjectorParams p = ProjectorParams::init(5, {7}, 4, 3);
    // un-zero the head so gradients flow everywhere
    Rng rng(17);
    for (auto& l : p.mlp.layers)
        for (int64_t i = 0; i < l.w.value.numel(); ++i) l.w.value[i] = rng.normal(0, 0.4);

    ParamRefs refs;
    p.collect(refs);
    std::vector<Tensor> inputs;
    inputs.push_back(rand_t({5}, 21));
    for (Param* r : refs) inputs.push_back(r->value);

    auto build = [&](ag::Graph& g, std::vector<ag::Var>& v) {
        ag::Var x = v[0];
        ag::Var h = ag::linear(g, x, v[1], v[2]);
        h = ag::gelu(g, h);
        h = ag::linear(g, h, v[3], v[4]);
        return ag::sum_all(g, ag::mul(g, h, h));  // gradient of the output norm
    };
    auto rep = testing::fd_check(inputs, build);
    CHECK(rep.max_rel_err < 1e-6);
}

TEST_CASE("select_patches forced examples") {
    // P=4 with similarities (0.9, 0.1, 0.5, 0.3) against e1
    Tensor f_p({4, 2});
    auto set_row = [&](int64_t r, double x, double y) {
        f_p.at(r, 0) = x;
        f_p.at(r, 1) = y;
    };
    // cosine against (1, 0) equals x / |row|
    set_row(0, 0.9, std::sqrt(1 - 0.81));
    set_row(1, 0.1, std::sqrt(1 - 0.01));
    set_row(2, 0.5, std::sqrt(1 - 0.25));
    set_row(3, 0.3, std::sqrt(1 - 0.09));
    Tensor f_text({2}, {1.0, 0.0});

    const PatchSelection sel = select_patches(f_p, f_text, 2);
    CHECK(sel.kept == std::vector<int64_t>{1, 3});

    const PatchSelection all = select_patches(f_p, f_text, 4);
    CHECK(all.kept == std::vector<int64_t>{1, 3, 2, 0});  // ascending by similarity

    CHECK_THROWS(select_patches(f_p, f_text, 0));
    CHECK_THROWS(select_patches(f_p, f_text, 5));
    CHECK_THROWS(select_patches(f_p, Tensor::zeros({2}), 2));  // zero-norm text
}

TEST_CASE("select_patches matches the brute-force oracle with ties") {
    Rng rng(2024);
    for (int iter = 0; iter < 300; ++iter) {
        const int64_t p = 2 + static_cast<int64_t>(rng.uniform_int(30));
        const int64_t d = 2 + static_cast<int64_t>(rng.uniform_int(6));
        Tensor f_p = randn({p, d}, rng);
        // engineered ties: duplicate some rows
        for (int64_t i = 1; i < p; ++i)
            if (rng.uniform() < 0.3) {
                const int64_t src = static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(i)));
                for (int64_t j = 0; j < d; ++j) f_p.at(i, j) = f_p.at(src, j);
            }
        const Tensor f_text = randn({d}, rng);
        const int64_t k = 1 + static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(p)));
        CHECK(select_patches(f_p, f_text, k).kept == brute_force_selection(f_p, f_text, k));
    }
}

TEST_CASE("texture tokens: zero value/output projections return the queries") {
    TextureAggParams agg = TextureAggParams::init(3, 5, 8, 2, 9);
    agg.wv.w.value.fill(0.0);
    agg.wv.b.value.fill(0.0);
    agg.wo.w.value.fill(0.0);
    agg.wo.b.value.fill(0.0);
    const Tensor rows = rand_t({4, 5}, 31);
    const Tensor out = texture_tokens(agg, rows);
    CHECK(out.rows() == 3);
    CHECK(max_abs_diff(out, agg.query.value) == 0.0);
}

TEST_CASE("texture tokens ignore patch order") {
    const TextureAggParams agg = TextureAggParams::init(4, 6, 8, 2, 10);
    Rng rng(5);
    const Tensor rows = randn({5, 6}, rng);
    Tensor shuffled({5, 6});
    const std::vector<int64_t> order = {4, 2, 0, 3, 1};
    for (int64_t i = 0; i < 5; ++i)
        for (int64_t j = 0; j < 6; ++j) shuffled.at(i, j) = rows.at(order[static_cast<size_t>(i)], j);
    CHECK(max_abs_diff(texture_tokens(agg, rows), texture_tokens(agg, shuffled)) < 1e-6);
}

TEST_CASE("texture tokens reject an empty selection") {
    const TextureAggParams agg = TextureAggParams::init(2, 4, 8, 2, 11);
    ag::Graph g;
    Binder bind(g);
    CHECK_THROWS(texture_tokens(g, bind, agg, g.leaf(Tensor::zeros({0, 4}))));
}

TEST_CASE("texture aggregation gradients match finite differences") {
    TextureAggParams agg = TextureAggParams::init(2, 4, 6, 2, 12);
    ParamRefs refs;
    agg.collect(refs);
    const auto trainable = to_set(refs);

    ag::Graph g;
    Binder bind(g, trainable);
    ag::Var out = texture_tokens(g, bind, agg, g.leaf(rand_t({3, 4}, 41)));
    ag::Var loss = ag::sum_all(g, ag::mul(g, out, out));
    g.backward(loss);

    // finite differences through the plain forward
    const Tensor rows = rand_t({3, 4}, 41);
    double max_rel = 0.0;
    const double h = 1e-5;
    for (Param* p : refs) {
        const Tensor* grad = bind.grad(*p);
        REQUIRE(grad != nullptr);
        for (int64_t j = 0; j < p->value.numel(); j += std::max<int64_t>(1, p->value.numel() / 16)) {
            const double keep = p->value[j];
            p->value[j] = keep + h;
            const Tensor up = texture_tokens(agg, rows);
            p->value[j] = keep - h;
            const Tensor dn = texture_tokens(agg, rows);
            p->value[j] = keep;
            double lp = 0.0, lm = 0.0;
            for (int64_t i = 0; i < up.numel(); ++i) {
                lp += up[i] * up[i];
                lm += dn[i] * dn[i];
            }
            max_rel = std::max(max_rel, testing::fd_rel_err((*grad)[j], (lp - lm) / (2 * h)));
        }
    }
    CHECK(max_rel < 1e-6);
}

TEST_CASE("assemble_style layout and round trip") {
    const Tensor g = rand_t({6}, 51);
    const Tensor t = rand_t({4, 6}, 52);
    const Tensor s = assemble_style(g, t);
    CHECK(s.rows() == 5);
    for (int64_t j = 0; j < 6; ++j) CHECK(s.at(0, j) == g[j]);
    for (int64_t i = 0; i < 4; ++i)
        for (int64_t j = 0; j < 6; ++j) CHECK(s.at(i + 1, j) == t.at(i, j));

    CHECK(assemble_style(Tensor::zeros({6}), Tensor::zeros({4, 6})).max_abs() == 0.0);
    CHECK_THROWS(assemble_style(rand_t({5}, 53), t));
}

TEST_CASE("projector training runs and logs per-epoch loss") {
    Rng rng(1);
    std::vector<std::array<Tensor, 2>> pairs;
    for (int i = 0; i < 2; ++i) {
        Tensor a = randn({6}, rng);
        Tensor b = a;
        b.add_scaled_(randn({6}, rng), 0.01);
        pairs.push_back({a, b});
    }
    ProjectorTrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch = 8;
    cfg.seed = 3;
    const auto res = train_projector(pairs, ProjectorParams::init(6, {8}, 4, 2), cfg);
    CHECK(res.epoch_loss.size() == 1);
    CHECK(std::isfinite(res.epoch_loss[0]));

    CHECK_THROWS(train_projector({pairs[0]}, ProjectorParams::init(6, {8}, 4, 2), cfg));
}
