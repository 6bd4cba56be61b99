#include "stylemill/style_extractor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "stylemill/error.hpp"
#include "stylemill/rng.hpp"

namespace sm {

ProjectorParams ProjectorParams::init(int64_t in_dim, const std::vector<int64_t>& hidden,
                                      int64_t out_dim, uint64_t seed, double margin,
                                      double mse_weight) {
    SM_CHECK(margin > 0.0, "projector: margin must be > 0");
    SM_CHECK(mse_weight >= 0.0, "projector: mse weight must be >= 0");
    Rng rng(mix_seed(seed, 0x9807));
    ProjectorParams p;
    p.mlp = MlpParams::init("projector", in_dim, hidden, out_dim, rng, /*zero_final=*/true);
    p.margin = margin;
    p.mse_weight = mse_weight;
    return p;
}

Tensor global_project(const ProjectorParams& proj, const Tensor& f_i) {
    SM_CHECK(f_i.cols() == proj.in_dim(), "global_project: input width ", f_i.cols(), " != ",
             proj.in_dim());
    return proj.mlp.forward(f_i);
}

double contrastive_loss(const Tensor& anchor, const Tensor& positive, const Tensor& negative,
                        double margin, double mse_weight) {
    SM_CHECK(anchor.numel() == positive.numel() && anchor.numel() == negative.numel(),
             "contrastive_loss: size mismatch");
    double dp = 0.0, dn = 0.0, mse = 0.0;
    for (int64_t i = 0; i < anchor.numel(); ++i) {
        const double ap = anchor[i] - positive[i];
        const double an = anchor[i] - negative[i];
        dp += ap * ap;
        dn += an * an;
        mse += ap * ap;
    }
    const double hinge = std::max(0.0, std::sqrt(dp) - std::sqrt(dn) + margin);
    return hinge + mse_weight * mse / static_cast<double>(anchor.numel());
}

ag::Var contrastive_loss(ag::Graph& g, ag::Var anchor, ag::Var positive, ag::Var negative,
                         double margin, double mse_weight) {
    ag::Var ap = ag::sub(g, anchor, positive);
    ag::Var an = ag::sub(g, anchor, negative);
    ag::Var hinge = ag::relu(g, ag::add_scalar(g, ag::sub(g, ag::l2norm(g, ap), ag::l2norm(g, an)), margin));
    ag::Var mse_term = ag::scale(g, ag::mean_all(g, ag::mul(g, ap, ap)), mse_weight);
    return ag::add(g, hinge, mse_term);
}

PatchSelection select_patches(const Tensor& f_p, const Tensor& f_text, int64_t k) {
    const int64_t p = f_p.rows(), d = f_p.cols();
    SM_CHECK(f_text.numel() == d, "select_patches: text embedding width ", f_text.numel(), " != ", d);
    SM_CHECK(k >= 1 && k <= p, "select_patches: k=", k, " out of range [1, ", p, "]");
    const double tn = l2_norm(f_text);
    SM_CHECK(tn > 0.0, "select_patches: zero-norm text embedding");

    PatchSelection sel;
    sel.similarity.resize(static_cast<size_t>(p));
    std::vector<int64_t> order(static_cast<size_t>(p));
    std::iota(order.begin(), order.end(), 0);
    for (int64_t i = 0; i < p; ++i) {
        double dot = 0.0, nn = 0.0;
        for (int64_t j = 0; j < d; ++j) {
            dot += f_p.at(i, j) * f_text[j];
            nn += f_p.at(i, j) * f_p.at(i, j);
        }
        sel.similarity[static_cast<size_t>(i)] = nn > 0.0 ? dot / (std::sqrt(nn) * tn) : 0.0;
    }
    std::sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
        const double sa = sel.similarity[static_cast<size_t>(a)];
        const double sb = sel.similarity[static_cast<size_t>(b)];
        return sa != sb ? sa < sb : a < b;
    });
    order.resize(static_cast<size_t>(k));
    sel.kept = order;
    sel.rows = Tensor({k, d});
    for (int64_t i = 0; i < k; ++i)
        for (int64_t j = 0; j < d; ++j) sel.rows.at(i, j) = f_p.at(sel.kept[static_cast<size_t>(i)], j);
    return sel;
}

TextureAggParams TextureAggParams::init(int64_t n_query, int64_t in_dim, int64_t width, int heads,
                                        uint64_t seed) {
    SM_CHECK(n_query >= 1, "texture agg: need at least one query token");
    SM_CHECK(width % heads == 0, "texture agg: heads ", heads, " must divide width ", width);
    Rng rng(mix_seed(seed, 0xA6));
    TextureAggParams a;
    a.query.name = "extractor.agg.query";
    a.query.value = randn({n_query, width}, rng, 0.5);
    a.adapter = LinearParams::init("extractor.agg.adapter", in_dim, width, rng);
    a.wq = LinearParams::init("extractor.agg.wq", width, width, rng);
    a.wk = LinearParams::init("extractor.agg.wk", width, width, rng);
    a.wv = LinearParams::init("extractor.agg.wv", width, width, rng);
    a.wo = LinearParams::init("extractor.agg.wo", width, width, rng);
    a.heads = heads;
    return a;
}

void TextureAggParams::collect(ParamRefs& out) {
    out.push_back(&query);
    adapter.collect(out);
    wq.collect(out);
    wk.collect(out);
    wv.collect(out);
    wo.collect(out);
}

ag::Var texture_tokens(ag::Graph& g, Binder& bind, const TextureAggParams& agg, ag::Var selected_rows) {
    SM_CHECK(selected_rows->value.rows() >= 1, "texture_tokens: empty patch selection");
    ag::Var adapted = agg.adapter.forward(g, bind, selected_rows);
    ag::Var x = ag::concat_rows(g, {bind(agg.query), adapted});
    const int64_t len = x->value.rows();
    ag::Var q = agg.wq.forward(g, bind, x);
    ag::Var k = agg.wk.forward(g, bind, x);
    ag::Var v = agg.wv.forward(g, bind, x);
    ag::Var attn = ag::mha_self(g, q, k, v, 1, len, agg.heads, ag::AttnAxis::Spatial);
    ag::Var out = ag::add(g, x, agg.wo.forward(g, bind, attn));
    return ag::slice_rows(g, out, 0, agg.n_query());
}

Tensor texture_tokens(const TextureAggParams& agg, const Tensor& selected_rows) {
    ag::Graph g;
    Binder bind(g);
    return texture_tokens(g, bind, agg, g.leaf(selected_rows))->value;
}

Tensor assemble_style(const Tensor& f_global, const Tensor& f_texture) {
    const int64_t c = f_texture.cols();
    SM_CHECK(f_global.numel() == c, "assemble_style: width mismatch, global ", f_global.numel(),
             " vs texture ", c);
    const int64_t n = f_texture.rows();
    Tensor style({n + 1, c});
    for (int64_t j = 0; j < c; ++j) style[j] = f_global[j];
    for (int64_t i = 0; i < n * c; ++i) style[c + i] = f_texture[i];
    return style;
}

double patch_cosine_variance(const Tensor& global, const Tensor& patches) {
    const int64_t p = patches.rows(), d = patches.cols();
    SM_CHECK(global.numel() == d, "patch_cosine_variance: width mismatch");
    SM_CHECK(p >= 2, "patch_cosine_variance: need at least two patches");
    std::vector<double> cs(static_cast<size_t>(p));
    Tensor row({d});
    for (int64_t i = 0; i < p; ++i) {
        for (int64_t j = 0; j < d; ++j) row[j] = patches.at(i, j);
        cs[static_cast<size_t>(i)] = cosine(global, row);
    }
    double mean = 0.0;
    for (double c : cs) mean += c;
    mean /= static_cast<double>(p);
    double var = 0.0;
    for (double c : cs) var += (c - mean) * (c - mean);
    return var / static_cast<double>(p);
}

ProjectorTrainResult train_projector(const std::vector<std::array<Tensor, 2>>& pair_embeddings,
                                     ProjectorParams init, const ProjectorTrainConfig& cfg) {
    SM_CHECK(pair_embeddings.size() >= 2, "train_projector: need at least 2 pairs, got ",
             pair_embeddings.size());
    SM_CHECK(cfg.epochs >= 1 && cfg.batch >= 1, "train_projector: bad epochs/batch");

    ProjectorTrainResult res;
    res.params = std::move(init);
    ParamRefs refs;
    res.params.collect(refs);
    Adam opt(refs, cfg.lr);
    Rng rng(mix_seed(cfg.seed, 0x77AA));
    const auto trainable = to_set(refs);
    const int64_t n = static_cast<int64_t>(pair_embeddings.size());

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<int64_t> order(static_cast<size_t>(n));
        std::iota(order.begin(), order.end(), 0);
        rng.shuffle(order);

        double epoch_loss = 0.0;
        int64_t batches = 0;
        for (int64_t start = 0; start < n; start += cfg.batch) {
            const int64_t stop = std::min<int64_t>(start + cfg.batch, n);
            ag::Graph g;
            Binder bind(g, trainable);
            std::vector<ag::Var> losses;
            for (int64_t i = start; i < stop; ++i) {
                const auto& pair = pair_embeddings[static_cast<size_t>(order[static_cast<size_t>(i)])];
                const int64_t a_side = static_cast<int64_t>(rng.uniform_int(2));
                int64_t neg_pair = static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(n - 1)));
                if (neg_pair >= order[static_cast<size_t>(i)]) ++neg_pair;
                const int64_t neg_side = static_cast<int64_t>(rng.uniform_int(2));
                const Tensor& neg =
                    pair_embeddings[static_cast<size_t>(neg_pair)][static_cast<size_t>(neg_side)];

                ag::Var fa = res.params.mlp.forward(g, bind, g.leaf(pair[static_cast<size_t>(a_side)]));
                ag::Var fp = res.params.mlp.forward(g, bind, g.leaf(pair[static_cast<size_t>(1 - a_side)]));
                ag::Var fn = res.params.mlp.forward(g, bind, g.leaf(neg));
                losses.push_back(contrastive_loss(g, fa, fp, fn, res.params.margin, res.params.mse_weight));
            }
            ag::Var total = losses[0];
            for (size_t i = 1; i < losses.size(); ++i) total = ag::add(g, total, losses[i]);
            total = ag::scale(g, total, 1.0 / static_cast<double>(losses.size()));
            SM_CHECK(std::isfinite(total->value[0]), "train_projector: loss diverged at epoch ", epoch);
            g.backward(total);
            opt.step(bind);
            epoch_loss += total->value[0];
            ++batches;
        }
        res.epoch_loss.push_back(epoch_loss / static_cast<double>(batches));
    }
    return res;
}

}  // namespace sm
