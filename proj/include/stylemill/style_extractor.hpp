#pragma once

#include <vector>

#include "stylemill/encoder.hpp"
#include "stylemill/nn.hpp"

namespace sm {

// Projection MLP mapping encoder features (D) to conditioning width (C),
// trained contrastively on style pairs. The final layer starts at zero.
struct ProjectorParams {
    MlpParams mlp;
    double margin = 0.5;      // triplet margin
    double mse_weight = 1.0;  // intra-pair MSE term weight

    static ProjectorParams init(int64_t in_dim, const std::vector<int64_t>& hidden, int64_t out_dim,
                                uint64_t seed, double margin = 0.5, double mse_weight = 1.0);
    void collect(ParamRefs& out) { mlp.collect(out); }
    int64_t in_dim() const { return mlp.layers.front().w.value.dim(0); }
    int64_t out_dim() const { return mlp.layers.back().w.value.dim(1); }
};

// F_global = MLP(F_i). Accepts [D] or a batch [R, D].
Tensor global_project(const ProjectorParams& proj, const Tensor& f_i);

// max(0, |a-p| - |a-n| + margin) + mse_weight * mean((a-p)^2), on
// projected vectors.
double contrastive_loss(const Tensor& anchor, const Tensor& positive, const Tensor& negative,
                        double margin, double mse_weight);
ag::Var contrastive_loss(ag::Graph& g, ag::Var anchor, ag::Var positive, ag::Var negative,
                         double margin, double mse_weight);

struct PatchSelection {
    Tensor rows;                 // [k, D], ascending by similarity
    std::vector<int64_t> kept;   // selected patch indices, same order
    std::vector<double> similarity;  // cosine per original patch row
};

// Keeps the k patch rows with the smallest cosine similarity to the
// prompt embedding; ties break toward the lower patch index. Rows with
// zero norm count as similarity 0.
PatchSelection select_patches(const Tensor& f_p, const Tensor& f_text, int64_t k);

// N learnable query tokens + one residual self-attention pass over
// concat(queries, adapted patches); the first N output rows are the
// texture tokens. No positional encoding, so patch order is irrelevant.
struct TextureAggParams {
    Param query;          // [N, C]
    LinearParams adapter; // D -> C
    LinearParams wq, wk, wv, wo;  // C -> C
    int heads = 4;

    static TextureAggParams init(int64_t n_query, int64_t in_dim, int64_t width, int heads,
                                 uint64_t seed);
    void collect(ParamRefs& out);
    int64_t n_query() const { return query.value.dim(0); }
    int64_t width() const { return query.value.dim(1); }
};

Tensor texture_tokens(const TextureAggParams& agg, const Tensor& selected_rows);  // [k,D] -> [N,C]
ag::Var texture_tokens(ag::Graph& g, Binder& bind, const TextureAggParams& agg, ag::Var selected_rows);

// F_style = concat(F_global; F_texture), row 0 global.
Tensor assemble_style(const Tensor& f_global, const Tensor& f_texture);

// Variance over patch rows of cosine(global, patch row).
double patch_cosine_variance(const Tensor& global, const Tensor& patches);

struct ProjectorTrainConfig {
    int epochs = 100;
    int batch = 8;
    double lr = 1e-4;
    uint64_t seed = 0;
};

struct ProjectorTrainResult {
    ProjectorParams params;
    std::vector<double> epoch_loss;
};

// Trains on embedding pairs: anchor/positive drawn inside a pair,
// negative from a uniformly different pair. Aborts on non-finite loss.
ProjectorTrainResult train_projector(const std::vector<std::array<Tensor, 2>>& pair_embeddings,
                                     ProjectorParams init, const ProjectorTrainConfig& cfg);

}  // namespace sm
