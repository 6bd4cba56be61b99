#pragma once

#include <cstdint>
#include <memory>

#include "stylemill/tensor.hpp"

namespace sm {

// Per-image encoder output: one global embedding plus a row-major grid of
// patch features.
struct EmbeddingBundle {
    Tensor global;   // [D]
    Tensor patches;  // [P, D], row i = grid cell i in row-major order
    int64_t grid_rows = 0, grid_cols = 0;
};

class ImageEncoder {
public:
    virtual ~ImageEncoder() = default;
    virtual EmbeddingBundle encode(const Tensor& image) const = 0;  // [H,W,3] in [0,1]
    virtual int64_t dim() const = 0;
    virtual int64_t patch_count() const = 0;
    virtual int64_t grid_rows() const = 0;
    virtual int64_t grid_cols() const = 0;
    virtual uint64_t seed() const = 0;
};

// Deterministic handcrafted encoder: per grid cell, a fixed statistic
// vector (color histogram, channel moments, gradient-orientation
// histogram) projected to D by a seeded fixed matrix. The global
// embedding projects the mean cell statistics concatenated with
// whole-image statistics. Gradients are computed strictly inside each
// cell, so moving whole cells around permutes patch rows and nothing else.
class StatImageEncoder : public ImageEncoder {
public:
    StatImageEncoder(int64_t dim, int64_t grid_rows, int64_t grid_cols, uint64_t seed);

    EmbeddingBundle encode(const Tensor& image) const override;
    int64_t dim() const override { return dim_; }
    int64_t patch_count() const override { return rows_ * cols_; }
    int64_t grid_rows() const override { return rows_; }
    int64_t grid_cols() const override { return cols_; }
    uint64_t seed() const override { return seed_; }

    static constexpr int64_t kStatLen = 27;

private:
    int64_t dim_, rows_, cols_;
    uint64_t seed_;
    Tensor proj_patch_;   // [kStatLen, D]
    Tensor proj_global_;  // [2*kStatLen, D]
};

// Seeded-fixed unit-norm prompt embeddings for (style id, object id)
// pairs, living in the same D-space as the image patch features. Row
// distinctness is verified at construction.
class TextEmbedder {
public:
    TextEmbedder(int64_t n_styles, int64_t n_objects, int64_t dim, uint64_t seed);

    Tensor embed(int64_t style_id, int64_t object_id) const;  // [D], unit norm
    Tensor null_embedding() const;                            // [D], unit norm

    int64_t n_styles() const { return styles_.rows(); }
    int64_t n_objects() const { return objects_.rows(); }
    int64_t dim() const { return dim_; }

private:
    int64_t dim_;
    Tensor styles_, objects_;  // [n, D]
    Tensor null_;              // [D]
};

}  // namespace sm
