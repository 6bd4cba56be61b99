#include "stylemill/encoder.hpp"

#include <cmath>

#include "stylemill/error.hpp"
#include "stylemill/rng.hpp"

namespace sm {

namespace {

constexpr double kPi = 3.14159265358979323846;

inline double luma(double r, double g, double b) { return 0.299 * r + 0.587 * g + 0.114 * b; }

// 27 statistics of a rectangular window: 4-bin histogram per channel (12),
// per-channel mean and stddev (6), 8-bin gradient-orientation histogram
// weighted by magnitude (8), mean gradient magnitude (1). Gradients use
// forward differences that never leave the window.
void window_stats(const Tensor& img, int64_t y0, int64_t x0, int64_t h, int64_t w, double* out) {
    const int64_t W = img.dim(1);
    const double n = static_cast<double>(h * w);
    for (int64_t i = 0; i < StatImageEncoder::kStatLen; ++i) out[i] = 0.0;
    double* hist = out;        // 12
    double* mean = out + 12;   // 3
    double* stdd = out + 15;   // 3
    double* ohist = out + 18;  // 8
    double* gmag = out + 26;   // 1

    for (int64_t y = y0; y < y0 + h; ++y)
        for (int64_t x = x0; x < x0 + w; ++x)
            for (int64_t c = 0; c < 3; ++c) {
                const double v = img[(y * W + x) * 3 + c];
                int bin = static_cast<int>(v * 4.0);
                bin = std::min(std::max(bin, 0), 3);
                hist[c * 4 + bin] += 1.0;
                mean[c] += v;
                stdd[c] += v * v;
            }
    for (int64_t c = 0; c < 3; ++c) {
        for (int b = 0; b < 4; ++b) hist[c * 4 + b] /= n;
        mean[c] /= n;
        stdd[c] = std::sqrt(std::max(0.0, stdd[c] / n - mean[c] * mean[c]));
    }

    double total_mag = 0.0;
    for (int64_t y = y0; y < y0 + h; ++y)
        for (int64_t x = x0; x < x0 + w; ++x) {
            const auto lum = [&](int64_t yy, int64_t xx) {
                const double* p = img.data() + (yy * W + xx) * 3;
                return luma(p[0], p[1], p[2]);
            };
            const double dx = (x + 1 < x0 + w) ? lum(y, x + 1) - lum(y, x) : 0.0;
            const double dy = (y + 1 < y0 + h) ? lum(y + 1, x) - lum(y, x) : 0.0;
            const double mag = std::sqrt(dx * dx + dy * dy);
            if (mag > 1e-12) {
                const double ang = std::atan2(dy, dx);  // [-pi, pi]
                int bin = static_cast<int>((ang + kPi) / (2.0 * kPi) * 8.0);
                bin = std::min(std::max(bin, 0), 7);
                ohist[bin] += mag;
                total_mag += mag;
            }
        }
    if (total_mag > 0.0)
        for (int b = 0; b < 8; ++b) ohist[b] /= total_mag;
    gmag[0] = total_mag / n;
}

}  // namespace

StatImageEncoder::StatImageEncoder(int64_t dim, int64_t grid_rows, int64_t grid_cols, uint64_t seed)
    : dim_(dim), rows_(grid_rows), cols_(grid_cols), seed_(seed) {
    SM_CHECK(dim >= 1 && grid_rows >= 1 && grid_cols >= 1, "StatImageEncoder: bad dims");
    Rng rng(mix_seed(seed, 0xE0C0DE));
    const double s1 = 1.0 / std::sqrt(static_cast<double>(kStatLen));
    const double s2 = 1.0 / std::sqrt(static_cast<double>(2 * kStatLen));
    proj_patch_ = randn({kStatLen, dim_}, rng, s1);
    proj_global_ = randn({2 * kStatLen, dim_}, rng, s2);
}

EmbeddingBundle StatImageEncoder::encode(const Tensor& image) const {
    SM_CHECK(image.ndim() == 3 && image.dim(2) == 3, "encode: expected [H,W,3], got ",
             shape_str(image.shape()));
    SM_CHECK(image.all_finite(), "encode: non-finite pixels");
    const int64_t h = image.dim(0), w = image.dim(1);
    SM_CHECK(h % rows_ == 0 && w % cols_ == 0, "encode: image ", h, "x", w,
             " not divisible by patch grid ", rows_, "x", cols_);
    const int64_t ch = h / rows_, cw = w / cols_;
    const int64_t p = rows_ * cols_;

    Tensor cell_stats({p, kStatLen});
    for (int64_t r = 0; r < rows_; ++r)
        for (int64_t c = 0; c < cols_; ++c)
            window_stats(image, r * ch, c * cw, ch, cw, cell_stats.data() + (r * cols_ + c) * kStatLen);

    EmbeddingBundle out;
    out.grid_rows = rows_;
    out.grid_cols = cols_;
    out.patches = Tensor({p, dim_});
    matmul_into(out.patches, cell_stats, proj_patch_);

    Tensor gstats({1, 2 * kStatLen});
    for (int64_t i = 0; i < p; ++i)
        for (int64_t j = 0; j < kStatLen; ++j) gstats[j] += cell_stats[i * kStatLen + j];
    for (int64_t j = 0; j < kStatLen; ++j) gstats[j] /= static_cast<double>(p);
    window_stats(image, 0, 0, h, w, gstats.data() + kStatLen);

    Tensor global({1, dim_});
    matmul_into(global, gstats, proj_global_);
    out.global = global.reshaped({dim_});
    return out;
}

TextEmbedder::TextEmbedder(int64_t n_styles, int64_t n_objects, int64_t dim, uint64_t seed)
    : dim_(dim) {
    SM_CHECK(n_styles >= 1 && n_objects >= 1 && dim >= 2, "TextEmbedder: bad dims");
    Rng rng(mix_seed(seed, 0x7E87));
    styles_ = randn({n_styles, dim}, rng);
    objects_ = randn({n_objects, dim}, rng);
    null_ = randn({dim}, rng);

    auto check_table = [&](const Tensor& t, const char* name) {
        for (int64_t i = 0; i < t.rows(); ++i) {
            double norm = 0.0;
            for (int64_t j = 0; j < dim_; ++j) norm += t.at(i, j) * t.at(i, j);
            SM_CHECK(norm > 0.0, "TextEmbedder: zero ", name, " embedding at id ", i);
            for (int64_t k = i + 1; k < t.rows(); ++k) {
                bool same = true;
                for (int64_t j = 0; j < dim_ && same; ++j) same = t.at(i, j) == t.at(k, j);
                SM_CHECK(!same, "TextEmbedder: duplicate ", name, " embeddings at ids ", i, ", ", k);
            }
        }
    };
    check_table(styles_, "style");
    check_table(objects_, "object");
    SM_CHECK(l2_norm(null_) > 0.0, "TextEmbedder: zero null embedding");
}

Tensor TextEmbedder::embed(int64_t style_id, int64_t object_id) const {
    SM_CHECK(style_id >= 0 && style_id < styles_.rows(), "unknown style id ", style_id);
    SM_CHECK(object_id >= 0 && object_id < objects_.rows(), "unknown object id ", object_id);
    Tensor v({dim_});
    for (int64_t j = 0; j < dim_; ++j) v[j] = styles_.at(style_id, j) + objects_.at(object_id, j);
    const double n = l2_norm(v);
    SM_CHECK(n > 0.0, "text embedding collapsed to zero for ids (", style_id, ", ", object_id, ")");
    for (int64_t j = 0; j < dim_; ++j) v[j] /= n;
    return v;
}

Tensor TextEmbedder::null_embedding() const {
    Tensor v = null_;
    const double n = l2_norm(v);
    for (int64_t j = 0; j < dim_; ++j) v[j] /= n;
    return v;
}

}  // namespace sm
