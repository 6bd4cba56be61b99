#include "stylemill/view_transform.hpp"

#include <numeric>

#include "stylemill/error.hpp"
#include "stylemill/rng.hpp"

namespace sm {

std::string view_kind_name(ViewKind k) {
    switch (k) {
        case ViewKind::Identity: return "identity";
        case ViewKind::FlipVertical: return "flip_vertical";
        case ViewKind::Rotate180: return "rotate180";
        case ViewKind::Jigsaw: return "jigsaw";
    }
    fail("bad ViewKind");
}

ViewKind parse_view_kind(const std::string& name) {
    if (name == "identity") return ViewKind::Identity;
    if (name == "flip_vertical") return ViewKind::FlipVertical;
    if (name == "rotate180") return ViewKind::Rotate180;
    if (name == "jigsaw") return ViewKind::Jigsaw;
    fail("unknown view kind '", name, "'");
}

bool ViewTransform::is_identity_permutation() const {
    for (int64_t i = 0; i < static_cast<int64_t>(permutation.size()); ++i)
        if (permutation[static_cast<size_t>(i)] != i) return false;
    return true;
}

bool is_bijection(const std::vector<int64_t>& permutation) {
    std::vector<bool> seen(permutation.size(), false);
    for (int64_t p : permutation) {
        if (p < 0 || p >= static_cast<int64_t>(permutation.size())) return false;
        if (seen[static_cast<size_t>(p)]) return false;
        seen[static_cast<size_t>(p)] = true;
    }
    return true;
}

namespace {

// Rotation of in-piece offsets. rot is quarter-turns; for non-square
// pieces only rot in {0, 2} keeps the geometry.
void rotate_offset(int rot, int64_t bh, int64_t bw, int64_t oy, int64_t ox, int64_t& sy, int64_t& sx) {
    switch (rot & 3) {
        case 0: sy = oy; sx = ox; break;
        case 1: sy = bh - 1 - ox; sx = oy; break;          // 90째 ccw placement
        case 2: sy = bh - 1 - oy; sx = bw - 1 - ox; break; // 180째
        case 3: sy = ox; sx = bw - 1 - oy; break;          // 270째
    }
}

std::vector<int64_t> jigsaw_permutation(int64_t h, int64_t w, int64_t rows, int64_t cols,
                                        uint64_t seed, bool rotate_pieces) {
    const int64_t bh = h / rows, bw = w / cols;
    const int64_t n_pieces = rows * cols;

    uint64_t s = seed;
    s = mix_seed(s, static_cast<uint64_t>(h));
    s = mix_seed(s, static_cast<uint64_t>(w));
    s = mix_seed(s, static_cast<uint64_t>(rows));
    s = mix_seed(s, static_cast<uint64_t>(cols));
    Rng rng(s);

    std::vector<int64_t> piece_src(static_cast<size_t>(n_pieces));
    std::iota(piece_src.begin(), piece_src.end(), 0);
    rng.shuffle(piece_src);

    std::vector<int> rot(static_cast<size_t>(n_pieces), 0);
    if (rotate_pieces) {
        const bool square = bh == bw;
        for (int64_t i = 0; i < n_pieces; ++i)
            rot[static_cast<size_t>(i)] =
                square ? static_cast<int>(rng.uniform_int(4)) : 2 * static_cast<int>(rng.uniform_int(2));
    }

    std::vector<int64_t> perm(static_cast<size_t>(h * w));
    for (int64_t dst = 0; dst < n_pieces; ++dst) {
        const int64_t src = piece_src[static_cast<size_t>(dst)];
        const int64_t dy0 = (dst / cols) * bh, dx0 = (dst % cols) * bw;
        const int64_t sy0 = (src / cols) * bh, sx0 = (src % cols) * bw;
        for (int64_t oy = 0; oy < bh; ++oy) {
            for (int64_t ox = 0; ox < bw; ++ox) {
                int64_t sy, sx;
                rotate_offset(rot[static_cast<size_t>(dst)], bh, bw, oy, ox, sy, sx);
                perm[static_cast<size_t>((dy0 + oy) * w + dx0 + ox)] = (sy0 + sy) * w + sx0 + sx;
            }
        }
    }
    return perm;
}

}  // namespace

ViewTransform make_view(ViewKind kind, int64_t height, int64_t width, int64_t piece_rows,
                        int64_t piece_cols, uint64_t seed, bool rotate_pieces) {
    SM_CHECK(height >= 1 && width >= 1, "make_view: dims must be >= 1, got ", height, "x", width);
    ViewTransform v;
    v.kind = kind;
    v.height = height;
    v.width = width;
    const int64_t n = height * width;
    v.permutation.resize(static_cast<size_t>(n));
    switch (kind) {
        case ViewKind::Identity:
            std::iota(v.permutation.begin(), v.permutation.end(), 0);
            break;
        case ViewKind::FlipVertical:
            for (int64_t y = 0; y < height; ++y)
                for (int64_t x = 0; x < width; ++x)
                    v.permutation[static_cast<size_t>(y * width + x)] = (height - 1 - y) * width + x;
            break;
        case ViewKind::Rotate180:
            for (int64_t i = 0; i < n; ++i) v.permutation[static_cast<size_t>(i)] = n - 1 - i;
            break;
        case ViewKind::Jigsaw:
            SM_CHECK(piece_rows >= 1 && piece_cols >= 1, "jigsaw: piece_grid required");
            SM_CHECK(height % piece_rows == 0 && width % piece_cols == 0,
                     "jigsaw: piece_grid (", piece_rows, ", ", piece_cols, ") must divide dims (",
                     height, ", ", width, ")");
            v.seed = seed;
            v.piece_rows = piece_rows;
            v.piece_cols = piece_cols;
            v.rotate_pieces = rotate_pieces;
            v.permutation = jigsaw_permutation(height, width, piece_rows, piece_cols, seed, rotate_pieces);
            break;
    }
    return v;
}

ViewTransform invert(const ViewTransform& v) {
    ViewTransform out = v;
    for (int64_t j = 0; j < static_cast<int64_t>(v.permutation.size()); ++j)
        out.permutation[static_cast<size_t>(v.permutation[static_cast<size_t>(j)])] = j;
    return out;
}

ImageU8 apply(const ViewTransform& v, const ImageU8& img) {
    SM_CHECK(img.h == v.height && img.w == v.width, "apply: image ", img.h, "x", img.w,
             " does not match view ", v.height, "x", v.width);
    ImageU8 out = img;
    const int64_t c = img.c;
    for (int64_t j = 0; j < v.height * v.width; ++j) {
        const int64_t s = v.permutation[static_cast<size_t>(j)];
        for (int64_t ch = 0; ch < c; ++ch)
            out.data[static_cast<size_t>(j * c + ch)] = img.data[static_cast<size_t>(s * c + ch)];
    }
    return out;
}

Tensor apply(const ViewTransform& v, const Tensor& frame) {
    SM_CHECK(frame.ndim() == 3, "apply: expected [H,W,C] tensor");
    SM_CHECK(frame.dim(0) == v.height && frame.dim(1) == v.width, "apply: tensor ", frame.dim(0),
             "x", frame.dim(1), " does not match view ", v.height, "x", v.width);
    const int64_t c = frame.dim(2);
    Tensor out(frame.shape());
    for (int64_t j = 0; j < v.height * v.width; ++j) {
        const int64_t s = v.permutation[static_cast<size_t>(j)];
        for (int64_t ch = 0; ch < c; ++ch) out[j * c + ch] = frame[s * c + ch];
    }
    return out;
}

Tensor apply_video(const ViewTransform& v, const Tensor& video) {
    SM_CHECK(video.ndim() == 4, "apply_video: expected [T,H,W,C] tensor");
    SM_CHECK(video.dim(1) == v.height && video.dim(2) == v.width, "apply_video: dims mismatch");
    const int64_t t = video.dim(0), c = video.dim(3);
    const int64_t stride = v.height * v.width * c;
    Tensor out(video.shape());
    for (int64_t f = 0; f < t; ++f)
        for (int64_t j = 0; j < v.height * v.width; ++j) {
            const int64_t s = v.permutation[static_cast<size_t>(j)];
            for (int64_t ch = 0; ch < c; ++ch) out[f * stride + j * c + ch] = video[f * stride + s * c + ch];
        }
    return out;
}

}  // namespace sm
