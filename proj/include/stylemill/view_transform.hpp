#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stylemill/image.hpp"
#include "stylemill/tensor.hpp"

namespace sm {

enum class ViewKind { Identity, FlipVertical, Rotate180, Jigsaw };

std::string view_kind_name(ViewKind k);
ViewKind parse_view_kind(const std::string& name);  // rejects unknown names

// Invertible pixel rearrangement. The permutation is stored explicitly:
// output pixel j takes input pixel permutation[j], all channels together.
struct ViewTransform {
    ViewKind kind = ViewKind::Identity;
    int64_t height = 0, width = 0;
    std::vector<int64_t> permutation;
    uint64_t seed = 0;                      // jigsaw only
    int64_t piece_rows = 0, piece_cols = 0; // jigsaw only
    bool rotate_pieces = false;             // jigsaw only

    bool is_identity_permutation() const;
};

// Deterministic: the permutation is a pure function of the arguments.
// The jigsaw permutation is derived from a splitmix64 stream seeded by
// (seed, height, width, piece grid), so datasets regenerate bit-for-bit.
// Jigsaw pieces are equal rectangles shuffled uniformly; when
// rotate_pieces is set, square pieces additionally rotate by a multiple
// of 90 degrees (non-square pieces by 0 or 180).
ViewTransform make_view(ViewKind kind, int64_t height, int64_t width, int64_t piece_rows = 0,
                        int64_t piece_cols = 0, uint64_t seed = 0, bool rotate_pieces = false);

ViewTransform invert(const ViewTransform& v);

// Verifies the stored permutation is a bijection over 0..H*W-1.
bool is_bijection(const std::vector<int64_t>& permutation);

ImageU8 apply(const ViewTransform& v, const ImageU8& img);
// [H,W,C] frame.
Tensor apply(const ViewTransform& v, const Tensor& frame);
// [T,H,W,C]: the same rearrangement on every frame.
Tensor apply_video(const ViewTransform& v, const Tensor& video);

}  // namespace sm
