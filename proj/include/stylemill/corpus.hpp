#pragma once

#include <cstdint>

#include "stylemill/tensor.hpp"

namespace sm {

// Procedural "styled shapes" corpus. A style id maps to a deterministic
// family of palettes and fill patterns, an object id to a shape class.
// Videos move the shape along a seeded trajectory with toroidal wrap, so
// the training data carries real motion.
struct CorpusConfig {
    int64_t height = 32, width = 32, frames = 8;
    int64_t n_styles = 15, n_objects = 15;
    uint64_t seed = 77;        // style family parameters derive from this
    double min_speed = 1.0;    // shape displacement in pixels per frame
    double max_speed = 3.0;
};

class ShapeCorpus {
public:
    explicit ShapeCorpus(CorpusConfig cfg);

    // [T,H,W,3]; deterministic in (style_id, object_id, sample_seed).
    Tensor render_video(int64_t style_id, int64_t object_id, uint64_t sample_seed) const;
    // [H,W,3]; the first frame of the corresponding video.
    Tensor render_image(int64_t style_id, int64_t object_id, uint64_t sample_seed) const;
    // [T,H,W,3] with every frame equal to frame 0 (a still video).
    Tensor render_still_video(int64_t style_id, int64_t object_id, uint64_t sample_seed) const;

    const CorpusConfig& config() const { return cfg_; }

private:
    CorpusConfig cfg_;
};

}  // namespace sm
