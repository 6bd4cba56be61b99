#pragma once

#include <string>
#include <vector>

#include "stylemill/encoder.hpp"
#include "stylemill/style_extractor.hpp"

namespace sm {

// Trend proxies for the evaluation suite. Values are comparable across
// runs of this project only; reports carry a proxy flag so they are not
// mistaken for full-scale metric numbers.

// Mean over frames of cosine between projected global embeddings of the
// frame and the reference image.
double style_similarity(const std::vector<Tensor>& frames, const Tensor& reference,
                        const ImageEncoder& encoder, const ProjectorParams& projector);

// Mean absolute first temporal difference; needs >= 2 frames.
double dynamic_degree(const Tensor& video);

// 1 / (1 + mean |second temporal difference|); needs >= 3 frames. 1 for
// still or constant-velocity pixel motion.
double motion_smoothness(const Tensor& video);

// Mean over frames of cosine between the frame's global embedding and the
// prompt embedding.
double text_alignment(const std::vector<Tensor>& frames, int64_t style_id, int64_t object_id,
                      const ImageEncoder& encoder, const TextEmbedder& text);

struct EvalItemReport {
    std::string name;
    double style_similarity = 0.0;
    double text_alignment = 0.0;
    double dynamic_degree = 0.0;
    double motion_smoothness = 0.0;
};

struct EvalReport {
    bool proxy = true;  // always: these are desk-scale trend proxies
    std::vector<EvalItemReport> items;

    EvalItemReport aggregate() const;  // arithmetic mean of per-item values
    std::string to_json() const;
};

std::vector<Tensor> video_frames(const Tensor& video);  // split [T,H,W,C] into [H,W,C] frames

}  // namespace sm
