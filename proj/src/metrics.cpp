#include "stylemill/metrics.hpp"

#include <json.hpp>

#include <cmath>

#include "stylemill/error.hpp"

namespace sm {

std::vector<Tensor> video_frames(const Tensor& video) {
    SM_CHECK(video.ndim() == 4, "video_frames: expected [T,H,W,C]");
    const int64_t t = video.dim(0), stride = video.dim(1) * video.dim(2) * video.dim(3);
    std::vector<Tensor> frames;
    for (int64_t f = 0; f < t; ++f) {
        Tensor frame({video.dim(1), video.dim(2), video.dim(3)});
        for (int64_t i = 0; i < stride; ++i) frame[i] = video[f * stride + i];
        frames.push_back(std::move(frame));
    }
    return frames;
}

double style_similarity(const std::vector<Tensor>& frames, const Tensor& reference,
                        const ImageEncoder& encoder, const ProjectorParams& projector) {
    SM_CHECK(!frames.empty(), "style_similarity: no frames");
    const Tensor ref_proj = global_project(projector, encoder.encode(reference).global);
    SM_CHECK(ref_proj.max_abs() > 0.0,
             "style_similarity: projector output is zero (untrained projector)");
    double total = 0.0;
    for (const Tensor& f : frames) {
        const Tensor fp = global_project(projector, encoder.encode(f).global);
        total += cosine(fp, ref_proj);
    }
    return total / static_cast<double>(frames.size());
}

double dynamic_degree(const Tensor& video) {
    SM_CHECK(video.ndim() == 4, "dynamic_degree: expected [T,H,W,C]");
    const int64_t t = video.dim(0);
    SM_CHECK(t >= 2, "dynamic_degree: need at least 2 frames, got ", t);
    const int64_t stride = video.dim(1) * video.dim(2) * video.dim(3);
    double total = 0.0;
    for (int64_t f = 0; f + 1 < t; ++f)
        for (int64_t i = 0; i < stride; ++i)
            total += std::fabs(video[(f + 1) * stride + i] - video[f * stride + i]);
    return total / static_cast<double>((t - 1) * stride);
}

double motion_smoothness(const Tensor& video) {
    SM_CHECK(video.ndim() == 4, "motion_smoothness: expected [T,H,W,C]");
    const int64_t t = video.dim(0);
    SM_CHECK(t >= 3, "motion_smoothness: need at least 3 frames, got ", t);
    const int64_t stride = video.dim(1) * video.dim(2) * video.dim(3);
    double total = 0.0;
    for (int64_t f = 0; f + 2 < t; ++f)
        for (int64_t i = 0; i < stride; ++i)
            total += std::fabs(video[(f + 2) * stride + i] - 2.0 * video[(f + 1) * stride + i] +
                               video[f * stride + i]);
    return 1.0 / (1.0 + total / static_cast<double>((t - 2) * stride));
}

double text_alignment(const std::vector<Tensor>& frames, int64_t style_id, int64_t object_id,
                      const ImageEncoder& encoder, const TextEmbedder& text) {
    SM_CHECK(!frames.empty(), "text_alignment: no frames");
    const Tensor prompt = text.embed(style_id, object_id);
    double total = 0.0;
    for (const Tensor& f : frames) total += cosine(encoder.encode(f).global, prompt);
    return total / static_cast<double>(frames.size());
}

EvalItemReport EvalReport::aggregate() const {
    EvalItemReport agg;
    agg.name = "aggregate";
    if (items.empty()) return agg;
    for (const auto& i : items) {
        agg.style_similarity += i.style_similarity;
        agg.text_alignment += i.text_alignment;
        agg.dynamic_degree += i.dynamic_degree;
        agg.motion_smoothness += i.motion_smoothness;
    }
    const double n = static_cast<double>(items.size());
    agg.style_similarity /= n;
    agg.text_alignment /= n;
    agg.dynamic_degree /= n;
    agg.motion_smoothness /= n;
    return agg;
}

std::string EvalReport::to_json() const {
    nlohmann::ordered_json j;
    j["proxy"] = proxy;
    j["note"] = "desk-scale trend proxies; not comparable to full-scale metric values";
    auto item_json = [](const EvalItemReport& i) {
        return nlohmann::ordered_json{{"name", i.name},
                                      {"style_similarity", i.style_similarity},
                                      {"text_alignment", i.text_alignment},
                                      {"dynamic_degree", i.dynamic_degree},
                                      {"motion_smoothness", i.motion_smoothness}};
    };
    j["aggregate"] = item_json(aggregate());
    j["items"] = nlohmann::ordered_json::array();
    for (const auto& i : items) j["items"].push_back(item_json(i));
    return j.dump(2);
}

}  // namespace sm
