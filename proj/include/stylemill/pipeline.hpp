#pragma once

#include <functional>

#include "stylemill/checkpoint.hpp"
#include "stylemill/config.hpp"
#include "stylemill/corpus.hpp"
#include "stylemill/illusion.hpp"

namespace sm {

// Stage training loops over the procedural corpus. Single sequential
// loop, deterministic under the given seed. The progress sink (if any)
// receives (step, loss) every `log_every` steps.
using ProgressSink = std::function<void(int64_t step, double loss)>;

struct StageRunConfig {
    int64_t steps = 0;
    int64_t batch = 0;
    double lr = 0.0;
};

std::vector<double> run_base_training(StyleModel& model, const ShapeCorpus& corpus,
                                      const NoiseSchedule& sched, const StageRunConfig& run,
                                      double p_drop, uint64_t seed,
                                      const ProgressSink& sink = nullptr);

// Still videos (one frame repeated), adapter factors only, alpha = train_alpha.
std::vector<double> run_motion_training(StyleModel& model, const ShapeCorpus& corpus,
                                        const NoiseSchedule& sched, const StageRunConfig& run,
                                        double train_alpha, uint64_t seed,
                                        const ProgressSink& sink = nullptr);

// SCA + texture aggregation; style reference = an independent render of
// the same style family, encoded outside the graph (projector frozen).
std::vector<double> run_style_training(StyleModel& model, const ShapeCorpus& corpus,
                                       const ImageEncoder& encoder, const TextEmbedder& text,
                                       const NoiseSchedule& sched, const StageRunConfig& run,
                                       double p_drop, uint64_t seed,
                                       const ProgressSink& sink = nullptr);

std::vector<double> run_control_training(StyleModel& model, const ShapeCorpus& corpus,
                                         const ImageEncoder& encoder, const TextEmbedder& text,
                                         const NoiseSchedule& sched, const StageRunConfig& run,
                                         ConditionKind condition, int64_t tile_factor,
                                         const CannyConfig& canny, double p_drop, uint64_t seed,
                                         const ProgressSink& sink = nullptr);

// Style-stage inputs for one target: reference image from the same style
// family, encoded, patch-filtered against the target prompt.
struct StyleInputs {
    Tensor selected_rows;  // [k, D]
    Tensor global;         // [C]
};
StyleInputs make_style_inputs(const StyleModel& model, const ImageEncoder& encoder,
                              const TextEmbedder& text, const Tensor& style_image,
                              const TextCond& prompt);

// Procedural pair manifest: pairs_per_style pairs per style family, each
// pair (render, jigsaw(render)). Same record format as the illusion
// dataset, so the projector trainer consumes either.
std::filesystem::path build_procedural_pair_manifest(const ShapeCorpus& corpus,
                                                     int64_t pairs_per_style, int64_t jigsaw_rows,
                                                     int64_t jigsaw_cols, uint64_t master_seed,
                                                     const std::filesystem::path& out_dir);

// Encodes both images of every manifest record.
std::vector<std::array<Tensor, 2>> encode_pairs(const std::filesystem::path& manifest,
                                                const ImageEncoder& encoder);

}  // namespace sm
