#pragma once

#include <optional>

#include "stylemill/control.hpp"
#include "stylemill/dit.hpp"
#include "stylemill/style_extractor.hpp"

namespace sm {

// Style extraction parameters that ride along with the backbone: the
// frozen contrastive projector plus the trainable texture aggregation.
struct ExtractorParams {
    ProjectorParams projector;
    TextureAggParams agg;
    int64_t keep_k = 1;  // patch selection budget

    void collect(ParamRefs& out) {
        projector.collect(out);
        agg.collect(out);
    }
};

enum class TrainStage { Base, MotionAdapter, Style, Control };

std::string stage_name(TrainStage s);
TrainStage parse_stage(const std::string& name);

// Everything a sampling or training run needs in one place. Optional
// branches appear as the corresponding stages are trained.
struct StyleModel {
    ModelConfig cfg;
    VideoDiT dit;
    std::optional<ExtractorParams> extractor;
    std::optional<ControlStack> control;

    // Encoder identity; checkpoints refuse to load under a different one.
    uint64_t encoder_seed = 0;
    int64_t encoder_dim = 0;
    int64_t encoder_grid = 0;

    ParamRefs all_params();
    // Parameters updated by a stage; everything else stays frozen.
    //   Base: backbone minus SCA (and minus adapters/control).
    //   MotionAdapter: LoRA factors only.
    //   Style: SCA projections + texture aggregation.
    //   Control: the control stack only.
    ParamRefs stage_params(TrainStage stage);
};

}  // namespace sm
