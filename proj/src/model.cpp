#include "stylemill/model.hpp"

#include "stylemill/error.hpp"

namespace sm {

std::string stage_name(TrainStage s) {
    switch (s) {
        case TrainStage::Base: return "base";
        case TrainStage::MotionAdapter: return "motion";
        case TrainStage::Style: return "style";
        case TrainStage::Control: return "control";
    }
    fail("bad TrainStage");
}

TrainStage parse_stage(const std::string& name) {
    if (name == "base") return TrainStage::Base;
    if (name == "motion") return TrainStage::MotionAdapter;
    if (name == "style") return TrainStage::Style;
    if (name == "control") return TrainStage::Control;
    fail("unknown stage '", name, "'");
}

ParamRefs StyleModel::all_params() {
    ParamRefs refs;
    dit.collect(refs);
    if (extractor) extractor->collect(refs);
    if (control) control->collect(refs);
    return refs;
}

ParamRefs StyleModel::stage_params(TrainStage stage) {
    ParamRefs all = all_params();
    ParamRefs out;
    switch (stage) {
        case TrainStage::Base:
            for (Param* p : all)
                if (p->name.rfind("dit.", 0) == 0 && p->name.find(".sca.") == std::string::npos)
                    out.push_back(p);
            break;
        case TrainStage::MotionAdapter:
            SM_CHECK(dit.adapters.has_value(), "stage_params: no motion adapters attached");
            out = filter_by_prefix(all, {"motion."});
            break;
        case TrainStage::Style:
            SM_CHECK(extractor.has_value(), "stage_params: no extractor attached");
            out = filter_by_substring(all, {".sca."});
            for (Param* p : filter_by_prefix(all, {"extractor.agg."})) out.push_back(p);
            break;
        case TrainStage::Control:
            SM_CHECK(control.has_value(), "stage_params: no control stack attached");
            out = filter_by_prefix(all, {"control."});
            break;
    }
    SM_CHECK(!out.empty(), "stage_params: empty trainable set for stage ", stage_name(stage));
    return out;
}

}  // namespace sm
