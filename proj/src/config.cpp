#include "stylemill/config.hpp"

#include <cmath>
#include <fstream>
#include <functional>

#include "stylemill/error.hpp"

namespace sm {

using json = nlohmann::ordered_json;

namespace {

struct Entry {
    const char* key;
    std::function<void(RunConfig&, const json&)> set;
    std::function<json(const RunConfig&)> get;
};

template <typename T>
Entry field(const char* key, T RunConfig::*member) {
    return Entry{key,
                 [member, key](RunConfig& c, const json& v) {
                     try {
                         c.*member = v.get<T>();
                     } catch (const json::exception&) {
                         fail("config: bad value for '", key, "': ", v.dump());
                     }
                 },
                 [member](const RunConfig& c) { return json(c.*member); }};
}

const std::vector<Entry>& registry() {
    static const std::vector<Entry> entries = {
        field("image_h", &RunConfig::image_h),
        field("image_w", &RunConfig::image_w),
        field("frames", &RunConfig::frames),
        field("patch", &RunConfig::patch),
        field("width", &RunConfig::width),
        field("blocks", &RunConfig::blocks),
        field("heads", &RunConfig::heads),
        field("ffn_mult", &RunConfig::ffn_mult),
        field("lora_rank", &RunConfig::lora_rank),
        field("n_styles", &RunConfig::n_styles),
        field("n_objects", &RunConfig::n_objects),
        field("encoder_dim", &RunConfig::encoder_dim),
        field("encoder_grid", &RunConfig::encoder_grid),
        field("encoder_seed", &RunConfig::encoder_seed),
        field("n_query_tokens", &RunConfig::n_query_tokens),
        field("keep_k", &RunConfig::keep_k),
        field("agg_heads", &RunConfig::agg_heads),
        field("alpha_margin", &RunConfig::alpha_margin),
        field("mse_lambda", &RunConfig::mse_lambda),
        field("projector_hidden", &RunConfig::projector_hidden),
        field("projector_epochs", &RunConfig::projector_epochs),
        field("projector_batch", &RunConfig::projector_batch),
        field("projector_lr", &RunConfig::projector_lr),
        field("schedule", &RunConfig::schedule),
        field("train_timesteps", &RunConfig::train_timesteps),
        field("sample_steps", &RunConfig::sample_steps),
        field("dataset_steps", &RunConfig::dataset_steps),
        field("cfg_text", &RunConfig::cfg_text),
        field("cfg_style", &RunConfig::cfg_style),
        field("alpha_motion", &RunConfig::alpha_motion),
        field("motion_train_alpha", &RunConfig::motion_train_alpha),
        field("p_drop", &RunConfig::p_drop),
        field("base_steps", &RunConfig::base_steps),
        field("base_batch", &RunConfig::base_batch),
        field("base_lr", &RunConfig::base_lr),
        field("motion_steps", &RunConfig::motion_steps),
        field("motion_batch", &RunConfig::motion_batch),
        field("motion_lr", &RunConfig::motion_lr),
        field("style_steps", &RunConfig::style_steps),
        field("style_batch", &RunConfig::style_batch),
        field("style_lr", &RunConfig::style_lr),
        field("control_steps", &RunConfig::control_steps),
        field("control_batch", &RunConfig::control_batch),
        field("control_lr", &RunConfig::control_lr),
        field("tile_factor", &RunConfig::tile_factor),
        field("condition", &RunConfig::condition),
        field("canny_low", &RunConfig::canny_low),
        field("canny_high", &RunConfig::canny_high),
        field("jigsaw_rows", &RunConfig::jigsaw_rows),
        field("jigsaw_cols", &RunConfig::jigsaw_cols),
        field("jigsaw_rotate", &RunConfig::jigsaw_rotate),
        field("gen_workers", &RunConfig::gen_workers),
        field("corpus_seed", &RunConfig::corpus_seed),
        field("corpus_min_speed", &RunConfig::corpus_min_speed),
        field("corpus_max_speed", &RunConfig::corpus_max_speed),
    };
    return entries;
}

}  // namespace

RunConfig RunConfig::from_json(const json& j) {
    SM_CHECK(j.is_object(), "config: expected a flat JSON object");
    RunConfig c;
    for (const auto& [key, value] : j.items()) {
        bool known = false;
        for (const Entry& e : registry())
            if (key == e.key) {
                e.set(c, value);
                known = true;
                break;
            }
        SM_CHECK(known, "config: unknown key '", key, "'");
    }
    c.validate();
    return c;
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    SM_CHECK(in.good(), "cannot open config ", path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        fail("config: failed to parse ", path.string(), ": ", e.what());
    }
    return from_json(j);
}

json RunConfig::to_json() const {
    json j;
    for (const Entry& e : registry()) j[e.key] = e.get(*this);
    return j;
}

void RunConfig::validate() const {
    model_config().validate();
    SM_CHECK(encoder_dim >= 2 && encoder_grid >= 1, "config: bad encoder dims");
    SM_CHECK(image_h % encoder_grid == 0 && image_w % encoder_grid == 0,
             "config: encoder grid ", encoder_grid, " must divide image ", image_h, "x", image_w);
    SM_CHECK(n_query_tokens >= 1, "config: n_query_tokens must be >= 1");
    SM_CHECK(keep_k >= 0 && keep_k <= encoder_grid * encoder_grid, "config: keep_k out of range");
    SM_CHECK(alpha_margin > 0.0, "config: alpha_margin must be > 0");
    SM_CHECK(mse_lambda >= 0.0, "config: mse_lambda must be >= 0");
    SM_CHECK(train_timesteps >= 1 && sample_steps >= 1 && sample_steps <= train_timesteps,
             "config: bad timestep counts");
    SM_CHECK(dataset_steps >= 1 && dataset_steps <= train_timesteps, "config: bad dataset_steps");
    SM_CHECK(p_drop >= 0.0 && p_drop < 1.0, "config: p_drop must be in [0, 1)");
    SM_CHECK(tile_factor >= 1 && image_h % tile_factor == 0 && image_w % tile_factor == 0,
             "config: tile_factor ", tile_factor, " must divide image dims");
    SM_CHECK(canny_low <= canny_high, "config: canny_low above canny_high");
    SM_CHECK(jigsaw_rows >= 1 && jigsaw_cols >= 1 && image_h % jigsaw_rows == 0 &&
                 image_w % jigsaw_cols == 0,
             "config: jigsaw grid must divide image dims");
    SM_CHECK(gen_workers >= 1, "config: gen_workers must be >= 1");
    parse_schedule_kind(schedule);
    parse_condition_kind(condition);
    SM_CHECK(corpus_min_speed >= 0.0 && corpus_max_speed >= corpus_min_speed,
             "config: bad corpus speeds");
}

ModelConfig RunConfig::model_config() const {
    ModelConfig m;
    m.image_h = image_h;
    m.image_w = image_w;
    m.frames = frames;
    m.patch = patch;
    m.width = width;
    m.blocks = static_cast<int>(blocks);
    m.heads = static_cast<int>(heads);
    m.ffn_mult = ffn_mult;
    m.n_styles = n_styles;
    m.n_objects = n_objects;
    m.lora_rank = lora_rank;
    return m;
}

CorpusConfig RunConfig::corpus_config() const {
    CorpusConfig c;
    c.height = image_h;
    c.width = image_w;
    c.frames = frames;
    c.n_styles = n_styles;
    c.n_objects = n_objects;
    c.seed = corpus_seed;
    c.min_speed = corpus_min_speed;
    c.max_speed = corpus_max_speed;
    return c;
}

NoiseSchedule RunConfig::make_schedule() const {
    return parse_schedule_kind(schedule) == ScheduleKind::Linear
               ? NoiseSchedule::linear(train_timesteps)
               : NoiseSchedule::cosine(train_timesteps);
}

int64_t RunConfig::resolved_keep_k() const {
    if (keep_k > 0) return keep_k;
    const int64_t p = encoder_grid * encoder_grid;
    // paper-scale keep ratio 15/256 carried over to the desk grid
    const int64_t k = std::llround(0.06 * static_cast<double>(p));
    return std::max<int64_t>(1, std::min(k, p));
}

}  // namespace sm
