#include "stylemill/pipeline.hpp"

#include "stylemill/error.hpp"

namespace sm {

namespace {

struct DrawnSample {
    int64_t style_id, object_id;
    uint64_t seed;
};

DrawnSample draw_sample(const ShapeCorpus& corpus, Rng& rng) {
    DrawnSample d;
    d.style_id = static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(corpus.config().n_styles)));
    d.object_id =
        static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(corpus.config().n_objects)));
    d.seed = rng.next_u64();
    return d;
}

std::vector<double> run_stage(StyleModel& model, const NoiseSchedule& sched,
                              const StageRunConfig& run, TrainStage stage,
                              const TrainStepConfig& step_cfg, uint64_t seed,
                              const std::function<TrainItem(Rng&)>& make_item,
                              const ProgressSink& sink) {
    SM_CHECK(run.steps >= 1 && run.batch >= 1 && run.lr > 0.0, "stage run: bad steps/batch/lr");
    Adam opt(model.stage_params(stage), run.lr);
    Rng rng(mix_seed(seed, 0x57A6E));
    std::vector<double> losses;
    losses.reserve(static_cast<size_t>(run.steps));
    const int64_t log_every = std::max<int64_t>(1, run.steps / 20);
    for (int64_t step = 0; step < run.steps; ++step) {
        std::vector<TrainItem> batch;
        batch.reserve(static_cast<size_t>(run.batch));
        for (int64_t i = 0; i < run.batch; ++i) batch.push_back(make_item(rng));
        const double loss = training_step(model, sched, batch, opt, rng, step_cfg);
        losses.push_back(loss);
        if (sink && (step % log_every == 0 || step + 1 == run.steps)) sink(step, loss);
    }
    return losses;
}

}  // namespace

std::vector<double> run_base_training(StyleModel& model, const ShapeCorpus& corpus,
                                      const NoiseSchedule& sched, const StageRunConfig& run,
                                      double p_drop, uint64_t seed, const ProgressSink& sink) {
    TrainStepConfig cfg;
    cfg.stage = TrainStage::Base;
    cfg.p_drop = p_drop;
    return run_stage(model, sched, run, TrainStage::Base, cfg, seed,
                     [&](Rng& rng) {
                         const DrawnSample d = draw_sample(corpus, rng);
                         TrainItem item;
                         item.video = corpus.render_video(d.style_id, d.object_id, d.seed);
                         item.text = TextCond::ids(d.style_id, d.object_id);
                         return item;
                     },
                     sink);
}

std::vector<double> run_motion_training(StyleModel& model, const ShapeCorpus& corpus,
                                        const NoiseSchedule& sched, const StageRunConfig& run,
                                        double train_alpha, uint64_t seed, const ProgressSink& sink) {
    SM_CHECK(model.dit.adapters.has_value(), "motion training: no adapters attached");
    TrainStepConfig cfg;
    cfg.stage = TrainStage::MotionAdapter;
    cfg.alpha_motion = train_alpha;
    return run_stage(model, sched, run, TrainStage::MotionAdapter, cfg, seed,
                     [&](Rng& rng) {
                         const DrawnSample d = draw_sample(corpus, rng);
                         TrainItem item;
                         item.video = corpus.render_still_video(d.style_id, d.object_id, d.seed);
                         item.text = TextCond::ids(d.style_id, d.object_id);
                         return item;
                     },
                     sink);
}

StyleInputs make_style_inputs(const StyleModel& model, const ImageEncoder& encoder,
                              const TextEmbedder& text, const Tensor& style_image,
                              const TextCond& prompt) {
    SM_CHECK(model.extractor.has_value(), "make_style_inputs: model has no extractor");
    const ExtractorParams& ex = *model.extractor;
    const EmbeddingBundle bundle = encoder.encode(style_image);
    const Tensor f_text = prompt.is_null ? text.null_embedding()
                                         : text.embed(prompt.style_id, prompt.object_id);
    const int64_t k = std::clamp<int64_t>(ex.keep_k, 1, bundle.patches.rows());
    StyleInputs si;
    si.selected_rows = select_patches(bundle.patches, f_text, k).rows;
    si.global = global_project(ex.projector, bundle.global);
    return si;
}

std::vector<double> run_style_training(StyleModel& model, const ShapeCorpus& corpus,
                                       const ImageEncoder& encoder, const TextEmbedder& text,
                                       const NoiseSchedule& sched, const StageRunConfig& run,
                                       double p_drop, uint64_t seed, const ProgressSink& sink) {
    SM_CHECK(model.extractor.has_value(), "style training: no extractor attached");
    TrainStepConfig cfg;
    cfg.stage = TrainStage::Style;
    cfg.p_drop = p_drop;
    return run_stage(model, sched, run, TrainStage::Style, cfg, seed,
                     [&](Rng& rng) {
                         const DrawnSample d = draw_sample(corpus, rng);
                         TrainItem item;
                         item.video = corpus.render_video(d.style_id, d.object_id, d.seed);
                         item.text = TextCond::ids(d.style_id, d.object_id);
                         // reference: same family, independent object/seed
                         const DrawnSample r = draw_sample(corpus, rng);
                         const Tensor ref = corpus.render_image(d.style_id, r.object_id, r.seed);
                         const StyleInputs si = make_style_inputs(model, encoder, text, ref, item.text);
                         item.style_selected_rows = si.selected_rows;
                         item.style_global = si.global;
                         return item;
                     },
                     sink);
}

std::vector<double> run_control_training(StyleModel& model, const ShapeCorpus& corpus,
                                         const ImageEncoder& encoder, const TextEmbedder& text,
                                         const NoiseSchedule& sched, const StageRunConfig& run,
                                         ConditionKind condition, int64_t tile_factor,
                                         const CannyConfig& canny, double p_drop, uint64_t seed,
                                         const ProgressSink& sink) {
    SM_CHECK(model.control.has_value(), "control training: no control stack attached");
    SM_CHECK(model.control->cond_channels == condition_channels(condition),
             "control training: stack expects ", model.control->cond_channels,
             " channels, condition '", condition_kind_name(condition), "' provides ",
             condition_channels(condition));
    TrainStepConfig cfg;
    cfg.stage = TrainStage::Control;
    cfg.p_drop = p_drop;
    const bool with_style = model.extractor.has_value();
    return run_stage(model, sched, run, TrainStage::Control, cfg, seed,
                     [&, with_style](Rng& rng) {
                         const DrawnSample d = draw_sample(corpus, rng);
                         TrainItem item;
                         item.video = corpus.render_video(d.style_id, d.object_id, d.seed);
                         item.text = TextCond::ids(d.style_id, d.object_id);
                         item.condition =
                             make_condition(item.video, condition, tile_factor, canny).video;
                         if (with_style) {
                             const DrawnSample r = draw_sample(corpus, rng);
                             const Tensor ref = corpus.render_image(d.style_id, r.object_id, r.seed);
                             const StyleInputs si =
                                 make_style_inputs(model, encoder, text, ref, item.text);
                             item.style_selected_rows = si.selected_rows;
                             item.style_global = si.global;
                         }
                         return item;
                     },
                     sink);
}

std::filesystem::path build_procedural_pair_manifest(const ShapeCorpus& corpus,
                                                     int64_t pairs_per_style, int64_t jigsaw_rows,
                                                     int64_t jigsaw_cols, uint64_t master_seed,
                                                     const std::filesystem::path& out_dir) {
    SM_CHECK(pairs_per_style >= 1, "procedural pairs: need at least one pair per style");
    const CorpusConfig& cc = corpus.config();
    std::filesystem::create_directories(out_dir / "images");
    const std::filesystem::path manifest_path = out_dir / "manifest.jsonl";
    SM_CHECK(!std::filesystem::exists(manifest_path), "procedural pairs: manifest already exists at ",
             manifest_path.string());

    std::vector<PairRecord> records;
    int64_t pair_id = 0;
    for (int64_t s = 0; s < cc.n_styles; ++s) {
        for (int64_t i = 0; i < pairs_per_style; ++i, ++pair_id) {
            const uint64_t pair_seed = mix_seed(master_seed, static_cast<uint64_t>(pair_id));
            Rng rng(pair_seed);
            PairRecord rec;
            rec.pair_id = pair_id;
            rec.seed = pair_seed;
            rec.prompts.style_id = s;
            rec.prompts.style = "style-" + std::to_string(s);
            rec.prompts.object_a_id =
                static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(cc.n_objects)));
            rec.prompts.object_b_id = rec.prompts.object_a_id;
            rec.prompts.object_a = "object-" + std::to_string(rec.prompts.object_a_id);
            rec.prompts.object_b = rec.prompts.object_a;
            rec.view = make_view(ViewKind::Jigsaw, cc.height, cc.width, jigsaw_rows, jigsaw_cols,
                                 rng.next_u64());

            const Tensor img = corpus.render_image(rec.prompts.style_id, rec.prompts.object_a_id,
                                                   rng.next_u64());
            const ImageU8 a = float_to_image(img);
            const ImageU8 b = apply(rec.view, a);

            char name[64];
            std::snprintf(name, sizeof(name), "images/pair_%06lld_a.png",
                          static_cast<long long>(pair_id));
            rec.image_a = name;
            std::snprintf(name, sizeof(name), "images/pair_%06lld_b.png",
                          static_cast<long long>(pair_id));
            rec.image_b = name;
            write_png(out_dir / rec.image_a, a);
            write_png(out_dir / rec.image_b, b);
            records.push_back(std::move(rec));
        }
    }
    write_manifest(manifest_path, records);
    return manifest_path;
}

std::vector<std::array<Tensor, 2>> encode_pairs(const std::filesystem::path& manifest,
                                                const ImageEncoder& encoder) {
    const std::filesystem::path base = manifest.parent_path();
    std::vector<std::array<Tensor, 2>> out;
    for (const PairRecord& rec : read_manifest(manifest)) {
        const Tensor a = image_to_float(read_png(base / rec.image_a));
        const Tensor b = image_to_float(read_png(base / rec.image_b));
        out.push_back({encoder.encode(a).global, encoder.encode(b).global});
    }
    return out;
}

}  // namespace sm
