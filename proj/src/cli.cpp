#include "stylemill/cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "stylemill/error.hpp"
#include "stylemill/hash.hpp"
#include "stylemill/metrics.hpp"
#include "stylemill/pipeline.hpp"

namespace sm::cli {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

struct CommonOpts {
    std::string config_path;
    uint64_t seed = 0;
    std::string out_dir;
};

void add_common(CLI::App* cmd, CommonOpts& o, bool out_required = true) {
    cmd->add_option("--config", o.config_path, "run configuration file (JSON)");
    cmd->add_option("--seed", o.seed, "master seed; all randomness derives from it");
    auto* out = cmd->add_option("--out", o.out_dir, "output directory");
    if (out_required) out->required();
}

RunConfig load_config(const CommonOpts& o) {
    return o.config_path.empty() ? RunConfig::defaults() : RunConfig::from_file(o.config_path);
}

// Every run leaves a reproducibility record: resolved config + hashes of
// all file inputs and outputs.
struct RunRecord {
    json j;

    RunRecord(const std::string& command, const RunConfig& cfg, uint64_t seed) {
        j["command"] = command;
        j["seed"] = seed;
        j["config"] = cfg.to_json();
        j["config_sha256"] = sha256_string(j["config"].dump());
        j["inputs"] = json::object();
        j["outputs"] = json::object();
    }
    void input(const std::string& label, const fs::path& p) {
        j["inputs"][label] = {{"path", p.string()}, {"sha256", sha256_file(p)}};
    }
    void output(const std::string& label, const fs::path& p) {
        j["outputs"][label] = {{"path", p.string()}, {"sha256", sha256_file(p)}};
    }
    void output_dir(const std::string& label, const fs::path& dir) {
        // one digest over the sorted (name, sha256) listing
        std::vector<fs::path> files;
        for (const auto& e : fs::recursive_directory_iterator(dir))
            if (e.is_regular_file()) files.push_back(e.path());
        std::sort(files.begin(), files.end());
        std::string combined;
        for (const auto& f : files)
            combined += f.filename().string() + ":" + sha256_file(f) + "\n";
        j["outputs"][label] = {{"path", dir.string()}, {"sha256", sha256_string(combined)}};
    }
    void write(const fs::path& out_dir) {
        fs::create_directories(out_dir);
        std::ofstream f(out_dir / "run_record.json");
        f << j.dump(2) << "\n";
    }
};

StatImageEncoder encoder_for(const RunConfig& cfg) {
    return StatImageEncoder(cfg.encoder_dim, cfg.encoder_grid, cfg.encoder_grid, cfg.encoder_seed);
}

TextEmbedder text_embedder_for(const RunConfig& cfg) {
    return TextEmbedder(cfg.n_styles, cfg.n_objects, cfg.encoder_dim, cfg.encoder_seed);
}

void check_encoder_identity(uint64_t seed_a, int64_t dim_a, int64_t grid_a, uint64_t seed_b,
                            int64_t dim_b, int64_t grid_b, const std::string& what) {
    SM_CHECK(seed_a == seed_b && dim_a == dim_b && grid_a == grid_b,
             what, ": encoder identity mismatch (seed/dim/grid ", seed_a, "/", dim_a, "/", grid_a,
             " vs ", seed_b, "/", dim_b, "/", grid_b, ")");
}

void log_progress(const std::string& stage) {
    std::cout << "[" << stage << "] training..." << std::endl;
}

ProgressSink stdout_sink(const std::string& stage) {
    return [stage](int64_t step, double loss) {
        std::cout << "[" << stage << "] step " << step << " loss " << loss << std::endl;
    };
}

// ---- subcommand handlers ----

int cmd_gen_pairs(const CommonOpts& o, const std::string& ckpt, const std::string& styles_file,
                  const std::string& objects_file, int64_t n_pairs) {
    const RunConfig cfg = load_config(o);
    StyleModel model = load_model(ckpt);
    validate_arch(load_checkpoint(ckpt).metadata, cfg.model_config());
    const auto styles = load_lines(styles_file);
    const auto objects = load_lines(objects_file);
    SM_CHECK(static_cast<int64_t>(styles.size()) == model.cfg.n_styles,
             "gen-pairs: style list has ", styles.size(), " entries but the model was built for ",
             model.cfg.n_styles);
    SM_CHECK(static_cast<int64_t>(objects.size()) == model.cfg.n_objects,
             "gen-pairs: object list has ", objects.size(), " entries but the model was built for ",
             model.cfg.n_objects);

    const NoiseSchedule sched = cfg.make_schedule();
    DiTDenoiser den(model.dit);
    DatasetConfig dc;
    dc.n_pairs = n_pairs;
    dc.view_kind = ViewKind::Jigsaw;
    dc.jigsaw_rows = cfg.jigsaw_rows;
    dc.jigsaw_cols = cfg.jigsaw_cols;
    dc.jigsaw_rotate = cfg.jigsaw_rotate;
    dc.steps = cfg.dataset_steps;
    dc.workers = static_cast<int>(cfg.gen_workers);
    const fs::path manifest = build_dataset(den, sched, styles, objects, dc, o.seed, o.out_dir);

    RunRecord rec("gen-pairs", cfg, o.seed);
    rec.input("checkpoint", ckpt);
    rec.input("styles", styles_file);
    rec.input("objects", objects_file);
    rec.output("manifest", manifest);
    rec.write(o.out_dir);
    std::cout << "wrote " << n_pairs << " pairs to " << manifest.string() << std::endl;
    return 0;
}

int cmd_train_projector(const CommonOpts& o, const std::string& manifest) {
    const RunConfig cfg = load_config(o);
    const StatImageEncoder enc = encoder_for(cfg);
    const auto pairs = encode_pairs(manifest, enc);

    ProjectorParams init = ProjectorParams::init(cfg.encoder_dim, {cfg.projector_hidden}, cfg.width,
                                                 o.seed, cfg.alpha_margin, cfg.mse_lambda);
    ProjectorTrainConfig tc;
    tc.epochs = static_cast<int>(cfg.projector_epochs);
    tc.batch = static_cast<int>(cfg.projector_batch);
    tc.lr = cfg.projector_lr;
    tc.seed = o.seed;
    log_progress("projector");
    ProjectorTrainResult res = train_projector(pairs, std::move(init), tc);

    ProjectorCheckpoint pc;
    pc.params = std::move(res.params);
    pc.hidden = {cfg.projector_hidden};
    pc.encoder_seed = cfg.encoder_seed;
    pc.encoder_dim = cfg.encoder_dim;
    pc.encoder_grid = cfg.encoder_grid;
    pc.epoch_loss = res.epoch_loss;
    const fs::path out = fs::path(o.out_dir) / "projector.ckpt";
    save_projector(out, pc, o.seed);

    RunRecord rec("train-projector", cfg, o.seed);
    rec.input("manifest", manifest);
    rec.output("checkpoint", out);
    rec.write(o.out_dir);
    std::cout << "projector trained; final epoch loss " << res.epoch_loss.back() << std::endl;
    return 0;
}

int cmd_train_base(const CommonOpts& o) {
    const RunConfig cfg = load_config(o);
    StyleModel model;
    model.cfg = cfg.model_config();
    model.dit = VideoDiT::init(model.cfg, o.seed);
    model.encoder_seed = cfg.encoder_seed;
    model.encoder_dim = cfg.encoder_dim;
    model.encoder_grid = cfg.encoder_grid;

    const ShapeCorpus corpus(cfg.corpus_config());
    const NoiseSchedule sched = cfg.make_schedule();
    const auto losses = run_base_training(model, corpus, sched,
                                          {cfg.base_steps, cfg.base_batch, cfg.base_lr}, cfg.p_drop,
                                          o.seed, stdout_sink("base"));

    const fs::path out = fs::path(o.out_dir) / "base.ckpt";
    save_model(out, model, "base", o.seed);
    RunRecord rec("train-base", cfg, o.seed);
    rec.output("checkpoint", out);
    rec.write(o.out_dir);
    std::cout << "base trained; final loss " << losses.back() << std::endl;
    return 0;
}

int cmd_train_motion(const CommonOpts& o, const std::string& init_ckpt) {
    const RunConfig cfg = load_config(o);
    StyleModel model = load_model(init_ckpt);
    validate_arch(load_checkpoint(init_ckpt).metadata, cfg.model_config());
    if (!model.dit.adapters) model.dit.attach_adapters(o.seed);

    const ShapeCorpus corpus(cfg.corpus_config());
    const NoiseSchedule sched = cfg.make_schedule();
    const auto losses = run_motion_training(model, corpus, sched,
                                            {cfg.motion_steps, cfg.motion_batch, cfg.motion_lr},
                                            cfg.motion_train_alpha, o.seed, stdout_sink("motion"));

    const fs::path out = fs::path(o.out_dir) / "motion.ckpt";
    save_model(out, model, "motion", o.seed);
    RunRecord rec("train-motion", cfg, o.seed);
    rec.input("init", init_ckpt);
    rec.output("checkpoint", out);
    rec.write(o.out_dir);
    std::cout << "motion adapter trained; final loss " << losses.back() << std::endl;
    return 0;
}

int cmd_train_style(const CommonOpts& o, const std::string& init_ckpt,
                    const std::string& projector_ckpt) {
    const RunConfig cfg = load_config(o);
    StyleModel model = load_model(init_ckpt);
    validate_arch(load_checkpoint(init_ckpt).metadata, cfg.model_config());

    ProjectorCheckpoint pc = load_projector(projector_ckpt);
    check_encoder_identity(pc.encoder_seed, pc.encoder_dim, pc.encoder_grid, cfg.encoder_seed,
                           cfg.encoder_dim, cfg.encoder_grid, "train-style");
    SM_CHECK(pc.params.out_dim() == model.cfg.width, "train-style: projector output width ",
             pc.params.out_dim(), " != model width ", model.cfg.width);

    ExtractorParams ex;
    ex.projector = std::move(pc.params);
    ex.agg = TextureAggParams::init(cfg.n_query_tokens, cfg.encoder_dim, model.cfg.width,
                                    static_cast<int>(cfg.agg_heads), o.seed);
    ex.keep_k = cfg.resolved_keep_k();
    model.extractor = std::move(ex);
    model.encoder_seed = cfg.encoder_seed;
    model.encoder_dim = cfg.encoder_dim;
    model.encoder_grid = cfg.encoder_grid;

    const ShapeCorpus corpus(cfg.corpus_config());
    const StatImageEncoder enc = encoder_for(cfg);
    const TextEmbedder text = text_embedder_for(cfg);
    const NoiseSchedule sched = cfg.make_schedule();
    const auto losses =
        run_style_training(model, corpus, enc, text, sched,
                           {cfg.style_steps, cfg.style_batch, cfg.style_lr}, cfg.p_drop, o.seed,
                           stdout_sink("style"));

    const fs::path out = fs::path(o.out_dir) / "style.ckpt";
    save_model(out, model, "style", o.seed);
    RunRecord rec("train-style", cfg, o.seed);
    rec.input("init", init_ckpt);
    rec.input("projector", projector_ckpt);
    rec.output("checkpoint", out);
    rec.write(o.out_dir);
    std::cout << "style stage trained; final loss " << losses.back() << std::endl;
    return 0;
}

int cmd_train_control(const CommonOpts& o, const std::string& init_ckpt) {
    const RunConfig cfg = load_config(o);
    StyleModel model = load_model(init_ckpt);
    validate_arch(load_checkpoint(init_ckpt).metadata, cfg.model_config());
    const ConditionKind kind = parse_condition_kind(cfg.condition);
    if (!model.control) model.control = ControlStack::init(model.cfg, condition_channels(kind), o.seed);

    const ShapeCorpus corpus(cfg.corpus_config());
    const StatImageEncoder enc = encoder_for(cfg);
    const TextEmbedder text = text_embedder_for(cfg);
    const NoiseSchedule sched = cfg.make_schedule();
    const auto losses = run_control_training(
        model, corpus, enc, text, sched, {cfg.control_steps, cfg.control_batch, cfg.control_lr},
        kind, cfg.tile_factor, {cfg.canny_low, cfg.canny_high}, cfg.p_drop, o.seed,
        stdout_sink("control"));

    const fs::path out = fs::path(o.out_dir) / "control.ckpt";
    save_model(out, model, "control", o.seed);
    RunRecord rec("train-control", cfg, o.seed);
    rec.input("init", init_ckpt);
    rec.output("checkpoint", out);
    rec.write(o.out_dir);
    std::cout << "control stage trained; final loss " << losses.back() << std::endl;
    return 0;
}

int cmd_sample(const CommonOpts& o, const std::string& ckpt, const std::string& style_image,
               int64_t style_id, int64_t object_id, int64_t frames_override) {
    const RunConfig cfg = load_config(o);
    StyleModel model = load_model(ckpt);
    validate_arch(load_checkpoint(ckpt).metadata, cfg.model_config());
    const NoiseSchedule sched = cfg.make_schedule();

    SampleRequest req;
    req.frames = frames_override > 0 ? frames_override : cfg.frames;
    req.steps = cfg.sample_steps;
    req.guidance = cfg.guidance();
    req.alpha_motion = model.dit.adapters ? cfg.alpha_motion : 0.0;
    req.seed = o.seed;
    if (style_id >= 0 && object_id >= 0) req.text = TextCond::ids(style_id, object_id);

    Tensor style_tokens;
    if (!style_image.empty()) {
        SM_CHECK(model.extractor.has_value(),
                 "sample: a style image was provided but the checkpoint has no style extractor");
        check_encoder_identity(model.encoder_seed, model.encoder_dim, model.encoder_grid,
                               cfg.encoder_seed, cfg.encoder_dim, cfg.encoder_grid, "sample");
        const StatImageEncoder enc = encoder_for(cfg);
        const TextEmbedder text = text_embedder_for(cfg);
        style_tokens = build_style_tokens(model, enc, text, image_to_float(read_png(style_image)),
                                          req.text);
        req.style_tokens = &style_tokens;
    }

    const Tensor video = sample(model, sched, req);
    const fs::path video_dir = fs::path(o.out_dir) / "video";
    write_frame_dir(video_dir, video_to_frames(video));

    RunRecord rec("sample", cfg, o.seed);
    rec.input("checkpoint", ckpt);
    if (!style_image.empty()) rec.input("style_image", style_image);
    rec.output_dir("video", video_dir);
    rec.write(o.out_dir);
    std::cout << "wrote " << video.dim(0) << " frame(s) to " << video_dir.string() << std::endl;
    return 0;
}

int cmd_transfer(const CommonOpts& o, const std::string& ckpt, const std::string& video_dir,
                 const std::string& style_image, int64_t tile_factor,
                 const std::string& condition) {
    RunConfig cfg = load_config(o);
    if (tile_factor > 0) cfg.tile_factor = tile_factor;
    if (!condition.empty()) cfg.condition = condition;
    cfg.validate();
    StyleModel model = load_model(ckpt);
    validate_arch(load_checkpoint(ckpt).metadata, cfg.model_config());
    SM_CHECK(model.control.has_value(), "transfer: checkpoint has no control stack");
    const NoiseSchedule sched = cfg.make_schedule();

    const Tensor content = frames_to_video(read_frame_dir(video_dir));
    TransferRequest req;
    req.steps = cfg.sample_steps;
    req.condition_kind = parse_condition_kind(cfg.condition);
    req.tile_factor = cfg.tile_factor;
    req.canny = {cfg.canny_low, cfg.canny_high};
    req.guidance = cfg.guidance();
    req.alpha_motion = model.dit.adapters ? cfg.alpha_motion : 0.0;
    req.seed = o.seed;

    Tensor style_tokens;
    SM_CHECK(model.extractor.has_value(), "transfer: checkpoint has no style extractor");
    check_encoder_identity(model.encoder_seed, model.encoder_dim, model.encoder_grid,
                           cfg.encoder_seed, cfg.encoder_dim, cfg.encoder_grid, "transfer");
    const StatImageEncoder enc = encoder_for(cfg);
    const TextEmbedder text = text_embedder_for(cfg);
    style_tokens = build_style_tokens(model, enc, text, image_to_float(read_png(style_image)),
                                      req.text);
    req.style_tokens = &style_tokens;

    const Tensor out_video = style_transfer(model, sched, content, req);
    const fs::path out_dir = fs::path(o.out_dir) / "video";
    write_frame_dir(out_dir, video_to_frames(out_video));

    RunRecord rec("transfer", cfg, o.seed);
    rec.input("checkpoint", ckpt);
    rec.input("style_image", style_image);
    rec.output_dir("video", out_dir);
    rec.write(o.out_dir);
    std::cout << "wrote " << out_video.dim(0) << " frame(s) to " << out_dir.string() << std::endl;
    return 0;
}

int cmd_eval(const CommonOpts& o, const std::string& manifest, const std::string& report_path,
             const std::string& ckpt) {
    const RunConfig cfg = load_config(o);

    EvalReport report;
    std::ifstream in(manifest);
    SM_CHECK(in.good(), "eval: cannot open manifest ", manifest);
    std::vector<json> items;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) items.push_back(json::parse(line));

    if (!items.empty()) {
        SM_CHECK(!ckpt.empty(), "eval: --ckpt with a trained style extractor is required for a "
                                "non-empty manifest");
        StyleModel model = load_model(ckpt);
        SM_CHECK(model.extractor.has_value(), "eval: checkpoint has no style extractor");
        check_encoder_identity(model.encoder_seed, model.encoder_dim, model.encoder_grid,
                               cfg.encoder_seed, cfg.encoder_dim, cfg.encoder_grid, "eval");
        const StatImageEncoder enc = encoder_for(cfg);
        const TextEmbedder text = text_embedder_for(cfg);
        for (const json& item : items) {
            EvalItemReport r;
            r.name = item.at("name").get<std::string>();
            const Tensor video = frames_to_video(read_frame_dir(item.at("video").get<std::string>()));
            const std::vector<Tensor> frames = video_frames(video);
            const Tensor reference =
                image_to_float(read_png(item.at("reference").get<std::string>()));
            r.style_similarity = style_similarity(frames, reference, enc, model.extractor->projector);
            r.text_alignment = text_alignment(frames, item.at("style_id").get<int64_t>(),
                                              item.at("object_id").get<int64_t>(), enc, text);
            r.dynamic_degree = dynamic_degree(video);
            r.motion_smoothness = motion_smoothness(video);
            report.items.push_back(std::move(r));
        }
    }

    fs::path rp(report_path);
    if (rp.has_parent_path()) fs::create_directories(rp.parent_path());
    std::ofstream out(rp);
    SM_CHECK(out.good(), "eval: cannot write report ", report_path);
    out << report.to_json() << "\n";
    std::cout << "evaluated " << report.items.size() << " item(s); report at " << report_path
              << std::endl;
    return 0;
}

}  // namespace

int run(int argc, char** argv) {
    CLI::App app{"desk-scale stylized video diffusion: illusion-pair data, contrastive style "
                 "projection, dual cross-attention injection, motion adapter, gray-tile control"};
    app.require_subcommand(1);

    // gen-pairs
    CommonOpts gp;
    std::string gp_ckpt, gp_styles, gp_objects;
    int64_t gp_n = 0;
    auto* gen = app.add_subcommand("gen-pairs", "generate a style-consistent pair dataset");
    gen->add_option("--n", gp_n, "number of pairs")->required();
    gen->add_option("--styles", gp_styles, "style list file")->required();
    gen->add_option("--objects", gp_objects, "object list file")->required();
    gen->add_option("--ckpt", gp_ckpt, "trained base checkpoint")->required();
    add_common(gen, gp);

    // train-projector
    CommonOpts tp;
    std::string tp_manifest;
    auto* trp = app.add_subcommand("train-projector", "contrastive global-style projector");
    trp->add_option("--manifest", tp_manifest, "pair dataset manifest")->required();
    add_common(trp, tp);

    // train-base
    CommonOpts tb;
    auto* trb = app.add_subcommand("train-base", "train the toy video diffusion backbone");
    add_common(trb, tb);

    // train-motion
    CommonOpts tm;
    std::string tm_init;
    auto* trm = app.add_subcommand("train-motion", "train the motion adapter on still videos");
    trm->add_option("--init", tm_init, "initial checkpoint (base stage)")->required();
    add_common(trm, tm);

    // train-style
    CommonOpts ts;
    std::string ts_init, ts_proj;
    auto* trs = app.add_subcommand("train-style", "train style cross-attention + texture tokens");
    trs->add_option("--init", ts_init, "initial checkpoint (base or motion stage)")->required();
    trs->add_option("--projector", ts_proj, "projector checkpoint")->required();
    add_common(trs, ts);

    // train-control
    CommonOpts tc;
    std::string tc_init;
    auto* trc = app.add_subcommand("train-control", "train the gray-tile control stack");
    trc->add_option("--init", tc_init, "initial checkpoint (style stage)")->required();
    add_common(trc, tc);

    // sample
    CommonOpts sp;
    std::string sp_ckpt, sp_style;
    int64_t sp_style_id = -1, sp_object_id = -1, sp_frames = 0;
    auto* smp = app.add_subcommand("sample", "stylized generation");
    smp->add_option("--ckpt", sp_ckpt, "model checkpoint")->required();
    smp->add_option("--style-image", sp_style, "style reference image (PNG)");
    smp->add_option("--style-id", sp_style_id, "prompt style id");
    smp->add_option("--object-id", sp_object_id, "prompt object id");
    smp->add_option("--frames", sp_frames, "frame count override (1 = image)");
    add_common(smp, sp);

    // transfer
    CommonOpts tf;
    std::string tf_ckpt, tf_video, tf_style, tf_condition;
    int64_t tf_tile = 0;
    auto* trf = app.add_subcommand("transfer", "video style transfer with content control");
    trf->add_option("--ckpt", tf_ckpt, "model checkpoint (control stage)")->required();
    trf->add_option("--video", tf_video, "content video (frame directory)")->required();
    trf->add_option("--style", tf_style, "style reference image (PNG)")->required();
    trf->add_option("--tile-factor", tf_tile, "tile averaging factor");
    trf->add_option("--condition", tf_condition, "condition kind: gray_tile|rgb_tile|canny");
    add_common(trf, tf);

    // eval
    CommonOpts ev;
    std::string ev_manifest, ev_report, ev_ckpt;
    auto* evl = app.add_subcommand("eval", "compute proxy metrics over generated items");
    evl->add_option("--manifest", ev_manifest, "evaluation manifest (JSONL)")->required();
    evl->add_option("--report", ev_report, "output report path (JSON)")->required();
    evl->add_option("--ckpt", ev_ckpt, "style-stage checkpoint (projector source)");
    add_common(evl, ev, /*out_required=*/false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (gen->parsed()) return cmd_gen_pairs(gp, gp_ckpt, gp_styles, gp_objects, gp_n);
        if (trp->parsed()) return cmd_train_projector(tp, tp_manifest);
        if (trb->parsed()) return cmd_train_base(tb);
        if (trm->parsed()) return cmd_train_motion(tm, tm_init);
        if (trs->parsed()) return cmd_train_style(ts, ts_init, ts_proj);
        if (trc->parsed()) return cmd_train_control(tc, tc_init);
        if (smp->parsed()) return cmd_sample(sp, sp_ckpt, sp_style, sp_style_id, sp_object_id, sp_frames);
        if (trf->parsed()) return cmd_transfer(tf, tf_ckpt, tf_video, tf_style, tf_tile, tf_condition);
        if (evl->parsed()) return cmd_eval(ev, ev_manifest, ev_report, ev_ckpt);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 1;
    }
    std::cerr << "error: no subcommand" << std::endl;
    return 1;
}

int run(const std::vector<std::string>& args) {
    std::vector<std::string> full;
    full.push_back("stylemill");
    for (const auto& a : args) full.push_back(a);
    std::vector<char*> argv;
    for (auto& s : full) argv.push_back(s.data());
    return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace sm::cli
