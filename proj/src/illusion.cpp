#include "stylemill/illusion.hpp"

#include <json.hpp>

#include <atomic>
#include <fstream>
#include <thread>

#include "stylemill/error.hpp"

namespace sm {

using json = nlohmann::ordered_json;

PromptPair sample_prompt_pair(const std::vector<std::string>& styles,
                              const std::vector<std::string>& objects, Rng& rng) {
    SM_CHECK(!styles.empty(), "sample_prompt_pair: empty style list");
    SM_CHECK(objects.size() >= 2, "sample_prompt_pair: need at least 2 objects, got ",
             objects.size());
    PromptPair p;
    p.style_id = static_cast<int64_t>(rng.uniform_int(styles.size()));
    p.style = styles[static_cast<size_t>(p.style_id)];
    p.object_a_id = static_cast<int64_t>(rng.uniform_int(objects.size()));
    int64_t b = static_cast<int64_t>(rng.uniform_int(objects.size() - 1));
    if (b >= p.object_a_id) ++b;
    p.object_b_id = b;
    p.object_a = objects[static_cast<size_t>(p.object_a_id)];
    p.object_b = objects[static_cast<size_t>(p.object_b_id)];
    return p;
}

std::vector<std::string> load_lines(const std::filesystem::path& path) {
    std::ifstream in(path);
    SM_CHECK(in.good(), "cannot open ", path.string());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
        if (!line.empty()) lines.push_back(line);
    }
    return lines;
}

Tensor DiTDenoiser::eps(const Tensor& x, int64_t t, const TextCond& cond) const {
    SM_CHECK(x.ndim() == 3 && x.dim(2) == 3, "DiTDenoiser: expected [H,W,3]");
    DenoiseArgs args;
    args.t = t;
    args.text = cond;
    const Tensor out = denoiser_forward(*m_, x.reshaped({1, x.dim(0), x.dim(1), 3}), args);
    return out.reshaped({x.dim(0), x.dim(1), 3});
}

Tensor illusion_noise(const Tensor& x_t, int64_t t, const EpsDenoiser& den, const TextCond& p1,
                      const TextCond& p2, const ViewTransform& v1, const ViewTransform& v2) {
    SM_CHECK(x_t.ndim() == 3, "illusion_noise: expected [H,W,C]");
    const Tensor e1 = den.eps(apply(v1, x_t), t, p1);
    const Tensor e2 = den.eps(apply(v2, x_t), t, p2);
    SM_CHECK(e1.same_shape(x_t), "illusion_noise: denoiser output shape ", shape_str(e1.shape()),
             " != input ", shape_str(x_t.shape()));
    SM_CHECK(e2.same_shape(x_t), "illusion_noise: denoiser output shape mismatch (branch 2)");
    const Tensor r1 = apply(invert(v1), e1);
    const Tensor r2 = apply(invert(v2), e2);
    Tensor out(x_t.shape());
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = 0.5 * (r1[i] + r2[i]);
    return out;
}

PairImages generate_pair(const EpsDenoiser& den, const NoiseSchedule& sched, int64_t steps,
                         const TextCond& prompt_a, const TextCond& prompt_b,
                         const ViewTransform& v2, uint64_t seed) {
    const int64_t h = den.height(), w = den.width();
    SM_CHECK(v2.height == h && v2.width == w, "generate_pair: view dims ", v2.height, "x", v2.width,
             " do not match denoiser ", h, "x", w);
    const ViewTransform v1 = make_view(ViewKind::Identity, h, w);

    Rng rng(mix_seed(seed, 0x11105));
    Tensor x = randn({h, w, 3}, rng);

    const std::vector<int64_t> ts = ddim_timesteps(sched.steps(), steps);
    for (size_t i = 0; i < ts.size(); ++i) {
        const int64_t t = ts[i];
        const Tensor eps = illusion_noise(x, t, den, prompt_a, prompt_b, v1, v2);
        SM_CHECK(eps.all_finite(), "generate_pair: non-finite noise estimate at t=", t);
        const double ab_prev = i + 1 < ts.size() ? sched.ab(ts[i + 1]) : 1.0;
        x = ddim_step(x, eps, sched.ab(t), ab_prev);
        SM_CHECK(x.all_finite(), "generate_pair: non-finite sample state at t=", t);
    }
    for (int64_t i = 0; i < x.numel(); ++i) x[i] = std::clamp(x[i], 0.0, 1.0);

    PairImages out;
    out.a = float_to_image(x);
    out.b = apply(v2, out.a);
    return out;
}

std::string pair_record_to_json(const PairRecord& r) {
    json j;
    j["pair_id"] = r.pair_id;
    j["style"] = r.prompts.style;
    j["object_a"] = r.prompts.object_a;
    j["object_b"] = r.prompts.object_b;
    j["prompt_a"] = r.prompts.prompt_a();
    j["prompt_b"] = r.prompts.prompt_b();
    j["style_id"] = r.prompts.style_id;
    j["object_a_id"] = r.prompts.object_a_id;
    j["object_b_id"] = r.prompts.object_b_id;
    j["seed"] = r.seed;
    j["view"] = {{"kind", view_kind_name(r.view.kind)},
                 {"height", r.view.height},
                 {"width", r.view.width},
                 {"piece_grid", {r.view.piece_rows, r.view.piece_cols}},
                 {"seed", r.view.seed},
                 {"rotate_pieces", r.view.rotate_pieces}};
    j["image_a"] = r.image_a;
    j["image_b"] = r.image_b;
    return j.dump();
}

PairRecord pair_record_from_json(const std::string& line) {
    const json j = json::parse(line);
    PairRecord r;
    r.pair_id = j.at("pair_id").get<int64_t>();
    r.prompts.style = j.at("style").get<std::string>();
    r.prompts.object_a = j.at("object_a").get<std::string>();
    r.prompts.object_b = j.at("object_b").get<std::string>();
    r.prompts.style_id = j.at("style_id").get<int64_t>();
    r.prompts.object_a_id = j.at("object_a_id").get<int64_t>();
    r.prompts.object_b_id = j.at("object_b_id").get<int64_t>();
    r.seed = j.at("seed").get<uint64_t>();
    const json& v = j.at("view");
    r.view = make_view(parse_view_kind(v.at("kind").get<std::string>()),
                       v.at("height").get<int64_t>(), v.at("width").get<int64_t>(),
                       v.at("piece_grid")[0].get<int64_t>(), v.at("piece_grid")[1].get<int64_t>(),
                       v.at("seed").get<uint64_t>(), v.at("rotate_pieces").get<bool>());
    r.image_a = j.at("image_a").get<std::string>();
    r.image_b = j.at("image_b").get<std::string>();
    return r;
}

void write_manifest(const std::filesystem::path& path, const std::vector<PairRecord>& records) {
    std::ofstream out(path, std::ios::binary);
    SM_CHECK(out.good(), "cannot write manifest ", path.string());
    for (const PairRecord& r : records) out << pair_record_to_json(r) << "\n";
    SM_CHECK(out.good(), "I/O failure writing ", path.string());
}

std::vector<PairRecord> read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    SM_CHECK(in.good(), "cannot open manifest ", path.string());
    std::vector<PairRecord> records;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) records.push_back(pair_record_from_json(line));
    return records;
}

std::filesystem::path build_dataset(const EpsDenoiser& den, const NoiseSchedule& sched,
                                    const std::vector<std::string>& styles,
                                    const std::vector<std::string>& objects,
                                    const DatasetConfig& cfg, uint64_t master_seed,
                                    const std::filesystem::path& out_dir) {
    SM_CHECK(cfg.n_pairs >= 0, "build_dataset: negative pair count");
    std::filesystem::create_directories(out_dir / "images");
    const std::filesystem::path manifest_path = out_dir / "manifest.jsonl";
    SM_CHECK(!std::filesystem::exists(manifest_path), "build_dataset: manifest already exists at ",
             manifest_path.string());

    std::vector<PairRecord> records(static_cast<size_t>(cfg.n_pairs));

    auto run_pair = [&](int64_t pair_id) {
        const uint64_t pair_seed = mix_seed(master_seed, static_cast<uint64_t>(pair_id));
        Rng rng(pair_seed);
        PairRecord rec;
        rec.pair_id = pair_id;
        rec.prompts = sample_prompt_pair(styles, objects, rng);
        rec.seed = pair_seed;
        rec.view = make_view(cfg.view_kind, den.height(), den.width(), cfg.jigsaw_rows,
                             cfg.jigsaw_cols, rng.next_u64(), cfg.jigsaw_rotate);

        char name[64];
        std::snprintf(name, sizeof(name), "images/pair_%06lld_a.png",
                      static_cast<long long>(pair_id));
        rec.image_a = name;
        std::snprintf(name, sizeof(name), "images/pair_%06lld_b.png",
                      static_cast<long long>(pair_id));
        rec.image_b = name;
        for (const std::string* p : {&rec.image_a, &rec.image_b})
            SM_CHECK(!std::filesystem::exists(out_dir / *p), "build_dataset: output exists: ",
                     (out_dir / *p).string());

        const PairImages imgs =
            generate_pair(den, sched, cfg.steps, TextCond::ids(rec.prompts.style_id, rec.prompts.object_a_id),
                          TextCond::ids(rec.prompts.style_id, rec.prompts.object_b_id), rec.view,
                          pair_seed);
        write_png(out_dir / rec.image_a, imgs.a);
        write_png(out_dir / rec.image_b, imgs.b);
        records[static_cast<size_t>(pair_id)] = std::move(rec);
    };

    const int workers = std::max(1, cfg.workers);
    if (workers == 1 || cfg.n_pairs <= 1) {
        for (int64_t i = 0; i < cfg.n_pairs; ++i) run_pair(i);
    } else {
        // Independent derived seeds make pair order irrelevant; records
        // land in their pair_id slot regardless of completion order.
        std::atomic<int64_t> next{0};
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(static_cast<size_t>(workers));
        for (int wi = 0; wi < workers; ++wi)
            pool.emplace_back([&, wi] {
                try {
                    for (int64_t i = next.fetch_add(1); i < cfg.n_pairs; i = next.fetch_add(1))
                        run_pair(i);
                } catch (...) {
                    errors[static_cast<size_t>(wi)] = std::current_exception();
                }
            });
        for (auto& th : pool) th.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    }

    write_manifest(manifest_path, records);
    return manifest_path;
}

}  // namespace sm
