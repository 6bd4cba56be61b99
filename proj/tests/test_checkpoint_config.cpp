#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "stylemill/checkpoint.hpp"
#include "stylemill/config.hpp"
#include "stylemill/rng.hpp"

using namespace sm;
namespace fs = std::filesystem;

namespace {
fs::path temp_file(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("stylemill_ckpt_" + name);
    fs::remove(p);
    return p;
}

ModelConfig mini_config() {
    ModelConfig c;
    c.image_h = 8;
    c.image_w = 8;
    c.frames = 2;
    c.patch = 4;
    c.width = 16;
    c.blocks = 2;
    c.heads = 2;
    c.ffn_mult = 2;
    c.n_styles = 3;
    c.n_objects = 3;
    c.lora_rank = 2;
    return c;
}

// float32-representable values, so the f32 container round-trips bitwise
Tensor f32_random(Shape shape, uint64_t seed) {
    Rng rng(seed);
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i)
        t[i] = static_cast<double>(static_cast<float>(rng.normal()));
    return t;
}
}  // namespace

TEST_CASE("checkpoint round trip is bitwise on arrays and metadata") {
    Checkpoint ckpt;
    ckpt.metadata["stage"] = "test";
    ckpt.metadata["note"] = 42;
    ckpt.arrays.emplace_back("a", f32_random({3, 4}, 1));
    ckpt.arrays.emplace_back("b", f32_random({7}, 2));
    ckpt.arrays.emplace_back("c", f32_random({2, 2, 2}, 3));

    const fs::path p = temp_file("roundtrip.ckpt");
    save_checkpoint(p, ckpt);
    const Checkpoint back = load_checkpoint(p);
    CHECK(back.metadata == ckpt.metadata);
    REQUIRE(back.arrays.size() == 3);
    for (size_t i = 0; i < 3; ++i) {
        CHECK(back.arrays[i].first == ckpt.arrays[i].first);
        CHECK(max_abs_diff(back.arrays[i].second, ckpt.arrays[i].second) == 0.0);
    }

    // save-load-save produces identical bytes
    const fs::path p2 = temp_file("roundtrip2.ckpt");
    save_checkpoint(p2, back);
    std::ifstream f1(p, std::ios::binary), f2(p2, std::ios::binary);
    const std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    const std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(s1 == s2);
    fs::remove(p);
    fs::remove(p2);
}

TEST_CASE("truncated blob fails to load") {
    Checkpoint ckpt;
    ckpt.metadata["stage"] = "test";
    ckpt.arrays.emplace_back("a", f32_random({64}, 4));
    const fs::path p = temp_file("trunc.ckpt");
    save_checkpoint(p, ckpt);

    // chop off the tail
    const auto size = fs::file_size(p);
    fs::resize_file(p, size - 16);
    CHECK_THROWS(load_checkpoint(p));
    fs::remove(p);
}

TEST_CASE("bad magic and version are rejected") {
    const fs::path p = temp_file("magic.ckpt");
    std::ofstream(p, std::ios::binary) << "NOPEnope";
    CHECK_THROWS(load_checkpoint(p));
    fs::remove(p);
}

TEST_CASE("model save/load round-trips parameters and structure") {
    StyleModel m;
    m.cfg = mini_config();
    m.dit = VideoDiT::init(m.cfg, 5);
    m.dit.attach_adapters(6);
    ExtractorParams ex;
    ex.projector = ProjectorParams::init(8, {8}, 16, 7);
    ex.agg = TextureAggParams::init(2, 8, 16, 2, 8);
    ex.keep_k = 2;
    m.extractor = std::move(ex);
    m.control = ControlStack::init(m.cfg, 1, 9);
    m.encoder_seed = 77;
    m.encoder_dim = 8;
    m.encoder_grid = 4;

    const fs::path p = temp_file("model.ckpt");
    save_model(p, m, "control", 123);
    CHECK(model_stage(p) == "control");

    StyleModel back = load_model(p);
    CHECK(back.cfg.width == 16);
    CHECK(back.dit.adapters.has_value());
    CHECK(back.extractor.has_value());
    CHECK(back.control.has_value());
    CHECK(back.encoder_seed == 77);

    // float32 container: parameters agree at f32 precision
    ParamRefs a = m.all_params(), b = back.all_params();
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i]->name == b[i]->name);
        for (int64_t j = 0; j < a[i]->value.numel(); ++j)
            CHECK(static_cast<float>(a[i]->value[j]) == static_cast<float>(b[i]->value[j]));
    }
    fs::remove(p);
}

TEST_CASE("architecture mismatch is a hard error naming both values") {
    StyleModel m;
    m.cfg = mini_config();
    m.dit = VideoDiT::init(m.cfg, 10);
    const fs::path p = temp_file("arch.ckpt");
    save_model(p, m, "base", 1);

    ModelConfig other = mini_config();
    other.width = 32;
    const Checkpoint ckpt = load_checkpoint(p);
    try {
        validate_arch(ckpt.metadata, other);
        FAIL("expected mismatch error");
    } catch (const std::exception& e) {
        const std::string msg = e.what();
        CHECK(msg.find("width") != std::string::npos);
        CHECK(msg.find("16") != std::string::npos);
        CHECK(msg.find("32") != std::string::npos);
    }
    fs::remove(p);
}

TEST_CASE("projector checkpoint round trip") {
    ProjectorCheckpoint pc;
    pc.params = ProjectorParams::init(8, {12}, 16, 11, 0.7, 0.5);
    Rng rng(12);
    for (auto& l : pc.params.mlp.layers) l.w.value = f32_random(l.w.value.shape(), rng.next_u64());
    pc.hidden = {12};
    pc.encoder_seed = 3;
    pc.encoder_dim = 8;
    pc.encoder_grid = 4;
    pc.epoch_loss = {1.0, 0.5};

    const fs::path p = temp_file("proj.ckpt");
    save_projector(p, pc, 99);
    const ProjectorCheckpoint back = load_projector(p);
    CHECK(back.params.margin == 0.7);
    CHECK(back.params.mse_weight == 0.5);
    CHECK(back.encoder_seed == 3);
    CHECK(back.epoch_loss == pc.epoch_loss);
    for (size_t i = 0; i < pc.params.mlp.layers.size(); ++i)
        CHECK(max_abs_diff(back.params.mlp.layers[i].w.value, pc.params.mlp.layers[i].w.value) == 0.0);
    fs::remove(p);
}

TEST_CASE("config: defaults carry the published constants") {
    const RunConfig cfg = RunConfig::defaults();
    CHECK(cfg.cfg_text == 12.5);
    CHECK(cfg.cfg_style == 6.0);
    CHECK(cfg.alpha_motion == -0.3);
    CHECK(cfg.projector_epochs == 100);
    CHECK(cfg.projector_batch == 8);
    CHECK(cfg.projector_lr == 1e-4);
    CHECK(cfg.p_drop == 0.1);
    CHECK(cfg.motion_train_alpha == 1.0);
    // desk-scale keep ratio: P=16 -> k=1
    CHECK(cfg.resolved_keep_k() == 1);
}

TEST_CASE("config: unknown keys and bad values are rejected") {
    nlohmann::ordered_json j;
    j["width"] = 32;
    j["heads"] = 4;
    const RunConfig cfg = RunConfig::from_json(j);
    CHECK(cfg.width == 32);

    j["widht"] = 32;  // typo
    CHECK_THROWS(RunConfig::from_json(j));

    nlohmann::ordered_json bad;
    bad["width"] = "not a number";
    CHECK_THROWS(RunConfig::from_json(bad));

    nlohmann::ordered_json invalid;
    invalid["patch"] = 5;  // does not divide 32
    CHECK_THROWS(RunConfig::from_json(invalid));
}

TEST_CASE("config round trip covers every key") {
    const RunConfig cfg = RunConfig::defaults();
    const auto j = cfg.to_json();
    CHECK(j.size() >= 50);
    const RunConfig back = RunConfig::from_json(j);
    CHECK(back.to_json() == j);
}
