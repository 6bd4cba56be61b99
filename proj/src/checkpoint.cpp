#include "stylemill/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "stylemill/error.hpp"

namespace sm {

using json = nlohmann::ordered_json;

namespace {

constexpr char kMagic[4] = {'S', 'M', 'C', 'K'};
constexpr uint32_t kVersion = 1;

void write_u64(std::ostream& out, uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    out.write(reinterpret_cast<const char*>(b), 8);
}

uint64_t read_u64(std::istream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    SM_CHECK(in.good(), "checkpoint: truncated header");
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
    return v;
}

void write_f32_le(std::ostream& out, const Tensor& t) {
    static_assert(sizeof(float) == 4);
    std::vector<unsigned char> buf(static_cast<size_t>(t.numel()) * 4);
    for (int64_t i = 0; i < t.numel(); ++i) {
        const float f = static_cast<float>(t[i]);
        uint32_t u;
        std::memcpy(&u, &f, 4);
        buf[static_cast<size_t>(i) * 4 + 0] = static_cast<unsigned char>(u & 0xFF);
        buf[static_cast<size_t>(i) * 4 + 1] = static_cast<unsigned char>((u >> 8) & 0xFF);
        buf[static_cast<size_t>(i) * 4 + 2] = static_cast<unsigned char>((u >> 16) & 0xFF);
        buf[static_cast<size_t>(i) * 4 + 3] = static_cast<unsigned char>((u >> 24) & 0xFF);
    }
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    SM_CHECK(out.good(), "cannot write checkpoint ", path.string());

    json table = json::array();
    uint64_t offset = 0;
    for (const auto& [name, t] : ckpt.arrays) {
        table.push_back({{"name", name}, {"dtype", "f32"}, {"shape", t.shape()}, {"offset", offset}});
        offset += static_cast<uint64_t>(t.numel()) * 4;
    }

    const std::string meta_s = ckpt.metadata.dump();
    const std::string table_s = table.dump();
    out.write(kMagic, 4);
    uint32_t ver = kVersion;
    unsigned char vb[4] = {static_cast<unsigned char>(ver & 0xFF),
                           static_cast<unsigned char>((ver >> 8) & 0xFF),
                           static_cast<unsigned char>((ver >> 16) & 0xFF),
                           static_cast<unsigned char>((ver >> 24) & 0xFF)};
    out.write(reinterpret_cast<const char*>(vb), 4);
    write_u64(out, meta_s.size());
    out.write(meta_s.data(), static_cast<std::streamsize>(meta_s.size()));
    write_u64(out, table_s.size());
    out.write(table_s.data(), static_cast<std::streamsize>(table_s.size()));
    write_u64(out, offset);
    for (const auto& [name, t] : ckpt.arrays) write_f32_le(out, t);
    SM_CHECK(out.good(), "I/O failure writing checkpoint ", path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    SM_CHECK(in.good(), "cannot open checkpoint ", path.string());

    char magic[4];
    in.read(magic, 4);
    SM_CHECK(in.good() && std::memcmp(magic, kMagic, 4) == 0, "checkpoint: bad magic in ",
             path.string());
    unsigned char vb[4];
    in.read(reinterpret_cast<char*>(vb), 4);
    SM_CHECK(in.good(), "checkpoint: truncated version");
    const uint32_t ver = static_cast<uint32_t>(vb[0]) | (static_cast<uint32_t>(vb[1]) << 8) |
                         (static_cast<uint32_t>(vb[2]) << 16) | (static_cast<uint32_t>(vb[3]) << 24);
    SM_CHECK(ver == kVersion, "checkpoint: format version ", ver, " != supported ", kVersion);

    const uint64_t meta_len = read_u64(in);
    std::string meta_s(meta_len, '\0');
    in.read(meta_s.data(), static_cast<std::streamsize>(meta_len));
    SM_CHECK(in.good(), "checkpoint: truncated metadata");
    const uint64_t table_len = read_u64(in);
    std::string table_s(table_len, '\0');
    in.read(table_s.data(), static_cast<std::streamsize>(table_len));
    SM_CHECK(in.good(), "checkpoint: truncated array table");
    const uint64_t blob_len = read_u64(in);
    std::vector<unsigned char> blob(blob_len);
    in.read(reinterpret_cast<char*>(blob.data()), static_cast<std::streamsize>(blob_len));
    SM_CHECK(in.gcount() == static_cast<std::streamsize>(blob_len), "checkpoint: truncated blob in ",
             path.string());

    Checkpoint ckpt;
    ckpt.metadata = json::parse(meta_s);
    const json table = json::parse(table_s);
    for (const json& e : table) {
        const std::string name = e.at("name").get<std::string>();
        SM_CHECK(e.at("dtype").get<std::string>() == "f32", "checkpoint: unsupported dtype for ",
                 name);
        Shape shape = e.at("shape").get<Shape>();
        const uint64_t offset = e.at("offset").get<uint64_t>();
        const uint64_t count = static_cast<uint64_t>(shape_numel(shape));
        SM_CHECK(offset % 4 == 0 && offset + count * 4 <= blob_len,
                 "checkpoint: corrupt offsets for array '", name, "'");
        Tensor t(shape);
        for (uint64_t i = 0; i < count; ++i) {
            uint32_t u = static_cast<uint32_t>(blob[offset + i * 4]) |
                         (static_cast<uint32_t>(blob[offset + i * 4 + 1]) << 8) |
                         (static_cast<uint32_t>(blob[offset + i * 4 + 2]) << 16) |
                         (static_cast<uint32_t>(blob[offset + i * 4 + 3]) << 24);
            float f;
            std::memcpy(&f, &u, 4);
            t[static_cast<int64_t>(i)] = static_cast<double>(f);
        }
        ckpt.arrays.emplace_back(name, std::move(t));
    }
    return ckpt;
}

// ---- model glue ----

nlohmann::ordered_json arch_metadata(const StyleModel& model) {
    const ModelConfig& c = model.cfg;
    json arch;
    arch["image_h"] = c.image_h;
    arch["image_w"] = c.image_w;
    arch["frames"] = c.frames;
    arch["patch"] = c.patch;
    arch["width"] = c.width;
    arch["blocks"] = c.blocks;
    arch["heads"] = c.heads;
    arch["ffn_mult"] = c.ffn_mult;
    arch["n_styles"] = c.n_styles;
    arch["n_objects"] = c.n_objects;
    arch["lora_rank"] = c.lora_rank;
    arch["has_adapters"] = model.dit.adapters.has_value();
    arch["has_extractor"] = model.extractor.has_value();
    arch["has_control"] = model.control.has_value();
    if (model.extractor) {
        arch["keep_k"] = model.extractor->keep_k;
        arch["n_query"] = model.extractor->agg.n_query();
        arch["agg_heads"] = model.extractor->agg.heads;
        arch["projector_margin"] = model.extractor->projector.margin;
        arch["projector_mse_weight"] = model.extractor->projector.mse_weight;
        json hidden = json::array();
        for (size_t i = 0; i + 1 < model.extractor->projector.mlp.layers.size(); ++i)
            hidden.push_back(model.extractor->projector.mlp.layers[i].w.value.dim(1));
        arch["projector_hidden"] = hidden;
    }
    if (model.control) arch["cond_channels"] = model.control->cond_channels;
    arch["encoder_seed"] = model.encoder_seed;
    arch["encoder_dim"] = model.encoder_dim;
    arch["encoder_grid"] = model.encoder_grid;
    return arch;
}

void validate_arch(const nlohmann::ordered_json& meta, const ModelConfig& expected) {
    const json& arch = meta.at("arch");
    auto check = [&](const char* key, int64_t want) {
        const int64_t got = arch.at(key).get<int64_t>();
        SM_CHECK(got == want, "checkpoint/config mismatch: ", key, " is ", got,
                 " in checkpoint but ", want, " in config");
    };
    check("image_h", expected.image_h);
    check("image_w", expected.image_w);
    check("patch", expected.patch);
    check("width", expected.width);
    check("blocks", expected.blocks);
    check("heads", expected.heads);
    check("ffn_mult", expected.ffn_mult);
    check("n_styles", expected.n_styles);
    check("n_objects", expected.n_objects);
    check("lora_rank", expected.lora_rank);
}

void save_model(const std::filesystem::path& path, StyleModel& model, const std::string& stage,
                uint64_t creation_seed) {
    Checkpoint ckpt;
    ckpt.metadata["format"] = "stylemill-checkpoint";
    ckpt.metadata["stage"] = stage;
    ckpt.metadata["creation_seed"] = creation_seed;
    ckpt.metadata["arch"] = arch_metadata(model);
    for (Param* p : model.all_params()) ckpt.arrays.emplace_back(p->name, p->value);
    save_checkpoint(path, ckpt);
}

StyleModel load_model(const std::filesystem::path& path) {
    const Checkpoint ckpt = load_checkpoint(path);
    const json& arch = ckpt.metadata.at("arch");

    ModelConfig cfg;
    cfg.image_h = arch.at("image_h").get<int64_t>();
    cfg.image_w = arch.at("image_w").get<int64_t>();
    cfg.frames = arch.at("frames").get<int64_t>();
    cfg.patch = arch.at("patch").get<int64_t>();
    cfg.width = arch.at("width").get<int64_t>();
    cfg.blocks = arch.at("blocks").get<int>();
    cfg.heads = arch.at("heads").get<int>();
    cfg.ffn_mult = arch.at("ffn_mult").get<int64_t>();
    cfg.n_styles = arch.at("n_styles").get<int64_t>();
    cfg.n_objects = arch.at("n_objects").get<int64_t>();
    cfg.lora_rank = arch.at("lora_rank").get<int64_t>();

    StyleModel model;
    model.cfg = cfg;
    model.dit = VideoDiT::init(cfg, 0);
    if (arch.at("has_adapters").get<bool>()) model.dit.attach_adapters(0);
    if (arch.at("has_extractor").get<bool>()) {
        ExtractorParams ex;
        std::vector<int64_t> hidden = arch.at("projector_hidden").get<std::vector<int64_t>>();
        ex.projector = ProjectorParams::init(arch.at("encoder_dim").get<int64_t>(), hidden, cfg.width,
                                             0, arch.at("projector_margin").get<double>(),
                                             arch.at("projector_mse_weight").get<double>());
        ex.agg = TextureAggParams::init(arch.at("n_query").get<int64_t>(),
                                        arch.at("encoder_dim").get<int64_t>(), cfg.width,
                                        arch.at("agg_heads").get<int>(), 0);
        ex.keep_k = arch.at("keep_k").get<int64_t>();
        model.extractor = std::move(ex);
    }
    if (arch.at("has_control").get<bool>())
        model.control = ControlStack::init(cfg, arch.at("cond_channels").get<int64_t>(), 0);
    model.encoder_seed = arch.at("encoder_seed").get<uint64_t>();
    model.encoder_dim = arch.at("encoder_dim").get<int64_t>();
    model.encoder_grid = arch.at("encoder_grid").get<int64_t>();

    // Fill every parameter from the table; structure and file must agree
    // exactly.
    std::unordered_map<std::string, const Tensor*> by_name;
    for (const auto& [name, t] : ckpt.arrays) {
        SM_CHECK(by_name.emplace(name, &t).second, "checkpoint: duplicate array '", name, "'");
    }
    ParamRefs refs = model.all_params();
    SM_CHECK(refs.size() == ckpt.arrays.size(), "checkpoint: array count ", ckpt.arrays.size(),
             " does not match model parameter count ", refs.size());
    for (Param* p : refs) {
        auto it = by_name.find(p->name);
        SM_CHECK(it != by_name.end(), "checkpoint: missing array '", p->name, "'");
        SM_CHECK(it->second->shape() == p->value.shape(), "checkpoint: shape mismatch for '",
                 p->name, "': ", shape_str(it->second->shape()), " vs ",
                 shape_str(p->value.shape()));
        p->value = *it->second;
    }
    return model;
}

std::string model_stage(const std::filesystem::path& path) {
    return load_checkpoint(path).metadata.at("stage").get<std::string>();
}

void save_projector(const std::filesystem::path& path, const ProjectorCheckpoint& pc,
                    uint64_t creation_seed) {
    Checkpoint ckpt;
    ckpt.metadata["format"] = "stylemill-checkpoint";
    ckpt.metadata["stage"] = "projector";
    ckpt.metadata["creation_seed"] = creation_seed;
    json arch;
    arch["projector_hidden"] = pc.hidden;
    arch["in_dim"] = pc.params.in_dim();
    arch["out_dim"] = pc.params.out_dim();
    arch["projector_margin"] = pc.params.margin;
    arch["projector_mse_weight"] = pc.params.mse_weight;
    arch["encoder_seed"] = pc.encoder_seed;
    arch["encoder_dim"] = pc.encoder_dim;
    arch["encoder_grid"] = pc.encoder_grid;
    ckpt.metadata["arch"] = arch;
    ckpt.metadata["epoch_loss"] = pc.epoch_loss;
    ProjectorParams& mut = const_cast<ProjectorParams&>(pc.params);
    ParamRefs refs;
    mut.collect(refs);
    for (Param* p : refs) ckpt.arrays.emplace_back(p->name, p->value);
    save_checkpoint(path, ckpt);
}

ProjectorCheckpoint load_projector(const std::filesystem::path& path) {
    const Checkpoint ckpt = load_checkpoint(path);
    SM_CHECK(ckpt.metadata.at("stage").get<std::string>() == "projector",
             "not a projector checkpoint: ", path.string());
    const json& arch = ckpt.metadata.at("arch");
    ProjectorCheckpoint pc;
    pc.hidden = arch.at("projector_hidden").get<std::vector<int64_t>>();
    pc.encoder_seed = arch.at("encoder_seed").get<uint64_t>();
    pc.encoder_dim = arch.at("encoder_dim").get<int64_t>();
    pc.encoder_grid = arch.at("encoder_grid").get<int64_t>();
    if (ckpt.metadata.contains("epoch_loss"))
        pc.epoch_loss = ckpt.metadata.at("epoch_loss").get<std::vector<double>>();
    pc.params = ProjectorParams::init(arch.at("in_dim").get<int64_t>(), pc.hidden,
                                      arch.at("out_dim").get<int64_t>(), 0,
                                      arch.at("projector_margin").get<double>(),
                                      arch.at("projector_mse_weight").get<double>());
    ParamRefs refs;
    pc.params.collect(refs);
    SM_CHECK(refs.size() == ckpt.arrays.size(), "projector checkpoint: array count mismatch");
    std::unordered_map<std::string, const Tensor*> by_name;
    for (const auto& [name, t] : ckpt.arrays) by_name.emplace(name, &t);
    for (Param* p : refs) {
        auto it = by_name.find(p->name);
        SM_CHECK(it != by_name.end(), "projector checkpoint: missing array '", p->name, "'");
        SM_CHECK(it->second->shape() == p->value.shape(), "projector checkpoint: shape mismatch for '",
                 p->name, "'");
        p->value = *it->second;
    }
    return pc;
}

}  // namespace sm
