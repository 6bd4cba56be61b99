#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "stylemill/diffusion.hpp"
#include "stylemill/view_transform.hpp"

namespace sm {

// Prompt template "a {style} of {object}" over list entries used verbatim.
struct PromptPair {
    std::string style, object_a, object_b;
    int64_t style_id = 0, object_a_id = 0, object_b_id = 0;

    std::string prompt_a() const { return "a " + style + " of " + object_a; }
    std::string prompt_b() const { return "a " + style + " of " + object_b; }
};

// Uniform style, two distinct objects without replacement.
PromptPair sample_prompt_pair(const std::vector<std::string>& styles,
                              const std::vector<std::string>& objects, Rng& rng);

std::vector<std::string> load_lines(const std::filesystem::path& path);

// Prompt-conditioned epsilon prediction over a single frame. The model
// backbone and the analytic test denoisers both satisfy this.
class EpsDenoiser {
public:
    virtual ~EpsDenoiser() = default;
    virtual Tensor eps(const Tensor& x, int64_t t, const TextCond& cond) const = 0;  // [H,W,3]
    virtual int64_t height() const = 0;
    virtual int64_t width() const = 0;
};

// Wraps the video backbone as a one-frame-at-a-time image denoiser.
class DiTDenoiser : public EpsDenoiser {
public:
    explicit DiTDenoiser(const VideoDiT& m) : m_(&m) {}
    Tensor eps(const Tensor& x, int64_t t, const TextCond& cond) const override;
    int64_t height() const override { return m_->cfg.image_h; }
    int64_t width() const override { return m_->cfg.image_w; }

private:
    const VideoDiT* m_;
};

// Parallel-denoising noise estimate:
// eps = 1/2 [ v1^-1(eps(v1 x, p1)) + v2^-1(eps(v2 x, p2)) ].
Tensor illusion_noise(const Tensor& x_t, int64_t t, const EpsDenoiser& den, const TextCond& p1,
                      const TextCond& p2, const ViewTransform& v1, const ViewTransform& v2);

struct PairImages {
    ImageU8 a, b;  // b = apply(v2, a), bit-exact
};

// Full reverse DDIM loop with illusion noise at every step (v1 = id).
// image_a is the final x0 clipped to [0,1] and quantized; image_b is its
// pixel rearrangement under v2.
PairImages generate_pair(const EpsDenoiser& den, const NoiseSchedule& sched, int64_t steps,
                         const TextCond& prompt_a, const TextCond& prompt_b,
                         const ViewTransform& v2, uint64_t seed);

struct PairRecord {
    int64_t pair_id = 0;
    PromptPair prompts;
    uint64_t seed = 0;
    ViewTransform view;
    std::string image_a, image_b;  // paths relative to the manifest
};

std::string pair_record_to_json(const PairRecord& r);
PairRecord pair_record_from_json(const std::string& line);

void write_manifest(const std::filesystem::path& path, const std::vector<PairRecord>& records);
std::vector<PairRecord> read_manifest(const std::filesystem::path& path);

struct DatasetConfig {
    int64_t n_pairs = 0;
    ViewKind view_kind = ViewKind::Jigsaw;
    int64_t jigsaw_rows = 4, jigsaw_cols = 4;
    bool jigsaw_rotate = false;
    int64_t steps = 20;  // reverse-process steps per pair
    int workers = 1;
};

// Writes images plus a JSONL manifest ordered by pair_id. Per-pair seed =
// mix(master_seed, pair_id), so regeneration is bit-exact; generation is
// parallel across pairs with the writer collecting results in any order.
// Refuses to overwrite an existing manifest or image.
std::filesystem::path build_dataset(const EpsDenoiser& den, const NoiseSchedule& sched,
                                    const std::vector<std::string>& styles,
                                    const std::vector<std::string>& objects,
                                    const DatasetConfig& cfg, uint64_t master_seed,
                                    const std::filesystem::path& out_dir);

}  // namespace sm
