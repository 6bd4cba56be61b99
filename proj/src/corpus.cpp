#include "stylemill/corpus.hpp"

#include <cmath>

#include "stylemill/error.hpp"
#include "stylemill/rng.hpp"

namespace sm {

namespace {

struct Rgb {
    double r, g, b;
};

Rgb hsv_to_rgb(double h, double s, double v) {
    h = h - std::floor(h);
    const double i = std::floor(h * 6.0);
    const double f = h * 6.0 - i;
    const double p = v * (1.0 - s);
    const double q = v * (1.0 - f * s);
    const double t = v * (1.0 - (1.0 - f) * s);
    switch (static_cast<int>(i) % 6) {
        case 0: return {v, t, p};
        case 1: return {q, v, p};
        case 2: return {p, v, t};
        case 3: return {p, q, v};
        case 4: return {t, p, v};
        default: return {v, p, q};
    }
}

enum class Pattern { Flat, HStripe, VStripe, Checker, Diag, Dots, Gradient };

struct StyleFamily {
    Rgb bg0, bg1;    // background palette
    Rgb fg0, fg1;    // shape palette
    Pattern bg_pat, fg_pat;
    int64_t scale;
    double grain;    // static per-pixel noise amplitude
    uint64_t grain_seed;
};

StyleFamily make_family(uint64_t corpus_seed, int64_t style_id) {
    Rng rng(mix_seed(corpus_seed, static_cast<uint64_t>(style_id)));
    StyleFamily f;
    // Golden-ratio hue walk keeps families well separated in color space.
    const double hue = std::fmod(0.61803398875 * static_cast<double>(style_id) + rng.uniform() * 0.05, 1.0);
    const double sat = 0.55 + 0.4 * rng.uniform();
    const double val = 0.5 + 0.45 * rng.uniform();
    f.bg0 = hsv_to_rgb(hue, sat, val);
    f.bg1 = hsv_to_rgb(hue + 0.07 + 0.08 * rng.uniform(), sat * 0.8, std::min(1.0, val * 1.15));
    const double fg_hue = hue + 0.35 + 0.3 * rng.uniform();
    f.fg0 = hsv_to_rgb(fg_hue, 0.5 + 0.45 * rng.uniform(), 0.45 + 0.5 * rng.uniform());
    f.fg1 = hsv_to_rgb(fg_hue + 0.1, 0.4 + 0.4 * rng.uniform(), 0.4 + 0.5 * rng.uniform());
    f.bg_pat = static_cast<Pattern>(rng.uniform_int(7));
    f.fg_pat = static_cast<Pattern>(rng.uniform_int(7));
    f.scale = 2 + static_cast<int64_t>(rng.uniform_int(3));
    f.grain = 0.02 + 0.06 * rng.uniform();
    f.grain_seed = rng.next_u64();
    return f;
}

double pattern_mix(Pattern p, int64_t y, int64_t x, int64_t scale, int64_t w) {
    switch (p) {
        case Pattern::Flat: return 0.0;
        case Pattern::HStripe: return static_cast<double>((y / scale) % 2);
        case Pattern::VStripe: return static_cast<double>((x / scale) % 2);
        case Pattern::Checker: return static_cast<double>(((y / scale) + (x / scale)) % 2);
        case Pattern::Diag: return static_cast<double>(((x + y) / scale) % 2);
        case Pattern::Dots: return (y % (2 * scale) < scale && x % (2 * scale) < scale) ? 1.0 : 0.0;
        case Pattern::Gradient: return w > 1 ? static_cast<double>(x) / static_cast<double>(w - 1) : 0.0;
    }
    return 0.0;
}

double grain_noise(uint64_t seed, int64_t y, int64_t x) {
    uint64_t s = seed ^ (static_cast<uint64_t>(y) * 0x9E3779B97F4A7C15ull + static_cast<uint64_t>(x) + 1);
    return static_cast<double>(splitmix64(s) >> 11) * 0x1.0p-53 * 2.0 - 1.0;
}

// Shape membership test for the pixel center, in shape-local coordinates
// scaled to [-1, 1].
bool inside_shape(int64_t kind, double u, double v) {
    const double au = std::fabs(u), av = std::fabs(v);
    switch (kind % 8) {
        case 0: return u * u + v * v <= 1.0;                       // circle
        case 1: return au <= 0.85 && av <= 0.85;                   // square
        case 2: return au + av <= 1.1;                             // diamond
        case 3: return v >= -0.85 && av <= 1.0 && au <= (1.0 - (v + 0.85) / 1.85);  // triangle
        case 4: {                                                  // ring
            const double r2 = u * u + v * v;
            return r2 <= 1.0 && r2 >= 0.35;
        }
        case 5: return au <= 0.3 || av <= 0.3;                     // cross (clipped by bbox)
        case 6: return av <= 0.35;                                 // horizontal bar
        default: return au <= 0.35;                                // vertical bar
    }
}

}  // namespace

ShapeCorpus::ShapeCorpus(CorpusConfig cfg) : cfg_(cfg) {
    SM_CHECK(cfg_.height >= 4 && cfg_.width >= 4, "corpus: image too small");
    SM_CHECK(cfg_.frames >= 1, "corpus: frames must be >= 1");
    SM_CHECK(cfg_.n_styles >= 1 && cfg_.n_objects >= 1, "corpus: empty id space");
}

Tensor ShapeCorpus::render_video(int64_t style_id, int64_t object_id, uint64_t sample_seed) const {
    SM_CHECK(style_id >= 0 && style_id < cfg_.n_styles, "corpus: style id ", style_id, " out of range");
    SM_CHECK(object_id >= 0 && object_id < cfg_.n_objects, "corpus: object id ", object_id, " out of range");
    const int64_t h = cfg_.height, w = cfg_.width, t = cfg_.frames;
    const StyleFamily fam = make_family(cfg_.seed, style_id);

    Rng rng(mix_seed(mix_seed(sample_seed, static_cast<uint64_t>(style_id)),
                     static_cast<uint64_t>(object_id)));
    const double radius = (0.28 + 0.12 * rng.uniform()) * static_cast<double>(std::min(h, w)) * 0.5;
    double cy = rng.uniform() * static_cast<double>(h);
    double cx = rng.uniform() * static_cast<double>(w);
    const double speed = cfg_.min_speed + (cfg_.max_speed - cfg_.min_speed) * rng.uniform();
    const double dir = rng.uniform() * 2.0 * 3.14159265358979323846;
    const double vy = speed * std::sin(dir), vx = speed * std::cos(dir);

    Tensor video({t, h, w, 3});
    for (int64_t f = 0; f < t; ++f) {
        const double oy = std::fmod(cy + vy * static_cast<double>(f), static_cast<double>(h));
        const double ox = std::fmod(cx + vx * static_cast<double>(f), static_cast<double>(w));
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x) {
                // toroidal distance to the shape center
                double dy = static_cast<double>(y) - oy;
                double dx = static_cast<double>(x) - ox;
                dy -= std::round(dy / static_cast<double>(h)) * static_cast<double>(h);
                dx -= std::round(dx / static_cast<double>(w)) * static_cast<double>(w);

                const bool fg = inside_shape(object_id, dx / radius, dy / radius);
                const StyleFamily& sf = fam;
                const double mix = pattern_mix(fg ? sf.fg_pat : sf.bg_pat, y, x, sf.scale, w);
                const Rgb& c0 = fg ? sf.fg0 : sf.bg0;
                const Rgb& c1 = fg ? sf.fg1 : sf.bg1;
                const double n = sf.grain * grain_noise(sf.grain_seed, y, x);
                double* px = video.data() + ((f * h + y) * w + x) * 3;
                px[0] = std::clamp(c0.r + (c1.r - c0.r) * mix + n, 0.0, 1.0);
                px[1] = std::clamp(c0.g + (c1.g - c0.g) * mix + n, 0.0, 1.0);
                px[2] = std::clamp(c0.b + (c1.b - c0.b) * mix + n, 0.0, 1.0);
            }
    }
    return video;
}

Tensor ShapeCorpus::render_image(int64_t style_id, int64_t object_id, uint64_t sample_seed) const {
    const Tensor video = render_video(style_id, object_id, sample_seed);
    const int64_t n = cfg_.height * cfg_.width * 3;
    Tensor img({cfg_.height, cfg_.width, 3});
    for (int64_t i = 0; i < n; ++i) img[i] = video[i];
    return img;
}

Tensor ShapeCorpus::render_still_video(int64_t style_id, int64_t object_id, uint64_t sample_seed) const {
    const Tensor img = render_image(style_id, object_id, sample_seed);
    const int64_t n = img.numel();
    Tensor video({cfg_.frames, cfg_.height, cfg_.width, 3});
    for (int64_t f = 0; f < cfg_.frames; ++f)
        for (int64_t i = 0; i < n; ++i) video[f * n + i] = img[i];
    return video;
}

}  // namespace sm
