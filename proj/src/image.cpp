#include "stylemill/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include "stylemill/error.hpp"

namespace sm {

namespace {
struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;
}  // namespace

ImageU8 read_png(const std::filesystem::path& path) {
    FilePtr fp(std::fopen(path.string().c_str(), "rb"));
    SM_CHECK(fp != nullptr, "cannot open ", path.string());

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    SM_CHECK(png, "png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        fail("png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail("failed to decode PNG ", path.string());
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);

    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_packing(png);
    const png_byte color = png_get_color_type(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8)
        png_set_expand_gray_1_2_4_to_8(png);
    png_read_update_info(png, info);

    ImageU8 img;
    img.h = png_get_image_height(png, info);
    img.w = png_get_image_width(png, info);
    img.c = png_get_channels(png, info);
    if (img.c != 1 && img.c != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail("unsupported channel count ", img.c, " in ", path.string());
    }
    img.data.resize(static_cast<size_t>(img.numel()));
    std::vector<png_bytep> rows(static_cast<size_t>(img.h));
    for (int64_t y = 0; y < img.h; ++y) rows[static_cast<size_t>(y)] = img.data.data() + y * img.w * img.c;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

void write_png(const std::filesystem::path& path, const ImageU8& img) {
    SM_CHECK(img.c == 1 || img.c == 3, "write_png: channels must be 1 or 3, got ", img.c);
    SM_CHECK(img.h > 0 && img.w > 0, "write_png: empty image");
    SM_CHECK(static_cast<int64_t>(img.data.size()) == img.numel(), "write_png: bad buffer size");
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    FilePtr fp(std::fopen(path.string().c_str(), "wb"));
    SM_CHECK(fp != nullptr, "cannot open ", path.string(), " for writing");

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    SM_CHECK(png, "png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        fail("png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        fail("failed to encode PNG ", path.string());
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.w), static_cast<png_uint_32>(img.h), 8,
                 img.c == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> rows(static_cast<size_t>(img.h));
    for (int64_t y = 0; y < img.h; ++y)
        rows[static_cast<size_t>(y)] = const_cast<png_bytep>(img.data.data() + y * img.w * img.c);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Tensor image_to_float(const ImageU8& img) {
    Tensor t({img.h, img.w, img.c});
    for (int64_t i = 0; i < img.numel(); ++i) t[i] = img.data[static_cast<size_t>(i)] / 255.0;
    return t;
}

ImageU8 float_to_image(const Tensor& t) {
    SM_CHECK(t.ndim() == 3, "float_to_image: expected [H,W,C], got ", shape_str(t.shape()));
    ImageU8 img;
    img.h = t.dim(0);
    img.w = t.dim(1);
    img.c = t.dim(2);
    SM_CHECK(img.c == 1 || img.c == 3, "float_to_image: channels must be 1 or 3");
    img.data.resize(static_cast<size_t>(img.numel()));
    for (int64_t i = 0; i < img.numel(); ++i) {
        const double v = std::clamp(t[i], 0.0, 1.0);
        img.data[static_cast<size_t>(i)] = static_cast<uint8_t>(std::lround(v * 255.0));
    }
    return img;
}

std::vector<std::filesystem::path> list_frames(const std::filesystem::path& dir) {
    SM_CHECK(std::filesystem::is_directory(dir), "not a directory: ", dir.string());
    std::vector<std::filesystem::path> paths;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".png") paths.push_back(e.path());
    std::sort(paths.begin(), paths.end());
    return paths;
}

std::vector<ImageU8> read_frame_dir(const std::filesystem::path& dir) {
    std::vector<ImageU8> frames;
    for (const auto& p : list_frames(dir)) frames.push_back(read_png(p));
    SM_CHECK(!frames.empty(), "no .png frames in ", dir.string());
    return frames;
}

void write_frame_dir(const std::filesystem::path& dir, const std::vector<ImageU8>& frames) {
    SM_CHECK(!frames.empty(), "write_frame_dir: no frames");
    std::filesystem::create_directories(dir);
    char name[32];
    for (size_t i = 0; i < frames.size(); ++i) {
        std::snprintf(name, sizeof(name), "frame_%04zu.png", i);
        write_png(dir / name, frames[i]);
    }
}

Tensor frames_to_video(const std::vector<ImageU8>& frames) {
    SM_CHECK(!frames.empty(), "frames_to_video: no frames");
    const int64_t t = static_cast<int64_t>(frames.size());
    const int64_t h = frames[0].h, w = frames[0].w, c = frames[0].c;
    Tensor video({t, h, w, c});
    for (int64_t f = 0; f < t; ++f) {
        SM_CHECK(frames[static_cast<size_t>(f)].h == h && frames[static_cast<size_t>(f)].w == w &&
                     frames[static_cast<size_t>(f)].c == c,
                 "frames_to_video: frame ", f, " has mismatched dims");
        const Tensor ft = image_to_float(frames[static_cast<size_t>(f)]);
        for (int64_t i = 0; i < ft.numel(); ++i) video[f * h * w * c + i] = ft[i];
    }
    return video;
}

std::vector<ImageU8> video_to_frames(const Tensor& video) {
    SM_CHECK(video.ndim() == 4, "video_to_frames: expected [T,H,W,C]");
    const int64_t t = video.dim(0), h = video.dim(1), w = video.dim(2), c = video.dim(3);
    std::vector<ImageU8> frames;
    frames.reserve(static_cast<size_t>(t));
    const int64_t stride = h * w * c;
    for (int64_t f = 0; f < t; ++f) {
        Tensor ft({h, w, c});
        for (int64_t i = 0; i < stride; ++i) ft[i] = video[f * stride + i];
        frames.push_back(float_to_image(ft));
    }
    return frames;
}

}  // namespace sm
