#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "stylemill/tensor.hpp"

namespace sm {

// 8-bit raster image, row-major, channels interleaved. c is 1 or 3.
struct ImageU8 {
    int64_t h = 0, w = 0, c = 0;
    std::vector<uint8_t> data;

    int64_t numel() const { return h * w * c; }
    uint8_t& px(int64_t y, int64_t x, int64_t ch) { return data[static_cast<size_t>((y * w + x) * c + ch)]; }
    uint8_t px(int64_t y, int64_t x, int64_t ch) const { return data[static_cast<size_t>((y * w + x) * c + ch)]; }
    bool operator==(const ImageU8& o) const = default;
};

// Lossless PNG IO. read_png converts palette/gray+alpha/16-bit inputs to
// 8-bit and returns 1 or 3 channels.
ImageU8 read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const ImageU8& img);

// [H,W,C] double in [0,1] <-> 8-bit. Quantization rounds half away from zero.
Tensor image_to_float(const ImageU8& img);
ImageU8 float_to_image(const Tensor& t);

// Videos live on disk as directories of zero-padded numbered frames.
std::vector<std::filesystem::path> list_frames(const std::filesystem::path& dir);
std::vector<ImageU8> read_frame_dir(const std::filesystem::path& dir);
void write_frame_dir(const std::filesystem::path& dir, const std::vector<ImageU8>& frames);

// [T,H,W,C] video tensor <-> per-frame images.
Tensor frames_to_video(const std::vector<ImageU8>& frames);
std::vector<ImageU8> video_to_frames(const Tensor& video);

}  // namespace sm
