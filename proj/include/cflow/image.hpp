#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cflow/error.hpp"

namespace cflow {

// Grayscale-first image container, values in [0,1], row-major with channels
// interleaved per pixel. valid_h/valid_w track the source region after
// padding so downstream code can tell content from fill.
struct ImageTensor {
    int64_t height = 0;
    int64_t width = 0;
    int64_t channels = 1;
    std::vector<float> values;
    int64_t valid_h = 0;
    int64_t valid_w = 0;

    ImageTensor() = default;
    ImageTensor(int64_t h, int64_t w, int64_t c = 1, float fill = 0.0f)
        : height(h), width(w), channels(c),
          values(static_cast<size_t>(h * w * c), fill), valid_h(h), valid_w(w) {
        if (h < 1 || w < 1 || c < 1) throw ShapeError("ImageTensor: extents must be >= 1");
    }

    float& at(int64_t y, int64_t x, int64_t c = 0) {
        return values[static_cast<size_t>((y * width + x) * channels + c)];
    }
    float at(int64_t y, int64_t x, int64_t c = 0) const {
        return values[static_cast<size_t>((y * width + x) * channels + c)];
    }
    int64_t numel() const { return height * width * channels; }
};

// Source placed top-left, fill elsewhere; valid region records the source
// extent.
ImageTensor pad_to_canvas(const ImageTensor& src, int64_t target_h, int64_t target_w, float fill);

// Nearest-neighbor resample; piecewise-constant friendly, no filtering.
ImageTensor resize_nearest(const ImageTensor& src, int64_t target_h, int64_t target_w);

ImageTensor crop(const ImageTensor& src, int64_t y0, int64_t x0, int64_t h, int64_t w);

// 8-bit binary PGM (P5); single channel only.
void write_pgm(const std::string& path, const ImageTensor& img);
ImageTensor read_pgm(const std::string& path);

} // namespace cflow
