#include "cflow/image.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "cflow/serialize.hpp"

namespace cflow {

ImageTensor pad_to_canvas(const ImageTensor& src, int64_t target_h, int64_t target_w, float fill) {
    if (target_h < src.height || target_w < src.width)
        throw ShapeError("pad_to_canvas: target smaller than source");
    ImageTensor out(target_h, target_w, src.channels, fill);
    for (int64_t y = 0; y < src.height; ++y)
        for (int64_t x = 0; x < src.width; ++x)
            for (int64_t c = 0; c < src.channels; ++c) out.at(y, x, c) = src.at(y, x, c);
    out.valid_h = src.height;
    out.valid_w = src.width;
    return out;
}

ImageTensor resize_nearest(const ImageTensor& src, int64_t target_h, int64_t target_w) {
    if (target_h < 1 || target_w < 1) throw ShapeError("resize_nearest: target extents must be >= 1");
    ImageTensor out(target_h, target_w, src.channels);
    for (int64_t y = 0; y < target_h; ++y) {
        // pixel-center sampling: source index floor((y + 0.5) * sh / th)
        int64_t sy = (2 * y + 1) * src.height / (2 * target_h);
        if (sy >= src.height) sy = src.height - 1;
        for (int64_t x = 0; x < target_w; ++x) {
            int64_t sx = (2 * x + 1) * src.width / (2 * target_w);
            if (sx >= src.width) sx = src.width - 1;
            for (int64_t c = 0; c < src.channels; ++c) out.at(y, x, c) = src.at(sy, sx, c);
        }
    }
    return out;
}

ImageTensor crop(const ImageTensor& src, int64_t y0, int64_t x0, int64_t h, int64_t w) {
    if (y0 < 0 || x0 < 0 || h < 1 || w < 1 || y0 + h > src.height || x0 + w > src.width)
        throw ShapeError("crop: window outside image");
    ImageTensor out(h, w, src.channels);
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x)
            for (int64_t c = 0; c < src.channels; ++c) out.at(y, x, c) = src.at(y0 + y, x0 + x, c);
    return out;
}

void write_pgm(const std::string& path, const ImageTensor& img) {
    if (img.channels != 1) throw IoError("write_pgm: single channel only");
    std::string header = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    std::vector<uint8_t> bytes(header.begin(), header.end());
    bytes.reserve(bytes.size() + static_cast<size_t>(img.numel()));
    for (int64_t i = 0; i < img.numel(); ++i) {
        float v = img.values[static_cast<size_t>(i)];
        v = std::min(1.0f, std::max(0.0f, v));
        bytes.push_back(static_cast<uint8_t>(std::lround(v * 255.0f)));
    }
    write_file_bytes(path, bytes);
}

ImageTensor read_pgm(const std::string& path) {
    auto bytes = read_file_bytes(path);
    size_t pos = 0;
    auto token = [&]() -> std::string {
        // skip whitespace and # comment lines
        while (pos < bytes.size()) {
            const char c = static_cast<char>(bytes[pos]);
            if (c == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
                ++pos;
            } else {
                break;
            }
        }
        std::string t;
        while (pos < bytes.size()) {
            const char c = static_cast<char>(bytes[pos]);
            if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '#') break;
            t.push_back(c);
            ++pos;
        }
        return t;
    };
    if (token() != "P5") throw IoError("read_pgm: not a binary PGM: " + path);
    const int64_t w = std::stoll(token());
    const int64_t h = std::stoll(token());
    const int64_t maxval = std::stoll(token());
    if (w < 1 || h < 1 || maxval != 255) throw IoError("read_pgm: unsupported header in " + path);
    ++pos; // single whitespace byte after maxval
    if (bytes.size() - pos < static_cast<size_t>(w * h)) throw IoError("read_pgm: truncated " + path);
    ImageTensor img(h, w, 1);
    for (int64_t i = 0; i < w * h; ++i)
        img.values[static_cast<size_t>(i)] = static_cast<float>(bytes[pos + static_cast<size_t>(i)]) / 255.0f;
    return img;
}

} // namespace cflow
