#pragma once

#include <cstdint>
#include <vector>

#include "cflow/image.hpp"
#include "cflow/tokenizer.hpp"

namespace cflow {

struct PlannerConfig {
    int64_t global_h = 1024, global_w = 1024;
    int64_t local_h = 768, local_w = 768;
    int64_t k_max = 6;
    int64_t n_g = 256, n_l = 144;

    // crop exemption: pages with both dims below the local canvas stay global-only
    int64_t crop_threshold() const { return local_h < local_w ? local_h : local_w; }

    // defaults above are the full-scale constants
    static PlannerConfig full_scale() { return PlannerConfig{}; }
    static PlannerConfig toy() { return PlannerConfig{128, 128, 96, 96, 6, 16, 9}; }

    void validate(const TokenizerConfig& tok) const;
};

struct Rect {
    int64_t y0 = 0, x0 = 0, h = 0, w = 0;
};

// Aspect-preserving fit: resize source to (scaled_h, scaled_w), then pad
// top-left onto the canvas with fill 0.
struct ResizePad {
    int64_t scaled_h = 0, scaled_w = 0;
    int64_t canvas_h = 0, canvas_w = 0;
};

ResizePad fit_to_canvas(int64_t src_h, int64_t src_w, int64_t canvas_h, int64_t canvas_w);

struct CropPlan {
    int64_t page_h = 0, page_w = 0;
    ResizePad global;
    int64_t local_canvas_h = 0, local_canvas_w = 0; // target for every local tile
    int64_t grid_r = 0, grid_c = 0;                 // 0x0 when no crops
    std::vector<Rect> locals;                       // row-major tiles covering the page exactly

    int64_t k() const { return static_cast<int64_t>(locals.size()); }
};

// Deterministic in (width, height, cfg). Grid chosen among 1 <= r*c <= k_max
// by minimal aspect distortion, then most tiles, then fewer rows.
CropPlan plan(int64_t width, int64_t height, const PlannerConfig& cfg);

int64_t token_budget(const CropPlan& p, const PlannerConfig& cfg);

struct AppliedViews {
    ImageTensor global;
    std::vector<ImageTensor> locals;
};

AppliedViews apply(const CropPlan& p, const ImageTensor& image);

} // namespace cflow
