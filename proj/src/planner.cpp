#include "cflow/planner.hpp"

#include <cstdlib>

namespace cflow {

void PlannerConfig::validate(const TokenizerConfig& tok) const {
    if (k_max < 0) throw ConfigError("planner: k_max must be >= 0");
    if (token_count(global_h, global_w, tok) != n_g)
        throw ConfigError("planner: n_g does not match the global canvas token count");
    if (token_count(local_h, local_w, tok) != n_l)
        throw ConfigError("planner: n_l does not match the local canvas token count");
}

ResizePad fit_to_canvas(int64_t src_h, int64_t src_w, int64_t canvas_h, int64_t canvas_w) {
    if (src_h < 1 || src_w < 1) throw ShapeError("fit_to_canvas: empty source");
    ResizePad rp;
    rp.canvas_h = canvas_h;
    rp.canvas_w = canvas_w;
    // pick the binding axis by cross-multiplication, no floating point
    if (src_h * canvas_w >= src_w * canvas_h) {
        rp.scaled_h = canvas_h;
        rp.scaled_w = std::max<int64_t>(1, src_w * canvas_h / src_h);
    } else {
        rp.scaled_w = canvas_w;
        rp.scaled_h = std::max<int64_t>(1, src_h * canvas_w / src_w);
    }
    return rp;
}

CropPlan plan(int64_t width, int64_t height, const PlannerConfig& cfg) {
    if (width < 1 || height < 1) throw ShapeError("plan: page extents must be >= 1");
    CropPlan p;
    p.page_h = height;
    p.page_w = width;
    p.global = fit_to_canvas(height, width, cfg.global_h, cfg.global_w);
    p.local_canvas_h = cfg.local_h;
    p.local_canvas_w = cfg.local_w;

    const int64_t threshold = cfg.crop_threshold();
    if ((width < threshold && height < threshold) || cfg.k_max == 0) return p;

    // distortion of grid (r, c) is |c*local_w/width - r*local_h/height|;
    // compare via the integer numerator over the common denominator w*h
    int64_t best_r = 0, best_c = 0;
    int64_t best_key = 0;
    bool have = false;
    for (int64_t r = 1; r <= cfg.k_max; ++r) {
        for (int64_t c = 1; r * c <= cfg.k_max; ++c) {
            const int64_t key = std::llabs(c * cfg.local_w * height - r * cfg.local_h * width);
            const bool better =
                !have || key < best_key ||
                (key == best_key && (r * c > best_r * best_c ||
                                     (r * c == best_r * best_c && (r < best_r || (r == best_r && c < best_c)))));
            if (better) {
                best_key = key;
                best_r = r;
                best_c = c;
                have = true;
            }
        }
    }
    p.grid_r = best_r;
    p.grid_c = best_c;
    for (int64_t i = 0; i < best_r; ++i) {
        const int64_t y0 = i * height / best_r;
        const int64_t y1 = (i + 1) * height / best_r;
        for (int64_t j = 0; j < best_c; ++j) {
            const int64_t x0 = j * width / best_c;
            const int64_t x1 = (j + 1) * width / best_c;
            p.locals.push_back(Rect{y0, x0, y1 - y0, x1 - x0});
        }
    }
    return p;
}

int64_t token_budget(const CropPlan& p, const PlannerConfig& cfg) {
    return p.k() * cfg.n_l + cfg.n_g;
}

namespace {

ImageTensor resize_pad(const ImageTensor& src, const ResizePad& rp) {
    ImageTensor scaled =
        (src.height == rp.scaled_h && src.width == rp.scaled_w) ? src : resize_nearest(src, rp.scaled_h, rp.scaled_w);
    if (scaled.height == rp.canvas_h && scaled.width == rp.canvas_w) return scaled;
    return pad_to_canvas(scaled, rp.canvas_h, rp.canvas_w, 0.0f);
}

} // namespace

AppliedViews apply(const CropPlan& p, const ImageTensor& image) {
    if (image.height != p.page_h || image.width != p.page_w)
        throw ShapeError("apply: image extents differ from the planned page");
    AppliedViews out;
    out.global = resize_pad(image, p.global);
    for (const Rect& r : p.locals) {
        ImageTensor tile = crop(image, r.y0, r.x0, r.h, r.w);
        out.locals.push_back(resize_pad(tile, fit_to_canvas(r.h, r.w, p.local_canvas_h, p.local_canvas_w)));
    }
    return out;
}

} // namespace cflow
