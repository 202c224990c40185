#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cflow/commands.hpp"
#include "cflow/mask.hpp"
#include "cflow/metrics.hpp"
#include "cflow/model.hpp"
#include "cflow/planner.hpp"
#include "cflow/synth.hpp"
#include "cflow/train.hpp"

namespace py = pybind11;
using namespace cflow;

namespace {

RunConfig config_from(const std::map<std::string, std::string>& overrides) {
    RunConfig rc;
    for (const auto& [k, v] : overrides) rc.set(k, v);
    return rc;
}

std::vector<std::vector<int>> mask_rows(int64_t m, int64_t n) {
    const BoolMatrix bm = materialize(DualStreamMask(m, n));
    std::vector<std::vector<int>> rows(static_cast<size_t>(bm.rows));
    for (int64_t i = 0; i < bm.rows; ++i) {
        rows[static_cast<size_t>(i)].resize(static_cast<size_t>(bm.cols));
        for (int64_t j = 0; j < bm.cols; ++j)
            rows[static_cast<size_t>(i)][static_cast<size_t>(j)] = bm.at(i, j) ? 1 : 0;
    }
    return rows;
}

py::dict plan_page(int64_t width, int64_t height, const std::map<std::string, std::string>& overrides,
                   bool full_scale) {
    const PlannerConfig pc =
        full_scale ? PlannerConfig::full_scale() : config_from(overrides).planner_config();
    const CropPlan cp = plan(width, height, pc);
    py::dict d;
    d["grid_r"] = cp.grid_r;
    d["grid_c"] = cp.grid_c;
    d["k"] = cp.k();
    d["budget"] = token_budget(cp, pc);
    return d;
}

py::dict sample_page(uint64_t seed, const std::string& layout,
                     const std::map<std::string, std::string>& overrides) {
    const RunConfig rc = config_from(overrides);
    const SynthConfig sc = rc.synth_config();
    const GlyphPatterns patterns = make_glyph_patterns(sc.vocab, sc.cell_pixels);
    const Sample s = generate(seed, layout_from_name(layout), sc, patterns);
    py::dict d;
    d["target"] = s.target;
    d["height"] = s.image.height;
    d["width"] = s.image.width;
    d["pixels"] = s.image.values;
    return d;
}

// a few optimizer steps on a fresh miniature model; returns the loss series
std::vector<double> train_smoke(const std::map<std::string, std::string>& overrides, int stage,
                                int64_t steps, uint64_t seed) {
    RunConfig rc = config_from(overrides);
    rc.set("train.stage" + std::to_string(stage) + "_steps", std::to_string(steps));
    const Dataset ds = make_dataset(Rng::mix(seed, 0x7261u), rc.layout_mix(), rc.i("data.count"),
                                    rc.synth_config());
    OcrModel<float> model(rc, seed);
    const StagePlan plan = StagePlan::make(stage, rc);
    AdamW opt(model.registry(), rc.r("train.weight_decay"));
    std::vector<double> losses;
    for (const auto& rec : run_stage(model, plan, ds, seed, opt)) losses.push_back(rec.loss);
    return losses;
}

} // namespace

PYBIND11_MODULE(cflow_py, m) {
    m.doc() = "page-to-text toy stack: masks, crop planning, synthetic pages, metrics, training";

    m.def("mask_rows", &mask_rows, py::arg("m"), py::arg("n"),
          "dual-stream attention mask as rows of 0/1, visual block first");
    m.def("block_score_evals",
          [](int64_t m, int64_t n, int64_t d) {
              Rng rng(7);
              const auto vq = Tensor<float>::gaussian({m, d}, rng, 1.0f);
              const auto vk = Tensor<float>::gaussian({m, d}, rng, 1.0f);
              const auto vv = Tensor<float>::gaussian({m, d}, rng, 1.0f);
              const auto qq = Tensor<float>::gaussian({n, d}, rng, 1.0f);
              const auto qk = Tensor<float>::gaussian({n, d}, rng, 1.0f);
              const auto qv = Tensor<float>::gaussian({n, d}, rng, 1.0f);
              AttentionStats stats;
              block_attention<float>(vq, vk, vv, qq, qk, qv, 1.0f, &stats);
              return stats.score_evals;
          },
          py::arg("m"), py::arg("n"), py::arg("d") = 8,
          "score evaluations the structured kernel performs for m visual rows and n queries");

    m.def("plan_page", &plan_page, py::arg("width"), py::arg("height"),
          py::arg("overrides") = std::map<std::string, std::string>{},
          py::arg("full_scale") = false);

    m.def("edit_distance", [](const std::vector<int>& a, const std::vector<int>& b) {
        return edit_distance(a, b);
    });
    m.def("detect_repetition",
          [](const std::vector<int>& xs, int64_t min_gram, int64_t min_repeats) {
              return detect_repetition(xs, min_gram, min_repeats);
          },
          py::arg("tokens"), py::arg("min_gram") = 5, py::arg("min_repeats") = 4);

    m.def("cosine_lr", &cosine_lr, py::arg("step"), py::arg("total_steps"), py::arg("peak"),
          py::arg("floor"));

    m.def("sample_page", &sample_page, py::arg("seed"), py::arg("layout"),
          py::arg("overrides") = std::map<std::string, std::string>{});

    m.def("config_digest", [](const std::map<std::string, std::string>& overrides) {
        return config_from(overrides).digest();
    });
    m.def("config_text", [](const std::map<std::string, std::string>& overrides) {
        return config_from(overrides).canonical_text();
    });

    m.def("train_smoke", &train_smoke, py::arg("overrides"), py::arg("stage") = 1,
          py::arg("steps") = 4, py::arg("seed") = 1,
          "run a few training steps on a fresh model; returns per-step losses");
}
