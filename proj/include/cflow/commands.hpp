#pragma once

#include <cstdint>
#include <string>

#include "cflow/config.hpp"
#include "cflow/metrics.hpp"
#include "cflow/train.hpp"

namespace cflow {

// Library-level command bodies; the CLI binary only parses flags and prints.

struct GenDataResult {
    std::string train_dir;
    std::string eval_dir;
    int64_t train_count = 0;
    int64_t eval_count = 0;
};

// Writes <out>/data/train and <out>/data/eval snapshots (separate derived
// seeds, same shape parameters).
GenDataResult cmd_gen_data(const RunConfig& rc);

struct TrainResult {
    std::string checkpoint_path;
    int64_t steps_run = 0;
    double final_loss = 0.0;
};

// stage in {1,2,3}: runs that stage (loading the previous stage's checkpoint
// when there is one); stage 0 means all three in sequence. resume_from, when
// nonempty, restarts a partially run stage from that checkpoint.
TrainResult cmd_train(const RunConfig& rc, int stage, const std::string& resume_from = "",
                      bool baseline = false, bool quiet = false);

EvalReport cmd_eval(const RunConfig& rc, const std::string& checkpoint_path,
                    const std::string& dataset_dir, const std::string& report_path = "",
                    bool baseline = false);

// "grid=RxC k=K budget=B" for a page; full_constants switches the canvases
// from the toy ones in the config to the full-scale 1024/768 set.
std::string cmd_plan(int64_t width, int64_t height, const RunConfig& rc, bool full_constants);

std::string cmd_mask_dump(int64_t m, int64_t n);

// Double-precision finite-difference audit of the composite loss on a small
// instance; returns the report and a one-line summary.
GradCheckReport cmd_grad_check(uint64_t seed);

struct AblateResult {
    EvalReport causal_flow;
    EvalReport baseline;
    std::string report_path;
};

// Trains and evaluates the causal-flow model and the raster pass-through
// baseline under identical budgets and data.
AblateResult cmd_ablate(const RunConfig& rc, bool quiet = false);

} // namespace cflow
