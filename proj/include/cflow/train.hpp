#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cflow/model.hpp"

namespace cflow {

// Which parameter groups move in each stage:
//   1: tokenizer + encoder + queries + the light scaffold decoder
//   2: encoder + queries + main decoder, tokenizer frozen
//   3: main decoder only
struct StagePlan {
    int stage = 1;
    bool train_tokenizer = false;
    bool train_encoder = false;
    bool train_queries = false;
    bool train_decoder = false;
    double peak_lr = 1e-3;
    double floor_lr = 1e-5;
    double clip = 1.0; // global gradient norm ceiling; <= 0 disables
    int64_t steps = 0;
    int64_t batch = 1;

    bool uses_light_decoder() const { return stage == 1; }

    static StagePlan make(int stage, const RunConfig& rc);
};

double cosine_lr(int64_t step, int64_t total_steps, double peak, double floor);

struct AdamW {
    double beta1 = 0.9;
    double beta2 = 0.95;
    double eps = 1e-8;
    double weight_decay = 0.0;
    int64_t t = 0;

    struct Moments {
        Tensor<float> m, v;
    };
    std::vector<Moments> moments; // parallel to the model registry

    AdamW() = default;
    explicit AdamW(const std::vector<Parameter<float>*>& params, double wd = 0.0);

    void step(const std::vector<Parameter<float>*>& params, double lr);
};

// Returns the pre-clip global norm over trainable gradients.
double clip_gradients(const std::vector<Parameter<float>*>& params, double max_norm);

struct StepRecord {
    int64_t step = 0;
    int stage = 0;
    double lr = 0.0;
    double loss = 0.0;
    int64_t wall_ms = 0;
};

std::string format_record(const StepRecord& r);

using StepCallback = std::function<void(const StepRecord&)>;

// Deterministic given (model state, plan, dataset, seed, start_step): batch
// order comes from a per-step counter-derived stream, so a resumed run walks
// the same trajectory as an uninterrupted one.
std::vector<StepRecord> run_stage(OcrModel<float>& model, const StagePlan& plan, const Dataset& ds,
                                  uint64_t seed, AdamW& opt, int64_t start_step = 0,
                                  const StepCallback& on_step = {});

struct CheckpointMeta {
    uint32_t format_version = 0;
    uint64_t config_digest = 0;
    int32_t stage = 0;
    int64_t step = 0;
    std::string rng_state;
};

constexpr uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, OcrModel<float>& model, const AdamW& opt,
                     const CheckpointMeta& meta);

// Restores parameters and optimizer moments in place; rejects version or
// config-digest mismatches and any corruption (whole-file checksum).
CheckpointMeta load_checkpoint(const std::string& path, OcrModel<float>& model, AdamW& opt,
                               uint64_t expected_digest);

} // namespace cflow
