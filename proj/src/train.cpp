#include "cflow/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>

#include "cflow/serialize.hpp"

namespace cflow {

StagePlan StagePlan::make(int stage, const RunConfig& rc) {
    StagePlan p;
    p.stage = stage;
    switch (stage) {
        case 1:
            p.train_tokenizer = p.train_encoder = p.train_queries = p.train_decoder = true;
            p.steps = rc.i("train.stage1_steps");
            break;
        case 2:
            p.train_encoder = p.train_queries = p.train_decoder = true; // tokenizer stays put
            p.steps = rc.i("train.stage2_steps");
            break;
        case 3:
            p.train_decoder = true;
            p.steps = rc.i("train.stage3_steps");
            break;
        default:
            throw ConfigError("stage must be 1, 2, or 3");
    }
    p.peak_lr = rc.r("train.peak_lr");
    p.floor_lr = rc.r("train.floor_lr");
    p.clip = rc.r("train.clip");
    p.batch = rc.i("train.batch");
    if (p.batch < 1) throw ConfigError("train.batch must be >= 1");
    return p;
}

double cosine_lr(int64_t step, int64_t total_steps, double peak, double floor) {
    if (total_steps < 1) throw ConfigError("cosine_lr: total_steps must be >= 1");
    if (step < 0 || step > total_steps) throw ConfigError("cosine_lr: step outside [0, total]");
    const double phase = static_cast<double>(step) / static_cast<double>(total_steps);
    return floor + 0.5 * (peak - floor) * (1.0 + std::cos(3.14159265358979323846 * phase));
}

AdamW::AdamW(const std::vector<Parameter<float>*>& params, double wd) : weight_decay(wd) {
    moments.reserve(params.size());
    for (auto* p : params)
        moments.push_back(Moments{Tensor<float>::zeros(p->value.shape), Tensor<float>::zeros(p->value.shape)});
}

void AdamW::step(const std::vector<Parameter<float>*>& params, double lr) {
    if (params.size() != moments.size()) throw GraphError("optimizer: registry size changed");
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (size_t pi = 0; pi < params.size(); ++pi) {
        Parameter<float>& p = *params[pi];
        if (!p.trainable) continue;
        Moments& mo = moments[pi];
        for (int64_t i = 0; i < p.value.numel(); ++i) {
            const double g = static_cast<double>(p.grad[i]);
            const double m = beta1 * static_cast<double>(mo.m[i]) + (1.0 - beta1) * g;
            const double v = beta2 * static_cast<double>(mo.v[i]) + (1.0 - beta2) * g * g;
            mo.m[i] = static_cast<float>(m);
            mo.v[i] = static_cast<float>(v);
            const double update = (m / bc1) / (std::sqrt(v / bc2) + eps) + weight_decay * static_cast<double>(p.value[i]);
            p.value[i] = static_cast<float>(static_cast<double>(p.value[i]) - lr * update);
        }
    }
}

double clip_gradients(const std::vector<Parameter<float>*>& params, double max_norm) {
    double sq = 0.0;
    for (auto* p : params) {
        if (!p->trainable) continue;
        for (int64_t i = 0; i < p->grad.numel(); ++i) {
            const double g = static_cast<double>(p->grad[i]);
            sq += g * g;
        }
    }
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const float scale = static_cast<float>(max_norm / norm);
        for (auto* p : params) {
            if (!p->trainable) continue;
            for (int64_t i = 0; i < p->grad.numel(); ++i) p->grad[i] *= scale;
        }
    }
    return norm;
}

namespace {

uint64_t step_seed(uint64_t seed, int stage, int64_t step) {
    return Rng::mix(Rng::mix(seed, 0x57a6e000u + static_cast<uint64_t>(stage)), static_cast<uint64_t>(step));
}

void set_trainable(OcrModel<float>& model, const StagePlan& plan) {
    for (auto* p : model.registry()) {
        switch (p->group) {
            case ParamGroup::tokenizer: p->trainable = plan.train_tokenizer; break;
            case ParamGroup::encoder: p->trainable = plan.train_encoder; break;
            case ParamGroup::queries: p->trainable = plan.train_queries; break;
            case ParamGroup::decoder: p->trainable = plan.train_decoder; break;
        }
    }
}

} // namespace

std::string format_record(const StepRecord& r) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "step=%lld stage=%d lr=%.9g loss=%.6f wall_ms=%lld",
                  static_cast<long long>(r.step), r.stage, r.lr, r.loss,
                  static_cast<long long>(r.wall_ms));
    return buf;
}

std::vector<StepRecord> run_stage(OcrModel<float>& model, const StagePlan& plan, const Dataset& ds,
                                  uint64_t seed, AdamW& opt, int64_t start_step,
                                  const StepCallback& on_step) {
    if (ds.samples.empty()) throw ValueError("run_stage: empty dataset");
    if (start_step < 0 || start_step > plan.steps) throw ConfigError("run_stage: bad start step");
    set_trainable(model, plan);
    auto params = model.registry();
    std::vector<StepRecord> records;
    for (int64_t step = start_step; step < plan.steps; ++step) {
        const auto t0 = std::chrono::steady_clock::now();
        Rng rng(step_seed(seed, plan.stage, step));
        for (auto* p : params) p->zero_grad();
        double loss_sum = 0.0;
        for (int64_t b = 0; b < plan.batch; ++b) {
            const size_t idx = static_cast<size_t>(rng.below(ds.samples.size()));
            Tape<float> tape;
            auto loss = model.sample_loss(tape, ds.samples[idx], plan.uses_light_decoder());
            loss_sum += static_cast<double>(tape.scalar(loss));
            tape.backward(loss);
        }
        const float inv_batch = 1.0f / static_cast<float>(plan.batch);
        for (auto* p : params) {
            if (!p->trainable) continue;
            for (int64_t i = 0; i < p->grad.numel(); ++i) p->grad[i] *= inv_batch;
        }
        clip_gradients(params, plan.clip);
        const double lr = cosine_lr(step, plan.steps, plan.peak_lr, plan.floor_lr);
        opt.step(params, lr);
        StepRecord rec;
        rec.step = step;
        rec.stage = plan.stage;
        rec.lr = lr;
        rec.loss = loss_sum / static_cast<double>(plan.batch);
        rec.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
        if (on_step) on_step(rec);
        records.push_back(rec);
    }
    return records;
}

namespace {

constexpr uint64_t kCheckpointMagic = 0x31704b43574f4c46ull; // "FLOWCKp1"

void write_tensor(ByteWriter& w, const Tensor<float>& t) {
    w.u8(static_cast<uint8_t>(t.shape.size()));
    for (int64_t d : t.shape) w.i64(d);
    for (int64_t i = 0; i < t.numel(); ++i) w.f32(t[i]);
}

void read_tensor_into(ByteReader& r, Tensor<float>& t, const std::string& name) {
    const int64_t ndims = r.u8();
    Shape s;
    for (int64_t i = 0; i < ndims; ++i) s.push_back(r.i64());
    if (s != t.shape)
        throw IntegrityError("checkpoint: shape mismatch for " + name + ": stored " + shape_str(s) +
                             " vs model " + shape_str(t.shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = r.f32();
}

} // namespace

void save_checkpoint(const std::string& path, OcrModel<float>& model, const AdamW& opt,
                     const CheckpointMeta& meta) {
    auto params = model.registry();
    if (opt.moments.size() != params.size())
        throw GraphError("save_checkpoint: optimizer does not match the model registry");
    ByteWriter w;
    w.u64(kCheckpointMagic);
    w.u32(kCheckpointVersion);
    w.u64(meta.config_digest);
    w.u32(static_cast<uint32_t>(meta.stage));
    w.i64(meta.step);
    w.str(meta.rng_state);
    w.i64(opt.t);
    w.u64(params.size());
    for (auto* p : params) {
        w.str(p->name);
        write_tensor(w, p->value);
    }
    for (size_t i = 0; i < params.size(); ++i) {
        w.str(params[i]->name);
        write_tensor(w, opt.moments[i].m);
        write_tensor(w, opt.moments[i].v);
    }
    const uint32_t crc = crc32(w.bytes().data(), w.size());
    w.u32(crc);
    write_file_bytes(path, w.bytes());
}

CheckpointMeta load_checkpoint(const std::string& path, OcrModel<float>& model, AdamW& opt,
                               uint64_t expected_digest) {
    auto bytes = read_file_bytes(path);
    if (bytes.size() < 16) throw IntegrityError("checkpoint: file too short: " + path);
    {
        ByteReader tail(std::vector<uint8_t>(bytes.end() - 4, bytes.end()));
        const uint32_t stored = tail.u32();
        const uint32_t computed = crc32(bytes.data(), bytes.size() - 4);
        if (stored != computed) throw IntegrityError("checkpoint: checksum mismatch, file corrupt: " + path);
    }
    ByteReader r(std::move(bytes));
    if (r.u64() != kCheckpointMagic) throw IntegrityError("checkpoint: bad magic in " + path);
    CheckpointMeta meta;
    meta.format_version = r.u32();
    if (meta.format_version != kCheckpointVersion)
        throw IntegrityError("checkpoint: format version " + std::to_string(meta.format_version) +
                             " unsupported (want " + std::to_string(kCheckpointVersion) + ")");
    meta.config_digest = r.u64();
    if (meta.config_digest != expected_digest)
        throw ConfigError("checkpoint: config digest mismatch; refusing to load into a different run setup");
    meta.stage = static_cast<int32_t>(r.u32());
    meta.step = r.i64();
    meta.rng_state = r.str();
    auto params = model.registry();
    if (opt.moments.size() != params.size()) {
        opt.moments.clear();
        for (auto* p : params)
            opt.moments.push_back(AdamW::Moments{Tensor<float>::zeros(p->value.shape),
                                                 Tensor<float>::zeros(p->value.shape)});
    }
    opt.t = r.i64();
    const uint64_t count = r.u64();
    if (count != params.size()) throw IntegrityError("checkpoint: parameter count mismatch");
    for (auto* p : params) {
        const std::string name = r.str();
        if (name != p->name)
            throw IntegrityError("checkpoint: parameter order mismatch at " + name + " vs " + p->name);
        read_tensor_into(r, p->value, name);
    }
    for (size_t i = 0; i < params.size(); ++i) {
        const std::string name = r.str();
        if (name != params[i]->name) throw IntegrityError("checkpoint: moment order mismatch at " + name);
        read_tensor_into(r, opt.moments[i].m, name + ".m");
        read_tensor_into(r, opt.moments[i].v, name + ".v");
    }
    r.u32(); // checksum already verified
    if (!r.done()) throw IntegrityError("checkpoint: trailing bytes in " + path);
    return meta;
}

} // namespace cflow
