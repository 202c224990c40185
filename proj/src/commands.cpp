#include "cflow/commands.hpp"

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cflow/error.hpp"
#include "cflow/mask.hpp"
#include "cflow/serialize.hpp"

namespace fs = std::filesystem;

namespace cflow {

namespace {

std::string join(const std::string& a, const std::string& b) { return (fs::path(a) / b).string(); }

std::string ckpt_path(const std::string& out_dir, int stage, bool baseline) {
    std::string name = "stage" + std::to_string(stage) + ".ckpt";
    if (baseline) name = "baseline_" + name;
    return join(out_dir, name);
}

std::string log_path(const std::string& out_dir, int stage, bool baseline) {
    std::string name = "stage" + std::to_string(stage) + "_metrics.log";
    if (baseline) name = "baseline_" + name;
    return join(out_dir, name);
}

} // namespace

GenDataResult cmd_gen_data(const RunConfig& rc) {
    const SynthConfig sc = rc.synth_config();
    const LayoutMix mix = rc.layout_mix();
    const uint64_t seed = static_cast<uint64_t>(rc.i("seed"));

    GenDataResult out;
    out.train_dir = join(rc.s("out"), "data/train");
    out.eval_dir = join(rc.s("out"), "data/eval");
    // distinct derived streams so eval pages never duplicate training pages
    const Dataset train = make_dataset(Rng::mix(seed, 0x7261u), mix, rc.i("data.count"), sc);
    const Dataset eval = make_dataset(Rng::mix(seed, 0x6576u), mix, rc.i("data.eval_count"), sc);
    write_dataset(out.train_dir, train);
    write_dataset(out.eval_dir, eval);
    out.train_count = static_cast<int64_t>(train.samples.size());
    out.eval_count = static_cast<int64_t>(eval.samples.size());
    return out;
}

TrainResult cmd_train(const RunConfig& rc, int stage, const std::string& resume_from,
                      bool baseline, bool quiet) {
    if (stage < 0 || stage > 3) throw ConfigError("cmd_train: stage must be 0 (all) or 1..3");
    const std::string out_dir = rc.s("out");
    fs::create_directories(out_dir);
    const std::string train_dir = join(out_dir, "data/train");
    if (!fs::exists(join(train_dir, "manifest.txt")))
        throw IoError("cmd_train: no dataset at " + train_dir + " (run gen-data first)");
    const Dataset ds = read_dataset(train_dir);

    const uint64_t seed = static_cast<uint64_t>(rc.i("seed"));
    OcrModel<float> model(rc, seed, baseline);

    std::vector<int> stages;
    if (stage == 0)
        stages = {1, 2, 3};
    else
        stages = {stage};

    // a single-stage run past stage 1 starts from the previous stage's result
    if (resume_from.empty() && stages.front() > 1) {
        AdamW scratch;
        load_checkpoint(ckpt_path(out_dir, stages.front() - 1, baseline), model, scratch, rc.digest());
    }

    TrainResult result;
    const int64_t save_every = rc.i("train.save_every");
    for (int st : stages) {
        const StagePlan plan = StagePlan::make(st, rc);
        AdamW opt(model.registry(), rc.r("train.weight_decay"));
        int64_t start_step = 0;
        if (!resume_from.empty() && st == stages.front()) {
            const CheckpointMeta meta = load_checkpoint(resume_from, model, opt, rc.digest());
            if (meta.stage != st)
                throw ConfigError("cmd_train: checkpoint is from stage " + std::to_string(meta.stage) +
                                  ", requested stage " + std::to_string(st));
            start_step = meta.step;
        }

        std::ofstream log(log_path(out_dir, st, baseline),
                          start_step > 0 ? std::ios::app : std::ios::trunc);
        if (!log) throw IoError("cmd_train: cannot open metrics log for stage " + std::to_string(st));

        const auto on_step = [&](const StepRecord& r) {
            log << format_record(r) << "\n";
            if (!quiet && (r.step % 100 == 0 || r.step + 1 == plan.steps))
                std::fprintf(stderr, "%s\n", format_record(r).c_str());
            if (save_every > 0 && (r.step + 1) % save_every == 0 && r.step + 1 < plan.steps) {
                CheckpointMeta meta{kCheckpointVersion, rc.digest(), st, r.step + 1,
                                    std::to_string(seed)};
                save_checkpoint(join(out_dir, (baseline ? std::string("baseline_") : std::string()) +
                                                  "stage" + std::to_string(st) + "_partial.ckpt"),
                                model, opt, meta);
            }
        };

        const auto records = run_stage(model, plan, ds, seed, opt, start_step, on_step);
        log.flush();
        result.steps_run += static_cast<int64_t>(records.size());
        if (!records.empty()) result.final_loss = records.back().loss;

        CheckpointMeta meta{kCheckpointVersion, rc.digest(), st, plan.steps, std::to_string(seed)};
        result.checkpoint_path = ckpt_path(out_dir, st, baseline);
        save_checkpoint(result.checkpoint_path, model, opt, meta);
    }
    return result;
}

EvalReport cmd_eval(const RunConfig& rc, const std::string& checkpoint_path,
                    const std::string& dataset_dir, const std::string& report_path, bool baseline) {
    const std::string out_dir = rc.s("out");
    const std::string ds_dir = dataset_dir.empty() ? join(out_dir, "data/eval") : dataset_dir;
    const Dataset ds = read_dataset(ds_dir);

    OcrModel<float> model(rc, static_cast<uint64_t>(rc.i("seed")), baseline);
    AdamW scratch;
    load_checkpoint(checkpoint_path, model, scratch, rc.digest());

    GenerationSettings gs;
    gs.max_new_tokens = rc.i("eval.max_new_tokens");
    EvalReport report = evaluate(
        ds, [&](const Sample& s) { return model.transcribe(s.image, gs); }, rc.digest());

    const std::string path = report_path.empty() ? join(out_dir, "eval_report.txt") : report_path;
    fs::create_directories(fs::path(path).parent_path().string().empty()
                               ? "."
                               : fs::path(path).parent_path().string());
    write_file_text(path, report.to_text());
    return report;
}

std::string cmd_plan(int64_t width, int64_t height, const RunConfig& rc, bool full_constants) {
    const PlannerConfig pc = full_constants ? PlannerConfig::full_scale() : rc.planner_config();
    const CropPlan p = plan(width, height, pc);
    char buf[96];
    std::snprintf(buf, sizeof buf, "grid=%" PRId64 "x%" PRId64 " k=%" PRId64 " budget=%" PRId64,
                  p.grid_r, p.grid_c, p.k(), token_budget(p, pc));
    return std::string(buf);
}

std::string cmd_mask_dump(int64_t m, int64_t n) {
    const BoolMatrix mat = materialize(DualStreamMask{m, n});
    std::string out;
    out.reserve(static_cast<size_t>((mat.cols + 1) * mat.rows));
    for (int64_t i = 0; i < mat.rows; ++i) {
        for (int64_t j = 0; j < mat.cols; ++j) out.push_back(mat.at(i, j) ? '1' : '0');
        out.push_back('\n');
    }
    return out;
}

GradCheckReport cmd_grad_check(uint64_t seed) {
    // tiny double-precision instance of the full stack; small enough that the
    // finite-difference sweep stays cheap, big enough that every group has
    // live gradient flow
    RunConfig rc;
    rc.set("seed", std::to_string(seed));
    rc.set("data.rows", "2");
    rc.set("data.cols", "2");
    rc.set("data.vocab", "6");
    rc.set("data.cell_pixels", "8");
    rc.set("data.density", "0.75");
    rc.set("tok.patch", "4");
    rc.set("tok.stages", "1");
    rc.set("model.d", "16");
    rc.set("model.heads", "2");
    rc.set("model.ffn_mult", "2");
    rc.set("model.enc_layers", "1");
    rc.set("model.dec_layers", "1");
    rc.set("model.light_dec_layers", "1");
    rc.set("model.enc_max_seq", "16");
    rc.set("model.dec_max_seq", "32");
    rc.set("model.max_text_len", "16");
    rc.set("planner.global_canvas", "16");
    rc.set("planner.local_canvas", "16");
    rc.set("planner.k_max", "2");

    OcrModel<double> model(rc, seed);
    const GlyphPatterns patterns = make_glyph_patterns(6, 8);
    const Sample sample = generate(Rng::mix(seed, 0x6c5u), LayoutKind::raster, rc.synth_config(),
                                   patterns);

    auto params = model.registry();
    const auto build = [&](Tape<double>& tape) { return model.sample_loss(tape, sample, false); };
    return grad_check<double>(build, std::span<Parameter<double>* const>(params.data(), params.size()));
}

AblateResult cmd_ablate(const RunConfig& rc, bool quiet) {
    const std::string out_dir = rc.s("out");
    if (!fs::exists(join(join(out_dir, "data/train"), "manifest.txt"))) cmd_gen_data(rc);

    AblateResult out;
    const TrainResult main_run = cmd_train(rc, 0, "", false, quiet);
    out.causal_flow = cmd_eval(rc, main_run.checkpoint_path, "",
                               join(out_dir, "ablate_causal_flow.txt"), false);
    const TrainResult base_run = cmd_train(rc, 0, "", true, quiet);
    out.baseline = cmd_eval(rc, base_run.checkpoint_path, "",
                            join(out_dir, "ablate_baseline.txt"), true);

    std::ostringstream report;
    report << "ablation: causal-flow encoder vs raster pass-through baseline\n"
           << "identical data, budget, schedule, and seeds; only the query path differs\n\n"
           << "[causal_flow]\n"
           << out.causal_flow.to_text() << "\n[baseline]\n"
           << out.baseline.to_text();
    out.report_path = join(out_dir, "ablate_report.txt");
    write_file_text(out.report_path, report.str());
    return out;
}

} // namespace cflow
