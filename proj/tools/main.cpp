// cflow: one binary, one reproducibility surface. Subcommands wrap the
// library-level command bodies; this file only parses flags and prints.

#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cflow/commands.hpp"
#include "cflow/error.hpp"

namespace {

struct CommonFlags {
    std::string config_path;
    std::string seed;
    std::string out;
    std::vector<std::string> sets; // raw key=value overrides
};

void add_common(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--config", f.config_path, "key=value configuration file");
    cmd->add_option("--seed", f.seed, "override seed");
    cmd->add_option("--out", f.out, "override output directory");
    cmd->add_option("--set", f.sets, "override any config key (key=value, repeatable)");
}

cflow::RunConfig load_config(const CommonFlags& f) {
    cflow::RunConfig rc =
        f.config_path.empty() ? cflow::RunConfig() : cflow::RunConfig::from_file(f.config_path);
    if (!f.seed.empty()) rc.set("seed", f.seed);
    if (!f.out.empty()) rc.set("out", f.out);
    for (const auto& kv : f.sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw cflow::ConfigError("--set expects key=value, got: " + kv);
        rc.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    return rc;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"page-to-text toy stack: dual-stream encoder, causal decoder, tooling"};
    app.require_subcommand(1);

    CommonFlags gen_f, train_f, eval_f, plan_f, grad_f, ablate_f;

    auto* gen = app.add_subcommand("gen-data", "write train and eval datasets under out/data");
    add_common(gen, gen_f);

    auto* train = app.add_subcommand("train", "run the staged schedule, writing checkpoints");
    add_common(train, train_f);
    int train_stage = 0;
    std::string resume_from;
    bool train_baseline = false, train_quiet = false;
    train->add_option("--stage", train_stage, "1..3 for one stage, 0 for all")
        ->check(CLI::Range(0, 3));
    train->add_option("--resume", resume_from, "mid-stage checkpoint to continue from");
    train->add_flag("--baseline", train_baseline, "train the raster pass-through baseline");
    train->add_flag("--quiet", train_quiet, "no per-step progress on stderr");

    auto* eval = app.add_subcommand("eval", "transcribe a dataset and score it");
    add_common(eval, eval_f);
    std::string eval_ckpt, eval_dataset, eval_report;
    bool eval_baseline = false;
    eval->add_option("--checkpoint", eval_ckpt, "checkpoint to load (default out/stage3.ckpt)");
    eval->add_option("--dataset", eval_dataset, "dataset directory (default out/data/eval)");
    eval->add_option("--report", eval_report, "report path (default out/eval_report.txt)");
    eval->add_flag("--baseline", eval_baseline, "evaluate a raster pass-through checkpoint");

    auto* planc = app.add_subcommand("plan", "crop grid and token budget for a page size");
    add_common(planc, plan_f);
    int64_t plan_w = 0, plan_h = 0;
    bool full_scale = false;
    planc->add_option("--width", plan_w, "page width in pixels")->required();
    planc->add_option("--height", plan_h, "page height in pixels")->required();
    planc->add_flag("--full-scale", full_scale, "use the 1024/768 canvas constants");

    auto* maskc = app.add_subcommand("mask-dump", "print the dual-stream mask as 0/1 rows");
    int64_t mask_m = 0, mask_n = 0;
    maskc->add_option("--m", mask_m, "visual token count")->required();
    maskc->add_option("--n", mask_n, "query token count")->required();

    auto* gradc = app.add_subcommand("grad-check", "finite-difference audit of the composite loss");
    add_common(gradc, grad_f);

    auto* ablate = app.add_subcommand("ablate", "train/eval causal-flow vs raster baseline");
    add_common(ablate, ablate_f);
    bool ablate_quiet = false;
    ablate->add_flag("--quiet", ablate_quiet, "no per-step progress on stderr");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            const auto r = cflow::cmd_gen_data(load_config(gen_f));
            std::printf("train=%lld eval=%lld dir=%s\n", static_cast<long long>(r.train_count),
                        static_cast<long long>(r.eval_count), r.train_dir.c_str());
        } else if (train->parsed()) {
            const auto rc = load_config(train_f);
            const auto r = cflow::cmd_train(rc, train_stage, resume_from, train_baseline, train_quiet);
            std::printf("checkpoint=%s steps=%lld final_loss=%.6f\n", r.checkpoint_path.c_str(),
                        static_cast<long long>(r.steps_run), r.final_loss);
        } else if (eval->parsed()) {
            const auto rc = load_config(eval_f);
            std::string ckpt = eval_ckpt;
            if (ckpt.empty()) ckpt = rc.s("out") + "/stage3.ckpt";
            const auto rep = cflow::cmd_eval(rc, ckpt, eval_dataset, eval_report, eval_baseline);
            std::fputs(rep.to_text().c_str(), stdout);
        } else if (planc->parsed()) {
            const auto rc = load_config(plan_f);
            std::printf("%s\n", cflow::cmd_plan(plan_w, plan_h, rc, full_scale).c_str());
        } else if (maskc->parsed()) {
            std::fputs(cflow::cmd_mask_dump(mask_m, mask_n).c_str(), stdout);
        } else if (gradc->parsed()) {
            const auto rc = load_config(grad_f);
            const auto rep = cflow::cmd_grad_check(static_cast<uint64_t>(rc.i("seed")));
            std::printf("max_rel_err=%.3e coords=%lld\n", rep.max_rel_err,
                        static_cast<long long>(rep.coords_checked));
        } else if (ablate->parsed()) {
            const auto rc = load_config(ablate_f);
            const auto r = cflow::cmd_ablate(rc, ablate_quiet);
            std::printf("causal_flow_ed=%.4f baseline_ed=%.4f report=%s\n",
                        r.causal_flow.overall.mean_ed, r.baseline.overall.mean_ed,
                        r.report_path.c_str());
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
