#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "cflow/serialize.hpp"
#include "cflow/train.hpp"

using namespace cflow;

namespace {

// smallest stack that exercises every group: 14x14 pages, global-only plans,
// 4 visual tokens, one block per stack
RunConfig tiny_rc() {
    RunConfig rc;
    rc.set("data.rows", "2");
    rc.set("data.cols", "2");
    rc.set("data.vocab", "6");
    rc.set("data.cell_pixels", "7");
    rc.set("data.density", "1.0");
    rc.set("data.mix_raster", "1.0");
    rc.set("data.mix_two_column", "0");
    rc.set("data.mix_spiral", "0");
    rc.set("data.mix_table", "0");
    rc.set("tok.patch", "4");
    rc.set("tok.stages", "1");
    rc.set("model.d", "16");
    rc.set("model.heads", "2");
    rc.set("model.ffn_mult", "2");
    rc.set("model.enc_layers", "1");
    rc.set("model.dec_layers", "1");
    rc.set("model.light_dec_layers", "1");
    rc.set("model.enc_max_seq", "8");
    rc.set("model.dec_max_seq", "32");
    rc.set("model.max_text_len", "16");
    rc.set("planner.global_canvas", "16");
    rc.set("planner.local_canvas", "16");
    rc.set("train.batch", "2");
    rc.set("train.stage1_steps", "4");
    rc.set("train.stage2_steps", "3");
    rc.set("train.stage3_steps", "3");
    return rc;
}

Dataset tiny_dataset(const RunConfig& rc, uint64_t seed, int64_t count) {
    return make_dataset(seed, rc.layout_mix(), count, rc.synth_config());
}

std::vector<std::vector<float>> snapshot_group(OcrModel<float>& model, ParamGroup g) {
    std::vector<std::vector<float>> out;
    for (auto* p : model.registry())
        if (p->group == g) out.push_back(p->value.data);
    return out;
}

} // namespace

TEST_CASE("cosine schedule hits its endpoints exactly and decays monotonically") {
    CHECK(cosine_lr(0, 100, 1e-4, 1e-6) == 1e-4);
    CHECK(cosine_lr(100, 100, 1e-4, 1e-6) == doctest::Approx(1e-6).epsilon(1e-12));
    CHECK(cosine_lr(50, 100, 1e-4, 1e-6) == doctest::Approx(5.05e-5).epsilon(1e-9));
    double prev = cosine_lr(0, 64, 3e-3, 1e-5);
    for (int64_t s = 1; s <= 64; ++s) {
        const double cur = cosine_lr(s, 64, 3e-3, 1e-5);
        CHECK(cur <= prev);
        prev = cur;
    }
    CHECK_THROWS_AS(cosine_lr(-1, 10, 1e-3, 1e-5), ConfigError);
    CHECK_THROWS_AS(cosine_lr(11, 10, 1e-3, 1e-5), ConfigError);
    CHECK_THROWS_AS(cosine_lr(0, 0, 1e-3, 1e-5), ConfigError);
}

TEST_CASE("optimizer with zero gradients and no decay is a no-op") {
    Rng rng(1);
    Parameter<float> p("p", ParamGroup::decoder, Tensor<float>::gaussian({4, 4}, rng, 1.0f));
    const std::vector<float> before = p.value.data;
    std::vector<Parameter<float>*> params = {&p};
    AdamW opt(params, 0.0);
    p.zero_grad();
    for (int i = 0; i < 5; ++i) opt.step(params, 1e-2);
    CHECK(p.value.data == before);
}

TEST_CASE("optimizer moves parameters against the gradient") {
    Parameter<float> p("p", ParamGroup::decoder, Tensor<float>::full({3}, 1.0f));
    std::vector<Parameter<float>*> params = {&p};
    AdamW opt(params, 0.0);
    p.grad = Tensor<float>::full({3}, 2.0f);
    opt.step(params, 1e-2);
    for (int64_t i = 0; i < 3; ++i) CHECK(p.value[i] < 1.0f);
    CHECK(opt.t == 1);
}

TEST_CASE("frozen parameters never move") {
    Parameter<float> p("p", ParamGroup::tokenizer, Tensor<float>::full({3}, 1.0f));
    p.trainable = false;
    std::vector<Parameter<float>*> params = {&p};
    AdamW opt(params, 0.1);
    p.grad = Tensor<float>::full({3}, 2.0f);
    opt.step(params, 1e-2);
    for (int64_t i = 0; i < 3; ++i) CHECK(p.value[i] == 1.0f);
}

TEST_CASE("gradient clipping rescales to the ceiling and reports the pre-clip norm") {
    Parameter<float> p("p", ParamGroup::decoder, Tensor<float>::zeros({4}));
    p.grad = Tensor<float>::full({4}, 3.0f); // norm 6
    std::vector<Parameter<float>*> params = {&p};
    const double norm = clip_gradients(params, 1.0);
    CHECK(norm == doctest::Approx(6.0));
    double after = 0.0;
    for (int64_t i = 0; i < 4; ++i) after += static_cast<double>(p.grad[i]) * p.grad[i];
    CHECK(std::sqrt(after) == doctest::Approx(1.0).epsilon(1e-6));

    // under the ceiling: untouched
    p.grad = Tensor<float>::full({4}, 0.1f);
    const std::vector<float> before = p.grad.data;
    clip_gradients(params, 1.0);
    CHECK(p.grad.data == before);
}

TEST_CASE("stage plans follow the freezing schedule") {
    const RunConfig rc = tiny_rc();
    const StagePlan s1 = StagePlan::make(1, rc);
    CHECK(s1.train_tokenizer);
    CHECK(s1.train_encoder);
    CHECK(s1.train_queries);
    CHECK(s1.train_decoder);
    CHECK(s1.uses_light_decoder());

    const StagePlan s2 = StagePlan::make(2, rc);
    CHECK_FALSE(s2.train_tokenizer);
    CHECK(s2.train_encoder);
    CHECK(s2.train_queries);
    CHECK(s2.train_decoder);
    CHECK_FALSE(s2.uses_light_decoder());

    const StagePlan s3 = StagePlan::make(3, rc);
    CHECK_FALSE(s3.train_tokenizer);
    CHECK_FALSE(s3.train_encoder);
    CHECK_FALSE(s3.train_queries);
    CHECK(s3.train_decoder);

    CHECK_THROWS_AS(StagePlan::make(4, rc), ConfigError);
    CHECK_THROWS_AS(StagePlan::make(0, rc), ConfigError);
}

TEST_CASE("a stage run leaves its frozen groups byte-identical") {
    const RunConfig rc = tiny_rc();
    const Dataset ds = tiny_dataset(rc, 3, 6);
    OcrModel<float> model(rc, 11);

    const auto tok_before = snapshot_group(model, ParamGroup::tokenizer);
    const auto enc_before = snapshot_group(model, ParamGroup::encoder);
    const auto q_before = snapshot_group(model, ParamGroup::queries);
    const auto dec_before = snapshot_group(model, ParamGroup::decoder);

    StagePlan plan = StagePlan::make(3, rc);
    AdamW opt(model.registry(), 0.0);
    const auto records = run_stage(model, plan, ds, 21, opt);
    CHECK(records.size() == 3);

    CHECK(snapshot_group(model, ParamGroup::tokenizer) == tok_before);
    CHECK(snapshot_group(model, ParamGroup::encoder) == enc_before);
    CHECK(snapshot_group(model, ParamGroup::queries) == q_before);
    CHECK(snapshot_group(model, ParamGroup::decoder) != dec_before);

    // stage 2 freezes only the tokenizer
    OcrModel<float> m2(rc, 11);
    const auto tok2 = snapshot_group(m2, ParamGroup::tokenizer);
    const auto enc2 = snapshot_group(m2, ParamGroup::encoder);
    StagePlan plan2 = StagePlan::make(2, rc);
    AdamW opt2(m2.registry(), 0.0);
    run_stage(m2, plan2, ds, 22, opt2);
    CHECK(snapshot_group(m2, ParamGroup::tokenizer) == tok2);
    CHECK(snapshot_group(m2, ParamGroup::encoder) != enc2);
}

TEST_CASE("empty datasets and bad start steps are rejected") {
    const RunConfig rc = tiny_rc();
    OcrModel<float> model(rc, 1);
    StagePlan plan = StagePlan::make(1, rc);
    AdamW opt(model.registry(), 0.0);
    Dataset empty;
    CHECK_THROWS_AS(run_stage(model, plan, empty, 1, opt), ValueError);
    const Dataset ds = tiny_dataset(rc, 3, 4);
    CHECK_THROWS_AS(run_stage(model, plan, ds, 1, opt, -1), ConfigError);
    CHECK_THROWS_AS(run_stage(model, plan, ds, 1, opt, plan.steps + 1), ConfigError);
}

TEST_CASE("loss drops on a one-page dataset within 200 steps") {
    RunConfig rc = tiny_rc();
    rc.set("train.stage1_steps", "200");
    rc.set("train.batch", "1");
    rc.set("train.peak_lr", "0.003");
    const Dataset one = tiny_dataset(rc, 5, 1);
    OcrModel<float> model(rc, 7);
    StagePlan plan = StagePlan::make(1, rc);
    AdamW opt(model.registry(), 0.0);
    const auto records = run_stage(model, plan, one, 9, opt);
    REQUIRE(records.size() == 200);
    CHECK(records.back().loss < records.front().loss / 2.0);
}

TEST_CASE("checkpoints round-trip bit-exactly") {
    namespace fs = std::filesystem;
    const RunConfig rc = tiny_rc();
    const Dataset ds = tiny_dataset(rc, 3, 4);
    OcrModel<float> model(rc, 31);
    StagePlan plan = StagePlan::make(1, rc);
    AdamW opt(model.registry(), 0.0);
    run_stage(model, plan, ds, 31, opt); // some nonzero moments to serialize

    const CheckpointMeta meta{kCheckpointVersion, rc.digest(), 1, plan.steps, "31"};
    const std::string p1 = "test_ckpt_a.bin", p2 = "test_ckpt_b.bin";
    save_checkpoint(p1, model, opt, meta);

    OcrModel<float> back(rc, 99); // different init, fully overwritten by load
    AdamW back_opt;
    const CheckpointMeta got = load_checkpoint(p1, back, back_opt, rc.digest());
    CHECK(got.stage == 1);
    CHECK(got.step == plan.steps);
    CHECK(got.rng_state == "31");
    CHECK(got.config_digest == rc.digest());

    auto a = model.registry();
    auto b = back.registry();
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) CHECK(a[i]->value.data == b[i]->value.data);
    REQUIRE(back_opt.moments.size() == opt.moments.size());
    CHECK(back_opt.t == opt.t);
    for (size_t i = 0; i < opt.moments.size(); ++i) {
        CHECK(back_opt.moments[i].m.data == opt.moments[i].m.data);
        CHECK(back_opt.moments[i].v.data == opt.moments[i].v.data);
    }

    // save -> load -> save: identical bytes
    save_checkpoint(p2, back, back_opt, got);
    CHECK(read_file_bytes(p1) == read_file_bytes(p2));
    fs::remove(p1);
    fs::remove(p2);
}

TEST_CASE("corrupt, truncated, or mismatched checkpoints are refused") {
    namespace fs = std::filesystem;
    const RunConfig rc = tiny_rc();
    OcrModel<float> model(rc, 5);
    AdamW opt(model.registry(), 0.0);
    const CheckpointMeta meta{kCheckpointVersion, rc.digest(), 1, 0, "5"};
    const std::string path = "test_ckpt_c.bin";
    save_checkpoint(path, model, opt, meta);
    auto pristine = read_file_bytes(path);

    OcrModel<float> sink(rc, 6);
    AdamW sink_opt;

    // digest mismatch
    CHECK_THROWS_AS(load_checkpoint(path, sink, sink_opt, rc.digest() + 1), ConfigError);

    // truncation
    auto cut = pristine;
    cut.resize(cut.size() - 10);
    write_file_bytes(path, cut);
    CHECK_THROWS_AS(load_checkpoint(path, sink, sink_opt, rc.digest()), IntegrityError);

    // single flipped byte in the middle
    auto flipped = pristine;
    flipped[flipped.size() / 2] ^= 0x40;
    write_file_bytes(path, flipped);
    CHECK_THROWS_AS(load_checkpoint(path, sink, sink_opt, rc.digest()), IntegrityError);

    // version bump with a recomputed checksum
    auto vbump = pristine;
    vbump[8] += 1; // version field sits right after the magic
    const uint32_t crc = crc32(vbump.data(), vbump.size() - 4);
    for (int i = 0; i < 4; ++i) vbump[vbump.size() - 4 + static_cast<size_t>(i)] =
        static_cast<uint8_t>(crc >> (8 * i));
    write_file_bytes(path, vbump);
    CHECK_THROWS_AS(load_checkpoint(path, sink, sink_opt, rc.digest()), IntegrityError);

    fs::remove(path);
    CHECK_THROWS_AS(load_checkpoint("no_such_checkpoint.bin", sink, sink_opt, rc.digest()), IoError);
}

TEST_CASE("resuming mid-stage replays the uninterrupted trajectory exactly") {
    namespace fs = std::filesystem;
    RunConfig rc = tiny_rc();
    rc.set("train.stage1_steps", "6");
    const Dataset ds = tiny_dataset(rc, 3, 6);
    const StagePlan plan = StagePlan::make(1, rc);

    // uninterrupted reference
    OcrModel<float> ref(rc, 17);
    AdamW ref_opt(ref.registry(), 0.0);
    const auto ref_records = run_stage(ref, plan, ds, 40, ref_opt);
    REQUIRE(ref_records.size() == 6);

    // same run, killed after step 3 with a checkpoint on the way out
    struct Interrupted {};
    const std::string path = "test_resume.ckpt";
    OcrModel<float> m1(rc, 17);
    AdamW o1(m1.registry(), 0.0);
    std::vector<StepRecord> phase1;
    try {
        run_stage(m1, plan, ds, 40, o1, 0, [&](const StepRecord& r) {
            phase1.push_back(r);
            if (phase1.size() == 3) {
                const CheckpointMeta meta{kCheckpointVersion, rc.digest(), 1, r.step + 1, "40"};
                save_checkpoint(path, m1, o1, meta);
                throw Interrupted{};
            }
        });
        FAIL("interrupt never fired");
    } catch (const Interrupted&) {
    }
    REQUIRE(phase1.size() == 3);

    // reload into a differently seeded model and finish the stage
    OcrModel<float> m2(rc, 71);
    AdamW o2;
    const CheckpointMeta got = load_checkpoint(path, m2, o2, rc.digest());
    CHECK(got.step == 3);
    const auto phase2 = run_stage(m2, plan, ds, 40, o2, got.step);
    REQUIRE(phase2.size() == 3);
    for (size_t i = 0; i < 3; ++i) {
        CHECK(phase1[i].loss == ref_records[i].loss);
        CHECK(phase2[i].loss == ref_records[i + 3].loss);
        CHECK(phase2[i].lr == ref_records[i + 3].lr);
    }
    fs::remove(path);
}
