#include <doctest.h>

#include <algorithm>
#include <vector>

#include "cflow/metrics.hpp"
#include "cflow/rng.hpp"
#include "oracles.hpp"

using namespace cflow;

namespace {

std::vector<int> random_ids(Rng& rng, int64_t len, int vocab) {
    std::vector<int> out(static_cast<size_t>(len));
    for (auto& v : out) v = static_cast<int>(rng.below(static_cast<uint64_t>(vocab)));
    return out;
}

} // namespace

TEST_CASE("edit distance basics") {
    const std::vector<int> a = {1, 2, 3};
    const std::vector<int> b = {1, 9, 3};
    const std::vector<int> empty;
    CHECK(edit_distance(a, a) == 0.0);
    CHECK(edit_distance(empty, std::vector<int>{1, 2, 3, 4, 5}) == 1.0);
    CHECK(edit_distance(a, b) == doctest::Approx(1.0 / 3.0));
    CHECK(edit_distance(empty, empty) == 0.0); // max(0,0,1) guard
    CHECK(edit_distance_raw(a, b) == 1);
}

TEST_CASE("edit distance matches the DP oracle on random pairs") {
    Rng rng(0xed17);
    for (int t = 0; t < 300; ++t) {
        const auto a = random_ids(rng, static_cast<int64_t>(rng.below(40)), 6);
        const auto b = random_ids(rng, static_cast<int64_t>(rng.below(40)), 6);
        const int64_t want = oracle::edit_distance_matrix(a, b);
        CHECK(edit_distance_raw(a, b) == want);
        const double norm = static_cast<double>(want) /
                            static_cast<double>(std::max<size_t>({a.size(), b.size(), size_t{1}}));
        CHECK(edit_distance(a, b) == doctest::Approx(norm));
    }
}

TEST_CASE("unnormalized distance is symmetric, zero iff equal, triangular") {
    Rng rng(0x3a7);
    for (int t = 0; t < 150; ++t) {
        const auto a = random_ids(rng, 3 + static_cast<int64_t>(rng.below(20)), 4);
        const auto b = random_ids(rng, 3 + static_cast<int64_t>(rng.below(20)), 4);
        const auto c = random_ids(rng, 3 + static_cast<int64_t>(rng.below(20)), 4);
        const int64_t ab = edit_distance_raw(a, b);
        const int64_t ba = edit_distance_raw(b, a);
        const int64_t bc = edit_distance_raw(b, c);
        const int64_t ac = edit_distance_raw(a, c);
        CHECK(ab == ba);
        CHECK(ac <= ab + bc);
        CHECK((ab == 0) == (a == b));
    }
}

TEST_CASE("repetition detector on constructed cases") {
    std::vector<int> clean;
    for (int i = 1; i <= 20; ++i) clean.push_back(i);
    CHECK_FALSE(detect_repetition(clean));

    std::vector<int> looped;
    looped = {3, 1}; // non-repeating prefix
    for (int r = 0; r < 4; ++r) looped.insert(looped.end(), {7, 8, 9, 4, 2});
    looped.push_back(11); // suffix
    CHECK(detect_repetition(looped));

    // 3 repeats only: below the threshold
    std::vector<int> three;
    for (int r = 0; r < 3; ++r) three.insert(three.end(), {7, 8, 9, 4, 2});
    CHECK_FALSE(detect_repetition(three));

    // gram of 4: too short
    std::vector<int> shortgram;
    for (int r = 0; r < 6; ++r) shortgram.insert(shortgram.end(), {7, 8, 9, 4});
    CHECK_FALSE(detect_repetition(shortgram, 5, 4));
    CHECK(detect_repetition(shortgram, 4, 4));
}

TEST_CASE("repetition detection ignores non-repeating prefixes and suffixes") {
    Rng rng(0x99);
    std::vector<int> core;
    for (int r = 0; r < 4; ++r) core.insert(core.end(), {5, 6, 7, 8, 9});
    for (int t = 0; t < 30; ++t) {
        std::vector<int> s;
        // prefix/suffix drawn from a disjoint alphabet so they cannot extend the loop
        const auto prefix = random_ids(rng, static_cast<int64_t>(rng.below(10)), 4);
        const auto suffix = random_ids(rng, static_cast<int64_t>(rng.below(10)), 4);
        s.insert(s.end(), prefix.begin(), prefix.end());
        s.insert(s.end(), core.begin(), core.end());
        s.insert(s.end(), suffix.begin(), suffix.end());
        CHECK(detect_repetition(s));
    }
}

TEST_CASE("planted-loop corpus separates cleanly") {
    Rng rng(0x10e);
    int64_t checked = 0;
    for (int t = 0; t < 200; ++t) {
        const bool plant = (t % 2) == 0;
        std::vector<int> s;
        // distinct ascending base sequence cannot repeat any gram
        for (int i = 0; i < 30; ++i) s.push_back(i * 2 + 1);
        if (plant) {
            const int64_t g = 5 + static_cast<int64_t>(rng.below(4));
            const int64_t reps = 4 + static_cast<int64_t>(rng.below(3));
            std::vector<int> gram = random_ids(rng, g, 50);
            gram[0] = 1000 + t; // ensure the gram is not itself constant across cases
            const size_t at = 5 + rng.below(10);
            std::vector<int> block;
            for (int64_t r = 0; r < reps; ++r) block.insert(block.end(), gram.begin(), gram.end());
            s.insert(s.begin() + static_cast<std::ptrdiff_t>(at), block.begin(), block.end());
        }
        CHECK(detect_repetition(s) == plant);
        ++checked;
    }
    CHECK(checked == 200);
}

TEST_CASE("evaluate with an echo stub scores zero everywhere") {
    SynthConfig cfg;
    cfg.rows = 4;
    cfg.cols = 4;
    cfg.vocab = 8;
    cfg.density = 0.6;
    cfg.cell_pixels = 5;
    LayoutMix mix;
    mix.raster = 0.5;
    mix.spiral = 0.5;
    mix.two_column = 0.0;
    mix.table_rowwise = 0.0;
    const Dataset ds = make_dataset(4, mix, 20, cfg);

    const EvalReport rep = evaluate(ds, [](const Sample& s) { return s.target; }, 0xabc);
    CHECK(rep.overall.count == 20);
    CHECK(rep.overall.mean_ed == 0.0);
    CHECK(rep.overall.exact_rate == 1.0);
    CHECK(rep.overall.repetition_rate == 0.0);
    CHECK(rep.config_digest == 0xabc);
}

TEST_CASE("constant stub gets no exact matches on diverse targets") {
    SynthConfig cfg;
    cfg.rows = 4;
    cfg.cols = 4;
    cfg.vocab = 8;
    cfg.density = 0.7;
    cfg.cell_pixels = 5;
    LayoutMix mix;
    const Dataset ds = make_dataset(9, mix, 16, cfg);
    const std::vector<int> fixed = {kBos, 5, 5, 5, kEos};
    const EvalReport rep = evaluate(ds, [&](const Sample&) { return fixed; }, 1);
    CHECK(rep.overall.exact_rate < 0.2);
    CHECK(rep.overall.mean_ed > 0.2);
}

TEST_CASE("a throwing transcriber marks errors without aborting") {
    SynthConfig cfg;
    cfg.rows = 3;
    cfg.cols = 3;
    cfg.vocab = 4;
    cfg.density = 1.0;
    cfg.cell_pixels = 5;
    LayoutMix mix;
    const Dataset ds = make_dataset(2, mix, 6, cfg);
    int64_t called = 0;
    const EvalReport rep = evaluate(
        ds,
        [&](const Sample& s) -> std::vector<int> {
            if (++called % 2 == 0) throw ValueError("boom");
            return s.target;
        },
        0);
    CHECK(rep.overall.count == 6);
    int64_t errors = 0;
    for (const auto& r : rep.samples) errors += r.error;
    CHECK(errors == 3);
    // errored samples score as total misses
    for (const auto& r : rep.samples)
        if (r.error) CHECK(r.ed == 1.0);
    CHECK(rep.overall.mean_ed == doctest::Approx(0.5));
}

TEST_CASE("aggregates equal recomputation from per-sample records") {
    SynthConfig cfg;
    cfg.rows = 4;
    cfg.cols = 5;
    cfg.vocab = 6;
    cfg.density = 0.5;
    cfg.cell_pixels = 5;
    LayoutMix mix;
    mix.raster = 0.25;
    mix.two_column = 0.25;
    mix.spiral = 0.25;
    mix.table_rowwise = 0.25;
    const Dataset ds = make_dataset(12, mix, 40, cfg);
    // half-wrong stub: drop the last two glyphs
    const EvalReport rep = evaluate(
        ds,
        [](const Sample& s) {
            if (s.target.size() < 4) return s.target;
            std::vector<int> out(s.target.begin(), s.target.end() - 3);
            out.push_back(kEos);
            return out;
        },
        7);

    double ed_sum = 0.0;
    int64_t exact = 0;
    for (const auto& r : rep.samples) {
        ed_sum += r.ed;
        exact += r.exact;
    }
    CHECK(rep.overall.mean_ed == doctest::Approx(ed_sum / 40.0));
    CHECK(rep.overall.exact_rate == doctest::Approx(static_cast<double>(exact) / 40.0));
    int64_t layout_total = 0;
    for (int k = 0; k < 4; ++k) layout_total += rep.per_layout[k].count;
    CHECK(layout_total == 40);

    // report text carries one line per sample plus the aggregate block
    const std::string text = rep.to_text();
    CHECK(std::count(text.begin(), text.end(), '\n') >= 44);
    CHECK(text.find("config_digest") != std::string::npos);
}

TEST_CASE("content extraction strips the frame") {
    const std::vector<int> framed = {kBos, 5, 6, 7, kEos, 9, 9};
    CHECK(content_of(framed) == std::vector<int>{5, 6, 7});
    const std::vector<int> bare = {5, 6, 7};
    CHECK(content_of(bare) == std::vector<int>{5, 6, 7});
    const std::vector<int> empty;
    CHECK(content_of(empty).empty());
}
