#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cflow/synth.hpp"

namespace cflow {

// Levenshtein distance over max(len, len, 1); 0 iff equal, 1 for fully
// disjoint same-length sequences.
double edit_distance(std::span<const int> a, std::span<const int> b);
int64_t edit_distance_raw(std::span<const int> a, std::span<const int> b);

// True iff some contiguous block of length >= min_gram occurs >= min_repeats
// times back to back. Targets degenerate generation loops.
bool detect_repetition(std::span<const int> s, int64_t min_gram = 5, int64_t min_repeats = 4);

struct SampleEval {
    int64_t index = 0;
    LayoutKind layout = LayoutKind::raster;
    double ed = 0.0;
    bool exact = false;
    bool repeated = false;
    bool error = false;
};

struct LayoutAggregate {
    int64_t count = 0;
    double mean_ed = 0.0;
    double exact_rate = 0.0;
    double repetition_rate = 0.0;
};

struct EvalReport {
    std::vector<SampleEval> samples;
    LayoutAggregate overall;
    LayoutAggregate per_layout[4];
    uint64_t config_digest = 0;

    std::string to_text() const;
};

// Aggregates recomputed from the per-sample records, nothing cached.
void finalize(EvalReport& report);

// transcribe returns the decoded ids for one sample (bos..eos framing like
// targets); a throw inside it marks that sample as an error (scored ed=1)
// without aborting the run. Content compared between bos and eos.
EvalReport evaluate(const Dataset& ds,
                    const std::function<std::vector<int>(const Sample&)>& transcribe,
                    uint64_t config_digest);

// Strips the frame: ids between a leading bos (if any) and the first eos.
std::vector<int> content_of(std::span<const int> ids);

} // namespace cflow
