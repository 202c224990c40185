#include "cflow/metrics.hpp"

#include <algorithm>
#include <sstream>

namespace cflow {

int64_t edit_distance_raw(std::span<const int> a, std::span<const int> b) {
    const size_t la = a.size(), lb = b.size();
    // two-row dynamic program
    std::vector<int64_t> prev(lb + 1), cur(lb + 1);
    for (size_t j = 0; j <= lb; ++j) prev[j] = static_cast<int64_t>(j);
    for (size_t i = 1; i <= la; ++i) {
        cur[0] = static_cast<int64_t>(i);
        for (size_t j = 1; j <= lb; ++j) {
            const int64_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[lb];
}

double edit_distance(std::span<const int> a, std::span<const int> b) {
    const auto denom = std::max<int64_t>({static_cast<int64_t>(a.size()), static_cast<int64_t>(b.size()), 1});
    return static_cast<double>(edit_distance_raw(a, b)) / static_cast<double>(denom);
}

bool detect_repetition(std::span<const int> s, int64_t min_gram, int64_t min_repeats) {
    const int64_t len = static_cast<int64_t>(s.size());
    if (min_gram < 1 || min_repeats < 2) throw ConfigError("detect_repetition: degenerate thresholds");
    for (int64_t g = min_gram; g * min_repeats <= len; ++g) {
        for (int64_t start = 0; start + g * min_repeats <= len; ++start) {
            bool all = true;
            for (int64_t rep = 1; rep < min_repeats && all; ++rep)
                for (int64_t i = 0; i < g; ++i)
                    if (s[static_cast<size_t>(start + i)] != s[static_cast<size_t>(start + rep * g + i)]) {
                        all = false;
                        break;
                    }
            if (all) return true;
        }
    }
    return false;
}

std::vector<int> content_of(std::span<const int> ids) {
    std::vector<int> out;
    size_t begin = 0;
    if (!ids.empty() && ids[0] == kBos) begin = 1;
    for (size_t i = begin; i < ids.size(); ++i) {
        if (ids[i] == kEos) break;
        out.push_back(ids[i]);
    }
    return out;
}

void finalize(EvalReport& report) {
    report.overall = LayoutAggregate{};
    for (auto& agg : report.per_layout) agg = LayoutAggregate{};
    for (const auto& s : report.samples) {
        auto& lay = report.per_layout[static_cast<int>(s.layout)];
        for (LayoutAggregate* agg : {&report.overall, &lay}) {
            agg->count += 1;
            agg->mean_ed += s.ed;
            agg->exact_rate += s.exact ? 1.0 : 0.0;
            agg->repetition_rate += s.repeated ? 1.0 : 0.0;
        }
    }
    for (LayoutAggregate* agg : {&report.overall, &report.per_layout[0], &report.per_layout[1],
                                 &report.per_layout[2], &report.per_layout[3]}) {
        if (agg->count == 0) continue;
        agg->mean_ed /= static_cast<double>(agg->count);
        agg->exact_rate /= static_cast<double>(agg->count);
        agg->repetition_rate /= static_cast<double>(agg->count);
    }
}

EvalReport evaluate(const Dataset& ds,
                    const std::function<std::vector<int>(const Sample&)>& transcribe,
                    uint64_t config_digest) {
    if (ds.samples.empty()) throw ValueError("evaluate: empty dataset");
    EvalReport report;
    report.config_digest = config_digest;
    for (size_t i = 0; i < ds.samples.size(); ++i) {
        const Sample& sample = ds.samples[i];
        SampleEval se;
        se.index = static_cast<int64_t>(i);
        se.layout = sample.grid.layout;
        const std::vector<int> want = content_of(sample.target);
        std::vector<int> got;
        try {
            got = content_of(transcribe(sample));
        } catch (const std::exception&) {
            se.error = true;
        }
        if (se.error) {
            se.ed = 1.0;
            se.exact = false;
            se.repeated = false;
        } else {
            se.ed = edit_distance(got, want);
            se.exact = got == want;
            se.repeated = detect_repetition(got);
        }
        report.samples.push_back(se);
    }
    finalize(report);
    return report;
}

namespace {

void agg_line(std::ostringstream& out, const char* label, const LayoutAggregate& a) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%s count=%lld mean_ed=%.6f exact_match=%.6f repetition=%.6f\n",
                  label, static_cast<long long>(a.count), a.mean_ed, a.exact_rate, a.repetition_rate);
    out << buf;
}

} // namespace

std::string EvalReport::to_text() const {
    std::ostringstream out;
    char buf[160];
    for (const auto& s : samples) {
        std::snprintf(buf, sizeof(buf), "sample=%lld layout=%s ed=%.6f exact=%d repeated=%d error=%d\n",
                      static_cast<long long>(s.index), layout_name(s.layout), s.ed, s.exact ? 1 : 0,
                      s.repeated ? 1 : 0, s.error ? 1 : 0);
        out << buf;
    }
    agg_line(out, "aggregate", overall);
    for (int i = 0; i < 4; ++i)
        if (per_layout[i].count > 0) agg_line(out, layout_name(static_cast<LayoutKind>(i)), per_layout[i]);
    std::snprintf(buf, sizeof(buf), "config_digest=%016llx\n", static_cast<unsigned long long>(config_digest));
    out << buf;
    return out.str();
}

} // namespace cflow
