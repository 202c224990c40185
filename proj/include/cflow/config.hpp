#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "cflow/decoder.hpp"
#include "cflow/encoder.hpp"
#include "cflow/planner.hpp"
#include "cflow/synth.hpp"

namespace cflow {

// Flat key=value run configuration. Every key has a schema entry; unknown or
// duplicate keys are rejected at parse time, values are re-serialized
// canonically so the digest is stable across equivalent spellings.
class RunConfig {
public:
    RunConfig(); // all defaults

    static RunConfig from_file(const std::string& path);
    static RunConfig from_text(const std::string& text);

    void set(const std::string& key, const std::string& value);

    int64_t i(const std::string& key) const;
    double r(const std::string& key) const;
    const std::string& s(const std::string& key) const;

    std::string canonical_text() const; // sorted key=value lines
    uint64_t digest() const;

    // derived module configs
    TokenizerConfig tokenizer_config() const;
    EncoderConfig encoder_config() const;
    DecoderConfig decoder_config() const;
    PlannerConfig planner_config() const;
    SynthConfig synth_config() const;
    LayoutMix layout_mix() const;

private:
    std::map<std::string, std::string> values_;
};

} // namespace cflow
