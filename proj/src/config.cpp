#include "cflow/config.hpp"

#include <cstdio>
#include <cstdlib>
#include <vector>

#include "cflow/serialize.hpp"

namespace cflow {

namespace {

enum class KeyType { integer, real, text };

struct KeySpec {
    const char* name;
    KeyType type;
    const char* preset;
};

// one schema row per knob; presets are the toy-experiment defaults
const std::vector<KeySpec>& schema() {
    static const std::vector<KeySpec> rows = {
        {"seed", KeyType::integer, "1"},
        {"out", KeyType::text, "out"},

        {"data.count", KeyType::integer, "4000"},
        {"data.eval_count", KeyType::integer, "200"},
        {"data.rows", KeyType::integer, "8"},
        {"data.cols", KeyType::integer, "8"},
        {"data.vocab", KeyType::integer, "32"},
        {"data.density", KeyType::real, "0.5"},
        {"data.cell_pixels", KeyType::integer, "11"},
        {"data.mix_raster", KeyType::real, "0.4"},
        {"data.mix_two_column", KeyType::real, "0.3"},
        {"data.mix_spiral", KeyType::real, "0.3"},
        {"data.mix_table", KeyType::real, "0.0"},

        {"tok.patch", KeyType::integer, "8"},
        {"tok.stages", KeyType::integer, "2"},

        {"model.d", KeyType::integer, "64"},
        {"model.heads", KeyType::integer, "4"},
        {"model.ffn_mult", KeyType::integer, "4"},
        {"model.enc_layers", KeyType::integer, "2"},
        {"model.dec_layers", KeyType::integer, "2"},
        {"model.light_dec_layers", KeyType::integer, "2"},
        {"model.enc_max_seq", KeyType::integer, "64"},
        {"model.dec_max_seq", KeyType::integer, "256"},
        {"model.max_text_len", KeyType::integer, "128"},

        {"planner.global_canvas", KeyType::integer, "128"},
        {"planner.local_canvas", KeyType::integer, "96"},
        {"planner.k_max", KeyType::integer, "6"},

        {"train.stage1_steps", KeyType::integer, "2000"},
        {"train.stage2_steps", KeyType::integer, "1000"},
        {"train.stage3_steps", KeyType::integer, "1000"},
        {"train.batch", KeyType::integer, "16"},
        {"train.peak_lr", KeyType::real, "0.0015"},
        {"train.floor_lr", KeyType::real, "1e-05"},
        {"train.weight_decay", KeyType::real, "0.0"},
        {"train.clip", KeyType::real, "1.0"},
        {"train.save_every", KeyType::integer, "0"},

        {"eval.max_new_tokens", KeyType::integer, "80"},
    };
    return rows;
}

const KeySpec* find_spec(const std::string& key) {
    for (const auto& spec : schema())
        if (key == spec.name) return &spec;
    return nullptr;
}

std::string canonical(const KeySpec& spec, const std::string& raw) {
    char buf[64];
    switch (spec.type) {
        case KeyType::integer: {
            char* end = nullptr;
            const long long v = std::strtoll(raw.c_str(), &end, 10);
            if (end == raw.c_str() || *end != '\0')
                throw ConfigError(std::string("config: ") + spec.name + " wants an integer, got '" + raw + "'");
            std::snprintf(buf, sizeof(buf), "%lld", v);
            return buf;
        }
        case KeyType::real: {
            char* end = nullptr;
            const double v = std::strtod(raw.c_str(), &end);
            if (end == raw.c_str() || *end != '\0')
                throw ConfigError(std::string("config: ") + spec.name + " wants a number, got '" + raw + "'");
            std::snprintf(buf, sizeof(buf), "%.17g", v);
            return buf;
        }
        case KeyType::text:
            return raw;
    }
    return raw;
}

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

} // namespace

RunConfig::RunConfig() {
    for (const auto& spec : schema()) values_[spec.name] = canonical(spec, spec.preset);
}

RunConfig RunConfig::from_text(const std::string& text) {
    RunConfig cfg;
    std::vector<std::string> seen;
    size_t start = 0;
    int lineno = 0;
    while (start <= text.size()) {
        size_t end = text.find('\n', start);
        if (end == std::string::npos) end = text.size();
        std::string line = trim(text.substr(start, end - start));
        start = end + 1;
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        for (const auto& s : seen)
            if (s == key) throw ConfigError("config: duplicate key '" + key + "'");
        seen.push_back(key);
        cfg.set(key, value);
    }
    return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) { return from_text(read_file_text(path)); }

void RunConfig::set(const std::string& key, const std::string& value) {
    const KeySpec* spec = find_spec(key);
    if (!spec) throw ConfigError("config: unknown key '" + key + "'");
    values_[key] = canonical(*spec, value);
}

int64_t RunConfig::i(const std::string& key) const {
    const KeySpec* spec = find_spec(key);
    if (!spec || spec->type != KeyType::integer) throw ConfigError("config: no integer key '" + key + "'");
    return std::strtoll(values_.at(key).c_str(), nullptr, 10);
}

double RunConfig::r(const std::string& key) const {
    const KeySpec* spec = find_spec(key);
    if (!spec || spec->type != KeyType::real) throw ConfigError("config: no real key '" + key + "'");
    return std::strtod(values_.at(key).c_str(), nullptr);
}

const std::string& RunConfig::s(const std::string& key) const {
    const KeySpec* spec = find_spec(key);
    if (!spec || spec->type != KeyType::text) throw ConfigError("config: no text key '" + key + "'");
    return values_.at(key);
}

std::string RunConfig::canonical_text() const {
    std::string out;
    for (const auto& [k, v] : values_) { // std::map iterates sorted
        out += k;
        out += '=';
        out += v;
        out += '\n';
    }
    return out;
}

uint64_t RunConfig::digest() const { return fnv1a64(canonical_text()); }

TokenizerConfig RunConfig::tokenizer_config() const {
    TokenizerConfig t;
    t.patch = i("tok.patch");
    t.downsample_stages = i("tok.stages");
    t.d_out = i("model.d");
    t.channels = 1;
    return t;
}

EncoderConfig RunConfig::encoder_config() const {
    EncoderConfig e;
    e.layers = i("model.enc_layers");
    e.heads = i("model.heads");
    e.d = i("model.d");
    e.ffn_mult = i("model.ffn_mult");
    e.max_seq = i("model.enc_max_seq");
    e.validate();
    return e;
}

DecoderConfig RunConfig::decoder_config() const {
    DecoderConfig d;
    d.layers = i("model.dec_layers");
    d.heads = i("model.heads");
    d.d = i("model.d");
    d.ffn_mult = i("model.ffn_mult");
    d.vocab_size = i("data.vocab") + 1 + kGlyphOffset; // pad/bos/eos + glyphs
    d.max_text_len = i("model.max_text_len");
    d.max_seq = i("model.dec_max_seq");
    d.bos = kBos;
    d.eos = kEos;
    d.pad = kPad;
    d.validate();
    return d;
}

PlannerConfig RunConfig::planner_config() const {
    PlannerConfig p;
    p.global_h = p.global_w = i("planner.global_canvas");
    p.local_h = p.local_w = i("planner.local_canvas");
    p.k_max = i("planner.k_max");
    const TokenizerConfig tok = tokenizer_config();
    p.n_g = token_count(p.global_h, p.global_w, tok);
    p.n_l = token_count(p.local_h, p.local_w, tok);
    p.validate(tok);
    return p;
}

SynthConfig RunConfig::synth_config() const {
    SynthConfig s;
    s.rows = i("data.rows");
    s.cols = i("data.cols");
    s.vocab = i("data.vocab");
    s.density = r("data.density");
    s.cell_pixels = i("data.cell_pixels");
    return s;
}

LayoutMix RunConfig::layout_mix() const {
    LayoutMix m;
    m.raster = r("data.mix_raster");
    m.two_column = r("data.mix_two_column");
    m.spiral = r("data.mix_spiral");
    m.table_rowwise = r("data.mix_table");
    return m;
}

} // namespace cflow
