#pragma once

#include <cstdint>
#include <vector>

#include "cflow/transformer.hpp"

namespace cflow {

enum class ViewKind : uint8_t { global = 0, local = 1 };

struct EncoderConfig {
    int64_t layers = 2;
    int64_t heads = 4;
    int64_t d = 64;
    int64_t ffn_mult = 4;
    int64_t max_seq = 128;

    void validate() const {
        if (layers < 0 || heads < 1 || d < 1 || ffn_mult < 1 || max_seq < 2)
            throw ConfigError("encoder: nonsensical dimensions");
        if (d % heads != 0) throw ConfigError("encoder: d must divide by heads");
    }
};

// One learnable query set per view size; all local views share one set.
template <typename T>
struct QueryBank {
    Parameter<T> query_global;
    Parameter<T> query_local;

    QueryBank() = default;
    QueryBank(int64_t n_global, int64_t n_local, int64_t d, Rng& rng)
        : query_global("queries.global", ParamGroup::queries,
                       Tensor<T>::gaussian({n_global, d}, rng, T(0.02))),
          query_local("queries.local", ParamGroup::queries,
                      Tensor<T>::gaussian({n_local, d}, rng, T(0.02))) {}

    Parameter<T>& for_kind(ViewKind kind) {
        return kind == ViewKind::global ? query_global : query_local;
    }

    void collect(std::vector<Parameter<T>*>& out) {
        out.push_back(&query_global);
        out.push_back(&query_local);
    }
};

// Encoder outputs detached from any tape, tagged with their view identity so
// assembly can order them.
template <typename T>
struct FlowTokens {
    Tensor<T> values;
    ViewKind kind = ViewKind::global;
    int64_t view_index = 0; // row-major crop position; globals use -1 by convention
};

template <typename T>
struct EncoderParams {
    Parameter<T> pos;
    std::vector<TransformerBlock<T>> blocks;

    EncoderParams() = default;
    EncoderParams(const EncoderConfig& cfg, Rng& rng) {
        cfg.validate();
        pos = Parameter<T>("encoder.pos", ParamGroup::encoder,
                           Tensor<T>::gaussian({cfg.max_seq, cfg.d}, rng, T(0.02)));
        for (int64_t l = 0; l < cfg.layers; ++l)
            blocks.emplace_back("encoder.block" + std::to_string(l), ParamGroup::encoder, cfg.d,
                                cfg.heads, cfg.ffn_mult, rng);
    }

    void collect(std::vector<Parameter<T>*>& out) {
        out.push_back(&pos);
        for (auto& b : blocks) b.collect(out);
    }
};

// [visual tokens, queries for this view kind] through the layer stack under
// the dual-stream mask; returns only the last n rows (the flow tokens).
template <typename T>
typename Tape<T>::Id encode_view(Tape<T>& tape, typename Tape<T>::Id visual, QueryBank<T>& bank,
                                 ViewKind kind, const EncoderConfig& cfg, EncoderParams<T>& params) {
    const int64_t m = tape.value(visual).rows();
    const int64_t n = bank.for_kind(kind).value.rows();
    if (m != n)
        throw ConfigError("encode_view: " + std::to_string(m) + " visual tokens vs " +
                          std::to_string(n) + " queries; streams must have equal cardinality");
    if (m + n > cfg.max_seq) throw ConfigError("encode_view: sequence exceeds max_seq");
    if (tape.value(visual).cols() != cfg.d) throw ConfigError("encode_view: visual width != d");
    auto x = tape.concat_rows({visual, tape.param(bank.for_kind(kind))});
    x = tape.add(x, tape.slice_rows(tape.param(params.pos), 0, m + n));
    const BoolMatrix allowed = materialize(DualStreamMask(m, n));
    for (auto& block : params.blocks) x = block.apply(tape, x, allowed);
    return tape.slice_rows(x, m, m + n);
}

// Ablation baseline: no query stream at all. The visual tokens run through
// the same stack fully bidirectionally and ALL of them come out, so the
// decoder sees tokens in tokenizer raster order with an identical budget.
template <typename T>
typename Tape<T>::Id encode_passthrough(Tape<T>& tape, typename Tape<T>::Id visual,
                                        const EncoderConfig& cfg, EncoderParams<T>& params) {
    const int64_t m = tape.value(visual).rows();
    if (m > cfg.max_seq) throw ConfigError("encode_passthrough: sequence exceeds max_seq");
    if (tape.value(visual).cols() != cfg.d) throw ConfigError("encode_passthrough: visual width != d");
    auto x = tape.add(visual, tape.slice_rows(tape.param(params.pos), 0, m));
    BoolMatrix allowed(m, m, 1);
    for (auto& block : params.blocks) x = block.apply(tape, x, allowed);
    return x;
}

// Detached convenience wrapper for evaluation paths.
template <typename T>
FlowTokens<T> encode_view_values(const Tensor<T>& visual, QueryBank<T>& bank, ViewKind kind,
                                 const EncoderConfig& cfg, EncoderParams<T>& params,
                                 int64_t view_index) {
    Tape<T> tape;
    auto out = encode_view(tape, tape.constant(visual), bank, kind, cfg, params);
    return FlowTokens<T>{tape.value(out), kind, view_index};
}

// Decoder-facing order: locals by crop position, then the global view.
template <typename T>
Tensor<T> assemble_sequence(const FlowTokens<T>& global, const std::vector<FlowTokens<T>>& locals) {
    if (global.kind != ViewKind::global) throw ConfigError("assemble_sequence: first argument must be the global view");
    std::vector<int64_t> seen;
    int64_t total = 0;
    for (const auto& l : locals) {
        if (l.kind != ViewKind::local) throw ConfigError("assemble_sequence: locals list holds a non-local view");
        for (int64_t s : seen)
            if (s == l.view_index) throw ConfigError("assemble_sequence: duplicate view index");
        seen.push_back(l.view_index);
        total += l.values.rows();
    }
    for (size_t i = 1; i < seen.size(); ++i)
        if (seen[i] < seen[i - 1]) throw ConfigError("assemble_sequence: locals must arrive in crop order");
    const int64_t d = global.values.cols();
    Tensor<T> out = Tensor<T>::zeros({total + global.values.rows(), d});
    int64_t off = 0;
    for (const auto& l : locals) {
        std::copy_n(l.values.data.data(), l.values.numel(), out.data.data() + off * d);
        off += l.values.rows();
    }
    std::copy_n(global.values.data.data(), global.values.numel(), out.data.data() + off * d);
    return out;
}

} // namespace cflow
