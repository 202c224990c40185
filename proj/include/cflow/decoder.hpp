#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cflow/transformer.hpp"

namespace cflow {

struct DecoderConfig {
    int64_t layers = 2;
    int64_t heads = 4;
    int64_t d = 64;
    int64_t ffn_mult = 4;
    int64_t vocab_size = 32;
    int64_t max_text_len = 256;
    int64_t max_seq = 512; // flow prefix + text
    int bos = 1;
    int eos = 2;
    int pad = 0;

    void validate() const {
        if (layers < 0 || heads < 1 || d < 1 || ffn_mult < 1) throw ConfigError("decoder: nonsensical dimensions");
        if (d % heads != 0) throw ConfigError("decoder: d must divide by heads");
        if (vocab_size < 4) throw ConfigError("decoder: vocabulary must hold specials plus content");
        if (bos == eos || bos == pad || eos == pad) throw ConfigError("decoder: special ids must be distinct");
        if (bos < 0 || eos < 0 || pad < 0 || bos >= vocab_size || eos >= vocab_size || pad >= vocab_size)
            throw ConfigError("decoder: special ids outside vocabulary");
    }
};

struct GenerationSettings {
    int64_t max_new_tokens = 64;
    // greedy only; argmax ties resolve to the lowest id
};

template <typename T>
struct DecoderParams {
    Parameter<T> embed;
    Parameter<T> pos;
    Linear<T> in_proj; // only applied when encoder width differs from d
    bool has_in_proj = false;
    std::vector<TransformerBlock<T>> blocks;
    Parameter<T> final_gain;
    Linear<T> head; // untied output projection

    DecoderParams() = default;
    DecoderParams(const DecoderConfig& cfg, int64_t flow_width, Rng& rng, const std::string& prefix = "decoder") {
        cfg.validate();
        // embeddings and positions start at amplitudes comparable to the flow
        // rows, so history and prefix addresses are usable from step one
        embed = Parameter<T>(prefix + ".embed", ParamGroup::decoder,
                             Tensor<T>::gaussian({cfg.vocab_size, cfg.d}, rng, T(0.2)));
        pos = Parameter<T>(prefix + ".pos", ParamGroup::decoder,
                           Tensor<T>::gaussian({cfg.max_seq, cfg.d}, rng, T(0.2)));
        if (flow_width != cfg.d) {
            in_proj = Linear<T>(prefix + ".in_proj", ParamGroup::decoder, flow_width, cfg.d, rng);
            has_in_proj = true;
        }
        for (int64_t l = 0; l < cfg.layers; ++l)
            blocks.emplace_back(prefix + ".block" + std::to_string(l), ParamGroup::decoder, cfg.d,
                                cfg.heads, cfg.ffn_mult, rng);
        final_gain = Parameter<T>(prefix + ".final_gain", ParamGroup::decoder, Tensor<T>::full({cfg.d}, T(1)));
        // small scale so fresh logits start near uniform
        head = Linear<T>(prefix + ".head", ParamGroup::decoder, cfg.d, cfg.vocab_size, rng, T(0.02));
    }

    void collect(std::vector<Parameter<T>*>& out) {
        out.push_back(&embed);
        out.push_back(&pos);
        if (has_in_proj) in_proj.collect(out);
        for (auto& b : blocks) b.collect(out);
        out.push_back(&final_gain);
        head.collect(out);
    }
};

// Full-sequence logits for [flow tokens, embedded input ids] under a plain
// causal mask. Shared by training and generation.
template <typename T>
typename Tape<T>::Id decoder_logits(Tape<T>& tape, typename Tape<T>::Id flow,
                                    std::span<const int> input_ids, const DecoderConfig& cfg,
                                    DecoderParams<T>& params) {
    auto prefix = flow;
    if (params.has_in_proj) prefix = params.in_proj.apply(tape, prefix);
    if (tape.value(prefix).cols() != cfg.d) throw ConfigError("decoder: flow width != d and no projection");
    const int64_t q = tape.value(prefix).rows();
    typename Tape<T>::Id x;
    if (input_ids.empty()) {
        x = prefix;
    } else {
        auto text = tape.embedding(tape.param(params.embed), input_ids);
        x = tape.concat_rows({prefix, text});
    }
    const int64_t s = q + static_cast<int64_t>(input_ids.size());
    if (s > cfg.max_seq) throw ShapeError("decoder: sequence exceeds max_seq");
    x = tape.add(x, tape.slice_rows(tape.param(params.pos), 0, s));
    const BoolMatrix allowed = causal_mask(s);
    for (auto& block : params.blocks) x = block.apply(tape, x, allowed);
    x = tape.rms_norm(x, tape.param(params.final_gain), params.blocks.empty() ? T(1e-6) : params.blocks[0].eps);
    return params.head.apply(tape, x);
}

// Teacher-forced loss. text = [bos, content..., eos]; inputs are text[0..t-2]
// and each text position predicts the next id. Flow rows predict nothing.
template <typename T>
typename Tape<T>::Id decode_train(Tape<T>& tape, typename Tape<T>::Id flow,
                                  std::span<const int> text, const DecoderConfig& cfg,
                                  DecoderParams<T>& params) {
    const int64_t t = static_cast<int64_t>(text.size());
    if (t < 2) throw ValueError("decode_train: need at least one transition to predict");
    if (t > cfg.max_text_len) throw ShapeError("decode_train: text exceeds max_text_len");
    const int64_t q = tape.value(flow).rows();
    auto logits = decoder_logits(tape, flow, text.subspan(0, static_cast<size_t>(t - 1)), cfg, params);
    const int ignore = -1;
    std::vector<int> targets(static_cast<size_t>(q), ignore);
    for (int64_t i = 1; i < t; ++i) targets.push_back(text[static_cast<size_t>(i)]);
    return tape.cross_entropy(logits, targets, ignore);
}

// Greedy continuation of the prompt until eos or the budget runs out.
// Returned ids include the prompt.
template <typename T>
std::vector<int> generate(const Tensor<T>& flow, std::span<const int> prompt,
                          const GenerationSettings& settings, const DecoderConfig& cfg,
                          DecoderParams<T>& params) {
    if (prompt.empty()) throw ValueError("generate: prompt must hold at least bos");
    if (settings.max_new_tokens < 1) throw ValueError("generate: max_new_tokens must be >= 1");
    std::vector<int> ids(prompt.begin(), prompt.end());
    for (int64_t step = 0; step < settings.max_new_tokens; ++step) {
        Tape<T> tape;
        auto logits = decoder_logits(tape, tape.constant(flow), ids, cfg, params);
        const Tensor<T>& lv = tape.value(logits);
        const int64_t last = lv.rows() - 1;
        int best = 0;
        T bestv = lv.at(last, 0);
        for (int64_t j = 1; j < cfg.vocab_size; ++j)
            if (lv.at(last, j) > bestv) {
                bestv = lv.at(last, j);
                best = static_cast<int>(j);
            }
        ids.push_back(best);
        if (best == cfg.eos) break;
    }
    return ids;
}

} // namespace cflow
