#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "cflow/autodiff.hpp"
#include "cflow/mask.hpp"

namespace cflow {

// Multi-head attention over one sequence, heads looped over the single-head
// primitive: per head slice columns, score against the allowed matrix, and
// stitch the head outputs back together. Masked weights are exact zeros, so
// disallowed value rows never contribute (the zero-weight rows are skipped
// in the product).
template <typename T>
typename Tape<T>::Id multi_head_attention(Tape<T>& tape, typename Tape<T>::Id x,
                                          const BoolMatrix& allowed, int64_t heads,
                                          Linear<T>& wq, Linear<T>& wk, Linear<T>& wv, Linear<T>& wo) {
    const int64_t d = tape.value(x).cols();
    if (d % heads != 0) throw ConfigError("attention: width must divide by head count");
    const int64_t dh = d / heads;
    auto q = wq.apply(tape, x);
    auto k = wk.apply(tape, x);
    auto v = wv.apply(tape, x);
    const T scale = T(1) / static_cast<T>(std::sqrt(static_cast<double>(dh)));
    std::vector<typename Tape<T>::Id> outs;
    outs.reserve(static_cast<size_t>(heads));
    for (int64_t h = 0; h < heads; ++h) {
        auto qh = tape.slice_cols(q, h * dh, (h + 1) * dh);
        auto kh = tape.slice_cols(k, h * dh, (h + 1) * dh);
        auto vh = tape.slice_cols(v, h * dh, (h + 1) * dh);
        auto scores = tape.scale(tape.matmul_nt(qh, kh), scale);
        auto w = tape.masked_softmax(scores, allowed);
        outs.push_back(tape.matmul(w, vh));
    }
    return wo.apply(tape, tape.concat_cols(outs));
}

// Pre-norm residual block: x + attn(rms(x)), then + gated_ffn(rms(.)).
template <typename T>
struct TransformerBlock {
    Parameter<T> attn_gain;
    Linear<T> wq, wk, wv, wo;
    Parameter<T> ffn_gain;
    Linear<T> wg, wu, wd;
    int64_t heads = 1;
    T eps = T(1e-6);

    TransformerBlock() = default;
    TransformerBlock(const std::string& name, ParamGroup group, int64_t d, int64_t heads_,
                     int64_t ffn_mult, Rng& rng)
        : attn_gain(name + ".attn_gain", group, Tensor<T>::full({d}, T(1))),
          wq(name + ".wq", group, d, d, rng),
          wk(name + ".wk", group, d, d, rng),
          wv(name + ".wv", group, d, d, rng),
          wo(name + ".wo", group, d, d, rng),
          ffn_gain(name + ".ffn_gain", group, Tensor<T>::full({d}, T(1))),
          wg(name + ".wg", group, d, d * ffn_mult, rng),
          wu(name + ".wu", group, d, d * ffn_mult, rng),
          wd(name + ".wd", group, d * ffn_mult, d, rng),
          heads(heads_) {}

    typename Tape<T>::Id apply(Tape<T>& tape, typename Tape<T>::Id x, const BoolMatrix& allowed) {
        auto normed = tape.rms_norm(x, tape.param(attn_gain), eps);
        auto attended = multi_head_attention(tape, normed, allowed, heads, wq, wk, wv, wo);
        auto h = tape.add(x, attended);
        auto normed2 = tape.rms_norm(h, tape.param(ffn_gain), eps);
        auto gated = tape.mul(tape.silu(wg.apply(tape, normed2)), wu.apply(tape, normed2));
        return tape.add(h, wd.apply(tape, gated));
    }

    void collect(std::vector<Parameter<T>*>& out) {
        out.push_back(&attn_gain);
        wq.collect(out);
        wk.collect(out);
        wv.collect(out);
        wo.collect(out);
        out.push_back(&ffn_gain);
        wg.collect(out);
        wu.collect(out);
        wd.collect(out);
    }
};

} // namespace cflow
