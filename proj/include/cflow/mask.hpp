#pragma once

#include <cstdint>
#include <utility>

#include "cflow/tensor.hpp"

namespace cflow {

// Attention layout for a sequence of m visual tokens followed by n query
// tokens: visual rows see every visual column and no query column; query row
// t sees every visual column plus query columns up to itself.
struct DualStreamMask {
    int64_t m = 0;
    int64_t n = 0;

    DualStreamMask(int64_t m_, int64_t n_) : m(m_), n(n_) {
        if (m < 1 || n < 1) throw ShapeError("DualStreamMask: both stream lengths must be >= 1");
    }

    int64_t seq() const { return m + n; }
};

inline bool allows(const DualStreamMask& mask, int64_t i, int64_t j) {
    if (i < 0 || j < 0 || i >= mask.seq() || j >= mask.seq())
        throw ShapeError("allows: index outside mask");
    if (i < mask.m) return j < mask.m;
    return j < mask.m || j <= i;
}

BoolMatrix materialize(const DualStreamMask& mask);

// Plain lower-triangular mask (row i sees columns <= i), decoder side.
BoolMatrix causal_mask(int64_t n);

// Operation accounting: one score evaluation = one q.k dot product actually
// computed. The block kernel never evaluates masked pairs, the dense kernel
// evaluates all of them.
struct AttentionStats {
    int64_t score_evals = 0;
};

// softmax(scale * q k^T restricted to mask) v over the full (m+n) sequence.
template <typename T>
Tensor<T> masked_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                           const DualStreamMask& mask, T scale, AttentionStats* stats = nullptr);

// Same result computed in structured pieces: a dense m x m visual block and
// one ragged row per query over [visual keys, query keys <= own index].
template <typename T>
std::pair<Tensor<T>, Tensor<T>> block_attention(const Tensor<T>& visual_q, const Tensor<T>& visual_k,
                                                const Tensor<T>& visual_v, const Tensor<T>& query_q,
                                                const Tensor<T>& query_k, const Tensor<T>& query_v,
                                                T scale, AttentionStats* stats = nullptr);

} // namespace cflow
