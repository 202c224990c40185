#include "cflow/mask.hpp"

#include <cmath>

namespace cflow {

BoolMatrix materialize(const DualStreamMask& mask) {
    const int64_t s = mask.seq();
    BoolMatrix out(s, s);
    for (int64_t i = 0; i < s; ++i)
        for (int64_t j = 0; j < s; ++j)
            if (allows(mask, i, j)) out.set(i, j, 1);
    return out;
}

BoolMatrix causal_mask(int64_t n) {
    if (n < 1) throw ShapeError("causal_mask: length must be >= 1");
    BoolMatrix out(n, n);
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j <= i; ++j) out.set(i, j, 1);
    return out;
}

namespace {

template <typename T>
void check_qkv(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, int64_t rows,
               const char* what) {
    if (q.rows() != rows || !q.same_shape(k) || !q.same_shape(v))
        throw ShapeError(std::string(what) + ": q/k/v must share shape [rows x d_h]");
}

// One output row as a convex combination of key rows with explicit weights.
template <typename T>
void weighted_sum(const T* weights, const Tensor<T>& v, int64_t count, T* out, int64_t d) {
    for (int64_t j = 0; j < d; ++j) out[j] = T(0);
    for (int64_t t = 0; t < count; ++t) {
        const T w = weights[t];
        if (w == T(0)) continue;
        const T* row = v.data.data() + t * d;
        for (int64_t j = 0; j < d; ++j) out[j] += w * row[j];
    }
}

} // namespace

template <typename T>
Tensor<T> masked_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                           const DualStreamMask& mask, T scale, AttentionStats* stats) {
    const int64_t s = mask.seq();
    check_qkv(q, k, v, s, "masked_attention");
    const int64_t d = q.cols();
    Tensor<T> out = Tensor<T>::zeros({s, d});
    std::vector<T> weights(static_cast<size_t>(s));
    for (int64_t i = 0; i < s; ++i) {
        // dense path: every score is computed, masked ones are then dropped
        for (int64_t j = 0; j < s; ++j) {
            T acc = 0;
            const T* qr = q.data.data() + i * d;
            const T* kr = k.data.data() + j * d;
            for (int64_t x = 0; x < d; ++x) acc += qr[x] * kr[x];
            weights[static_cast<size_t>(j)] = acc * scale;
        }
        if (stats) stats->score_evals += s;
        T mx = 0;
        bool any = false;
        for (int64_t j = 0; j < s; ++j) {
            if (!allows(mask, i, j)) continue;
            mx = any ? std::max(mx, weights[static_cast<size_t>(j)]) : weights[static_cast<size_t>(j)];
            any = true;
        }
        if (!any) throw ValueError("masked_attention: fully masked row");
        T sum = 0;
        for (int64_t j = 0; j < s; ++j) {
            if (!allows(mask, i, j)) {
                weights[static_cast<size_t>(j)] = T(0);
                continue;
            }
            const T e = std::exp(weights[static_cast<size_t>(j)] - mx);
            weights[static_cast<size_t>(j)] = e;
            sum += e;
        }
        for (int64_t j = 0; j < s; ++j) weights[static_cast<size_t>(j)] /= sum;
        weighted_sum(weights.data(), v, s, out.data.data() + i * d, d);
    }
    return out;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> block_attention(const Tensor<T>& visual_q, const Tensor<T>& visual_k,
                                                const Tensor<T>& visual_v, const Tensor<T>& query_q,
                                                const Tensor<T>& query_k, const Tensor<T>& query_v,
                                                T scale, AttentionStats* stats) {
    const int64_t m = visual_q.rows();
    const int64_t n = query_q.rows();
    check_qkv(visual_q, visual_k, visual_v, m, "block_attention visual");
    check_qkv(query_q, query_k, query_v, n, "block_attention query");
    const int64_t d = visual_q.cols();
    if (query_q.cols() != d) throw ShapeError("block_attention: streams must share head width");

    Tensor<T> out_v = Tensor<T>::zeros({m, d});
    Tensor<T> out_q = Tensor<T>::zeros({n, d});

    // (a) dense bidirectional visual block, m x m scores
    {
        std::vector<T> weights(static_cast<size_t>(m));
        for (int64_t i = 0; i < m; ++i) {
            const T* qr = visual_q.data.data() + i * d;
            for (int64_t j = 0; j < m; ++j) {
                const T* kr = visual_k.data.data() + j * d;
                T acc = 0;
                for (int64_t x = 0; x < d; ++x) acc += qr[x] * kr[x];
                weights[static_cast<size_t>(j)] = acc * scale;
            }
            if (stats) stats->score_evals += m;
            T mx = weights[0];
            for (int64_t j = 1; j < m; ++j) mx = std::max(mx, weights[static_cast<size_t>(j)]);
            T sum = 0;
            for (int64_t j = 0; j < m; ++j) {
                const T e = std::exp(weights[static_cast<size_t>(j)] - mx);
                weights[static_cast<size_t>(j)] = e;
                sum += e;
            }
            for (int64_t j = 0; j < m; ++j) weights[static_cast<size_t>(j)] /= sum;
            weighted_sum(weights.data(), visual_v, m, out_v.data.data() + i * d, d);
        }
    }

    // (b) ragged query rows: row t sees m visual keys + query keys 0..t
    std::vector<T> weights(static_cast<size_t>(m + n));
    for (int64_t t = 0; t < n; ++t) {
        const int64_t keys = m + t + 1;
        const T* qr = query_q.data.data() + t * d;
        for (int64_t j = 0; j < keys; ++j) {
            const T* kr = (j < m) ? visual_k.data.data() + j * d : query_k.data.data() + (j - m) * d;
            T acc = 0;
            for (int64_t x = 0; x < d; ++x) acc += qr[x] * kr[x];
            weights[static_cast<size_t>(j)] = acc * scale;
        }
        if (stats) stats->score_evals += keys;
        T mx = weights[0];
        for (int64_t j = 1; j < keys; ++j) mx = std::max(mx, weights[static_cast<size_t>(j)]);
        T sum = 0;
        for (int64_t j = 0; j < keys; ++j) {
            const T e = std::exp(weights[static_cast<size_t>(j)] - mx);
            weights[static_cast<size_t>(j)] = e;
            sum += e;
        }
        T* orow = out_q.data.data() + t * d;
        for (int64_t j = 0; j < d; ++j) orow[j] = T(0);
        for (int64_t j = 0; j < keys; ++j) {
            const T w = weights[static_cast<size_t>(j)] / sum;
            const T* vr = (j < m) ? visual_v.data.data() + j * d : query_v.data.data() + (j - m) * d;
            for (int64_t x = 0; x < d; ++x) orow[x] += w * vr[x];
        }
    }

    return {std::move(out_v), std::move(out_q)};
}

template Tensor<float> masked_attention<float>(const Tensor<float>&, const Tensor<float>&,
                                               const Tensor<float>&, const DualStreamMask&, float,
                                               AttentionStats*);
template Tensor<double> masked_attention<double>(const Tensor<double>&, const Tensor<double>&,
                                                 const Tensor<double>&, const DualStreamMask&, double,
                                                 AttentionStats*);
template std::pair<Tensor<float>, Tensor<float>> block_attention<float>(
    const Tensor<float>&, const Tensor<float>&, const Tensor<float>&, const Tensor<float>&,
    const Tensor<float>&, const Tensor<float>&, float, AttentionStats*);
template std::pair<Tensor<double>, Tensor<double>> block_attention<double>(
    const Tensor<double>&, const Tensor<double>&, const Tensor<double>&, const Tensor<double>&,
    const Tensor<double>&, const Tensor<double>&, double, AttentionStats*);

} // namespace cflow
