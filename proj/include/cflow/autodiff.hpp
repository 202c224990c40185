#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cflow/tensor.hpp"

namespace cflow {

enum class ParamGroup : uint8_t { tokenizer = 0, encoder = 1, queries = 2, decoder = 3 };

inline const char* to_string(ParamGroup g) {
    switch (g) {
        case ParamGroup::tokenizer: return "tokenizer";
        case ParamGroup::encoder: return "encoder";
        case ParamGroup::queries: return "queries";
        case ParamGroup::decoder: return "decoder";
    }
    return "?";
}

// Trainable tensor with an accumulating gradient buffer. Gradients add up
// across backward passes until zero_grad(); frozen parameters never receive
// gradient.
template <typename T>
struct Parameter {
    std::string name;
    ParamGroup group = ParamGroup::decoder;
    bool trainable = true;
    Tensor<T> value;
    Tensor<T> grad;

    Parameter() = default;
    Parameter(std::string n, ParamGroup g, Tensor<T> v)
        : name(std::move(n)), group(g), value(std::move(v)), grad(Tensor<T>::zeros(value.shape)) {}

    void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), T(0)); }
};

// Reverse-mode autodiff over a linear tape. Nodes are recorded in evaluation
// order, which is already a topological order, so backward() is a single
// reverse sweep from the loss node. One tape = one forward pass; backward may
// run once per tape, and parameter gradients accumulate across tapes.
template <typename T>
class Tape {
public:
    using Id = int32_t;

    Id constant(Tensor<T> v) { return push(std::move(v), false, {}); }

    Id leaf(Tensor<T> v, bool needs_grad) { return push(std::move(v), needs_grad, {}); }

    // Copies the parameter value in; after backward(), the leaf gradient is
    // added onto p.grad (only if p.trainable).
    Id param(Parameter<T>& p) {
        Id id = push(p.value, p.trainable, {});
        bound_.push_back({&p, id});
        return id;
    }

    Id add(Id a, Id b) {
        const Tensor<T>& av = value(a);
        const Tensor<T>& bv = value(b);
        if (!av.same_shape(bv))
            throw ShapeError("add: shape mismatch " + shape_str(av.shape) + " vs " + shape_str(bv.shape));
        Tensor<T> out = av;
        for (int64_t i = 0; i < out.numel(); ++i) out[i] += bv[i];
        return push(std::move(out), needs(a) || needs(b), [this, a, b](Id id) {
            const Tensor<T>& g = nodes_[id].grad;
            accumulate(a, [&](Tensor<T>& da) {
                for (int64_t i = 0; i < g.numel(); ++i) da[i] += g[i];
            });
            accumulate(b, [&](Tensor<T>& db) {
                for (int64_t i = 0; i < g.numel(); ++i) db[i] += g[i];
            });
        });
    }

    // a: [r x c], b: [c] broadcast over rows.
    Id add_rowvec(Id a, Id b) {
        const Tensor<T>& av = value(a);
        const Tensor<T>& bv = value(b);
        const int64_t r = av.rows(), c = av.cols();
        if (bv.shape.size() != 1 || bv.shape[0] != c)
            throw ShapeError("add_rowvec: vector length must equal matrix cols");
        Tensor<T> out = av;
        for (int64_t i = 0; i < r; ++i)
            for (int64_t j = 0; j < c; ++j) out.at(i, j) += bv[j];
        return push(std::move(out), needs(a) || needs(b), [this, a, b, r, c](Id id) {
            const Tensor<T>& g = nodes_[id].grad;
            accumulate(a, [&](Tensor<T>& da) {
                for (int64_t i = 0; i < g.numel(); ++i) da[i] += g[i];
            });
            accumulate(b, [&](Tensor<T>& db) {
                for (int64_t i = 0; i < r; ++i)
                    for (int64_t j = 0; j < c; ++j) db[j] += g[static_cast<int64_t>(i * c + j)];
            });
        });
    }

    Id mul(Id a, Id b) {
        const Tensor<T>& av = value(a);
        const Tensor<T>& bv = value(b);
        if (!av.same_shape(bv))
            throw ShapeError("mul: shape mismatch " + shape_str(av.shape) + " vs " + shape_str(bv.shape));
        Tensor<T> out = av;
        for (int64_t i = 0; i < out.numel(); ++i) out[i] *= bv[i];
        return push(std::move(out), needs(a) || needs(b), [this, a, b](Id id) {
            const Tensor<T>& g = nodes_[id].grad;
            const Tensor<T>& av2 = nodes_[a].value;
            const Tensor<T>& bv2 = nodes_[b].value;
            accumulate(a, [&](Tensor<T>& da) {
                for (int64_t i = 0; i < g.numel(); ++i) da[i] += g[i] * bv2[i];
            });
            accumulate(b, [&](Tensor<T>& db) {
                for (int64_t i = 0; i < g.numel(); ++i) db[i] += g[i] * av2[i];
            });
        });
    }

    Id scale(Id a, T s) {
        Tensor<T> out = value(a);
        for (auto& v : out.data) v *= s;
        return push(std::move(out), needs(a), [this, a, s](Id id) {
            const Tensor<T>& g = nodes_[id].grad;
            accumulate(a, [&](Tensor<T>& da) {
                for (int64_t i = 0; i < g.numel(); ++i) da[i] += g[i] * s;
            });
        });
    }

    // [p x q] * [q x r] -> [p x r]
    Id matmul(Id a, Id b) {
        const Tensor<T>& av = value(a);
        const Tensor<T>& bv = value(b);
        const int64_t p = av.rows(), q = av.cols();
        if (bv.rows() != q)
            throw ShapeError("matmul: inner extents differ, " + shape_str(av.shape) + " * " + shape_str(bv.shape));
        const int64_t r = bv.cols();
        Tensor<T> out = Tensor<T>::zeros({p, r});
        for (int64_t i = 0; i < p; ++i) {
            const T* arow = av.data.data() + i * q;
            T* orow = out.data.data() + i * r;
            for (int64_t k = 0; k < q; ++k) {
                const T aik = arow[k];
                if (aik == T(0)) continue;
                const T* brow = bv.data.data() + k * r;
                for (int64_t j = 0; j < r; ++j) orow[j] += aik * brow[j];
            }
        }
        return push(std::move(out), needs(a) || needs(b), [this, a, b, p, q, r](Id id) {
            const Tensor<T>& g = nodes_[id].grad;
            const Tensor<T>& av2 = nodes_[a].value;
            const Tensor<T>& bv2 = nodes_[b].value;
            accumulate(a, [&](Tensor<T>& da) {
                // dA = g * B^T
                for (int64_t i = 0; i < p; ++i)
                    for (int64_t k = 0; k < q; ++k) {
                        T acc = 0;
                        const T* grow = g.data.data() + i * r;
                        const T* brow = bv2.data.data() + k * r;
                        for (int64_t j = 0; j < r; ++j) acc += grow[j] * brow[j];
                        da[i * q + k] += acc;
                    }
            });
            accumulate(b, [&](Tensor<T>& db) {
                // dB = A^T * g
                for (int64_t k = 0; k < q; ++k)
                    for (int64_t i = 0; i < p; ++i) {
                        const T aik = av2[i * q + k];
                        if (aik == T(0)) continue;
                        const T* grow = g.data.data() + i * r;
                        T* drow = db.data.data() + k * r;
                        for (int64_t j = 0; j < r; ++j) drow[j] += aik * grow[j];
                    }
            });
        });
    }

    // [p x q] * [r x q]^T -> [p x r]; rows-dot-rows, used for q k^T scores.
    Id matmul_nt(Id a, Id b) {
        const Tensor<T>& av = value(a);
        const Tensor<T>& bv = value(b);
        const int64_t p = av.rows(), q = av.cols();
        if (bv.cols() != q)
            throw ShapeError("matmul_nt: inner extents differ, " + shape_str(av.shape) + " *T " + shape_str(bv.shape));
        const int64_t r = bv.rows();
        Tensor<T> out = Tensor<T>::zeros({p, r});
        for (int64_t i = 0; i < p; ++i) {
            const T* arow = av.data.data() + i * q;
            for (int64_t j = 0; j < r; ++j) {
                const T* brow = bv.data.data() + j * q;
                T acc = 0;
                for (int64_t k = 0; k < q; ++k) acc += arow[k] * brow[k];
                out[i * r + j] = acc;
            }
        }
        return push(std::move(out), needs(a) || needs(b), [this, a, b, p, q, r](Id id) {
            const Tensor<T>& g = nodes_[id].grad;
            const Tensor<T>& av2 = nodes_[a].value;
            const Tensor<T>& bv2 = nodes_[b].value;
            accumulate(a, [&](Tensor<T>& da) {
                // dA[i,k] = sum_j g[i,j] * B[j,k]
                for (int64_t i = 0; i < p; ++i)
                    for (int64_t j = 0; j < r; ++j) {
                        const T gij = g[i * r + j];
                        if (gij == T(0)) continue;
                        const T* brow = bv2.data.data() + j * q;
                        T* drow = da.data.data() + i * q;
                        for (int64_t k = 0; k < q; ++k) drow[k] += gij * brow[k];
                    }
            });
            accumulate(b, [&](Tensor<T>& db) {
                // dB[j,k] = sum_i g[i,j] * A[i,k]
                for (int64_t i = 0; i < p; ++i)
                    for (int64_t j = 0; j < r; ++j) {
                        const T gij = g[i * r + j];
                        if (gij == T(0)) continue;
                        const T* arow = av2.data.data() + i * q;
                        T* drow = db.data.data() + j * q;
                        for (int64_t k = 0; k < q; ++k) drow[k] += gij * arow[k];
                    }
            });
        });
    }

    Id silu(Id a) {
        Tensor<T> out = value(a);
        for (auto& v : out.data) {
            const T s = T(1) / (T(1) + std::exp(-v));
            v = v * s;
        }
        return push(std::move(out), needs(a), [this, a](Id id) {
            const Tensor<T>& g = nodes_[id].grad;
            const Tensor<T>& x = nodes_[a].value;
            accumulate(a, [&](Tensor<T>& da) {
                for (int64_t i = 0; i < g.numel(); ++i) {
                    const T s = T(1) / (T(1) + std::exp(-x[i]));
                    da[i] += g[i] * (s + x[i] * s * (T(1) - s));
                }
            });
        });
    }

    // Per-row x / sqrt(mean(x^2) + eps) * gain; x: [r x d], gain: [d].
    Id rms_norm(Id x, Id gain, T eps) {
        const Tensor<T>& xv = value(x);
        const Tensor<T>& gv = value(gain);
        const int64_t r = xv.rows(), d = xv.cols();
        if (gv.shape.size() != 1 || gv.shape[0] != d)
            throw ShapeError("rms_norm: gain length must equal feature width");
        Tensor<T> out = Tensor<T>::zeros({r, d});
        for (int64_t i = 0; i < r; ++i) {
            T ms = 0;
            for (int64_t j = 0; j < d; ++j) ms += xv.at(i, j) * xv.at(i, j);
            ms /= static_cast<T>(d);
            const T inv = T(1) / std::sqrt(ms + eps);
            for (int64_t j = 0; j < d; ++j) out.at(i, j) = xv.at(i, j) * inv * gv[j];
        }
        return push(std::move(out), needs(x) || needs(gain), [this, x, gain, eps, r, d](Id id) {
            const Tensor<T>& g = nodes_[id].grad;
            const Tensor<T>& xv2 = nodes_[x].value;
            const Tensor<T>& gv2 = nodes_[gain].value;
            for (int64_t i = 0; i < r; ++i) {
                T ms = 0;
                for (int64_t j = 0; j < d; ++j) ms += xv2.at(i, j) * xv2.at(i, j);
                ms /= static_cast<T>(d);
                const T inv = T(1) / std::sqrt(ms + eps);
                accumulate(gain, [&](Tensor<T>& dg) {
                    for (int64_t j = 0; j < d; ++j) dg[j] += g.at(i, j) * xv2.at(i, j) * inv;
                });
                accumulate(x, [&](Tensor<T>& dx) {
                    T dot = 0;
                    for (int64_t j = 0; j < d; ++j) dot += g.at(i, j) * gv2[j] * xv2.at(i, j);
                    const T c = inv * inv * inv * dot / static_cast<T>(d);
                    for (int64_t j = 0; j < d; ++j)
                        dx.at(i, j) += g.at(i, j) * gv2[j] * inv - c * xv2.at(i, j);
                });
            }
        });
    }

    Id softmax_rows(Id logits) { return softmax_impl(logits, nullptr); }

    // Row-stabilized softmax restricted to allowed entries; disallowed entries
    // are exactly zero in the output and receive zero gradient.
    Id masked_softmax(Id logits, const BoolMatrix& allowed) {
        const Tensor<T>& lv = value(logits);
        if (lv.rows() != allowed.rows || lv.cols() != allowed.cols)
            throw ShapeError("masked_softmax: mask extents must match logits");
        return softmax_impl(logits, &allowed);
    }

    // Mean negative log-softmax probability over non-ignored positions.
    Id cross_entropy(Id logits, std::span<const int> targets, int ignore_id) {
        const Tensor<T>& lv = value(logits);
        const int64_t t = lv.rows(), vocab = lv.cols();
        if (static_cast<int64_t>(targets.size()) != t)
            throw ShapeError("cross_entropy: targets length must equal logit rows");
        int64_t count = 0;
        for (int id : targets) {
            if (id == ignore_id) continue;
            if (id < 0 || id >= vocab) throw ValueError("cross_entropy: target id out of vocabulary");
            ++count;
        }
        if (count == 0) throw ValueError("cross_entropy: every position ignored, loss undefined");
        std::vector<int> tgt(targets.begin(), targets.end());
        T loss = 0;
        for (int64_t i = 0; i < t; ++i) {
            if (tgt[static_cast<size_t>(i)] == ignore_id) continue;
            T mx = lv.at(i, 0);
            for (int64_t j = 1; j < vocab; ++j) mx = std::max(mx, lv.at(i, j));
            T sum = 0;
            for (int64_t j = 0; j < vocab; ++j) sum += std::exp(lv.at(i, j) - mx);
            const T lse = mx + std::log(sum);
            loss += lse - lv.at(i, tgt[static_cast<size_t>(i)]);
        }
        loss /= static_cast<T>(count);
        return push(Tensor<T>({1}, {loss}), needs(logits),
                    [this, logits, tgt = std::move(tgt), ignore_id, count, t, vocab](Id id) {
                        const T g = nodes_[id].grad[0];
                        const Tensor<T>& lv2 = nodes_[logits].value;
                        accumulate(logits, [&](Tensor<T>& dl) {
                            for (int64_t i = 0; i < t; ++i) {
                                const int target = tgt[static_cast<size_t>(i)];
                                if (target == ignore_id) continue;
                                T mx = lv2.at(i, 0);
                                for (int64_t j = 1; j < vocab; ++j) mx = std::max(mx, lv2.at(i, j));
                                T sum = 0;
                                for (int64_t j = 0; j < vocab; ++j) sum += std::exp(lv2.at(i, j) - mx);
                                for (int64_t j = 0; j < vocab; ++j) {
                                    const T p = std::exp(lv2.at(i, j) - mx) / sum;
                                    const T delta = (j == target) ? T(1) : T(0);
                                    dl.at(i, j) += g * (p - delta) / static_cast<T>(count);
                                }
                            }
                        });
                    });
    }

    // table: [V x d], ids -> [len(ids) x d] row gather.
    Id embedding(Id table, std::span<const int> ids) {
        const Tensor<T>& tv = value(table);
        const int64_t vocab = tv.rows(), d = tv.cols();
        Tensor<T> out = Tensor<T>::zeros({static_cast<int64_t>(ids.size()), d});
        std::vector<int> idx(ids.begin(), ids.end());
        for (size_t i = 0; i < idx.size(); ++i) {
            if (idx[i] < 0 || idx[i] >= vocab) throw ValueError("embedding: id out of table range");
            std::copy_n(tv.data.data() + static_cast<int64_t>(idx[i]) * d, d,
                        out.data.data() + static_cast<int64_t>(i) * d);
        }
        return push(std::move(out), needs(table), [this, table, idx = std::move(idx), d](Id id) {
            const Tensor<T>& g = nodes_[id].grad;
            accumulate(table, [&](Tensor<T>& dt) {
                for (size_t i = 0; i < idx.size(); ++i)
                    for (int64_t j = 0; j < d; ++j)
                        dt[static_cast<int64_t>(idx[i]) * d + j] += g[static_cast<int64_t>(i) * d + j];
            });
        });
    }

    Id gather_rows(Id a, std::vector<int64_t> idx) {
        const Tensor<T>& av = value(a);
        const int64_t r = av.rows(), d = av.cols();
        Tensor<T> out = Tensor<T>::zeros({static_cast<int64_t>(idx.size()), d});
        for (size_t i = 0; i < idx.size(); ++i) {
            if (idx[i] < 0 || idx[i] >= r) throw ShapeError("gather_rows: row index out of range");
            std::copy_n(av.data.data() + idx[i] * d, d, out.data.data() + static_cast<int64_t>(i) * d);
        }
        return push(std::move(out), needs(a), [this, a, idx = std::move(idx), d](Id id) {
            const Tensor<T>& g = nodes_[id].grad;
            accumulate(a, [&](Tensor<T>& da) {
                for (size_t i = 0; i < idx.size(); ++i)
                    for (int64_t j = 0; j < d; ++j)
                        da[idx[i] * d + j] += g[static_cast<int64_t>(i) * d + j];
            });
        });
    }

    Id slice_rows(Id a, int64_t begin, int64_t end) {
        const Tensor<T>& av = value(a);
        const int64_t r = av.rows(), d = av.cols();
        if (begin < 0 || end > r || begin >= end) throw ShapeError("slice_rows: bad range");
        Tensor<T> out = Tensor<T>::zeros({end - begin, d});
        std::copy_n(av.data.data() + begin * d, (end - begin) * d, out.data.data());
        return push(std::move(out), needs(a), [this, a, begin, end, d](Id id) {
            const Tensor<T>& g = nodes_[id].grad;
            accumulate(a, [&](Tensor<T>& da) {
                for (int64_t i = 0; i < (end - begin) * d; ++i) da[begin * d + i] += g[i];
            });
        });
    }

    Id slice_cols(Id a, int64_t begin, int64_t end) {
        const Tensor<T>& av = value(a);
        const int64_t r = av.rows(), c = av.cols();
        if (begin < 0 || end > c || begin >= end) throw ShapeError("slice_cols: bad range");
        const int64_t w = end - begin;
        Tensor<T> out = Tensor<T>::zeros({r, w});
        for (int64_t i = 0; i < r; ++i)
            std::copy_n(av.data.data() + i * c + begin, w, out.data.data() + i * w);
        return push(std::move(out), needs(a), [this, a, begin, c, w, r](Id id) {
            const Tensor<T>& g = nodes_[id].grad;
            accumulate(a, [&](Tensor<T>& da) {
                for (int64_t i = 0; i < r; ++i)
                    for (int64_t j = 0; j < w; ++j) da[i * c + begin + j] += g[i * w + j];
            });
        });
    }

    // Concatenation along the sequence (row) axis.
    Id concat_rows(const std::vector<Id>& parts) {
        if (parts.empty()) throw ShapeError("concat_rows: no inputs");
        const int64_t d = value(parts[0]).cols();
        int64_t total = 0;
        bool ng = false;
        for (Id p : parts) {
            if (value(p).cols() != d) throw ShapeError("concat_rows: feature widths differ");
            total += value(p).rows();
            ng = ng || needs(p);
        }
        Tensor<T> out = Tensor<T>::zeros({total, d});
        int64_t off = 0;
        for (Id p : parts) {
            const Tensor<T>& pv = value(p);
            std::copy_n(pv.data.data(), pv.numel(), out.data.data() + off * d);
            off += pv.rows();
        }
        return push(std::move(out), ng, [this, parts, d](Id id) {
            const Tensor<T>& g = nodes_[id].grad;
            int64_t off2 = 0;
            for (Id p : parts) {
                const int64_t pr = nodes_[p].value.rows();
                accumulate(p, [&](Tensor<T>& dp) {
                    for (int64_t i = 0; i < pr * d; ++i) dp[i] += g[off2 * d + i];
                });
                off2 += pr;
            }
        });
    }

    Id concat_cols(const std::vector<Id>& parts) {
        if (parts.empty()) throw ShapeError("concat_cols: no inputs");
        const int64_t r = value(parts[0]).rows();
        int64_t total = 0;
        bool ng = false;
        for (Id p : parts) {
            if (value(p).rows() != r) throw ShapeError("concat_cols: row counts differ");
            total += value(p).cols();
            ng = ng || needs(p);
        }
        Tensor<T> out = Tensor<T>::zeros({r, total});
        int64_t off = 0;
        for (Id p : parts) {
            const Tensor<T>& pv = value(p);
            const int64_t w = pv.cols();
            for (int64_t i = 0; i < r; ++i)
                std::copy_n(pv.data.data() + i * w, w, out.data.data() + i * total + off);
            off += w;
        }
        return push(std::move(out), ng, [this, parts, r, total](Id id) {
            const Tensor<T>& g = nodes_[id].grad;
            int64_t off2 = 0;
            for (Id p : parts) {
                const int64_t w = nodes_[p].value.cols();
                accumulate(p, [&](Tensor<T>& dp) {
                    for (int64_t i = 0; i < r; ++i)
                        for (int64_t j = 0; j < w; ++j) dp[i * w + j] += g[i * total + off2 + j];
                });
                off2 += w;
            }
        });
    }

    Id reshape(Id a, Shape s) {
        const Tensor<T>& av = value(a);
        if (shape_numel(s) != av.numel()) throw ShapeError("reshape: element count must be preserved");
        Tensor<T> out(std::move(s), av.data);
        return push(std::move(out), needs(a), [this, a](Id id) {
            const Tensor<T>& g = nodes_[id].grad;
            accumulate(a, [&](Tensor<T>& da) {
                for (int64_t i = 0; i < g.numel(); ++i) da[i] += g[i];
            });
        });
    }

    Id sum(Id a) {
        const Tensor<T>& av = value(a);
        T s = 0;
        for (const T& v : av.data) s += v;
        return push(Tensor<T>({1}, {s}), needs(a), [this, a](Id id) {
            const T g = nodes_[id].grad[0];
            accumulate(a, [&](Tensor<T>& da) {
                for (int64_t i = 0; i < da.numel(); ++i) da[i] += g;
            });
        });
    }

    const Tensor<T>& value(Id id) const { return check(id).value; }
    const Tensor<T>& grad(Id id) const { return check(id).grad; }
    T scalar(Id id) const {
        const Tensor<T>& v = value(id);
        if (v.numel() != 1) throw ShapeError("scalar() on non-scalar node");
        return v[0];
    }

    size_t size() const { return nodes_.size(); }

    // Single reverse sweep from a scalar loss; fills bound parameter grads.
    void backward(Id loss) {
        if (backward_done_) throw GraphError("backward already ran on this tape");
        Node& ln = const_cast<Node&>(check(loss));
        if (ln.value.numel() != 1) throw GraphError("backward requires a scalar loss");
        backward_done_ = true;
        ln.grad[0] = T(1);
        for (Id id = loss; id >= 0; --id) {
            Node& n = nodes_[static_cast<size_t>(id)];
            if (n.needs_grad && n.backprop) n.backprop(id);
        }
        for (auto& [p, id] : bound_) {
            if (!p->trainable) continue;
            const Tensor<T>& g = nodes_[static_cast<size_t>(id)].grad;
            for (int64_t i = 0; i < g.numel(); ++i) p->grad[i] += g[i];
        }
    }

private:
    struct Node {
        Tensor<T> value;
        Tensor<T> grad;
        bool needs_grad = false;
        std::function<void(Id)> backprop;
    };

    std::vector<Node> nodes_;
    std::vector<std::pair<Parameter<T>*, Id>> bound_;
    bool backward_done_ = false;

    const Node& check(Id id) const {
        if (id < 0 || static_cast<size_t>(id) >= nodes_.size())
            throw GraphError("node id " + std::to_string(id) + " was not recorded on this tape");
        return nodes_[static_cast<size_t>(id)];
    }

    bool needs(Id id) const { return check(id).needs_grad; }

    template <typename Fn>
    void accumulate(Id id, Fn&& fn) {
        Node& n = nodes_[static_cast<size_t>(id)];
        if (!n.needs_grad) return;
        fn(n.grad);
    }

    Id push(Tensor<T> v, bool needs_grad, std::function<void(Id)> backprop) {
        Node n;
        n.value = std::move(v);
        n.grad = Tensor<T>::zeros(n.value.shape);
        n.needs_grad = needs_grad;
        if (needs_grad) n.backprop = std::move(backprop);
        nodes_.push_back(std::move(n));
        return static_cast<Id>(nodes_.size() - 1);
    }

    Id softmax_impl(Id logits, const BoolMatrix* allowed) {
        const Tensor<T>& lv = value(logits);
        const int64_t r = lv.rows(), c = lv.cols();
        Tensor<T> out = Tensor<T>::zeros({r, c});
        for (int64_t i = 0; i < r; ++i) {
            T mx = 0;
            bool any = false;
            for (int64_t j = 0; j < c; ++j) {
                if (allowed && !allowed->at(i, j)) continue;
                const T v = lv.at(i, j);
                mx = any ? std::max(mx, v) : v;
                any = true;
            }
            if (!any) throw ValueError("masked_softmax: row " + std::to_string(i) + " is fully masked");
            T sum = 0;
            for (int64_t j = 0; j < c; ++j) {
                if (allowed && !allowed->at(i, j)) continue;
                const T e = std::exp(lv.at(i, j) - mx);
                out.at(i, j) = e;
                sum += e;
            }
            for (int64_t j = 0; j < c; ++j) {
                if (allowed && !allowed->at(i, j)) continue;
                out.at(i, j) /= sum;
            }
        }
        BoolMatrix mask_copy = allowed ? *allowed : BoolMatrix();
        const bool has_mask = allowed != nullptr;
        return push(std::move(out), needs(logits),
                    [this, logits, mask_copy = std::move(mask_copy), has_mask, r, c](Id id) {
                        const Tensor<T>& g = nodes_[id].grad;
                        const Tensor<T>& p = nodes_[id].value;
                        accumulate(logits, [&](Tensor<T>& dl) {
                            for (int64_t i = 0; i < r; ++i) {
                                T dot = 0;
                                for (int64_t j = 0; j < c; ++j) {
                                    if (has_mask && !mask_copy.at(i, j)) continue;
                                    dot += g.at(i, j) * p.at(i, j);
                                }
                                for (int64_t j = 0; j < c; ++j) {
                                    if (has_mask && !mask_copy.at(i, j)) continue;
                                    dl.at(i, j) += p.at(i, j) * (g.at(i, j) - dot);
                                }
                            }
                        });
                    });
    }
};

// Dense layer y = x W + b with W stored [in x out].
template <typename T>
struct Linear {
    Parameter<T> w;
    Parameter<T> b;

    Linear() = default;
    // init_scale <= 0 picks the fan-balanced default sqrt(2/(in+out))
    Linear(const std::string& name, ParamGroup g, int64_t in, int64_t out, Rng& rng, T init_scale = T(0))
        : w(name + ".w", g,
            Tensor<T>::gaussian({in, out}, rng,
                                init_scale > T(0)
                                    ? init_scale
                                    : static_cast<T>(std::sqrt(2.0 / static_cast<double>(in + out))))),
          b(name + ".b", g, Tensor<T>::zeros({out})) {}

    typename Tape<T>::Id apply(Tape<T>& t, typename Tape<T>::Id x) {
        return t.add_rowvec(t.matmul(x, t.param(w)), t.param(b));
    }

    void collect(std::vector<Parameter<T>*>& out) {
        out.push_back(&w);
        out.push_back(&b);
    }
};

struct GradCheckReport {
    double max_rel_err = 0.0;
    int64_t coords_checked = 0;
};

// Central-finite-difference verification of tape gradients. Builds the loss
// once for analytic gradients, then re-evaluates the closure per perturbed
// coordinate. Coordinates are subsampled uniformly so that every parameter
// group contributes at least min_coords_per_group (or its full size).
template <typename T>
GradCheckReport grad_check(const std::function<typename Tape<T>::Id(Tape<T>&)>& build_loss,
                           std::span<Parameter<T>* const> params,
                           double step = 1e-5,
                           int64_t min_coords_per_group = 64,
                           uint64_t seed = 0x9d5c) {
    for (auto* p : params) p->zero_grad();
    std::vector<Tensor<T>> analytic;
    {
        Tape<T> tape;
        auto loss = build_loss(tape);
        tape.backward(loss);
    }
    analytic.reserve(params.size());
    for (auto* p : params) analytic.push_back(p->grad);

    auto eval = [&]() -> double {
        Tape<T> tape;
        return static_cast<double>(tape.scalar(build_loss(tape)));
    };

    // group -> flat (param index, coordinate) candidates
    Rng rng(seed);
    GradCheckReport report;
    for (int gi = 0; gi < 4; ++gi) {
        std::vector<std::pair<size_t, int64_t>> coords;
        for (size_t pi = 0; pi < params.size(); ++pi) {
            if (static_cast<int>(params[pi]->group) != gi) continue;
            if (!params[pi]->trainable) continue;
            for (int64_t c = 0; c < params[pi]->value.numel(); ++c) coords.push_back({pi, c});
        }
        if (coords.empty()) continue;
        if (static_cast<int64_t>(coords.size()) > min_coords_per_group) {
            // partial Fisher-Yates prefix shuffle
            for (int64_t i = 0; i < min_coords_per_group; ++i) {
                const int64_t j = i + static_cast<int64_t>(rng.below(coords.size() - static_cast<size_t>(i)));
                std::swap(coords[static_cast<size_t>(i)], coords[static_cast<size_t>(j)]);
            }
            coords.resize(static_cast<size_t>(min_coords_per_group));
        }
        for (auto [pi, c] : coords) {
            T& slot = params[pi]->value[c];
            const T orig = slot;
            slot = orig + static_cast<T>(step);
            const double up = eval();
            slot = orig - static_cast<T>(step);
            const double down = eval();
            slot = orig;
            const double fd = (up - down) / (2.0 * step);
            const double an = static_cast<double>(analytic[pi][c]);
            const double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-8});
            report.max_rel_err = std::max(report.max_rel_err, rel);
            ++report.coords_checked;
        }
    }
    return report;
}

} // namespace cflow
