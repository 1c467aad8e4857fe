#pragma once

// Differentiable primitives over Tensor. Each op computes its output eagerly
// and, when a tape is active and an input is tracked, records a closure that
// accumulates d(loss)/d(input) from d(loss)/d(output).

#include "timeformer/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

namespace timeformer {

namespace detail {

// C[m,n] += A[m,k] * B[k,n]
inline void mm_acc(const double* a, const double* b, double* c,
                   std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[m,k] += G[m,n] * B[k,n]^T
inline void mm_acc_bt(const double* g, const double* b, double* c,
                      std::size_t m, std::size_t n, std::size_t k) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* grow = g + i * n;
        double* crow = c + i * k;
        for (std::size_t l = 0; l < k; ++l) {
            const double* brow = b + l * n;
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
            crow[l] += acc;
        }
    }
}

// C[k,n] += A[m,k]^T * G[m,n]
inline void mm_acc_at(const double* a, const double* g, double* c,
                      std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        const double* grow = g + i * n;
        for (std::size_t l = 0; l < k; ++l) {
            const double av = arow[l];
            if (av == 0.0) continue;
            double* crow = c + l * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * grow[j];
        }
    }
}

inline Shape batch_dims(const Shape& s) {
    return Shape(s.begin(), s.end() - 2);
}

} // namespace detail

// ---------------------------------------------------------------------------
// Matrix multiplication
// ---------------------------------------------------------------------------

/// Batched row-major contraction [..,m,k] x [..,k,n] -> [..,m,n]. Batch
/// extents must match, or either operand may be a plain 2-D matrix that is
/// shared across the other operand's batch.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() < 2 || b.ndim() < 2) {
        throw DimensionError("matmul requires rank >= 2 operands, got " +
                             shape_str(a.shape()) + " and " + shape_str(b.shape()));
    }
    const std::size_t m = a.shape()[a.ndim() - 2];
    const std::size_t ka = a.shape()[a.ndim() - 1];
    const std::size_t kb = b.shape()[b.ndim() - 2];
    const std::size_t n = b.shape()[b.ndim() - 1];
    if (ka != kb) {
        throw DimensionError("matmul inner extents differ: " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()));
    }
    const Shape abatch = detail::batch_dims(a.shape());
    const Shape bbatch = detail::batch_dims(b.shape());
    if (!abatch.empty() && !bbatch.empty() && abatch != bbatch) {
        throw DimensionError("matmul batch extents differ: " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()));
    }
    const Shape batch = abatch.empty() ? bbatch : abatch;
    const std::size_t nb = shape_numel(batch);
    const bool a_batched = !abatch.empty();
    const bool b_batched = !bbatch.empty();

    Shape out_shape = batch;
    out_shape.push_back(m);
    out_shape.push_back(n);
    Tensor out(out_shape);

    const double* ap = a.values().data();
    const double* bp = b.values().data();
    double* op = out.values().data();
    for (std::size_t s = 0; s < nb; ++s) {
        detail::mm_acc(ap + (a_batched ? s * m * ka : 0),
                       bp + (b_batched ? s * ka * n : 0),
                       op + s * m * n, m, ka, n);
    }

    if (detail::grad_needed(a) || detail::grad_needed(b)) {
        out.mark_tracked();
        auto an = a.node(), bn = b.node(), on = out.node();
        const bool need_a = a.tracked(), need_b = b.tracked();
        const std::size_t k = ka;
        Tape::current()->record([an, bn, on, need_a, need_b, nb, a_batched, b_batched, m, k, n]() {
            const auto* go = detail::output_grad(on);
            if (!go) return;
            if (need_a) an->ensure_grad();
            if (need_b) bn->ensure_grad();
            for (std::size_t s = 0; s < nb; ++s) {
                const double* g = go->data() + s * m * n;
                if (need_a) {
                    detail::mm_acc_bt(g, bn->values.data() + (b_batched ? s * k * n : 0),
                                      an->grad.data() + (a_batched ? s * m * k : 0), m, n, k);
                }
                if (need_b) {
                    detail::mm_acc_at(an->values.data() + (a_batched ? s * m * k : 0), g,
                                      bn->grad.data() + (b_batched ? s * k * n : 0), m, k, n);
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Elementwise ops
// ---------------------------------------------------------------------------

namespace detail {

template <typename Fwd, typename Bwd>
Tensor unary_op(const Tensor& x, Fwd fwd, Bwd make_backward) {
    Tensor out(x.shape());
    const auto& xv = x.values();
    auto& ov = out.values();
    for (std::size_t i = 0; i < xv.size(); ++i) ov[i] = fwd(xv[i]);
    if (grad_needed(x)) {
        out.mark_tracked();
        Tape::current()->record(make_backward(x.node(), out.node()));
    }
    return out;
}

} // namespace detail

/// Elementwise sum. `b` may either match `a`'s shape or be a 1-D tensor that
/// is broadcast along `a`'s last axis (bias add).
inline Tensor add(const Tensor& a, const Tensor& b) {
    const bool same = a.shape() == b.shape();
    const bool bias = !same && b.ndim() == 1 && a.ndim() >= 1 && b.numel() == a.shape().back();
    if (!same && !bias) {
        throw DimensionError("add shapes incompatible: " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()));
    }
    Tensor out(a.shape());
    const auto& av = a.values();
    const auto& bv = b.values();
    auto& ov = out.values();
    if (same) {
        for (std::size_t i = 0; i < av.size(); ++i) ov[i] = av[i] + bv[i];
    } else {
        const std::size_t n = bv.size();
        for (std::size_t i = 0; i < av.size(); ++i) ov[i] = av[i] + bv[i % n];
    }
    if (detail::grad_needed(a) || detail::grad_needed(b)) {
        out.mark_tracked();
        auto an = a.node(), bn = b.node(), on = out.node();
        const bool need_a = a.tracked(), need_b = b.tracked();
        Tape::current()->record([an, bn, on, need_a, need_b, same]() {
            const auto* go = detail::output_grad(on);
            if (!go) return;
            if (need_a) {
                an->ensure_grad();
                for (std::size_t i = 0; i < go->size(); ++i) an->grad[i] += (*go)[i];
            }
            if (need_b) {
                bn->ensure_grad();
                if (same) {
                    for (std::size_t i = 0; i < go->size(); ++i) bn->grad[i] += (*go)[i];
                } else {
                    const std::size_t n = bn->values.size();
                    for (std::size_t i = 0; i < go->size(); ++i) bn->grad[i % n] += (*go)[i];
                }
            }
        });
    }
    return out;
}

/// Elementwise difference, same shapes only.
inline Tensor sub(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw DimensionError("sub shapes differ: " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()));
    }
    Tensor out(a.shape());
    const auto& av = a.values();
    const auto& bv = b.values();
    auto& ov = out.values();
    for (std::size_t i = 0; i < av.size(); ++i) ov[i] = av[i] - bv[i];
    if (detail::grad_needed(a) || detail::grad_needed(b)) {
        out.mark_tracked();
        auto an = a.node(), bn = b.node(), on = out.node();
        const bool need_a = a.tracked(), need_b = b.tracked();
        Tape::current()->record([an, bn, on, need_a, need_b]() {
            const auto* go = detail::output_grad(on);
            if (!go) return;
            if (need_a) {
                an->ensure_grad();
                for (std::size_t i = 0; i < go->size(); ++i) an->grad[i] += (*go)[i];
            }
            if (need_b) {
                bn->ensure_grad();
                for (std::size_t i = 0; i < go->size(); ++i) bn->grad[i] -= (*go)[i];
            }
        });
    }
    return out;
}

/// Hadamard product, same shapes only.
inline Tensor mul(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw DimensionError("mul shapes differ: " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()));
    }
    Tensor out(a.shape());
    const auto& av = a.values();
    const auto& bv = b.values();
    auto& ov = out.values();
    for (std::size_t i = 0; i < av.size(); ++i) ov[i] = av[i] * bv[i];
    if (detail::grad_needed(a) || detail::grad_needed(b)) {
        out.mark_tracked();
        auto an = a.node(), bn = b.node(), on = out.node();
        const bool need_a = a.tracked(), need_b = b.tracked();
        Tape::current()->record([an, bn, on, need_a, need_b]() {
            const auto* go = detail::output_grad(on);
            if (!go) return;
            if (need_a) {
                an->ensure_grad();
                for (std::size_t i = 0; i < go->size(); ++i) an->grad[i] += (*go)[i] * bn->values[i];
            }
            if (need_b) {
                bn->ensure_grad();
                for (std::size_t i = 0; i < go->size(); ++i) bn->grad[i] += (*go)[i] * an->values[i];
            }
        });
    }
    return out;
}

inline Tensor scale(const Tensor& x, double factor) {
    return detail::unary_op(
        x, [factor](double v) { return v * factor; },
        [factor](auto xn, auto on) {
            return [xn, on, factor]() {
                const auto* go = detail::output_grad(on);
                if (!go) return;
                xn->ensure_grad();
                for (std::size_t i = 0; i < go->size(); ++i) xn->grad[i] += (*go)[i] * factor;
            };
        });
}

inline Tensor exp(const Tensor& x) {
    return detail::unary_op(
        x, [](double v) { return std::exp(v); },
        [](auto xn, auto on) {
            return [xn, on]() {
                const auto* go = detail::output_grad(on);
                if (!go) return;
                xn->ensure_grad();
                for (std::size_t i = 0; i < go->size(); ++i) xn->grad[i] += (*go)[i] * on->values[i];
            };
        });
}

inline Tensor relu(const Tensor& x) {
    return detail::unary_op(
        x, [](double v) { return v > 0.0 ? v : 0.0; },
        [](auto xn, auto on) {
            return [xn, on]() {
                const auto* go = detail::output_grad(on);
                if (!go) return;
                xn->ensure_grad();
                for (std::size_t i = 0; i < go->size(); ++i) {
                    if (xn->values[i] > 0.0) xn->grad[i] += (*go)[i];
                }
            };
        });
}

inline Tensor gelu(const Tensor& x) {
    constexpr double inv_sqrt2 = 0.70710678118654752440;
    constexpr double inv_sqrt2pi = 0.39894228040143267794;
    return detail::unary_op(
        x, [=](double v) { return 0.5 * v * (1.0 + std::erf(v * inv_sqrt2)); },
        [=](auto xn, auto on) {
            return [xn, on]() {
                const auto* go = detail::output_grad(on);
                if (!go) return;
                xn->ensure_grad();
                for (std::size_t i = 0; i < go->size(); ++i) {
                    const double v = xn->values[i];
                    const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
                    const double pdf = inv_sqrt2pi * std::exp(-0.5 * v * v);
                    xn->grad[i] += (*go)[i] * (cdf + v * pdf);
                }
            };
        });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

inline Tensor sum(const Tensor& x) {
    double acc = 0.0;
    for (double v : x.values()) acc += v;
    Tensor out = Tensor::scalar(acc);
    if (detail::grad_needed(x)) {
        out.mark_tracked();
        auto xn = x.node(), on = out.node();
        Tape::current()->record([xn, on]() {
            const auto* go = detail::output_grad(on);
            if (!go) return;
            xn->ensure_grad();
            const double g = (*go)[0];
            for (double& gv : xn->grad) gv += g;
        });
    }
    return out;
}

inline Tensor mean(const Tensor& x) {
    if (x.numel() == 0) throw DimensionError("mean of an empty tensor");
    double acc = 0.0;
    for (double v : x.values()) acc += v;
    const double inv_n = 1.0 / static_cast<double>(x.numel());
    Tensor out = Tensor::scalar(acc * inv_n);
    if (detail::grad_needed(x)) {
        out.mark_tracked();
        auto xn = x.node(), on = out.node();
        Tape::current()->record([xn, on, inv_n]() {
            const auto* go = detail::output_grad(on);
            if (!go) return;
            xn->ensure_grad();
            const double g = (*go)[0] * inv_n;
            for (double& gv : xn->grad) gv += g;
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

inline Tensor reshape(const Tensor& x, Shape new_shape) {
    if (shape_numel(new_shape) != x.numel()) {
        throw DimensionError("reshape from " + shape_str(x.shape()) + " to " +
                             shape_str(new_shape) + " changes element count");
    }
    Tensor out = Tensor::from_values(std::move(new_shape), x.values());
    if (detail::grad_needed(x)) {
        out.mark_tracked();
        auto xn = x.node(), on = out.node();
        Tape::current()->record([xn, on]() {
            const auto* go = detail::output_grad(on);
            if (!go) return;
            xn->ensure_grad();
            for (std::size_t i = 0; i < go->size(); ++i) xn->grad[i] += (*go)[i];
        });
    }
    return out;
}

inline Tensor flatten(const Tensor& x) { return reshape(x, {x.numel()}); }

inline Tensor transpose_last2(const Tensor& x) {
    if (x.ndim() < 2) {
        throw DimensionError("transpose_last2 requires rank >= 2, got " + shape_str(x.shape()));
    }
    const std::size_t r = x.shape()[x.ndim() - 2];
    const std::size_t c = x.shape()[x.ndim() - 1];
    Shape out_shape = x.shape();
    out_shape[x.ndim() - 2] = c;
    out_shape[x.ndim() - 1] = r;
    const std::size_t nb = x.numel() / (r * c);
    Tensor out(out_shape);
    const double* xp = x.values().data();
    double* op = out.values().data();
    for (std::size_t s = 0; s < nb; ++s) {
        const double* xs = xp + s * r * c;
        double* os = op + s * r * c;
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) os[j * r + i] = xs[i * c + j];
    }
    if (detail::grad_needed(x)) {
        out.mark_tracked();
        auto xn = x.node(), on = out.node();
        Tape::current()->record([xn, on, nb, r, c]() {
            const auto* go = detail::output_grad(on);
            if (!go) return;
            xn->ensure_grad();
            for (std::size_t s = 0; s < nb; ++s) {
                const double* gs = go->data() + s * r * c;
                double* xg = xn->grad.data() + s * r * c;
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < c; ++j) xg[i * c + j] += gs[j * r + i];
            }
        });
    }
    return out;
}

inline Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
    if (parts.empty()) throw DimensionError("concat of zero tensors");
    const Shape& first = parts[0].shape();
    if (axis >= first.size()) {
        throw DimensionError("concat axis " + std::to_string(axis) + " out of range for " +
                             shape_str(first));
    }
    std::size_t axis_total = 0;
    for (const Tensor& p : parts) {
        if (p.ndim() != first.size()) {
            throw DimensionError("concat rank mismatch: " + shape_str(first) + " vs " +
                                 shape_str(p.shape()));
        }
        for (std::size_t i = 0; i < first.size(); ++i) {
            if (i != axis && p.shape()[i] != first[i]) {
                throw DimensionError("concat shapes differ off-axis: " + shape_str(first) +
                                     " vs " + shape_str(p.shape()));
            }
        }
        axis_total += p.shape()[axis];
    }
    Shape out_shape = first;
    out_shape[axis] = axis_total;

    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
    for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];

    Tensor out(out_shape);
    double* op = out.values().data();
    const std::size_t out_stride = axis_total * inner;
    std::size_t offset = 0;
    for (const Tensor& p : parts) {
        const std::size_t block = p.shape()[axis] * inner;
        const double* pp = p.values().data();
        for (std::size_t o = 0; o < outer; ++o) {
            std::memcpy(op + o * out_stride + offset, pp + o * block, block * sizeof(double));
        }
        offset += block;
    }

    bool any_tracked = false;
    for (const Tensor& p : parts) any_tracked = any_tracked || detail::grad_needed(p);
    if (any_tracked) {
        out.mark_tracked();
        std::vector<std::shared_ptr<detail::TensorNode>> part_nodes;
        std::vector<char> needs;
        std::vector<std::size_t> blocks;
        for (const Tensor& p : parts) {
            part_nodes.push_back(p.node());
            needs.push_back(p.tracked() ? 1 : 0);
            blocks.push_back(p.shape()[axis] * inner);
        }
        auto on = out.node();
        Tape::current()->record([part_nodes, needs, blocks, on, outer, out_stride]() {
            const auto* go = detail::output_grad(on);
            if (!go) return;
            std::size_t offset = 0;
            for (std::size_t pi = 0; pi < part_nodes.size(); ++pi) {
                const std::size_t block = blocks[pi];
                if (needs[pi]) {
                    auto& pn = *part_nodes[pi];
                    pn.ensure_grad();
                    for (std::size_t o = 0; o < outer; ++o) {
                        const double* gsrc = go->data() + o * out_stride + offset;
                        double* gdst = pn.grad.data() + o * block;
                        for (std::size_t i = 0; i < block; ++i) gdst[i] += gsrc[i];
                    }
                }
                offset += block;
            }
        });
    }
    return out;
}

inline Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t count) {
    if (axis >= x.ndim()) {
        throw DimensionError("slice axis " + std::to_string(axis) + " out of range for " +
                             shape_str(x.shape()));
    }
    if (start + count > x.shape()[axis]) {
        throw DimensionError("slice [" + std::to_string(start) + ", " +
                             std::to_string(start + count) + ") exceeds axis extent " +
                             std::to_string(x.shape()[axis]));
    }
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= x.shape()[i];
    for (std::size_t i = axis + 1; i < x.ndim(); ++i) inner *= x.shape()[i];
    Shape out_shape = x.shape();
    out_shape[axis] = count;
    Tensor out(out_shape);
    const std::size_t in_stride = x.shape()[axis] * inner;
    const std::size_t out_stride = count * inner;
    const double* xp = x.values().data();
    double* op = out.values().data();
    for (std::size_t o = 0; o < outer; ++o) {
        std::memcpy(op + o * out_stride, xp + o * in_stride + start * inner,
                    out_stride * sizeof(double));
    }
    if (detail::grad_needed(x)) {
        out.mark_tracked();
        auto xn = x.node(), on = out.node();
        Tape::current()->record([xn, on, outer, inner, in_stride, out_stride, start]() {
            const auto* go = detail::output_grad(on);
            if (!go) return;
            xn->ensure_grad();
            for (std::size_t o = 0; o < outer; ++o) {
                const double* gsrc = go->data() + o * out_stride;
                double* gdst = xn->grad.data() + o * in_stride + start * inner;
                for (std::size_t i = 0; i < out_stride; ++i) gdst[i] += gsrc[i];
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Softmax
// ---------------------------------------------------------------------------

/// Softmax along the last axis with max-subtraction for stability.
inline Tensor softmax_lastdim(const Tensor& x) {
    if (x.ndim() < 1 || x.shape().back() == 0) {
        throw DimensionError("softmax_lastdim requires a non-empty last axis, got " +
                             shape_str(x.shape()));
    }
    const std::size_t n = x.shape().back();
    const std::size_t rows = x.numel() / n;
    Tensor out(x.shape());
    const double* xp = x.values().data();
    double* op = out.values().data();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = xp + r * n;
        double* orow = op + r * n;
        double mx = xr[0];
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, xr[j]);
        double total = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            orow[j] = std::exp(xr[j] - mx);
            total += orow[j];
        }
        const double inv = 1.0 / total;
        for (std::size_t j = 0; j < n; ++j) orow[j] *= inv;
    }
    if (detail::grad_needed(x)) {
        out.mark_tracked();
        auto xn = x.node(), on = out.node();
        Tape::current()->record([xn, on, rows, n]() {
            const auto* go = detail::output_grad(on);
            if (!go) return;
            xn->ensure_grad();
            for (std::size_t r = 0; r < rows; ++r) {
                const double* yr = on->values.data() + r * n;
                const double* gr = go->data() + r * n;
                double dot = 0.0;
                for (std::size_t j = 0; j < n; ++j) dot += gr[j] * yr[j];
                double* xg = xn->grad.data() + r * n;
                for (std::size_t j = 0; j < n; ++j) xg[j] += yr[j] * (gr[j] - dot);
            }
        });
    }
    return out;
}

/// Per-row key visibility for attention, flattened [batch, tokens].
struct KeyMask {
    std::size_t batch = 0;
    std::size_t tokens = 0;
    std::vector<std::uint8_t> allowed;

    bool allows(std::size_t b, std::size_t j) const { return allowed[b * tokens + j] != 0; }
};

/// Softmax over [.., T, T] score matrices whose support per query row i is
/// restricted to the causal prefix j <= i and/or the columns a KeyMask allows.
/// Entries outside the support are exactly zero. A query position always sees
/// itself, which keeps every row well defined.
inline Tensor masked_softmax_lastdim(const Tensor& scores, bool causal,
                                     const KeyMask* mask = nullptr) {
    if (!causal && mask == nullptr) return softmax_lastdim(scores);
    if (scores.ndim() < 2 || scores.shape()[scores.ndim() - 1] != scores.shape()[scores.ndim() - 2]) {
        throw DimensionError("masked softmax requires square trailing dims, got " +
                             shape_str(scores.shape()));
    }
    const std::size_t t = scores.shape().back();
    const std::size_t nb = scores.numel() / (t * t);
    if (mask != nullptr && (mask->batch != nb || mask->tokens != t)) {
        throw DimensionError("key mask extent mismatch");
    }
    Tensor out(scores.shape());
    const double* xp = scores.values().data();
    double* op = out.values().data();
    auto in_support = [&](std::size_t b, std::size_t i, std::size_t j) {
        if (causal && j > i) return false;
        if (j == i) return true;
        return mask == nullptr || mask->allows(b, j);
    };
    for (std::size_t b = 0; b < nb; ++b) {
        for (std::size_t i = 0; i < t; ++i) {
            const double* xr = xp + (b * t + i) * t;
            double* orow = op + (b * t + i) * t;
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < t; ++j) {
                if (in_support(b, i, j)) mx = std::max(mx, xr[j]);
            }
            double total = 0.0;
            for (std::size_t j = 0; j < t; ++j) {
                if (in_support(b, i, j)) {
                    orow[j] = std::exp(xr[j] - mx);
                    total += orow[j];
                } else {
                    orow[j] = 0.0;
                }
            }
            const double inv = 1.0 / total;
            for (std::size_t j = 0; j < t; ++j) orow[j] *= inv;
        }
    }
    if (detail::grad_needed(scores)) {
        out.mark_tracked();
        auto xn = scores.node(), on = out.node();
        Tape::current()->record([xn, on, nb, t]() {
            const auto* go = detail::output_grad(on);
            if (!go) return;
            xn->ensure_grad();
            // Support positions are identified by nonzero outputs; softmax
            // values inside the support are strictly positive.
            for (std::size_t r = 0; r < nb * t; ++r) {
                const double* yr = on->values.data() + r * t;
                const double* gr = go->data() + r * t;
                double dot = 0.0;
                for (std::size_t j = 0; j < t; ++j) dot += gr[j] * yr[j];
                double* xg = xn->grad.data() + r * t;
                for (std::size_t j = 0; j < t; ++j) {
                    if (yr[j] != 0.0) xg[j] += yr[j] * (gr[j] - dot);
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Pooling and convolution
// ---------------------------------------------------------------------------

/// Average pooling along the last axis. Output length floor((L-kernel)/stride)+1;
/// trailing elements that do not fill a window are dropped.
inline Tensor avg_pool1d(const Tensor& x, std::size_t kernel, std::size_t stride) {
    if (kernel < 1 || stride < 1) {
        throw ConfigError("avg_pool1d kernel and stride must be >= 1");
    }
    if (x.ndim() < 1) throw DimensionError("avg_pool1d on a scalar");
    const std::size_t len = x.shape().back();
    if (len < kernel) {
        throw DimensionError("avg_pool1d input length " + std::to_string(len) +
                             " shorter than kernel " + std::to_string(kernel));
    }
    const std::size_t out_len = (len - kernel) / stride + 1;
    const std::size_t rows = x.numel() / len;
    Shape out_shape = x.shape();
    out_shape.back() = out_len;
    Tensor out(out_shape);
    const double* xp = x.values().data();
    double* op = out.values().data();
    const double inv_k = 1.0 / static_cast<double>(kernel);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = xp + r * len;
        double* orow = op + r * out_len;
        for (std::size_t o = 0; o < out_len; ++o) {
            double acc = 0.0;
            const double* w = xr + o * stride;
            for (std::size_t k = 0; k < kernel; ++k) acc += w[k];
            orow[o] = acc * inv_k;
        }
    }
    if (detail::grad_needed(x)) {
        out.mark_tracked();
        auto xn = x.node(), on = out.node();
        Tape::current()->record([xn, on, rows, len, out_len, kernel, stride, inv_k]() {
            const auto* go = detail::output_grad(on);
            if (!go) return;
            xn->ensure_grad();
            for (std::size_t r = 0; r < rows; ++r) {
                const double* gr = go->data() + r * out_len;
                double* xg = xn->grad.data() + r * len;
                for (std::size_t o = 0; o < out_len; ++o) {
                    const double g = gr[o] * inv_k;
                    double* w = xg + o * stride;
                    for (std::size_t k = 0; k < kernel; ++k) w[k] += g;
                }
            }
        });
    }
    return out;
}

/// Same-length 1-D convolution with zero padding of (kernel-1)/2 per side.
/// x is [L, C_in] or [B, L, C_in], w is [kernel, C_in, C_out], b is [C_out].
inline Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b) {
    if (w.ndim() != 3) {
        throw DimensionError("conv1d weight must be [kernel, C_in, C_out], got " +
                             shape_str(w.shape()));
    }
    const std::size_t kernel = w.shape()[0];
    if (kernel % 2 == 0) {
        throw ConfigError("conv1d kernel must be odd, got " + std::to_string(kernel));
    }
    if (x.ndim() != 2 && x.ndim() != 3) {
        throw DimensionError("conv1d input must be [L, C_in] or [B, L, C_in], got " +
                             shape_str(x.shape()));
    }
    const std::size_t c_in = w.shape()[1];
    const std::size_t c_out = w.shape()[2];
    const std::size_t nb = x.ndim() == 3 ? x.shape()[0] : 1;
    const std::size_t len = x.shape()[x.ndim() - 2];
    if (x.shape().back() != c_in) {
        throw DimensionError("conv1d channel mismatch: input " + shape_str(x.shape()) +
                             " vs weight " + shape_str(w.shape()));
    }
    if (b.numel() != c_out) {
        throw DimensionError("conv1d bias length " + std::to_string(b.numel()) +
                             " != C_out " + std::to_string(c_out));
    }
    const std::size_t pad = (kernel - 1) / 2;
    Shape out_shape = x.shape();
    out_shape.back() = c_out;
    Tensor out(out_shape);
    const double* xp = x.values().data();
    const double* wp = w.values().data();
    const double* bp = b.values().data();
    double* op = out.values().data();
    for (std::size_t s = 0; s < nb; ++s) {
        const double* xs = xp + s * len * c_in;
        double* os = op + s * len * c_out;
        for (std::size_t t = 0; t < len; ++t) {
            double* orow = os + t * c_out;
            for (std::size_t c = 0; c < c_out; ++c) orow[c] = bp[c];
            for (std::size_t k = 0; k < kernel; ++k) {
                const std::ptrdiff_t ti = static_cast<std::ptrdiff_t>(t + k) -
                                          static_cast<std::ptrdiff_t>(pad);
                if (ti < 0 || ti >= static_cast<std::ptrdiff_t>(len)) continue;
                const double* xrow = xs + static_cast<std::size_t>(ti) * c_in;
                const double* wk = wp + k * c_in * c_out;
                for (std::size_t ci = 0; ci < c_in; ++ci) {
                    const double xv = xrow[ci];
                    if (xv == 0.0) continue;
                    const double* wrow = wk + ci * c_out;
                    for (std::size_t c = 0; c < c_out; ++c) orow[c] += xv * wrow[c];
                }
            }
        }
    }
    if (detail::grad_needed(x) || detail::grad_needed(w) || detail::grad_needed(b)) {
        out.mark_tracked();
        auto xn = x.node(), wn = w.node(), bn = b.node(), on = out.node();
        const bool need_x = x.tracked(), need_w = w.tracked(), need_b = b.tracked();
        Tape::current()->record([xn, wn, bn, on, need_x, need_w, need_b,
                                 nb, len, c_in, c_out, kernel, pad]() {
            const auto* go = detail::output_grad(on);
            if (!go) return;
            if (need_x) xn->ensure_grad();
            if (need_w) wn->ensure_grad();
            if (need_b) bn->ensure_grad();
            for (std::size_t s = 0; s < nb; ++s) {
                const double* gs = go->data() + s * len * c_out;
                const double* xs = xn->values.data() + s * len * c_in;
                for (std::size_t t = 0; t < len; ++t) {
                    const double* grow = gs + t * c_out;
                    if (need_b) {
                        for (std::size_t c = 0; c < c_out; ++c) bn->grad[c] += grow[c];
                    }
                    for (std::size_t k = 0; k < kernel; ++k) {
                        const std::ptrdiff_t ti = static_cast<std::ptrdiff_t>(t + k) -
                                                  static_cast<std::ptrdiff_t>(pad);
                        if (ti < 0 || ti >= static_cast<std::ptrdiff_t>(len)) continue;
                        const double* wk = wn->values.data() + k * c_in * c_out;
                        for (std::size_t ci = 0; ci < c_in; ++ci) {
                            const std::size_t xi = static_cast<std::size_t>(ti) * c_in + ci;
                            if (need_x) {
                                const double* wrow = wk + ci * c_out;
                                double acc = 0.0;
                                for (std::size_t c = 0; c < c_out; ++c) acc += grow[c] * wrow[c];
                                xn->grad[s * len * c_in + xi] += acc;
                            }
                            if (need_w) {
                                const double xv = xs[xi];
                                if (xv != 0.0) {
                                    double* wgrow = wn->grad.data() + k * c_in * c_out + ci * c_out;
                                    for (std::size_t c = 0; c < c_out; ++c) wgrow[c] += xv * grow[c];
                                }
                            }
                        }
                    }
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Batch normalization
// ---------------------------------------------------------------------------

/// Per-feature normalization state. Statistics are pooled over every axis
/// except the trailing feature axis; scale and shift are per-feature.
struct BatchNorm {
    Tensor gamma;
    Tensor beta;
    std::vector<double> running_mean;
    std::vector<double> running_var;
    double momentum = 0.1;
    double eps = 1e-5;

    explicit BatchNorm(std::size_t features)
        : gamma(Shape{features}, 1.0, true),
          beta(Shape{features}, 0.0, true),
          running_mean(features, 0.0),
          running_var(features, 1.0) {}

    std::size_t features() const { return running_mean.size(); }
};

inline Tensor batchnorm(const Tensor& x, BatchNorm& state, bool training) {
    if (x.ndim() < 2) {
        throw DimensionError("batchnorm input must have a batch axis, got " + shape_str(x.shape()));
    }
    const std::size_t d = x.shape().back();
    if (d != state.features()) {
        throw DimensionError("batchnorm feature extent " + std::to_string(d) +
                             " != state features " + std::to_string(state.features()));
    }
    const std::size_t rows = x.numel() / d;
    if (x.shape()[0] == 0 || rows == 0) {
        throw DimensionError("batchnorm on an empty batch");
    }

    std::vector<double> mean(d), var(d);
    if (training) {
        std::fill(mean.begin(), mean.end(), 0.0);
        std::fill(var.begin(), var.end(), 0.0);
        const double* xp = x.values().data();
        for (std::size_t r = 0; r < rows; ++r) {
            const double* xr = xp + r * d;
            for (std::size_t c = 0; c < d; ++c) mean[c] += xr[c];
        }
        const double inv_rows = 1.0 / static_cast<double>(rows);
        for (std::size_t c = 0; c < d; ++c) mean[c] *= inv_rows;
        for (std::size_t r = 0; r < rows; ++r) {
            const double* xr = xp + r * d;
            for (std::size_t c = 0; c < d; ++c) {
                const double dv = xr[c] - mean[c];
                var[c] += dv * dv;
            }
        }
        for (std::size_t c = 0; c < d; ++c) var[c] *= inv_rows;
        for (std::size_t c = 0; c < d; ++c) {
            state.running_mean[c] = (1.0 - state.momentum) * state.running_mean[c] +
                                    state.momentum * mean[c];
            state.running_var[c] = (1.0 - state.momentum) * state.running_var[c] +
                                   state.momentum * var[c];
        }
    } else {
        mean = state.running_mean;
        var = state.running_var;
    }

    std::vector<double> inv_std(d);
    for (std::size_t c = 0; c < d; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + state.eps);

    Tensor out(x.shape());
    {
        const double* xp = x.values().data();
        double* op = out.values().data();
        const double* g = state.gamma.values().data();
        const double* b = state.beta.values().data();
        for (std::size_t r = 0; r < rows; ++r) {
            const double* xr = xp + r * d;
            double* orow = op + r * d;
            for (std::size_t c = 0; c < d; ++c) {
                orow[c] = g[c] * (xr[c] - mean[c]) * inv_std[c] + b[c];
            }
        }
    }

    const bool any = detail::grad_needed(x) || detail::grad_needed(state.gamma) ||
                     detail::grad_needed(state.beta);
    if (any) {
        out.mark_tracked();
        auto xn = x.node(), on = out.node();
        auto gn = state.gamma.node(), bn = state.beta.node();
        const bool need_x = x.tracked();
        const bool need_g = state.gamma.tracked();
        const bool need_b = state.beta.tracked();
        Tape::current()->record([xn, on, gn, bn, need_x, need_g, need_b,
                                 mean, inv_std, rows, d, training]() {
            const auto* go = detail::output_grad(on);
            if (!go) return;
            if (need_x) xn->ensure_grad();
            if (need_g) gn->ensure_grad();
            if (need_b) bn->ensure_grad();
            const double inv_rows = 1.0 / static_cast<double>(rows);
            // Column-wise sums needed by the training-mode x gradient.
            std::vector<double> sum_g(d, 0.0), sum_gx(d, 0.0);
            for (std::size_t r = 0; r < rows; ++r) {
                const double* gr = go->data() + r * d;
                const double* xr = xn->values.data() + r * d;
                for (std::size_t c = 0; c < d; ++c) {
                    const double xhat = (xr[c] - mean[c]) * inv_std[c];
                    sum_g[c] += gr[c];
                    sum_gx[c] += gr[c] * xhat;
                    if (need_g) gn->grad[c] += gr[c] * xhat;
                    if (need_b) bn->grad[c] += gr[c];
                }
            }
            if (need_x) {
                for (std::size_t r = 0; r < rows; ++r) {
                    const double* gr = go->data() + r * d;
                    const double* xr = xn->values.data() + r * d;
                    double* xg = xn->grad.data() + r * d;
                    for (std::size_t c = 0; c < d; ++c) {
                        const double scale_c = gn->values[c] * inv_std[c];
                        if (training) {
                            const double xhat = (xr[c] - mean[c]) * inv_std[c];
                            xg[c] += scale_c * (gr[c] - inv_rows * sum_g[c] -
                                                xhat * inv_rows * sum_gx[c]);
                        } else {
                            xg[c] += scale_c * gr[c];
                        }
                    }
                }
            }
        });
    }
    return out;
}

} // namespace timeformer
