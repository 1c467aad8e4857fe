#pragma once

// Decay-modulated self-attention. Attention weights are multiplied by an
// exponential recency kernel and causally masked; the block wraps multi-head
// attention with a residual connection and batch normalization.

#include "timeformer/ops.hpp"
#include "timeformer/rng.hpp"

#include <map>
#include <string>
#include <utility>
#include <vector>

namespace timeformer {

struct MoSAConfig {
    std::size_t model_dim = 64;
    std::size_t num_heads = 4;
    double gamma = 0.1;
    double mu = 0.0;
    double epsilon = 1.0;
    bool causal = true;
    bool hawkes = true;
    bool renormalize_rows = false;

    std::size_t head_dim() const { return model_dim / num_heads; }

    void validate() const {
        if (model_dim < 1) throw ConfigError("model_dim must be >= 1");
        if (num_heads < 1) throw ConfigError("num_heads must be >= 1");
        if (model_dim % num_heads != 0) {
            throw ConfigError("num_heads " + std::to_string(num_heads) +
                              " does not divide model_dim " + std::to_string(model_dim));
        }
        if (gamma < 0.0) throw ConfigError("gamma must be >= 0, got " + std::to_string(gamma));
    }
};

/// Recency kernel [T, T]: entry (i, j) is mu + epsilon * exp(-gamma * |i - j|),
/// which for an attended past position j <= i decays in the gap i - j.
inline Tensor hawkes_modulation(std::size_t t, double gamma, double mu = 0.0,
                                double epsilon = 1.0) {
    if (gamma < 0.0) {
        throw ConfigError("decay rate must be >= 0, got " + std::to_string(gamma));
    }
    if (t < 1) throw DimensionError("modulation needs at least one position");
    std::vector<double> by_gap(t);
    for (std::size_t d = 0; d < t; ++d) {
        by_gap[d] = mu + epsilon * std::exp(-gamma * static_cast<double>(d));
    }
    Tensor omega(Shape{t, t});
    double* op = omega.values().data();
    for (std::size_t i = 0; i < t; ++i) {
        for (std::size_t j = 0; j < t; ++j) {
            op[i * t + j] = by_gap[i >= j ? i - j : j - i];
        }
    }
    return omega;
}

/// softmax(Q K^T / sqrt(d)) over full rows. Q, K are [T, d] or batched
/// [.., T, d]; every output row sums to 1.
inline Tensor raw_attention(const Tensor& q, const Tensor& k) {
    if (q.ndim() < 2 || k.ndim() < 2) {
        throw DimensionError("attention inputs must be rank >= 2, got " +
                             shape_str(q.shape()) + " and " + shape_str(k.shape()));
    }
    if (q.shape()[q.ndim() - 2] == 0) {
        throw DimensionError("attention over zero tokens");
    }
    const std::size_t d = q.shape().back();
    if (d == 0 || d != k.shape().back()) {
        throw DimensionError("query/key depth mismatch: " + shape_str(q.shape()) +
                             " vs " + shape_str(k.shape()));
    }
    Tensor scores = scale(matmul(q, transpose_last2(k)), 1.0 / std::sqrt(static_cast<double>(d)));
    return softmax_lastdim(scores);
}

/// A (*) omega, then an exact lower-triangular mask when causal. Rows are not
/// rescaled afterwards unless renormalize is set. omega is treated as a
/// constant; gradients flow to A only.
inline Tensor apply_modulation_and_mask(const Tensor& a, const Tensor& omega, bool causal,
                                        bool renormalize = false) {
    if (a.ndim() < 2 || a.shape()[a.ndim() - 1] != a.shape()[a.ndim() - 2]) {
        throw DimensionError("attention matrix must have square trailing dims, got " +
                             shape_str(a.shape()));
    }
    const std::size_t t = a.shape().back();
    if (omega.ndim() != 2 || omega.shape()[0] != t || omega.shape()[1] != t) {
        throw DimensionError("modulation shape " + shape_str(omega.shape()) +
                             " does not match attention " + shape_str(a.shape()));
    }
    const std::size_t nb = a.numel() / (t * t);
    Tensor out(a.shape());
    const double* ap = a.values().data();
    const double* wp = omega.values().data();
    double* op = out.values().data();
    std::vector<double> inv_mass;
    if (renormalize) inv_mass.assign(nb * t, 0.0);
    for (std::size_t b = 0; b < nb; ++b) {
        for (std::size_t i = 0; i < t; ++i) {
            const std::size_t row = (b * t + i) * t;
            const std::size_t keep = causal ? i + 1 : t;
            double mass = 0.0;
            for (std::size_t j = 0; j < keep; ++j) {
                op[row + j] = ap[row + j] * wp[i * t + j];
                mass += op[row + j];
            }
            for (std::size_t j = keep; j < t; ++j) op[row + j] = 0.0;
            if (renormalize) {
                const double inv = mass > 0.0 ? 1.0 / mass : 0.0;
                inv_mass[b * t + i] = inv;
                for (std::size_t j = 0; j < keep; ++j) op[row + j] *= inv;
            }
        }
    }
    if (detail::grad_needed(a)) {
        out.mark_tracked();
        auto an = a.node(), wn = omega.node(), on = out.node();
        Tape::current()->record([an, wn, on, nb, t, causal, renormalize,
                                 inv_mass = std::move(inv_mass)]() {
            const auto* go = detail::output_grad(on);
            if (!go) return;
            an->ensure_grad();
            for (std::size_t b = 0; b < nb; ++b) {
                for (std::size_t i = 0; i < t; ++i) {
                    const std::size_t row = (b * t + i) * t;
                    const std::size_t keep = causal ? i + 1 : t;
                    if (!renormalize) {
                        for (std::size_t j = 0; j < keep; ++j) {
                            an->grad[row + j] += (*go)[row + j] * wn->values[i * t + j];
                        }
                    } else {
                        // y_j = m_j / S with m_j = a_j w_j, S = sum over kept m.
                        const double inv = inv_mass[b * t + i];
                        double dot = 0.0;
                        for (std::size_t j = 0; j < keep; ++j) {
                            dot += (*go)[row + j] * on->values[row + j];
                        }
                        for (std::size_t j = 0; j < keep; ++j) {
                            an->grad[row + j] += wn->values[i * t + j] * inv *
                                                 ((*go)[row + j] - dot);
                        }
                    }
                }
            }
        });
    }
    return out;
}

/// Weighted sum of value rows; with a causal attention matrix, output row t
/// depends only on value rows 0..t.
inline Tensor aggregate(const Tensor& a, const Tensor& v) { return matmul(a, v); }

struct QKV {
    std::vector<Tensor> q;
    std::vector<Tensor> k;
    std::vector<Tensor> v;
};

/// Multi-head decay-modulated attention block with residual connection and
/// batch normalization. Owns per-head projections W_q, W_k, W_v of shape
/// [F, d] and an output projection [H*d, D]. When the input feature dim
/// differs from model_dim, a learned input projection aligns the residual.
class MoSABlock {
public:
    MoSABlock(std::size_t input_dim, MoSAConfig config, Rng& rng)
        : cfg_(config), input_dim_(input_dim), norm_(config.model_dim) {
        cfg_.validate();
        if (input_dim_ < 1) throw ConfigError("attention input dim must be >= 1");
        const std::size_t d = cfg_.head_dim();
        for (std::size_t h = 0; h < cfg_.num_heads; ++h) {
            wq_.push_back(init_weight({input_dim_, d}, input_dim_, rng));
            wk_.push_back(init_weight({input_dim_, d}, input_dim_, rng));
            wv_.push_back(init_weight({input_dim_, d}, input_dim_, rng));
        }
        wo_ = init_weight({cfg_.num_heads * d, cfg_.model_dim}, cfg_.num_heads * d, rng);
        if (input_dim_ != cfg_.model_dim) {
            in_proj_ = init_weight({input_dim_, cfg_.model_dim}, input_dim_, rng);
            has_in_proj_ = true;
        }
    }

    /// x is [B, T, F] (or [T, F], treated as a batch of one). Returns the same
    /// leading shape with F replaced by model_dim.
    Tensor forward(const Tensor& x, bool training, const KeyMask* mask = nullptr) {
        const bool flat = x.ndim() == 2;
        if (x.ndim() != 2 && x.ndim() != 3) {
            throw DimensionError("attention block input must be [B, T, F] or [T, F], got " +
                                 shape_str(x.shape()));
        }
        if (x.shape().back() != input_dim_) {
            throw DimensionError("attention block feature dim " + shape_str(x.shape()) +
                                 " != configured " + std::to_string(input_dim_));
        }
        Tensor xb = flat ? reshape(x, {1, x.shape()[0], x.shape()[1]}) : x;
        const std::size_t t = xb.shape()[1];
        if (t == 0) throw DimensionError("attention block over zero tokens");

        const std::size_t d = cfg_.head_dim();
        const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
        const Tensor* omega = cfg_.hawkes ? &omega_for(t) : nullptr;

        if (capture_) captured_.clear();
        std::vector<Tensor> heads;
        heads.reserve(cfg_.num_heads);
        for (std::size_t h = 0; h < cfg_.num_heads; ++h) {
            Tensor q = matmul(xb, wq_[h]);
            Tensor k = matmul(xb, wk_[h]);
            Tensor v = matmul(xb, wv_[h]);
            Tensor scores = scale(matmul(q, transpose_last2(k)), inv_sqrt_d);
            Tensor attn = masked_softmax_lastdim(scores, cfg_.causal, mask);
            if (omega != nullptr) {
                attn = apply_modulation_and_mask(attn, *omega, cfg_.causal,
                                                 cfg_.renormalize_rows);
            }
            if (capture_) captured_.push_back(attn.detached_copy());
            heads.push_back(matmul(attn, v));
        }
        Tensor merged = cfg_.num_heads == 1 ? heads[0] : concat(heads, 2);
        Tensor attended = matmul(merged, wo_);
        Tensor residual = has_in_proj_ ? matmul(xb, in_proj_) : xb;
        Tensor out = batchnorm(add(residual, attended), norm_, training);
        return flat ? reshape(out, {t, cfg_.model_dim}) : out;
    }

    /// Per-head Q/K/V for one input, in head order. Exposed for inspection;
    /// forward() computes the same projections internally.
    QKV project_qkv(const Tensor& x) const {
        if (x.shape().back() != input_dim_) {
            throw DimensionError("projection feature dim " + shape_str(x.shape()) +
                                 " != configured " + std::to_string(input_dim_));
        }
        QKV out;
        for (std::size_t h = 0; h < cfg_.num_heads; ++h) {
            out.q.push_back(matmul(x, wq_[h]));
            out.k.push_back(matmul(x, wk_[h]));
            out.v.push_back(matmul(x, wv_[h]));
        }
        return out;
    }

    void set_capture(bool on) { capture_ = on; }

    std::size_t captured_heads() const { return captured_.size(); }

    /// One [T, T] attention matrix from the most recent captured forward
    /// pass, selected by head and batch row.
    Tensor captured_matrix(std::size_t head, std::size_t batch = 0) const {
        if (head >= captured_.size()) {
            throw ContractError("head " + std::to_string(head) + " out of range; " +
                                std::to_string(captured_.size()) + " captured");
        }
        const Tensor& full = captured_[head];
        const std::size_t t = full.shape().back();
        const std::size_t nb = full.numel() / (t * t);
        if (batch >= nb) {
            throw ContractError("batch row " + std::to_string(batch) + " out of range; " +
                                std::to_string(nb) + " captured");
        }
        Tensor m(Shape{t, t});
        std::copy_n(full.values().data() + batch * t * t, t * t, m.values().data());
        return m;
    }

    const MoSAConfig& config() const { return cfg_; }
    std::size_t input_dim() const { return input_dim_; }
    BatchNorm& norm() { return norm_; }

    void collect_parameters(std::vector<Tensor>& out) {
        for (auto& w : wq_) out.push_back(w);
        for (auto& w : wk_) out.push_back(w);
        for (auto& w : wv_) out.push_back(w);
        out.push_back(wo_);
        if (has_in_proj_) out.push_back(in_proj_);
        out.push_back(norm_.gamma);
        out.push_back(norm_.beta);
    }

    void collect_named(const std::string& prefix,
                       std::vector<std::pair<std::string, Tensor>>& out) {
        for (std::size_t h = 0; h < cfg_.num_heads; ++h) {
            const std::string hs = std::to_string(h);
            out.emplace_back(prefix + ".wq" + hs, wq_[h]);
            out.emplace_back(prefix + ".wk" + hs, wk_[h]);
            out.emplace_back(prefix + ".wv" + hs, wv_[h]);
        }
        out.emplace_back(prefix + ".wo", wo_);
        if (has_in_proj_) out.emplace_back(prefix + ".in_proj", in_proj_);
        out.emplace_back(prefix + ".norm.gamma", norm_.gamma);
        out.emplace_back(prefix + ".norm.beta", norm_.beta);
    }

    void collect_named_buffers(const std::string& prefix,
                               std::vector<std::pair<std::string, std::vector<double>*>>& out) {
        out.emplace_back(prefix + ".norm.running_mean", &norm_.running_mean);
        out.emplace_back(prefix + ".norm.running_var", &norm_.running_var);
    }

private:
    static Tensor init_weight(Shape shape, std::size_t fan_in, Rng& rng) {
        const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
        Tensor w(shape, 0.0, true);
        for (double& v : w.values()) v = rng.uniform(-bound, bound);
        return w;
    }

    const Tensor& omega_for(std::size_t t) {
        auto it = omega_cache_.find(t);
        if (it == omega_cache_.end()) {
            it = omega_cache_.emplace(t, hawkes_modulation(t, cfg_.gamma, cfg_.mu, cfg_.epsilon))
                     .first;
        }
        return it->second;
    }

    MoSAConfig cfg_;
    std::size_t input_dim_;
    std::vector<Tensor> wq_, wk_, wv_;
    Tensor wo_;
    Tensor in_proj_;
    bool has_in_proj_ = false;
    BatchNorm norm_;
    bool capture_ = false;
    std::vector<Tensor> captured_;
    std::map<std::size_t, Tensor> omega_cache_;
};

} // namespace timeformer
