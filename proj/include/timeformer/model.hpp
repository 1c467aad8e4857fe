#pragma once

// Forecasting model: multi-scale average-pool sampling, per-scale conv
// embedding, square-patch segmentation, intra-patch and inter-patch attention
// stages, and a linear projection head. Channels are handled independently by
// one shared model. Ablation variants and a plain token-transformer baseline
// are built from the same parts.

#include "timeformer/attention.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace timeformer {

enum class Variant {
    full,
    no_segmentation,
    standard_attention,
    vanilla_transformer,
    vanilla_transformer_mosa,
};

inline std::string variant_to_string(Variant v) {
    switch (v) {
        case Variant::full: return "full";
        case Variant::no_segmentation: return "no_segmentation";
        case Variant::standard_attention: return "standard_attention";
        case Variant::vanilla_transformer: return "vanilla_transformer";
        case Variant::vanilla_transformer_mosa: return "vanilla_transformer_mosa";
    }
    throw ConfigError("unhandled variant value");
}

inline Variant variant_from_string(const std::string& s) {
    if (s == "full") return Variant::full;
    if (s == "no_segmentation") return Variant::no_segmentation;
    if (s == "standard_attention") return Variant::standard_attention;
    if (s == "vanilla_transformer") return Variant::vanilla_transformer;
    if (s == "vanilla_transformer_mosa") return Variant::vanilla_transformer_mosa;
    throw ConfigError("unknown variant '" + s + "'");
}

enum class Activation { relu, gelu };

inline std::string activation_to_string(Activation a) {
    return a == Activation::relu ? "relu" : "gelu";
}

inline Activation activation_from_string(const std::string& s) {
    if (s == "relu") return Activation::relu;
    if (s == "gelu") return Activation::gelu;
    throw ConfigError("unknown activation '" + s + "'");
}

struct ModelConfig {
    std::size_t lookback = 96;
    std::size_t horizon = 24;
    std::size_t num_scales = 1;
    std::size_t model_dim = 64;
    std::size_t num_heads = 4;
    double gamma = 0.1;
    std::size_t conv_kernel = 3;
    std::size_t ffn_hidden = 0;
    Variant variant = Variant::full;
    std::size_t stage_depth = 1;
    std::size_t vanilla_depth = 2;
    Activation activation = Activation::relu;
    bool mask_padding = false;
    bool renormalize_rows = false;

    std::size_t hidden() const { return ffn_hidden == 0 ? 2 * model_dim : ffn_hidden; }

    void validate() const {
        if (lookback < 1) throw ConfigError("lookback must be >= 1");
        if (horizon < 1) throw ConfigError("horizon must be >= 1");
        if (num_scales < 1) throw ConfigError("num_scales must be >= 1");
        if (lookback < num_scales) {
            throw ConfigError("lookback " + std::to_string(lookback) +
                              " shorter than num_scales " + std::to_string(num_scales));
        }
        if (conv_kernel % 2 == 0) {
            throw ConfigError("conv_kernel must be odd, got " + std::to_string(conv_kernel));
        }
        if (stage_depth < 1 || vanilla_depth < 1) {
            throw ConfigError("attention stage depth must be >= 1");
        }
        MoSAConfig att;
        att.model_dim = model_dim;
        att.num_heads = num_heads;
        att.gamma = gamma;
        att.validate();
    }
};

/// Length of the series at sampling scale s under kernel=s, stride=s pooling.
inline std::size_t scale_length(std::size_t lookback, std::size_t s) {
    return lookback / s;
}

struct PatchGeometry {
    std::size_t len = 0;
    std::size_t patches = 0;
    std::size_t patch_len = 0;
    std::size_t pad = 0;
};

/// Square patch layout: patches == patch_len == smallest r with r*r >= len.
inline PatchGeometry patch_geometry(std::size_t len) {
    if (len < 1) throw DimensionError("patch geometry of an empty sequence");
    std::size_t r = static_cast<std::size_t>(std::sqrt(static_cast<double>(len)));
    while (r * r < len) ++r;
    while (r > 1 && (r - 1) * (r - 1) >= len) --r;
    return {len, r, r, r * r - len};
}

/// Pooled views of a series at scales 1..S, coarsest last. Scale 1 is the
/// input itself. Works on [L] or [R, L] along the last axis.
inline std::vector<Tensor> multi_scale_sample(const Tensor& x, std::size_t scales) {
    if (scales < 1) throw ConfigError("num_scales must be >= 1");
    if (x.ndim() < 1 || x.shape().back() < scales) {
        throw DimensionError("series of shape " + shape_str(x.shape()) +
                             " too short for " + std::to_string(scales) + " scales");
    }
    std::vector<Tensor> out;
    out.reserve(scales);
    out.push_back(x);
    for (std::size_t s = 2; s <= scales; ++s) out.push_back(avg_pool1d(x, s, s));
    return out;
}

struct PatchSet {
    Tensor patches;
    std::size_t pad_len = 0;
};

/// Splits an embedded sequence [L, D] into square patches [P, K, D], with
/// zeros prepended on the oldest side so recent steps fill the final slots.
inline PatchSet segment(const Tensor& x) {
    if (x.ndim() != 2) {
        throw DimensionError("segment expects [L, D], got " + shape_str(x.shape()));
    }
    const PatchGeometry geo = patch_geometry(x.shape()[0]);
    const std::size_t d = x.shape()[1];
    Tensor padded = x;
    if (geo.pad > 0) {
        padded = concat({Tensor(Shape{geo.pad, d}), x}, 0);
    }
    return {reshape(padded, {geo.patches, geo.patch_len, d}), geo.pad};
}

/// Two-layer perceptron with one hidden activation.
struct FeedForward {
    Tensor w1, b1, w2, b2;
    Activation act;

    FeedForward(std::size_t in, std::size_t hidden, std::size_t out, Activation act_, Rng& rng)
        : w1(init(in, hidden, rng)), b1(Shape{hidden}, 0.0, true),
          w2(init(hidden, out, rng)), b2(Shape{out}, 0.0, true), act(act_) {}

    Tensor forward(const Tensor& x) const {
        Tensor h = add(matmul(x, w1), b1);
        h = act == Activation::relu ? relu(h) : gelu(h);
        return add(matmul(h, w2), b2);
    }

    void collect_parameters(std::vector<Tensor>& out) {
        out.push_back(w1);
        out.push_back(b1);
        out.push_back(w2);
        out.push_back(b2);
    }

    void collect_named(const std::string& prefix,
                       std::vector<std::pair<std::string, Tensor>>& out) {
        out.emplace_back(prefix + ".w1", w1);
        out.emplace_back(prefix + ".b1", b1);
        out.emplace_back(prefix + ".w2", w2);
        out.emplace_back(prefix + ".b2", b2);
    }

private:
    static Tensor init(std::size_t in, std::size_t out, Rng& rng) {
        const double bound = std::sqrt(1.0 / static_cast<double>(in));
        Tensor w(Shape{in, out}, 0.0, true);
        for (double& v : w.values()) v = rng.uniform(-bound, bound);
        return w;
    }
};

class TimeFormerModel {
public:
    TimeFormerModel(ModelConfig config, std::uint64_t seed)
        : cfg_(config), seed_(seed) {
        cfg_.validate();
        Rng rng(seed);
        const std::size_t d = cfg_.model_dim;
        const bool vanilla = cfg_.variant == Variant::vanilla_transformer ||
                             cfg_.variant == Variant::vanilla_transformer_mosa;
        const std::size_t n_stages = vanilla ? 1 : cfg_.num_scales;
        for (std::size_t s = 1; s <= n_stages; ++s) {
            stages_.push_back(build_stage(s, rng));
        }
        const std::size_t proj_in = vanilla ? scale_length(cfg_.lookback, 1) * d
                                            : cfg_.num_scales * d;
        const double bound = std::sqrt(1.0 / static_cast<double>(proj_in));
        proj_w_ = Tensor(Shape{proj_in, cfg_.horizon}, 0.0, true);
        for (double& v : proj_w_.values()) v = rng.uniform(-bound, bound);
        proj_b_ = Tensor(Shape{cfg_.horizon}, 0.0, true);
    }

    /// Batched univariate forward: rows are independent series. [R, L_h] ->
    /// [R, L_f].
    Tensor forward_batch(const Tensor& x, bool training) {
        if (x.ndim() != 2 || x.shape()[1] != cfg_.lookback) {
            throw DimensionError("model input must be [rows, " +
                                 std::to_string(cfg_.lookback) + "], got " +
                                 shape_str(x.shape()));
        }
        if (x.shape()[0] == 0) throw DimensionError("model input has zero rows");
        const std::size_t rows = x.shape()[0];

        if (cfg_.variant == Variant::vanilla_transformer ||
            cfg_.variant == Variant::vanilla_transformer_mosa) {
            Stage& st = stages_[0];
            Tensor h = embed_stage(x, st);
            for (auto& block : st.inter) h = block.forward(h, training);
            Tensor flat = reshape(h, {rows, scale_length(cfg_.lookback, 1) * cfg_.model_dim});
            return add(matmul(flat, proj_w_), proj_b_);
        }

        std::vector<Tensor> per_scale;
        per_scale.reserve(cfg_.num_scales);
        for (std::size_t s = 1; s <= cfg_.num_scales; ++s) {
            Stage& st = stages_[s - 1];
            Tensor xs = s == 1 ? x : avg_pool1d(x, s, s);
            Tensor h = embed_stage(xs, st);
            per_scale.push_back(scale_head(h, st, rows, training));
        }
        Tensor merged = cfg_.num_scales == 1 ? per_scale[0] : concat(per_scale, 1);
        return add(matmul(merged, proj_w_), proj_b_);
    }

    /// Multichannel forecast, eval mode: [L_h, N] -> [L_f, N]. Each channel
    /// runs through the same shared model.
    Tensor forecast(const Tensor& x) {
        if (x.ndim() != 2 || x.shape()[0] != cfg_.lookback) {
            throw DimensionError("forecast input must be [" + std::to_string(cfg_.lookback) +
                                 ", channels], got " + shape_str(x.shape()));
        }
        if (x.shape()[1] == 0) throw DimensionError("forecast input has zero channels");
        Tensor by_channel = transpose_last2(x);
        Tensor y = forward_batch(by_channel, false);
        return transpose_last2(y);
    }

    std::vector<Tensor> parameters() {
        std::vector<Tensor> out;
        for (auto& st : stages_) {
            out.push_back(st.conv_w);
            out.push_back(st.conv_b);
            for (auto& b : st.intra) b.collect_parameters(out);
            if (st.fnn) st.fnn->collect_parameters(out);
            for (auto& b : st.inter) b.collect_parameters(out);
            if (st.ffn) st.ffn->collect_parameters(out);
        }
        out.push_back(proj_w_);
        out.push_back(proj_b_);
        return out;
    }

    std::vector<std::pair<std::string, Tensor>> named_parameters() {
        std::vector<std::pair<std::string, Tensor>> out;
        for (std::size_t i = 0; i < stages_.size(); ++i) {
            Stage& st = stages_[i];
            const std::string p = "scale" + std::to_string(i + 1);
            out.emplace_back(p + ".conv.w", st.conv_w);
            out.emplace_back(p + ".conv.b", st.conv_b);
            for (std::size_t j = 0; j < st.intra.size(); ++j) {
                st.intra[j].collect_named(p + ".intra" + std::to_string(j), out);
            }
            if (st.fnn) st.fnn->collect_named(p + ".fnn", out);
            for (std::size_t j = 0; j < st.inter.size(); ++j) {
                st.inter[j].collect_named(p + ".inter" + std::to_string(j), out);
            }
            if (st.ffn) st.ffn->collect_named(p + ".ffn", out);
        }
        out.emplace_back("proj.w", proj_w_);
        out.emplace_back("proj.b", proj_b_);
        return out;
    }

    std::vector<std::pair<std::string, std::vector<double>*>> named_buffers() {
        std::vector<std::pair<std::string, std::vector<double>*>> out;
        for (std::size_t i = 0; i < stages_.size(); ++i) {
            Stage& st = stages_[i];
            const std::string p = "scale" + std::to_string(i + 1);
            for (std::size_t j = 0; j < st.intra.size(); ++j) {
                st.intra[j].collect_named_buffers(p + ".intra" + std::to_string(j), out);
            }
            for (std::size_t j = 0; j < st.inter.size(); ++j) {
                st.inter[j].collect_named_buffers(p + ".inter" + std::to_string(j), out);
            }
        }
        return out;
    }

    std::size_t parameter_count() {
        std::size_t n = 0;
        for (const Tensor& p : parameters()) n += p.numel();
        return n;
    }

    void set_capture(bool on) {
        for (auto& st : stages_) {
            for (auto& b : st.intra) b.set_capture(on);
            for (auto& b : st.inter) b.set_capture(on);
        }
    }

    const ModelConfig& config() const { return cfg_; }
    std::uint64_t seed() const { return seed_; }
    std::size_t num_stages() const { return stages_.size(); }
    std::vector<MoSABlock>& intra_blocks(std::size_t stage) { return stages_.at(stage).intra; }
    std::vector<MoSABlock>& inter_blocks(std::size_t stage) { return stages_.at(stage).inter; }

private:
    struct Stage {
        Tensor conv_w, conv_b;
        std::vector<MoSABlock> intra;
        std::optional<FeedForward> fnn;
        std::vector<MoSABlock> inter;
        std::optional<FeedForward> ffn;
    };

    MoSAConfig attention_config() const {
        MoSAConfig att;
        att.model_dim = cfg_.model_dim;
        att.num_heads = cfg_.num_heads;
        att.gamma = cfg_.gamma;
        att.renormalize_rows = cfg_.renormalize_rows;
        const bool standard = cfg_.variant == Variant::standard_attention ||
                              cfg_.variant == Variant::vanilla_transformer;
        att.hawkes = !standard;
        att.causal = !standard;
        return att;
    }

    Stage build_stage(std::size_t s, Rng& rng) {
        Stage st;
        const std::size_t d = cfg_.model_dim;
        const std::size_t k = cfg_.conv_kernel;
        const double bound = std::sqrt(1.0 / static_cast<double>(k));
        st.conv_w = Tensor(Shape{k, 1, d}, 0.0, true);
        for (double& v : st.conv_w.values()) v = rng.uniform(-bound, bound);
        st.conv_b = Tensor(Shape{d}, 0.0, true);

        const MoSAConfig att = attention_config();
        const std::size_t ls = scale_length(cfg_.lookback, s);
        switch (cfg_.variant) {
            case Variant::vanilla_transformer:
            case Variant::vanilla_transformer_mosa:
                for (std::size_t j = 0; j < cfg_.vanilla_depth; ++j) {
                    st.inter.emplace_back(d, att, rng);
                }
                break;
            case Variant::no_segmentation:
                for (std::size_t j = 0; j < cfg_.stage_depth; ++j) {
                    st.inter.emplace_back(d, att, rng);
                }
                st.ffn.emplace(ls * d, cfg_.hidden(), d, cfg_.activation, rng);
                break;
            default: {
                const PatchGeometry geo = patch_geometry(ls);
                for (std::size_t j = 0; j < cfg_.stage_depth; ++j) {
                    st.intra.emplace_back(d, att, rng);
                }
                st.fnn.emplace(geo.patch_len * d, cfg_.hidden(), d, cfg_.activation, rng);
                for (std::size_t j = 0; j < cfg_.stage_depth; ++j) {
                    st.inter.emplace_back(d, att, rng);
                }
                st.ffn.emplace(geo.patches * d, cfg_.hidden(), d, cfg_.activation, rng);
            }
        }
        return st;
    }

    Tensor embed_stage(const Tensor& xs, Stage& st) {
        Tensor x3 = reshape(xs, {xs.shape()[0], xs.shape()[1], 1});
        return conv1d(x3, st.conv_w, st.conv_b);
    }

    /// Full or ablated per-scale head: embedded [R, L_s, D] -> [R, D].
    Tensor scale_head(const Tensor& h, Stage& st, std::size_t rows, bool training) {
        const std::size_t d = cfg_.model_dim;
        const std::size_t ls = h.shape()[1];
        if (cfg_.variant == Variant::no_segmentation) {
            Tensor y = h;
            for (auto& block : st.inter) y = block.forward(y, training);
            return st.ffn->forward(reshape(y, {rows, ls * d}));
        }
        const PatchGeometry geo = patch_geometry(ls);
        Tensor padded = h;
        if (geo.pad > 0) {
            padded = concat({Tensor(Shape{rows, geo.pad, d}), h}, 1);
        }
        Tensor patches = reshape(padded, {rows * geo.patches, geo.patch_len, d});

        KeyMask km;
        const KeyMask* kmp = nullptr;
        if (cfg_.mask_padding && geo.pad > 0) {
            km.batch = rows * geo.patches;
            km.tokens = geo.patch_len;
            km.allowed.assign(km.batch * km.tokens, 1);
            for (std::size_t b = 0; b < km.batch; ++b) {
                const std::size_t p = b % geo.patches;
                for (std::size_t t = 0; t < geo.patch_len; ++t) {
                    if (p * geo.patch_len + t < geo.pad) km.allowed[b * km.tokens + t] = 0;
                }
            }
            kmp = &km;
        }

        Tensor y = patches;
        for (auto& block : st.intra) y = block.forward(y, training, kmp);
        Tensor condensed = st.fnn->forward(reshape(y, {rows * geo.patches, geo.patch_len * d}));
        Tensor tokens = reshape(condensed, {rows, geo.patches, d});
        for (auto& block : st.inter) tokens = block.forward(tokens, training);
        return st.ffn->forward(reshape(tokens, {rows, geo.patches * d}));
    }

    ModelConfig cfg_;
    std::uint64_t seed_;
    std::vector<Stage> stages_;
    Tensor proj_w_, proj_b_;
};

/// Closed-form parameter count for a config; must equal the count of a built
/// model's parameters.
inline std::size_t expected_parameter_count(const ModelConfig& cfg) {
    cfg.validate();
    const std::size_t d = cfg.model_dim;
    const std::size_t hid = cfg.hidden();
    const std::size_t block = 4 * d * d + 2 * d;
    auto ffn = [&](std::size_t in) { return in * hid + hid + hid * d + d; };
    const std::size_t conv = cfg.conv_kernel * d + d;

    std::size_t total = 0;
    switch (cfg.variant) {
        case Variant::vanilla_transformer:
        case Variant::vanilla_transformer_mosa:
            total += conv + cfg.vanilla_depth * block;
            total += cfg.lookback * d * cfg.horizon + cfg.horizon;
            return total;
        case Variant::no_segmentation:
            for (std::size_t s = 1; s <= cfg.num_scales; ++s) {
                total += conv + cfg.stage_depth * block + ffn(scale_length(cfg.lookback, s) * d);
            }
            break;
        default:
            for (std::size_t s = 1; s <= cfg.num_scales; ++s) {
                const PatchGeometry geo = patch_geometry(scale_length(cfg.lookback, s));
                total += conv + 2 * cfg.stage_depth * block;
                total += ffn(geo.patch_len * d) + ffn(geo.patches * d);
            }
    }
    total += cfg.num_scales * d * cfg.horizon + cfg.horizon;
    return total;
}

} // namespace timeformer
