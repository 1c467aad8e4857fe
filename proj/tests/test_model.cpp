// Patch geometry, multi-scale sampling, segmentation, the feed-forward
// stages, and the assembled forecasting model across its variants.

#include "support/test_support.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <set>

using Catch::Approx;
using namespace timeformer;

TEST_CASE("scale lengths floor-divide the lookback") {
    REQUIRE(scale_length(96, 1) == 96);
    REQUIRE(scale_length(96, 2) == 48);
    REQUIRE(scale_length(96, 3) == 32);
    REQUIRE(scale_length(97, 2) == 48);
}

TEST_CASE("patch geometry is square and minimal") {
    const PatchGeometry g = patch_geometry(96);
    REQUIRE(g.patches == 10);
    REQUIRE(g.patch_len == 10);
    REQUIRE(g.pad == 4);

    for (std::size_t len = 1; len <= 1024; ++len) {
        const PatchGeometry geo = patch_geometry(len);
        std::size_t r = 0;
        while (r * r < len) ++r;
        REQUIRE(geo.patches == r);
        REQUIRE(geo.patch_len == r);
        REQUIRE(geo.patches * geo.patch_len >= len);
        REQUIRE(geo.pad < 2 * geo.patch_len);
        REQUIRE(geo.pad == geo.patches * geo.patch_len - len);
    }
    REQUIRE_THROWS_AS(patch_geometry(0), DimensionError);
}

TEST_CASE("multi-scale sampling pools with kernel equal to stride") {
    Rng rng(149);
    Tensor x = ts::random_tensor(rng, {96});
    const auto views = multi_scale_sample(x, 3);
    REQUIRE(views.size() == 3);
    REQUIRE(views[0].shape() == Shape{96});
    REQUIRE(views[1].shape() == Shape{48});
    REQUIRE(views[2].shape() == Shape{32});
    REQUIRE(ts::max_abs_diff(views[0], x) == 0.0);
    REQUIRE(views[1].values()[0] == Approx((x.values()[0] + x.values()[1]) / 2.0));
    REQUIRE(views[2].values()[0] ==
            Approx((x.values()[0] + x.values()[1] + x.values()[2]) / 3.0));
    REQUIRE_THROWS_AS(multi_scale_sample(Tensor(Shape{2}), 3), DimensionError);
}

TEST_CASE("segmentation pads zeros in front of the oldest steps") {
    Rng rng(151);
    Tensor x = ts::random_tensor(rng, {6, 2});
    const PatchSet set = segment(x);
    REQUIRE(set.pad_len == 3);
    REQUIRE(set.patches.shape() == Shape{3, 3, 2});
    const auto& v = set.patches.values();
    for (std::size_t i = 0; i < 6; ++i) REQUIRE(v[i] == 0.0);
    for (std::size_t i = 0; i < 12; ++i) REQUIRE(v[6 + i] == x.values()[i]);

    Tensor exact = ts::random_tensor(rng, {9, 2});
    REQUIRE(segment(exact).pad_len == 0);
    REQUIRE(ts::max_abs_diff(segment(exact).patches.values(), exact.values()) == 0.0);
}

TEST_CASE("feed-forward maps shapes and passes finite differences") {
    Rng rng(157);
    FeedForward ff(6, 5, 4, Activation::gelu, rng);
    Tensor x = ts::random_tensor(rng, {3, 6}, -1.0, 1.0, true);
    REQUIRE(ff.forward(x).shape() == Shape{3, 4});

    Tensor mix = ts::random_tensor(rng, {3, 4});
    std::vector<Tensor> params{x};
    ff.collect_parameters(params);
    const double worst = ts::fd_max_rel_error(params, [&] {
        return sum(mul(ff.forward(x), mix));
    });
    REQUIRE(worst < 1e-4);
}

TEST_CASE("model config validation") {
    ModelConfig cfg;
    cfg.conv_kernel = 4;
    REQUIRE_THROWS_AS(cfg.validate(), ConfigError);
    cfg.conv_kernel = 3;
    cfg.num_scales = 0;
    REQUIRE_THROWS_AS(cfg.validate(), ConfigError);
    cfg.num_scales = 200;
    cfg.lookback = 96;
    REQUIRE_THROWS_AS(cfg.validate(), ConfigError);
    cfg.num_scales = 2;
    cfg.model_dim = 10;
    cfg.num_heads = 4;
    REQUIRE_THROWS_AS(cfg.validate(), ConfigError);
    REQUIRE(ModelConfig{}.hidden() == 128);
}

TEST_CASE("variant and activation names round-trip") {
    for (Variant v : {Variant::full, Variant::no_segmentation, Variant::standard_attention,
                      Variant::vanilla_transformer, Variant::vanilla_transformer_mosa}) {
        REQUIRE(variant_from_string(variant_to_string(v)) == v);
    }
    REQUIRE_THROWS_AS(variant_from_string("bogus"), ConfigError);
    REQUIRE(activation_from_string("gelu") == Activation::gelu);
    REQUIRE_THROWS_AS(activation_from_string("tanh"), ConfigError);
}

namespace {

ModelConfig small_config() {
    ModelConfig cfg;
    cfg.lookback = 16;
    cfg.horizon = 4;
    cfg.model_dim = 8;
    cfg.num_heads = 2;
    cfg.num_scales = 2;
    return cfg;
}

} // namespace

TEST_CASE("model forward shapes and determinism") {
    TimeFormerModel model(small_config(), 5);
    Rng rng(163);
    Tensor x = ts::random_tensor(rng, {3, 16});
    Tensor y = model.forward_batch(x, false);
    REQUIRE(y.shape() == Shape{3, 4});
    REQUIRE(y.all_finite());

    TimeFormerModel twin(small_config(), 5);
    REQUIRE(ts::max_abs_diff(twin.forward_batch(x, false), y) == 0.0);

    TimeFormerModel other(small_config(), 6);
    REQUIRE(ts::max_abs_diff(other.forward_batch(x, false), y) > 0.0);

    REQUIRE_THROWS_AS(model.forward_batch(Tensor(Shape{3, 15}), false), DimensionError);
    REQUIRE_THROWS_AS(model.forward_batch(Tensor(Shape{16}), false), DimensionError);
}

TEST_CASE("forecast treats channels independently through a shared model") {
    TimeFormerModel model(small_config(), 7);
    Rng rng(167);
    Tensor x = ts::random_tensor(rng, {16, 3});
    Tensor y = model.forecast(x);
    REQUIRE(y.shape() == Shape{4, 3});

    Tensor one(Shape{16, 1});
    for (std::size_t t = 0; t < 16; ++t) one.values()[t] = x.at2(t, 1);
    Tensor y1 = model.forecast(one);
    for (std::size_t t = 0; t < 4; ++t) REQUIRE(y1.at2(t, 0) == y.at2(t, 1));

    REQUIRE_THROWS_AS(model.forecast(Tensor(Shape{15, 3})), DimensionError);
}

TEST_CASE("every variant builds runs and matches its closed-form parameter count") {
    for (Variant v : {Variant::full, Variant::no_segmentation, Variant::standard_attention,
                      Variant::vanilla_transformer, Variant::vanilla_transformer_mosa}) {
        ModelConfig cfg = small_config();
        cfg.variant = v;
        TimeFormerModel model(cfg, 11);
        Rng rng(173);
        Tensor y = model.forward_batch(ts::random_tensor(rng, {2, 16}), false);
        REQUIRE(y.shape() == Shape{2, 4});
        REQUIRE(model.parameter_count() == expected_parameter_count(cfg));
    }
}

TEST_CASE("swapping decayed attention into the token transformer keeps the parameter count") {
    ModelConfig plain = small_config();
    plain.variant = Variant::vanilla_transformer;
    ModelConfig swapped = plain;
    swapped.variant = Variant::vanilla_transformer_mosa;
    TimeFormerModel a(plain, 3);
    TimeFormerModel b(swapped, 3);
    REQUIRE(a.parameter_count() == b.parameter_count());

    REQUIRE(a.inter_blocks(0).size() == plain.vanilla_depth);
    for (auto& blk : a.inter_blocks(0)) {
        REQUIRE_FALSE(blk.config().causal);
        REQUIRE_FALSE(blk.config().hawkes);
    }
    for (auto& blk : b.inter_blocks(0)) {
        REQUIRE(blk.config().causal);
        REQUIRE(blk.config().hawkes);
    }
}

TEST_CASE("standard_attention variant disables decay and mask but keeps topology") {
    ModelConfig cfg = small_config();
    cfg.variant = Variant::standard_attention;
    TimeFormerModel model(cfg, 13);
    REQUIRE(model.num_stages() == 2);
    for (std::size_t s = 0; s < 2; ++s) {
        REQUIRE(model.intra_blocks(s).size() == 1);
        REQUIRE(model.inter_blocks(s).size() == 1);
        REQUIRE_FALSE(model.intra_blocks(s)[0].config().hawkes);
    }
    ModelConfig full = small_config();
    TimeFormerModel ref(full, 13);
    REQUIRE(model.parameter_count() == ref.parameter_count());
}

TEST_CASE("named parameters are unique and cover the flat list") {
    ModelConfig cfg = small_config();
    cfg.stage_depth = 2;
    TimeFormerModel model(cfg, 17);
    auto named = model.named_parameters();
    auto flat = model.parameters();
    REQUIRE(named.size() == flat.size());
    std::set<std::string> names;
    std::size_t total = 0;
    for (auto& [name, t] : named) {
        names.insert(name);
        total += t.numel();
    }
    REQUIRE(names.size() == named.size());
    REQUIRE(total == model.parameter_count());
    REQUIRE(names.count("scale1.conv.w") == 1);
    REQUIRE(names.count("scale2.intra1.wq0") == 1);
    REQUIRE(names.count("proj.b") == 1);

    auto buffers = model.named_buffers();
    std::set<std::string> buffer_names;
    for (auto& [name, vec] : buffers) {
        buffer_names.insert(name);
        REQUIRE(vec->size() == cfg.model_dim);
    }
    REQUIRE(buffer_names.size() == buffers.size());
    REQUIRE(buffer_names.count("scale1.intra0.norm.running_mean") == 1);
}

TEST_CASE("padding mask confines early intra-patch rows when enabled") {
    ModelConfig cfg = small_config();
    cfg.num_scales = 1;
    cfg.mask_padding = true;
    TimeFormerModel model(cfg, 19);
    model.set_capture(true);
    Rng rng(179);
    model.forward_batch(ts::random_tensor(rng, {1, 16}), false);
    // 16 -> P = K = 4, no padding, so the mask is inactive here.
    REQUIRE(model.intra_blocks(0)[0].captured_heads() == 2);

    ModelConfig padded = cfg;
    padded.lookback = 14;
    TimeFormerModel pm(padded, 19);
    pm.set_capture(true);
    Tensor x = ts::random_tensor(rng, {1, 14});
    pm.forward_batch(x, false);
    // 14 -> P = K = 4, pad = 2: patch 0 positions 0,1 are padding.
    Tensor m = pm.intra_blocks(0)[0].captured_matrix(0, 0);
    REQUIRE(m.at2(3, 0) == 0.0);
    REQUIRE(m.at2(3, 1) == 0.0);
    REQUIRE(m.at2(3, 2) > 0.0);
    Tensor m1 = pm.intra_blocks(0)[0].captured_matrix(0, 1);
    REQUIRE(m1.at2(3, 0) > 0.0);
}

TEST_CASE("model gradients flow to every parameter") {
    ModelConfig cfg = small_config();
    cfg.num_scales = 1;
    cfg.lookback = 9;
    cfg.horizon = 2;
    cfg.model_dim = 4;
    cfg.num_heads = 2;
    TimeFormerModel model(cfg, 23);
    Rng rng(181);
    Tensor x = ts::random_tensor(rng, {4, 9});
    Tape tape;
    {
        TapeScope scope(tape);
        Tensor y = model.forward_batch(x, true);
        tape.backward(sum(mul(y, y)));
    }
    for (auto& [name, p] : model.named_parameters()) {
        REQUIRE(p.has_grad());
        double mag = 0.0;
        for (double g : p.grad()) mag += std::abs(g);
        INFO(name);
        CHECK(mag > 0.0);
    }
}

TEST_CASE("model gradients pass finite differences on a tiny config") {
    ModelConfig cfg;
    cfg.lookback = 9;
    cfg.horizon = 2;
    cfg.model_dim = 4;
    cfg.num_heads = 2;
    cfg.num_scales = 2;
    TimeFormerModel model(cfg, 29);
    Rng rng(191);
    Tensor x = ts::random_tensor(rng, {2, 9});
    Tensor mix = ts::random_tensor(rng, {2, 2});
    const double worst = ts::fd_max_rel_error(model.parameters(), [&] {
        return sum(mul(model.forward_batch(x, true), mix));
    });
    REQUIRE(worst < 1e-4);
}
