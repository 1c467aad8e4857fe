// Metrics, the Adam optimizer, training loop behavior, repeat/ablation/sweep
// reports, checkpointing, config parsing, and deterministic rendering.

#include "support/test_support.hpp"

#include <catch2/catch_amalgamated.hpp>

using Catch::Approx;
using namespace timeformer;

TEST_CASE("error metrics closed forms") {
    Tensor a = Tensor::from_values({2}, {1.0, 2.0});
    Tensor b = Tensor::from_values({2}, {1.0, 3.0});
    REQUIRE(mse(a, b) == Approx(0.5));
    REQUIRE(mse(a, a) == 0.0);
    Tensor c = Tensor::from_values({2}, {0.0, 0.0});
    Tensor d = Tensor::from_values({2}, {3.0, -1.0});
    REQUIRE(mae(c, d) == Approx(2.0));
    REQUIRE_THROWS_AS(mse(a, Tensor(Shape{3})), DimensionError);
}

TEST_CASE("adam first step moves by roughly the learning rate") {
    Tensor p = Tensor::from_values({1}, {0.0}, true);
    Adam adam({p}, AdamConfig{0.005, 0.9, 0.999, 1e-8});
    p.grad()[0] = 1.0;
    adam.step();
    REQUIRE(p.values()[0] == Approx(-0.005).epsilon(1e-4));
    REQUIRE(p.grad()[0] == 0.0);
    REQUIRE(adam.step_count() == 1);
}

TEST_CASE("adam requires gradients and reports missing ones") {
    Tensor p(Shape{2}, 0.0, true);
    Tensor q(Shape{3});
    Adam adam({p, q}, AdamConfig{});
    p.grad()[0] = 1.0;
    REQUIRE_THROWS_AS(adam.step(), ContractError);
}

TEST_CASE("adam minimizes a quadratic") {
    Tensor p = Tensor::from_values({1}, {5.0}, true);
    Adam adam({p}, AdamConfig{0.1, 0.9, 0.999, 1e-8});
    for (int i = 0; i < 300; ++i) {
        Tape tape;
        {
            TapeScope scope(tape);
            Tensor loss = mul(p, p);
            tape.backward(reshape(loss, {}));
        }
        adam.step();
    }
    REQUIRE(std::abs(p.values()[0]) < 1e-2);
    REQUIRE(adam.lr() == Approx(0.1));
    adam.set_lr(0.05);
    REQUIRE(adam.lr() == Approx(0.05));
}

namespace {

SeriesDataset tiny_dataset(std::uint64_t seed = 3) {
    SeriesDataset ds = synthetic(SyntheticKind::sine_mix, 240, 2, seed);
    ds.set_split_ratios(0.7, 0.1, 0.2);
    ds.normalize();
    return ds;
}

ModelConfig tiny_model() {
    ModelConfig mc;
    mc.lookback = 16;
    mc.horizon = 4;
    mc.model_dim = 8;
    mc.num_heads = 2;
    return mc;
}

TrainConfig tiny_train() {
    TrainConfig tc;
    tc.epochs = 2;
    tc.batch_size = 16;
    tc.repeats = 2;
    tc.seed = 5;
    return tc;
}

} // namespace

TEST_CASE("evaluate reports model and last-value baseline errors") {
    // Constant series: repeating the last value is perfect.
    std::vector<double> v(70, 2.0);
    SeriesDataset ds = SeriesDataset::from_values(std::move(v), 1);
    ds.set_split(SplitSizes{30, 10, 30});
    TimeFormerModel model(tiny_model(), 1);
    EvalResult ev = evaluate(model, ds, Split::test);
    REQUIRE(ev.windows == 30 - 16 - 4 + 1);
    REQUIRE(ev.baseline_mse == 0.0);
    REQUIRE(ev.baseline_mae == 0.0);
    REQUIRE(ev.mse >= 0.0);
}

TEST_CASE("evaluate rejects splits without a full window") {
    SeriesDataset ds = tiny_dataset();
    ModelConfig mc = tiny_model();
    mc.lookback = 90;
    mc.horizon = 24;
    TimeFormerModel model(mc, 1);
    REQUIRE_THROWS_AS(evaluate(model, ds, Split::test), ReportError);
}

TEST_CASE("training reduces the loss and records history") {
    SeriesDataset ds = tiny_dataset();
    TimeFormerModel model(tiny_model(), 7);
    TrainConfig tc = tiny_train();
    tc.epochs = 4;
    TrainResult tr = train(model, ds, tc);
    REQUIRE(tr.history.size() == 4);
    REQUIRE(tr.history.front().epoch == 1);
    REQUIRE(tr.history.back().train_loss < tr.history.front().train_loss);
    REQUIRE(tr.used_validation);
    REQUIRE(tr.best_epoch >= 1);
    for (const EpochRecord& e : tr.history) {
        REQUIRE(std::isfinite(e.train_loss));
        REQUIRE(std::isfinite(e.val_mse));
        REQUIRE(e.lr == Approx(tc.lr));
    }
}

TEST_CASE("training diverges loudly with an absurd learning rate") {
    SeriesDataset ds = tiny_dataset();
    TimeFormerModel model(tiny_model(), 7);
    TrainConfig tc = tiny_train();
    tc.lr = 1e5;
    tc.epochs = 30;
    bool threw = false;
    try {
        train(model, ds, tc);
    } catch (const TrainingError& e) {
        threw = true;
        REQUIRE(std::string(e.what()).find("diverged") != std::string::npos);
    }
    REQUIRE(threw);
}

TEST_CASE("early stopping halts after patience epochs without improvement") {
    SeriesDataset ds = tiny_dataset();
    TimeFormerModel model(tiny_model(), 7);
    TrainConfig tc = tiny_train();
    tc.epochs = 40;
    tc.early_stop_patience = 2;
    TrainResult tr = train(model, ds, tc);
    REQUIRE(tr.history.size() < 40);
}

TEST_CASE("repeated runs are deterministic end to end") {
    SeriesDataset ds = tiny_dataset();
    ForecastReport a = run_repeats(tiny_model(), tiny_train(), ds, "unit");
    ForecastReport b = run_repeats(tiny_model(), tiny_train(), ds, "unit");
    REQUIRE(report_csv(a) == report_csv(b));
    REQUIRE(report_text(a) == report_text(b));
    REQUIRE(history_csv(a) == history_csv(b));
    REQUIRE(report_header_comment(a) == report_header_comment(b));

    REQUIRE(a.repeats.size() == 2);
    REQUIRE(a.seeds[0] != a.seeds[1]);
    REQUIRE(a.config_hash.size() == 16);
    REQUIRE(a.repeats[0].mse != a.repeats[1].mse);

    TrainConfig other = tiny_train();
    other.seed = 6;
    ForecastReport c = run_repeats(tiny_model(), other, ds, "unit");
    REQUIRE(report_csv(a) != report_csv(c));
    REQUIRE(a.config_hash != c.config_hash);
}

TEST_CASE("report csv carries the expected columns and a mean row") {
    SeriesDataset ds = tiny_dataset();
    std::unique_ptr<TimeFormerModel> last;
    ForecastReport rep = run_repeats(tiny_model(), tiny_train(), ds, "unit", true, &last);
    REQUIRE(last != nullptr);

    const std::string csv = report_csv(rep);
    REQUIRE(csv.rfind("repeat,seed,mse,mae,baseline_mse,baseline_mae,denorm_mse,denorm_mae,"
                      "best_val_mse,best_epoch\n", 0) == 0);
    REQUIRE(csv.find("\nmean,") != std::string::npos);
    REQUIRE(rep.repeats[0].denorm_mse.has_value());

    const std::string hdr = report_header_comment(rep);
    REQUIRE(hdr.find("# config_hash=" + rep.config_hash) != std::string::npos);
    REQUIRE(hdr.find("# dataset=unit") != std::string::npos);
    REQUIRE(hdr.find(';') != std::string::npos);

    const std::string hist = history_csv(rep);
    REQUIRE(hist.rfind("repeat,epoch,train_loss,val_mse,lr\n", 0) == 0);
}

TEST_CASE("ablation covers the three comparison variants") {
    SeriesDataset ds = tiny_dataset();
    TrainConfig tc = tiny_train();
    tc.epochs = 1;
    tc.repeats = 1;
    AblationReport rep = run_ablation(tiny_model(), tc, ds, "unit");
    REQUIRE(rep.variants.size() == 3);
    REQUIRE(rep.variants[0].model.variant == Variant::full);
    REQUIRE(rep.variants[1].model.variant == Variant::no_segmentation);
    REQUIRE(rep.variants[2].model.variant == Variant::standard_attention);

    const std::string csv = ablation_csv(rep);
    REQUIRE(csv.rfind("variant,repeat,", 0) == 0);
    REQUIRE(csv.find("\nno_segmentation,") != std::string::npos);
    REQUIRE(ablation_text(rep).find("standard_attention") != std::string::npos);
}

TEST_CASE("gamma sweep trains one report per grid point") {
    SeriesDataset ds = tiny_dataset();
    TrainConfig tc = tiny_train();
    tc.epochs = 1;
    tc.repeats = 1;
    SweepReport rep = sweep_gamma(tiny_model(), tc, ds, "unit", {0.0, 0.5});
    REQUIRE(rep.parameter == "gamma");
    REQUIRE(rep.points.size() == 2);
    REQUIRE(rep.points[0].label == "0");
    REQUIRE(rep.points[1].label == "0.5");
    REQUIRE(rep.points[0].report.model.gamma == 0.0);
    REQUIRE(sweep_csv(rep).rfind("gamma,repeat,", 0) == 0);
    REQUIRE(sweep_text(rep).find("gamma=0.5") != std::string::npos);
    REQUIRE(default_gamma_grid() == std::vector<double>{0.0, 0.01, 0.05, 0.1, 0.5, 1.0, 5.0});
}

TEST_CASE("scale sweep varies the sampling depth") {
    SeriesDataset ds = tiny_dataset();
    TrainConfig tc = tiny_train();
    tc.epochs = 1;
    tc.repeats = 1;
    SweepReport rep = sweep_scales(tiny_model(), tc, ds, "unit", {1, 2});
    REQUIRE(rep.points.size() == 2);
    REQUIRE(rep.points[1].report.model.num_scales == 2);
}

TEST_CASE("benchmark produces positive timings and a finite slope") {
    BenchReport rep = benchmark_attention({8, 16}, 8, 1);
    REQUIRE(rep.points.size() == 2);
    for (const BenchPoint& p : rep.points) {
        REQUIRE(p.sa_seconds > 0.0);
        REQUIRE(p.mosa_seconds > 0.0);
    }
    REQUIRE(std::isfinite(rep.loglog_slope));
    REQUIRE(rep.overhead_ratio_at_max > 0.0);
    const std::string csv = bench_csv(rep);
    REQUIRE(csv.rfind("tokens,sa_seconds,", 0) == 0);
    REQUIRE(csv.find("# loglog_slope=") != std::string::npos);
}

TEST_CASE("config files parse with comments and fail with line numbers") {
    const std::string dir = ts::make_temp_dir("cfg");
    write_text_file(dir + "/good.conf",
                    "# comment\n"
                    "lookback = 32\n"
                    "\n"
                    "gamma=0.25\n"
                    "variant = no_segmentation\n");
    RunConfig rc;
    for (const auto& [k, v] : parse_kv_file(dir + "/good.conf")) {
        REQUIRE(apply_config_kv(rc, k, v));
    }
    REQUIRE(rc.model.lookback == 32);
    REQUIRE(rc.model.gamma == Approx(0.25));
    REQUIRE(rc.model.variant == Variant::no_segmentation);

    REQUIRE_FALSE(apply_config_kv(rc, "no_such_key", "1"));
    REQUIRE_THROWS_AS(apply_config_kv(rc, "lookback", "banana"), ParseError);

    write_text_file(dir + "/bad.conf", "lookback = 32\nnot a pair\n");
    REQUIRE_THROWS_WITH(parse_kv_file(dir + "/bad.conf"),
                        Catch::Matchers::ContainsSubstring("line 2"));
    REQUIRE_THROWS_AS(parse_kv_file(dir + "/missing.conf"), IoError);
}

TEST_CASE("canonical config text is stable and hashed") {
    ModelConfig mc = tiny_model();
    TrainConfig tc = tiny_train();
    const std::string text = config_text(mc, tc, "unit");
    REQUIRE(text == config_text(mc, tc, "unit"));
    REQUIRE(text.find("lookback=16") != std::string::npos);
    REQUIRE(text.find("dataset=unit") != std::string::npos);

    REQUIRE(fnv1a_hex("") == "cbf29ce484222325");
    REQUIRE(fnv1a_hex("a") == "af63dc4c8601ec8c");
    REQUIRE(fnv1a_hex(text) != fnv1a_hex(text + " "));
}

TEST_CASE("float rendering is locale-free and round-trippable") {
    REQUIRE(fmt_g(0.5) == "0.5");
    REQUIRE(fmt_g(1.0) == "1");
    REQUIRE(fmt_g(0.1234567890123) == "0.123456789");
    const double v = 0.1 + 0.2;
    REQUIRE(std::stod(fmt_exact(v)) == v);
}

TEST_CASE("pgm rendering normalizes to the full gray range") {
    const std::string pgm = pgm_from_matrix({0.0, 1.0, 0.5, 0.25}, 2, 2);
    REQUIRE(pgm.rfind("P2\n2 2\n255\n", 0) == 0);
    REQUIRE(pgm.find("255") != std::string::npos);
    REQUIRE(pgm.find("128") != std::string::npos);
}

TEST_CASE("checkpoints restore an identical model") {
    SeriesDataset ds = tiny_dataset();
    TimeFormerModel model(tiny_model(), 31);
    TrainConfig tc = tiny_train();
    tc.epochs = 1;
    tc.repeats = 1;
    train(model, ds, tc);

    const std::string path = ts::make_temp_dir("ckpt") + "/model.ckpt";
    save_checkpoint(model, path, &ds.stats(), true);

    Checkpoint ck = load_checkpoint(path);
    REQUIRE(ck.model_seed == 31);
    REQUIRE(ck.normalized);
    REQUIRE(ck.stats.has_value());
    REQUIRE(ck.stats->mean == ds.stats().mean);

    std::unique_ptr<TimeFormerModel> back = restore_model(ck, path);
    Rng rng(211);
    Tensor x = ts::random_tensor(rng, {16, 2});
    REQUIRE(ts::max_abs_diff(back->forecast(x), model.forecast(x)) == 0.0);
}

TEST_CASE("checkpoint loading rejects foreign and truncated files") {
    const std::string dir = ts::make_temp_dir("ckpt_bad");
    write_text_file(dir + "/plain.txt", "not a checkpoint\n");
    REQUIRE_THROWS_AS(load_checkpoint(dir + "/plain.txt"), IoError);
    REQUIRE_THROWS_AS(load_checkpoint(dir + "/absent.ckpt"), IoError);

    TimeFormerModel model(tiny_model(), 1);
    save_checkpoint(model, dir + "/model.ckpt");
    const std::string whole = ts::read_file(dir + "/model.ckpt");
    write_text_file(dir + "/cut.ckpt", whole.substr(0, whole.size() / 2));
    REQUIRE_THROWS_WITH(load_checkpoint(dir + "/cut.ckpt"),
                        Catch::Matchers::ContainsSubstring("truncated"));
}

TEST_CASE("worker cap reads the thread override") {
    ::setenv("MOSA_THREADS", "3", 1);
    REQUIRE(worker_cap() == 3);
    ::setenv("MOSA_THREADS", "zero", 1);
    REQUIRE_THROWS_AS(worker_cap(), ConfigError);
    ::unsetenv("MOSA_THREADS");
    REQUIRE(worker_cap() >= 1);
}

TEST_CASE("train config validation") {
    TrainConfig tc;
    tc.epochs = 0;
    REQUIRE_THROWS_AS(tc.validate(), ConfigError);
    tc = TrainConfig{};
    tc.batch_size = 0;
    REQUIRE_THROWS_AS(tc.validate(), ConfigError);
    tc = TrainConfig{};
    tc.repeats = 0;
    REQUIRE_THROWS_AS(tc.validate(), ConfigError);
    tc = TrainConfig{};
    tc.lr = 0.0;
    REQUIRE_THROWS_AS(tc.validate(), ConfigError);
}
