#pragma once

// Training and experiment runners: the Adam/MSE training loop with
// best-validation tracking, test-split evaluation against a last-value-repeat
// baseline, repeated runs, ablations, hyperparameter sweeps, and the
// attention-mechanism timing benchmark.

#include "timeformer/config.hpp"
#include "timeformer/data.hpp"
#include "timeformer/model.hpp"
#include "timeformer/optim.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <thread>

namespace timeformer {

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

inline double mse(const Tensor& pred, const Tensor& truth) {
    if (pred.shape() != truth.shape()) {
        throw DimensionError("mse shapes differ: " + shape_str(pred.shape()) + " vs " +
                             shape_str(truth.shape()));
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.numel(); ++i) {
        const double d = pred.values()[i] - truth.values()[i];
        acc += d * d;
    }
    return acc / static_cast<double>(pred.numel());
}

inline double mae(const Tensor& pred, const Tensor& truth) {
    if (pred.shape() != truth.shape()) {
        throw DimensionError("mae shapes differ: " + shape_str(pred.shape()) + " vs " +
                             shape_str(truth.shape()));
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.numel(); ++i) {
        acc += std::abs(pred.values()[i] - truth.values()[i]);
    }
    return acc / static_cast<double>(pred.numel());
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_mse = 0.0;
    double lr = 0.0;
};

struct TrainResult {
    std::vector<EpochRecord> history;
    double best_val_mse = std::numeric_limits<double>::quiet_NaN();
    std::size_t best_epoch = 0;
    bool used_validation = false;
    std::vector<std::string> warnings;
};

struct EvalResult {
    double mse = 0.0;
    double mae = 0.0;
    double baseline_mse = 0.0;
    double baseline_mae = 0.0;
    std::optional<double> denorm_mse;
    std::optional<double> denorm_mae;
    std::size_t windows = 0;
};

namespace detail {

struct ModelSnapshot {
    std::vector<std::vector<double>> params;
    std::vector<std::vector<double>> buffers;
};

inline ModelSnapshot take_snapshot(TimeFormerModel& model) {
    ModelSnapshot s;
    for (Tensor& p : model.parameters()) s.params.push_back(p.values());
    for (auto& [name, buf] : model.named_buffers()) s.buffers.push_back(*buf);
    return s;
}

inline void restore_snapshot(TimeFormerModel& model, const ModelSnapshot& s) {
    auto params = model.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) params[i].values() = s.params[i];
    auto buffers = model.named_buffers();
    for (std::size_t i = 0; i < buffers.size(); ++i) *buffers[i].second = s.buffers[i];
}

} // namespace detail

/// Mean metrics of a model (and the last-value-repeat baseline) over every
/// stride-1 window of one split, in eval mode.
inline EvalResult evaluate(TimeFormerModel& model, const SeriesDataset& ds, Split split,
                           bool denormalized = false, std::size_t batch_windows = 32) {
    const ModelConfig& mc = model.config();
    const WindowIndex wi(ds.range(split), mc.lookback, mc.horizon);
    if (wi.empty()) {
        throw ReportError("split '" + split_to_string(split) +
                          "' yields zero evaluation windows for lookback " +
                          std::to_string(mc.lookback) + " and horizon " +
                          std::to_string(mc.horizon));
    }
    const std::size_t n = ds.channels();
    const std::vector<std::size_t> starts = wi.in_order();
    double se = 0.0, ae = 0.0, bse = 0.0, bae = 0.0, dse = 0.0, dae = 0.0;
    for (std::size_t off = 0; off < starts.size(); off += batch_windows) {
        const std::size_t take = std::min(batch_windows, starts.size() - off);
        const std::vector<std::size_t> chunk(starts.begin() + static_cast<std::ptrdiff_t>(off),
                                             starts.begin() + static_cast<std::ptrdiff_t>(off + take));
        auto [x, y] = fill_batch(ds, chunk, mc.lookback, mc.horizon);
        Tensor pred = model.forward_batch(x, false);
        const std::size_t rows = take * n;
        for (std::size_t r = 0; r < rows; ++r) {
            const std::size_t c = r % n;
            const double sd = denormalized && ds.normalized() ? ds.stats().stddev[c] : 1.0;
            const double last = x.values()[r * mc.lookback + mc.lookback - 1];
            for (std::size_t t = 0; t < mc.horizon; ++t) {
                const double p = pred.values()[r * mc.horizon + t];
                const double g = y.values()[r * mc.horizon + t];
                const double d = p - g;
                se += d * d;
                ae += std::abs(d);
                const double bd = last - g;
                bse += bd * bd;
                bae += std::abs(bd);
                if (denormalized) {
                    dse += d * sd * d * sd;
                    dae += std::abs(d * sd);
                }
            }
        }
    }
    const double total = static_cast<double>(starts.size() * n * mc.horizon);
    EvalResult out;
    out.windows = starts.size();
    out.mse = se / total;
    out.mae = ae / total;
    out.baseline_mse = bse / total;
    out.baseline_mae = bae / total;
    if (denormalized) {
        out.denorm_mse = dse / total;
        out.denorm_mae = dae / total;
    }
    return out;
}

/// MSE training with Adam over shuffled stride-1 train windows. Channels of a
/// window become independent batch rows. Keeps the best-validation parameters
/// and restores them on return. Deterministic for a fixed seed.
inline TrainResult train(TimeFormerModel& model, const SeriesDataset& ds,
                         const TrainConfig& cfg) {
    cfg.validate();
    const ModelConfig& mc = model.config();
    const WindowIndex tw(ds.range(Split::train), mc.lookback, mc.horizon);
    if (tw.empty()) {
        throw ConfigError("train split yields zero windows for lookback " +
                          std::to_string(mc.lookback) + " and horizon " +
                          std::to_string(mc.horizon));
    }
    const WindowIndex vw(ds.range(Split::val), mc.lookback, mc.horizon);
    TrainResult res;
    if (vw.empty()) {
        res.warnings.push_back(
            "validation split yields zero windows; keeping final-epoch parameters");
    }

    Adam adam(model.parameters(), AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
    detail::ModelSnapshot best;
    double best_val = std::numeric_limits<double>::infinity();
    std::size_t best_epoch = 0;
    std::size_t stale = 0;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const std::vector<std::size_t> order = tw.shuffled(derive_seed(cfg.seed, epoch));
        double loss_sum = 0.0;
        std::size_t steps = 0;
        for (std::size_t off = 0; off < order.size(); off += cfg.batch_size) {
            const std::size_t take = std::min(cfg.batch_size, order.size() - off);
            const std::vector<std::size_t> chunk(
                order.begin() + static_cast<std::ptrdiff_t>(off),
                order.begin() + static_cast<std::ptrdiff_t>(off + take));
            auto [x, y] = fill_batch(ds, chunk, mc.lookback, mc.horizon);
            Tape tape;
            double loss_value = 0.0;
            {
                TapeScope scope(tape);
                Tensor pred = model.forward_batch(x, true);
                Tensor diff = sub(pred, y);
                Tensor loss = mean(mul(diff, diff));
                loss_value = loss.item();
                if (!std::isfinite(loss_value) || loss_value > 1e6) {
                    throw TrainingError("training diverged (loss=" + fmt_g(loss_value) + ")",
                                        epoch, steps + 1);
                }
                tape.backward(loss);
            }
            adam.step();
            loss_sum += loss_value;
            ++steps;
        }
        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / static_cast<double>(steps);
        rec.lr = adam.lr();
        rec.val_mse = std::numeric_limits<double>::quiet_NaN();
        if (!vw.empty()) {
            rec.val_mse = evaluate(model, ds, Split::val, false, cfg.batch_size).mse;
            if (rec.val_mse < best_val) {
                best_val = rec.val_mse;
                best_epoch = epoch;
                best = detail::take_snapshot(model);
                stale = 0;
            } else {
                ++stale;
                if (cfg.halve_lr_on_plateau) adam.set_lr(adam.lr() * 0.5);
            }
        }
        res.history.push_back(rec);
        if (cfg.early_stop_patience && stale >= *cfg.early_stop_patience) break;
    }

    if (best_epoch > 0) {
        detail::restore_snapshot(model, best);
        res.best_val_mse = best_val;
        res.best_epoch = best_epoch;
        res.used_validation = true;
    } else {
        res.best_epoch = res.history.empty() ? 0 : res.history.back().epoch;
    }
    return res;
}

// ---------------------------------------------------------------------------
// Repeated runs and experiment reports
// ---------------------------------------------------------------------------

struct RepeatResult {
    std::uint64_t seed = 0;
    double mse = 0.0;
    double mae = 0.0;
    double baseline_mse = 0.0;
    double baseline_mae = 0.0;
    std::optional<double> denorm_mse;
    std::optional<double> denorm_mae;
    double best_val_mse = std::numeric_limits<double>::quiet_NaN();
    std::size_t best_epoch = 0;
    std::vector<EpochRecord> history;
};

struct ForecastReport {
    std::string dataset_desc;
    ModelConfig model;
    TrainConfig train;
    std::vector<RepeatResult> repeats;
    std::vector<std::uint64_t> seeds;
    double mean_mse = 0.0;
    double mean_mae = 0.0;
    double mean_baseline_mse = 0.0;
    double mean_baseline_mae = 0.0;
    std::string config_hash;
    std::vector<std::string> warnings;
};

/// Trains `repeats` fresh models with per-repeat derived seeds and evaluates
/// each on the test split. The per-repeat seed drives both model init and
/// batch shuffling. Optionally returns the last trained model through
/// `keep_last`.
inline ForecastReport run_repeats(const ModelConfig& mc, const TrainConfig& tc,
                                  const SeriesDataset& ds, const std::string& dataset_desc,
                                  bool denormalized = false,
                                  std::unique_ptr<TimeFormerModel>* keep_last = nullptr) {
    mc.validate();
    tc.validate();
    ForecastReport rep;
    rep.dataset_desc = dataset_desc;
    rep.model = mc;
    rep.train = tc;
    rep.config_hash = fnv1a_hex(config_text(mc, tc, dataset_desc));
    for (const std::string& w : ds.warnings()) rep.warnings.push_back(w);
    for (std::size_t r = 0; r < tc.repeats; ++r) {
        const std::uint64_t seed_r = derive_seed(tc.seed, r);
        auto model = std::make_unique<TimeFormerModel>(mc, seed_r);
        TrainConfig one = tc;
        one.seed = seed_r;
        one.repeats = 1;
        TrainResult tr = train(*model, ds, one);
        if (r == 0) {
            for (const std::string& w : tr.warnings) rep.warnings.push_back(w);
        }
        EvalResult ev = evaluate(*model, ds, Split::test, denormalized, tc.batch_size);
        RepeatResult rr;
        rr.seed = seed_r;
        rr.mse = ev.mse;
        rr.mae = ev.mae;
        rr.baseline_mse = ev.baseline_mse;
        rr.baseline_mae = ev.baseline_mae;
        rr.denorm_mse = ev.denorm_mse;
        rr.denorm_mae = ev.denorm_mae;
        rr.best_val_mse = tr.best_val_mse;
        rr.best_epoch = tr.best_epoch;
        rr.history = tr.history;
        rep.repeats.push_back(std::move(rr));
        rep.seeds.push_back(seed_r);
        if (keep_last != nullptr) *keep_last = std::move(model);
    }
    const double inv = 1.0 / static_cast<double>(rep.repeats.size());
    for (const RepeatResult& rr : rep.repeats) {
        rep.mean_mse += rr.mse * inv;
        rep.mean_mae += rr.mae * inv;
        rep.mean_baseline_mse += rr.baseline_mse * inv;
        rep.mean_baseline_mae += rr.baseline_mae * inv;
    }
    return rep;
}

struct AblationReport {
    std::vector<ForecastReport> variants;
};

/// Trains full, no_segmentation, and standard_attention variants under
/// identical seeds and budgets.
inline AblationReport run_ablation(const ModelConfig& base, const TrainConfig& tc,
                                   const SeriesDataset& ds, const std::string& dataset_desc,
                                   bool denormalized = false) {
    AblationReport out;
    for (Variant v : {Variant::full, Variant::no_segmentation, Variant::standard_attention}) {
        ModelConfig mc = base;
        mc.variant = v;
        out.variants.push_back(run_repeats(mc, tc, ds, dataset_desc, denormalized));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

/// Worker fan-out cap: MOSA_THREADS when set, else hardware concurrency.
inline std::size_t worker_cap() {
    if (const char* env = std::getenv("MOSA_THREADS")) {
        const std::string s(env);
        std::size_t v = 0;
        auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || ptr != s.data() + s.size() || v < 1) {
            throw ConfigError("MOSA_THREADS must be a positive integer, got '" + s + "'");
        }
        return v;
    }
    const unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : hc;
}

struct SweepPoint {
    std::string label;
    double value = 0.0;
    ForecastReport report;
};

struct SweepReport {
    std::string parameter;
    std::vector<SweepPoint> points;
};

namespace detail {

template <typename MakeConfig>
SweepReport run_sweep(const std::string& parameter, const std::vector<double>& values,
                      MakeConfig make_config, const TrainConfig& tc, const SeriesDataset& ds,
                      const std::string& dataset_desc, bool denormalized) {
    if (values.empty()) throw ConfigError("sweep needs at least one value");
    SweepReport rep;
    rep.parameter = parameter;
    rep.points.resize(values.size());
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(values.size());
    auto work = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= values.size()) return;
            try {
                SweepPoint p;
                p.value = values[i];
                p.label = fmt_g(values[i]);
                p.report = run_repeats(make_config(values[i]), tc, ds, dataset_desc,
                                       denormalized);
                rep.points[i] = std::move(p);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const std::size_t workers = std::min(worker_cap(), values.size());
    if (workers <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
        for (std::thread& t : pool) t.join();
    }
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    return rep;
}

} // namespace detail

inline const std::vector<double>& default_gamma_grid() {
    static const std::vector<double> grid = {0.0, 0.01, 0.05, 0.1, 0.5, 1.0, 5.0};
    return grid;
}

inline SweepReport sweep_gamma(const ModelConfig& base, const TrainConfig& tc,
                               const SeriesDataset& ds, const std::string& dataset_desc,
                               std::vector<double> gammas = default_gamma_grid(),
                               bool denormalized = false) {
    return detail::run_sweep(
        "gamma", gammas,
        [&](double g) {
            ModelConfig mc = base;
            mc.gamma = g;
            return mc;
        },
        tc, ds, dataset_desc, denormalized);
}

inline SweepReport sweep_scales(const ModelConfig& base, const TrainConfig& tc,
                                const SeriesDataset& ds, const std::string& dataset_desc,
                                std::vector<std::size_t> scales = {1, 2, 3, 4},
                                bool denormalized = false) {
    std::vector<double> values;
    for (std::size_t s : scales) values.push_back(static_cast<double>(s));
    return detail::run_sweep(
        "scales", values,
        [&](double s) {
            ModelConfig mc = base;
            mc.num_scales = static_cast<std::size_t>(s);
            return mc;
        },
        tc, ds, dataset_desc, denormalized);
}

// ---------------------------------------------------------------------------
// Attention benchmark
// ---------------------------------------------------------------------------

struct BenchPoint {
    std::size_t tokens = 0;
    double sa_seconds = 0.0;
    double mosa_seconds = 0.0;
};

struct BenchReport {
    std::size_t head_dim = 0;
    std::vector<BenchPoint> points;
    double loglog_slope = 0.0;
    double overhead_ratio_at_max = 0.0;
};

/// Times the attention core (score matmul, softmax, decay modulation, value
/// aggregation) for plain and decay-modulated causal attention over prebuilt
/// Q/K/V, reporting the minimum over `reps` timed samples.
inline BenchReport benchmark_attention(std::vector<std::size_t> t_values = {16, 64, 256, 1024},
                                       std::size_t d = 64, std::size_t reps = 5) {
    if (t_values.empty()) throw ConfigError("benchmark needs at least one token count");
    if (d < 1) throw ConfigError("benchmark head dim must be >= 1");
    if (reps < 1) throw ConfigError("benchmark needs at least one repetition");
    BenchReport rep;
    rep.head_dim = d;
    Rng rng(0x9e3779b97f4a7c15ULL);
    volatile double sink = 0.0;

    for (std::size_t t : t_values) {
        auto random_mat = [&](std::size_t r, std::size_t c) {
            Tensor m(Shape{r, c});
            for (double& v : m.values()) v = rng.uniform(-1.0, 1.0);
            return m;
        };
        Tensor q = random_mat(t, d);
        Tensor k = random_mat(t, d);
        Tensor v = random_mat(t, d);
        Tensor omega = hawkes_modulation(t, 0.1);
        const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));

        auto run_sa = [&]() {
            Tensor scores = scale(matmul(q, transpose_last2(k)), inv_sqrt_d);
            Tensor a = softmax_lastdim(scores);
            Tensor o = matmul(a, v);
            sink = sink + o.values()[0];
        };
        auto run_mosa = [&]() {
            Tensor scores = scale(matmul(q, transpose_last2(k)), inv_sqrt_d);
            Tensor a = masked_softmax_lastdim(scores, true);
            a = apply_modulation_and_mask(a, omega, true);
            Tensor o = matmul(a, v);
            sink = sink + o.values()[0];
        };

        const double approx_flops = 4.0 * static_cast<double>(t) * static_cast<double>(t) *
                                    static_cast<double>(d);
        std::size_t iters = static_cast<std::size_t>(2e7 / std::max(approx_flops, 1.0));
        iters = std::min<std::size_t>(std::max<std::size_t>(iters, 1), 20000);

        auto time_min = [&](auto&& fn) {
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t r = 0; r < reps; ++r) {
                const auto t0 = std::chrono::steady_clock::now();
                for (std::size_t i = 0; i < iters; ++i) fn();
                const auto t1 = std::chrono::steady_clock::now();
                const double sec = std::chrono::duration<double>(t1 - t0).count() /
                                   static_cast<double>(iters);
                best = std::min(best, sec);
            }
            return best;
        };

        BenchPoint p;
        p.tokens = t;
        p.sa_seconds = time_min(run_sa);
        p.mosa_seconds = time_min(run_mosa);
        rep.points.push_back(p);
    }

    if (rep.points.size() >= 2) {
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        const double n = static_cast<double>(rep.points.size());
        for (const BenchPoint& p : rep.points) {
            const double x = std::log(static_cast<double>(p.tokens));
            const double y = std::log(p.sa_seconds);
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
        }
        rep.loglog_slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    }
    const BenchPoint& last = rep.points.back();
    rep.overhead_ratio_at_max = last.mosa_seconds / last.sa_seconds;
    return rep;
}

// ---------------------------------------------------------------------------
// Report rendering
// ---------------------------------------------------------------------------

namespace detail {

inline std::string opt_metric(const std::optional<double>& v) {
    return v ? fmt_g(*v) : "";
}

} // namespace detail

/// CSV payload for one report. When `label_header` is non-empty an extra
/// leading column carries `label` on every row (used by ablations/sweeps).
inline std::string report_csv(const ForecastReport& r, const std::string& label_header = "",
                              const std::string& label = "", bool with_header = true) {
    std::string out;
    auto row = [&](std::vector<std::string> cells) {
        if (!label_header.empty()) cells.insert(cells.begin(), label);
        out += join_csv_row(cells);
    };
    if (with_header) {
        std::vector<std::string> head = {"repeat",        "seed",
                                         "mse",           "mae",
                                         "baseline_mse",  "baseline_mae",
                                         "denorm_mse",    "denorm_mae",
                                         "best_val_mse",  "best_epoch"};
        if (!label_header.empty()) head.insert(head.begin(), label_header);
        out += join_csv_row(head);
    }
    for (std::size_t i = 0; i < r.repeats.size(); ++i) {
        const RepeatResult& rr = r.repeats[i];
        row({std::to_string(i), std::to_string(rr.seed), fmt_g(rr.mse), fmt_g(rr.mae),
             fmt_g(rr.baseline_mse), fmt_g(rr.baseline_mae), detail::opt_metric(rr.denorm_mse),
             detail::opt_metric(rr.denorm_mae), fmt_g(rr.best_val_mse),
             std::to_string(rr.best_epoch)});
    }
    row({"mean", "", fmt_g(r.mean_mse), fmt_g(r.mean_mae), fmt_g(r.mean_baseline_mse),
         fmt_g(r.mean_baseline_mae), "", "", "", ""});
    return out;
}

inline std::string report_header_comment(const ForecastReport& r) {
    std::string out;
    out += "# config_hash=" + r.config_hash + "\n";
    out += "# dataset=" + r.dataset_desc + "\n";
    std::string seeds;
    for (std::size_t i = 0; i < r.seeds.size(); ++i) {
        if (i) seeds += ';';
        seeds += std::to_string(r.seeds[i]);
    }
    out += "# seeds=" + seeds + "\n";
    return out;
}

inline std::string report_text(const ForecastReport& r) {
    std::string out;
    out += "forecast report\n";
    out += "dataset: " + r.dataset_desc + "\n";
    out += "config hash: " + r.config_hash + "\n";
    out += "variant=" + variant_to_string(r.model.variant) +
           " lookback=" + std::to_string(r.model.lookback) +
           " horizon=" + std::to_string(r.model.horizon) +
           " scales=" + std::to_string(r.model.num_scales) +
           " model_dim=" + std::to_string(r.model.model_dim) +
           " heads=" + std::to_string(r.model.num_heads) +
           " gamma=" + fmt_g(r.model.gamma) + "\n";
    out += "epochs=" + std::to_string(r.train.epochs) +
           " batch_size=" + std::to_string(r.train.batch_size) +
           " lr=" + fmt_g(r.train.lr) +
           " seed=" + std::to_string(r.train.seed) +
           " repeats=" + std::to_string(r.train.repeats) + "\n\n";
    for (std::size_t i = 0; i < r.repeats.size(); ++i) {
        const RepeatResult& rr = r.repeats[i];
        out += "repeat " + std::to_string(i) + " (seed " + std::to_string(rr.seed) + "): mse " +
               fmt_g(rr.mse) + " mae " + fmt_g(rr.mae) + " | baseline mse " +
               fmt_g(rr.baseline_mse) + " mae " + fmt_g(rr.baseline_mae);
        if (rr.denorm_mse) {
            out += " | denorm mse " + fmt_g(*rr.denorm_mse) + " mae " + fmt_g(*rr.denorm_mae);
        }
        out += " | best val " + fmt_g(rr.best_val_mse) + " @ epoch " +
               std::to_string(rr.best_epoch) + "\n";
    }
    out += "\nmean: mse " + fmt_g(r.mean_mse) + " mae " + fmt_g(r.mean_mae) +
           " | baseline mse " + fmt_g(r.mean_baseline_mse) + " mae " +
           fmt_g(r.mean_baseline_mae) + "\n";
    if (!r.warnings.empty()) {
        out += "\nwarnings:\n";
        for (const std::string& w : r.warnings) out += "  " + w + "\n";
    }
    return out;
}

inline std::string history_csv(const ForecastReport& r) {
    std::string out = join_csv_row({"repeat", "epoch", "train_loss", "val_mse", "lr"});
    for (std::size_t i = 0; i < r.repeats.size(); ++i) {
        for (const EpochRecord& e : r.repeats[i].history) {
            out += join_csv_row({std::to_string(i), std::to_string(e.epoch),
                                 fmt_g(e.train_loss), fmt_g(e.val_mse), fmt_g(e.lr)});
        }
    }
    return out;
}

inline std::string ablation_csv(const AblationReport& rep) {
    std::string out;
    for (std::size_t i = 0; i < rep.variants.size(); ++i) {
        const ForecastReport& r = rep.variants[i];
        out += report_csv(r, "variant", variant_to_string(r.model.variant), i == 0);
    }
    return out;
}

inline std::string ablation_text(const AblationReport& rep) {
    std::string out = "ablation report\n";
    if (!rep.variants.empty()) {
        out += "dataset: " + rep.variants[0].dataset_desc + "\n\n";
    }
    for (const ForecastReport& r : rep.variants) {
        out += variant_to_string(r.model.variant) + ": mean mse " + fmt_g(r.mean_mse) +
               " mae " + fmt_g(r.mean_mae) + " (hash " + r.config_hash + ")\n";
    }
    return out;
}

inline std::string sweep_csv(const SweepReport& rep) {
    std::string out;
    for (std::size_t i = 0; i < rep.points.size(); ++i) {
        out += report_csv(rep.points[i].report, rep.parameter, rep.points[i].label, i == 0);
    }
    return out;
}

inline std::string sweep_text(const SweepReport& rep) {
    std::string out = "sweep over " + rep.parameter + "\n\n";
    for (const SweepPoint& p : rep.points) {
        out += rep.parameter + "=" + p.label + ": mean mse " + fmt_g(p.report.mean_mse) +
               " mae " + fmt_g(p.report.mean_mae) + " | baseline mse " +
               fmt_g(p.report.mean_baseline_mse) + "\n";
    }
    return out;
}

inline std::string bench_csv(const BenchReport& rep) {
    std::string out = join_csv_row({"tokens", "sa_seconds", "mosa_seconds", "ratio"});
    for (const BenchPoint& p : rep.points) {
        out += join_csv_row({std::to_string(p.tokens), fmt_g(p.sa_seconds),
                             fmt_g(p.mosa_seconds), fmt_g(p.mosa_seconds / p.sa_seconds)});
    }
    out += "# head_dim=" + std::to_string(rep.head_dim) + "\n";
    out += "# loglog_slope=" + fmt_g(rep.loglog_slope) + "\n";
    out += "# overhead_ratio_at_max=" + fmt_g(rep.overhead_ratio_at_max) + "\n";
    return out;
}

} // namespace timeformer
