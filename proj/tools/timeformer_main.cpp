// Command-line front end: training, evaluation, ablations, sweeps, the
// attention benchmark, attention-matrix export, and synthetic data generation.
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include "timeformer/timeformer.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

namespace tf = timeformer;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Flags {
    std::string config_path;
    std::string data;
    std::string synthetic;
    std::string preset;
    std::string variant = "full";
    std::string activation = "relu";
    std::string out;
    std::string checkpoint;
    std::string stage = "intra";
    std::size_t lookback = 96;
    std::size_t horizon = 24;
    std::size_t scales = 1;
    std::size_t model_dim = 64;
    std::size_t heads = 4;
    std::size_t conv_kernel = 3;
    std::size_t ffn_hidden = 0;
    std::size_t stage_depth = 1;
    std::size_t vanilla_depth = 2;
    std::size_t epochs = 100;
    std::size_t batch_size = 32;
    std::size_t repeats = 5;
    std::size_t patience = 0;
    std::size_t synth_length = 2000;
    std::size_t synth_channels = 3;
    double gamma = 0.1;
    double lr = 0.005;
    double noise = 0.0;
    double ratio_train = 0.7;
    double ratio_val = 0.1;
    double ratio_test = 0.2;
    std::uint64_t seed = 1;
    bool denormalized = false;
    bool mask_padding = false;
    bool renormalize_rows = false;
    bool halve_lr = false;
    bool write_cache = false;
    std::size_t att_scale = 1;
    std::size_t att_head = 0;
    std::size_t att_window = 0;
    std::size_t att_channel = 0;
    std::size_t att_patch = static_cast<std::size_t>(-1);
    std::size_t bench_d = 64;
    std::size_t bench_reps = 5;
    std::vector<std::size_t> bench_t = {16, 64, 256, 1024};
    std::vector<double> gamma_grid;
    std::vector<std::size_t> scale_grid;
};

void add_common_options(CLI::App* sub, Flags& f) {
    sub->add_option("--config", f.config_path, "flat key=value config file");
    sub->add_option("--data", f.data, "CSV or dataset-cache path");
    sub->add_option("--synthetic", f.synthetic, "synthetic series kind")
        ->check(CLI::IsMember({"ar1", "sine_mix", "trend_season_noise"}));
    sub->add_option("--synthetic-length", f.synth_length, "synthetic series length");
    sub->add_option("--synthetic-channels", f.synth_channels, "synthetic channel count");
    sub->add_option("--noise", f.noise, "synthetic noise scale override");
    sub->add_option("--preset", f.preset, "named benchmark split preset");
    sub->add_option("--lookback", f.lookback, "input window length");
    sub->add_option("--horizon", f.horizon, "forecast length");
    sub->add_option("--scales", f.scales, "number of sampling scales");
    sub->add_option("--gamma", f.gamma, "attention decay rate");
    sub->add_option("--variant", f.variant, "model variant")
        ->check(CLI::IsMember({"full", "no_segmentation", "standard_attention",
                               "vanilla_transformer", "vanilla_transformer_mosa"}));
    sub->add_option("--model-dim", f.model_dim, "embedding width");
    sub->add_option("--heads", f.heads, "attention heads");
    sub->add_option("--conv-kernel", f.conv_kernel, "embedding conv kernel (odd)");
    sub->add_option("--ffn-hidden", f.ffn_hidden, "feed-forward hidden width (0 = 2x model dim)");
    sub->add_option("--stage-depth", f.stage_depth, "attention blocks per stage");
    sub->add_option("--vanilla-depth", f.vanilla_depth, "blocks in the token-transformer baseline");
    sub->add_option("--activation", f.activation, "feed-forward activation")
        ->check(CLI::IsMember({"relu", "gelu"}));
    sub->add_flag("--mask-padding", f.mask_padding, "exclude pad positions from intra attention");
    sub->add_flag("--renormalize-rows", f.renormalize_rows,
                  "rescale attention rows after decay and mask");
    sub->add_option("--epochs", f.epochs, "training epochs");
    sub->add_option("--batch-size", f.batch_size, "windows per training batch");
    sub->add_option("--lr", f.lr, "Adam learning rate");
    sub->add_option("--seed", f.seed, "base RNG seed");
    sub->add_option("--repeats", f.repeats, "independent training repeats");
    sub->add_option("--patience", f.patience, "early-stop patience (epochs)");
    sub->add_flag("--halve-lr-on-plateau", f.halve_lr, "halve lr when validation stalls");
    sub->add_option("--ratio-train", f.ratio_train, "train split ratio");
    sub->add_option("--ratio-val", f.ratio_val, "validation split ratio");
    sub->add_option("--ratio-test", f.ratio_test, "test split ratio");
    sub->add_flag("--denormalized", f.denormalized, "also report raw-scale errors");
    sub->add_option("--out", f.out, "output directory");
}

tf::RunConfig build_config(CLI::App* sub, const Flags& f) {
    tf::RunConfig rc;
    if (sub->count("--config") > 0) {
        for (const auto& [key, value] : tf::parse_kv_file(f.config_path)) {
            if (!tf::apply_config_kv(rc, key, value)) {
                throw UsageError("unknown config key '" + key + "' in '" + f.config_path + "'");
            }
        }
    }
    auto has = [&](const char* name) { return sub->count(name) > 0; };
    if (has("--data")) rc.data_path = f.data;
    if (has("--synthetic")) rc.synthetic_kind = f.synthetic;
    if (has("--synthetic-length")) rc.synthetic_length = f.synth_length;
    if (has("--synthetic-channels")) rc.synthetic_channels = f.synth_channels;
    if (has("--noise")) rc.synthetic_noise = f.noise;
    if (has("--preset")) rc.preset = f.preset;
    if (has("--lookback")) rc.model.lookback = f.lookback;
    if (has("--horizon")) rc.model.horizon = f.horizon;
    if (has("--scales")) rc.model.num_scales = f.scales;
    if (has("--gamma")) rc.model.gamma = f.gamma;
    if (has("--variant")) rc.model.variant = tf::variant_from_string(f.variant);
    if (has("--model-dim")) rc.model.model_dim = f.model_dim;
    if (has("--heads")) rc.model.num_heads = f.heads;
    if (has("--conv-kernel")) rc.model.conv_kernel = f.conv_kernel;
    if (has("--ffn-hidden")) rc.model.ffn_hidden = f.ffn_hidden;
    if (has("--stage-depth")) rc.model.stage_depth = f.stage_depth;
    if (has("--vanilla-depth")) rc.model.vanilla_depth = f.vanilla_depth;
    if (has("--activation")) rc.model.activation = tf::activation_from_string(f.activation);
    if (has("--mask-padding")) rc.model.mask_padding = f.mask_padding;
    if (has("--renormalize-rows")) rc.model.renormalize_rows = f.renormalize_rows;
    if (has("--epochs")) rc.train.epochs = f.epochs;
    if (has("--batch-size")) rc.train.batch_size = f.batch_size;
    if (has("--lr")) rc.train.lr = f.lr;
    if (has("--seed")) rc.train.seed = f.seed;
    if (has("--repeats")) rc.train.repeats = f.repeats;
    if (has("--patience")) rc.train.early_stop_patience = f.patience;
    if (has("--halve-lr-on-plateau")) rc.train.halve_lr_on_plateau = f.halve_lr;
    if (has("--ratio-train")) rc.ratio_train = f.ratio_train;
    if (has("--ratio-val")) rc.ratio_val = f.ratio_val;
    if (has("--ratio-test")) rc.ratio_test = f.ratio_test;
    if (has("--denormalized")) rc.denormalized = f.denormalized;
    if (has("--out")) rc.out_dir = f.out;
    return rc;
}

struct LoadedData {
    tf::SeriesDataset ds;
    std::string desc;
};

LoadedData load_data(const tf::RunConfig& rc) {
    if (!rc.data_path.empty() && !rc.synthetic_kind.empty()) {
        throw UsageError("--data and --synthetic are mutually exclusive");
    }
    LoadedData out;
    if (!rc.data_path.empty()) {
        if (!std::filesystem::exists(rc.data_path)) {
            throw tf::IoError("data file '" + rc.data_path + "' does not exist");
        }
        out.ds = tf::is_dataset_cache(rc.data_path)
                     ? tf::load_dataset_cache(rc.data_path)
                     : tf::SeriesDataset::load_csv(rc.data_path);
        out.desc = "csv:" + std::filesystem::path(rc.data_path).filename().string();
    } else if (!rc.synthetic_kind.empty()) {
        out.ds = tf::synthetic(tf::synthetic_kind_from_string(rc.synthetic_kind),
                               rc.synthetic_length, rc.synthetic_channels, rc.train.seed,
                               rc.synthetic_noise);
        out.desc = "synthetic:" + rc.synthetic_kind +
                   ",length=" + std::to_string(rc.synthetic_length) +
                   ",channels=" + std::to_string(rc.synthetic_channels) +
                   ",seed=" + std::to_string(rc.train.seed);
    } else {
        throw UsageError("provide --data PATH or --synthetic KIND");
    }
    if (!rc.preset.empty()) {
        out.ds.set_split(tf::preset_split(rc.preset));
    } else if (!out.ds.has_split()) {
        out.ds.set_split_ratios(rc.ratio_train, rc.ratio_val, rc.ratio_test);
    }
    if (!out.ds.normalized()) out.ds.normalize();
    return out;
}

std::string out_dir(const tf::RunConfig& rc, const std::string& command) {
    return rc.out_dir.empty() ? "runs/" + command : rc.out_dir;
}

void write_timing(const std::string& dir, double seconds) {
    tf::write_text_file(dir + "/timing.txt", "wall_seconds=" + tf::fmt_g(seconds) + "\n");
}

class Stopwatch {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

int cmd_train(CLI::App* sub, const Flags& f) {
    Stopwatch watch;
    const tf::RunConfig rc = build_config(sub, f);
    LoadedData data = load_data(rc);
    const std::string dir = out_dir(rc, "train");

    std::unique_ptr<tf::TimeFormerModel> last;
    tf::ForecastReport rep =
        tf::run_repeats(rc.model, rc.train, data.ds, data.desc, rc.denormalized, &last);

    tf::write_text_file(dir + "/report.csv", tf::report_header_comment(rep) + tf::report_csv(rep));
    tf::write_text_file(dir + "/report.txt", tf::report_text(rep));
    tf::write_text_file(dir + "/history.csv", tf::history_csv(rep));
    if (last) {
        tf::save_checkpoint(*last, dir + "/model.ckpt",
                            data.ds.normalized() ? &data.ds.stats() : nullptr,
                            data.ds.normalized());
    }
    write_timing(dir, watch.seconds());
    std::cout << "mean test mse " << tf::fmt_g(rep.mean_mse) << " mae " << tf::fmt_g(rep.mean_mae)
              << " (baseline mse " << tf::fmt_g(rep.mean_baseline_mse) << ")\n"
              << "wrote " << dir << "/report.csv\n";
    return 0;
}

int cmd_eval(CLI::App* sub, const Flags& f) {
    Stopwatch watch;
    const tf::RunConfig rc = build_config(sub, f);
    if (f.checkpoint.empty()) throw UsageError("eval requires --checkpoint PATH");
    const tf::Checkpoint ck = tf::load_checkpoint(f.checkpoint);
    std::unique_ptr<tf::TimeFormerModel> model = tf::restore_model(ck, f.checkpoint);
    LoadedData data = load_data(rc);
    const std::string dir = out_dir(rc, "eval");

    const tf::EvalResult ev =
        tf::evaluate(*model, data.ds, tf::Split::test, rc.denormalized, rc.train.batch_size);

    std::string csv = tf::join_csv_row({"mse", "mae", "baseline_mse", "baseline_mae",
                                        "denorm_mse", "denorm_mae", "windows"});
    csv += tf::join_csv_row({tf::fmt_g(ev.mse), tf::fmt_g(ev.mae), tf::fmt_g(ev.baseline_mse),
                             tf::fmt_g(ev.baseline_mae),
                             ev.denorm_mse ? tf::fmt_g(*ev.denorm_mse) : "",
                             ev.denorm_mae ? tf::fmt_g(*ev.denorm_mae) : "",
                             std::to_string(ev.windows)});
    tf::write_text_file(dir + "/eval.csv", csv);

    std::string txt = "evaluation of " + f.checkpoint + " on " + data.desc + "\n";
    txt += "test mse " + tf::fmt_g(ev.mse) + " mae " + tf::fmt_g(ev.mae) + " over " +
           std::to_string(ev.windows) + " windows\n";
    txt += "baseline mse " + tf::fmt_g(ev.baseline_mse) + " mae " + tf::fmt_g(ev.baseline_mae) +
           "\n";
    tf::write_text_file(dir + "/eval.txt", txt);
    write_timing(dir, watch.seconds());
    std::cout << "test mse " << tf::fmt_g(ev.mse) << " mae " << tf::fmt_g(ev.mae) << "\n"
              << "wrote " << dir << "/eval.csv\n";
    return 0;
}

int cmd_ablate(CLI::App* sub, const Flags& f) {
    Stopwatch watch;
    const tf::RunConfig rc = build_config(sub, f);
    LoadedData data = load_data(rc);
    const std::string dir = out_dir(rc, "ablate");

    const tf::AblationReport rep =
        tf::run_ablation(rc.model, rc.train, data.ds, data.desc, rc.denormalized);
    tf::write_text_file(dir + "/ablation.csv", tf::ablation_csv(rep));
    tf::write_text_file(dir + "/ablation.txt", tf::ablation_text(rep));
    write_timing(dir, watch.seconds());
    for (const tf::ForecastReport& r : rep.variants) {
        std::cout << tf::variant_to_string(r.model.variant) << ": mean mse "
                  << tf::fmt_g(r.mean_mse) << "\n";
    }
    std::cout << "wrote " << dir << "/ablation.csv\n";
    return 0;
}

int cmd_sweep_gamma(CLI::App* sub, const Flags& f) {
    Stopwatch watch;
    const tf::RunConfig rc = build_config(sub, f);
    LoadedData data = load_data(rc);
    const std::string dir = out_dir(rc, "sweep-gamma");

    std::vector<double> grid =
        sub->count("--gammas") > 0 ? f.gamma_grid : tf::default_gamma_grid();
    const tf::SweepReport rep =
        tf::sweep_gamma(rc.model, rc.train, data.ds, data.desc, grid, rc.denormalized);
    tf::write_text_file(dir + "/sweep_gamma.csv", tf::sweep_csv(rep));
    tf::write_text_file(dir + "/sweep_gamma.txt", tf::sweep_text(rep));
    write_timing(dir, watch.seconds());
    std::cout << tf::sweep_text(rep) << "wrote " << dir << "/sweep_gamma.csv\n";
    return 0;
}

int cmd_sweep_scales(CLI::App* sub, const Flags& f) {
    Stopwatch watch;
    const tf::RunConfig rc = build_config(sub, f);
    LoadedData data = load_data(rc);
    const std::string dir = out_dir(rc, "sweep-scales");

    std::vector<std::size_t> grid =
        sub->count("--scale-values") > 0 ? f.scale_grid : std::vector<std::size_t>{1, 2, 3, 4};
    const tf::SweepReport rep =
        tf::sweep_scales(rc.model, rc.train, data.ds, data.desc, grid, rc.denormalized);
    tf::write_text_file(dir + "/sweep_scales.csv", tf::sweep_csv(rep));
    tf::write_text_file(dir + "/sweep_scales.txt", tf::sweep_text(rep));
    write_timing(dir, watch.seconds());
    std::cout << tf::sweep_text(rep) << "wrote " << dir << "/sweep_scales.csv\n";
    return 0;
}

int cmd_bench(CLI::App* sub, const Flags& f) {
    const tf::RunConfig rc = build_config(sub, f);
    const std::string dir = out_dir(rc, "bench");
    const tf::BenchReport rep = tf::benchmark_attention(f.bench_t, f.bench_d, f.bench_reps);
    tf::write_text_file(dir + "/bench.csv", tf::bench_csv(rep));
    std::cout << "log-log slope " << tf::fmt_g(rep.loglog_slope) << ", overhead ratio at T="
              << rep.points.back().tokens << ": " << tf::fmt_g(rep.overhead_ratio_at_max) << "\n"
              << "wrote " << dir << "/bench.csv\n";
    return 0;
}

int cmd_export_attention(CLI::App* sub, const Flags& f) {
    const tf::RunConfig rc = build_config(sub, f);
    if (f.checkpoint.empty()) throw UsageError("export-attention requires --checkpoint PATH");
    const tf::Checkpoint ck = tf::load_checkpoint(f.checkpoint);
    std::unique_ptr<tf::TimeFormerModel> model = tf::restore_model(ck, f.checkpoint);
    LoadedData data = load_data(rc);
    const std::string dir = out_dir(rc, "export-attention");
    const tf::ModelConfig& mc = model->config();

    const auto range = data.ds.range(tf::Split::test);
    const std::size_t start = range.begin + f.att_window;
    if (start + mc.lookback > data.ds.length()) {
        throw tf::ConfigError("window offset " + std::to_string(f.att_window) +
                              " leaves no full input window");
    }
    if (f.att_channel >= data.ds.channels()) {
        throw tf::ConfigError("channel " + std::to_string(f.att_channel) + " out of range; " +
                              std::to_string(data.ds.channels()) + " channels");
    }

    tf::Tensor row(tf::Shape{1, mc.lookback});
    for (std::size_t t = 0; t < mc.lookback; ++t) {
        row.values()[t] = data.ds.at(start + t, f.att_channel);
    }
    model->set_capture(true);
    model->forward_batch(row, false);

    if (f.att_scale < 1 || f.att_scale > model->num_stages()) {
        throw tf::ConfigError("scale " + std::to_string(f.att_scale) + " out of range; model has " +
                              std::to_string(model->num_stages()) + " stage(s)");
    }
    if (f.stage != "intra" && f.stage != "inter") {
        throw UsageError("--stage must be intra or inter");
    }
    auto& blocks = f.stage == "intra" ? model->intra_blocks(f.att_scale - 1)
                                      : model->inter_blocks(f.att_scale - 1);
    if (blocks.empty()) {
        throw tf::ConfigError("variant '" + tf::variant_to_string(mc.variant) + "' has no " +
                              f.stage + " attention stage");
    }
    tf::MoSABlock& block = blocks.front();
    if (f.att_head >= block.captured_heads()) {
        throw tf::ConfigError("head " + std::to_string(f.att_head) + " out of range; " +
                              std::to_string(block.captured_heads()) + " heads");
    }

    std::size_t batch_index = 0;
    if (f.stage == "intra") {
        const auto geo = tf::patch_geometry(tf::scale_length(mc.lookback, f.att_scale));
        batch_index = f.att_patch == static_cast<std::size_t>(-1)
                          ? geo.patches - 1
                          : f.att_patch;
        if (batch_index >= geo.patches) {
            throw tf::ConfigError("patch " + std::to_string(batch_index) + " out of range; " +
                                  std::to_string(geo.patches) + " patches");
        }
    }
    const tf::Tensor m = block.captured_matrix(f.att_head, batch_index);
    const std::size_t t = m.shape()[0];

    if (block.config().causal) {
        for (std::size_t i = 0; i < t; ++i) {
            for (std::size_t j = i + 1; j < t; ++j) {
                if (m.at2(i, j) != 0.0) {
                    throw tf::ContractError("captured attention has a nonzero future entry at (" +
                                            std::to_string(i) + ", " + std::to_string(j) + ")");
                }
            }
        }
    }

    const std::string base = dir + "/attention_" + f.stage + "_scale" +
                             std::to_string(f.att_scale) + "_head" + std::to_string(f.att_head);
    std::string csv;
    for (std::size_t i = 0; i < t; ++i) {
        std::vector<std::string> cells;
        for (std::size_t j = 0; j < t; ++j) cells.push_back(tf::fmt_g(m.at2(i, j)));
        csv += tf::join_csv_row(cells);
    }
    tf::write_text_file(base + ".csv", csv);
    tf::write_text_file(base + ".pgm", tf::pgm_from_matrix(m.values(), t, t));
    std::cout << "wrote " << base << ".csv and " << base << ".pgm\n";
    return 0;
}

int cmd_synth(CLI::App* sub, const Flags& f) {
    const tf::RunConfig rc = build_config(sub, f);
    if (rc.synthetic_kind.empty()) throw UsageError("synth requires --synthetic KIND");
    const std::string dir = out_dir(rc, "synth");
    tf::SeriesDataset ds =
        tf::synthetic(tf::synthetic_kind_from_string(rc.synthetic_kind), rc.synthetic_length,
                      rc.synthetic_channels, rc.train.seed, rc.synthetic_noise);

    std::string csv;
    {
        std::vector<std::string> head = ds.column_names();
        csv += tf::join_csv_row(head);
        for (std::size_t t = 0; t < ds.length(); ++t) {
            std::vector<std::string> cells;
            for (std::size_t c = 0; c < ds.channels(); ++c) {
                cells.push_back(tf::fmt_exact(ds.at(t, c)));
            }
            csv += tf::join_csv_row(cells);
        }
    }
    tf::write_text_file(dir + "/data.csv", csv);
    std::cout << "wrote " << dir << "/data.csv\n";
    if (f.write_cache) {
        tf::save_dataset_cache(ds, dir + "/data.tfds");
        std::cout << "wrote " << dir << "/data.tfds\n";
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"decay-modulated attention forecaster"};
    app.require_subcommand(1);

    Flags f;
    CLI::App* train = app.add_subcommand("train", "train a model and report test metrics");
    add_common_options(train, f);
    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    add_common_options(eval, f);
    eval->add_option("--checkpoint", f.checkpoint, "model checkpoint path");
    CLI::App* ablate = app.add_subcommand("ablate", "compare full and ablated variants");
    add_common_options(ablate, f);
    CLI::App* sweep_gamma = app.add_subcommand("sweep-gamma", "train across decay rates");
    add_common_options(sweep_gamma, f);
    sweep_gamma->add_option("--gammas", f.gamma_grid, "decay rates to sweep")->delimiter(',');
    CLI::App* sweep_scales = app.add_subcommand("sweep-scales", "train across scale counts");
    add_common_options(sweep_scales, f);
    sweep_scales->add_option("--scale-values", f.scale_grid, "scale counts to sweep")
        ->delimiter(',');
    CLI::App* bench = app.add_subcommand("bench", "time the attention mechanisms");
    add_common_options(bench, f);
    bench->add_option("--d", f.bench_d, "head dimension");
    bench->add_option("--t-values", f.bench_t, "token counts to time")->delimiter(',');
    bench->add_option("--reps", f.bench_reps, "timed repetitions per point");
    CLI::App* export_att = app.add_subcommand("export-attention", "dump an attention matrix");
    add_common_options(export_att, f);
    export_att->add_option("--checkpoint", f.checkpoint, "model checkpoint path");
    export_att->add_option("--stage", f.stage, "intra or inter")
        ->check(CLI::IsMember({"intra", "inter"}));
    export_att->add_option("--scale", f.att_scale, "scale index (1-based)");
    export_att->add_option("--head", f.att_head, "attention head index");
    export_att->add_option("--window", f.att_window, "test-window offset");
    export_att->add_option("--channel", f.att_channel, "input channel");
    export_att->add_option("--patch", f.att_patch, "patch index for intra (default: last)");
    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic CSV");
    add_common_options(synth, f);
    synth->add_flag("--cache", f.write_cache, "also write a dataset cache file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (app.got_subcommand(train)) return cmd_train(train, f);
        if (app.got_subcommand(eval)) return cmd_eval(eval, f);
        if (app.got_subcommand(ablate)) return cmd_ablate(ablate, f);
        if (app.got_subcommand(sweep_gamma)) return cmd_sweep_gamma(sweep_gamma, f);
        if (app.got_subcommand(sweep_scales)) return cmd_sweep_scales(sweep_scales, f);
        if (app.got_subcommand(bench)) return cmd_bench(bench, f);
        if (app.got_subcommand(export_att)) return cmd_export_attention(export_att, f);
        if (app.got_subcommand(synth)) return cmd_synth(synth, f);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
