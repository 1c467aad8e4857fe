// End-to-end tests of the command-line binary: exit codes, artifact layout,
// strict config handling, and byte-identical repeated runs.

#include "support/test_support.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

using namespace timeformer;
namespace fs = std::filesystem;

namespace {

const std::string kTinyFlags =
    " --synthetic sine_mix --synthetic-length 200 --lookback 16 --horizon 4"
    " --model-dim 8 --heads 2 --repeats 1 --batch-size 16 --seed 3";

const std::string kTinyTrain = kTinyFlags + " --epochs 2";

} // namespace

TEST_CASE("cli usage errors exit with code two") {
    REQUIRE(ts::run_command(ts::cli_path()).exit_code == 2);
    REQUIRE(ts::run_command(ts::cli_path() + " no-such-command").exit_code == 2);
    REQUIRE(ts::run_command(ts::cli_path() + " train --bogus-flag 1").exit_code == 2);
    REQUIRE(ts::run_command(ts::cli_path() + " train --variant nonsense").exit_code == 2);

    auto r = ts::run_command(ts::cli_path() + " train --out " + ts::make_temp_dir("cli_none"));
    REQUIRE(r.exit_code == 2);
    REQUIRE(r.output.find("--data") != std::string::npos);

    r = ts::run_command(ts::cli_path() + " train --data a.csv --synthetic ar1");
    REQUIRE(r.exit_code == 2);
}

TEST_CASE("cli help exits cleanly") {
    auto r = ts::run_command(ts::cli_path() + " --help");
    REQUIRE(r.exit_code == 0);
    REQUIRE(r.output.find("train") != std::string::npos);
    REQUIRE(ts::run_command(ts::cli_path() + " train --help").exit_code == 0);
}

TEST_CASE("cli missing data file exits with code one and names the path") {
    auto r = ts::run_command(ts::cli_path() + " train --data /no/such/file.csv");
    REQUIRE(r.exit_code == 1);
    REQUIRE(r.output.find("/no/such/file.csv") != std::string::npos);
}

TEST_CASE("cli train writes the full artifact set") {
    const std::string dir = ts::make_temp_dir("cli_train");
    auto r = ts::run_command(ts::cli_path() + " train" + kTinyTrain + " --out " + dir);
    INFO(r.output);
    REQUIRE(r.exit_code == 0);
    REQUIRE(fs::exists(dir + "/report.csv"));
    REQUIRE(fs::exists(dir + "/report.txt"));
    REQUIRE(fs::exists(dir + "/history.csv"));
    REQUIRE(fs::exists(dir + "/model.ckpt"));
    REQUIRE(fs::exists(dir + "/timing.txt"));

    const std::string report = ts::read_file(dir + "/report.csv");
    REQUIRE(report.find("# config_hash=") != std::string::npos);
    REQUIRE(report.find("repeat,seed,mse,") != std::string::npos);
    REQUIRE(report.find("mean,") != std::string::npos);
    REQUIRE(r.output.find("mean test mse") != std::string::npos);
}

TEST_CASE("cli train twice is byte-identical apart from timing") {
    const std::string a = ts::make_temp_dir("cli_rep_a");
    const std::string b = ts::make_temp_dir("cli_rep_b");
    REQUIRE(ts::run_command(ts::cli_path() + " train" + kTinyTrain + " --out " + a).exit_code == 0);
    REQUIRE(ts::run_command(ts::cli_path() + " train" + kTinyTrain + " --out " + b).exit_code == 0);
    REQUIRE(ts::read_file(a + "/report.csv") == ts::read_file(b + "/report.csv"));
    REQUIRE(ts::read_file(a + "/report.txt") == ts::read_file(b + "/report.txt"));
    REQUIRE(ts::read_file(a + "/history.csv") == ts::read_file(b + "/history.csv"));
    REQUIRE(ts::read_file(a + "/model.ckpt") == ts::read_file(b + "/model.ckpt"));
}

TEST_CASE("cli eval consumes a checkpoint") {
    const std::string dir = ts::make_temp_dir("cli_eval");
    REQUIRE(ts::run_command(ts::cli_path() + " train" + kTinyTrain + " --out " + dir).exit_code ==
            0);
    auto r = ts::run_command(ts::cli_path() + " eval" + kTinyFlags + " --checkpoint " + dir +
                             "/model.ckpt --out " + dir + "/eval");
    INFO(r.output);
    REQUIRE(r.exit_code == 0);
    REQUIRE(fs::exists(dir + "/eval/eval.csv"));
    REQUIRE(ts::read_file(dir + "/eval/eval.csv").rfind("mse,mae,", 0) == 0);

    REQUIRE(ts::run_command(ts::cli_path() + " eval" + kTinyFlags).exit_code == 2);
    REQUIRE(ts::run_command(ts::cli_path() + " eval" + kTinyFlags +
                            " --checkpoint /no/ckpt").exit_code == 1);
}

TEST_CASE("cli synth then train on the generated csv") {
    const std::string dir = ts::make_temp_dir("cli_synth");
    auto r = ts::run_command(ts::cli_path() +
                             " synth --synthetic ar1 --synthetic-length 200"
                             " --synthetic-channels 2 --seed 9 --cache --out " + dir);
    INFO(r.output);
    REQUIRE(r.exit_code == 0);
    REQUIRE(fs::exists(dir + "/data.csv"));
    REQUIRE(fs::exists(dir + "/data.tfds"));

    const std::string train_dir = ts::make_temp_dir("cli_synth_train");
    auto t = ts::run_command(ts::cli_path() + " train --data " + dir +
                             "/data.csv --lookback 16 --horizon 4 --model-dim 8 --heads 2"
                             " --epochs 1 --repeats 1 --out " + train_dir);
    INFO(t.output);
    REQUIRE(t.exit_code == 0);

    auto c = ts::run_command(ts::cli_path() + " train --data " + dir +
                             "/data.tfds --lookback 16 --horizon 4 --model-dim 8 --heads 2"
                             " --epochs 1 --repeats 1 --out " + train_dir + "_cache");
    INFO(c.output);
    REQUIRE(c.exit_code == 0);
}

TEST_CASE("cli config file applies and unknown keys are fatal") {
    const std::string dir = ts::make_temp_dir("cli_cfg");
    write_text_file(dir + "/run.conf",
                    "synthetic=sine_mix\nsynthetic_length=200\nlookback=16\nhorizon=4\n"
                    "model_dim=8\nnum_heads=2\nepochs=1\nrepeats=1\nout=" + dir + "/run\n");
    auto r = ts::run_command(ts::cli_path() + " train --config " + dir + "/run.conf");
    INFO(r.output);
    REQUIRE(r.exit_code == 0);
    REQUIRE(fs::exists(dir + "/run/report.csv"));

    write_text_file(dir + "/bad.conf", "lookback=16\nmystery_knob=1\n");
    auto bad = ts::run_command(ts::cli_path() + " train --config " + dir + "/bad.conf");
    REQUIRE(bad.exit_code == 2);
    REQUIRE(bad.output.find("mystery_knob") != std::string::npos);

    // Explicit flags override config file values: horizon 3 from the command line.
    write_text_file(dir + "/base.conf",
                    "synthetic=sine_mix\nsynthetic_length=200\nlookback=16\nhorizon=4\n"
                    "model_dim=8\nnum_heads=2\nepochs=1\nrepeats=1\n");
    auto over = ts::run_command(ts::cli_path() + " train --config " + dir +
                                "/base.conf --horizon 3 --out " + dir + "/over");
    REQUIRE(over.exit_code == 0);
    REQUIRE(ts::read_file(dir + "/over/report.txt").find("horizon=3") != std::string::npos);
}

TEST_CASE("cli ablate writes a three-variant comparison") {
    const std::string dir = ts::make_temp_dir("cli_ablate");
    auto r = ts::run_command(ts::cli_path() + " ablate" + kTinyFlags + " --epochs 1 --out " + dir);
    INFO(r.output);
    REQUIRE(r.exit_code == 0);
    const std::string csv = ts::read_file(dir + "/ablation.csv");
    REQUIRE(csv.find("full,") != std::string::npos);
    REQUIRE(csv.find("no_segmentation,") != std::string::npos);
    REQUIRE(csv.find("standard_attention,") != std::string::npos);
    REQUIRE(fs::exists(dir + "/ablation.txt"));
}

TEST_CASE("cli gamma sweep honors an explicit grid") {
    const std::string dir = ts::make_temp_dir("cli_sweep");
    auto r = ts::run_command(ts::cli_path() + " sweep-gamma" + kTinyFlags +
                             " --epochs 1 --gammas 0,0.5 --out " + dir);
    INFO(r.output);
    REQUIRE(r.exit_code == 0);
    const std::string csv = ts::read_file(dir + "/sweep_gamma.csv");
    REQUIRE(csv.rfind("gamma,", 0) == 0);
    REQUIRE(csv.find("\n0,") != std::string::npos);
    REQUIRE(csv.find("\n0.5,") != std::string::npos);
}

TEST_CASE("cli scale sweep runs over requested scale counts") {
    const std::string dir = ts::make_temp_dir("cli_scales");
    auto r = ts::run_command(ts::cli_path() + " sweep-scales" + kTinyFlags +
                             " --epochs 1 --scale-values 1,2 --out " + dir);
    INFO(r.output);
    REQUIRE(r.exit_code == 0);
    const std::string csv = ts::read_file(dir + "/sweep_scales.csv");
    REQUIRE(csv.rfind("scales,", 0) == 0);
    REQUIRE(csv.find("\n2,") != std::string::npos);
}

TEST_CASE("cli bench writes timings") {
    const std::string dir = ts::make_temp_dir("cli_bench");
    auto r = ts::run_command(ts::cli_path() + " bench --t-values 8,16 --d 8 --reps 1 --out " +
                             dir);
    INFO(r.output);
    REQUIRE(r.exit_code == 0);
    const std::string csv = ts::read_file(dir + "/bench.csv");
    REQUIRE(csv.rfind("tokens,", 0) == 0);
    REQUIRE(csv.find("\n8,") != std::string::npos);
    REQUIRE(r.output.find("slope") != std::string::npos);
}

TEST_CASE("cli exports a causal attention matrix as csv and pgm") {
    const std::string dir = ts::make_temp_dir("cli_att");
    REQUIRE(ts::run_command(ts::cli_path() + " train" + kTinyTrain + " --out " + dir).exit_code ==
            0);
    auto r = ts::run_command(ts::cli_path() + " export-attention" + kTinyFlags +
                             " --checkpoint " + dir + "/model.ckpt --stage intra --scale 1"
                             " --head 0 --out " + dir + "/att");
    INFO(r.output);
    REQUIRE(r.exit_code == 0);
    const std::string base = dir + "/att/attention_intra_scale1_head0";
    REQUIRE(fs::exists(base + ".csv"));
    REQUIRE(fs::exists(base + ".pgm"));
    REQUIRE(ts::read_file(base + ".pgm").rfind("P2\n", 0) == 0);

    // 16 steps -> 4x4 patches; the matrix is 4x4 with a zero upper triangle.
    const std::string csv = ts::read_file(base + ".csv");
    std::size_t lines = 0;
    for (char ch : csv) lines += ch == '\n' ? 1 : 0;
    REQUIRE(lines == 4);

    auto inter = ts::run_command(ts::cli_path() + " export-attention" + kTinyFlags +
                                 " --checkpoint " + dir + "/model.ckpt --stage inter --out " +
                                 dir + "/att2");
    REQUIRE(inter.exit_code == 0);
    REQUIRE(fs::exists(dir + "/att2/attention_inter_scale1_head0.csv"));

    REQUIRE(ts::run_command(ts::cli_path() + " export-attention" + kTinyFlags +
                            " --checkpoint " + dir + "/model.ckpt --stage sideways")
                .exit_code == 2);
    REQUIRE(ts::run_command(ts::cli_path() + " export-attention" + kTinyFlags +
                            " --checkpoint " + dir + "/model.ckpt --head 7")
                .exit_code == 1);
}
