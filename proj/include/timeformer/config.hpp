#pragma once

// Run configuration: training hyperparameters, data selection, and the flat
// key=value file format. Parsing is strict; unknown keys are rejected by the
// caller via the apply function's return value.

#include "timeformer/model.hpp"
#include "timeformer/report.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <optional>
#include <string>

namespace timeformer {

struct TrainConfig {
    std::size_t epochs = 100;
    std::size_t batch_size = 32;
    double lr = 0.005;
    std::uint64_t seed = 1;
    std::optional<std::size_t> early_stop_patience;
    bool halve_lr_on_plateau = false;
    std::size_t repeats = 5;

    void validate() const {
        if (epochs < 1) throw ConfigError("epochs must be >= 1");
        if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
        if (!(lr > 0.0)) throw ConfigError("lr must be > 0");
        if (repeats < 1) throw ConfigError("repeats must be >= 1");
        if (early_stop_patience && *early_stop_patience < 1) {
            throw ConfigError("patience must be >= 1 when set");
        }
    }
};

struct RunConfig {
    ModelConfig model;
    TrainConfig train;
    std::string data_path;
    std::string synthetic_kind;
    std::size_t synthetic_length = 2000;
    std::size_t synthetic_channels = 3;
    std::optional<double> synthetic_noise;
    std::string preset;
    double ratio_train = 0.7;
    double ratio_val = 0.1;
    double ratio_test = 0.2;
    bool denormalized = false;
    std::string out_dir;
};

namespace detail {

inline std::size_t parse_size(const std::string& key, const std::string& value) {
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (ec != std::errc() || ptr != value.data() + value.size()) {
        throw ParseError("value '" + value + "' for key '" + key + "' is not a non-negative integer");
    }
    return v;
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& value) {
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (ec != std::errc() || ptr != value.data() + value.size()) {
        throw ParseError("value '" + value + "' for key '" + key + "' is not a non-negative integer");
    }
    return v;
}

inline double parse_double(const std::string& key, const std::string& value) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (ec != std::errc() || ptr != value.data() + value.size()) {
        throw ParseError("value '" + value + "' for key '" + key + "' is not a number");
    }
    return v;
}

inline bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "yes") return true;
    if (value == "false" || value == "0" || value == "no") return false;
    throw ParseError("value '" + value + "' for key '" + key + "' is not a boolean");
}

} // namespace detail

/// Applies one key=value pair to the run configuration. Returns false when
/// the key is unknown; the caller decides whether that is fatal.
inline bool apply_config_kv(RunConfig& rc, const std::string& key, const std::string& value) {
    using detail::parse_bool;
    using detail::parse_double;
    using detail::parse_size;
    using detail::parse_u64;
    if (key == "data") rc.data_path = value;
    else if (key == "synthetic") rc.synthetic_kind = value;
    else if (key == "synthetic_length") rc.synthetic_length = parse_size(key, value);
    else if (key == "synthetic_channels") rc.synthetic_channels = parse_size(key, value);
    else if (key == "synthetic_noise") rc.synthetic_noise = parse_double(key, value);
    else if (key == "preset") rc.preset = value;
    else if (key == "lookback") rc.model.lookback = parse_size(key, value);
    else if (key == "horizon") rc.model.horizon = parse_size(key, value);
    else if (key == "scales") rc.model.num_scales = parse_size(key, value);
    else if (key == "model_dim") rc.model.model_dim = parse_size(key, value);
    else if (key == "num_heads") rc.model.num_heads = parse_size(key, value);
    else if (key == "gamma") rc.model.gamma = parse_double(key, value);
    else if (key == "conv_kernel") rc.model.conv_kernel = parse_size(key, value);
    else if (key == "ffn_hidden") rc.model.ffn_hidden = parse_size(key, value);
    else if (key == "variant") rc.model.variant = variant_from_string(value);
    else if (key == "stage_depth") rc.model.stage_depth = parse_size(key, value);
    else if (key == "vanilla_depth") rc.model.vanilla_depth = parse_size(key, value);
    else if (key == "activation") rc.model.activation = activation_from_string(value);
    else if (key == "mask_padding") rc.model.mask_padding = parse_bool(key, value);
    else if (key == "renormalize_rows") rc.model.renormalize_rows = parse_bool(key, value);
    else if (key == "epochs") rc.train.epochs = parse_size(key, value);
    else if (key == "batch_size") rc.train.batch_size = parse_size(key, value);
    else if (key == "lr") rc.train.lr = parse_double(key, value);
    else if (key == "seed") rc.train.seed = parse_u64(key, value);
    else if (key == "repeats") rc.train.repeats = parse_size(key, value);
    else if (key == "patience") rc.train.early_stop_patience = parse_size(key, value);
    else if (key == "halve_lr_on_plateau") rc.train.halve_lr_on_plateau = parse_bool(key, value);
    else if (key == "ratio_train") rc.ratio_train = parse_double(key, value);
    else if (key == "ratio_val") rc.ratio_val = parse_double(key, value);
    else if (key == "ratio_test") rc.ratio_test = parse_double(key, value);
    else if (key == "denormalized") rc.denormalized = parse_bool(key, value);
    else if (key == "out") rc.out_dir = value;
    else return false;
    return true;
}

/// Flat key=value file: one pair per line, '#' starts a comment, blank lines
/// ignored. Returns pairs in file order.
inline std::vector<std::pair<std::string, std::string>> parse_kv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file '" + path + "'");
    std::vector<std::pair<std::string, std::string>> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::size_t b = line.find_first_not_of(" \t");
        if (b == std::string::npos || line[b] == '#') continue;
        const std::size_t eq = line.find('=', b);
        if (eq == std::string::npos) {
            throw ParseError("config file '" + path + "' line " + std::to_string(line_no) +
                             ": expected key=value");
        }
        std::string key = line.substr(b, eq - b);
        std::string value = line.substr(eq + 1);
        while (!key.empty() && (key.back() == ' ' || key.back() == '\t')) key.pop_back();
        std::size_t vb = value.find_first_not_of(" \t");
        value = vb == std::string::npos ? "" : value.substr(vb);
        while (!value.empty() && (value.back() == ' ' || value.back() == '\t')) value.pop_back();
        if (key.empty()) {
            throw ParseError("config file '" + path + "' line " + std::to_string(line_no) +
                             ": empty key");
        }
        out.emplace_back(std::move(key), std::move(value));
    }
    return out;
}

inline std::string model_config_text(const ModelConfig& m) {
    std::string s;
    s += "lookback=" + std::to_string(m.lookback) + "\n";
    s += "horizon=" + std::to_string(m.horizon) + "\n";
    s += "scales=" + std::to_string(m.num_scales) + "\n";
    s += "model_dim=" + std::to_string(m.model_dim) + "\n";
    s += "num_heads=" + std::to_string(m.num_heads) + "\n";
    s += "gamma=" + fmt_exact(m.gamma) + "\n";
    s += "conv_kernel=" + std::to_string(m.conv_kernel) + "\n";
    s += "ffn_hidden=" + std::to_string(m.ffn_hidden) + "\n";
    s += "variant=" + variant_to_string(m.variant) + "\n";
    s += "stage_depth=" + std::to_string(m.stage_depth) + "\n";
    s += "vanilla_depth=" + std::to_string(m.vanilla_depth) + "\n";
    s += "activation=" + activation_to_string(m.activation) + "\n";
    s += std::string("mask_padding=") + (m.mask_padding ? "true" : "false") + "\n";
    s += std::string("renormalize_rows=") + (m.renormalize_rows ? "true" : "false") + "\n";
    return s;
}

inline std::string train_config_text(const TrainConfig& t) {
    std::string s;
    s += "epochs=" + std::to_string(t.epochs) + "\n";
    s += "batch_size=" + std::to_string(t.batch_size) + "\n";
    s += "lr=" + fmt_exact(t.lr) + "\n";
    s += "seed=" + std::to_string(t.seed) + "\n";
    s += "patience=" + (t.early_stop_patience ? std::to_string(*t.early_stop_patience)
                                              : std::string("none")) + "\n";
    s += std::string("halve_lr_on_plateau=") + (t.halve_lr_on_plateau ? "true" : "false") + "\n";
    s += "repeats=" + std::to_string(t.repeats) + "\n";
    return s;
}

inline std::string config_text(const ModelConfig& m, const TrainConfig& t,
                               const std::string& dataset_desc) {
    return "dataset=" + dataset_desc + "\n" + model_config_text(m) + train_config_text(t);
}

} // namespace timeformer
