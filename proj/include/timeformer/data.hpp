#pragma once

// Data pipeline: CSV ingestion, chronological splits, train-statistics
// normalization, sliding windows, and synthetic series for self-contained
// runs.

#include "timeformer/rng.hpp"
#include "timeformer/tensor.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace timeformer {

struct SplitSizes {
    std::size_t train = 0;
    std::size_t val = 0;
    std::size_t test = 0;

    std::size_t total() const { return train + val + test; }
};

enum class Split { train, val, test };

inline std::string split_to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        default: return "test";
    }
}

/// Table of fixed split sizes for the common public benchmark files.
/// Names are matched case-insensitively.
inline SplitSizes preset_split(const std::string& name) {
    std::string low = name;
    std::transform(low.begin(), low.end(), low.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (low == "etth1" || low == "etth2") return {8545, 2881, 2881};
    if (low == "ettm1" || low == "ettm2") return {34465, 11521, 11521};
    if (low == "exchange") return {5120, 665, 1422};
    if (low == "weather") return {36792, 5271, 10540};
    if (low == "electricity") return {18317, 2633, 5261};
    throw ConfigError("unknown dataset preset '" + name + "'");
}

inline std::vector<std::string> preset_names() {
    return {"ETTh1", "ETTh2", "ETTm1", "ETTm2", "Exchange", "Weather", "Electricity"};
}

struct NormStats {
    std::vector<double> mean;
    std::vector<double> stddev;
    std::vector<std::uint8_t> shift_only;
};

class SeriesDataset {
public:
    SeriesDataset() = default;

    static SeriesDataset from_values(std::vector<double> values, std::size_t channels,
                                     std::vector<std::string> names = {}) {
        if (channels == 0) throw DimensionError("dataset needs at least one channel");
        if (values.size() % channels != 0) {
            throw DimensionError("value count " + std::to_string(values.size()) +
                                 " not divisible by channel count " + std::to_string(channels));
        }
        SeriesDataset ds;
        ds.values_ = std::move(values);
        ds.channels_ = channels;
        if (names.empty()) {
            for (std::size_t c = 0; c < channels; ++c) names.push_back("c" + std::to_string(c));
        }
        ds.names_ = std::move(names);
        return ds;
    }

    /// Parses a rectangular numeric CSV with a header row. A leading
    /// timestamp column (named date/timestamp/time, or whose first data cell
    /// is not numeric) is dropped.
    static SeriesDataset load_csv(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open '" + path + "'");
        std::string line;
        if (!std::getline(in, line)) throw ParseError("'" + path + "' is empty");
        strip_cr(line);
        std::vector<std::string> header = split_line(line);
        if (header.empty()) throw ParseError("'" + path + "' has an empty header row");

        bool drop_first = false;
        if (!header.empty()) {
            std::string h0 = header[0];
            std::transform(h0.begin(), h0.end(), h0.begin(),
                           [](unsigned char c) { return std::tolower(c); });
            drop_first = h0 == "date" || h0 == "timestamp" || h0 == "time";
        }

        std::vector<std::vector<std::string>> rows;
        std::size_t line_no = 1;
        while (std::getline(in, line)) {
            ++line_no;
            strip_cr(line);
            if (line.empty() && in.peek() == std::ifstream::traits_type::eof()) break;
            std::vector<std::string> cells = split_line(line);
            if (cells.size() != header.size()) {
                throw ParseError("'" + path + "' row " + std::to_string(line_no) + " has " +
                                 std::to_string(cells.size()) + " cells, expected " +
                                 std::to_string(header.size()));
            }
            rows.push_back(std::move(cells));
        }
        if (rows.empty()) throw ParseError("'" + path + "' has no data rows");

        if (!drop_first && !parse_cell(rows[0][0]).has_value()) drop_first = true;
        const std::size_t first_col = drop_first ? 1 : 0;
        if (first_col >= header.size()) {
            throw ParseError("'" + path + "' has no numeric columns");
        }

        const std::size_t channels = header.size() - first_col;
        std::vector<double> values;
        values.reserve(rows.size() * channels);
        for (std::size_t r = 0; r < rows.size(); ++r) {
            for (std::size_t c = first_col; c < header.size(); ++c) {
                const std::optional<double> v = parse_cell(rows[r][c]);
                if (!v) {
                    throw ParseError("'" + path + "' row " + std::to_string(r + 2) +
                                     ", column " + std::to_string(c + 1) +
                                     ": cannot parse '" + rows[r][c] + "' as a number");
                }
                values.push_back(*v);
            }
        }
        std::vector<std::string> names(header.begin() + static_cast<std::ptrdiff_t>(first_col),
                                       header.end());
        return from_values(std::move(values), channels, std::move(names));
    }

    std::size_t length() const { return channels_ == 0 ? 0 : values_.size() / channels_; }
    std::size_t channels() const { return channels_; }
    double at(std::size_t t, std::size_t c) const { return values_[t * channels_ + c]; }
    const std::vector<double>& values() const { return values_; }
    const std::vector<std::string>& column_names() const { return names_; }

    void set_split(SplitSizes sizes) {
        if (sizes.total() > length()) {
            throw ConfigError("split sizes total " + std::to_string(sizes.total()) +
                              " exceed series length " + std::to_string(length()));
        }
        split_ = sizes;
        has_split_ = true;
    }

    void set_split_ratios(double train, double val, double test) {
        if (train < 0 || val < 0 || test < 0) throw ConfigError("split ratios must be >= 0");
        const double l = static_cast<double>(length());
        SplitSizes sizes;
        sizes.train = static_cast<std::size_t>(std::llround(l * train));
        sizes.val = static_cast<std::size_t>(std::llround(l * val));
        sizes.test = static_cast<std::size_t>(std::llround(l * test));
        set_split(sizes);
    }

    bool has_split() const { return has_split_; }

    const SplitSizes& split_sizes() const {
        if (!has_split_) throw ConfigError("dataset has no split assigned");
        return split_;
    }

    struct Range {
        std::size_t begin = 0;
        std::size_t end = 0;
        std::size_t size() const { return end - begin; }
    };

    Range range(Split which) const {
        const SplitSizes& s = split_sizes();
        switch (which) {
            case Split::train: return {0, s.train};
            case Split::val: return {s.train, s.train + s.val};
            default: return {s.train + s.val, s.train + s.val + s.test};
        }
    }

    /// Z-scores every split with statistics from the train split only.
    /// Channels whose train standard deviation is below 1e-8 are shifted but
    /// not scaled, with a warning recorded.
    void normalize() {
        const SplitSizes& s = split_sizes();
        if (s.train == 0) throw ConfigError("cannot normalize with an empty train split");
        if (normalized_) throw ConfigError("dataset is already normalized");
        stats_.mean.assign(channels_, 0.0);
        stats_.stddev.assign(channels_, 1.0);
        stats_.shift_only.assign(channels_, 0);
        const double inv_n = 1.0 / static_cast<double>(s.train);
        for (std::size_t c = 0; c < channels_; ++c) {
            double m = 0.0;
            for (std::size_t t = 0; t < s.train; ++t) m += at(t, c);
            m *= inv_n;
            double var = 0.0;
            for (std::size_t t = 0; t < s.train; ++t) {
                const double d = at(t, c) - m;
                var += d * d;
            }
            const double sd = std::sqrt(var * inv_n);
            stats_.mean[c] = m;
            if (sd < 1e-8) {
                stats_.stddev[c] = 1.0;
                stats_.shift_only[c] = 1;
                warnings_.push_back("channel " + std::to_string(c) + " (" + names_[c] +
                                    ") is near-constant on the train split; shifted only");
            } else {
                stats_.stddev[c] = sd;
            }
        }
        const std::size_t l = length();
        for (std::size_t t = 0; t < l; ++t) {
            for (std::size_t c = 0; c < channels_; ++c) {
                values_[t * channels_ + c] =
                    (values_[t * channels_ + c] - stats_.mean[c]) / stats_.stddev[c];
            }
        }
        normalized_ = true;
    }

    bool normalized() const { return normalized_; }
    const NormStats& stats() const { return stats_; }
    void set_stats(NormStats st, bool normalized) {
        stats_ = std::move(st);
        normalized_ = normalized;
    }

    double denormalize_value(std::size_t channel, double v) const {
        if (!normalized_) return v;
        return v * stats_.stddev[channel] + stats_.mean[channel];
    }

    const std::vector<std::string>& warnings() const { return warnings_; }
    void add_warning(std::string w) { warnings_.push_back(std::move(w)); }

private:
    static void strip_cr(std::string& s) {
        if (!s.empty() && s.back() == '\r') s.pop_back();
    }

    static std::vector<std::string> split_line(const std::string& line) {
        std::vector<std::string> out;
        std::string cell;
        std::stringstream ss(line);
        while (std::getline(ss, cell, ',')) out.push_back(cell);
        if (!line.empty() && line.back() == ',') out.push_back("");
        return out;
    }

    static std::optional<double> parse_cell(const std::string& cell) {
        std::size_t b = 0, e = cell.size();
        while (b < e && std::isspace(static_cast<unsigned char>(cell[b]))) ++b;
        while (e > b && std::isspace(static_cast<unsigned char>(cell[e - 1]))) --e;
        if (b == e) return std::nullopt;
        double v = 0.0;
        const char* first = cell.data() + b;
        const char* last = cell.data() + e;
        auto [ptr, ec] = std::from_chars(first, last, v);
        if (ec != std::errc() || ptr != last) return std::nullopt;
        return v;
    }

    std::vector<double> values_;
    std::size_t channels_ = 0;
    std::vector<std::string> names_;
    SplitSizes split_;
    bool has_split_ = false;
    NormStats stats_;
    bool normalized_ = false;
    std::vector<std::string> warnings_;
};

struct WindowSample {
    Tensor input;
    Tensor target;
    std::size_t start_index = 0;
};

/// Stride-1 sliding windows over one split range. A range too short for even
/// one window yields a count of zero and sets a flag; callers surface the
/// warning.
class WindowIndex {
public:
    WindowIndex(SeriesDataset::Range range, std::size_t lookback, std::size_t horizon)
        : range_(range), lookback_(lookback), horizon_(horizon) {
        const std::size_t need = lookback + horizon;
        count_ = range.size() >= need ? range.size() - need + 1 : 0;
    }

    std::size_t count() const { return count_; }
    bool empty() const { return count_ == 0; }
    std::size_t lookback() const { return lookback_; }
    std::size_t horizon() const { return horizon_; }
    std::size_t start(std::size_t i) const { return range_.begin + i; }

    std::vector<std::size_t> in_order() const {
        std::vector<std::size_t> starts(count_);
        for (std::size_t i = 0; i < count_; ++i) starts[i] = range_.begin + i;
        return starts;
    }

    std::vector<std::size_t> shuffled(std::uint64_t seed) const {
        Rng rng(seed);
        std::vector<std::size_t> order = rng.permutation(count_);
        for (std::size_t& i : order) i += range_.begin;
        return order;
    }

private:
    SeriesDataset::Range range_;
    std::size_t lookback_ = 0;
    std::size_t horizon_ = 0;
    std::size_t count_ = 0;
};

inline WindowSample make_window(const SeriesDataset& ds, std::size_t start,
                                std::size_t lookback, std::size_t horizon) {
    if (start + lookback + horizon > ds.length()) {
        throw DimensionError("window starting at " + std::to_string(start) +
                             " runs past the series end");
    }
    const std::size_t n = ds.channels();
    WindowSample w;
    w.start_index = start;
    w.input = Tensor(Shape{lookback, n});
    w.target = Tensor(Shape{horizon, n});
    for (std::size_t t = 0; t < lookback; ++t) {
        for (std::size_t c = 0; c < n; ++c) w.input.values()[t * n + c] = ds.at(start + t, c);
    }
    for (std::size_t t = 0; t < horizon; ++t) {
        for (std::size_t c = 0; c < n; ++c) {
            w.target.values()[t * n + c] = ds.at(start + lookback + t, c);
        }
    }
    return w;
}

/// Batch matrices for channel-independent training. Row (w, c) of the outputs
/// holds channel c of the window starting at starts[w]; shapes are
/// [W*N, lookback] and [W*N, horizon].
inline std::pair<Tensor, Tensor> fill_batch(const SeriesDataset& ds,
                                            const std::vector<std::size_t>& starts,
                                            std::size_t lookback, std::size_t horizon) {
    const std::size_t n = ds.channels();
    const std::size_t rows = starts.size() * n;
    Tensor x(Shape{rows, lookback});
    Tensor y(Shape{rows, horizon});
    for (std::size_t w = 0; w < starts.size(); ++w) {
        const std::size_t s = starts[w];
        for (std::size_t c = 0; c < n; ++c) {
            double* xr = x.values().data() + (w * n + c) * lookback;
            double* yr = y.values().data() + (w * n + c) * horizon;
            for (std::size_t t = 0; t < lookback; ++t) xr[t] = ds.at(s + t, c);
            for (std::size_t t = 0; t < horizon; ++t) yr[t] = ds.at(s + lookback + t, c);
        }
    }
    return {std::move(x), std::move(y)};
}

enum class SyntheticKind { ar1, sine_mix, trend_season_noise };

inline SyntheticKind synthetic_kind_from_string(const std::string& s) {
    if (s == "ar1") return SyntheticKind::ar1;
    if (s == "sine_mix") return SyntheticKind::sine_mix;
    if (s == "trend_season_noise") return SyntheticKind::trend_season_noise;
    throw ConfigError("unknown synthetic kind '" + s + "'");
}

inline std::string synthetic_kind_to_string(SyntheticKind k) {
    switch (k) {
        case SyntheticKind::ar1: return "ar1";
        case SyntheticKind::sine_mix: return "sine_mix";
        default: return "trend_season_noise";
    }
}

/// Deterministic synthetic series; each channel uses an independent
/// substream derived from the base seed. `noise` overrides the per-kind
/// default noise scale.
inline SeriesDataset synthetic(SyntheticKind kind, std::size_t length, std::size_t channels,
                               std::uint64_t seed, std::optional<double> noise = std::nullopt) {
    if (length < 1) throw ConfigError("synthetic series length must be >= 1");
    if (channels < 1) throw ConfigError("synthetic series needs at least one channel");
    constexpr double two_pi = 6.28318530717958647692;
    std::vector<double> values(length * channels, 0.0);
    for (std::size_t c = 0; c < channels; ++c) {
        Rng rng(derive_seed(seed, c));
        switch (kind) {
            case SyntheticKind::ar1: {
                const double sigma = noise.value_or(1.0);
                double x = 1.0;
                for (std::size_t t = 0; t < length; ++t) {
                    values[t * channels + c] = x;
                    x = 0.9 * x + sigma * rng.normal();
                }
                break;
            }
            case SyntheticKind::sine_mix: {
                const double sigma = noise.value_or(0.1);
                const double amps[3] = {1.0, 0.6, 0.4};
                const double periods[3] = {24.0, 24.0 * 1.4142135623730951,
                                           24.0 * 2.2360679774997896};
                double phase[3];
                for (double& p : phase) p = rng.uniform(0.0, two_pi);
                for (std::size_t t = 0; t < length; ++t) {
                    double v = 0.0;
                    for (int i = 0; i < 3; ++i) {
                        v += amps[i] * std::sin(two_pi * static_cast<double>(t) / periods[i] +
                                                phase[i]);
                    }
                    values[t * channels + c] = v + sigma * rng.normal();
                }
                break;
            }
            case SyntheticKind::trend_season_noise: {
                const double sigma = noise.value_or(0.1);
                const double slope = rng.uniform(0.002, 0.008);
                const double phase = rng.uniform(0.0, two_pi);
                for (std::size_t t = 0; t < length; ++t) {
                    const double td = static_cast<double>(t);
                    values[t * channels + c] = slope * td +
                                               std::sin(two_pi * td / 24.0 + phase) +
                                               sigma * rng.normal();
                }
                break;
            }
        }
    }
    return SeriesDataset::from_values(std::move(values), channels);
}

} // namespace timeformer
