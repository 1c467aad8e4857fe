#pragma once

// Versioned binary containers. A container is a magic tag, a format version,
// and named sections; model checkpoints store config text, normalization
// statistics, and every named tensor, while dataset caches store series
// values with split and normalization state. Numbers are native-endian
// float64/uintN, written and read on the same machine class.

#include "timeformer/config.hpp"
#include "timeformer/data.hpp"
#include "timeformer/model.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace timeformer {

namespace detail {

constexpr char kCheckpointMagic[4] = {'T', 'F', 'C', 'K'};
constexpr char kDatasetMagic[4] = {'T', 'F', 'D', 'S'};
constexpr std::uint32_t kContainerVersion = 1;

inline void put_u32(std::string& out, std::uint32_t v) {
    char buf[4];
    std::memcpy(buf, &v, 4);
    out.append(buf, 4);
}

inline void put_u64(std::string& out, std::uint64_t v) {
    char buf[8];
    std::memcpy(buf, &v, 8);
    out.append(buf, 8);
}

inline void put_f64(std::string& out, double v) {
    char buf[8];
    std::memcpy(buf, &v, 8);
    out.append(buf, 8);
}

inline void put_str(std::string& out, const std::string& s) {
    put_u32(out, static_cast<std::uint32_t>(s.size()));
    out += s;
}

struct Reader {
    const std::string& data;
    std::size_t pos = 0;
    std::string where;

    void need(std::size_t n) {
        if (pos + n > data.size()) throw IoError("'" + where + "' is truncated");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v;
        std::memcpy(&v, data.data() + pos, 4);
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v;
        std::memcpy(&v, data.data() + pos, 8);
        pos += 8;
        return v;
    }
    double f64() {
        need(8);
        double v;
        std::memcpy(&v, data.data() + pos, 8);
        pos += 8;
        return v;
    }
    std::string str() {
        const std::uint32_t n = u32();
        need(n);
        std::string s = data.substr(pos, n);
        pos += n;
        return s;
    }
    std::vector<double> f64_array(std::uint64_t n) {
        need(n * 8);
        std::vector<double> v(n);
        if (n) std::memcpy(v.data(), data.data() + pos, n * 8);
        pos += n * 8;
        return v;
    }
};

inline void write_container(const std::string& path, const char magic[4],
                            const std::vector<std::pair<std::string, std::string>>& sections) {
    std::string out;
    out.append(magic, 4);
    put_u32(out, kContainerVersion);
    put_u32(out, static_cast<std::uint32_t>(sections.size()));
    for (const auto& [name, payload] : sections) {
        put_str(out, name);
        put_u64(out, payload.size());
        out += payload;
    }
    write_text_file(path, out);
}

inline std::map<std::string, std::string> read_container(const std::string& path,
                                                         const char magic[4],
                                                         const std::string& kind) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    const std::string data = ss.str();
    if (data.size() < 12 || std::memcmp(data.data(), magic, 4) != 0) {
        throw IoError("'" + path + "' is not a " + kind + " file");
    }
    Reader r{data, 4, path};
    const std::uint32_t version = r.u32();
    if (version != kContainerVersion) {
        throw IoError("'" + path + "' has unsupported " + kind + " version " +
                      std::to_string(version));
    }
    const std::uint32_t count = r.u32();
    std::map<std::string, std::string> sections;
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string name = r.str();
        const std::uint64_t len = r.u64();
        r.need(len);
        sections[name] = data.substr(r.pos, len);
        r.pos += len;
    }
    return sections;
}

inline std::string norm_payload(const NormStats& st, bool normalized) {
    std::string p;
    put_u64(p, st.mean.size());
    for (double v : st.mean) put_f64(p, v);
    for (double v : st.stddev) put_f64(p, v);
    for (std::uint8_t v : st.shift_only) p.push_back(static_cast<char>(v));
    p.push_back(normalized ? 1 : 0);
    return p;
}

inline std::pair<NormStats, bool> parse_norm_payload(const std::string& payload,
                                                     const std::string& path) {
    Reader r{payload, 0, path};
    const std::uint64_t n = r.u64();
    NormStats st;
    st.mean = r.f64_array(n);
    st.stddev = r.f64_array(n);
    r.need(n + 1);
    st.shift_only.resize(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        st.shift_only[i] = static_cast<std::uint8_t>(payload[r.pos++]);
    }
    const bool normalized = payload[r.pos] != 0;
    return {st, normalized};
}

} // namespace detail

inline bool file_has_magic(const std::string& path, const char magic[4]) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return false;
    char buf[4];
    in.read(buf, 4);
    return in.gcount() == 4 && std::memcmp(buf, magic, 4) == 0;
}

inline bool is_dataset_cache(const std::string& path) {
    return file_has_magic(path, detail::kDatasetMagic);
}

// ---------------------------------------------------------------------------
// Model checkpoints
// ---------------------------------------------------------------------------

/// Saves config, seed, optional dataset normalization statistics, and every
/// named parameter and running-statistics buffer.
inline void save_checkpoint(TimeFormerModel& model, const std::string& path,
                            const NormStats* stats = nullptr, bool normalized = false) {
    std::string config = model_config_text(model.config());
    config += "model_seed=" + std::to_string(model.seed()) + "\n";

    std::string tensors;
    std::uint64_t count = 0;
    std::string body;
    for (auto& [name, p] : model.named_parameters()) {
        detail::put_str(body, name);
        detail::put_u32(body, static_cast<std::uint32_t>(p.ndim()));
        for (std::size_t e : p.shape()) detail::put_u64(body, e);
        for (double v : p.values()) detail::put_f64(body, v);
        ++count;
    }
    for (auto& [name, buf] : model.named_buffers()) {
        detail::put_str(body, name);
        detail::put_u32(body, 1);
        detail::put_u64(body, buf->size());
        for (double v : *buf) detail::put_f64(body, v);
        ++count;
    }
    detail::put_u64(tensors, count);
    tensors += body;

    std::vector<std::pair<std::string, std::string>> sections;
    sections.emplace_back("config", config);
    if (stats != nullptr) {
        sections.emplace_back("norm", detail::norm_payload(*stats, normalized));
    }
    sections.emplace_back("tensors", tensors);
    detail::write_container(path, detail::kCheckpointMagic, sections);
}

struct Checkpoint {
    ModelConfig config;
    std::uint64_t model_seed = 0;
    std::optional<NormStats> stats;
    bool normalized = false;
    std::vector<std::pair<std::string, std::pair<Shape, std::vector<double>>>> tensors;
};

inline Checkpoint load_checkpoint(const std::string& path) {
    auto sections = detail::read_container(path, detail::kCheckpointMagic, "model checkpoint");
    Checkpoint ck;

    auto cfg_it = sections.find("config");
    if (cfg_it == sections.end()) throw IoError("'" + path + "' has no config section");
    RunConfig rc;
    std::istringstream cfg_in(cfg_it->second);
    std::string line;
    while (std::getline(cfg_in, line)) {
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw IoError("'" + path + "' config section is malformed: '" + line + "'");
        }
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 1);
        if (key == "model_seed") {
            ck.model_seed = detail::parse_u64(key, value);
        } else if (!apply_config_kv(rc, key, value)) {
            throw IoError("'" + path + "' config section has unknown key '" + key + "'");
        }
    }
    ck.config = rc.model;

    auto norm_it = sections.find("norm");
    if (norm_it != sections.end()) {
        auto [st, normalized] = detail::parse_norm_payload(norm_it->second, path);
        ck.stats = std::move(st);
        ck.normalized = normalized;
    }

    auto ten_it = sections.find("tensors");
    if (ten_it == sections.end()) throw IoError("'" + path + "' has no tensors section");
    detail::Reader r{ten_it->second, 0, path};
    const std::uint64_t count = r.u64();
    for (std::uint64_t i = 0; i < count; ++i) {
        std::string name = r.str();
        const std::uint32_t ndim = r.u32();
        Shape shape(ndim);
        std::uint64_t numel = 1;
        for (std::uint32_t a = 0; a < ndim; ++a) {
            shape[a] = r.u64();
            numel *= shape[a];
        }
        std::vector<double> values = r.f64_array(numel);
        ck.tensors.emplace_back(std::move(name), std::make_pair(std::move(shape), std::move(values)));
    }
    return ck;
}

/// Rebuilds the model a checkpoint describes and loads its tensors. Missing
/// or mismatched tensors are errors.
inline std::unique_ptr<TimeFormerModel> restore_model(const Checkpoint& ck,
                                                      const std::string& path) {
    auto model = std::make_unique<TimeFormerModel>(ck.config, ck.model_seed);
    std::map<std::string, std::pair<Shape, std::vector<double>>> by_name(
        ck.tensors.begin(), ck.tensors.end());

    for (auto& [name, p] : model->named_parameters()) {
        auto it = by_name.find(name);
        if (it == by_name.end()) {
            throw IoError("'" + path + "' is missing tensor '" + name + "'");
        }
        if (it->second.first != p.shape()) {
            throw IoError("'" + path + "' tensor '" + name + "' has shape " +
                          shape_str(it->second.first) + ", expected " + shape_str(p.shape()));
        }
        p.values() = it->second.second;
        by_name.erase(it);
    }
    for (auto& [name, buf] : model->named_buffers()) {
        auto it = by_name.find(name);
        if (it == by_name.end()) {
            throw IoError("'" + path + "' is missing buffer '" + name + "'");
        }
        if (it->second.second.size() != buf->size()) {
            throw IoError("'" + path + "' buffer '" + name + "' has length " +
                          std::to_string(it->second.second.size()) + ", expected " +
                          std::to_string(buf->size()));
        }
        *buf = it->second.second;
        by_name.erase(it);
    }
    return model;
}

// ---------------------------------------------------------------------------
// Dataset caches
// ---------------------------------------------------------------------------

inline void save_dataset_cache(const SeriesDataset& ds, const std::string& path) {
    std::string meta;
    meta += "length=" + std::to_string(ds.length()) + "\n";
    meta += "channels=" + std::to_string(ds.channels()) + "\n";
    std::string names;
    for (std::size_t c = 0; c < ds.channels(); ++c) {
        if (c) names += ',';
        names += ds.column_names()[c];
    }
    meta += "names=" + names + "\n";
    if (ds.has_split()) {
        const SplitSizes& s = ds.split_sizes();
        meta += "split=" + std::to_string(s.train) + "," + std::to_string(s.val) + "," +
                std::to_string(s.test) + "\n";
    }

    std::string values;
    for (double v : ds.values()) detail::put_f64(values, v);

    std::vector<std::pair<std::string, std::string>> sections;
    sections.emplace_back("meta", meta);
    sections.emplace_back("values", values);
    if (ds.normalized()) {
        sections.emplace_back("norm", detail::norm_payload(ds.stats(), true));
    }
    detail::write_container(path, detail::kDatasetMagic, sections);
}

inline SeriesDataset load_dataset_cache(const std::string& path) {
    auto sections = detail::read_container(path, detail::kDatasetMagic, "dataset cache");
    auto meta_it = sections.find("meta");
    auto values_it = sections.find("values");
    if (meta_it == sections.end() || values_it == sections.end()) {
        throw IoError("'" + path + "' is missing dataset sections");
    }

    std::size_t length = 0, channels = 0;
    std::vector<std::string> names;
    std::optional<SplitSizes> split;
    std::istringstream meta_in(meta_it->second);
    std::string line;
    while (std::getline(meta_in, line)) {
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw IoError("'" + path + "' meta section is malformed: '" + line + "'");
        }
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 1);
        if (key == "length") {
            length = detail::parse_size(key, value);
        } else if (key == "channels") {
            channels = detail::parse_size(key, value);
        } else if (key == "names") {
            std::stringstream ss(value);
            std::string cell;
            while (std::getline(ss, cell, ',')) names.push_back(cell);
        } else if (key == "split") {
            SplitSizes s;
            std::stringstream ss(value);
            std::string cell;
            std::vector<std::size_t> parts;
            while (std::getline(ss, cell, ',')) parts.push_back(detail::parse_size(key, cell));
            if (parts.size() != 3) {
                throw IoError("'" + path + "' split entry needs three sizes");
            }
            s.train = parts[0];
            s.val = parts[1];
            s.test = parts[2];
            split = s;
        } else {
            throw IoError("'" + path + "' meta section has unknown key '" + key + "'");
        }
    }
    if (channels == 0) throw IoError("'" + path + "' declares zero channels");

    detail::Reader r{values_it->second, 0, path};
    std::vector<double> values = r.f64_array(length * channels);

    SeriesDataset ds = SeriesDataset::from_values(std::move(values), channels, std::move(names));
    if (split) ds.set_split(*split);
    auto norm_it = sections.find("norm");
    if (norm_it != sections.end()) {
        auto [st, normalized] = detail::parse_norm_payload(norm_it->second, path);
        ds.set_stats(std::move(st), normalized);
    }
    return ds;
}

} // namespace timeformer
