#pragma once

// On-disk formats: CSV tables, JSON sidecars, binary matrix blobs, content hashes.
// Binary layouts are described in docs/FORMATS.md.

#include <openssl/evp.h>

#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <thread>
#include <vector>

#include <json.hpp>

#include "relaxlab/ensemble.hpp"
#include "relaxlab/errors.hpp"
#include "relaxlab/memkernel.hpp"
#include "relaxlab/perturbation.hpp"
#include "relaxlab/targets.hpp"
#include "relaxlab/time_series.hpp"

namespace relaxlab {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

/// Shortest round-trip representation; identical bytes on every run.
inline std::string format_double(double x) {
    std::array<char, 32> buf{};
    auto [p, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), x);
    if (ec != std::errc()) throw IoError("format_double failed");
    return std::string(buf.data(), p);
}

inline double parse_double(std::string_view s) {
    double v = 0.0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) throw IoError("cannot parse number '" + std::string(s) + "'");
    return v;
}

// ---- files ----

/// Writes to a sibling temporary and renames, so readers never see partial files.
inline void write_file_atomic(const fs::path& path, std::string_view bytes) {
    std::error_code ec;
    if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
    const auto tag = std::hash<std::thread::id>{}(std::this_thread::get_id());
    fs::path tmp = path;
    tmp += ".tmp." + std::to_string(tag);
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) throw IoError("write failed: " + tmp.string());
    }
    fs::rename(tmp, path, ec);
    if (ec) throw IoError("cannot move " + tmp.string() + " into place: " + ec.message());
}

inline std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::string sha256_hex(std::string_view bytes) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md.data(), &len, EVP_sha256(), nullptr) != 1)
        throw IoError("sha256 failed");
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[md[i] >> 4]);
        out.push_back(hex[md[i] & 15]);
    }
    return out;
}

inline std::string sha256_file(const fs::path& path) { return sha256_hex(read_file(path)); }

inline void write_json(const fs::path& path, const json& j) { write_file_atomic(path, j.dump(2) + "\n"); }

inline json read_json(const fs::path& path) {
    try {
        return json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw IoError("malformed JSON in " + path.string() + ": " + e.what());
    }
}

// ---- CSV ----

inline std::vector<std::vector<std::string>> split_csv(std::string_view text, std::string_view expected_header,
                                                       const std::string& what) {
    std::vector<std::vector<std::string>> rows;
    std::size_t pos = 0;
    bool header = true;
    while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) continue;
        if (header) {
            if (line != expected_header)
                throw IoError(what + ": expected header '" + std::string(expected_header) + "', got '" + std::string(line) + "'");
            header = false;
            continue;
        }
        std::vector<std::string> cells;
        std::size_t c = 0;
        while (true) {
            const std::size_t comma = line.find(',', c);
            cells.emplace_back(line.substr(c, comma == std::string_view::npos ? std::string_view::npos : comma - c));
            if (comma == std::string_view::npos) break;
            c = comma + 1;
        }
        rows.push_back(std::move(cells));
    }
    if (header) throw IoError(what + ": empty file");
    return rows;
}

inline std::string series_csv(const TimeSeries& s) {
    std::string out = "t,value\n";
    for (std::size_t i = 0; i < s.size(); ++i) out += format_double(s.t(i)) + "," + format_double(s[i]) + "\n";
    return out;
}

inline void write_series_csv(const fs::path& path, const TimeSeries& s) { write_file_atomic(path, series_csv(s)); }

inline TimeSeries parse_series_csv(std::string_view text, const std::string& what = "series") {
    const auto rows = split_csv(text, "t,value", what);
    if (rows.size() < 2) throw IoError(what + ": fewer than two rows");
    std::vector<double> t, v;
    for (const auto& r : rows) {
        if (r.size() != 2) throw IoError(what + ": expected two columns");
        t.push_back(parse_double(r[0]));
        v.push_back(parse_double(r[1]));
    }
    const double dt = t[1] - t[0];
    TimeGrid g{dt, t.size()};
    for (std::size_t i = 0; i < t.size(); ++i)
        if (std::abs(t[i] - g.t(i)) > 1e-9 * std::max(1.0, std::abs(t[i]))) throw IoError(what + ": time column is not a uniform grid from 0");
    return TimeSeries(g, std::move(v));
}

inline TimeSeries read_series_csv(const fs::path& path) { return parse_series_csv(read_file(path), path.string()); }

inline void write_kernel_csv(const fs::path& path, const MemoryKernel& k) {
    std::string out = "tau,K\n";
    for (std::size_t i = 0; i < k.values.size(); ++i) out += format_double(k.tau(i)) + "," + format_double(k.values[i]) + "\n";
    write_file_atomic(path, out);
}

/// Kernel values only; the local coefficient lives in the sidecar.
inline MemoryKernel read_kernel_csv(const fs::path& path, double local_coefficient) {
    const auto rows = split_csv(read_file(path), "tau,K", path.string());
    if (rows.size() < 2) throw IoError(path.string() + ": fewer than two rows");
    MemoryKernel k;
    std::vector<double> tau;
    for (const auto& r : rows) {
        if (r.size() != 2) throw IoError(path.string() + ": expected two columns");
        tau.push_back(parse_double(r[0]));
        k.values.push_back(parse_double(r[1]));
    }
    k.dt = tau[1] - tau[0];
    for (std::size_t i = 0; i < tau.size(); ++i)
        if (std::abs(tau[i] - k.tau(i)) > 1e-9 * std::max(1.0, tau[i])) throw IoError(path.string() + ": lags are not (m + 1/2) dt");
    k.local_coefficient = local_coefficient;
    return k;
}

/// Generic numeric table with a fixed header.
inline std::string table_csv(const std::vector<std::string>& columns, const std::vector<std::vector<double>>& rows) {
    std::string out;
    for (std::size_t c = 0; c < columns.size(); ++c) out += (c ? "," : "") + columns[c];
    out += "\n";
    for (const auto& r : rows) {
        if (r.size() != columns.size()) throw IoError("table_csv: row width does not match header");
        for (std::size_t c = 0; c < r.size(); ++c) out += (c ? "," : "") + format_double(r[c]);
        out += "\n";
    }
    return out;
}

inline std::vector<std::vector<double>> read_table_csv(const fs::path& path, const std::vector<std::string>& columns) {
    std::string header;
    for (std::size_t c = 0; c < columns.size(); ++c) header += (c ? "," : "") + columns[c];
    std::vector<std::vector<double>> out;
    for (const auto& r : split_csv(read_file(path), header, path.string())) {
        if (r.size() != columns.size()) throw IoError(path.string() + ": wrong column count");
        std::vector<double> row;
        for (const auto& cell : r) row.push_back(parse_double(cell));
        out.push_back(std::move(row));
    }
    return out;
}

// ---- JSON descriptors ----

inline json to_json(const TargetDynamics& t) {
    json j;
    j["target"] = std::string(to_string(t.kind));
    if (t.kind != TargetKind::Tabulated) j["tau"] = t.tau;
    if (t.kind == TargetKind::Recurrence) j["recurrence_time"] = t.recurrence_time;
    if (t.kind == TargetKind::Tabulated) {
        json tab = json::array();
        for (const auto& [x, y] : t.table) tab.push_back({x, y});
        j["table"] = tab;
    }
    return j;
}

inline TargetDynamics target_from_json(const json& j, double default_tau) {
    try {
        if (j.is_string()) {
            TargetDynamics t;
            t.kind = target_kind_from_string(j.get<std::string>());
            t.tau = default_tau;
            if (t.kind == TargetKind::Recurrence) t.recurrence_time = 10.0 * default_tau;
            t.validate();
            return t;
        }
        TargetDynamics t;
        t.kind = target_kind_from_string(j.at("target").get<std::string>());
        t.tau = j.value("tau", default_tau);
        if (t.kind == TargetKind::Recurrence) t.recurrence_time = j.value("recurrence_time", j.value("T", 10.0 * t.tau));
        if (t.kind == TargetKind::Tabulated)
            for (const auto& row : j.at("table")) t.table.emplace_back(row.at(0).get<double>(), row.at(1).get<double>());
        t.validate();
        return t;
    } catch (const json::exception& e) {
        throw ValidationError(std::string("bad target description: ") + e.what());
    }
}

inline json to_json(const ModelSpec& s) {
    json j;
    j["dimension"] = s.dimension;
    j["half_width"] = s.half_width;
    j["seed"] = s.seed;
    j["target"] = to_json(s.target);
    j["diagonal_mode"] = std::string(to_string(s.diagonal));
    return j;
}

inline ModelSpec model_spec_from_json(const json& j) {
    ModelSpec s;
    s.dimension = j.at("dimension").get<std::size_t>();
    s.half_width = j.at("half_width").get<double>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.target = target_from_json(j.at("target"), 15.0);
    s.diagonal = diagonal_mode_from_string(j.value("diagonal_mode", std::string("none")));
    s.validate();
    return s;
}

inline std::string grid_key(const TimeGrid& g) { return format_double(g.dt) + "x" + std::to_string(g.n_steps); }

inline json to_json(const TimeGrid& g) { return json{{"dt", g.dt}, {"n_steps", g.n_steps}, {"t_max", g.t_max()}}; }

// ---- binary blobs ----

namespace detail {

inline constexpr char model_magic[8] = {'R', 'L', 'X', 'M', 'O', 'D', 'L', '1'};
inline constexpr char pert_magic[8] = {'R', 'L', 'X', 'P', 'E', 'R', 'T', '1'};

class BlobWriter {
public:
    void raw(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
    void u64(std::uint64_t v) { raw(&v, sizeof v); }
    void f64(double v) { raw(&v, sizeof v); }
    void f64s(const double* p, std::size_t n) { raw(p, n * sizeof(double)); }
    /// Row-major dump of a column-major matrix.
    void matrix(const Matrix& m) {
        const Matrix t = m.transpose();
        f64s(t.data(), static_cast<std::size_t>(t.size()));
    }
    const std::string& bytes() const { return buf_; }

private:
    std::string buf_;
};

class BlobReader {
public:
    BlobReader(std::string bytes, std::string what) : buf_(std::move(bytes)), what_(std::move(what)) {}
    void raw(void* p, std::size_t n) {
        if (pos_ + n > buf_.size()) throw IoError(what_ + ": truncated file");
        std::memcpy(p, buf_.data() + pos_, n);
        pos_ += n;
    }
    std::uint64_t u64() {
        std::uint64_t v;
        raw(&v, sizeof v);
        return v;
    }
    double f64() {
        double v;
        raw(&v, sizeof v);
        return v;
    }
    Matrix matrix(std::size_t n) {
        Matrix t(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
        raw(t.data(), n * n * sizeof(double));
        t.transposeInPlace();
        return t;
    }
    void expect_end() const {
        if (pos_ != buf_.size()) throw IoError(what_ + ": trailing bytes");
    }
    const std::string& what() const { return what_; }

private:
    std::string buf_;
    std::string what_;
    std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string model_blob(const TailoredModel& m) {
    detail::BlobWriter w;
    const std::size_t n = m.dimension();
    json desc = to_json(m.spec);
    desc["scale"] = m.scale;
    const std::string d = desc.dump();
    w.raw(detail::model_magic, 8);
    w.u64(n);
    w.u64(m.spec.seed);
    w.u64(d.size());
    w.raw(d.data(), d.size());
    w.f64s(m.spectrum.eigenvalues.data(), n);
    w.f64s(m.a_eigenvalues.data(), n);
    w.matrix(m.a_matrix);
    w.matrix(m.a_eigenvectors);
    return w.bytes();
}

inline void write_model(const fs::path& path, const TailoredModel& m) { write_file_atomic(path, model_blob(m)); }

inline TailoredModel read_model(const fs::path& path) {
    detail::BlobReader r(read_file(path), path.string());
    char magic[8];
    r.raw(magic, 8);
    if (std::memcmp(magic, detail::model_magic, 8) != 0) throw IoError(path.string() + ": not a model file");
    const auto n = r.u64();
    const auto seed = r.u64();
    const auto dlen = r.u64();
    if (n < 2 || n > (1u << 20) || dlen > (1u << 24)) throw IoError(path.string() + ": implausible header");
    std::string d(dlen, '\0');
    r.raw(d.data(), dlen);
    TailoredModel m;
    try {
        const json desc = json::parse(d);
        m.spec = model_spec_from_json(desc);
        m.scale = desc.at("scale").get<double>();
    } catch (const json::exception& e) {
        throw IoError(path.string() + ": bad descriptor: " + e.what());
    }
    if (m.spec.dimension != n || m.spec.seed != seed) throw IoError(path.string() + ": header and descriptor disagree");
    m.spectrum.eigenvalues.resize(n);
    r.raw(m.spectrum.eigenvalues.data(), n * sizeof(double));
    m.a_eigenvalues.resize(static_cast<Eigen::Index>(n));
    r.raw(m.a_eigenvalues.data(), n * sizeof(double));
    m.a_matrix = r.matrix(n);
    m.a_eigenvectors = r.matrix(n);
    r.expect_end();
    return m;
}

inline std::string perturbation_blob(const Perturbation& p) {
    detail::BlobWriter w;
    w.raw(detail::pert_magic, 8);
    w.u64(p.dimension());
    w.u64(p.seed);
    w.f64(p.mu);
    w.f64(p.epsilon);
    w.f64(p.sigma);
    w.matrix(p.v_matrix);
    return w.bytes();
}

inline void write_perturbation(const fs::path& path, const Perturbation& p) { write_file_atomic(path, perturbation_blob(p)); }

inline Perturbation read_perturbation(const fs::path& path) {
    detail::BlobReader r(read_file(path), path.string());
    char magic[8];
    r.raw(magic, 8);
    if (std::memcmp(magic, detail::pert_magic, 8) != 0) throw IoError(path.string() + ": not a perturbation file");
    const auto n = r.u64();
    if (n < 2 || n > (1u << 20)) throw IoError(path.string() + ": implausible header");
    Perturbation p;
    p.seed = r.u64();
    p.mu = r.f64();
    p.epsilon = r.f64();
    p.sigma = r.f64();
    p.v_matrix = r.matrix(n);
    r.expect_end();
    return p;
}

}  // namespace relaxlab
