#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "combdiff/errors.hpp"

namespace combdiff {

using json = nlohmann::json;

// Shortest round-trip decimal text for a double; locale-free.
inline std::string fmt_double(double x) {
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, res.ptr);
}

inline std::string fmt_int(std::int64_t x) {
    char buf[24];
    const auto res = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, res.ptr);
}

namespace detail {

inline std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return {};
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

inline bool valid_key(const std::string& k) {
    if (k.empty()) return false;
    for (const char c : k) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z')
                        || (c >= '0' && c <= '9') || c == '_' || c == '.'
                        || c == '-';
        if (!ok) return false;
    }
    return true;
}

} // namespace detail

// Flat key-value configuration: one "section.key = value" per line, full-line
// comments starting with '#' or ';'. Later lines override earlier ones.
class Config {
public:
    Config() = default;

    static Config from_string(const std::string& text) {
        Config cfg;
        std::istringstream in(text);
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const std::string t = detail::trim(line);
            if (t.empty() || t[0] == '#' || t[0] == ';') continue;
            const auto eq = t.find('=');
            if (eq == std::string::npos)
                throw Error("config: line " + std::to_string(lineno)
                            + ": expected key = value");
            const std::string key = detail::trim(t.substr(0, eq));
            if (!detail::valid_key(key))
                throw Error("config: line " + std::to_string(lineno)
                            + ": bad key '" + key + "'");
            cfg.kv_[key] = detail::trim(t.substr(eq + 1));
        }
        return cfg;
    }

    static Config from_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw Error("config: cannot open " + path);
        std::ostringstream buf;
        buf << in.rdbuf();
        return from_string(buf.str());
    }

    bool has(const std::string& key) const { return kv_.count(key) > 0; }

    void set(const std::string& key, const std::string& value) {
        if (!detail::valid_key(key)) throw Error("config: bad key '" + key + "'");
        kv_[key] = value;
    }

    std::string get(const std::string& key, const std::string& fallback) const {
        const auto it = kv_.find(key);
        return it == kv_.end() ? fallback : it->second;
    }

    std::string require(const std::string& key) const {
        const auto it = kv_.find(key);
        if (it == kv_.end()) throw Error("config: missing key '" + key + "'");
        return it->second;
    }

    double get_double(const std::string& key, double fallback) const {
        const auto it = kv_.find(key);
        return it == kv_.end() ? fallback : parse_double(key, it->second);
    }

    std::int64_t get_int(const std::string& key, std::int64_t fallback) const {
        const auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        std::int64_t out = 0;
        const std::string& v = it->second;
        const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
        if (res.ec != std::errc() || res.ptr != v.data() + v.size())
            throw Error("config: key '" + key + "' is not an integer: " + v);
        return out;
    }

    bool get_bool(const std::string& key, bool fallback) const {
        const auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        const std::string& v = it->second;
        if (v == "true" || v == "yes" || v == "1") return true;
        if (v == "false" || v == "no" || v == "0") return false;
        throw Error("config: key '" + key + "' is not a boolean: " + v);
    }

    // Whitespace- or comma-separated list of doubles.
    std::vector<double> get_list(const std::string& key) const {
        const auto it = kv_.find(key);
        if (it == kv_.end()) return {};
        std::string v = it->second;
        std::replace(v.begin(), v.end(), ',', ' ');
        std::istringstream in(v);
        std::vector<double> out;
        std::string tok;
        while (in >> tok) out.push_back(parse_double(key, tok));
        return out;
    }

    const std::map<std::string, std::string>& items() const { return kv_; }

    // Sorted "key = value" dump; the hash below is taken over this text.
    std::string canonical() const {
        std::string out;
        for (const auto& [k, v] : kv_) {
            out += k;
            out += " = ";
            out += v;
            out += '\n';
        }
        return out;
    }

    std::uint64_t hash() const {
        const std::string text = canonical();
        std::uint64_t h = 0xcbf29ce484222325ull;
        for (const unsigned char c : text) {
            h ^= c;
            h *= 0x100000001b3ull;
        }
        return h;
    }

private:
    static double parse_double(const std::string& key, const std::string& v) {
        const char* b = v.data();
        const char* e = v.data() + v.size();
        if (b != e && *b == '+') ++b;
        double out = 0.0;
        const auto res = std::from_chars(b, e, out);
        if (res.ec != std::errc() || res.ptr != e)
            throw Error("config: key '" + key + "' is not a number: " + v);
        return out;
    }

    std::map<std::string, std::string> kv_;
};

// RFC 4180 field quoting: quote when the field holds a comma, a quote, or a
// line break, doubling interior quotes.
inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (const char c : s) {
        out += c;
        if (c == '"') out += '"';
    }
    out += '"';
    return out;
}

class CsvWriter {
public:
    explicit CsvWriter(const std::string& path) : out_(path, std::ios::binary) {
        if (!out_) throw Error("csv: cannot open " + path);
    }

    void row(const std::vector<std::string>& fields) {
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i) out_ << ',';
            out_ << csv_field(fields[i]);
        }
        out_ << '\n';
    }

private:
    std::ofstream out_;
};

inline std::string git_describe() {
#ifdef COMBDIFF_GIT_DESCRIBE
    return COMBDIFF_GIT_DESCRIBE;
#else
    FILE* pipe = ::popen("git describe --always --dirty 2>/dev/null", "r");
    if (!pipe) return "unknown";
    std::string out;
    char buf[256];
    while (std::fgets(buf, sizeof(buf), pipe)) out += buf;
    const int rc = ::pclose(pipe);
    const std::string t = detail::trim(out);
    if (rc != 0 || t.empty()) return "unknown";
    return t;
#endif
}

struct Estimate {
    double value = 0.0;
    double se = 0.0;
};

// One experiment's result sheet: point estimates with standard errors, named
// pass/fail checks, and the seed that generated them.
struct ExperimentSummary {
    std::string experiment;
    json params = json::object();
    std::map<std::string, Estimate> estimates;
    std::map<std::string, bool> checks;
    std::uint64_t seed = 0;
    double runtime_s = 0.0;

    bool pass() const {
        for (const auto& [name, ok] : checks)
            if (!ok) return false;
        return true;
    }

    json to_json() const {
        json est = json::object();
        for (const auto& [name, e] : estimates)
            est[name] = {{"value", e.value}, {"se", e.se}};
        json chk = json::object();
        for (const auto& [name, ok] : checks) chk[name] = ok;
        return json{{"experiment", experiment}, {"params", params},
                    {"estimates", est},         {"checks", chk},
                    {"pass", pass()},           {"seed", seed},
                    {"runtime_s", runtime_s}};
    }

    std::string write(const std::string& dir) const {
        std::filesystem::create_directories(dir);
        const std::string path = dir + "/" + experiment + "_summary.json";
        std::ofstream out(path, std::ios::binary);
        if (!out) throw Error("summary: cannot open " + path);
        out << to_json().dump(2) << '\n';
        return path;
    }
};

inline void write_manifest(const std::string& dir, const std::string& command,
                           const Config& cfg, std::uint64_t seed,
                           const std::vector<std::string>& outputs) {
    std::filesystem::create_directories(dir);
    char hash_hex[17];
    std::snprintf(hash_hex, sizeof(hash_hex), "%016llx",
                  static_cast<unsigned long long>(cfg.hash()));
    const json m{{"command", command},
                 {"config_hash", std::string(hash_hex)},
                 {"git", git_describe()},
                 {"outputs", outputs},
                 {"seed", seed}};
    std::ofstream out(dir + "/manifest.json", std::ios::binary);
    if (!out) throw Error("manifest: cannot open " + dir + "/manifest.json");
    out << m.dump(2) << '\n';
}

// k-th raw moment with a jackknife standard error; for the mean this reduces
// to the usual s/sqrt(n).
inline Estimate moment_ci(const std::vector<double>& sample, int order) {
    const std::size_t n = sample.size();
    if (n < 100)
        throw InsufficientSample("moment_ci: need at least 100 samples");
    if (order < 1) throw Error("moment_ci: order must be >= 1");
    std::vector<double> pw(n);
    for (std::size_t i = 0; i < n; ++i) {
        double y = sample[i];
        for (int k = 1; k < order; ++k) y *= sample[i];
        pw[i] = y;
    }
    double s = 0.0;
    for (const double y : pw) s += y;
    const double m = s / static_cast<double>(n);
    // leave-one-out replicates collapse to sum((y_i - m)^2) / (n (n - 1))
    double dev2 = 0.0;
    for (const double y : pw) dev2 += (y - m) * (y - m);
    const double var_j = dev2 / (static_cast<double>(n) * static_cast<double>(n - 1));
    return {m, std::sqrt(var_j)};
}

// Unbiased sample variance with a jackknife standard error; input is centered
// internally so the running sums stay well conditioned.
inline Estimate variance_ci(const std::vector<double>& sample) {
    const std::size_t n = sample.size();
    if (n < 100)
        throw InsufficientSample("variance_ci: need at least 100 samples");
    const double nd = static_cast<double>(n);
    double mean = 0.0;
    for (const double x : sample) mean += x;
    mean /= nd;
    double s1 = 0.0, s2 = 0.0;
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = sample[i] - mean;
        s1 += y[i];
        s2 += y[i] * y[i];
    }
    const double v = (s2 - s1 * s1 / nd) / (nd - 1.0);
    // leave-one-out variances from the centered sums
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r1 = s1 - y[i];
        const double r2 = s2 - y[i] * y[i];
        const double vi = (r2 - r1 * r1 / (nd - 1.0)) / (nd - 2.0);
        acc += (vi - v) * (vi - v);
    }
    // jackknife deviations are taken about the full-sample value; the extra
    // O(1/n^2) bias against the replicate mean is negligible here
    const double var_j = (nd - 1.0) / nd * acc;
    return {v, std::sqrt(var_j)};
}

} // namespace combdiff
