#pragma once

#include <cctype>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>

#include "nad/field.hpp"
#include "nad/signals.hpp"
#include "nad/tasks.hpp"
#include "nad/training.hpp"

namespace nad {

// ---------------------------------------------------------------------------
// Run configuration: flat ASCII "key = value" lines with dotted keys.
// '#' starts a full-line comment; blank lines are skipped. Unknown and
// duplicate keys are rejected with the offending line number.

struct ConfigEntry {
    std::string value;
    int line = 0;
};

struct ConfigMap {
    std::string source = "<config>";
    std::map<std::string, ConfigEntry> entries;

    bool has(const std::string& key) const { return entries.count(key) != 0; }

    [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
        const auto it = entries.find(key);
        const int line = it == entries.end() ? 0 : it->second.line;
        throw std::runtime_error(source + ":" + std::to_string(line) + ": " + msg);
    }
};

namespace detail {

inline bool config_key_ok(const std::string& k) {
    if (k.empty()) return false;
    for (char c : k)
        if (std::isalnum(static_cast<unsigned char>(c)) == 0 && c != '_' && c != '.') return false;
    return true;
}

inline std::string config_trim(const std::string& s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b])) != 0) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1])) != 0) --e;
    return s.substr(b, e - b);
}

} // namespace detail

inline ConfigMap parse_config_text(const std::string& text, const std::string& source) {
    ConfigMap cfg;
    cfg.source = source;
    std::istringstream in(text);
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        const std::string s = detail::config_trim(raw);
        if (s.empty() || s[0] == '#') continue;
        const size_t eq = s.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error(source + ":" + std::to_string(line) +
                                     ": expected 'key = value'");
        const std::string key = detail::config_trim(s.substr(0, eq));
        const std::string value = detail::config_trim(s.substr(eq + 1));
        if (!detail::config_key_ok(key))
            throw std::runtime_error(source + ":" + std::to_string(line) + ": bad key '" + key +
                                     "'");
        if (value.empty())
            throw std::runtime_error(source + ":" + std::to_string(line) + ": empty value for '" +
                                     key + "'");
        const auto [it, fresh] = cfg.entries.emplace(key, ConfigEntry{value, line});
        if (!fresh)
            throw std::runtime_error(source + ":" + std::to_string(line) + ": duplicate key '" +
                                     key + "' (first set at line " +
                                     std::to_string(it->second.line) + ")");
    }
    return cfg;
}

inline ConfigMap parse_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("config: cannot open " + path);
    std::ostringstream body;
    body << f.rdbuf();
    return parse_config_text(body.str(), path);
}

namespace detail {

inline std::string config_get(const ConfigMap& cfg, const std::string& key) {
    return cfg.entries.find(key)->second.value;
}

inline long config_long(const ConfigMap& cfg, const std::string& key) {
    const std::string v = config_get(cfg, key);
    char* end = nullptr;
    const long out = std::strtol(v.c_str(), &end, 10);
    if (end == v.c_str() || *end != '\0') cfg.fail(key, "expected integer for '" + key + "'");
    return out;
}

inline uint64_t config_u64(const ConfigMap& cfg, const std::string& key) {
    const std::string v = config_get(cfg, key);
    if (v[0] == '-') cfg.fail(key, "expected unsigned integer for '" + key + "'");
    char* end = nullptr;
    const unsigned long long out = std::strtoull(v.c_str(), &end, 10);
    if (end == v.c_str() || *end != '\0')
        cfg.fail(key, "expected unsigned integer for '" + key + "'");
    return out;
}

inline double config_double(const ConfigMap& cfg, const std::string& key) {
    const std::string v = config_get(cfg, key);
    char* end = nullptr;
    const double out = std::strtod(v.c_str(), &end);
    if (end == v.c_str() || *end != '\0') cfg.fail(key, "expected number for '" + key + "'");
    return out;
}

inline bool config_bool(const ConfigMap& cfg, const std::string& key) {
    const std::string v = config_get(cfg, key);
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    cfg.fail(key, "expected true/false for '" + key + "'");
}

} // namespace detail

/// Analytic signal generators plus NGRD grid files. For kind=grid the
/// dimensionality and channel count come from the file, so signal.d,
/// signal.components and signal.seed must not be set; signal.grid is
/// rejected for the generated kinds.
struct SignalSpec {
    std::string kind = "gaussian";
    int d = 1;
    int components = 5;
    uint64_t seed = 1;
    std::string grid_path;
};

inline Signal make_signal(const SignalSpec& spec) {
    if (spec.kind == "gaussian") return make_gaussian_mixture(spec.d, spec.components, spec.seed);
    if (spec.kind == "rectangle") return make_rectangle_mixture(spec.d, spec.components, spec.seed);
    if (spec.kind == "ackley") return make_ackley(spec.d);
    if (spec.kind == "grid") return load_grid_signal(read_ngrd(spec.grid_path));
    throw std::runtime_error("signal.kind must be gaussian, rectangle, ackley or grid (got '" +
                             spec.kind + "')");
}

struct RunConfig {
    SignalSpec signal;
    FieldConfig field; // d, out and pe_norm_order are derived per run
    Method method = Method::autodiff;
    TrainConfig train;
    EvalGrid eval;
    double filter_sigma = 0.1;
    int filter_samples = 100000;
    uint64_t filter_seed = 1;
};

inline RunConfig run_config_from(const ConfigMap& cfg) {
    namespace d = detail;
    RunConfig rc;
    for (const auto& [key, entry] : cfg.entries) {
        if (key == "signal.kind") rc.signal.kind = d::config_get(cfg, key);
        else if (key == "signal.d") rc.signal.d = static_cast<int>(d::config_long(cfg, key));
        else if (key == "signal.components")
            rc.signal.components = static_cast<int>(d::config_long(cfg, key));
        else if (key == "signal.seed") rc.signal.seed = d::config_u64(cfg, key);
        else if (key == "signal.grid") rc.signal.grid_path = d::config_get(cfg, key);
        else if (key == "field.width")
            rc.field.hidden_width = static_cast<int>(d::config_long(cfg, key));
        else if (key == "field.layers")
            rc.field.hidden_layers = static_cast<int>(d::config_long(cfg, key));
        else if (key == "field.pe_bands")
            rc.field.pe_bands = static_cast<int>(d::config_long(cfg, key));
        else if (key == "train.method") {
            try {
                rc.method = method_from_name(d::config_get(cfg, key));
            } catch (const std::invalid_argument& e) {
                cfg.fail(key, e.what());
            }
        } else if (key == "train.k") rc.train.k = static_cast<int>(d::config_long(cfg, key));
        else if (key == "train.iterations")
            rc.train.iterations = static_cast<int>(d::config_long(cfg, key));
        else if (key == "train.batch")
            rc.train.batch = static_cast<int>(d::config_long(cfg, key));
        else if (key == "train.lr") rc.train.lr = d::config_double(cfg, key);
        else if (key == "train.loss") {
            try {
                rc.train.loss = loss_from_name(d::config_get(cfg, key));
            } catch (const std::invalid_argument& e) {
                cfg.fail(key, e.what());
            }
        } else if (key == "train.huber_delta") rc.train.huber_delta = d::config_double(cfg, key);
        else if (key == "train.seed") rc.train.seed = d::config_u64(cfg, key);
        else if (key == "train.n_mc") rc.train.n_mc = static_cast<int>(d::config_long(cfg, key));
        else if (key == "train.n_kernel")
            rc.train.n_kernel = static_cast<int>(d::config_long(cfg, key));
        else if (key == "train.eps") rc.train.eps = d::config_double(cfg, key);
        else if (key == "train.sigma") rc.train.sigma = d::config_double(cfg, key);
        else if (key == "train.debias") rc.train.debias = d::config_bool(cfg, key);
        else if (key == "train.trace_every")
            rc.train.trace_every = static_cast<int>(d::config_long(cfg, key));
        else if (key == "train.divergence_loss")
            rc.train.divergence_loss = d::config_double(cfg, key);
        else if (key == "train.divergence_patience")
            rc.train.divergence_patience = static_cast<int>(d::config_long(cfg, key));
        else if (key == "eval.resolution")
            rc.eval.resolution = static_cast<int>(d::config_long(cfg, key));
        else if (key == "eval.margin") rc.eval.margin = d::config_double(cfg, key);
        else if (key == "filter.sigma") rc.filter_sigma = d::config_double(cfg, key);
        else if (key == "filter.samples")
            rc.filter_samples = static_cast<int>(d::config_long(cfg, key));
        else if (key == "filter.seed") rc.filter_seed = d::config_u64(cfg, key);
        else cfg.fail(key, "unknown key '" + key + "'");
    }

    if (rc.signal.kind == "grid") {
        for (const char* k : {"signal.d", "signal.components", "signal.seed"})
            if (cfg.has(k)) cfg.fail(k, std::string(k) + " is implied by the grid file");
        if (rc.signal.grid_path.empty())
            throw std::runtime_error(cfg.source + ": signal.grid is required for signal.kind=grid");
    } else if (cfg.has("signal.grid")) {
        cfg.fail("signal.grid", "signal.grid only applies to signal.kind=grid");
    }
    if (rc.filter_sigma <= 0.0)
        cfg.fail("filter.sigma", "filter.sigma must be positive");
    if (rc.filter_samples < 1)
        cfg.fail("filter.samples", "filter.samples must be >= 1");
    return rc;
}

inline RunConfig load_run_config(const std::string& path) {
    return run_config_from(parse_config_file(path));
}

} // namespace nad
