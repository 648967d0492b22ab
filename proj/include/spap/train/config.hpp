#pragma once

#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace spap::train {

/// Defaults are the full-scale schedule; desk runs override them from a
/// config file.
struct TrainConfig {
    double lr_g = 1e-4;
    double lr_d = 2e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    std::size_t batch_size = 64;
    std::size_t total_steps = 100000;
    std::size_t spap_update_start = 40000;
    double lambda_cyc = 10.0;
    std::uint64_t seed = 0;

    bool minimax = false;          // literal log(1 − D(G(z))) generator loss
    std::size_t decay_start = 0;   // CycleGAN: step where linear LR decay begins (0: half of total_steps)
    std::size_t metrics_every = 50;
    std::size_t checkpoint_every = 500;
    std::size_t fid_samples = 256;
    std::size_t eval_pairs = 16;
    double texture_amp = 0.3;
    std::size_t blobs_min = 1;
    std::size_t blobs_max = 3;
    std::string gen_arch, disc_arch;                  // GAN
    std::string g_arch, f_arch, dx_arch, dy_arch;     // CycleGAN
    std::string out_dir = "run";

    std::size_t effective_decay_start() const { return decay_start ? decay_start : total_steps / 2; }

    void check() const {
        auto bad = [](const std::string& m) { throw std::invalid_argument("config: " + m); };
        if (!(lr_g > 0.0) || !(lr_d > 0.0)) bad("lr_g and lr_d must be positive");
        if (!(beta1 > 0.0 && beta1 < beta2 && beta2 < 1.0)) bad("need 0 < beta1 < beta2 < 1");
        if (batch_size == 0) bad("batch_size must be positive");
        if (total_steps == 0) bad("total_steps must be positive");
        if (!(lambda_cyc >= 0.0)) bad("lambda_cyc must be non-negative");
        if (metrics_every == 0 || checkpoint_every == 0) bad("metrics_every and checkpoint_every must be positive");
        if (fid_samples < 2) bad("fid_samples must be >= 2");
        if (decay_start > total_steps) bad("decay_start exceeds total_steps");
    }
};

namespace detail {

struct ConfigField {
    const char* name;
    std::function<std::string(const TrainConfig&)> get;
    std::function<void(TrainConfig&, const std::string&)> set;
};

inline std::string fmt_real(double v) {
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, r.ptr);
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
    T out{};
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) throw std::invalid_argument("bad value '" + v + "' for " + key);
    return out;
}

template <typename T>
ConfigField field(const char* name, T TrainConfig::*m) {
    ConfigField f{name, {}, {}};
    if constexpr (std::is_same_v<T, double>) {
        f.get = [m](const TrainConfig& c) { return fmt_real(c.*m); };
        f.set = [m, name](TrainConfig& c, const std::string& v) { c.*m = parse_number<double>(name, v); };
    } else if constexpr (std::is_same_v<T, bool>) {
        f.get = [m](const TrainConfig& c) { return std::string(c.*m ? "true" : "false"); };
        f.set = [m, name](TrainConfig& c, const std::string& v) {
            if (v == "true" || v == "1") c.*m = true;
            else if (v == "false" || v == "0") c.*m = false;
            else throw std::invalid_argument("bad value '" + v + "' for " + name + " (expected true or false)");
        };
    } else if constexpr (std::is_same_v<T, std::string>) {
        f.get = [m](const TrainConfig& c) { return c.*m; };
        f.set = [m](TrainConfig& c, const std::string& v) { c.*m = v; };
    } else {
        f.get = [m](const TrainConfig& c) { return std::to_string(c.*m); };
        f.set = [m, name](TrainConfig& c, const std::string& v) {
            if (!v.empty() && v[0] == '-') throw std::invalid_argument("bad value '" + v + "' for " + name + " (must be non-negative)");
            c.*m = parse_number<T>(name, v);
        };
    }
    return f;
}

inline const std::vector<ConfigField>& config_fields() {
    static const std::vector<ConfigField> fields = {
        field("lr_g", &TrainConfig::lr_g),
        field("lr_d", &TrainConfig::lr_d),
        field("beta1", &TrainConfig::beta1),
        field("beta2", &TrainConfig::beta2),
        field("batch_size", &TrainConfig::batch_size),
        field("total_steps", &TrainConfig::total_steps),
        field("spap_update_start", &TrainConfig::spap_update_start),
        field("lambda_cyc", &TrainConfig::lambda_cyc),
        field("seed", &TrainConfig::seed),
        field("minimax", &TrainConfig::minimax),
        field("decay_start", &TrainConfig::decay_start),
        field("metrics_every", &TrainConfig::metrics_every),
        field("checkpoint_every", &TrainConfig::checkpoint_every),
        field("fid_samples", &TrainConfig::fid_samples),
        field("eval_pairs", &TrainConfig::eval_pairs),
        field("texture_amp", &TrainConfig::texture_amp),
        field("blobs_min", &TrainConfig::blobs_min),
        field("blobs_max", &TrainConfig::blobs_max),
        field("gen_arch", &TrainConfig::gen_arch),
        field("disc_arch", &TrainConfig::disc_arch),
        field("g_arch", &TrainConfig::g_arch),
        field("f_arch", &TrainConfig::f_arch),
        field("dx_arch", &TrainConfig::dx_arch),
        field("dy_arch", &TrainConfig::dy_arch),
        field("out_dir", &TrainConfig::out_dir),
    };
    return fields;
}

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

}  // namespace detail

/// Sets one field by name; unknown names are an error.
inline void set_config_value(TrainConfig& cfg, const std::string& key, const std::string& value) {
    for (const auto& f : detail::config_fields()) {
        if (key == f.name) {
            f.set(cfg, value);
            return;
        }
    }
    throw std::invalid_argument("unknown config key '" + key + "'");
}

/// `key = value` lines; `#` starts a comment. Later keys must not repeat.
inline TrainConfig parse_config(const std::string& text, TrainConfig cfg = {}) {
    std::istringstream in(text);
    std::string line;
    std::set<std::string> seen;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        const std::string where = "config line " + std::to_string(lineno) + ": ";
        if (eq == std::string::npos) throw std::invalid_argument(where + "expected key = value");
        const std::string key = detail::trim(line.substr(0, eq)), value = detail::trim(line.substr(eq + 1));
        if (!seen.insert(key).second) throw std::invalid_argument(where + "duplicate key '" + key + "'");
        try {
            set_config_value(cfg, key, value);
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument(where + e.what());
        }
    }
    cfg.check();
    return cfg;
}

inline TrainConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("config file not found: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config(ss.str());
}

/// Every field in declaration order, one `key = value` per line; parses back
/// to the same config.
inline std::string print_config(const TrainConfig& cfg) {
    std::string out;
    for (const auto& f : detail::config_fields()) out += std::string(f.name) + " = " + f.get(cfg) + "\n";
    return out;
}

}  // namespace spap::train
