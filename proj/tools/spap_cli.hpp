#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "spap/arch/analysis.hpp"
#include "spap/arch/network.hpp"
#include "spap/arch/spec.hpp"
#include "spap/io/image.hpp"
#include "spap/io/metrics_log.hpp"
#include "spap/metrics/embedding.hpp"
#include "spap/metrics/fid.hpp"
#include "spap/metrics/quality.hpp"
#include "spap/train/config.hpp"
#include "spap/train/cyclegan.hpp"
#include "spap/train/gan.hpp"

namespace spap::cli {

using Json = nlohmann::ordered_json;
using Header = std::vector<std::pair<std::string, std::string>>;

/// Bad flags or unusable inputs: exit code 1.
class UsageError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

inline constexpr int kOk = 0, kUsage = 1, kRuntime = 2;

namespace detail {

inline void print_header(std::ostream& out, const Header& h) {
    for (const auto& [k, v] : h) out << "# " << k << " = " << v << "\n";
    out.flush();
}

inline Json header_json(const Header& h) {
    Json j = Json::object();
    for (const auto& [k, v] : h) j[k] = v;
    return j;
}

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << text;
    if (!f) throw std::runtime_error("write failed for " + path);
}

/// Report to --output when given, otherwise to stdout after the header.
inline void emit(std::ostream& out, const std::string& output, const std::string& text) {
    if (output.empty()) {
        out << text;
    } else {
        write_text(output, text);
        out << "wrote " << output << "\n";
    }
}

/// Relative arch paths in a config resolve against the config's directory
/// first, then the working directory.
inline std::string resolve_path(const std::string& p, const std::filesystem::path& base) {
    if (p.empty()) return p;
    const std::filesystem::path path(p);
    if (path.is_absolute()) return p;
    const auto near = base / path;
    if (std::filesystem::exists(near)) return near.lexically_normal().string();
    return p;
}

inline std::string need_arch(const std::string& key, const std::string& path) {
    if (path.empty()) throw UsageError("config: " + key + " is not set");
    if (!std::filesystem::is_regular_file(path)) throw UsageError("config: " + key + " file not found: " + path);
    return path;
}

/// Loads the config, applies --set overrides and the dedicated flags.
inline train::TrainConfig resolve_config(const std::string& path, const std::vector<std::string>& sets,
                                         std::optional<std::uint64_t> seed, std::optional<std::size_t> steps,
                                         const std::string& out_dir) {
    auto cfg = train::load_config(path);
    for (const auto& s : sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw UsageError("--set expects KEY=VALUE, got '" + s + "'");
        train::set_config_value(cfg, train::detail::trim(s.substr(0, eq)), train::detail::trim(s.substr(eq + 1)));
    }
    if (seed) cfg.seed = *seed;
    if (steps) cfg.total_steps = *steps;
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    const auto base = std::filesystem::path(path).parent_path();
    for (auto* p : {&cfg.gen_arch, &cfg.disc_arch, &cfg.g_arch, &cfg.f_arch, &cfg.dx_arch, &cfg.dy_arch}) {
        *p = resolve_path(*p, base);
    }
    cfg.check();
    return cfg;
}

inline Header config_header(const std::string& command, const train::TrainConfig& cfg) {
    Header h{{"command", command}};
    for (const auto& f : train::detail::config_fields()) h.emplace_back(f.name, f.get(cfg));
    return h;
}

inline Json opt_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

inline Json shape_json(const arch::FeatureShape& s) {
    if (s.flat) return Json::array({s.c});
    return Json::array({s.c, s.h, s.w});
}

inline std::string num(double v) { return io::format_real(v); }

/// Images of a directory as one (N, C, H, W) batch in [−1, 1].
inline std::pair<Tensor, std::vector<std::string>> load_batch(const std::string& dir) {
    const auto files = io::list_images(dir);
    if (files.empty()) throw UsageError("no .pgm/.ppm images in " + dir);
    std::vector<Tensor> imgs;
    for (const auto& f : files) {
        Tensor t = io::read_pnm(f);
        if (t.rank() == 2) t = Tensor({1, t.dim(0), t.dim(1)}, std::vector<double>(t.values().begin(), t.values().end()));
        if (!imgs.empty() && t.shape() != imgs.front().shape()) {
            throw UsageError("image " + f + " is " + shape_str(t.shape()) + ", expected " + shape_str(imgs.front().shape()));
        }
        imgs.push_back(t);
    }
    const auto& s = imgs.front().shape();
    const std::size_t n = imgs.front().numel();
    Tensor batch({files.size(), s[0], s[1], s[2]});
    for (std::size_t i = 0; i < imgs.size(); ++i)
        for (std::size_t k = 0; k < n; ++k) batch.values()[i * n + k] = 2.0 * imgs[i].values()[k] - 1.0;
    std::vector<std::string> names;
    for (const auto& f : files) names.push_back(std::filesystem::path(f).filename().string());
    return {batch, names};
}

/// Checkpoint key prefix under which `net`'s parameters are stored.
inline std::string detect_prefix(const nn::Checkpoint& ck, const arch::Network& net) {
    const auto params = net.parameters();
    if (params.empty()) return "";
    for (const char* p : {"", "G/", "F/", "D/", "DX/", "DY/"}) {
        if (ck.contains(p + params.front().path)) return p;
    }
    throw std::runtime_error("checkpoint does not match architecture: no entry for '" + params.front().path + "'");
}

}  // namespace detail

struct Options {
    // train, train-cyclegan
    std::string config, out;
    std::vector<std::string> sets;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> steps;
    // analyze
    std::string arch;
    bool rf = false, params = false, shapes = false, json = false;
    std::string output;
    // metrics
    std::string dir_a, dir_b;
    // dump-attention
    std::string checkpoint, images, prefix;
    bool has_prefix = false;
    std::size_t samples = 4;
};

inline int cmd_train(const Options& o, std::ostream& out, std::ostream& err) {
    train::TrainConfig cfg;
    arch::ArchSpec gen, disc;
    try {
        cfg = detail::resolve_config(o.config, o.sets, o.seed, o.steps, o.out);
        gen = arch::load_arch(detail::need_arch("gen_arch", cfg.gen_arch));
        disc = arch::load_arch(detail::need_arch("disc_arch", cfg.disc_arch));
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    }
    detail::print_header(out, detail::config_header("train", cfg));
    try {
        train::GanTrainer t(gen, disc, cfg);
        const auto& log = t.run(cfg.out_dir, [&](const io::MetricsRow& r) {
            out << "step " << r.step << " fid " << detail::num(*r.fid);
            if (r.gamma) out << " gamma " << detail::num(*r.gamma);
            out << std::endl;
        });
        std::optional<double> first, last;
        for (const auto& r : log.rows()) {
            if (!r.fid) continue;
            if (!first) first = r.fid;
            last = r.fid;
        }
        Json j;
        j["config"] = detail::header_json(detail::config_header("train", cfg));
        j["steps"] = t.steps_done();
        j["fid_initial"] = detail::opt_json(first);
        j["fid_final"] = detail::opt_json(last);
        j["fid_relative_change"] = first && last && *first > 0.0 ? Json((*last - *first) / *first) : Json(nullptr);
        j["gamma_final"] = detail::opt_json(train::mean_gamma(t.generator()));
        detail::write_text(cfg.out_dir + "/config.cfg", train::print_config(cfg));
        detail::write_text(cfg.out_dir + "/summary.json", j.dump(2) + "\n");
        out << "wrote " << cfg.out_dir << "/metrics.csv and summary.json\n";
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kRuntime;
    }
    return kOk;
}

inline int cmd_train_cyclegan(const Options& o, std::ostream& out, std::ostream& err) {
    train::TrainConfig cfg;
    arch::ArchSpec g, f, dx, dy;
    try {
        cfg = detail::resolve_config(o.config, o.sets, o.seed, o.steps, o.out);
        g = arch::load_arch(detail::need_arch("g_arch", cfg.g_arch));
        f = arch::load_arch(detail::need_arch("f_arch", cfg.f_arch));
        dx = arch::load_arch(detail::need_arch("dx_arch", cfg.dx_arch));
        dy = arch::load_arch(detail::need_arch("dy_arch", cfg.dy_arch));
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    }
    detail::print_header(out, detail::config_header("train-cyclegan", cfg));
    try {
        train::CycleGanTrainer t(g, f, dx, dy, cfg);
        const auto& log = t.run(cfg.out_dir, [&](const io::MetricsRow& r) {
            out << "step " << r.step << " psnr " << detail::num(*r.psnr) << " ssim " << detail::num(*r.ssim);
            if (r.loss_cyc) out << " loss_cyc " << detail::num(*r.loss_cyc);
            out << std::endl;
        });
        const io::MetricsRow* first = nullptr;
        const io::MetricsRow* last = nullptr;
        for (const auto& r : log.rows()) {
            if (!r.psnr) continue;
            if (!first) first = &r;
            last = &r;
        }
        Json j;
        j["config"] = detail::header_json(detail::config_header("train-cyclegan", cfg));
        j["steps"] = t.steps_done();
        j["psnr_initial"] = first ? detail::opt_json(first->psnr) : Json(nullptr);
        j["psnr_final"] = last ? detail::opt_json(last->psnr) : Json(nullptr);
        j["ssim_initial"] = first ? detail::opt_json(first->ssim) : Json(nullptr);
        j["ssim_final"] = last ? detail::opt_json(last->ssim) : Json(nullptr);
        j["loss_cyc_final"] = log.rows().empty() ? Json(nullptr) : detail::opt_json(log.rows().back().loss_cyc);
        j["gamma_final"] = detail::opt_json(train::mean_gamma(t.G()));
        detail::write_text(cfg.out_dir + "/config.cfg", train::print_config(cfg));
        detail::write_text(cfg.out_dir + "/summary.json", j.dump(2) + "\n");
        out << "wrote " << cfg.out_dir << "/metrics.csv and summary.json\n";
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kRuntime;
    }
    return kOk;
}

inline int cmd_analyze(const Options& o, std::ostream& out, std::ostream& err) {
    const bool all = !o.rf && !o.params && !o.shapes;
    const bool want_rf = all || o.rf, want_params = all || o.params, want_shapes = all || o.shapes;
    const Header h{{"command", "analyze"}, {"arch", o.arch}, {"rf", want_rf ? "true" : "false"},
                   {"params", want_params ? "true" : "false"}, {"shapes", want_shapes ? "true" : "false"},
                   {"seed", std::to_string(o.seed.value_or(0))}};
    arch::ArchSpec spec;
    try {
        spec = arch::load_arch(o.arch);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    }
    if (!o.json) detail::print_header(out, h);
    try {
        // Generators (deconv stacks) have no receptive field; skip it unless asked for.
        const bool has_deconv = std::any_of(spec.layers.begin(), spec.layers.end(),
                                            [](const auto& l) { return l.kind == arch::LayerKind::deconv; });
        std::optional<arch::RfReport> rf;
        if (o.rf || (all && !has_deconv)) rf = arch::receptive_field(spec);
        std::optional<arch::ParamReport> pc;
        if (want_params) pc = arch::param_count(spec);

        if (o.json) {
            Json j;
            j["config"] = detail::header_json(h);
            j["name"] = spec.name;
            j["input"] = detail::shape_json(spec.input);
            j["output"] = detail::shape_json(spec.output());
            Json layers = Json::array();
            for (std::size_t i = 0; i < spec.layers.size(); ++i) {
                Json l;
                l["label"] = spec.layers[i].label;
                l["kind"] = arch::to_string(spec.layers[i].kind);
                if (want_shapes) l["shape"] = detail::shape_json(spec.shapes[i]);
                if (rf) {
                    l["rf"] = i < rf->rows.size() ? Json(rf->rows[i].rf) : Json(nullptr);
                    l["jump"] = i < rf->rows.size() ? Json(rf->rows[i].jump) : Json(nullptr);
                }
                if (pc) l["params"] = pc->rows[i].count;
                layers.push_back(l);
            }
            j["layers"] = layers;
            if (rf) {
                j["final_rf"] = rf->final_rf;
                j["final_jump"] = rf->final_jump;
                j["rf_stopped_at"] = rf->stopped_at.empty() ? Json(nullptr) : Json(rf->stopped_at);
            }
            if (pc) j["total_params"] = pc->total;
            detail::emit(out, o.output, j.dump(2) + "\n");
            return kOk;
        }

        std::ostringstream t;
        t << std::left << std::setw(14) << "layer" << std::setw(13) << "kind";
        if (want_shapes) t << std::setw(18) << "output";
        if (rf) t << std::right << std::setw(8) << "rf" << std::setw(8) << "jump";
        if (pc) t << std::right << std::setw(14) << "params";
        t << "\n";
        for (std::size_t i = 0; i < spec.layers.size(); ++i) {
            if (rf && !pc && !want_shapes && i >= rf->rows.size()) break;
            t << std::left << std::setw(14) << spec.layers[i].label << std::setw(13) << arch::to_string(spec.layers[i].kind);
            if (want_shapes) t << std::setw(18) << spec.shapes[i].str();
            if (rf) {
                t << std::right;
                if (i < rf->rows.size()) {
                    t << std::setw(8) << rf->rows[i].rf << std::setw(8) << rf->rows[i].jump;
                } else {
                    t << std::setw(8) << "-" << std::setw(8) << "-";
                }
            }
            if (pc) t << std::right << std::setw(14) << pc->rows[i].count;
            t << "\n";
        }
        if (want_rf && !rf) t << "receptive field: n/a (deconv layers)\n";
        if (pc) t << "total parameters: " << pc->total << "\n";
        if (rf) t << "final receptive field: " << rf->final_rf << "\n";
        detail::emit(out, o.output, t.str());
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kRuntime;
    }
    return kOk;
}

inline int cmd_metrics_fid(const Options& o, std::ostream& out, std::ostream& err) {
    const std::uint64_t seed = o.seed.value_or(0);
    const Header h{{"command", "metrics fid"}, {"a", o.dir_a}, {"b", o.dir_b}, {"seed", std::to_string(seed)}};
    std::pair<Tensor, std::vector<std::string>> a, b;
    try {
        a = detail::load_batch(o.dir_a);
        b = detail::load_batch(o.dir_b);
        const auto &sa = a.first.shape(), &sb = b.first.shape();
        if (sa[1] != sb[1] || sa[2] != sb[2] || sa[3] != sb[3]) {
            throw UsageError("image shapes differ between directories");
        }
        if (sa[0] < 2 || sb[0] < 2) throw UsageError("fid needs at least 2 images per directory");
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    }
    if (!o.json) detail::print_header(out, h);
    try {
        const metrics::Embedding emb(derive_seed(seed, "embedding"), a.first.dim(1));
        const double d = metrics::fid(metrics::gaussian_stats(emb.embed(a.first)), metrics::gaussian_stats(emb.embed(b.first)));
        if (o.json) {
            Json j;
            j["config"] = detail::header_json(h);
            j["n_a"] = a.second.size();
            j["n_b"] = b.second.size();
            j["embedding_dim"] = emb.dim();
            j["fid"] = d;
            detail::emit(out, o.output, j.dump(2) + "\n");
        } else {
            detail::emit(out, o.output,
                         "n_a,n_b,fid\n" + std::to_string(a.second.size()) + "," + std::to_string(b.second.size()) + "," +
                             detail::num(d) + "\n");
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kRuntime;
    }
    return kOk;
}

inline int cmd_metrics_psnr_ssim(const Options& o, std::ostream& out, std::ostream& err) {
    const Header h{{"command", "metrics psnr-ssim"}, {"a", o.dir_a}, {"b", o.dir_b},
                   {"seed", std::to_string(o.seed.value_or(0))}};
    std::pair<Tensor, std::vector<std::string>> a, b;
    try {
        a = detail::load_batch(o.dir_a);
        b = detail::load_batch(o.dir_b);
        if (a.second.size() != b.second.size()) {
            throw UsageError("directories hold " + std::to_string(a.second.size()) + " and " +
                             std::to_string(b.second.size()) + " images; pairs are matched in sorted order");
        }
        if (a.first.shape() != b.first.shape()) throw UsageError("image shapes differ between directories");
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    }
    if (!o.json) detail::print_header(out, h);
    try {
        const std::size_t n = a.second.size();
        std::vector<double> ps(n), ss(n);
        double mp = 0.0, ms = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const Tensor x = io::unit_image(a.first, i), y = io::unit_image(b.first, i);
            ps[i] = metrics::psnr(x, y, 1.0);
            ss[i] = metrics::ssim(x, y, 1.0);
            mp += ps[i];
            ms += ss[i];
        }
        mp /= static_cast<double>(n);
        ms /= static_cast<double>(n);
        if (o.json) {
            Json j;
            j["config"] = detail::header_json(h);
            Json pairs = Json::array();
            for (std::size_t i = 0; i < n; ++i) {
                Json p;
                p["a"] = a.second[i];
                p["b"] = b.second[i];
                p["psnr"] = std::isfinite(ps[i]) ? Json(ps[i]) : Json(nullptr);
                p["ssim"] = ss[i];
                pairs.push_back(p);
            }
            j["pairs"] = pairs;
            j["mean_psnr"] = std::isfinite(mp) ? Json(mp) : Json(nullptr);
            j["mean_ssim"] = ms;
            detail::emit(out, o.output, j.dump(2) + "\n");
        } else {
            std::string t = "a,b,psnr,ssim\n";
            for (std::size_t i = 0; i < n; ++i) {
                t += a.second[i] + "," + b.second[i] + "," + detail::num(ps[i]) + "," + detail::num(ss[i]) + "\n";
            }
            t += "mean,mean," + detail::num(mp) + "," + detail::num(ms) + "\n";
            detail::emit(out, o.output, t);
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kRuntime;
    }
    return kOk;
}

inline std::string sample_name(std::size_t i) {
    std::ostringstream s;
    s << "sample" << std::setw(3) << std::setfill('0') << i;
    return s.str();
}

inline int cmd_dump_attention(const Options& o, std::ostream& out, std::ostream& err) {
    const std::uint64_t seed = o.seed.value_or(0);
    arch::ArchSpec spec;
    Tensor input;
    try {
        spec = arch::load_arch(o.arch);
        if (o.images.empty()) {
            if (spec.input.h != 1 || spec.input.w != 1) {
                throw UsageError("arch '" + spec.name + "' takes images; pass --images DIR");
            }
            if (o.samples == 0) throw UsageError("--samples must be positive");
            input = train::sample_z(seed, "z", o.samples, spec.input.c);
        } else {
            input = detail::load_batch(o.images).first;
            const arch::FeatureShape s{input.dim(1), input.dim(2), input.dim(3)};
            if (s != spec.input) {
                throw UsageError("images are " + s.str() + " but arch '" + spec.name + "' expects " + spec.input.str());
            }
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    }
    const std::size_t n = input.dim(0);
    Header h{{"command", "dump-attention"}, {"checkpoint", o.checkpoint}, {"arch", o.arch}, {"out", o.out}};
    if (o.images.empty()) {
        h.emplace_back("samples", std::to_string(n));
    } else {
        h.emplace_back("images", o.images);
    }
    h.emplace_back("seed", std::to_string(seed));
    try {
        arch::Network net(spec, seed, "G");
        const auto ck = nn::Checkpoint::load(o.checkpoint);
        const std::string prefix = o.has_prefix ? o.prefix : detail::detect_prefix(ck, net);
        h.emplace_back("prefix", prefix);
        detail::print_header(out, h);
        net.load_from(ck, prefix);

        arch::ForwardTrace trace;
        Graph g;
        const Tensor y = net.forward(g, input, false, &trace);
        if (trace.spap.empty()) throw std::runtime_error("arch '" + spec.name + "' has no spap layer");
        const auto oshape = spec.output();
        if (oshape.flat || (oshape.c != 1 && oshape.c != 3)) {
            throw std::runtime_error("output " + oshape.str() + " is not an image");
        }

        std::filesystem::create_directories(o.out);
        Json files = Json::array();
        for (std::size_t i = 0; i < n; ++i) {
            const std::string stem = sample_name(i);
            for (const auto& [layer, tr] : trace.spap) {
                for (const auto& f : tr.fusions) {
                    const std::size_t hh = f.alpha.dim(2), ww = f.alpha.dim(3);
                    Tensor map({hh, ww});
                    std::copy_n(f.alpha.values().begin() + static_cast<std::ptrdiff_t>(i * hh * ww), hh * ww,
                                map.values().begin());
                    const std::string name = stem + "_" + layer + "_fusion" + std::to_string(f.step) + "_" + f.incoming + ".pgm";
                    io::write_pnm(o.out + "/" + name, map);
                    Json e;
                    e["file"] = name;
                    e["sample"] = i;
                    e["layer"] = layer;
                    e["fusion"] = f.step;
                    e["accumulated"] = f.accumulated;
                    e["incoming"] = f.incoming;
                    files.push_back(e);
                }
            }
            const std::string name = stem + (oshape.c == 3 ? "_output.ppm" : "_output.pgm");
            io::write_pnm(o.out + "/" + name, io::unit_image(y, i));
            Json e;
            e["file"] = name;
            e["sample"] = i;
            e["layer"] = "output";
            files.push_back(e);
        }
        Json j;
        j["config"] = detail::header_json(h);
        j["files"] = files;
        detail::write_text(o.out + "/manifest.json", j.dump(2) + "\n");
        out << "wrote " << files.size() << " images and manifest.json to " << o.out << "\n";
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kRuntime;
    }
    return kOk;
}

/// Parses `args` (without the program name) and runs one subcommand.
inline int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Spatial pyramid attentive pooling GAN toolkit", "spap"};
    app.require_subcommand(1);
    Options o;

    auto add_seed = [&](CLI::App* c, const char* what) { c->add_option("--seed", o.seed, what); };
    auto add_train = [&](CLI::App* c) {
        c->add_option("--config", o.config, "key = value config file")->required()->check(CLI::ExistingFile);
        c->add_option("--set", o.sets, "override one config key (KEY=VALUE, repeatable)");
        add_seed(c, "root seed (overrides the config)");
        c->add_option("--steps", o.steps, "total_steps override");
        c->add_option("--out", o.out, "output directory (overrides out_dir)");
    };
    auto* train = app.add_subcommand("train", "train a GAN on toy data; writes metrics.csv, checkpoints, summary.json");
    add_train(train);
    auto* cyc = app.add_subcommand("train-cyclegan", "train a CycleGAN on unpaired toy domains (outline to filled)");
    add_train(cyc);

    auto* an = app.add_subcommand("analyze", "layer table with receptive field, parameter counts and shapes");
    an->add_option("--arch", o.arch, "architecture file")->required()->check(CLI::ExistingFile);
    an->add_flag("--rf", o.rf, "receptive field per layer");
    an->add_flag("--params", o.params, "learnable parameters per layer");
    an->add_flag("--shapes", o.shapes, "output shape per layer");
    an->add_flag("--json", o.json, "JSON report instead of a table");
    an->add_option("--output", o.output, "write the report to a file");
    add_seed(an, "recorded in the header; analysis is deterministic");

    auto* met = app.add_subcommand("metrics", "image-set metrics over .pgm/.ppm directories");
    met->require_subcommand(1);
    auto add_dirs = [&](CLI::App* c) {
        c->add_option("--a", o.dir_a, "first image directory")->required()->check(CLI::ExistingDirectory);
        c->add_option("--b", o.dir_b, "second image directory")->required()->check(CLI::ExistingDirectory);
        c->add_flag("--json", o.json, "JSON report instead of CSV");
        c->add_option("--output", o.output, "write the report to a file");
    };
    auto* fid = met->add_subcommand("fid", "embedded Frechet distance between the two sets");
    add_dirs(fid);
    add_seed(fid, "embedding seed");
    auto* ps = met->add_subcommand("psnr-ssim", "PSNR and SSIM of pairs matched in sorted file order");
    add_dirs(ps);
    add_seed(ps, "recorded in the header; the metrics are deterministic");

    auto* da = app.add_subcommand("dump-attention", "write SPAP attention maps and outputs as PGM/PPM");
    da->add_option("--checkpoint", o.checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);
    da->add_option("--arch", o.arch, "generator architecture file")->required()->check(CLI::ExistingFile);
    da->add_option("--out", o.out, "output directory")->required();
    auto* img = da->add_option("--images", o.images, "input image directory (image-to-image generators)")
                    ->check(CLI::ExistingDirectory);
    da->add_option("--samples", o.samples, "latent samples drawn from --seed (default 4)")->excludes(img);
    add_seed(da, "latent seed");
    da->add_option("--prefix", o.prefix, "checkpoint key prefix (default: detected)");

    std::vector<std::string> rev(args.rbegin(), args.rend());
    try {
        app.parse(rev);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kUsage;
    }
    o.has_prefix = da->count("--prefix") > 0;

    if (train->parsed()) return cmd_train(o, out, err);
    if (cyc->parsed()) return cmd_train_cyclegan(o, out, err);
    if (an->parsed()) return cmd_analyze(o, out, err);
    if (fid->parsed()) return cmd_metrics_fid(o, out, err);
    if (ps->parsed()) return cmd_metrics_psnr_ssim(o, out, err);
    if (da->parsed()) return cmd_dump_attention(o, out, err);
    return kUsage;
}

}  // namespace spap::cli
