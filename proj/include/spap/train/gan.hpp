#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>

#include "spap/arch/network.hpp"
#include "spap/io/metrics_log.hpp"
#include "spap/metrics/embedding.hpp"
#include "spap/metrics/fid.hpp"
#include "spap/train/adam.hpp"
#include "spap/train/config.hpp"
#include "spap/train/losses.hpp"
#include "spap/train/toy_data.hpp"

namespace spap::train {

/// Standard-normal (n, dim) batch from a named stream of the root seed.
inline Tensor sample_z(std::uint64_t root, const std::string& stream, std::size_t n, std::size_t dim) {
    Rng rng = make_rng(root, stream);
    std::normal_distribution<double> d(0.0, 1.0);
    Tensor z({n, dim});
    for (double& v : z.values()) v = d(rng);
    return z;
}

/// Mean of the SPAP residual gates of a network, if it has any.
inline std::optional<double> mean_gamma(const arch::Network& net) {
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& p : net.parameters()) {
        if (p.path.ends_with(".gamma")) {
            s += p.tensor.item();
            ++n;
        }
    }
    if (n == 0) return std::nullopt;
    return s / static_cast<double>(n);
}

inline void require_finite(double v, const char* what) {
    if (!std::isfinite(v)) throw std::runtime_error(std::string("training diverged: ") + what + " is not finite");
}

inline std::string checkpoint_name(std::size_t step) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "ckpt_%06zu.ckpt", step);
    return buf;
}

/// Toy data matching a network's image input.
inline ToySpec toy_for(const arch::FeatureShape& img, const TrainConfig& cfg, std::uint64_t seed) {
    if (img.flat || img.h != img.w) throw std::invalid_argument("toy data needs a square image input, got " + img.str());
    ToySpec t;
    t.image_size = img.h;
    t.channels = img.c;
    t.texture_amp = cfg.texture_amp;
    t.blobs_min = cfg.blobs_min;
    t.blobs_max = cfg.blobs_max;
    t.seed = seed;
    t.check();
    return t;
}

struct GanStep {
    double loss_d = 0.0, loss_g = 0.0;
};

/// Alternating D/G training of an unconditional GAN on toy data. Parameters
/// in the delayed group (SPAP blocks, atrous branches) stay frozen until
/// spap_update_start updates have been made.
class GanTrainer {
   public:
    GanTrainer(const arch::ArchSpec& gen, const arch::ArchSpec& disc, TrainConfig cfg)
        : cfg_(std::move(cfg)),
          G_(gen, cfg_.seed, "G"),
          D_(disc, cfg_.seed, "D"),
          opt_g_(cfg_.lr_g, cfg_.beta1, cfg_.beta2),
          opt_d_(cfg_.lr_d, cfg_.beta1, cfg_.beta2),
          embedding_(derive_seed(cfg_.seed, "embedding"), disc.input.c) {
        cfg_.check();
        const auto& zin = gen.input;
        if (zin.h != 1 || zin.w != 1) throw std::invalid_argument("generator input must be a latent vector (h = w = 1)");
        const auto out = gen.output();
        if (out.c != disc.input.c || out.h != disc.input.h || out.w != disc.input.w || out.flat) {
            throw std::invalid_argument("generator output " + out.str() + " does not match discriminator input " +
                                        disc.input.str());
        }
        if (disc.output().numel() != 1) throw std::invalid_argument("discriminator must output one logit per image");
        z_dim_ = zin.c;
        toy_ = toy_for(disc.input, cfg_, derive_seed(cfg_.seed, "data"));
    }

    const TrainConfig& config() const { return cfg_; }
    arch::Network& generator() { return G_; }
    arch::Network& discriminator() { return D_; }
    std::size_t steps_done() const { return step_; }
    bool delayed_active() const { return step_ >= cfg_.spap_update_start; }
    const ToySpec& toy() const { return toy_; }

    Tensor real_batch(std::size_t step) const {
        return gen_toy_dataset(toy_, cfg_.batch_size, step * cfg_.batch_size);
    }
    Tensor z_batch(std::size_t step) const {
        return sample_z(cfg_.seed, "z/" + std::to_string(step), cfg_.batch_size, z_dim_);
    }

    /// One discriminator update against G(z); touches only D.
    double d_step(const Tensor& real, const Tensor& z) {
        Tensor fake;
        {
            Graph g;
            fake = G_.forward(g, z, true).clone(false);
        }
        Graph g;
        const Tensor ld = d_loss(g, D_.forward(g, real, true), D_.forward(g, fake, true));
        require_finite(ld.item(), "loss_d");
        const auto params = D_.parameters();
        zero_grads(params);
        g.backward(ld);
        opt_d_.step(params, delayed_active());
        zero_grads(params);
        return ld.item();
    }

    /// One generator update; D is used but not changed.
    double g_step(const Tensor& z) {
        Graph g;
        const Tensor lg = g_loss(g, D_.forward(g, G_.forward(g, z, true), true), cfg_.minimax);
        require_finite(lg.item(), "loss_g");
        const auto params = G_.parameters();
        zero_grads(params);
        g.backward(lg);
        opt_g_.step(params, delayed_active());
        zero_grads(params);
        zero_grads(D_.parameters());
        return lg.item();
    }

    GanStep train_step() {
        GanStep s;
        s.loss_d = d_step(real_batch(step_), z_batch(step_));
        s.loss_g = g_step(z_batch(step_));
        ++step_;
        return s;
    }

    /// Generator samples in eval mode.
    Tensor sample(const Tensor& z) {
        Graph g;
        return G_.forward(g, z, false).clone(false);
    }

    /// Embedded FID of eval-mode samples from fixed latents against a fixed
    /// held-out set of toy images.
    double fid() {
        if (!real_stats_) {
            ToySpec held = toy_;
            held.seed = derive_seed(cfg_.seed, "fid-real");
            real_stats_ = metrics::gaussian_stats(embedding_.embed(gen_toy_dataset(held, cfg_.fid_samples)));
            z_fid_ = sample_z(cfg_.seed, "z-fid", cfg_.fid_samples, z_dim_);
        }
        const auto fake = metrics::gaussian_stats(embedding_.embed(sample(z_fid_)));
        return metrics::fid(*real_stats_, fake);
    }

    void save(const std::string& path) const {
        nn::Checkpoint ck;
        G_.save_into(ck, "G/");
        D_.save_into(ck, "D/");
        ck.put("meta.step", Tensor::scalar(static_cast<double>(step_)));
        ck.save(path);
    }

    /// Full schedule: metrics row per step (FID and gamma every metrics_every
    /// steps, including step 0) and checkpoints every checkpoint_every steps.
    /// An empty out_dir keeps everything in memory.
    const io::MetricsLog& run(const std::string& out_dir, const std::function<void(const io::MetricsRow&)>& on_eval = {}) {
        if (!out_dir.empty()) {
            std::filesystem::create_directories(out_dir);
            log_ = io::MetricsLog(out_dir + "/metrics.csv");
        }
        auto eval_row = [&](io::MetricsRow& r) {
            r.fid = fid();
            r.gamma = mean_gamma(G_);
            if (on_eval) on_eval(r);
        };
        if (step_ == 0) {
            io::MetricsRow r;
            eval_row(r);
            log_.append(r);
        }
        while (step_ < cfg_.total_steps) {
            GanStep s;
            try {
                s = train_step();
            } catch (const std::runtime_error&) {
                if (!out_dir.empty()) save(out_dir + "/diverged.ckpt");
                throw;
            }
            io::MetricsRow r;
            r.step = step_;
            r.loss_d = s.loss_d;
            r.loss_g = s.loss_g;
            if (step_ % cfg_.metrics_every == 0 || step_ == cfg_.total_steps) eval_row(r);
            log_.append(r);
            if (!out_dir.empty() && (step_ % cfg_.checkpoint_every == 0 || step_ == cfg_.total_steps)) {
                save(out_dir + "/" + checkpoint_name(step_));
            }
        }
        return log_;
    }

    const io::MetricsLog& log() const { return log_; }

   private:
    TrainConfig cfg_;
    arch::Network G_, D_;
    Adam opt_g_, opt_d_;
    metrics::Embedding embedding_;
    ToySpec toy_;
    std::size_t z_dim_ = 0;
    std::size_t step_ = 0;
    std::optional<metrics::GaussianStats> real_stats_;
    Tensor z_fid_;
    io::MetricsLog log_;
};

}  // namespace spap::train
