#pragma once

#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>

#include "spap/io/image.hpp"
#include "spap/metrics/quality.hpp"
#include "spap/train/gan.hpp"

namespace spap::train {

/// Generator loss terms of one CycleGAN step.
struct CycleLosses {
    Tensor adv;    // L_GAN(G, D_Y) + L_GAN(F, D_X), generator side
    Tensor cyc;    // mean|F(G(x)) − x| + mean|G(F(y)) − y|
    Tensor total;  // adv + λ·cyc
    Tensor fake_y, fake_x;
};

/// Full generator objective, built on one graph so every network gets
/// gradients from it.
inline CycleLosses cyclegan_loss(Graph& g, arch::Network& G, arch::Network& F, arch::Network& DX, arch::Network& DY,
                                 const Tensor& x, const Tensor& y, double lambda_cyc, bool training = true) {
    if (x.shape() != y.shape()) {
        throw std::invalid_argument("cyclegan: domain batches differ in shape: " + shape_str(x.shape()) + " vs " +
                                    shape_str(y.shape()));
    }
    CycleLosses l;
    l.fake_y = G.forward(g, x, training);
    l.fake_x = F.forward(g, y, training);
    const Tensor rec_x = F.forward(g, l.fake_y, training);
    const Tensor rec_y = G.forward(g, l.fake_x, training);
    l.adv = ops::add(g, g_loss(g, DY.forward(g, l.fake_y, training)), g_loss(g, DX.forward(g, l.fake_x, training)));
    l.cyc = ops::add(g, l1(g, rec_x, x), l1(g, rec_y, y));
    l.total = ops::add(g, l.adv, ops::scale(g, l.cyc, lambda_cyc));
    return l;
}

/// Learning-rate multiplier for the update with 0-based index `step`: 1 until
/// decay_start, then linear down to 0 at total_steps.
inline double lr_scale(std::size_t step, std::size_t decay_start, std::size_t total) {
    if (step < decay_start) return 1.0;
    if (step >= total) return 0.0;
    return static_cast<double>(total - step) / static_cast<double>(total - decay_start);
}

struct CycleStep {
    double loss_d = 0.0, loss_g = 0.0, loss_cyc = 0.0;
};

struct PairQuality {
    double psnr = 0.0, ssim = 0.0;
};

/// Unpaired translation between the outline (X) and filled (Y) toy domains.
/// The domains are paired by construction, so G(x) can be scored against the
/// true y.
class CycleGanTrainer {
   public:
    CycleGanTrainer(const arch::ArchSpec& g_spec, const arch::ArchSpec& f_spec, const arch::ArchSpec& dx_spec,
                    const arch::ArchSpec& dy_spec, TrainConfig cfg)
        : cfg_(std::move(cfg)),
          G_(g_spec, cfg_.seed, "G"),
          F_(f_spec, cfg_.seed, "F"),
          DX_(dx_spec, cfg_.seed, "DX"),
          DY_(dy_spec, cfg_.seed, "DY"),
          opt_g_(cfg_.lr_g, cfg_.beta1, cfg_.beta2),
          opt_f_(cfg_.lr_g, cfg_.beta1, cfg_.beta2),
          opt_dx_(cfg_.lr_d, cfg_.beta1, cfg_.beta2),
          opt_dy_(cfg_.lr_d, cfg_.beta1, cfg_.beta2) {
        cfg_.check();
        const auto img = g_spec.input;
        for (const auto* s : {&g_spec, &f_spec}) {
            if (s->input != img || s->output() != img) {
                throw std::invalid_argument("cyclegan: generator '" + s->name + "' must map " + img.str() + " to itself");
            }
        }
        for (const auto* s : {&dx_spec, &dy_spec}) {
            if (s->input != img) throw std::invalid_argument("cyclegan: discriminator '" + s->name + "' input must be " + img.str());
        }
        toy_ = toy_for(img, cfg_, derive_seed(cfg_.seed, "data"));
        eval_toy_ = toy_;
        eval_toy_.seed = derive_seed(cfg_.seed, "eval");
    }

    const TrainConfig& config() const { return cfg_; }
    arch::Network& G() { return G_; }
    arch::Network& F() { return F_; }
    arch::Network& DX() { return DX_; }
    arch::Network& DY() { return DY_; }
    std::size_t steps_done() const { return step_; }
    bool delayed_active() const { return step_ >= cfg_.spap_update_start; }
    double current_lr_scale() const { return lr_scale(step_, cfg_.effective_decay_start(), cfg_.total_steps); }

    Tensor batch(ToyDomain d, std::size_t step) const {
        return gen_toy_dataset(toy_, cfg_.batch_size, step * cfg_.batch_size, d);
    }

    CycleStep train_step() {
        const double scale = current_lr_scale();
        opt_g_.set_lr(cfg_.lr_g * scale);
        opt_f_.set_lr(cfg_.lr_g * scale);
        opt_dx_.set_lr(cfg_.lr_d * scale);
        opt_dy_.set_lr(cfg_.lr_d * scale);
        const bool delayed = delayed_active();
        const Tensor x = batch(ToyDomain::outline, step_), y = batch(ToyDomain::filled, step_);

        CycleStep out;
        Tensor fake_x, fake_y;
        {
            Graph g;
            auto l = cyclegan_loss(g, G_, F_, DX_, DY_, x, y, cfg_.lambda_cyc);
            require_finite(l.total.item(), "generator loss");
            out.loss_g = l.adv.item();
            out.loss_cyc = l.cyc.item();
            const auto pg = G_.parameters(), pf = F_.parameters();
            zero_grads(pg);
            zero_grads(pf);
            g.backward(l.total);
            opt_g_.step(pg, delayed);
            opt_f_.step(pf, delayed);
            zero_grads(pg);
            zero_grads(pf);
            zero_grads(DX_.parameters());
            zero_grads(DY_.parameters());
            fake_x = l.fake_x.clone(false);
            fake_y = l.fake_y.clone(false);
        }
        auto d_update = [&](arch::Network& D, Adam& opt, const Tensor& real, const Tensor& fake) {
            Graph g;
            const Tensor ld = d_loss(g, D.forward(g, real, true), D.forward(g, fake, true));
            require_finite(ld.item(), "discriminator loss");
            const auto p = D.parameters();
            zero_grads(p);
            g.backward(ld);
            opt.step(p, delayed);
            zero_grads(p);
            return ld.item();
        };
        out.loss_d = d_update(DY_, opt_dy_, y, fake_y) + d_update(DX_, opt_dx_, x, fake_x);
        ++step_;
        return out;
    }

    /// Mean PSNR/SSIM of G(x) against the true y over held-out pairs, in
    /// [0, 1] intensity units.
    PairQuality quality() {
        const std::size_t n = std::max<std::size_t>(cfg_.eval_pairs, 1);
        const Tensor x = gen_toy_dataset(eval_toy_, n, 0, ToyDomain::outline);
        const Tensor y = gen_toy_dataset(eval_toy_, n, 0, ToyDomain::filled);
        Graph g;
        const Tensor fy = G_.forward(g, x, false);
        PairQuality q;
        for (std::size_t i = 0; i < n; ++i) {
            const Tensor a = io::unit_image(fy, i), b = io::unit_image(y, i);
            q.psnr += metrics::psnr(a, b, 1.0);
            q.ssim += metrics::ssim(a, b, 1.0);
        }
        q.psnr /= static_cast<double>(n);
        q.ssim /= static_cast<double>(n);
        return q;
    }

    void save(const std::string& path) const {
        nn::Checkpoint ck;
        G_.save_into(ck, "G/");
        F_.save_into(ck, "F/");
        DX_.save_into(ck, "DX/");
        DY_.save_into(ck, "DY/");
        ck.put("meta.step", Tensor::scalar(static_cast<double>(step_)));
        ck.save(path);
    }

    const io::MetricsLog& run(const std::string& out_dir, const std::function<void(const io::MetricsRow&)>& on_eval = {}) {
        if (!out_dir.empty()) {
            std::filesystem::create_directories(out_dir);
            log_ = io::MetricsLog(out_dir + "/metrics.csv");
        }
        auto eval_row = [&](io::MetricsRow& r) {
            const auto q = quality();
            r.psnr = q.psnr;
            r.ssim = q.ssim;
            r.gamma = mean_gamma(G_);
            if (on_eval) on_eval(r);
        };
        if (step_ == 0) {
            io::MetricsRow r;
            eval_row(r);
            log_.append(r);
        }
        while (step_ < cfg_.total_steps) {
            CycleStep s;
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
            r.loss_cyc = s.loss_cyc;
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
    arch::Network G_, F_, DX_, DY_;
    Adam opt_g_, opt_f_, opt_dx_, opt_dy_;
    ToySpec toy_, eval_toy_;
    std::size_t step_ = 0;
    io::MetricsLog log_;
};

}  // namespace spap::train
