#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "spap/arch/spec.hpp"
#include "spap/grad_check.hpp"
#include "spap/train/adam.hpp"
#include "spap/train/config.hpp"
#include "spap/train/cyclegan.hpp"
#include "spap/train/gan.hpp"
#include "spap/train/losses.hpp"
#include "spap/train/toy_data.hpp"

using namespace spap;
using namespace spap::train;

namespace {

// Miniature 16x16 GAN: the generator carries a SPAP block, the discriminator
// an atrous layer, both spectrally normalized.
const char* kGen =
    "input c=8 h=1 w=1 name=mini_gen spectral=on\n"
    "linear out=128\n"
    "reshape c=8 h=4 w=4\n"
    "norm kind=batch\n"
    "activation kind=relu\n"
    "deconv k=4 s=2 p=1 c=8 norm=batch act=relu\n"
    "deconv k=4 s=2 p=1 c=8 norm=batch act=relu\n"
    "spap rates=2,3 order=coarse_to_fine\n"
    "conv k=3 s=1 p=1 c=3 act=tanh\n";

const char* kGenVanilla =
    "input c=8 h=1 w=1 name=mini_gen spectral=on\n"
    "linear out=128\n"
    "reshape c=8 h=4 w=4\n"
    "norm kind=batch\n"
    "activation kind=relu\n"
    "deconv k=4 s=2 p=1 c=8 norm=batch act=relu\n"
    "deconv k=4 s=2 p=1 c=8 norm=batch act=relu\n"
    "conv k=3 s=1 p=1 c=3 act=tanh\n";

const char* kDisc =
    "input c=3 h=16 w=16 name=mini_disc spectral=on\n"
    "conv k=4 s=2 p=1 c=8 act=lrelu:0.1\n"
    "atrous_disc k=3 s=1 p=1 c=8 rates=2,3 act=lrelu:0.1\n"
    "conv k=4 s=2 p=1 c=16 act=lrelu:0.1\n"
    "linear out=1\n";

TrainConfig mini_config() {
    TrainConfig c;
    c.batch_size = 4;
    c.total_steps = 6;
    c.spap_update_start = 3;
    c.lr_g = 1e-3;
    c.lr_d = 1e-3;
    c.metrics_every = 2;
    c.checkpoint_every = 3;
    c.fid_samples = 24;
    c.seed = 17;
    return c;
}

std::map<std::string, std::vector<double>> snapshot(const arch::Network& net, bool delayed_only = false) {
    std::map<std::string, std::vector<double>> out;
    for (const auto& p : net.parameters()) {
        if (delayed_only && p.group != nn::ParamGroup::delayed) continue;
        out[p.path] = {p.tensor.values().begin(), p.tensor.values().end()};
    }
    return out;
}

std::vector<double> vals(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

std::string read_file(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), {}};
}

Tensor scalar_param(double v) { return Tensor::scalar(v, true); }

}  // namespace

// ---- losses ------------------------------------------------------------

TEST(GanLoss, ClosedForms) {
    Graph g;
    const Tensor zero({4}), big = Tensor::filled({4}, 800.0), neg = Tensor::filled({4}, -800.0);
    auto l = gan_losses(g, zero, zero);
    EXPECT_NEAR(l.loss_d.item(), 2.0 * std::log(2.0), 1e-15);
    EXPECT_NEAR(l.loss_g.item(), std::log(2.0), 1e-15);
    EXPECT_NEAR(d_loss(g, big, neg).item(), 0.0, 1e-300);
    EXPECT_TRUE(std::isfinite(d_loss(g, neg, big).item()));
    EXPECT_NEAR(d_loss(g, neg, big).item(), 1600.0, 1e-9);
    EXPECT_NEAR(g_loss(g, zero, true).item(), -std::log(2.0), 1e-15);
}

TEST(GanLoss, StableMatchesNaive) {
    std::mt19937_64 rng(1);
    const Tensor r = oracle::random_tensor({64}, rng, -8.0, 8.0), f = oracle::random_tensor({64}, rng, -8.0, 8.0);
    Graph g;
    const auto l = gan_losses(g, r, f);
    const double minimax = g_loss(g, f, true).item();
    auto sig = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
    double nd = 0, ng = 0, nm = 0;
    for (std::size_t i = 0; i < 64; ++i) {
        nd += -std::log(sig(r.values()[i])) - std::log(1.0 - sig(f.values()[i]));
        ng += -std::log(sig(f.values()[i]));
        nm += std::log(1.0 - sig(f.values()[i]));
    }
    EXPECT_NEAR(l.loss_d.item(), nd / 64, 1e-10);
    EXPECT_NEAR(l.loss_g.item(), ng / 64, 1e-10);
    EXPECT_NEAR(minimax, nm / 64, 1e-10);
}

TEST(GanLoss, GradChecks) {
    std::mt19937_64 rng(2);
    const Tensor r = oracle::random_tensor({2, 1, 8, 8}, rng, -3, 3), f = oracle::random_tensor({2, 1, 8, 8}, rng, -3, 3);
    EXPECT_LT(grad_check([&](Graph& g, const Tensor& x) { return d_loss(g, x, f); }, r, 1e-5), 1e-4);
    EXPECT_LT(grad_check([&](Graph& g, const Tensor& x) { return d_loss(g, r, x); }, f, 1e-5), 1e-4);
    EXPECT_LT(grad_check([&](Graph& g, const Tensor& x) { return g_loss(g, x); }, f, 1e-5), 1e-4);
    EXPECT_LT(grad_check([&](Graph& g, const Tensor& x) { return g_loss(g, x, true); }, f, 1e-5), 1e-4);
    EXPECT_LT(grad_check([&](Graph& g, const Tensor& x) { return l1(g, x, f); }, r, 1e-5), 1e-4);
}

namespace {

/// 1×1 conv on 3 channels set to the identity plus a bias.
arch::Network affine_net(double bias) {
    arch::Network net(arch::parse_arch("input c=3 h=12 w=12 name=affine\nconv k=1 s=1 p=0 c=3\n"), 1);
    for (auto& p : net.parameters()) {
        Tensor t = p.tensor;
        if (p.path.ends_with("weight")) {
            for (std::size_t i = 0; i < t.numel(); ++i) t.values()[i] = (i % 4 == 0) ? 1.0 : 0.0;
        } else {
            for (double& v : t.values()) v = bias;
        }
    }
    return net;
}

}  // namespace

TEST(CycleLoss, IdentityAndOffsetForms) {
    arch::Network id_g = affine_net(0.0), id_f = affine_net(0.0), shift_f = affine_net(0.1);
    arch::Network d(arch::parse_arch("input c=3 h=12 w=12\nconv k=4 s=2 p=1 c=1\n"), 2);
    std::mt19937_64 rng(3);
    const Tensor x = oracle::random_tensor({2, 3, 12, 12}, rng);
    {
        Graph g;
        auto l = cyclegan_loss(g, id_g, id_f, d, d, x, x, 10.0);
        EXPECT_EQ(l.cyc.item(), 0.0);
    }
    {
        // F(G(x)) = x + 0.1 and G(F(y)) = y + 0.1: each L1 term is 0.1.
        Graph g;
        auto l = cyclegan_loss(g, id_g, shift_f, d, d, x, x, 10.0);
        EXPECT_NEAR(l.cyc.item(), 0.2, 1e-12);
        Graph g2;
        const Tensor rec = shift_f.forward(g2, id_g.forward(g2, x, false), false);
        EXPECT_NEAR(l1(g2, rec, x).item(), 0.1, 1e-12);
    }
    {
        Graph g;
        auto l = cyclegan_loss(g, id_g, shift_f, d, d, x, x, 0.0);
        EXPECT_EQ(l.total.item(), l.adv.item());
    }
    Graph g;
    EXPECT_THROW(cyclegan_loss(g, id_g, id_f, d, d, x, Tensor({1, 3, 12, 12}), 10.0), std::invalid_argument);
}

TEST(CycleLoss, LearningRateSchedule) {
    EXPECT_EQ(lr_scale(0, 1000, 2000), 1.0);
    EXPECT_EQ(lr_scale(999, 1000, 2000), 1.0);
    EXPECT_EQ(lr_scale(1000, 1000, 2000), 1.0);
    EXPECT_DOUBLE_EQ(lr_scale(1500, 1000, 2000), 0.5);
    EXPECT_EQ(lr_scale(2000, 1000, 2000), 0.0);
    EXPECT_LT(2e-4 * lr_scale(1999, 1000, 2000), 1e-6);
    for (std::size_t s = 1000; s < 2000; ++s) EXPECT_LE(lr_scale(s + 1, 1000, 2000), lr_scale(s, 1000, 2000));
}

// ---- Adam --------------------------------------------------------------

TEST(Adam, FirstStepAndZeroGrad) {
    Tensor p = scalar_param(3.0);
    p.mutable_grad()[0] = 1.0;
    Adam opt(0.01, 0.5, 0.999);
    opt.step({{"p", p}});
    EXPECT_NEAR(p.item(), 3.0 - 0.01, 1e-9);

    Tensor q = scalar_param(2.0);
    Adam opt2(0.01, 0.5, 0.999);
    for (int i = 0; i < 3; ++i) {
        q.mutable_grad()[0] = 0.0;
        opt2.step({{"q", q}});
    }
    EXPECT_EQ(q.item(), 2.0);
}

TEST(Adam, TwoStepsMatchHandRecurrence) {
    const double lr = 0.05, b1 = 0.5, b2 = 0.999, eps = 1e-8, g = 0.3;
    Tensor p = scalar_param(1.0);
    Adam opt(lr, b1, b2, eps);
    double m = 0, v = 0, x = 1.0;
    for (int t = 1; t <= 2; ++t) {
        p.mutable_grad()[0] = g;
        opt.step({{"p", p}});
        m = b1 * m + (1 - b1) * g;
        v = b2 * v + (1 - b2) * g * g;
        x -= lr * (m / (1 - std::pow(b1, t))) / (std::sqrt(v / (1 - std::pow(b2, t))) + eps);
    }
    EXPECT_NEAR(p.item(), x, 1e-15);
    EXPECT_EQ(opt.state().at("p").t, 2u);
}

TEST(Adam, NonFiniteGradientNamesParameter) {
    Tensor a = scalar_param(1.0), b = scalar_param(1.0);
    a.mutable_grad()[0] = 1.0;
    b.mutable_grad()[0] = std::nan("");
    Adam opt(0.01, 0.5, 0.999);
    try {
        opt.step({{"layer.a", a}, {"layer.b", b}});
        FAIL();
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("layer.b"), std::string::npos);
    }
    EXPECT_EQ(a.item(), 1.0);  // nothing moved
    EXPECT_THROW(Adam(0.0, 0.5, 0.9), std::invalid_argument);
    EXPECT_THROW(Adam(0.1, 0.9, 0.5), std::invalid_argument);
}

TEST(Adam, DelayedGroupSkippedAndBiasCorrectedLater) {
    Tensor base = scalar_param(1.0), late = scalar_param(1.0);
    Adam opt(0.1, 0.5, 0.999);
    std::vector<nn::ParamRef> ps = {{"base", base, nn::ParamGroup::base}, {"late", late, nn::ParamGroup::delayed}};
    for (int i = 0; i < 3; ++i) {
        base.mutable_grad()[0] = 1.0;
        late.mutable_grad()[0] = 1.0;
        opt.step(ps, false);
    }
    EXPECT_EQ(late.item(), 1.0);
    EXPECT_NE(base.item(), 1.0);
    late.mutable_grad()[0] = 1.0;
    opt.step(ps, true);
    EXPECT_NEAR(late.item(), 0.9, 1e-8);  // first update of its own: −lr
}

// ---- toy data ----------------------------------------------------------

TEST(ToyData, DeterministicAndInRange) {
    ToySpec s;
    s.seed = 9;
    const Tensor a = gen_toy_dataset(s, 8), b = gen_toy_dataset(s, 8);
    EXPECT_EQ(vals(a), vals(b));
    for (double v : a.values()) {
        EXPECT_GE(v, -1.0);
        EXPECT_LE(v, 1.0);
    }
    // Sample i does not depend on where the batch starts.
    const Tensor tail = gen_toy_dataset(s, 4, 4);
    EXPECT_TRUE(std::equal(tail.values().begin(), tail.values().end(), a.values().begin() + 4 * 3 * 32 * 32));
    s.seed = 10;
    EXPECT_NE(vals(gen_toy_dataset(s, 8)), vals(a));
    EXPECT_THROW(gen_toy_dataset(s, 0), std::invalid_argument);
}

TEST(ToyData, OutlineDomainIsPairedWithFilled) {
    ToySpec s;
    s.seed = 3;
    const Tensor f = gen_toy_dataset(s, 4, 0, ToyDomain::filled), o = gen_toy_dataset(s, 4, 0, ToyDomain::outline);
    EXPECT_EQ(f.shape(), o.shape());
    EXPECT_NE(vals(f), vals(o));
    for (double v : o.values()) {
        EXPECT_GE(v, -1.0);
        EXPECT_LE(v, 1.0);
    }
}

TEST(ToyData, PowerSpectrumIsMultiScale) {
    // Naive 2-D DFT per channel; energy fractions (DC excluded) in a low band
    // (max(|u|,|v|) < 2 cycles per image) and a high band (> size/8).
    ToySpec s;
    s.seed = 21;
    const std::size_t n = s.image_size, count = 16;
    const Tensor batch = gen_toy_dataset(s, count);
    std::vector<std::complex<double>> tw(n);
    for (std::size_t k = 0; k < n; ++k) tw[k] = std::polar(1.0, -2.0 * std::numbers::pi * k / n);
    double low = 0, high = 0, total = 0;
    for (std::size_t img = 0; img < count * 3; ++img) {
        const double* p = batch.values().data() + img * n * n;
        double mean = 0;
        for (std::size_t i = 0; i < n * n; ++i) mean += p[i];
        mean /= n * n;
        for (std::size_t u = 0; u < n; ++u)
            for (std::size_t v = 0; v < n; ++v) {
                if (u == 0 && v == 0) continue;
                std::complex<double> acc = 0;
                for (std::size_t y = 0; y < n; ++y)
                    for (std::size_t x = 0; x < n; ++x) acc += (p[y * n + x] - mean) * tw[(u * y + v * x) % n];
                const double e = std::norm(acc);
                const std::size_t fu = std::min(u, n - u), fv = std::min(v, n - v), f = std::max(fu, fv);
                total += e;
                if (f < 2) low += e;
                if (f > n / 8) high += e;
            }
    }
    EXPECT_GT(low / total, 0.05) << low / total;
    EXPECT_GT(high / total, 0.05) << high / total;
}

// ---- config ------------------------------------------------------------

TEST(Config, ParseAndRoundTrip) {
    const auto c = parse_config(
        "# desk run\n"
        "lr_g = 0.0002\n"
        "batch_size=16   # small\n"
        "total_steps = 2000\n"
        "spap_update_start = 800\n"
        "minimax = true\n"
        "gen_arch = presets/a.arch\n");
    EXPECT_EQ(c.lr_g, 2e-4);
    EXPECT_EQ(c.lr_d, 2e-4);
    EXPECT_EQ(c.batch_size, 16u);
    EXPECT_TRUE(c.minimax);
    EXPECT_EQ(c.gen_arch, "presets/a.arch");
    EXPECT_EQ(c.lambda_cyc, 10.0);
    const std::string printed = print_config(c);
    EXPECT_EQ(print_config(parse_config(printed)), printed);
    EXPECT_NE(printed.find("spap_update_start = 800\n"), std::string::npos);
}

TEST(Config, Errors) {
    auto msg = [](const std::string& text) {
        try {
            parse_config(text);
        } catch (const std::invalid_argument& e) {
            return std::string(e.what());
        }
        return std::string();
    };
    EXPECT_NE(msg("lr_g = 1e-4\nlearning_rate = 3\n").find("line 2"), std::string::npos);
    EXPECT_NE(msg("lr_g = 1e-4\nlearning_rate = 3\n").find("learning_rate"), std::string::npos);
    EXPECT_NE(msg("seed = 1\nseed = 2\n").find("duplicate"), std::string::npos);
    EXPECT_NE(msg("batch_size = -3\n").find("batch_size"), std::string::npos);
    EXPECT_NE(msg("lr_g = fast\n").find("lr_g"), std::string::npos);
    EXPECT_NE(msg("just words\n").find("key = value"), std::string::npos);
    EXPECT_FALSE(msg("beta1 = 0.9999\n").empty());
    EXPECT_FALSE(msg("lr_d = 0\n").empty());
    EXPECT_FALSE(msg("minimax = maybe\n").empty());
    EXPECT_THROW(load_config("/nonexistent/x.cfg"), std::runtime_error);
}

// ---- GAN training --------------------------------------------------------

TEST(GanTraining, AlternatingUpdatesAreIsolated) {
    GanTrainer t(arch::parse_arch(kGen), arch::parse_arch(kDisc), mini_config());
    const Tensor real = t.real_batch(0), z = t.z_batch(0);
    const auto g0 = snapshot(t.generator()), d0 = snapshot(t.discriminator());
    t.d_step(real, z);
    EXPECT_EQ(snapshot(t.generator()), g0);
    EXPECT_NE(snapshot(t.discriminator()), d0);
    const auto d1 = snapshot(t.discriminator());
    t.g_step(z);
    EXPECT_EQ(snapshot(t.discriminator()), d1);
    EXPECT_NE(snapshot(t.generator()), g0);
}

TEST(GanTraining, DelayedScheduleAndVanillaEquivalence) {
    auto cfg = mini_config();
    cfg.spap_update_start = 4;
    GanTrainer spap(arch::parse_arch(kGen), arch::parse_arch(kDisc), cfg);
    GanTrainer vanilla(arch::parse_arch(kGenVanilla), arch::parse_arch(kDisc), cfg);
    const auto frozen_g = snapshot(spap.generator(), true), frozen_d = snapshot(spap.discriminator(), true);
    ASSERT_FALSE(frozen_g.empty());
    ASSERT_FALSE(frozen_d.empty());
    const Tensor z = sample_z(5, "probe", 3, 8);
    for (std::size_t s = 0; s < cfg.spap_update_start; ++s) {
        EXPECT_EQ(vals(spap.sample(z)), vals(vanilla.sample(z))) << "step " << s;
        spap.train_step();
        vanilla.train_step();
        EXPECT_EQ(snapshot(spap.generator(), true), frozen_g) << "step " << s;
        EXPECT_EQ(snapshot(spap.discriminator(), true), frozen_d) << "step " << s;
    }
    EXPECT_EQ(vals(spap.sample(z)), vals(vanilla.sample(z)));
    spap.train_step();
    EXPECT_NE(snapshot(spap.generator(), true), frozen_g);
    EXPECT_NE(snapshot(spap.discriminator(), true), frozen_d);
}

TEST(GanTraining, FrozenThroughoutWhenStartEqualsTotal) {
    auto cfg = mini_config();
    cfg.spap_update_start = cfg.total_steps;
    GanTrainer t(arch::parse_arch(kGen), arch::parse_arch(kDisc), cfg);
    const auto g0 = snapshot(t.generator(), true);
    t.run("");
    EXPECT_EQ(snapshot(t.generator(), true), g0);
    EXPECT_EQ(t.steps_done(), cfg.total_steps);
}

TEST(GanTraining, RunIsDeterministicAndWritesArtifacts) {
    const auto root = std::filesystem::temp_directory_path() / "spap_train_det";
    std::filesystem::remove_all(root);
    for (const char* run : {"a", "b"}) {
        GanTrainer t(arch::parse_arch(kGen), arch::parse_arch(kDisc), mini_config());
        t.run((root / run).string());
    }
    const std::string ma = read_file(root / "a" / "metrics.csv");
    EXPECT_EQ(ma, read_file(root / "b" / "metrics.csv"));
    EXPECT_EQ(ma.substr(0, ma.find('\n')), io::kMetricsHeader);
    EXPECT_EQ(std::count(ma.begin(), ma.end(), '\n'), 8);  // header, step 0, 6 steps
    for (const char* ck : {"ckpt_000003.ckpt", "ckpt_000006.ckpt"}) {
        ASSERT_TRUE(std::filesystem::exists(root / "a" / ck)) << ck;
        EXPECT_EQ(read_file(root / "a" / ck), read_file(root / "b" / ck));
    }
    // The checkpoint restores the generator.
    GanTrainer fresh(arch::parse_arch(kGen), arch::parse_arch(kDisc), mini_config());
    fresh.generator().load_from(nn::Checkpoint::load((root / "a" / "ckpt_000006.ckpt").string()), "G/");
    GanTrainer trained(arch::parse_arch(kGen), arch::parse_arch(kDisc), mini_config());
    trained.run("");
    const Tensor z = sample_z(1, "probe", 2, 8);
    EXPECT_EQ(vals(fresh.sample(z)), vals(trained.sample(z)));
    std::filesystem::remove_all(root);
}

TEST(GanTraining, DivergenceAbortsWithCheckpoint) {
    const auto dir = std::filesystem::temp_directory_path() / "spap_train_div";
    std::filesystem::remove_all(dir);
    GanTrainer t(arch::parse_arch(kGen), arch::parse_arch(kDisc), mini_config());
    for (auto& p : t.discriminator().parameters()) {
        if (p.path.starts_with("linear") && p.path.ends_with(".bias")) {
            Tensor b = p.tensor;
            b.values()[0] = std::nan("");
        }
    }
    EXPECT_THROW(t.run(dir.string()), std::runtime_error);
    EXPECT_TRUE(std::filesystem::exists(dir / "diverged.ckpt"));
    std::filesystem::remove_all(dir);
}

// The power-iteration estimate never exceeds the true top singular value, so
// the normalized weight sits at or just above 1; extra iterations on the
// trained weight only move it down towards 1.
TEST(GanTraining, SpectralNormAfterTraining) {
    auto cfg = mini_config();
    cfg.total_steps = 20;
    GanTrainer t(arch::parse_arch(kGen), arch::parse_arch(kDisc), cfg);
    for (int i = 0; i < 20; ++i) t.train_step();
    for (auto* net : {&t.generator(), &t.discriminator()}) {
        ASSERT_FALSE(net->spectral_weights().empty());
        for (const auto* w : net->spectral_weights()) {
            double prev = 1e300;
            for (std::size_t iters : {0, 20, 200, 2000}) {
                const double s = oracle::spectral_norm(w->settled(iters), w->weight.dim(0));
                EXPECT_GE(s, 1.0 - 1e-9) << w->path << " after " << iters;
                EXPECT_LE(s, prev + 1e-9) << w->path << " after " << iters;
                prev = s;
            }
            EXPECT_LE(prev, 1.001) << w->path;
        }
    }
}

TEST(GanTraining, RejectsMismatchedNetworks) {
    const auto disc24 = arch::parse_arch("input c=3 h=24 w=24\nconv k=4 s=2 p=1 c=4\nlinear out=1\n");
    EXPECT_THROW(GanTrainer(arch::parse_arch(kGen), disc24, mini_config()), std::invalid_argument);
    const auto patch = arch::parse_arch("input c=3 h=16 w=16\nconv k=4 s=2 p=1 c=1\n");
    EXPECT_THROW(GanTrainer(arch::parse_arch(kGen), patch, mini_config()), std::invalid_argument);
}

// End-to-end gradient of a discriminator loss through a 2-layer + SPAP
// network at 8x8, checked against central differences on every parameter.
TEST(GanTraining, EndToEndGradientCheck) {
    auto spec = arch::parse_arch(
        "input c=2 h=8 w=8 name=tiny\n"
        "conv k=3 s=1 p=1 c=3 act=lrelu:0.2\n"
        "spap rates=2,3 order=fine_to_coarse\n"
        "conv k=3 s=2 p=1 c=1\n");
    arch::Network net(spec, 4);
    std::mt19937_64 rng(4);
    for (auto& p : net.parameters()) {
        Tensor t = p.tensor;
        for (double& v : t.values()) v = std::uniform_real_distribution<double>(-0.6, 0.6)(rng);
    }
    const Tensor real = oracle::random_tensor({2, 2, 8, 8}, rng), fake = oracle::random_tensor({2, 2, 8, 8}, rng);
    auto loss = [&]() {
        Graph g;
        const Tensor l = d_loss(g, net.forward(g, real, false), net.forward(g, fake, false));
        return l.item();
    };
    {
        Graph g;
        const Tensor l = d_loss(g, net.forward(g, real, false), net.forward(g, fake, false));
        zero_grads(net.parameters());
        g.backward(l);
    }
    const double eps = 1e-5;
    double worst = 0.0;
    for (const auto& p : net.parameters()) {
        Tensor t = p.tensor;
        const std::vector<double> analytic(t.grad().begin(), t.grad().end());
        for (std::size_t i = 0; i < t.numel(); ++i) {
            const double keep = t.values()[i];
            t.values()[i] = keep + eps;
            const double up = loss();
            t.values()[i] = keep - eps;
            const double down = loss();
            t.values()[i] = keep;
            const double numeric = (up - down) / (2 * eps);
            const double err = std::abs(numeric - analytic[i]) / std::max({std::abs(numeric), std::abs(analytic[i]), 1e-8});
            worst = std::max(worst, err);
            EXPECT_LT(err, 1e-4) << p.path << "[" << i << "] analytic " << analytic[i] << " numeric " << numeric;
        }
    }
    EXPECT_LT(worst, 1e-4);
}

// ---- CycleGAN training ---------------------------------------------------

namespace {

const char* kCycGen =
    "input c=3 h=16 w=16 name=mini_cyc\n"
    "conv k=3 s=1 p=1 c=6 norm=instance act=relu\n"
    "spap rates=2,3\n"
    "conv k=3 s=1 p=1 c=3 act=tanh\n";
const char* kCycDisc =
    "input c=3 h=16 w=16 name=mini_patch\n"
    "conv k=4 s=2 p=1 c=6 act=lrelu:0.2\n"
    "conv k=4 s=1 p=1 c=1\n";

}  // namespace

TEST(CycleGanTraining, RunsDecaysAndIsDeterministic) {
    auto cfg = mini_config();
    cfg.batch_size = 2;
    cfg.total_steps = 4;
    cfg.spap_update_start = 2;
    cfg.eval_pairs = 2;
    std::vector<std::string> logs;
    for (int run = 0; run < 2; ++run) {
        CycleGanTrainer t(arch::parse_arch(kCycGen), arch::parse_arch(kCycGen), arch::parse_arch(kCycDisc),
                          arch::parse_arch(kCycDisc), cfg);
        const auto frozen = snapshot(t.G(), true);
        t.train_step();
        t.train_step();
        EXPECT_EQ(snapshot(t.G(), true), frozen);
        t.run("");
        EXPECT_NE(snapshot(t.G(), true), frozen);
        EXPECT_EQ(t.current_lr_scale(), 0.0);
        std::string s;
        for (const auto& r : t.log().rows()) s += io::format_row(r) + "\n";
        logs.push_back(s);
        const auto& rows = t.log().rows();
        ASSERT_FALSE(rows.empty());
        EXPECT_TRUE(rows.back().psnr.has_value());
        EXPECT_TRUE(rows.back().loss_cyc.has_value());
    }
    EXPECT_EQ(logs[0], logs[1]);
}

TEST(CycleGanTraining, RejectsNonEndomorphicGenerator) {
    const auto down = arch::parse_arch("input c=3 h=16 w=16\nconv k=4 s=2 p=1 c=3\n");
    EXPECT_THROW(CycleGanTrainer(down, arch::parse_arch(kCycGen), arch::parse_arch(kCycDisc),
                                 arch::parse_arch(kCycDisc), mini_config()),
                 std::invalid_argument);
}
