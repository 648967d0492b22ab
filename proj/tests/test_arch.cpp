#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "oracles.hpp"
#include "spap/arch/analysis.hpp"
#include "spap/arch/network.hpp"
#include "spap/arch/spec.hpp"

using namespace spap;
using namespace spap::arch;

namespace {

std::string preset(const std::string& name) { return std::string(SPAP_SOURCE_DIR) + "/presets/" + name + ".arch"; }

std::vector<std::string> all_presets() {
    std::vector<std::string> out;
    for (const auto& e : std::filesystem::directory_iterator(std::string(SPAP_SOURCE_DIR) + "/presets"))
        if (e.path().extension() == ".arch") out.push_back(e.path().stem().string());
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<double> vals(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

std::size_t error_line(const std::string& text) {
    try {
        parse_arch(text);
    } catch (const ArchError& e) {
        return e.line();
    }
    return 0;
}

}  // namespace

TEST(ArchParse, BasicLayersAndShapes) {
    auto spec = parse_arch(
        "# comment\n"
        "input c=3 h=32 w=32 name=tiny\n"
        "conv k=4 s=2 p=1 c=8 norm=batch act=lrelu:0.2\n"
        "\n"
        "conv k=3 s=1 p=2 d=2 c=8   # dilated\n"
        "linear out=1\n");
    EXPECT_EQ(spec.name, "tiny");
    ASSERT_EQ(spec.layers.size(), 3u);
    EXPECT_EQ(spec.layers[0].label, "conv0");
    EXPECT_EQ(spec.layers[1].label, "conv1");
    EXPECT_EQ(spec.layers[1].d, 2u);
    EXPECT_EQ(spec.layers[1].line, 5u);
    EXPECT_EQ(spec.shapes[0], (FeatureShape{8, 16, 16, false}));
    EXPECT_EQ(spec.shapes[1], (FeatureShape{8, 16, 16, false}));
    EXPECT_TRUE(spec.shapes[2].flat);
    EXPECT_EQ(spec.output().c, 1u);
    ASSERT_TRUE(spec.layers[0].act.has_value());
    EXPECT_DOUBLE_EQ(spec.layers[0].act->slope, 0.2);
}

TEST(ArchParse, ErrorsCarryLineNumbers) {
    EXPECT_EQ(error_line("input c=3 h=8 w=8\nconv k=0 s=1 p=0 c=4\n"), 2u);
    EXPECT_EQ(error_line("input c=3 h=8 w=8\n\nwibble k=3\n"), 3u);
    EXPECT_EQ(error_line("input c=3 h=8 w=8\nconv k=3 s=1 p=1\n"), 2u);           // missing c
    EXPECT_EQ(error_line("input c=3 h=8 w=8\nconv k=3 s=1 p=1 c=4 zz=1\n"), 2u);  // unknown key
    EXPECT_EQ(error_line("input c=3 h=4 w=4\nconv k=3 s=1 p=0 c=4\nconv k=3 s=1 p=0 c=4\n"), 3u);  // map vanishes
    EXPECT_EQ(error_line("input c=3 h=8 w=8\nreshape c=5 h=2 w=2\n"), 2u);  // element count
    EXPECT_EQ(error_line("input c=3 h=8 w=8\nconv k=3 s=1 p=1 c=4 label=a\nconv k=3 s=1 p=1 c=4 label=a\n"), 3u);
    EXPECT_EQ(error_line("input c=3 h=8 w=8\nconv k=3 s=1 p=1 c=4 act=swish\n"), 2u);
    EXPECT_EQ(error_line("input c=3 h=8 w=8\nspap rates=3,5 order=sideways\n"), 2u);
    EXPECT_EQ(error_line("conv k=3 s=1 p=1 c=4\n"), 1u);  // no input header
    EXPECT_EQ(error_line("input c=3 h=8 w=8\nconv k=3 s=x p=1 c=4\n"), 2u);
}

TEST(ArchParse, MessageNamesFileAndLine) {
    const auto path = std::filesystem::temp_directory_path() / "bad_arch_test.arch";
    {
        std::ofstream f(path);
        f << "input c=3 h=8 w=8\nconv k=3\n";
    }
    try {
        load_arch(path.string());
        FAIL() << "expected ArchError";
    } catch (const ArchError& e) {
        const std::string what = e.what();
        EXPECT_NE(what.find("bad_arch_test.arch"), std::string::npos) << what;
        EXPECT_NE(what.find("line 2"), std::string::npos) << what;
        EXPECT_EQ(what.find("line 2: line 2"), std::string::npos) << what;
    }
    std::filesystem::remove(path);
}

TEST(ArchParse, PrintReparseFixedPointOnAllPresets) {
    const auto names = all_presets();
    ASSERT_GE(names.size(), 10u);
    for (const auto& n : names) {
        const auto spec = load_arch(preset(n));
        const std::string once = print_arch(spec);
        const auto again = parse_arch(once);
        EXPECT_EQ(print_arch(again), once) << n;
        EXPECT_EQ(again.shapes, spec.shapes) << n;
    }
}

TEST(ArchParse, DiscriminatorHasSevenConvsAndALinear) {
    const auto spec = load_arch(preset("sndcgan_disc"));
    std::size_t convs = 0, linears = 0;
    for (const auto& l : spec.layers) {
        convs += l.kind == LayerKind::conv;
        linears += l.kind == LayerKind::linear;
    }
    EXPECT_EQ(convs, 7u);
    EXPECT_EQ(linears, 1u);
    EXPECT_EQ(spec.output(), (FeatureShape{1, 1, 1, true}));
}

TEST(ArchRf, KnownStacks) {
    EXPECT_EQ(receptive_field(load_arch(preset("patchgan"))).final_rf, 70u);
    EXPECT_EQ(receptive_field(load_arch(preset("sndcgan_disc"))).final_rf, 52u);
    EXPECT_EQ(receptive_field(parse_arch("input c=1 h=16 w=16\nconv k=3 s=1 p=2 d=2 c=1\n")).final_rf, 5u);
    EXPECT_EQ(receptive_field(parse_arch("input c=1 h=16 w=16\nconv k=3 s=2 p=1 c=1\nconv k=3 s=1 p=1 c=1\n")).final_rf, 7u);
}

TEST(ArchRf, AtrousVariantsWiden) {
    const auto pg = receptive_field(load_arch(preset("patchgan_atrous"))).final_rf;
    const auto sn = receptive_field(load_arch(preset("sndcgan_disc_atrous"))).final_rf;
    EXPECT_EQ(pg, 142u);
    EXPECT_EQ(sn, 88u);
}

TEST(ArchRf, MonotoneAndStopsAtLinear) {
    for (const auto& n : all_presets()) {
        const auto spec = load_arch(preset(n));
        bool has_deconv = false;
        for (const auto& l : spec.layers) has_deconv |= l.kind == LayerKind::deconv;
        if (has_deconv) {
            EXPECT_THROW(receptive_field(spec), std::invalid_argument) << n;
            continue;
        }
        const auto rep = receptive_field(spec);
        for (std::size_t i = 1; i < rep.rows.size(); ++i) EXPECT_GE(rep.rows[i].rf, rep.rows[i - 1].rf) << n;
        if (spec.layers.back().kind == LayerKind::linear) {
            EXPECT_FALSE(rep.stopped_at.empty()) << n;
        }
    }
}

TEST(ArchRf, SpapExtentIsExactPathMax) {
    // SPAP alone on a thin map: the analytic extent must match brute-force
    // influence.
    for (const char* order : {"coarse_to_fine", "fine_to_coarse"}) {
        auto spec = parse_arch(std::string("input c=2 h=96 w=96\nspap rates=3,5 order=") + order + "\n");
        const auto rf = receptive_field(spec).final_rf;
        const auto [rows, cols] = oracle::influence_extent(spec, 11);
        EXPECT_EQ(rows, rf) << order;
        EXPECT_EQ(cols, rf) << order;
    }
}

class InfluenceOnPresets : public ::testing::TestWithParam<std::string> {};

TEST_P(InfluenceOnPresets, MatchesBruteForce) {
    auto spec = load_arch(preset(GetParam()));
    // Desk inputs are smaller than the field; widen so the centre unit sees no border.
    if (spec.input.h < 128) spec = with_input_size(spec, 128, 128);
    const auto rf = receptive_field(spec).final_rf;
    const auto [rows, cols] = oracle::influence_extent(spec, 5);
    EXPECT_EQ(rows, rf);
    EXPECT_EQ(cols, rf);
}

INSTANTIATE_TEST_SUITE_P(Discriminators, InfluenceOnPresets,
                         ::testing::Values("patchgan", "patchgan_atrous", "sndcgan_disc", "sndcgan_disc_atrous",
                                           "desk_patchgan", "desk_sndcgan_disc"));

TEST(ArchParams, SmallConv) {
    const auto spec = parse_arch("input c=64 h=8 w=8\nconv k=3 s=1 p=1 c=3\n");
    EXPECT_EQ(param_count(spec).total, 1731u);
}

TEST(ArchParams, SndcganGeneratorScale) {
    const auto base = param_count(load_arch(preset("sndcgan_gen"))).total;
    EXPECT_GE(static_cast<double>(base), 0.98 * 20.065e6);
    EXPECT_LE(static_cast<double>(base), 1.02 * 20.065e6);
    const auto with = param_count(load_arch(preset("sndcgan_gen_spap"))).total;
    const double delta = static_cast<double>(with - base);
    EXPECT_GE(delta, 0.95 * 0.691e6);
    EXPECT_LE(delta, 1.05 * 0.691e6);
    EXPECT_EQ(param_count(load_arch(preset("sndcgan_gen_spap_f2c"))).total, with);
}

TEST(ArchParams, AnalyticEqualsAllocated) {
    for (const auto& n : all_presets()) {
        if (n.rfind("sndcgan_gen", 0) == 0) continue;  // covered below once, it is large
        const auto spec = load_arch(preset(n));
        Network net(spec, 1);
        EXPECT_EQ(net.parameter_count(), param_count(spec).total) << n;
    }
    const auto spec = load_arch(preset("sndcgan_gen_spap"));
    Network net(spec, 1);
    EXPECT_EQ(net.parameter_count(), param_count(spec).total);
}

TEST(ArchParams, RowsSumToTotal) {
    const auto rep = param_count(load_arch(preset("cyclegan_gen_spap")));
    std::uint64_t s = 0;
    for (const auto& r : rep.rows) s += r.count;
    EXPECT_EQ(s, rep.total);
}

TEST(ArchNetwork, DeskGeneratorOutput) {
    const auto spec = load_arch(preset("desk_sndcgan_gen"));
    Network net(spec, 3, "G");
    std::mt19937_64 rng(1);
    Graph g;
    auto z = oracle::random_tensor({4, 128}, rng);
    auto y = net.forward(g, z, true);
    EXPECT_EQ(y.shape(), (Shape{4, 3, 32, 32}));
    for (double v : y.values()) {
        EXPECT_GE(v, -1.0);
        EXPECT_LE(v, 1.0);
    }
}

TEST(ArchNetwork, CycleganGeneratorKeepsShape) {
    auto spec = with_input_size(load_arch(preset("cyclegan_gen_spap")), 64, 64);
    EXPECT_EQ(spec.output(), spec.input);
    Network net(spec, 3, "G");
    std::mt19937_64 rng(2);
    Graph g;
    auto y = net.forward(g, oracle::random_tensor({1, 3, 64, 64}, rng), false);
    EXPECT_EQ(y.shape(), (Shape{1, 3, 64, 64}));
}

TEST(ArchNetwork, IdentityReshape) {
    const auto spec = parse_arch("input c=2 h=3 w=4\nreshape c=2 h=3 w=4\n");
    Network net(spec, 1);
    std::mt19937_64 rng(3);
    auto x = oracle::random_tensor({2, 2, 3, 4}, rng);
    Graph g;
    auto y = net.forward(g, x, false);
    EXPECT_EQ(y.shape(), x.shape());
    EXPECT_EQ(vals(y), vals(x));
}

TEST(ArchNetwork, RejectsWrongInput) {
    Network net(load_arch(preset("desk_patchgan")), 1);
    Graph g;
    EXPECT_THROW(net.forward(g, Tensor({1, 3, 16, 16}), false), std::invalid_argument);
}

TEST(ArchNetwork, SharedScopeSharesBaseInit) {
    Network vanilla(load_arch(preset("desk_sndcgan_gen")), 9, "G");
    Network with(load_arch(preset("desk_sndcgan_gen_spap")), 9, "G");
    std::map<std::string, Tensor> a;
    for (const auto& p : vanilla.parameters()) a[p.path] = p.tensor;
    std::size_t shared = 0;
    for (const auto& p : with.parameters()) {
        auto it = a.find(p.path);
        if (it == a.end()) {
            EXPECT_EQ(p.group, nn::ParamGroup::delayed) << p.path;
            continue;
        }
        EXPECT_EQ(vals(it->second), vals(p.tensor)) << p.path;
        ++shared;
    }
    EXPECT_EQ(shared, a.size());
}

TEST(ArchNetwork, SpapGammaZeroGivesSameOutputAsVanilla) {
    Network vanilla(load_arch(preset("desk_sndcgan_gen")), 9, "G");
    Network with(load_arch(preset("desk_sndcgan_gen_spap")), 9, "G");
    std::mt19937_64 rng(4);
    auto z = oracle::random_tensor({2, 128}, rng);
    Graph g1, g2;
    auto a = vanilla.forward(g1, z, false);
    auto b = with.forward(g2, z, false);
    ASSERT_EQ(a.shape(), b.shape());
    for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_NEAR(a.values()[i], b.values()[i], 1e-12);
}

TEST(ArchNetwork, SpectralWeightsHaveUnitSigma) {
    Network net(load_arch(preset("desk_sndcgan_disc")), 7, "D");
    ASSERT_FALSE(net.spectral_weights().empty());
    for (const auto* w : net.spectral_weights()) {
        ASSERT_TRUE(w->sn.has_value()) << w->path;
        const double s = oracle::spectral_norm(w->weight, w->weight.dim(0));
        EXPECT_GT(s, 0.0);
    }
    // After normalisation every weight has largest singular value ~1.
    for (auto* w : net.spectral_weights()) {
        SnWeight copy = *w;
        Graph g;
        auto wn = copy.use(g, false);
        EXPECT_NEAR(oracle::spectral_norm(wn, wn.dim(0)), 1.0, 2e-2) << w->path;
    }
}

TEST(ArchNetwork, BuffersListed) {
    Network net(load_arch(preset("desk_sndcgan_gen")), 1);
    bool mean = false, u = false;
    for (const auto& [path, t] : net.buffers()) {
        mean |= path.ends_with(".running_mean");
        u |= path.ends_with(".sn_u");
    }
    EXPECT_TRUE(mean);
    EXPECT_TRUE(u);
}

TEST(ArchNetwork, CheckpointRoundTripAndMismatch) {
    const auto spec = load_arch(preset("desk_patchgan_atrous"));
    Network a(spec, 1, "D"), b(spec, 2, "D");
    nn::Checkpoint ck;
    a.save_into(ck, "D/");
    b.load_from(nn::Checkpoint::parse(ck.serialize()), "D/");
    std::mt19937_64 rng(5);
    auto x = oracle::random_tensor({1, 3, 32, 32}, rng);
    Graph g1, g2;
    EXPECT_EQ(vals(a.forward(g1, x, false)), vals(b.forward(g2, x, false)));

    // The vanilla stack shares base paths with the atrous one, so it loads.
    Network vanilla(load_arch(preset("desk_patchgan")), 1, "D");
    EXPECT_NO_THROW(vanilla.load_from(ck, "D/"));

    Network other(load_arch(preset("desk_sndcgan_disc")), 1, "D");
    try {
        other.load_from(ck, "D/");
        FAIL() << "expected mismatch";
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("checkpoint does not match architecture"), std::string::npos);
    }
}
