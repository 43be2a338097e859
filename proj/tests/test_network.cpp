#include <gtest/gtest.h>
#include <unistd.h>

#include <filesystem>
#include <fstream>

#include "lienet/checkpoint.hpp"
#include "lienet/network.hpp"
#include "oracle.hpp"

using namespace lienet;

namespace {

NetworkConfig config(std::vector<int> dias, TieMode tie = TieMode::mirror_tied,
                     SkipMode skip = SkipMode::literal) {
    NetworkConfig c;
    c.dia_set = std::move(dias);
    c.tie_mode = tie;
    c.skip_mode = skip;
    return c;
}

Network<double> random_network(const NetworkConfig& cfg, std::uint64_t seed, double scale = 0.5) {
    Network<double> net = Network<double>::initialize(cfg, seed);
    const auto r = oracle::random_tensor<double>({1, 1, 1, static_cast<int>(net.param_count())}, seed, -scale, scale);
    net.assign(r.data());
    return net;
}

std::filesystem::path temp_file(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("lienet_test_" + std::to_string(::getpid()) + "_" + name);
}

} // namespace

TEST(Config, ParseDiaSet) {
    EXPECT_EQ(parse_dia_set("0+1+2+3+4"), (std::vector<int>{0, 1, 2, 3, 4}));
    EXPECT_EQ(parse_dia_set("2,3,4"), (std::vector<int>{2, 3, 4}));
    EXPECT_THROW(parse_dia_set("1++2"), StructuralError);
    EXPECT_THROW(parse_dia_set(""), StructuralError);
    EXPECT_THROW(config({1, 1}).validate(), StructuralError);
    EXPECT_THROW(config({}).validate(), StructuralError);
    EXPECT_EQ(format_dia_set(std::vector<int>{2, 3, 4}), "2+3+4");
}

TEST(ParamCount, DefaultTotals) {
    EXPECT_EQ(net_param_count(config({0, 1, 2, 3, 4})), 180u);
    for (int d = 0; d <= 4; ++d) EXPECT_EQ(net_param_count(config({d})), 36u);
    EXPECT_EQ(net_param_count(config({0, 1, 2, 3, 4}, TieMode::untied)), 420u);
    EXPECT_EQ(Network<float>::initialize(config({0, 1, 2, 3, 4}), 0).param_count(), 180u);
    EXPECT_EQ(init_msrb<float>(3, std::vector<int>{0, 1, 2, 3, 4}, Variant::down, 0).scalar_count(), 60u);
}

TEST(Msrb, MatchesNaiveSum) {
    const std::vector<int> dias{0, 1, 2, 3, 4};
    for (SkipMode mode : {SkipMode::literal, SkipMode::single}) {
        const auto p = init_msrb<double>(3, dias, Variant::up, 3);
        const auto x = oracle::random_tensor<double>({1, 3, 5, 4}, 4);
        const auto skip = oracle::random_tensor<double>({1, 3, 11, 9}, 5);
        const Tensor<double> y = msrb_forward(x, p, &skip, mode);
        EXPECT_LT(oracle::max_abs_diff(y, oracle::msrb(x, p, Variant::up, mode, &skip)), 1e-12);
    }
}

TEST(Msrb, LiteralMinusSingleIsExtraSkips) {
    // Zero first-conv weights with a positive bias make every subpath emit a
    // constant; the two skip modes then differ by (kappa - 1) * skip.
    const std::vector<int> dias{0, 1, 2};
    auto p = init_msrb<double>(3, dias, Variant::up, 1);
    for (auto& k : p.kernels) {
        std::fill(k.w1.begin(), k.w1.end(), 0.0);
        std::fill(k.b1.begin(), k.b1.end(), 0.5);
        std::fill(k.w2.begin(), k.w2.end(), 0.0);
    }
    const auto x = oracle::random_tensor<double>({1, 3, 4, 4}, 2);
    const auto skip = oracle::random_tensor<double>({1, 3, 8, 8}, 3);
    const Tensor<double> lit = msrb_forward(x, p, &skip, SkipMode::literal);
    const Tensor<double> sgl = msrb_forward(x, p, &skip, SkipMode::single);
    for (std::size_t k = 0; k < lit.size(); ++k) EXPECT_NEAR(lit[k] - sgl[k], 2.0 * skip[k], 1e-12);
}

TEST(Msrb, SkipContract) {
    const auto p = init_msrb<float>(3, std::vector<int>{0}, Variant::up, 0);
    const auto x = oracle::random_tensor<float>({1, 3, 4, 4}, 1);
    EXPECT_THROW(msrb_forward(x, p), StructuralError);
    const auto d = init_msrb<float>(3, std::vector<int>{0}, Variant::down, 0);
    EXPECT_THROW(msrb_forward(x, d, &x), StructuralError);
}

TEST(Network, OutputShapes) {
    const auto net = Network<float>::initialize(config({0, 1, 2, 3, 4}), 0);
    const auto x = oracle::random_tensor<float>({1, 3, 96, 96}, 1, 0, 1);
    const auto out = net_forward(x, net);
    ASSERT_EQ(out.size(), 3u);
    EXPECT_EQ(out[0].shape(), (Shape{1, 3, 96, 96}));
    EXPECT_EQ(out[1].shape(), (Shape{1, 3, 48, 48}));
    EXPECT_EQ(out[2].shape(), (Shape{1, 3, 24, 24}));

    const auto odd = net_forward(oracle::random_tensor<float>({1, 3, 45, 29}, 2, 0, 1), net);
    EXPECT_EQ(odd[0].shape(), (Shape{1, 3, 45, 29}));
    EXPECT_EQ(odd[1].shape(), (Shape{1, 3, 22, 14}));
    EXPECT_EQ(odd[2].shape(), (Shape{1, 3, 11, 7}));
    EXPECT_THROW(net_forward(oracle::random_tensor<float>({1, 3, 7, 16}, 3), net), StructuralError);
}

TEST(Network, MatchesNaiveComposition) {
    for (TieMode tie : {TieMode::mirror_tied, TieMode::untied}) {
        for (SkipMode skip : {SkipMode::literal, SkipMode::single}) {
            const auto net = random_network(config({0, 2, 4}, tie, skip), 9);
            const auto x = oracle::random_tensor<double>({1, 3, 19, 16}, 10, 0, 1);
            const auto out = net_forward(x, net);
            const auto ref = oracle::network(x, net);
            for (std::size_t k = 0; k < out.size(); ++k) EXPECT_LT(oracle::max_abs_diff(out[k], ref[k]), 1e-12);
        }
    }
}

TEST(Network, TiedSetIsShared) {
    auto net = random_network(config({0, 1}), 4);
    const auto x = oracle::random_tensor<double>({1, 3, 16, 16}, 5, 0, 1);
    const auto base = net_forward(x, net);
    EXPECT_EQ(net.param_index(SiteKind::encoder, 2), net.param_index(SiteKind::decoder, 2));
    EXPECT_EQ(net.param_index(SiteKind::bottleneck, 0), 2u);
    net.stage_params()[1].kernels[0].b1[0] += 0.5;
    NetworkCache<double> cache;
    const auto moved = net_forward(x, net, &cache);
    EXPECT_GT(oracle::max_abs_diff(base[1], moved[1]), 0.0);
}

TEST(Network, UntiedGradientFollowsGraph) {
    const auto cfg = config({0, 1}, TieMode::untied);
    const auto net = random_network(cfg, 6);
    const auto x = oracle::random_tensor<double>({1, 3, 16, 16}, 7, 0, 1);
    NetworkCache<double> cache;
    const auto out = net_forward(x, net, &cache);

    std::vector<Tensor<double>> zero;
    for (const auto& o : out) zero.emplace_back(o.shape());
    const auto none = net_backward<double>(net, cache, zero);
    for (double v : none.flatten()) EXPECT_EQ(v, 0.0);
    EXPECT_EQ(none.dx.sum(), 0.0);

    // Decoder level 1 (set L+1) only feeds O_1, so with O_1's upstream zeroed
    // its gradient vanishes while encoder sets still receive gradient.
    std::vector<Tensor<double>> d = zero;
    d[1] = Tensor<double>(out[1].shape(), 1.0);
    d[2] = Tensor<double>(out[2].shape(), 1.0);
    const auto g = net_backward<double>(net, cache, d);
    const auto l1 = [](const MsrbParams<double>& p) {
        double s = 0;
        for (const auto& k : p.kernels)
            for (const auto* v : {&k.w1, &k.b1, &k.w2, &k.b2})
                for (double e : *v) s += std::abs(e);
        return s;
    };
    EXPECT_EQ(l1(g.stages[net.param_index(SiteKind::decoder, 1)]), 0.0);
    EXPECT_GT(l1(g.stages[net.param_index(SiteKind::encoder, 1)]), 0.0);
    EXPECT_GT(l1(g.stages[net.param_index(SiteKind::decoder, 2)]), 0.0);
}

TEST(Network, TiedGradientIsSumOfSites) {
    // Untie a tied network by copying its sets; the tied gradient must equal
    // the sum of the untied gradients over the sites that share a set.
    const auto tied_cfg = config({1, 3});
    const auto tied = random_network(tied_cfg, 21);
    auto untied_cfg = tied_cfg;
    untied_cfg.tie_mode = TieMode::untied;
    std::vector<MsrbParams<double>> sets;
    for (int s = 0; s < 7; ++s) {
        const int src = s < 3 ? s : (s == 3 ? 2 : s - 4);
        sets.push_back(tied.stage_params()[src]);
    }
    const Network<double> untied(untied_cfg, sets);
    const auto x = oracle::random_tensor<double>({1, 3, 16, 16}, 22, 0, 1);
    NetworkCache<double> ct, cu;
    const auto ot = net_forward(x, tied, &ct);
    const auto ou = net_forward(x, untied, &cu);
    for (std::size_t k = 0; k < ot.size(); ++k) EXPECT_EQ(ot[k], ou[k]);
    std::vector<Tensor<double>> d;
    for (std::size_t k = 0; k < ot.size(); ++k) d.push_back(oracle::random_tensor<double>(ot[k].shape(), 30 + k));
    const auto gt = net_backward<double>(tied, ct, d);
    const auto gu = net_backward<double>(untied, cu, d);
    for (int s = 0; s < 3; ++s) {
        auto expect = gu.stages[s];
        expect += gu.stages[4 + s];
        if (s == 2) expect += gu.stages[3];
        for (std::size_t k = 0; k < expect.kernels.size(); ++k) {
            for (std::size_t c = 0; c < 3; ++c) {
                EXPECT_NEAR(gt.stages[s].kernels[k].w1[c], expect.kernels[k].w1[c], 1e-12);
                EXPECT_NEAR(gt.stages[s].kernels[k].b2[c], expect.kernels[k].b2[c], 1e-12);
            }
        }
    }
}

TEST(Network, FullGradcheckOnSmallInput) {
    for (TieMode tie : {TieMode::mirror_tied, TieMode::untied}) {
        const auto net = random_network(config({0, 1, 2, 3, 4}, tie), 12, 0.3);
        const auto x = oracle::random_tensor<double>({1, 3, 16, 16}, 13, 0, 1);
        NetworkCache<double> cache;
        const auto out = net_forward(x, net, &cache);
        std::vector<Tensor<double>> r;
        for (std::size_t k = 0; k < out.size(); ++k) r.push_back(oracle::random_tensor<double>(out[k].shape(), 40 + k));
        const auto scalar = [&](const std::vector<Tensor<double>>& o) {
            double s = 0;
            for (std::size_t k = 0; k < o.size(); ++k)
                for (std::size_t i = 0; i < o[k].size(); ++i) s += r[k][i] * o[k][i];
            return s;
        };
        const auto g = net_backward<double>(net, cache, r);
        const auto f = [&](const std::vector<double>& flat) {
            Network<double> probe = net;
            probe.assign(flat);
            return scalar(net_forward(x, probe));
        };
        EXPECT_LE(relative_error(g.flatten(), numeric_gradient(f, net.flatten(), 1e-6)), 1e-5);
    }
}

TEST(Network, ForwardIsDeterministic) {
    const auto a = Network<float>::initialize(config({0, 1, 2, 3, 4}), 42);
    const auto b = Network<float>::initialize(config({0, 1, 2, 3, 4}), 42);
    EXPECT_EQ(a.flatten(), b.flatten());
    const auto x = oracle::random_tensor<float>({1, 3, 24, 24}, 1, 0, 1);
    EXPECT_EQ(net_forward(x, a)[0], net_forward(x, b)[0]);
}

TEST(FlopReport, KernelLinesAndKappaRatio) {
    const auto full = net_flop_report(config({0, 1, 2, 3, 4}), 96, 96);
    const auto mini = net_flop_report(config({0}), 96, 96);
    EXPECT_EQ(full.kernel_total, 5 * mini.kernel_total);
    std::int64_t kernels = 0;
    for (const auto& l : full.lines) {
        if (l.item != "dsconv") continue;
        EXPECT_EQ(l.flops, 15LL * 3 * l.height * l.width) << l.site;
        kernels += l.flops;
    }
    EXPECT_EQ(kernels, full.kernel_total);
    EXPECT_EQ(full.grand_total, full.kernel_total + full.auxiliary_total);

    const auto twice = net_flop_report(config({0, 1, 2, 3, 4}), 192, 96);
    ASSERT_EQ(twice.lines.size(), full.lines.size());
    for (std::size_t k = 0; k < full.lines.size(); ++k) EXPECT_EQ(twice.lines[k].flops, 2 * full.lines[k].flops);
}

TEST(Checkpoint, RoundTripIsBitExact) {
    const auto net = Network<float>::initialize(config({0, 1, 2, 3, 4}), 5);
    const auto path = temp_file("roundtrip.json");
    save_checkpoint(net, path);
    const auto back = load_checkpoint<float>(path);
    EXPECT_EQ(back.config(), net.config());
    EXPECT_EQ(back.flatten(), net.flatten());
    const auto x = oracle::random_tensor<float>({1, 3, 32, 24}, 6, 0, 1);
    EXPECT_EQ(net_forward(x, back)[0], net_forward(x, net)[0]);
    std::filesystem::remove(path);
}

TEST(Checkpoint, ListsAllScalars) {
    const std::string text = checkpoint_to_json(Network<float>::initialize(config({0, 1, 2, 3, 4}), 0));
    const auto back = checkpoint_from_json<float>(text);
    EXPECT_EQ(back.param_count(), 180u);
    EXPECT_NE(text.find("\"format_version\""), std::string::npos);
    EXPECT_NE(text.find("\"stage_params\""), std::string::npos);
}

TEST(Checkpoint, RejectsBadDocuments) {
    const std::string good = checkpoint_to_json(Network<float>::initialize(config({0, 1}), 0));
    EXPECT_THROW(checkpoint_from_json<float>(good.substr(0, good.size() / 2)), CheckpointError);
    std::string versioned = good;
    versioned.replace(versioned.find("\"format_version\": 1"), 19, "\"format_version\": 7");
    try {
        checkpoint_from_json<float>(versioned);
        FAIL() << "version mismatch accepted";
    } catch (const CheckpointError& e) {
        EXPECT_NE(std::string(e.what()).find("format_version"), std::string::npos);
    }
    std::string extra = good;
    extra.insert(1, "\"surprise\": 1,");
    EXPECT_THROW(checkpoint_from_json<float>(extra), CheckpointError);
    EXPECT_THROW(load_checkpoint<float>(temp_file("does_not_exist.json")), IoError);
}
