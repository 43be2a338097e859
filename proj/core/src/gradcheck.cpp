#include "lienet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "lienet/dsconv.hpp"
#include "lienet/loss.hpp"
#include "lienet/network.hpp"

namespace lienet {

namespace {

using TD = Tensor<double>;
using Rng = std::mt19937_64;

constexpr double kKinkMargin = 1e-4;

TD random_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    TD t(s);
    for (double& v : t.data()) v = u(rng);
    return t;
}

std::vector<double> random_vector(std::size_t n, Rng& rng, double sd) {
    std::normal_distribution<double> d(0.0, sd);
    std::vector<double> v(n);
    for (double& x : v) x = d(rng);
    return v;
}

int uniform_int(Rng& rng, int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng);
}

double dot(const TD& a, const TD& b) {
    require_same_shape(a.shape(), b.shape(), "gradcheck dot");
    double s = 0;
    for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
    return s;
}

double err(const TD& analytic, const TD& numeric) {
    require_same_shape(analytic.shape(), numeric.shape(), "gradcheck");
    return relative_error(analytic.data(), numeric.data());
}

double err(const std::vector<double>& analytic, const std::vector<double>& numeric) {
    return relative_error(analytic, numeric);
}

// Keeps values away from the relu kink so a finite step cannot straddle it.
void push_off_zero(TD& t) {
    for (double& v : t.data()) {
        if (std::abs(v) < 0.05) v = v < 0 ? v - 0.05 : v + 0.05;
    }
}

double min_abs(const TD& t) {
    double m = INFINITY;
    for (double v : t.data()) m = std::min(m, std::abs(v));
    return m;
}

struct Accumulator {
    GradcheckResult result;
    explicit Accumulator(std::string name) { result.component = std::move(name); }
    void add(double e) {
        ++result.cases;
        result.max_rel_error = std::max(result.max_rel_error, std::isfinite(e) ? e : INFINITY);
    }
};

// Runs `make_case` until it produces `cases` usable cases; a case returns a
// negative value to ask for a redraw (kink too close).
GradcheckResult run_cases(const std::string& name, const GradcheckOptions& opt, std::uint64_t salt,
                          const std::function<double(Rng&)>& make_case) {
    Accumulator acc(name);
    Rng rng(opt.seed * 0x9E3779B97F4A7C15ull + salt);
    int redraws = 0;
    while (acc.result.cases < opt.cases) {
        const double e = make_case(rng);
        if (e < 0) {
            if (++redraws > 50 * opt.cases) throw StructuralError("gradcheck: " + name + " kept hitting kinks");
            continue;
        }
        acc.add(e);
    }
    return acc.result;
}

// ---- primitives ----------------------------------------------------------------

void primitive_checks(const GradcheckOptions& opt, std::vector<GradcheckResult>& out) {
    const double h = opt.step;

    out.push_back(run_cases("zero_pad", opt, 1, [&](Rng& rng) {
        const int m = uniform_int(rng, 0, 3);
        const TD x = random_tensor({2, 2, uniform_int(rng, 1, 6), uniform_int(rng, 1, 6)}, rng);
        const TD r = random_tensor(zero_pad(x, m).shape(), rng);
        const auto f = [&](const TD& t) { return dot(r, zero_pad(t, m)); };
        return err(zero_pad_backward(r, m), numeric_gradient(f, x, h));
    }));

    out.push_back(run_cases("shifted_window", opt, 2, [&](Rng& rng) {
        const int dia = uniform_int(rng, 0, 4);
        const int hh = uniform_int(rng, 1, 6);
        const int ww = uniform_int(rng, 1, 6);
        const int i = uniform_int(rng, -1, 1);
        const int j = uniform_int(rng, -1, 1);
        const TD p = random_tensor({2, 2, hh + 2 * dia, ww + 2 * dia}, rng);
        const TD r = random_tensor({2, 2, hh, ww}, rng);
        const auto f = [&](const TD& t) { return dot(r, shifted_window(t, i, j, dia, hh, ww)); };
        return err(shifted_window_backward(r, i, j, dia), numeric_gradient(f, p, h));
    }));

    out.push_back(run_cases("channel_affine", opt, 3, [&](Rng& rng) {
        const int c = uniform_int(rng, 1, 4);
        const TD x = random_tensor({2, c, uniform_int(rng, 1, 5), uniform_int(rng, 1, 5)}, rng);
        const std::vector<double> w = random_vector(c, rng, 1.0);
        const std::vector<double> b = random_vector(c, rng, 1.0);
        const TD r = random_tensor(x.shape(), rng);
        const ChannelAffineGrad<double> g = channel_affine_backward<double>(x, w, r);
        const auto fx = [&](const TD& t) { return dot(r, channel_affine<double>(t, w, b)); };
        const auto fw = [&](const std::vector<double>& v) { return dot(r, channel_affine<double>(x, v, b)); };
        const auto fb = [&](const std::vector<double>& v) { return dot(r, channel_affine<double>(x, w, v)); };
        return std::max({err(g.dx, numeric_gradient(fx, x, h)), err(g.dw, numeric_gradient(fw, w, h)),
                         err(g.db, numeric_gradient(fb, b, h))});
    }));

    out.push_back(run_cases("relu", opt, 4, [&](Rng& rng) {
        TD x = random_tensor({2, 3, uniform_int(rng, 1, 6), uniform_int(rng, 1, 6)}, rng);
        push_off_zero(x);
        const TD r = random_tensor(x.shape(), rng);
        const auto f = [&](const TD& t) { return dot(r, relu(t)); };
        return err(relu_backward(x, r), numeric_gradient(f, x, h));
    }));

    out.push_back(run_cases("sigmoid", opt, 5, [&](Rng& rng) {
        const TD x = random_tensor({2, 3, uniform_int(rng, 1, 6), uniform_int(rng, 1, 6)}, rng, -4, 4);
        const TD r = random_tensor(x.shape(), rng);
        const auto f = [&](const TD& t) { return dot(r, sigmoid(t)); };
        return err(sigmoid_backward(sigmoid(x), r), numeric_gradient(f, x, h));
    }));

    out.push_back(run_cases("add", opt, 6, [&](Rng& rng) {
        const Shape s{1, 2, uniform_int(rng, 1, 5), uniform_int(rng, 1, 5)};
        const TD a = random_tensor(s, rng);
        const TD b = random_tensor(s, rng);
        const TD r = random_tensor(s, rng);
        const auto fa = [&](const TD& t) { return dot(r, add(t, b)); };
        const auto fb = [&](const TD& t) { return dot(r, add(a, t)); };
        return std::max(err(r, numeric_gradient(fa, a, h)), err(r, numeric_gradient(fb, b, h)));
    }));

    out.push_back(run_cases("mul", opt, 7, [&](Rng& rng) {
        const Shape s{1, 2, uniform_int(rng, 1, 5), uniform_int(rng, 1, 5)};
        const TD a = random_tensor(s, rng);
        const TD b = random_tensor(s, rng);
        const TD r = random_tensor(s, rng);
        const auto [da, db] = mul_backward(a, b, r);
        const auto fa = [&](const TD& t) { return dot(r, mul(t, b)); };
        const auto fb = [&](const TD& t) { return dot(r, mul(a, t)); };
        return std::max(err(da, numeric_gradient(fa, a, h)), err(db, numeric_gradient(fb, b, h)));
    }));

    out.push_back(run_cases("avg_pool2", opt, 8, [&](Rng& rng) {
        const TD x = random_tensor({2, 2, uniform_int(rng, 2, 9), uniform_int(rng, 2, 9)}, rng);
        const TD r = random_tensor(avg_pool2(x).shape(), rng);
        const auto f = [&](const TD& t) { return dot(r, avg_pool2(t)); };
        return err(avg_pool2_backward(r, x.shape()), numeric_gradient(f, x, h));
    }));

    out.push_back(run_cases("bilinear_resize", opt, 9, [&](Rng& rng) {
        const TD x = random_tensor({1, 2, uniform_int(rng, 1, 8), uniform_int(rng, 1, 8)}, rng);
        const int oh = uniform_int(rng, 1, 12);
        const int ow = uniform_int(rng, 1, 12);
        const TD r = random_tensor({1, 2, oh, ow}, rng);
        const auto f = [&](const TD& t) { return dot(r, bilinear_resize(t, oh, ow)); };
        return err(bilinear_resize_backward(r, x.shape()), numeric_gradient(f, x, h));
    }));

    out.push_back(run_cases("to_grayscale", opt, 10, [&](Rng& rng) {
        const TD x = random_tensor({2, 3, uniform_int(rng, 1, 6), uniform_int(rng, 1, 6)}, rng);
        const TD r = random_tensor(to_grayscale(x).shape(), rng);
        const auto f = [&](const TD& t) { return dot(r, to_grayscale(t)); };
        return err(to_grayscale_backward(r), numeric_gradient(f, x, h));
    }));

    out.push_back(run_cases("sobel", opt, 11, [&](Rng& rng) {
        const TD x = random_tensor({2, 1, uniform_int(rng, 1, 8), uniform_int(rng, 1, 8)}, rng);
        const TD rx = random_tensor(x.shape(), rng);
        const TD ry = random_tensor(x.shape(), rng);
        const auto f = [&](const TD& t) {
            const SobelPair<double> s = sobel_gradients(t);
            return dot(rx, s.gx) + dot(ry, s.gy);
        };
        return err(sobel_backward(rx, ry), numeric_gradient(f, x, h));
    }));
}

// ---- DSConv ----------------------------------------------------------------------

DSConvParams<double> random_dsconv(int c, int dia, Variant v, Rng& rng) {
    DSConvParams<double> p;
    p.w1 = random_vector(c, rng, 1.0);
    p.b1 = random_vector(c, rng, 0.5);
    p.w2 = random_vector(c, rng, 1.0);
    p.b2 = random_vector(c, rng, 0.5);
    p.dia = dia;
    p.variant = v;
    return p;
}

double dsconv_case(int dia, Variant v, double h, Rng& rng) {
    const int c = uniform_int(rng, 1, 3);
    const int hh = uniform_int(rng, 2, 7);
    const int ww = uniform_int(rng, 2, 7);
    const TD x = random_tensor({1, c, hh, ww}, rng);
    const DSConvParams<double> p = random_dsconv(c, dia, v, rng);
    std::optional<SpatialSize> target;
    if (v == Variant::up) target = SpatialSize{2 * hh + uniform_int(rng, 0, 1), 2 * ww + uniform_int(rng, 0, 1)};

    DSConvCache<double> cache;
    const TD y = dsconv_forward(x, p, v, target, &cache);
    if (min_abs(cache.pre_relu) < kKinkMargin) return -1;
    const TD r = random_tensor(y.shape(), rng);
    const DSConvGrad<double> g = dsconv_backward(cache, p, r);

    const auto fx = [&](const TD& t) { return dot(r, dsconv_forward(t, p, v, target)); };
    const auto field = [&](std::vector<double> DSConvParams<double>::*member) {
        const auto f = [&](const std::vector<double>& vals) {
            DSConvParams<double> q = p;
            q.*member = vals;
            return dot(r, dsconv_forward(x, q, v, target));
        };
        return err(g.dp.*member, numeric_gradient(f, p.*member, h));
    };
    return std::max({err(g.dx, numeric_gradient(fx, x, h)), field(&DSConvParams<double>::w1),
                     field(&DSConvParams<double>::b1), field(&DSConvParams<double>::w2),
                     field(&DSConvParams<double>::b2)});
}

void dsconv_checks(const GradcheckOptions& opt, std::vector<GradcheckResult>& out) {
    std::uint64_t salt = 100;
    for (Variant v : {Variant::plain, Variant::down, Variant::up}) {
        for (int dia = 0; dia <= 4; ++dia) {
            const std::string name = "dsconv[" + std::string(to_string(v)) + ",dia=" + std::to_string(dia) + "]";
            out.push_back(run_cases(name, opt, salt++, [&](Rng& rng) { return dsconv_case(dia, v, opt.step, rng); }));
        }
    }
}

// ---- network ---------------------------------------------------------------------

template <typename F>
void for_each_kernel_cache(const NetworkCache<double>& c, F&& f) {
    for (const auto& m : c.encoder)
        for (const auto& k : m.kernels) f(k);
    for (const auto& k : c.bottleneck.kernels) f(k);
    for (const auto& m : c.decoder)
        for (const auto& k : m.kernels) f(k);
}

TD noisy_target(const TD& x, Rng& rng, double amplitude) {
    std::uniform_real_distribution<double> u(-amplitude, amplitude);
    TD g = x;
    for (double& v : g.data()) v = std::clamp(v + u(rng), 0.0, 1.0);
    return g;
}

double network_case(TieMode tie, SkipMode skip, bool check_input, double h, Rng& rng) {
    NetworkConfig cfg;
    cfg.tie_mode = tie;
    cfg.skip_mode = skip;
    Network<double> net = Network<double>::initialize(cfg, rng());
    net.assign(random_vector(net.param_count(), rng, 0.3));
    const TD x = random_tensor({1, 3, 16, 16}, rng, 0.0, 1.0);
    const TD g = noisy_target(x, rng, 0.1);
    const LossWeights weights;

    NetworkCache<double> cache;
    const std::vector<TD> outs = net_forward(x, net, &cache);
    double closest = INFINITY;
    for_each_kernel_cache(cache, [&](const DSConvCache<double>& k) { closest = std::min(closest, min_abs(k.pre_relu)); });
    if (closest < kKinkMargin) return -1;

    const LossResult<double> loss = total_loss<double>(outs, g, weights);
    const NetworkGrad<double> grad = net_backward<double>(net, cache, loss.d_outputs);

    const auto fp = [&](const std::vector<double>& flat) {
        Network<double> probe = net;
        probe.assign(flat);
        return total_loss<double>(net_forward(x, probe), g, weights, false).breakdown.total;
    };
    const auto fx = [&](const TD& t) {
        return total_loss<double>(net_forward(t, net), g, weights, false).breakdown.total;
    };
    const double e = err(grad.flatten(), numeric_gradient(fp, net.flatten(), h));
    return check_input ? std::max(e, err(grad.dx, numeric_gradient(fx, x, h))) : e;
}

void network_checks(const GradcheckOptions& opt, std::vector<GradcheckResult>& out) {
    std::uint64_t salt = 200;
    for (TieMode tie : {TieMode::mirror_tied, TieMode::untied}) {
        for (SkipMode skip : {SkipMode::literal, SkipMode::single}) {
            const std::string name = "net[" + std::string(to_string(tie)) + "," + std::string(to_string(skip)) + "]";
            // The input gradient is the expensive part; every fifth case covers it.
            int n = 0;
            out.push_back(run_cases(name, opt, salt++, [&](Rng& rng) {
                return network_case(tie, skip, n++ % 5 == 0, opt.step, rng);
            }));
        }
    }
}

// ---- losses ----------------------------------------------------------------------

void loss_checks(const GradcheckOptions& opt, std::vector<GradcheckResult>& out) {
    const double h = opt.step;

    out.push_back(run_cases("smooth_l1", opt, 300, [&](Rng& rng) {
        const Shape s{2, 3, uniform_int(rng, 1, 6), uniform_int(rng, 1, 6)};
        const TD e = random_tensor(s, rng, -2, 2);
        const TD g = random_tensor(s, rng, -2, 2);
        for (std::size_t k = 0; k < e.size(); ++k)
            if (std::abs(std::abs(e[k] - g[k]) - 1.0) < kKinkMargin) return -1.0;
        const auto f = [&](const TD& t) { return smooth_l1(t, g); };
        return err(smooth_l1_backward(e, g), numeric_gradient(f, e, h));
    }));

    int counter = 0;
    out.push_back(run_cases("ms_ssim", opt, 301, [&](Rng& rng) {
        // Every fifth case is large enough for three scales.
        const bool large = (counter++ % 5) == 0;
        const int hh = large ? 44 : uniform_int(rng, 11, 28);
        const int ww = large ? 44 : uniform_int(rng, 11, 28);
        const TD g = random_tensor({1, 3, hh, ww}, rng, 0.0, 1.0);
        const TD e = noisy_target(g, rng, 0.15);
        const auto f = [&](const TD& t) { return ms_ssim_loss(t, g); };
        return err(ms_ssim_loss_backward(e, g), numeric_gradient(f, e, h));
    }));

    out.push_back(run_cases("grad_loss", opt, 302, [&](Rng& rng) {
        const int hh = uniform_int(rng, 8, 20);
        const int ww = uniform_int(rng, 8, 20);
        const TD g = random_tensor({1, 3, hh, ww}, rng, 0.0, 1.0);
        std::vector<TD> outs;
        for (int k = 0; k < 3; ++k) {
            outs.push_back(noisy_target(bilinear_resize(g, std::max(1, hh >> k), std::max(1, ww >> k)), rng, 0.2));
        }
        const std::vector<double> omega{1.0, 1.0, 0.04};
        const std::vector<TD> grads = grad_loss_backward<double>(outs, g, omega);
        double worst = 0;
        for (std::size_t k = 0; k < outs.size(); ++k) {
            const auto f = [&](const TD& t) {
                std::vector<TD> probe = outs;
                probe[k] = t;
                return grad_loss<double>(probe, g, omega);
            };
            worst = std::max(worst, err(grads[k], numeric_gradient(f, outs[k], h)));
        }
        return worst;
    }));

    out.push_back(run_cases("total_loss", opt, 303, [&](Rng& rng) {
        const TD g = random_tensor({1, 3, 32, 32}, rng, 0.0, 1.0);
        std::vector<TD> outs;
        for (int k = 0; k < 3; ++k) outs.push_back(noisy_target(bilinear_resize(g, 32 >> k, 32 >> k), rng, 0.15));
        const LossWeights weights;
        const LossResult<double> res = total_loss<double>(outs, g, weights);
        double worst = 0;
        for (std::size_t k = 0; k < outs.size(); ++k) {
            const auto f = [&](const TD& t) {
                std::vector<TD> probe = outs;
                probe[k] = t;
                return total_loss<double>(probe, g, weights, false).breakdown.total;
            };
            worst = std::max(worst, err(res.d_outputs[k], numeric_gradient(f, outs[k], h)));
        }
        return worst;
    }));
}

} // namespace

std::vector<GradcheckResult> run_gradcheck_suite(const GradcheckOptions& options) {
    if (options.cases < 1) throw StructuralError("gradcheck: cases must be >= 1");
    if (!(options.step > 0)) throw StructuralError("gradcheck: step must be > 0");
    std::vector<GradcheckResult> out;
    primitive_checks(options, out);
    dsconv_checks(options, out);
    network_checks(options, out);
    loss_checks(options, out);
    return out;
}

} // namespace lienet
