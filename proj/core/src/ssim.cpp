#include "lienet/ssim.hpp"

#include <algorithm>
#include <cmath>

namespace lienet {

namespace {

constexpr double kPowerFloor = 1e-6;

// Single-channel image plane.
template <typename T>
struct Plane {
    int h = 0;
    int w = 0;
    std::vector<T> v;

    Plane() = default;
    Plane(int h_, int w_) : h(h_), w(w_), v(static_cast<std::size_t>(h_) * w_, T(0)) {}
    T& operator()(int y, int x) { return v[static_cast<std::size_t>(y) * w + x]; }
    T operator()(int y, int x) const { return v[static_cast<std::size_t>(y) * w + x]; }
};

template <typename T>
Plane<T> plane_of(const Tensor<T>& t, int n) {
    Plane<T> p(t.height(), t.width());
    auto src = t.plane(n, 0);
    std::copy(src.begin(), src.end(), p.v.begin());
    return p;
}

template <typename T>
Plane<T> pool2(const Plane<T>& in) {
    Plane<T> out(in.h / 2, in.w / 2);
    for (int y = 0; y < out.h; ++y)
        for (int x = 0; x < out.w; ++x)
            out(y, x) = (in(2 * y, 2 * x) + in(2 * y, 2 * x + 1) + in(2 * y + 1, 2 * x) +
                         in(2 * y + 1, 2 * x + 1)) *
                        T(0.25);
    return out;
}

template <typename T>
Plane<T> pool2_adjoint(const Plane<T>& d, int h, int w) {
    Plane<T> out(h, w);
    for (int y = 0; y < d.h; ++y)
        for (int x = 0; x < d.w; ++x) {
            const T g = d(y, x) * T(0.25);
            out(2 * y, 2 * x) += g;
            out(2 * y, 2 * x + 1) += g;
            out(2 * y + 1, 2 * x) += g;
            out(2 * y + 1, 2 * x + 1) += g;
        }
    return out;
}

// Valid separable Gaussian filtering.
template <typename T>
class WindowFilter {
public:
    WindowFilter() {
        const auto g = gaussian_window();
        taps_.assign(g.begin(), g.end());
    }
    int size() const { return static_cast<int>(taps_.size()); }

    Plane<T> apply(const Plane<T>& in) const {
        const int k = size();
        Plane<T> tmp(in.h, in.w - k + 1);
        for (int y = 0; y < tmp.h; ++y)
            for (int x = 0; x < tmp.w; ++x) {
                T acc = 0;
                for (int j = 0; j < k; ++j) acc += taps_[j] * in(y, x + j);
                tmp(y, x) = acc;
            }
        Plane<T> out(in.h - k + 1, tmp.w);
        for (int y = 0; y < out.h; ++y)
            for (int x = 0; x < out.w; ++x) {
                T acc = 0;
                for (int i = 0; i < k; ++i) acc += taps_[i] * tmp(y + i, x);
                out(y, x) = acc;
            }
        return out;
    }

    Plane<T> adjoint(const Plane<T>& d, int h, int w) const {
        const int k = size();
        Plane<T> tmp(h, d.w);
        for (int y = 0; y < d.h; ++y)
            for (int x = 0; x < d.w; ++x) {
                const T g = d(y, x);
                for (int i = 0; i < k; ++i) tmp(y + i, x) += taps_[i] * g;
            }
        Plane<T> out(h, w);
        for (int y = 0; y < tmp.h; ++y)
            for (int x = 0; x < tmp.w; ++x) {
                const T g = tmp(y, x);
                for (int j = 0; j < k; ++j) out(y, x + j) += taps_[j] * g;
            }
        return out;
    }

private:
    std::vector<T> taps_;
};

template <typename T>
Plane<T> product(const Plane<T>& a, const Plane<T>& b) {
    Plane<T> out(a.h, a.w);
    for (std::size_t i = 0; i < a.v.size(); ++i) out.v[i] = a.v[i] * b.v[i];
    return out;
}

// Local statistics of one scale, kept for the backward pass.
template <typename T>
struct ScaleStats {
    Plane<T> mu_x, mu_y, sxx, syy, sxy;
    T ssim = 0;  // mean of l * cs
    T cs = 0;    // mean of cs
};

template <typename T>
ScaleStats<T> scale_stats(const WindowFilter<T>& f, const Plane<T>& x, const Plane<T>& y) {
    ScaleStats<T> s;
    s.mu_x = f.apply(x);
    s.mu_y = f.apply(y);
    s.sxx = f.apply(product(x, x));
    s.syy = f.apply(product(y, y));
    s.sxy = f.apply(product(x, y));
    const T c1 = static_cast<T>(SsimConstants::c1);
    const T c2 = static_cast<T>(SsimConstants::c2);
    T ssim_sum = 0;
    T cs_sum = 0;
    for (std::size_t i = 0; i < s.mu_x.v.size(); ++i) {
        const T mx = s.mu_x.v[i];
        const T my = s.mu_y.v[i];
        s.sxx.v[i] -= mx * mx;
        s.syy.v[i] -= my * my;
        s.sxy.v[i] -= mx * my;
        const T l = (T(2) * mx * my + c1) / (mx * mx + my * my + c1);
        const T cs = (T(2) * s.sxy.v[i] + c2) / (s.sxx.v[i] + s.syy.v[i] + c2);
        ssim_sum += l * cs;
        cs_sum += cs;
    }
    const T n = static_cast<T>(s.mu_x.v.size());
    s.ssim = ssim_sum / n;
    s.cs = cs_sum / n;
    return s;
}

// Gradient w.r.t. x of (d_ssim * mean(l*cs) + d_cs * mean(cs)).
template <typename T>
Plane<T> scale_backward(const WindowFilter<T>& f, const ScaleStats<T>& s, const Plane<T>& x,
                        const Plane<T>& y, T d_ssim, T d_cs) {
    const T c1 = static_cast<T>(SsimConstants::c1);
    const T c2 = static_cast<T>(SsimConstants::c2);
    const T n = static_cast<T>(s.mu_x.v.size());
    Plane<T> d_mu(s.mu_x.h, s.mu_x.w);
    Plane<T> d_exx(s.mu_x.h, s.mu_x.w);
    Plane<T> d_exy(s.mu_x.h, s.mu_x.w);
    for (std::size_t i = 0; i < s.mu_x.v.size(); ++i) {
        const T mx = s.mu_x.v[i];
        const T my = s.mu_y.v[i];
        const T p = T(2) * mx * my + c1;
        const T q = mx * mx + my * my + c1;
        const T a = T(2) * s.sxy.v[i] + c2;
        const T b = s.sxx.v[i] + s.syy.v[i] + c2;
        const T l = p / q;
        const T cs = a / b;
        const T g_cs = (d_cs + d_ssim * l) / n;
        const T g_l = d_ssim * cs / n;
        const T g_sxy = g_cs * T(2) / b;
        const T g_sxx = -g_cs * a / (b * b);
        const T g_mx_l = g_l * (T(2) * my * q - p * T(2) * mx) / (q * q);
        d_mu.v[i] = g_mx_l - T(2) * mx * g_sxx - my * g_sxy;
        d_exx.v[i] = g_sxx;
        d_exy.v[i] = g_sxy;
    }
    Plane<T> dx = f.adjoint(d_mu, x.h, x.w);
    const Plane<T> gxx = f.adjoint(d_exx, x.h, x.w);
    const Plane<T> gxy = f.adjoint(d_exy, x.h, x.w);
    for (std::size_t i = 0; i < dx.v.size(); ++i) {
        dx.v[i] += T(2) * x.v[i] * gxx.v[i] + y.v[i] * gxy.v[i];
    }
    return dx;
}

template <typename T>
void require_gray_pair(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
    require_same_shape(a.shape(), b.shape(), what);
    if (a.channels() != 1) {
        throw StructuralError(std::string(what) + ": expected single-channel images, got " +
                              a.shape().str());
    }
}

} // namespace

std::vector<double> gaussian_window(int size, double sigma) {
    std::vector<double> g(size);
    const double center = (size - 1) / 2.0;
    double total = 0;
    for (int i = 0; i < size; ++i) {
        const double d = i - center;
        g[i] = std::exp(-(d * d) / (2 * sigma * sigma));
        total += g[i];
    }
    for (double& v : g) v /= total;
    return g;
}

int ms_ssim_scale_count(int height, int width) {
    const int side = std::min(height, width);
    if (side < SsimConstants::window) {
        throw StructuralError("MS-SSIM: image " + std::to_string(height) + "x" +
                              std::to_string(width) + " smaller than the " +
                              std::to_string(SsimConstants::window) + "-pixel window");
    }
    int scales = 1;
    int h = height;
    int w = width;
    while (scales < static_cast<int>(kMsSsimWeights.size())) {
        h /= 2;
        w /= 2;
        if (std::min(h, w) < SsimConstants::window) break;
        ++scales;
    }
    return scales;
}

std::vector<double> ms_ssim_weights(int scales) {
    std::vector<double> w(kMsSsimWeights.begin(), kMsSsimWeights.begin() + scales);
    if (scales == static_cast<int>(kMsSsimWeights.size())) return w;
    double total = 0;
    for (double v : w) total += v;
    for (double& v : w) v /= total;
    return w;
}

template <typename T>
T ssim_gray(const Tensor<T>& a, const Tensor<T>& b) {
    require_gray_pair(a, b, "ssim");
    if (std::min(a.height(), a.width()) < SsimConstants::window) {
        throw StructuralError("ssim: image " + a.shape().str() + " smaller than the window");
    }
    const WindowFilter<T> f;
    T total = 0;
    for (int n = 0; n < a.batch(); ++n) {
        total += scale_stats(f, plane_of(a, n), plane_of(b, n)).ssim;
    }
    return total / static_cast<T>(a.batch());
}

template <typename T>
T ms_ssim_gray(const Tensor<T>& a, const Tensor<T>& b, Tensor<T>* grad_a) {
    require_gray_pair(a, b, "ms_ssim");
    const int scales = ms_ssim_scale_count(a.height(), a.width());
    const std::vector<double> weights = ms_ssim_weights(scales);
    const WindowFilter<T> f;
    if (grad_a) *grad_a = Tensor<T>(a.shape());

    T total = 0;
    for (int n = 0; n < a.batch(); ++n) {
        std::vector<Plane<T>> xs{plane_of(a, n)};
        std::vector<Plane<T>> ys{plane_of(b, n)};
        std::vector<ScaleStats<T>> stats;
        for (int j = 0; j < scales; ++j) {
            if (j > 0) {
                xs.push_back(pool2(xs.back()));
                ys.push_back(pool2(ys.back()));
            }
            stats.push_back(scale_stats(f, xs[j], ys[j]));
        }
        // Terms: cs at every scale but the last, full SSIM at the last.
        std::vector<T> terms(scales);
        T value = 1;
        for (int j = 0; j < scales; ++j) {
            const T raw = j + 1 < scales ? stats[j].cs : stats[j].ssim;
            terms[j] = std::max(raw, static_cast<T>(kPowerFloor));
            value *= std::pow(terms[j], static_cast<T>(weights[j]));
        }
        total += value;

        if (grad_a) {
            Plane<T> carry;
            for (int j = scales - 1; j >= 0; --j) {
                const T raw = j + 1 < scales ? stats[j].cs : stats[j].ssim;
                // Clamped terms contribute no gradient.
                const T d_term = raw > static_cast<T>(kPowerFloor)
                                     ? value * static_cast<T>(weights[j]) / terms[j]
                                     : T(0);
                const T d_ssim = j + 1 < scales ? T(0) : d_term;
                const T d_cs = j + 1 < scales ? d_term : T(0);
                Plane<T> dx = scale_backward(f, stats[j], xs[j], ys[j], d_ssim, d_cs);
                if (j + 1 < scales) {
                    const Plane<T> up = pool2_adjoint(carry, xs[j].h, xs[j].w);
                    for (std::size_t i = 0; i < dx.v.size(); ++i) dx.v[i] += up.v[i];
                }
                carry = std::move(dx);
            }
            auto dst = grad_a->plane(n, 0);
            for (std::size_t i = 0; i < dst.size(); ++i) {
                dst[i] = carry.v[i] / static_cast<T>(a.batch());
            }
        }
    }
    return total / static_cast<T>(a.batch());
}

template float ssim_gray(const Tensor<float>&, const Tensor<float>&);
template double ssim_gray(const Tensor<double>&, const Tensor<double>&);
template float ms_ssim_gray(const Tensor<float>&, const Tensor<float>&, Tensor<float>*);
template double ms_ssim_gray(const Tensor<double>&, const Tensor<double>&, Tensor<double>*);

} // namespace lienet
