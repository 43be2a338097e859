#pragma once

// Slow, literal reference implementations. Nothing here calls into the
// library beyond Tensor storage, so agreement is evidence, not tautology.

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <vector>

#include "lienet/dsconv.hpp"
#include "lienet/network.hpp"

namespace oracle {

using lienet::Shape;
using lienet::Tensor;

template <typename T>
Tensor<T> random_tensor(Shape s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    Tensor<T> t(s);
    for (auto& v : t.data()) v = static_cast<T>(u(rng));
    return t;
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
    double m = 0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        m = std::max(m, std::abs(static_cast<double>(a[k]) - static_cast<double>(b[k])));
    }
    return m;
}

// 3x3 all-ones cross-correlation with dilation `dia`, zero outside the image.
template <typename T>
Tensor<T> dilated_ones_conv(const Tensor<T>& x, int dia) {
    const Shape s = x.shape();
    Tensor<T> out(s);
    for (int n = 0; n < s.b; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int y = 0; y < s.h; ++y)
                for (int xx = 0; xx < s.w; ++xx) {
                    T acc = 0;
                    for (int ky = -1; ky <= 1; ++ky)
                        for (int kx = -1; kx <= 1; ++kx) {
                            const int sy = y + ky * dia;
                            const int sx = xx + kx * dia;
                            if (sy >= 0 && sy < s.h && sx >= 0 && sx < s.w) acc += x.at(n, c, sy, sx);
                        }
                    out.at(n, c, y, xx) = acc;
                }
    return out;
}

template <typename T>
Tensor<T> bilinear(const Tensor<T>& x, int oh, int ow) {
    const Shape s = x.shape();
    if (oh == s.h && ow == s.w) return x;
    const auto src = [](int dst, int in, int out) {
        double v = (dst + 0.5) * (static_cast<double>(in) / out) - 0.5;
        return std::clamp(v, 0.0, static_cast<double>(in - 1));
    };
    Tensor<T> out({s.b, s.c, oh, ow});
    for (int n = 0; n < s.b; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int y = 0; y < oh; ++y)
                for (int xx = 0; xx < ow; ++xx) {
                    const double fy = src(y, s.h, oh);
                    const double fx = src(xx, s.w, ow);
                    const int y0 = static_cast<int>(std::floor(fy));
                    const int x0 = static_cast<int>(std::floor(fx));
                    const int y1 = std::min(y0 + 1, s.h - 1);
                    const int x1 = std::min(x0 + 1, s.w - 1);
                    const double ay = fy - y0;
                    const double ax = fx - x0;
                    const double v = (1 - ay) * ((1 - ax) * x.at(n, c, y0, x0) + ax * x.at(n, c, y0, x1)) +
                                     ay * ((1 - ax) * x.at(n, c, y1, x0) + ax * x.at(n, c, y1, x1));
                    out.at(n, c, y, xx) = static_cast<T>(v);
                }
    return out;
}

template <typename T>
Tensor<T> pool2(const Tensor<T>& x) {
    const Shape s = x.shape();
    Tensor<T> out({s.b, s.c, s.h / 2, s.w / 2});
    for (int n = 0; n < s.b; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int y = 0; y < s.h / 2; ++y)
                for (int xx = 0; xx < s.w / 2; ++xx) {
                    out.at(n, c, y, xx) = (x.at(n, c, 2 * y, 2 * xx) + x.at(n, c, 2 * y, 2 * xx + 1) +
                                           x.at(n, c, 2 * y + 1, 2 * xx) + x.at(n, c, 2 * y + 1, 2 * xx + 1)) /
                                          T(4);
                }
    return out;
}

// Straight transcription of the DSConv definition, one pixel at a time.
template <typename T>
Tensor<T> dsconv(const Tensor<T>& x_in, const lienet::DSConvParams<T>& p, lienet::Variant v,
                 std::optional<lienet::SpatialSize> target = std::nullopt) {
    Tensor<T> x = x_in;
    if (v == lienet::Variant::up) {
        const auto t = target.value_or(lienet::SpatialSize{2 * x.height(), 2 * x.width()});
        x = bilinear(x, t.h, t.w);
    }
    const Shape s = x.shape();
    Tensor<T> xo(s);
    for (int n = 0; n < s.b; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int y = 0; y < s.h; ++y)
                for (int xx = 0; xx < s.w; ++xx) {
                    xo.at(n, c, y, xx) = std::max(T(0), p.w1[c] * x.at(n, c, y, xx) + p.b1[c]);
                }
    // Pad, then crop the nine offset windows and add them up.
    const int d = p.dia;
    Tensor<T> padded({s.b, s.c, s.h + 2 * d, s.w + 2 * d});
    for (int n = 0; n < s.b; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int y = 0; y < s.h; ++y)
                for (int xx = 0; xx < s.w; ++xx) padded.at(n, c, y + d, xx + d) = xo.at(n, c, y, xx);
    Tensor<T> y_out(s);
    for (int n = 0; n < s.b; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int y = 0; y < s.h; ++y)
                for (int xx = 0; xx < s.w; ++xx) {
                    T agg = 0;
                    for (int i = -1; i <= 1; ++i)
                        for (int j = -1; j <= 1; ++j) agg += padded.at(n, c, (i + 1) * d + y, (j + 1) * d + xx);
                    const T gate = T(1) / (T(1) + std::exp(-(p.w2[c] * agg + p.b2[c])));
                    y_out.at(n, c, y, xx) = gate * xo.at(n, c, y, xx);
                }
    return v == lienet::Variant::down ? pool2(y_out) : y_out;
}

template <typename T>
Tensor<T> msrb(const Tensor<T>& x, const lienet::MsrbParams<T>& p, lienet::Variant v, lienet::SkipMode mode,
               const Tensor<T>* skip) {
    std::optional<lienet::SpatialSize> target;
    if (skip) target = lienet::SpatialSize{skip->height(), skip->width()};
    std::optional<Tensor<T>> sum;
    for (const auto& k : p.kernels) {
        Tensor<T> y = dsconv(x, k, v, target);
        if (skip && mode == lienet::SkipMode::literal) {
            for (std::size_t i = 0; i < y.size(); ++i) y[i] += (*skip)[i];
        }
        if (!sum) {
            sum = y;
        } else {
            for (std::size_t i = 0; i < y.size(); ++i) (*sum)[i] += y[i];
        }
    }
    if (skip && mode == lienet::SkipMode::single) {
        for (std::size_t i = 0; i < sum->size(); ++i) (*sum)[i] += (*skip)[i];
    }
    return *sum;
}

// Encoder, bottleneck, decoder with the parameter-set mapping spelled out.
template <typename T>
std::vector<Tensor<T>> network(const Tensor<T>& x, const lienet::Network<T>& net) {
    const auto& cfg = net.config();
    const int L = cfg.stages;
    const bool tied = cfg.tie_mode == lienet::TieMode::mirror_tied;
    const auto& sets = net.stage_params();
    const auto enc = [&](int l) -> const lienet::MsrbParams<T>& { return sets[l - 1]; };
    const auto bott = [&]() -> const lienet::MsrbParams<T>& { return tied ? sets[L - 1] : sets[L]; };
    const auto dec = [&](int l) -> const lienet::MsrbParams<T>& { return tied ? sets[l - 1] : sets[L + l]; };

    std::vector<Tensor<T>> s{x};
    for (int l = 1; l <= L; ++l) s.push_back(msrb(s.back(), enc(l), lienet::Variant::down, cfg.skip_mode, static_cast<const Tensor<T>*>(nullptr)));
    Tensor<T> cur = msrb(s[L], bott(), lienet::Variant::plain, cfg.skip_mode, static_cast<const Tensor<T>*>(nullptr));
    std::vector<Tensor<T>> out(L);
    for (int l = L; l >= 1; --l) {
        Tensor<T> o = msrb(cur, dec(l), lienet::Variant::up, cfg.skip_mode, &s[l - 1]);
        for (std::size_t i = 0; i < o.size(); ++i) o[i] += s[l - 1][i];
        out[l - 1] = o;
        cur = o;
    }
    return out;
}

inline double gray_at(const Tensor<double>& t, int n, int y, int x) {
    if (t.channels() == 1) return t.at(n, 0, y, x);
    return 0.299 * t.at(n, 0, y, x) + 0.587 * t.at(n, 1, y, x) + 0.114 * t.at(n, 2, y, x);
}

struct SsimParts {
    double ssim = 0;
    double cs = 0;
};

// Direct 11x11 Gaussian window at every valid position; no separability.
inline SsimParts ssim_parts(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b) {
    const int H = static_cast<int>(a.size());
    const int W = static_cast<int>(a[0].size());
    double win[11][11];
    double total = 0;
    for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) {
            win[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / (2 * 1.5 * 1.5));
            total += win[i][j];
        }
    const double c1 = 0.01 * 0.01;
    const double c2 = 0.03 * 0.03;
    double ssim_sum = 0;
    double cs_sum = 0;
    int count = 0;
    for (int y = 0; y + 11 <= H; ++y)
        for (int x = 0; x + 11 <= W; ++x) {
            double mx = 0, my = 0;
            for (int i = 0; i < 11; ++i)
                for (int j = 0; j < 11; ++j) {
                    mx += win[i][j] / total * a[y + i][x + j];
                    my += win[i][j] / total * b[y + i][x + j];
                }
            double vx = 0, vy = 0, cxy = 0;
            for (int i = 0; i < 11; ++i)
                for (int j = 0; j < 11; ++j) {
                    const double w = win[i][j] / total;
                    vx += w * (a[y + i][x + j] - mx) * (a[y + i][x + j] - mx);
                    vy += w * (b[y + i][x + j] - my) * (b[y + i][x + j] - my);
                    cxy += w * (a[y + i][x + j] - mx) * (b[y + i][x + j] - my);
                }
            const double l = (2 * mx * my + c1) / (mx * mx + my * my + c1);
            const double cs = (2 * cxy + c2) / (vx + vy + c2);
            ssim_sum += l * cs;
            cs_sum += cs;
            ++count;
        }
    return {ssim_sum / count, cs_sum / count};
}

inline std::vector<std::vector<double>> gray_plane(const Tensor<double>& t, int n) {
    std::vector<std::vector<double>> p(t.height(), std::vector<double>(t.width()));
    for (int y = 0; y < t.height(); ++y)
        for (int x = 0; x < t.width(); ++x) p[y][x] = gray_at(t, n, y, x);
    return p;
}

inline std::vector<std::vector<double>> halve(const std::vector<std::vector<double>>& p) {
    const int H = static_cast<int>(p.size()) / 2;
    const int W = static_cast<int>(p[0].size()) / 2;
    std::vector<std::vector<double>> out(H, std::vector<double>(W));
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            out[y][x] = (p[2 * y][2 * x] + p[2 * y][2 * x + 1] + p[2 * y + 1][2 * x] + p[2 * y + 1][2 * x + 1]) / 4;
    return out;
}

inline double ssim(const Tensor<double>& a, const Tensor<double>& b) {
    double s = 0;
    for (int n = 0; n < a.batch(); ++n) s += ssim_parts(gray_plane(a, n), gray_plane(b, n)).ssim;
    return s / a.batch();
}

inline double ms_ssim(const Tensor<double>& a, const Tensor<double>& b) {
    const double base[5] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
    double result = 0;
    for (int n = 0; n < a.batch(); ++n) {
        auto pa = gray_plane(a, n);
        auto pb = gray_plane(b, n);
        std::vector<SsimParts> parts;
        while (parts.size() < 5 && std::min(pa.size(), pa[0].size()) >= 11) {
            parts.push_back(ssim_parts(pa, pb));
            pa = halve(pa);
            pb = halve(pb);
        }
        double wsum = 0;
        for (std::size_t j = 0; j < parts.size(); ++j) wsum += base[j];
        double v = 1;
        for (std::size_t j = 0; j < parts.size(); ++j) {
            const double term = j + 1 < parts.size() ? parts[j].cs : parts[j].ssim;
            v *= std::pow(std::max(term, 1e-6), base[j] / wsum);
        }
        result += v;
    }
    return result / a.batch();
}

inline double smooth_l1(double d) {
    const double a = std::abs(d);
    return a < 1 ? 0.5 * d * d : a - 0.5;
}

// Kx = [-1 0 1; -2 0 2; -1 0 1], Ky = Kx transposed, zero padding.
inline void sobel(const std::vector<std::vector<double>>& p, std::vector<std::vector<double>>& gx,
                  std::vector<std::vector<double>>& gy) {
    const int H = static_cast<int>(p.size());
    const int W = static_cast<int>(p[0].size());
    const int kx[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
    const auto at = [&](int y, int x) { return (y < 0 || y >= H || x < 0 || x >= W) ? 0.0 : p[y][x]; };
    gx.assign(H, std::vector<double>(W));
    gy.assign(H, std::vector<double>(W));
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j) {
                    gx[y][x] += kx[i][j] * at(y + i - 1, x + j - 1);
                    gy[y][x] += kx[j][i] * at(y + i - 1, x + j - 1);
                }
}

inline double grad_loss(const std::vector<Tensor<double>>& outs, const Tensor<double>& g,
                        const std::vector<double>& omega) {
    double total = 0;
    for (std::size_t k = 0; k < outs.size(); ++k) {
        const Tensor<double> gk = bilinear(g, outs[k].height(), outs[k].width());
        double sx = 0, sy = 0;
        std::size_t count = 0;
        for (int n = 0; n < g.batch(); ++n) {
            std::vector<std::vector<double>> ox, oy, tx, ty;
            sobel(gray_plane(outs[k], n), ox, oy);
            sobel(gray_plane(gk, n), tx, ty);
            for (std::size_t y = 0; y < ox.size(); ++y)
                for (std::size_t x = 0; x < ox[0].size(); ++x) {
                    sx += smooth_l1(ox[y][x] - tx[y][x]);
                    sy += smooth_l1(oy[y][x] - ty[y][x]);
                    ++count;
                }
        }
        total += omega[k] * (sx / count + sy / count);
    }
    return total;
}

inline double psnr(const Tensor<double>& a, const Tensor<double>& b) {
    long double se = 0;
    for (std::size_t k = 0; k < a.size(); ++k) se += (a[k] - b[k]) * (long double)(a[k] - b[k]);
    const long double mse = se / a.size();
    return mse == 0 ? 99.0 : std::min(99.0, static_cast<double>(10 * std::log10(1 / mse)));
}

} // namespace oracle
