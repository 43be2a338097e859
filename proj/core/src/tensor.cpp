#include "lienet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace lienet {

std::string Shape::str() const {
    std::ostringstream os;
    os << '(' << b << ',' << c << ',' << h << ',' << w << ')';
    return os.str();
}

void require_same_shape(const Shape& a, const Shape& b, const char* what) {
    if (!(a == b)) {
        throw StructuralError(std::string(what) + ": shape mismatch " + a.str() + " vs " + b.str());
    }
}

namespace {

void check_dims(const Shape& s) {
    if (s.b < 1 || s.c < 1 || s.h < 1 || s.w < 1) {
        throw StructuralError("tensor dimensions must be >= 1, got " + s.str());
    }
}

template <typename T>
void check_channel_vector(const Tensor<T>& t, std::size_t n, const char* what) {
    if (n != static_cast<std::size_t>(t.channels())) {
        throw StructuralError(std::string(what) + ": vector length " + std::to_string(n) +
                              " != channel count " + std::to_string(t.channels()));
    }
}

// Per-axis source taps for bilinear resampling.
struct AxisTaps {
    std::vector<int> lo;
    std::vector<int> hi;
    std::vector<double> frac;
};

AxisTaps axis_taps(int in, int out) {
    AxisTaps taps;
    taps.lo.resize(out);
    taps.hi.resize(out);
    taps.frac.resize(out);
    const double scale = static_cast<double>(in) / out;
    for (int d = 0; d < out; ++d) {
        double src = (d + 0.5) * scale - 0.5;
        src = std::clamp(src, 0.0, static_cast<double>(in - 1));
        const int lo = static_cast<int>(std::floor(src));
        taps.lo[d] = lo;
        taps.hi[d] = std::min(lo + 1, in - 1);
        taps.frac[d] = src - lo;
    }
    return taps;
}

constexpr int kSobelX[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
constexpr int kSobelY[3][3] = {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}};

} // namespace

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(shape) {
    check_dims(shape_);
    data_.assign(shape_.numel(), fill);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
    check_dims(shape_);
    if (data_.size() != shape_.numel()) {
        throw StructuralError("tensor data length " + std::to_string(data_.size()) +
                              " does not match shape " + shape_.str());
    }
}

template <typename T>
T Tensor<T>::sum() const {
    T acc = 0;
    for (T v : data_) acc += v;
    return acc;
}

template <typename T>
Tensor<T>& Tensor<T>::operator+=(const Tensor& other) {
    require_same_shape(shape_, other.shape_, "operator+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
}

template <typename T>
Tensor<T>& Tensor<T>::operator*=(T s) {
    for (T& v : data_) v *= s;
    return *this;
}

template <typename T>
Tensor<T> zero_pad(const Tensor<T>& t, int margin) {
    if (margin < 0) throw StructuralError("zero_pad: negative margin");
    if (margin == 0) return t;
    const Shape s = t.shape();
    Tensor<T> out({s.b, s.c, s.h + 2 * margin, s.w + 2 * margin});
    for (int n = 0; n < s.b; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int y = 0; y < s.h; ++y) {
                const T* src = &t.at(n, c, y, 0);
                std::copy(src, src + s.w, &out.at(n, c, y + margin, margin));
            }
    return out;
}

template <typename T>
Tensor<T> zero_pad_backward(const Tensor<T>& dy, int margin) {
    if (margin < 0) throw StructuralError("zero_pad_backward: negative margin");
    const Shape s = dy.shape();
    if (s.h <= 2 * margin || s.w <= 2 * margin) {
        throw StructuralError("zero_pad_backward: gradient " + s.str() + " too small for margin " +
                              std::to_string(margin));
    }
    if (margin == 0) return dy;
    return shifted_window(dy, 0, 0, margin, s.h - 2 * margin, s.w - 2 * margin);
}

template <typename T>
Tensor<T> shifted_window(const Tensor<T>& padded, int i, int j, int dia, int height, int width) {
    const Shape s = padded.shape();
    if (i < -1 || i > 1 || j < -1 || j > 1 || dia < 0) {
        throw StructuralError("shifted_window: offsets must be in {-1,0,1} and dia >= 0");
    }
    if (s.h != height + 2 * dia || s.w != width + 2 * dia) {
        throw StructuralError("shifted_window: padded shape " + s.str() + " inconsistent with H=" +
                              std::to_string(height) + " W=" + std::to_string(width) +
                              " dia=" + std::to_string(dia));
    }
    const int oy = (i + 1) * dia;
    const int ox = (j + 1) * dia;
    Tensor<T> out({s.b, s.c, height, width});
    for (int n = 0; n < s.b; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int y = 0; y < height; ++y) {
                const T* src = &padded.at(n, c, y + oy, ox);
                std::copy(src, src + width, &out.at(n, c, y, 0));
            }
    return out;
}

template <typename T>
Tensor<T> shifted_window_backward(const Tensor<T>& dy, int i, int j, int dia) {
    const Shape s = dy.shape();
    const int oy = (i + 1) * dia;
    const int ox = (j + 1) * dia;
    Tensor<T> out({s.b, s.c, s.h + 2 * dia, s.w + 2 * dia});
    for (int n = 0; n < s.b; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int y = 0; y < s.h; ++y) {
                const T* src = &dy.at(n, c, y, 0);
                std::copy(src, src + s.w, &out.at(n, c, y + oy, ox));
            }
    return out;
}

template <typename T>
Tensor<T> channel_affine(const Tensor<T>& t, std::span<const T> w, std::span<const T> b) {
    check_channel_vector(t, w.size(), "channel_affine weight");
    check_channel_vector(t, b.size(), "channel_affine bias");
    Tensor<T> out(t.shape());
    for (int n = 0; n < t.batch(); ++n)
        for (int c = 0; c < t.channels(); ++c) {
            auto src = t.plane(n, c);
            auto dst = out.plane(n, c);
            for (std::size_t k = 0; k < src.size(); ++k) dst[k] = w[c] * src[k] + b[c];
        }
    return out;
}

template <typename T>
ChannelAffineGrad<T> channel_affine_backward(const Tensor<T>& x, std::span<const T> w,
                                             const Tensor<T>& dy) {
    require_same_shape(x.shape(), dy.shape(), "channel_affine_backward");
    check_channel_vector(x, w.size(), "channel_affine_backward weight");
    ChannelAffineGrad<T> g{Tensor<T>(x.shape()), std::vector<T>(x.channels(), T(0)),
                           std::vector<T>(x.channels(), T(0))};
    for (int n = 0; n < x.batch(); ++n)
        for (int c = 0; c < x.channels(); ++c) {
            auto xs = x.plane(n, c);
            auto ds = dy.plane(n, c);
            auto dx = g.dx.plane(n, c);
            T dw = 0;
            T db = 0;
            for (std::size_t k = 0; k < xs.size(); ++k) {
                dw += ds[k] * xs[k];
                db += ds[k];
                dx[k] = w[c] * ds[k];
            }
            g.dw[c] += dw;
            g.db[c] += db;
        }
    return g;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& t) {
    Tensor<T> out = t;
    for (T& v : out.data()) v = v > T(0) ? v : T(0);
    return out;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& dy) {
    require_same_shape(x.shape(), dy.shape(), "relu_backward");
    Tensor<T> out(x.shape());
    for (std::size_t k = 0; k < x.size(); ++k) out[k] = x[k] > T(0) ? dy[k] : T(0);
    return out;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& t) {
    Tensor<T> out = t;
    for (T& v : out.data()) v = T(1) / (T(1) + std::exp(-v));
    return out;
}

template <typename T>
Tensor<T> sigmoid_backward(const Tensor<T>& y, const Tensor<T>& dy) {
    require_same_shape(y.shape(), dy.shape(), "sigmoid_backward");
    Tensor<T> out(y.shape());
    for (std::size_t k = 0; k < y.size(); ++k) out[k] = dy[k] * y[k] * (T(1) - y[k]);
    return out;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a.shape(), b.shape(), "add");
    Tensor<T> out = a;
    out += b;
    return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a.shape(), b.shape(), "mul");
    Tensor<T> out(a.shape());
    for (std::size_t k = 0; k < a.size(); ++k) out[k] = a[k] * b[k];
    return out;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> mul_backward(const Tensor<T>& a, const Tensor<T>& b,
                                             const Tensor<T>& dy) {
    require_same_shape(a.shape(), dy.shape(), "mul_backward");
    return {mul(dy, b), mul(dy, a)};
}

template <typename T>
Tensor<T> avg_pool2(const Tensor<T>& t) {
    const Shape s = t.shape();
    if (s.h < 2 || s.w < 2) throw StructuralError("avg_pool2: input too small " + s.str());
    const int oh = s.h / 2;
    const int ow = s.w / 2;
    Tensor<T> out({s.b, s.c, oh, ow});
    for (int n = 0; n < s.b; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int y = 0; y < oh; ++y)
                for (int x = 0; x < ow; ++x) {
                    const T sum = t.at(n, c, 2 * y, 2 * x) + t.at(n, c, 2 * y, 2 * x + 1) +
                                  t.at(n, c, 2 * y + 1, 2 * x) + t.at(n, c, 2 * y + 1, 2 * x + 1);
                    out.at(n, c, y, x) = sum * T(0.25);
                }
    return out;
}

template <typename T>
Tensor<T> avg_pool2_backward(const Tensor<T>& dy, const Shape& input_shape) {
    const Shape s = dy.shape();
    if (s.b != input_shape.b || s.c != input_shape.c || s.h != input_shape.h / 2 ||
        s.w != input_shape.w / 2) {
        throw StructuralError("avg_pool2_backward: gradient " + s.str() +
                              " inconsistent with input " + input_shape.str());
    }
    Tensor<T> out(input_shape);
    for (int n = 0; n < s.b; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int y = 0; y < s.h; ++y)
                for (int x = 0; x < s.w; ++x) {
                    const T g = dy.at(n, c, y, x) * T(0.25);
                    out.at(n, c, 2 * y, 2 * x) = g;
                    out.at(n, c, 2 * y, 2 * x + 1) = g;
                    out.at(n, c, 2 * y + 1, 2 * x) = g;
                    out.at(n, c, 2 * y + 1, 2 * x + 1) = g;
                }
    return out;
}

template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& t, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1) throw StructuralError("bilinear_resize: target size must be >= 1");
    const Shape s = t.shape();
    if (out_h == s.h && out_w == s.w) return t;
    const AxisTaps ty = axis_taps(s.h, out_h);
    const AxisTaps tx = axis_taps(s.w, out_w);
    Tensor<T> out({s.b, s.c, out_h, out_w});
    for (int n = 0; n < s.b; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int y = 0; y < out_h; ++y) {
                const T fy = static_cast<T>(ty.frac[y]);
                const T* r0 = &t.at(n, c, ty.lo[y], 0);
                const T* r1 = &t.at(n, c, ty.hi[y], 0);
                T* dst = &out.at(n, c, y, 0);
                for (int x = 0; x < out_w; ++x) {
                    const T fx = static_cast<T>(tx.frac[x]);
                    const int x0 = tx.lo[x];
                    const int x1 = tx.hi[x];
                    const T top = (T(1) - fx) * r0[x0] + fx * r0[x1];
                    const T bot = (T(1) - fx) * r1[x0] + fx * r1[x1];
                    dst[x] = (T(1) - fy) * top + fy * bot;
                }
            }
    return out;
}

template <typename T>
Tensor<T> bilinear_resize_backward(const Tensor<T>& dy, const Shape& input_shape) {
    const Shape s = dy.shape();
    if (s.b != input_shape.b || s.c != input_shape.c) {
        throw StructuralError("bilinear_resize_backward: gradient " + s.str() +
                              " inconsistent with input " + input_shape.str());
    }
    if (s.h == input_shape.h && s.w == input_shape.w) return dy;
    const AxisTaps ty = axis_taps(input_shape.h, s.h);
    const AxisTaps tx = axis_taps(input_shape.w, s.w);
    Tensor<T> out(input_shape);
    for (int n = 0; n < s.b; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int y = 0; y < s.h; ++y) {
                const T fy = static_cast<T>(ty.frac[y]);
                T* r0 = &out.at(n, c, ty.lo[y], 0);
                T* r1 = &out.at(n, c, ty.hi[y], 0);
                const T* src = &dy.at(n, c, y, 0);
                for (int x = 0; x < s.w; ++x) {
                    const T fx = static_cast<T>(tx.frac[x]);
                    const T g = src[x];
                    r0[tx.lo[x]] += (T(1) - fy) * (T(1) - fx) * g;
                    r0[tx.hi[x]] += (T(1) - fy) * fx * g;
                    r1[tx.lo[x]] += fy * (T(1) - fx) * g;
                    r1[tx.hi[x]] += fy * fx * g;
                }
            }
    return out;
}

template <typename T>
Tensor<T> to_grayscale(const Tensor<T>& rgb) {
    const Shape s = rgb.shape();
    if (s.c != 3) throw StructuralError("to_grayscale: expected 3 channels, got " + s.str());
    Tensor<T> out({s.b, 1, s.h, s.w});
    const T wr = static_cast<T>(kLumaR);
    const T wg = static_cast<T>(kLumaG);
    const T wb = static_cast<T>(kLumaB);
    for (int n = 0; n < s.b; ++n) {
        auto r = rgb.plane(n, 0);
        auto g = rgb.plane(n, 1);
        auto b = rgb.plane(n, 2);
        auto dst = out.plane(n, 0);
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] = wr * r[k] + wg * g[k] + wb * b[k];
    }
    return out;
}

template <typename T>
Tensor<T> to_grayscale_backward(const Tensor<T>& dgray) {
    const Shape s = dgray.shape();
    if (s.c != 1) throw StructuralError("to_grayscale_backward: expected 1 channel, got " + s.str());
    Tensor<T> out({s.b, 3, s.h, s.w});
    const T weights[3] = {static_cast<T>(kLumaR), static_cast<T>(kLumaG), static_cast<T>(kLumaB)};
    for (int n = 0; n < s.b; ++n) {
        auto src = dgray.plane(n, 0);
        for (int c = 0; c < 3; ++c) {
            auto dst = out.plane(n, c);
            for (std::size_t k = 0; k < dst.size(); ++k) dst[k] = weights[c] * src[k];
        }
    }
    return out;
}

template <typename T>
SobelPair<T> sobel_gradients(const Tensor<T>& gray) {
    const Shape s = gray.shape();
    if (s.c != 1) throw StructuralError("sobel_gradients: expected 1 channel, got " + s.str());
    SobelPair<T> out{Tensor<T>(s), Tensor<T>(s)};
    for (int n = 0; n < s.b; ++n)
        for (int y = 0; y < s.h; ++y)
            for (int x = 0; x < s.w; ++x) {
                T gx = 0;
                T gy = 0;
                for (int dy = -1; dy <= 1; ++dy) {
                    const int yy = y + dy;
                    if (yy < 0 || yy >= s.h) continue;
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int xx = x + dx;
                        if (xx < 0 || xx >= s.w) continue;
                        const T v = gray.at(n, 0, yy, xx);
                        gx += static_cast<T>(kSobelX[dy + 1][dx + 1]) * v;
                        gy += static_cast<T>(kSobelY[dy + 1][dx + 1]) * v;
                    }
                }
                out.gx.at(n, 0, y, x) = gx;
                out.gy.at(n, 0, y, x) = gy;
            }
    return out;
}

template <typename T>
Tensor<T> sobel_backward(const Tensor<T>& dgx, const Tensor<T>& dgy) {
    require_same_shape(dgx.shape(), dgy.shape(), "sobel_backward");
    const Shape s = dgx.shape();
    if (s.c != 1) throw StructuralError("sobel_backward: expected 1 channel, got " + s.str());
    Tensor<T> out(s);
    for (int n = 0; n < s.b; ++n)
        for (int y = 0; y < s.h; ++y)
            for (int x = 0; x < s.w; ++x) {
                const T gx = dgx.at(n, 0, y, x);
                const T gy = dgy.at(n, 0, y, x);
                for (int dy = -1; dy <= 1; ++dy) {
                    const int yy = y + dy;
                    if (yy < 0 || yy >= s.h) continue;
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int xx = x + dx;
                        if (xx < 0 || xx >= s.w) continue;
                        out.at(n, 0, yy, xx) += static_cast<T>(kSobelX[dy + 1][dx + 1]) * gx +
                                                static_cast<T>(kSobelY[dy + 1][dx + 1]) * gy;
                    }
                }
            }
    return out;
}

double relative_error(std::span<const double> analytic, std::span<const double> numeric) {
    if (analytic.size() != numeric.size()) {
        throw StructuralError("relative_error: length mismatch");
    }
    double diff = 0;
    double scale = 0;
    for (std::size_t k = 0; k < analytic.size(); ++k) {
        diff = std::max(diff, std::abs(analytic[k] - numeric[k]));
        scale = std::max({scale, std::abs(analytic[k]), std::abs(numeric[k])});
    }
    if (scale == 0) return 0;
    return diff / scale;
}

#define LIENET_INSTANTIATE_TENSOR(T)                                                               \
    template class Tensor<T>;                                                                      \
    template Tensor<T> zero_pad(const Tensor<T>&, int);                                            \
    template Tensor<T> zero_pad_backward(const Tensor<T>&, int);                                   \
    template Tensor<T> shifted_window(const Tensor<T>&, int, int, int, int, int);                  \
    template Tensor<T> shifted_window_backward(const Tensor<T>&, int, int, int);                   \
    template Tensor<T> channel_affine(const Tensor<T>&, std::span<const T>, std::span<const T>);   \
    template ChannelAffineGrad<T> channel_affine_backward(const Tensor<T>&, std::span<const T>,    \
                                                          const Tensor<T>&);                       \
    template Tensor<T> relu(const Tensor<T>&);                                                     \
    template Tensor<T> relu_backward(const Tensor<T>&, const Tensor<T>&);                          \
    template Tensor<T> sigmoid(const Tensor<T>&);                                                  \
    template Tensor<T> sigmoid_backward(const Tensor<T>&, const Tensor<T>&);                       \
    template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                    \
    template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                    \
    template std::pair<Tensor<T>, Tensor<T>> mul_backward(const Tensor<T>&, const Tensor<T>&,      \
                                                          const Tensor<T>&);                       \
    template Tensor<T> avg_pool2(const Tensor<T>&);                                                \
    template Tensor<T> avg_pool2_backward(const Tensor<T>&, const Shape&);                         \
    template Tensor<T> bilinear_resize(const Tensor<T>&, int, int);                                \
    template Tensor<T> bilinear_resize_backward(const Tensor<T>&, const Shape&);                   \
    template Tensor<T> to_grayscale(const Tensor<T>&);                                             \
    template Tensor<T> to_grayscale_backward(const Tensor<T>&);                                    \
    template SobelPair<T> sobel_gradients(const Tensor<T>&);                                       \
    template Tensor<T> sobel_backward(const Tensor<T>&, const Tensor<T>&);

LIENET_INSTANTIATE_TENSOR(float)
LIENET_INSTANTIATE_TENSOR(double)

#undef LIENET_INSTANTIATE_TENSOR

} // namespace lienet
