#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lienet/errors.hpp"

namespace lienet {

struct Shape {
    int b = 1;
    int c = 1;
    int h = 1;
    int w = 1;

    std::size_t numel() const {
        return static_cast<std::size_t>(b) * c * h * w;
    }
    std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
    bool operator==(const Shape&) const = default;
    std::string str() const;
};

// Rank-4 BCHW tensor, row-major, dense.
template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() : Tensor(Shape{}) {}
    explicit Tensor(Shape shape, T fill = T(0));
    Tensor(Shape shape, std::vector<T> data);

    const Shape& shape() const { return shape_; }
    int batch() const { return shape_.b; }
    int channels() const { return shape_.c; }
    int height() const { return shape_.h; }
    int width() const { return shape_.w; }
    std::size_t size() const { return data_.size(); }

    std::span<T> data() { return data_; }
    std::span<const T> data() const { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    std::size_t index(int n, int c, int y, int x) const {
        return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + y) * shape_.w + x;
    }
    T& at(int n, int c, int y, int x) { return data_[index(n, c, y, x)]; }
    const T& at(int n, int c, int y, int x) const { return data_[index(n, c, y, x)]; }

    // Contiguous H*W plane of one (batch, channel).
    std::span<T> plane(int n, int c) { return {data_.data() + index(n, c, 0, 0), shape_.plane()}; }
    std::span<const T> plane(int n, int c) const {
        return {data_.data() + index(n, c, 0, 0), shape_.plane()};
    }

    T sum() const;
    T mean() const { return sum() / static_cast<T>(data_.size()); }

    // In-place accumulation; shapes must match.
    Tensor& operator+=(const Tensor& other);
    Tensor& operator*=(T s);

    template <typename U>
    Tensor<U> cast() const {
        std::vector<U> out(data_.begin(), data_.end());
        return Tensor<U>(shape_, std::move(out));
    }

    bool operator==(const Tensor&) const = default;

private:
    Shape shape_{};
    std::vector<T> data_{};
};

// Value with a lazily allocated gradient buffer of the same shape.
template <typename T>
struct GradPair {
    Tensor<T> value;
    std::optional<Tensor<T>> grad;

    explicit GradPair(Tensor<T> v) : value(std::move(v)) {}

    void accumulate(const Tensor<T>& g) {
        if (!(g.shape() == value.shape())) {
            throw StructuralError("GradPair: gradient shape " + g.shape().str() +
                                  " does not match value shape " + value.shape().str());
        }
        if (grad) {
            *grad += g;
        } else {
            grad = g;
        }
    }
    Tensor<T> grad_or_zero() const { return grad ? *grad : Tensor<T>(value.shape()); }
};

void require_same_shape(const Shape& a, const Shape& b, const char* what);

// ---- primitives -----------------------------------------------------------
// Each forward has a matching *_backward taking the upstream gradient.

template <typename T>
Tensor<T> zero_pad(const Tensor<T>& t, int margin);
// Adjoint of zero_pad: crops the interior.
template <typename T>
Tensor<T> zero_pad_backward(const Tensor<T>& dy, int margin);

// Window (i, j) in {-1,0,1}^2 of a tensor padded by `dia`.
template <typename T>
Tensor<T> shifted_window(const Tensor<T>& padded, int i, int j, int dia, int height, int width);
// Scatters the window gradient back into a zero tensor of padded shape.
template <typename T>
Tensor<T> shifted_window_backward(const Tensor<T>& dy, int i, int j, int dia);

// out[n,c] = w[c] * t[n,c] + b[c]  (1x1 convolution with groups = C).
template <typename T>
Tensor<T> channel_affine(const Tensor<T>& t, std::span<const T> w, std::span<const T> b);

template <typename T>
struct ChannelAffineGrad {
    Tensor<T> dx;
    std::vector<T> dw;
    std::vector<T> db;
};
template <typename T>
ChannelAffineGrad<T> channel_affine_backward(const Tensor<T>& x, std::span<const T> w,
                                             const Tensor<T>& dy);

template <typename T>
Tensor<T> relu(const Tensor<T>& t);
// Passes dy where x > 0; zero at x == 0.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& dy);

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& t);
// Takes the forward OUTPUT y: dy * y * (1 - y).
template <typename T>
Tensor<T> sigmoid_backward(const Tensor<T>& y, const Tensor<T>& dy);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
std::pair<Tensor<T>, Tensor<T>> mul_backward(const Tensor<T>& a, const Tensor<T>& b,
                                             const Tensor<T>& dy);

// Mean of disjoint 2x2 blocks; odd trailing row/column dropped.
template <typename T>
Tensor<T> avg_pool2(const Tensor<T>& t);
template <typename T>
Tensor<T> avg_pool2_backward(const Tensor<T>& dy, const Shape& input_shape);

// Half-pixel-center bilinear resampling with edge clamping.
template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& t, int out_h, int out_w);
template <typename T>
Tensor<T> bilinear_resize_backward(const Tensor<T>& dy, const Shape& input_shape);

// BT.601 luma.
inline constexpr double kLumaR = 0.299;
inline constexpr double kLumaG = 0.587;
inline constexpr double kLumaB = 0.114;

template <typename T>
Tensor<T> to_grayscale(const Tensor<T>& rgb);
template <typename T>
Tensor<T> to_grayscale_backward(const Tensor<T>& dgray);

template <typename T>
struct SobelPair {
    Tensor<T> gx;
    Tensor<T> gy;
};
// 3x3 Sobel cross-correlation, zero padding 1, same-size output.
template <typename T>
SobelPair<T> sobel_gradients(const Tensor<T>& gray);
template <typename T>
Tensor<T> sobel_backward(const Tensor<T>& dgx, const Tensor<T>& dgy);

// ---- verification ---------------------------------------------------------

// Central differences of a scalar function, one element at a time.
template <typename T, typename F>
Tensor<T> numeric_gradient(F&& f, const Tensor<T>& x, T h) {
    Tensor<T> grad(x.shape());
    Tensor<T> probe = x;
    for (std::size_t k = 0; k < probe.size(); ++k) {
        const T saved = probe[k];
        probe[k] = saved + h;
        const T up = f(probe);
        probe[k] = saved - h;
        const T down = f(probe);
        probe[k] = saved;
        grad[k] = (up - down) / (T(2) * h);
    }
    return grad;
}

// Same, over a flat parameter vector.
template <typename T, typename F>
std::vector<T> numeric_gradient(F&& f, std::vector<T> x, T h) {
    std::vector<T> grad(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) {
        const T saved = x[k];
        x[k] = saved + h;
        const T up = f(x);
        x[k] = saved - h;
        const T down = f(x);
        x[k] = saved;
        grad[k] = (up - down) / (T(2) * h);
    }
    return grad;
}

// max|a - n| / max(max|a|, max|n|); zero when both vectors vanish.
double relative_error(std::span<const double> analytic, std::span<const double> numeric);

} // namespace lienet
