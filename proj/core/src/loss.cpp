#include "lienet/loss.hpp"

#include <cmath>

#include "lienet/ssim.hpp"

namespace lienet {

void LossWeights::validate() const {
    if (lambda_rec < 0 || lambda_ms_ssim < 0 || lambda_grad < 0) {
        throw StructuralError("loss weights must be non-negative");
    }
    if (omega.empty()) throw StructuralError("omega needs one weight per network output");
    for (double w : omega) {
        if (w < 0) throw StructuralError("omega weights must be non-negative");
    }
}

template <typename T>
T smooth_l1(const Tensor<T>& e, const Tensor<T>& g) {
    require_same_shape(e.shape(), g.shape(), "smooth_l1");
    T acc = 0;
    for (std::size_t i = 0; i < e.size(); ++i) {
        const T d = e[i] - g[i];
        const T a = std::abs(d);
        acc += a < T(1) ? T(0.5) * d * d : a - T(0.5);
    }
    return acc / static_cast<T>(e.size());
}

template <typename T>
Tensor<T> smooth_l1_backward(const Tensor<T>& e, const Tensor<T>& g) {
    require_same_shape(e.shape(), g.shape(), "smooth_l1_backward");
    Tensor<T> out(e.shape());
    const T inv_n = T(1) / static_cast<T>(e.size());
    for (std::size_t i = 0; i < e.size(); ++i) {
        const T d = e[i] - g[i];
        T slope = d;
        if (d >= T(1)) slope = T(1);
        if (d <= T(-1)) slope = T(-1);
        out[i] = slope * inv_n;
    }
    return out;
}

template <typename T>
T ms_ssim_loss(const Tensor<T>& e, const Tensor<T>& g) {
    require_same_shape(e.shape(), g.shape(), "ms_ssim_loss");
    return T(1) - ms_ssim_gray(to_grayscale(e), to_grayscale(g));
}

template <typename T>
Tensor<T> ms_ssim_loss_backward(const Tensor<T>& e, const Tensor<T>& g) {
    require_same_shape(e.shape(), g.shape(), "ms_ssim_loss_backward");
    Tensor<T> d_gray;
    ms_ssim_gray(to_grayscale(e), to_grayscale(g), &d_gray);
    d_gray *= T(-1);
    return to_grayscale_backward(d_gray);
}

namespace {

template <typename T>
void check_grad_inputs(std::span<const Tensor<T>> outputs, const Tensor<T>& g,
                       std::span<const double> omega) {
    if (outputs.size() != omega.size()) {
        throw StructuralError("grad_loss: " + std::to_string(outputs.size()) + " outputs but " +
                              std::to_string(omega.size()) + " omega weights");
    }
    if (g.channels() != 3) throw StructuralError("grad_loss: target must be RGB, got " + g.shape().str());
    for (const auto& o : outputs) {
        if (o.batch() != g.batch() || o.channels() != 3) {
            throw StructuralError("grad_loss: output " + o.shape().str() +
                                  " incompatible with target " + g.shape().str());
        }
    }
}

template <typename T>
SobelPair<T> target_gradients(const Tensor<T>& g, const Shape& at) {
    return sobel_gradients(to_grayscale(bilinear_resize(g, at.h, at.w)));
}

} // namespace

template <typename T>
T grad_loss(std::span<const Tensor<T>> outputs, const Tensor<T>& g, std::span<const double> omega) {
    check_grad_inputs(outputs, g, omega);
    T total = 0;
    for (std::size_t k = 0; k < outputs.size(); ++k) {
        const SobelPair<T> ref = target_gradients(g, outputs[k].shape());
        const SobelPair<T> out = sobel_gradients(to_grayscale(outputs[k]));
        const T term = smooth_l1(out.gx, ref.gx) + smooth_l1(out.gy, ref.gy);
        total += static_cast<T>(omega[k]) * term;
    }
    return total;
}

template <typename T>
std::vector<Tensor<T>> grad_loss_backward(std::span<const Tensor<T>> outputs, const Tensor<T>& g,
                                          std::span<const double> omega) {
    check_grad_inputs(outputs, g, omega);
    std::vector<Tensor<T>> grads;
    for (std::size_t k = 0; k < outputs.size(); ++k) {
        const SobelPair<T> ref = target_gradients(g, outputs[k].shape());
        const SobelPair<T> out = sobel_gradients(to_grayscale(outputs[k]));
        Tensor<T> dgx = smooth_l1_backward(out.gx, ref.gx);
        Tensor<T> dgy = smooth_l1_backward(out.gy, ref.gy);
        dgx *= static_cast<T>(omega[k]);
        dgy *= static_cast<T>(omega[k]);
        grads.push_back(to_grayscale_backward(sobel_backward(dgx, dgy)));
    }
    return grads;
}

template <typename T>
LossResult<T> total_loss(std::span<const Tensor<T>> outputs, const Tensor<T>& g,
                         const LossWeights& weights, bool with_gradient) {
    weights.validate();
    if (outputs.empty()) throw StructuralError("total_loss: no outputs");
    const Tensor<T>& e = outputs[0];
    require_same_shape(e.shape(), g.shape(), "total_loss");

    LossResult<T> r;
    r.breakdown.rec = static_cast<double>(smooth_l1(e, g));
    r.breakdown.ms_ssim = static_cast<double>(ms_ssim_loss(e, g));
    r.breakdown.grad = static_cast<double>(grad_loss(outputs, g, std::span<const double>(weights.omega)));
    r.breakdown.total = weights.lambda_rec * r.breakdown.rec +
                        weights.lambda_ms_ssim * r.breakdown.ms_ssim +
                        weights.lambda_grad * r.breakdown.grad;

    if (with_gradient) {
        r.d_outputs = grad_loss_backward(outputs, g, std::span<const double>(weights.omega));
        for (auto& d : r.d_outputs) d *= static_cast<T>(weights.lambda_grad);
        Tensor<T> d_rec = smooth_l1_backward(e, g);
        d_rec *= static_cast<T>(weights.lambda_rec);
        r.d_outputs[0] += d_rec;
        if (weights.lambda_ms_ssim != 0) {
            Tensor<T> d_ms = ms_ssim_loss_backward(e, g);
            d_ms *= static_cast<T>(weights.lambda_ms_ssim);
            r.d_outputs[0] += d_ms;
        }
    }
    return r;
}

#define LIENET_INSTANTIATE_LOSS(T)                                                                 \
    template T smooth_l1(const Tensor<T>&, const Tensor<T>&);                                      \
    template Tensor<T> smooth_l1_backward(const Tensor<T>&, const Tensor<T>&);                     \
    template T ms_ssim_loss(const Tensor<T>&, const Tensor<T>&);                                   \
    template Tensor<T> ms_ssim_loss_backward(const Tensor<T>&, const Tensor<T>&);                  \
    template T grad_loss(std::span<const Tensor<T>>, const Tensor<T>&, std::span<const double>);   \
    template std::vector<Tensor<T>> grad_loss_backward(std::span<const Tensor<T>>,                 \
                                                       const Tensor<T>&, std::span<const double>); \
    template LossResult<T> total_loss(std::span<const Tensor<T>>, const Tensor<T>&,                \
                                      const LossWeights&, bool);

LIENET_INSTANTIATE_LOSS(float)
LIENET_INSTANTIATE_LOSS(double)

#undef LIENET_INSTANTIATE_LOSS

} // namespace lienet
