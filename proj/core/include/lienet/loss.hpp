#pragma once

#include <span>
#include <vector>

#include "lienet/tensor.hpp"

namespace lienet {

struct LossWeights {
    double lambda_rec = 0.975;
    double lambda_ms_ssim = 0.025;
    double lambda_grad = 1.0;
    // Per decoder scale, finest first.
    std::vector<double> omega{1.0, 1.0, 0.04};

    void validate() const;
};

struct LossBreakdown {
    double rec = 0;
    double ms_ssim = 0;
    double grad = 0;
    double total = 0;
};

// Mean smooth-L1 of (e - g): 0.5 d^2 when |d| < 1, |d| - 0.5 otherwise.
template <typename T>
T smooth_l1(const Tensor<T>& e, const Tensor<T>& g);
template <typename T>
Tensor<T> smooth_l1_backward(const Tensor<T>& e, const Tensor<T>& g);

// 1 - MS-SSIM on BT.601 grayscale of RGB images.
template <typename T>
T ms_ssim_loss(const Tensor<T>& e, const Tensor<T>& g);
template <typename T>
Tensor<T> ms_ssim_loss_backward(const Tensor<T>& e, const Tensor<T>& g);

// Multi-scale Sobel gradient consistency. outputs[k] is compared against
// the target bilinearly resized to its spatial size; omega[k] weights it.
template <typename T>
T grad_loss(std::span<const Tensor<T>> outputs, const Tensor<T>& g, std::span<const double> omega);
template <typename T>
std::vector<Tensor<T>> grad_loss_backward(std::span<const Tensor<T>> outputs, const Tensor<T>& g,
                                          std::span<const double> omega);

template <typename T>
struct LossResult {
    LossBreakdown breakdown;
    std::vector<Tensor<T>> d_outputs;  // empty unless requested
};

// Weighted sum of reconstruction and MS-SSIM on outputs[0] and the gradient
// term over all outputs.
template <typename T>
LossResult<T> total_loss(std::span<const Tensor<T>> outputs, const Tensor<T>& g,
                         const LossWeights& weights, bool with_gradient = true);

} // namespace lienet
