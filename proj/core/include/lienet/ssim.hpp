#pragma once

#include <array>
#include <vector>

#include "lienet/tensor.hpp"

namespace lienet {

// Structural similarity, computed on single-channel images with an 11x11
// Gaussian window (sigma 1.5) evaluated only where it fits ("valid").
struct SsimConstants {
    static constexpr int window = 11;
    static constexpr double sigma = 1.5;
    static constexpr double k1 = 0.01;
    static constexpr double k2 = 0.03;
    static constexpr double range = 1.0;
    static constexpr double c1 = (k1 * range) * (k1 * range);
    static constexpr double c2 = (k2 * range) * (k2 * range);
};

inline constexpr std::array<double, 5> kMsSsimWeights{0.0448, 0.2856, 0.3001, 0.2363, 0.1333};

// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
std::vector<double> gaussian_window(int size = SsimConstants::window,
                                    double sigma = SsimConstants::sigma);

// Largest scale count <= 5 such that the coarsest dyadic level still holds
// one window. Throws StructuralError when even one scale does not fit.
int ms_ssim_scale_count(int height, int width);

// Scale weights for `scales` levels, renormalized to sum to 1.
std::vector<double> ms_ssim_weights(int scales);

// Mean SSIM over a batch of single-channel images.
template <typename T>
T ssim_gray(const Tensor<T>& a, const Tensor<T>& b);

// Mean MS-SSIM over a batch of single-channel images. When `grad_a` is
// non-null it receives d(value)/d(a).
template <typename T>
T ms_ssim_gray(const Tensor<T>& a, const Tensor<T>& b, Tensor<T>* grad_a = nullptr);

} // namespace lienet
