#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "lienet/tensor.hpp"

namespace lienet {

enum class Variant { plain, down, up };

std::string_view to_string(Variant v);

// Dynamic shifted convolution: two per-channel 1x1 convolutions around a
// nine-way shift aggregation and a sigmoid gate. 4C scalars in total.
template <typename T>
struct DSConvParams {
    std::vector<T> w1;
    std::vector<T> b1;
    std::vector<T> w2;
    std::vector<T> b2;
    int dia = 0;
    Variant variant = Variant::plain;

    int channels() const { return static_cast<int>(w1.size()); }
    std::size_t scalar_count() const { return w1.size() + b1.size() + w2.size() + b2.size(); }

    // Zero-valued parameters with the same layout; used as a gradient buffer.
    DSConvParams zeros_like() const;
    DSConvParams& operator+=(const DSConvParams& other);
};

// Intermediates kept by the forward pass.
template <typename T>
struct DSConvCache {
    Shape input_shape;    // caller's input, before any resampling
    Variant variant = Variant::plain;
    int dia = 0;
    Tensor<T> x;          // input at the operating resolution
    Tensor<T> pre_relu;   // w1*x + b1
    Tensor<T> feature;    // X_o = X_r
    Tensor<T> aggregate;  // X_agg
    Tensor<T> gate;       // G
};

template <typename T>
struct DSConvGrad {
    Tensor<T> dx;
    DSConvParams<T> dp;
};

// Sum of the nine dia-shifted windows of x (zero padded by dia).
template <typename T>
Tensor<T> aggregate_shifts(const Tensor<T>& x, int dia);

// `target` is the output spatial size for Variant::up; when absent the
// input is upsampled 2x. Ignored for the other variants.
struct SpatialSize {
    int h = 0;
    int w = 0;
};

template <typename T>
Tensor<T> dsconv_forward(const Tensor<T>& x, const DSConvParams<T>& p, Variant variant,
                         std::optional<SpatialSize> target = std::nullopt,
                         DSConvCache<T>* cache = nullptr);

template <typename T>
Tensor<T> dsconv_forward(const Tensor<T>& x, const DSConvParams<T>& p,
                         std::optional<SpatialSize> target = std::nullopt,
                         DSConvCache<T>* cache = nullptr) {
    return dsconv_forward(x, p, p.variant, target, cache);
}

template <typename T>
DSConvGrad<T> dsconv_backward(const DSConvCache<T>& cache, const DSConvParams<T>& p,
                              const Tensor<T>& dy);

// Kaiming-normal weights (fan_in = 1, ReLU gain) scaled by 0.1; zero biases.
inline constexpr double kInitScale = 0.1;

template <typename T>
DSConvParams<T> init_params(int channels, int dia, Variant variant, std::uint64_t seed);

// ---- cost model -------------------------------------------------------------

std::int64_t dsconv_param_count(std::int64_t channels);
// 3x3 dilated convolution with bias, C -> C channels.
std::int64_t dilated_conv_param_count(std::int64_t channels);

struct DSConvFlops {
    std::int64_t conv1 = 0;        // counted at 4CHW
    std::int64_t conv1_affine = 0; // what a per-channel multiply-add actually costs: 2CHW
    std::int64_t aggregation = 0;
    std::int64_t conv2 = 0;
    std::int64_t gate_mul = 0;
    std::int64_t total = 0;
};

DSConvFlops dsconv_flop_count(std::int64_t channels, std::int64_t height, std::int64_t width);
std::int64_t dilated_conv_flop_count(std::int64_t channels, std::int64_t height,
                                     std::int64_t width);

} // namespace lienet
