#include "lienet/dsconv.hpp"

#include <cmath>
#include <random>

namespace lienet {

std::string_view to_string(Variant v) {
    switch (v) {
    case Variant::plain: return "plain";
    case Variant::down: return "down";
    case Variant::up: return "up";
    }
    return "?";
}

template <typename T>
DSConvParams<T> DSConvParams<T>::zeros_like() const {
    DSConvParams z;
    z.w1.assign(w1.size(), T(0));
    z.b1.assign(b1.size(), T(0));
    z.w2.assign(w2.size(), T(0));
    z.b2.assign(b2.size(), T(0));
    z.dia = dia;
    z.variant = variant;
    return z;
}

template <typename T>
DSConvParams<T>& DSConvParams<T>::operator+=(const DSConvParams& other) {
    if (other.scalar_count() != scalar_count() || other.w1.size() != w1.size()) {
        throw StructuralError("DSConvParams +=: layout mismatch");
    }
    for (std::size_t c = 0; c < w1.size(); ++c) {
        w1[c] += other.w1[c];
        b1[c] += other.b1[c];
        w2[c] += other.w2[c];
        b2[c] += other.b2[c];
    }
    return *this;
}

template <typename T>
Tensor<T> aggregate_shifts(const Tensor<T>& x, int dia) {
    if (dia < 0) throw StructuralError("aggregate_shifts: dia must be >= 0");
    const Shape s = x.shape();
    const Tensor<T> padded = zero_pad(x, dia);
    Tensor<T> out(s);
    // Window (i, j) starts at ((i+1)*dia, (j+1)*dia) in the padded frame.
    for (int n = 0; n < s.b; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int i = -1; i <= 1; ++i)
                for (int j = -1; j <= 1; ++j) {
                    const int oy = (i + 1) * dia;
                    const int ox = (j + 1) * dia;
                    for (int y = 0; y < s.h; ++y) {
                        const T* src = &padded.at(n, c, y + oy, ox);
                        T* dst = &out.at(n, c, y, 0);
                        for (int xx = 0; xx < s.w; ++xx) dst[xx] += src[xx];
                    }
                }
    return out;
}

template <typename T>
Tensor<T> dsconv_forward(const Tensor<T>& x, const DSConvParams<T>& p, Variant variant,
                         std::optional<SpatialSize> target, DSConvCache<T>* cache) {
    if (x.channels() != p.channels()) {
        throw StructuralError("dsconv_forward: input has " + std::to_string(x.channels()) +
                              " channels, kernel expects " + std::to_string(p.channels()));
    }
    if (p.dia < 0) throw StructuralError("dsconv_forward: negative dilation");

    Tensor<T> input = x;
    if (variant == Variant::up) {
        const SpatialSize size = target.value_or(SpatialSize{2 * x.height(), 2 * x.width()});
        input = bilinear_resize(x, size.h, size.w);
    }
    Tensor<T> pre = channel_affine<T>(input, p.w1, p.b1);
    Tensor<T> feature = relu(pre);
    Tensor<T> agg = aggregate_shifts(feature, p.dia);
    Tensor<T> gate = sigmoid(channel_affine<T>(agg, p.w2, p.b2));
    Tensor<T> y = mul(gate, feature);
    if (variant == Variant::down) y = avg_pool2(y);

    if (cache) {
        cache->input_shape = x.shape();
        cache->variant = variant;
        cache->dia = p.dia;
        cache->x = std::move(input);
        cache->pre_relu = std::move(pre);
        cache->feature = std::move(feature);
        cache->aggregate = std::move(agg);
        cache->gate = std::move(gate);
    }
    return y;
}

template <typename T>
DSConvGrad<T> dsconv_backward(const DSConvCache<T>& cache, const DSConvParams<T>& p,
                              const Tensor<T>& dy) {
    Tensor<T> d_out = dy;
    if (cache.variant == Variant::down) {
        d_out = avg_pool2_backward(dy, cache.feature.shape());
    }
    require_same_shape(d_out.shape(), cache.feature.shape(), "dsconv_backward");
    if (cache.dia != p.dia) throw StructuralError("dsconv_backward: cache/params dilation differ");

    DSConvGrad<T> g{Tensor<T>(cache.input_shape), p.zeros_like()};

    auto [d_gate, d_feature] = mul_backward(cache.gate, cache.feature, d_out);
    const Tensor<T> d_pre2 = sigmoid_backward(cache.gate, d_gate);
    auto conv2 = channel_affine_backward<T>(cache.aggregate, p.w2, d_pre2);
    g.dp.w2 = std::move(conv2.dw);
    g.dp.b2 = std::move(conv2.db);
    // The nine offsets are symmetric, so the aggregation is its own adjoint.
    d_feature += aggregate_shifts(conv2.dx, p.dia);

    const Tensor<T> d_pre1 = relu_backward(cache.pre_relu, d_feature);
    auto conv1 = channel_affine_backward<T>(cache.x, p.w1, d_pre1);
    g.dp.w1 = std::move(conv1.dw);
    g.dp.b1 = std::move(conv1.db);

    if (cache.variant == Variant::up) {
        g.dx = bilinear_resize_backward(conv1.dx, cache.input_shape);
    } else {
        g.dx = std::move(conv1.dx);
    }
    return g;
}

template <typename T>
DSConvParams<T> init_params(int channels, int dia, Variant variant, std::uint64_t seed) {
    if (channels < 1) throw StructuralError("init_params: channels must be >= 1");
    if (dia < 0) throw StructuralError("init_params: dia must be >= 0");
    // Kaiming normal, fan_in mode: std = gain / sqrt(fan_in), gain = sqrt(2) for ReLU,
    // fan_in = 1 for a 1x1 kernel with groups = C.
    const double fan_in = 1.0;
    const double sigma = std::sqrt(2.0) / std::sqrt(fan_in);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, sigma);

    DSConvParams<T> p;
    p.dia = dia;
    p.variant = variant;
    p.w1.resize(channels);
    p.w2.resize(channels);
    for (auto& w : p.w1) w = static_cast<T>(normal(rng) * kInitScale);
    for (auto& w : p.w2) w = static_cast<T>(normal(rng) * kInitScale);
    p.b1.assign(channels, T(0));
    p.b2.assign(channels, T(0));
    return p;
}

std::int64_t dsconv_param_count(std::int64_t channels) {
    const std::int64_t weights = channels;  // C_out * (C_in / groups) * 1 * 1
    const std::int64_t biases = channels;
    return 2 * (weights + biases);
}

std::int64_t dilated_conv_param_count(std::int64_t channels) {
    return channels * channels * 9 + channels;
}

DSConvFlops dsconv_flop_count(std::int64_t channels, std::int64_t height, std::int64_t width) {
    const std::int64_t chw = channels * height * width;
    DSConvFlops f;
    f.conv1 = 4 * chw;
    f.conv1_affine = 2 * chw;
    f.aggregation = 8 * chw;
    f.conv2 = 2 * chw;
    f.gate_mul = chw;
    f.total = f.conv1 + f.aggregation + f.conv2 + f.gate_mul;
    return f;
}

std::int64_t dilated_conv_flop_count(std::int64_t channels, std::int64_t height,
                                     std::int64_t width) {
    return 18 * channels * channels * height * width + channels * height * width;
}

#define LIENET_INSTANTIATE_DSCONV(T)                                                               \
    template struct DSConvParams<T>;                                                               \
    template Tensor<T> aggregate_shifts(const Tensor<T>&, int);                                    \
    template Tensor<T> dsconv_forward(const Tensor<T>&, const DSConvParams<T>&, Variant,           \
                                      std::optional<SpatialSize>, DSConvCache<T>*);                \
    template DSConvGrad<T> dsconv_backward(const DSConvCache<T>&, const DSConvParams<T>&,          \
                                           const Tensor<T>&);                                      \
    template DSConvParams<T> init_params(int, int, Variant, std::uint64_t);

LIENET_INSTANTIATE_DSCONV(float)
LIENET_INSTANTIATE_DSCONV(double)

#undef LIENET_INSTANTIATE_DSCONV

} // namespace lienet
