#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lienet/dsconv.hpp"

namespace lienet {

enum class TieMode { mirror_tied, untied };
enum class SkipMode { literal, single };

std::string_view to_string(TieMode m);
std::string_view to_string(SkipMode m);
TieMode parse_tie_mode(std::string_view s);
SkipMode parse_skip_mode(std::string_view s);

// "0+1+2+3+4" -> {0,1,2,3,4}; also accepts ',' as a separator.
std::vector<int> parse_dia_set(std::string_view text);
std::string format_dia_set(std::span<const int> dias);

struct NetworkConfig {
    std::vector<int> dia_set{0, 1, 2, 3, 4};
    int stages = 3;
    int channels = 3;
    TieMode tie_mode = TieMode::mirror_tied;
    SkipMode skip_mode = SkipMode::literal;

    // Throws StructuralError on an invalid configuration.
    void validate() const;
    int kappa() const { return static_cast<int>(dia_set.size()); }
    // Number of unique parameter sets: L when tied, 2L+1 when untied.
    int parameter_sets() const;
    bool operator==(const NetworkConfig&) const = default;
};

// Variant recorded on a parameter set: tied sets and untied encoder sets are
// "down", the untied bottleneck is "plain", untied decoder sets are "up".
Variant home_variant(const NetworkConfig& config, std::size_t set_index);

// Multi-scale shifted residual block: one DSConv per dilation rate, summed.
template <typename T>
struct MsrbParams {
    std::vector<DSConvParams<T>> kernels;
    Variant variant = Variant::plain;

    std::size_t scalar_count() const;
    MsrbParams zeros_like() const;
    MsrbParams& operator+=(const MsrbParams& other);
};

template <typename T>
MsrbParams<T> init_msrb(int channels, std::span<const int> dia_set, Variant variant,
                        std::uint64_t seed);

template <typename T>
struct MsrbCache {
    Variant variant = Variant::plain;
    Shape input_shape;
    std::optional<Shape> skip_shape;
    std::vector<DSConvCache<T>> kernels;
};

// `skip` is required for Variant::up (it also fixes the output size) and
// must be absent otherwise. `variant` is the application site's variant;
// in a tied network one parameter set serves several sites.
template <typename T>
Tensor<T> msrb_forward(const Tensor<T>& x, const MsrbParams<T>& p, Variant variant,
                       SkipMode skip_mode, const Tensor<T>* skip, MsrbCache<T>* cache = nullptr);

template <typename T>
Tensor<T> msrb_forward(const Tensor<T>& x, const MsrbParams<T>& p, const Tensor<T>* skip = nullptr,
                       SkipMode skip_mode = SkipMode::literal) {
    return msrb_forward(x, p, p.variant, skip_mode, skip, static_cast<MsrbCache<T>*>(nullptr));
}

template <typename T>
struct MsrbGrad {
    Tensor<T> dx;
    MsrbParams<T> dp;
    std::optional<Tensor<T>> dskip;
};

template <typename T>
MsrbGrad<T> msrb_backward(const MsrbCache<T>& cache, const MsrbParams<T>& p, SkipMode skip_mode,
                          const Tensor<T>& dy);

enum class SiteKind { encoder, bottleneck, decoder };

template <typename T>
class Network {
public:
    Network(NetworkConfig config, std::vector<MsrbParams<T>> stage_params);

    static Network initialize(const NetworkConfig& config, std::uint64_t seed);

    const NetworkConfig& config() const { return config_; }
    const std::vector<MsrbParams<T>>& stage_params() const { return stages_; }
    std::vector<MsrbParams<T>>& stage_params() { return stages_; }

    // Parameter set used at an application site; level is 1-based
    // (ignored for the bottleneck).
    std::size_t param_index(SiteKind kind, int level) const;
    const MsrbParams<T>& site_params(SiteKind kind, int level) const {
        return stages_[param_index(kind, level)];
    }

    std::size_t param_count() const;
    // Flat scalar view in stage/kernel order: w1, b1, w2, b2 per kernel.
    std::vector<T> flatten() const;
    void assign(std::span<const T> flat);

    template <typename U>
    Network<U> cast() const;

private:
    NetworkConfig config_;
    std::vector<MsrbParams<T>> stages_;
};

template <typename T>
struct NetworkCache {
    Shape input_shape;
    std::vector<Shape> encoder_shapes;  // S_0 .. S_L
    std::vector<MsrbCache<T>> encoder;  // level 1..L at index 0..L-1
    MsrbCache<T> bottleneck;
    std::vector<MsrbCache<T>> decoder;  // level 1..L at index 0..L-1
};

// Returns {O_1, ..., O_L}; O_1 is the enhanced image at input resolution.
template <typename T>
std::vector<Tensor<T>> net_forward(const Tensor<T>& x, const Network<T>& net,
                                   NetworkCache<T>* cache = nullptr);

template <typename T>
struct NetworkGrad {
    std::vector<MsrbParams<T>> stages;
    Tensor<T> dx;

    std::vector<T> flatten() const;
};

template <typename T>
NetworkGrad<T> net_backward(const Network<T>& net, const NetworkCache<T>& cache,
                            std::span<const Tensor<T>> d_outputs);

template <typename T>
std::size_t net_param_count(const Network<T>& net) {
    return net.param_count();
}
std::size_t net_param_count(const NetworkConfig& config);

// ---- FLOP accounting ----------------------------------------------------------
// Kernel lines use 15*C*h*w at each DSConv's operating resolution. Auxiliary
// lines are itemized apart from the kernel total:
//   subpath sum   (kappa-1)*C*h*w adds per block
//   skip add      literal: kappa inner + 1 outer, single: 1 inner + 1 outer
//   avg pool      4 ops per output element (3 adds, 1 multiply)
//   bilinear      7 ops per output element (4 multiplies, 3 adds)

struct FlopLine {
    std::string site;  // "encoder1", "bottleneck", "decoder3", ...
    std::string item;  // "dsconv", "subpath_sum", "skip_add", "avg_pool", "bilinear"
    int dia = -1;      // kernel lines only
    int height = 0;
    int width = 0;
    std::int64_t flops = 0;
};

struct FlopReport {
    std::vector<FlopLine> lines;
    std::int64_t kernel_total = 0;
    std::int64_t auxiliary_total = 0;
    std::int64_t grand_total = 0;

    std::string to_text() const;
    std::string to_json() const;
};

FlopReport net_flop_report(const NetworkConfig& config, int height, int width);

} // namespace lienet
