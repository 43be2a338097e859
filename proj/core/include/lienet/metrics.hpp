#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lienet/network.hpp"

namespace lienet {

inline constexpr double kPsnrCap = 99.0;

// 10 log10(1 / MSE) for images in [0,1]; capped at kPsnrCap.
template <typename T>
double psnr(const Tensor<T>& a, const Tensor<T>& b);

// Single-scale SSIM on BT.601 grayscale (RGB inputs) or the single channel.
template <typename T>
double ssim(const Tensor<T>& a, const Tensor<T>& b);

struct EvalRow {
    std::string name;
    double psnr = 0;
    double ssim = 0;
};

struct EvalReport {
    std::vector<EvalRow> images;
    double mean_psnr = 0;
    double mean_ssim = 0;

    void recompute_means();
    std::string to_json() const;
    std::string to_text() const;
};

// Clamp to [0,1] and run the network; returns the enhanced image.
Tensor<float> enhance(const Network<float>& net, const Tensor<float>& low);

struct EvalOptions {
    // Restrict to these pair names (e.g. a held-out split); all pairs if unset.
    std::optional<std::vector<std::string>> names;
    int threads = 1;
};

// With `net` null the raw low images are scored, which is the baseline an
// enhancer has to beat.
EvalReport evaluate(const std::filesystem::path& root, const Network<float>* net,
                    const EvalOptions& options = {});

EvalReport evaluate(const std::filesystem::path& root, const std::filesystem::path& checkpoint,
                    const EvalOptions& options = {});

} // namespace lienet
