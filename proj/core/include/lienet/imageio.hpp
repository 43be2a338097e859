#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lienet/tensor.hpp"

namespace lienet {

// 8-bit PNG -> (1,3,H,W) with v/255. Grayscale is promoted, alpha dropped.
Tensor<float> read_image(const std::filesystem::path& path);

// round(clamp(x,0,1)*255), half up, written as 8-bit RGB PNG.
void write_image(const Tensor<float>& image, const std::filesystem::path& path);

std::uint8_t quantize(double v);

struct ImageSize {
    int height = 0;
    int width = 0;
};

// Dimensions from the PNG header without decoding pixels.
ImageSize read_image_size(const std::filesystem::path& path);

struct ImagePairPaths {
    std::string name;
    std::filesystem::path low;
    std::filesystem::path high;
};

struct ImagePair {
    std::string name;
    Tensor<float> low;
    Tensor<float> high;
};

ImagePair load_pair(const ImagePairPaths& paths);

// <root>/low/<name>.png matched with <root>/high/<name>.png, sorted by name.
// Throws StructuralError listing every unmatched basename.
std::vector<ImagePairPaths> scan_dataset(const std::filesystem::path& root);

struct SynthOptions {
    int count = 32;
    int size = 96;
    std::uint64_t seed = 0;
};

// Procedural normal-light scenes and their darkened, noisy counterparts,
// written in the scan_dataset layout.
void synth_pairs(const SynthOptions& options, const std::filesystem::path& root);

} // namespace lienet
