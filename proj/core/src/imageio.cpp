#include "lienet/imageio.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <map>
#include <random>
#include <set>

namespace lienet {

namespace fs = std::filesystem;

Tensor<float> read_image(const fs::path& path) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.string().c_str())) {
        throw IoError("cannot read image " + path.string() + ": " + image.message);
    }
    image.format = PNG_FORMAT_RGBA;
    std::vector<png_byte> buffer(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
        const std::string msg = image.message;
        png_image_free(&image);
        throw IoError("cannot decode image " + path.string() + ": " + msg);
    }
    const int h = static_cast<int>(image.height);
    const int w = static_cast<int>(image.width);
    Tensor<float> t({1, 3, h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const png_byte* px = &buffer[(static_cast<std::size_t>(y) * w + x) * 4];
            for (int c = 0; c < 3; ++c) t.at(0, c, y, x) = static_cast<float>(px[c] / 255.0);
        }
    return t;
}

ImageSize read_image_size(const fs::path& path) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.string().c_str())) {
        throw IoError("cannot read image " + path.string() + ": " + image.message);
    }
    const ImageSize size{static_cast<int>(image.height), static_cast<int>(image.width)};
    png_image_free(&image);
    return size;
}

std::uint8_t quantize(double v) {
    const double clamped = std::clamp(v, 0.0, 1.0);
    return static_cast<std::uint8_t>(std::floor(clamped * 255.0 + 0.5));
}

void write_image(const Tensor<float>& image, const fs::path& path) {
    const Shape s = image.shape();
    if (s.b != 1 || s.c != 3) {
        throw StructuralError("write_image: expected a (1,3,H,W) tensor, got " + s.str());
    }
    std::vector<png_byte> buffer(static_cast<std::size_t>(s.h) * s.w * 3);
    for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x)
            for (int c = 0; c < 3; ++c) {
                buffer[(static_cast<std::size_t>(y) * s.w + x) * 3 + c] =
                    quantize(image.at(0, c, y, x));
            }
    png_image out{};
    out.version = PNG_IMAGE_VERSION;
    out.width = static_cast<png_uint_32>(s.w);
    out.height = static_cast<png_uint_32>(s.h);
    out.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&out, path.string().c_str(), 0, buffer.data(), 0, nullptr)) {
        throw IoError("cannot write image " + path.string() + ": " + out.message);
    }
}

ImagePair load_pair(const ImagePairPaths& paths) {
    ImagePair pair{paths.name, read_image(paths.low), read_image(paths.high)};
    if (!(pair.low.shape() == pair.high.shape())) {
        throw StructuralError("pair '" + paths.name + "': low " + pair.low.shape().str() +
                              " and high " + pair.high.shape().str() + " differ in size");
    }
    return pair;
}

namespace {

std::map<std::string, fs::path> png_files(const fs::path& dir) {
    std::map<std::string, fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        std::string ext = entry.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) {
            return static_cast<char>(std::tolower(c));
        });
        if (ext != ".png") continue;
        files.emplace(entry.path().stem().string(), entry.path());
    }
    return files;
}

} // namespace

std::vector<ImagePairPaths> scan_dataset(const fs::path& root) {
    const fs::path low_dir = root / "low";
    const fs::path high_dir = root / "high";
    for (const auto& d : {low_dir, high_dir}) {
        if (!fs::is_directory(d)) throw IoError("dataset directory missing: " + d.string());
    }
    const auto lows = png_files(low_dir);
    const auto highs = png_files(high_dir);

    std::vector<std::string> unmatched;
    for (const auto& [name, _] : lows)
        if (!highs.contains(name)) unmatched.push_back("low/" + name);
    for (const auto& [name, _] : highs)
        if (!lows.contains(name)) unmatched.push_back("high/" + name);
    if (!unmatched.empty()) {
        std::string msg = "unmatched dataset files in " + root.string() + ":";
        for (const auto& u : unmatched) msg += " " + u;
        throw StructuralError(msg);
    }

    std::vector<ImagePairPaths> pairs;
    for (const auto& [name, low] : lows) pairs.push_back({name, low, highs.at(name)});
    if (pairs.empty()) std::clog << "warning: dataset " << root.string() << " is empty\n";
    return pairs;
}

namespace {

Tensor<float> synth_scene(int size, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> base(0.25, 0.65);
    std::uniform_real_distribution<double> slope(-0.25, 0.3);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_real_distribution<double> color(0.15, 1.0);
    std::uniform_int_distribution<int> shape_count(2, 5);

    Tensor<float> img({1, 3, size, size});
    for (int c = 0; c < 3; ++c) {
        const double a = base(rng);
        const double bx = slope(rng);
        const double by = slope(rng);
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x) {
                const double v = a + bx * x / size + by * y / size;
                img.at(0, c, y, x) = static_cast<float>(std::clamp(v, 0.05, 1.0));
            }
    }
    const int shapes = shape_count(rng);
    for (int s = 0; s < shapes; ++s) {
        const bool circle = unit(rng) < 0.5;
        const double cx = unit(rng) * size;
        const double cy = unit(rng) * size;
        const double r = (0.08 + 0.25 * unit(rng)) * size;
        const double col[3] = {color(rng), color(rng), color(rng)};
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x) {
                const double dx = x + 0.5 - cx;
                const double dy = y + 0.5 - cy;
                const bool inside = circle ? (dx * dx + dy * dy <= r * r)
                                           : (std::abs(dx) <= r && std::abs(dy) <= 0.6 * r);
                if (!inside) continue;
                for (int c = 0; c < 3; ++c) img.at(0, c, y, x) = static_cast<float>(col[c]);
            }
    }
    return img;
}

} // namespace

void synth_pairs(const SynthOptions& options, const fs::path& root) {
    if (options.size < 16) throw StructuralError("synth_pairs: size must be >= 16");
    if (options.count < 1) throw StructuralError("synth_pairs: count must be >= 1");
    std::error_code ec;
    fs::create_directories(root / "low", ec);
    if (ec) throw IoError("cannot create " + (root / "low").string() + ": " + ec.message());
    fs::create_directories(root / "high", ec);
    if (ec) throw IoError("cannot create " + (root / "high").string() + ": " + ec.message());

    std::mt19937_64 rng(options.seed);
    std::uniform_real_distribution<double> gamma_dist(2.0, 5.0);
    std::uniform_real_distribution<double> gain_dist(0.1, 0.5);
    std::uniform_real_distribution<double> sigma_dist(0.0, 0.02);
    std::normal_distribution<double> unit_normal(0.0, 1.0);

    for (int i = 0; i < options.count; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "%04d", i);
        const Tensor<float> high = synth_scene(options.size, rng);
        const double gamma = gamma_dist(rng);
        const double gain = gain_dist(rng);
        const double sigma = sigma_dist(rng);
        Tensor<float> low(high.shape());
        for (std::size_t k = 0; k < high.size(); ++k) {
            const double v = gain * std::pow(static_cast<double>(high[k]), gamma) +
                             sigma * unit_normal(rng);
            low[k] = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
        const std::string file = std::string(name) + ".png";
        write_image(high, root / "high" / file);
        write_image(low, root / "low" / file);
    }
}

} // namespace lienet
