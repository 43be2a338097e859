#include "lienet/metrics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <iomanip>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "lienet/checkpoint.hpp"
#include "lienet/imageio.hpp"
#include "lienet/ssim.hpp"

namespace lienet {

template <typename T>
double psnr(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a.shape(), b.shape(), "psnr");
    double mse = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        mse += d * d;
    }
    mse /= static_cast<double>(a.size());
    if (mse == 0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

template <typename T>
double ssim(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a.shape(), b.shape(), "ssim");
    if (a.channels() == 3) {
        return static_cast<double>(ssim_gray(to_grayscale(a), to_grayscale(b)));
    }
    return static_cast<double>(ssim_gray(a, b));
}

void EvalReport::recompute_means() {
    double p = 0;
    double s = 0;
    for (const auto& r : images) {
        p += r.psnr;
        s += r.ssim;
    }
    const double n = images.empty() ? 1.0 : static_cast<double>(images.size());
    mean_psnr = p / n;
    mean_ssim = s / n;
}

std::string EvalReport::to_json() const {
    nlohmann::json j;
    j["images"] = nlohmann::json::array();
    for (const auto& r : images) {
        j["images"].push_back({{"name", r.name}, {"psnr", r.psnr}, {"ssim", r.ssim}});
    }
    j["mean_psnr"] = mean_psnr;
    j["mean_ssim"] = mean_ssim;
    return j.dump(1) + "\n";
}

std::string EvalReport::to_text() const {
    std::size_t width = 4;
    for (const auto& r : images) width = std::max(width, r.name.size());
    std::ostringstream os;
    os << std::left << std::setw(static_cast<int>(width) + 2) << "name" << std::right
       << std::setw(10) << "psnr" << std::setw(10) << "ssim" << '\n';
    os << std::fixed;
    for (const auto& r : images) {
        os << std::left << std::setw(static_cast<int>(width) + 2) << r.name << std::right
           << std::setw(10) << std::setprecision(3) << r.psnr << std::setw(10)
           << std::setprecision(4) << r.ssim << '\n';
    }
    os << std::left << std::setw(static_cast<int>(width) + 2) << "mean" << std::right
       << std::setw(10) << std::setprecision(3) << mean_psnr << std::setw(10)
       << std::setprecision(4) << mean_ssim << '\n';
    return os.str();
}

Tensor<float> enhance(const Network<float>& net, const Tensor<float>& low) {
    Tensor<float> out = std::move(net_forward(low, net).front());
    for (float& v : out.data()) v = std::clamp(v, 0.0f, 1.0f);
    return out;
}

EvalReport evaluate(const std::filesystem::path& root, const Network<float>* net,
                    const EvalOptions& options) {
    std::vector<ImagePairPaths> pairs = scan_dataset(root);
    if (options.names) {
        const std::set<std::string> wanted(options.names->begin(), options.names->end());
        for (const auto& name : wanted) {
            const bool found = std::any_of(pairs.begin(), pairs.end(),
                                           [&](const ImagePairPaths& p) { return p.name == name; });
            if (!found) throw IoError("evaluation pair '" + name + "' not found in " + root.string());
        }
        std::erase_if(pairs, [&](const ImagePairPaths& p) { return !wanted.contains(p.name); });
    }

    EvalReport report;
    report.images.resize(pairs.size());
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(pairs.size());
    auto worker = [&] {
        for (std::size_t i = next++; i < pairs.size(); i = next++) {
            try {
                const ImagePair pair = load_pair(pairs[i]);
                const Tensor<float> out = net ? enhance(*net, pair.low) : pair.low;
                report.images[i] = {pair.name, psnr(out, pair.high), ssim(out, pair.high)};
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const int threads = std::max(1, options.threads);
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    }
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    report.recompute_means();
    return report;
}

EvalReport evaluate(const std::filesystem::path& root, const std::filesystem::path& checkpoint,
                    const EvalOptions& options) {
    const Network<float> net = load_checkpoint<float>(checkpoint);
    return evaluate(root, &net, options);
}

template double psnr(const Tensor<float>&, const Tensor<float>&);
template double psnr(const Tensor<double>&, const Tensor<double>&);
template double ssim(const Tensor<float>&, const Tensor<float>&);
template double ssim(const Tensor<double>&, const Tensor<double>&);

} // namespace lienet
