#include "lienet/trainer.hpp"

#include <atomic>
#include <chrono>
#include <cstdio>
#include <exception>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "lienet/checkpoint.hpp"

namespace lienet {

namespace fs = std::filesystem;

void TrainConfig::validate() const {
    if (epochs < 1) throw StructuralError("epochs must be >= 1");
    if (base_lr <= 0) throw StructuralError("learning rate must be > 0");
    if (batch_size < 1) throw StructuralError("batch size must be >= 1");
    if (lr_gamma <= 0) throw StructuralError("lr gamma must be > 0");
    if (lr_step_epochs < 1) throw StructuralError("lr step must be >= 1");
    if (crop < 1) throw StructuralError("crop size must be >= 1");
    if (train_fraction <= 0 || train_fraction > 1) throw StructuralError("train fraction must be in (0,1]");
    if (threads < 1) throw StructuralError("threads must be >= 1");
    loss.validate();
}

double lr_at_epoch(int epoch, const TrainConfig& cfg) {
    if (epoch < 0) throw StructuralError("lr_at_epoch: negative epoch");
    return cfg.base_lr * std::pow(cfg.lr_gamma, epoch / cfg.lr_step_epochs);
}

template <typename T>
void adam_step(std::span<T> params, std::span<const T> grads, AdamState& state, double lr,
               const AdamConfig& cfg) {
    if (params.size() != grads.size()) {
        throw StructuralError("adam_step: " + std::to_string(params.size()) + " parameters but " +
                              std::to_string(grads.size()) + " gradients");
    }
    if (state.m.empty() && state.v.empty()) {
        state.m.assign(params.size(), 0.0);
        state.v.assign(params.size(), 0.0);
    }
    if (state.m.size() != params.size() || state.v.size() != params.size()) {
        throw StructuralError("adam_step: optimizer state does not match the parameter count");
    }
    ++state.t;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = static_cast<double>(grads[i]);
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        const double m_hat = state.m[i] / bc1;
        const double v_hat = state.v[i] / bc2;
        params[i] = static_cast<T>(static_cast<double>(params[i]) -
                                   lr * m_hat / (std::sqrt(v_hat) + cfg.eps));
    }
}

template <typename T>
Tensor<T> center_crop(const Tensor<T>& image, int size, std::string_view name) {
    const Shape s = image.shape();
    if (size < 1 || s.h < size || s.w < size) {
        throw StructuralError("center_crop: image " + std::string(name.empty() ? "" : name) + " " +
                              s.str() + " is smaller than the " + std::to_string(size) + "x" +
                              std::to_string(size) + " crop");
    }
    const int oy = (s.h - size) / 2;
    const int ox = (s.w - size) / 2;
    Tensor<T> out({s.b, s.c, size, size});
    for (int n = 0; n < s.b; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int y = 0; y < size; ++y) {
                const T* src = &image.at(n, c, y + oy, ox);
                std::copy(src, src + size, &out.at(n, c, y, 0));
            }
    return out;
}

std::string EpochLog::to_json_line() const {
    nlohmann::ordered_json j;
    j["epoch"] = epoch;
    j["lr"] = lr;
    j["rec"] = loss.rec;
    j["ms_ssim"] = loss.ms_ssim;
    j["grad"] = loss.grad;
    j["total"] = loss.total;
    j["seconds"] = seconds;
    return j.dump();
}

namespace {

struct ItemResult {
    LossBreakdown loss;
    std::vector<float> grad;
};

ItemResult train_item(const Network<float>& net, const ImagePair& pair, const LossWeights& weights) {
    NetworkCache<float> cache;
    const std::vector<Tensor<float>> outputs = net_forward(pair.low, net, &cache);
    LossResult<float> lr = total_loss(std::span<const Tensor<float>>(outputs), pair.high, weights);
    NetworkGrad<float> g = net_backward(net, cache, std::span<const Tensor<float>>(lr.d_outputs));
    return {lr.breakdown, g.flatten()};
}

// Runs `fn(i)` for i in [0, n) on up to `threads` workers; rethrows the
// first failure by index.
template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
    if (threads <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(n);
    {
        std::vector<std::jthread> pool;
        const int workers = static_cast<int>(std::min<std::size_t>(n, static_cast<std::size_t>(threads)));
        for (int t = 0; t < workers; ++t) {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < n; i = next++) {
                    try {
                        fn(i);
                    } catch (...) {
                        errors[i] = std::current_exception();
                    }
                }
            });
        }
    }
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

bool finite(const LossBreakdown& b) {
    return std::isfinite(b.rec) && std::isfinite(b.ms_ssim) && std::isfinite(b.grad) &&
           std::isfinite(b.total);
}

std::string epoch_file(int epoch) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "checkpoint_epoch_%04d.json", epoch);
    return buf;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << text;
    if (!out) throw IoError("failed writing " + path.string());
}

TrainResult run_training(const std::vector<ImagePair>& pairs, const TrainConfig& cfg,
                         const NetworkConfig& net_cfg, const EpochCallback& on_epoch,
                         const fs::path& out_dir) {
    cfg.validate();
    net_cfg.validate();
    if (pairs.empty()) throw StructuralError("train: no training pairs");
    if (static_cast<int>(cfg.loss.omega.size()) != net_cfg.stages) {
        throw StructuralError("train: omega has " + std::to_string(cfg.loss.omega.size()) +
                              " weights but the network has " + std::to_string(net_cfg.stages) +
                              " decoder scales");
    }

    TrainResult result{Network<float>::initialize(net_cfg, cfg.seed), {}, {}, {}};
    for (const auto& p : pairs) result.train_names.push_back(p.name);
    Network<float>& net = result.net;

    std::ofstream log_file;
    if (!out_dir.empty()) {
        log_file.open(out_dir / "train_log.jsonl", std::ios::binary | std::ios::trunc);
        if (!log_file) throw IoError("cannot open " + (out_dir / "train_log.jsonl").string());
    }

    AdamState adam;
    std::mt19937_64 rng(cfg.seed ^ 0x5DEECE66Dull);
    std::vector<std::size_t> order(pairs.size());
    const std::size_t n_params = net.param_count();

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto start = std::chrono::steady_clock::now();
        const double lr = lr_at_epoch(epoch, cfg);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), rng);

        LossBreakdown epoch_sum;
        int batch_index = 0;
        for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size, ++batch_index) {
            const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(cfg.batch_size));
            const std::size_t count = end - begin;
            std::vector<ItemResult> items(count);
            parallel_for(count, cfg.threads, [&](std::size_t i) {
                items[i] = train_item(net, pairs[order[begin + i]], cfg.loss);
            });

            // Index-ordered reduction keeps results independent of thread count.
            LossBreakdown batch;
            std::vector<float> grad(n_params, 0.0f);
            const float inv = 1.0f / static_cast<float>(count);
            for (const auto& it : items) {
                batch.rec += it.loss.rec;
                batch.ms_ssim += it.loss.ms_ssim;
                batch.grad += it.loss.grad;
                batch.total += it.loss.total;
                for (std::size_t k = 0; k < n_params; ++k) grad[k] += it.grad[k] * inv;
            }
            if (!finite(batch)) {
                throw NonFiniteLoss("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                    std::to_string(batch_index) + " (rec=" + std::to_string(batch.rec) +
                                    " ms_ssim=" + std::to_string(batch.ms_ssim) +
                                    " grad=" + std::to_string(batch.grad) + ")");
            }
            epoch_sum.rec += batch.rec;
            epoch_sum.ms_ssim += batch.ms_ssim;
            epoch_sum.grad += batch.grad;
            epoch_sum.total += batch.total;

            std::vector<float> params = net.flatten();
            adam_step(std::span<float>(params), std::span<const float>(grad), adam, lr, cfg.adam);
            net.assign(params);
        }

        const double n = static_cast<double>(pairs.size());
        EpochLog entry;
        entry.epoch = epoch;
        entry.lr = lr;
        entry.loss = {epoch_sum.rec / n, epoch_sum.ms_ssim / n, epoch_sum.grad / n,
                      epoch_sum.total / n};
        entry.seconds = cfg.log_wall_time
                            ? std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()
                            : 0.0;
        result.log.push_back(entry);
        if (log_file.is_open()) {
            log_file << entry.to_json_line() << '\n';
            log_file.flush();
        }
        if (on_epoch) on_epoch(entry);
        if (!out_dir.empty() && (epoch + 1) % cfg.lr_step_epochs == 0) {
            save_checkpoint(net, out_dir / epoch_file(epoch + 1));
        }
    }
    if (!out_dir.empty()) save_checkpoint(net, out_dir / "checkpoint.json");
    return result;
}

} // namespace

TrainResult train_pairs(const std::vector<ImagePair>& pairs, const TrainConfig& cfg,
                        const NetworkConfig& net_cfg, const EpochCallback& on_epoch) {
    return run_training(pairs, cfg, net_cfg, on_epoch, {});
}

TrainResult train(const fs::path& data_root, const TrainConfig& cfg, const NetworkConfig& net_cfg,
                  const fs::path& out_dir, const EpochCallback& on_epoch) {
    cfg.validate();
    auto [train_set, test_set] = split_dataset(scan_dataset(data_root), cfg.seed, cfg.train_fraction);

    std::vector<ImagePair> pairs;
    for (const auto& paths : train_set) {
        ImagePair p = load_pair(paths);
        p.low = center_crop(p.low, cfg.crop, paths.low.string());
        p.high = center_crop(p.high, cfg.crop, paths.high.string());
        pairs.push_back(std::move(p));
    }

    if (!out_dir.empty()) {
        std::error_code ec;
        fs::create_directories(out_dir, ec);
        if (ec) throw IoError("cannot create output directory " + out_dir.string());
        nlohmann::ordered_json split;
        split["seed"] = cfg.seed;
        split["train"] = nlohmann::json::array();
        split["test"] = nlohmann::json::array();
        for (const auto& p : train_set) split["train"].push_back(p.name);
        for (const auto& p : test_set) split["test"].push_back(p.name);
        write_text(out_dir / "split.json", split.dump(1) + "\n");
    }

    TrainResult result = run_training(pairs, cfg, net_cfg, on_epoch, out_dir);
    for (const auto& p : test_set) result.test_names.push_back(p.name);
    return result;
}

std::vector<std::string> read_split_test_names(const fs::path& split_file) {
    std::ifstream in(split_file, std::ios::binary);
    if (!in) throw IoError("cannot open split file " + split_file.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw IoError("malformed split file " + split_file.string() + ": " + e.what());
    }
    if (!j.contains("test") || !j["test"].is_array()) {
        throw IoError("split file " + split_file.string() + " has no 'test' array");
    }
    return j["test"].get<std::vector<std::string>>();
}

template void adam_step(std::span<float>, std::span<const float>, AdamState&, double,
                        const AdamConfig&);
template void adam_step(std::span<double>, std::span<const double>, AdamState&, double,
                        const AdamConfig&);
template Tensor<float> center_crop(const Tensor<float>&, int, std::string_view);
template Tensor<double> center_crop(const Tensor<double>&, int, std::string_view);

} // namespace lienet
