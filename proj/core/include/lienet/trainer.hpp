#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lienet/imageio.hpp"
#include "lienet/loss.hpp"
#include "lienet/network.hpp"

namespace lienet {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct TrainConfig {
    int epochs = 360;
    double base_lr = 0.01;
    int batch_size = 40;
    double lr_gamma = 0.1;
    int lr_step_epochs = 40;
    int crop = 180;
    double train_fraction = 0.9;  // 9:1 split
    std::uint64_t seed = 0;
    AdamConfig adam;
    LossWeights loss;
    int threads = 1;
    // When false the "seconds" log field is written as 0 so that logs of
    // identical runs compare byte for byte.
    bool log_wall_time = true;

    void validate() const;
};

// base_lr * gamma^floor(epoch / lr_step_epochs), epoch counted from 0.
double lr_at_epoch(int epoch, const TrainConfig& cfg);

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    std::int64_t t = 0;
};

// One bias-corrected Adam update. Moments are kept in double precision.
template <typename T>
void adam_step(std::span<T> params, std::span<const T> grads, AdamState& state, double lr,
               const AdamConfig& cfg = {});

// Crop of size x size at offsets (floor((H-size)/2), floor((W-size)/2)).
template <typename T>
Tensor<T> center_crop(const Tensor<T>& image, int size, std::string_view name = {});

// Seeded shuffle, then the first ceil(fraction * n) items train and the
// rest test.
template <typename Item>
std::pair<std::vector<Item>, std::vector<Item>> split_dataset(std::vector<Item> items,
                                                              std::uint64_t seed,
                                                              double fraction = 0.9) {
    if (items.empty()) throw StructuralError("split_dataset: no items to split");
    std::mt19937_64 rng(seed);
    std::shuffle(items.begin(), items.end(), rng);
    // The epsilon keeps products like 0.9 * 100 from landing just above an integer.
    const auto n = static_cast<double>(items.size());
    auto n_train = static_cast<std::size_t>(std::ceil(fraction * n - 1e-9));
    n_train = std::min(n_train, items.size());
    std::vector<Item> test(items.begin() + static_cast<std::ptrdiff_t>(n_train), items.end());
    items.resize(n_train);
    return {std::move(items), std::move(test)};
}

struct EpochLog {
    int epoch = 0;
    double lr = 0;
    LossBreakdown loss;
    double seconds = 0;

    std::string to_json_line() const;
};

struct TrainResult {
    Network<float> net;
    std::vector<EpochLog> log;
    std::vector<std::string> train_names;
    std::vector<std::string> test_names;
};

using EpochCallback = std::function<void(const EpochLog&)>;

// Trains on already loaded and cropped pairs. Throws NonFiniteLoss naming
// the epoch and batch when the loss stops being finite.
TrainResult train_pairs(const std::vector<ImagePair>& pairs, const TrainConfig& cfg,
                        const NetworkConfig& net_cfg, const EpochCallback& on_epoch = {});

// Full pipeline: scan, split, load, crop, train. When `out_dir` is non-empty
// it receives train_log.jsonl, split.json, checkpoint.json and a
// checkpoint_epoch_NNNN.json every lr_step_epochs epochs.
TrainResult train(const std::filesystem::path& data_root, const TrainConfig& cfg,
                  const NetworkConfig& net_cfg, const std::filesystem::path& out_dir,
                  const EpochCallback& on_epoch = {});

// Names listed under "test" in a split.json written by train().
std::vector<std::string> read_split_test_names(const std::filesystem::path& split_file);

} // namespace lienet
