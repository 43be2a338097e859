#pragma once

#include <filesystem>
#include <string>

#include "lienet/network.hpp"

namespace lienet {

inline constexpr int kCheckpointFormatVersion = 1;

// JSON document holding the configuration and every scalar. Scalars are
// written as shortest round-trip decimals, so a reload is bit-exact.
template <typename T>
std::string checkpoint_to_json(const Network<T>& net);

// Throws CheckpointError naming the offending field on malformed input,
// a version mismatch, unknown fields or a scalar count inconsistent with
// the configuration.
template <typename T>
Network<T> checkpoint_from_json(const std::string& text);

template <typename T>
void save_checkpoint(const Network<T>& net, const std::filesystem::path& path);

template <typename T>
Network<T> load_checkpoint(const std::filesystem::path& path);

} // namespace lienet
