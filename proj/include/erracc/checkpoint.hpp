#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "erracc/mlp.hpp"

namespace erracc::nn {

// Checkpoint = JSON header (config, parameter-group layout, seed, epoch, plus
// caller extras) followed by the flat little-endian float32 parameter blob in
// Parameters::for_each_tensor order.
struct CheckpointHeader {
    MlpConfig cfg;
    std::uint64_t seed = 0;
    int epoch = 0;
    nlohmann::json extra;  // model-kind specific fields (kind, system, t_max, ...)
};

void save_checkpoint(const std::filesystem::path& path, const CheckpointHeader& header,
                     const Parameters<float>& params);

std::pair<CheckpointHeader, Parameters<float>> load_checkpoint(const std::filesystem::path& path);

// FNV-1a over the raw parameter bytes; used to assert frozen models stay frozen.
std::uint64_t hash_params(const Parameters<float>& params);

}  // namespace erracc::nn
