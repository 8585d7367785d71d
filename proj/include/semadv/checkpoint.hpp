#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "semadv/tensor.hpp"

namespace semadv {

// Flat named-tensor container file (float32, little-endian). Used for
// network weights, norm statistics and optimizer moments.
void save_tensors(const std::filesystem::path& path,
                  const std::vector<std::pair<std::string, const Tensor<float>*>>& tensors);

std::map<std::string, Tensor<float>> load_tensors(const std::filesystem::path& path);

inline std::string checkpoint_name(const std::string& network, const std::string& stage,
                                   int64_t epoch) {
    return network + "_" + stage + "_" + std::to_string(epoch) + ".ckpt";
}

}  // namespace semadv
