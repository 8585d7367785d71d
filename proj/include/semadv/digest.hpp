#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "semadv/tensor.hpp"

namespace semadv {

std::string sha256_hex(const void* data, size_t len);
std::string sha256_hex(const std::string& s);

// Content hash of a set of named tensors (order-sensitive); used to compare
// network states in tests and to fingerprint checkpoints.
template <class T>
std::string state_digest(const std::vector<std::pair<std::string, const Tensor<T>*>>& tensors) {
    std::string buf;
    for (auto& [name, t] : tensors) {
        buf.append(name);
        buf.push_back('\0');
        buf.append(reinterpret_cast<const char*>(t->data()),
                   static_cast<size_t>(t->numel()) * sizeof(T));
    }
    return sha256_hex(buf);
}

}  // namespace semadv
