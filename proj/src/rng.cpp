#include "semadv/rng.hpp"

#include <atomic>

namespace semadv::rng {

namespace {
std::atomic<uint64_t> g_base_seed{0};
}

void seed_all(uint64_t seed) { g_base_seed.store(seed, std::memory_order_relaxed); }

uint64_t base_seed() { return g_base_seed.load(std::memory_order_relaxed); }

Stream derive(std::string_view tag) { return Stream(base_seed(), tag); }

}  // namespace semadv::rng
