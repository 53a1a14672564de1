#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <thread>
#include <vector>

namespace stsurro {

// SplitMix64: cheap, well-mixed 64-bit stream used to derive independent
// sub-seeds (per row, per restart, per worker) from one user-facing seed.
inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline uint64_t mix_seed(uint64_t seed, uint64_t salt) {
    uint64_t s = seed ^ (0x9e3779b97f4a7c15ULL * (salt + 1));
    return splitmix64(s);
}

// FNV-1a over bytes; used for grid descriptor and training-set hashes.
inline uint64_t fnv1a(const void* data, size_t len, uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline uint64_t fnv1a(const std::string& s, uint64_t h = 0xcbf29ce484222325ULL) {
    return fnv1a(s.data(), s.size(), h);
}

std::string to_hex(uint64_t v);
uint64_t from_hex(const std::string& s);

// Runs fn(i) for i in [0, n) on up to `workers` threads. Each index owns its
// output slot, so results are deterministic regardless of scheduling.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

inline int default_workers() {
    unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}

// Locale-independent float formatting with round-trip precision; all text
// outputs go through this so reruns are byte-identical.
std::string format_double(double v);
double parse_double(const std::string& s);

}  // namespace stsurro
