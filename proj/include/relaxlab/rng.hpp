#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace relaxlab {

using Engine = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Independent stream seed for a named artifact under a master seed.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view path) {
    return splitmix64(splitmix64(master) ^ fnv1a64(path));
}

inline Engine make_engine(std::uint64_t master, std::string_view stream) {
    return Engine(derive_seed(master, stream));
}

}  // namespace relaxlab
