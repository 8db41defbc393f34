#include "fedpoison/rng.hpp"

namespace fedpoison {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, std::string_view label,
                          std::initializer_list<std::uint64_t> indices) {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    for (unsigned char c : label) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    std::uint64_t s = splitmix64(master ^ splitmix64(h));
    for (std::uint64_t i : indices) s = splitmix64(s ^ splitmix64(i + 0x51ed27ULL));
    return s;
}

Rng make_rng(std::uint64_t master, std::string_view label,
             std::initializer_list<std::uint64_t> indices) {
    return Rng(derive_seed(master, label, indices));
}

}  // namespace fedpoison
