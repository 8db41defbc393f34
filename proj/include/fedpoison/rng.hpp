#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace fedpoison {

// Labeled-stream seeding: every stochastic choice draws from its own engine,
// seeded by mixing the master seed with a stream label and integer indices
// (round, client, ...). Streams never share state, so adding a draw in one
// place does not shift any other stream.
std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t master, std::string_view label,
                          std::initializer_list<std::uint64_t> indices = {});

using Rng = std::mt19937_64;
Rng make_rng(std::uint64_t master, std::string_view label,
             std::initializer_list<std::uint64_t> indices = {});

}  // namespace fedpoison
