#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace fedrc {

using Rng = std::mt19937_64;

// Every random draw in the simulator comes from a stream named by a string
// and up to three indices (round, client, ...), derived from one root seed.
// Streams are independent of the order in which they are created, so worker
// count and evaluation order never change results.
std::uint64_t derive_seed(std::uint64_t root, std::string_view stream, std::uint64_t a = 0,
                          std::uint64_t b = 0, std::uint64_t c = 0);

Rng make_rng(std::uint64_t root, std::string_view stream, std::uint64_t a = 0,
             std::uint64_t b = 0, std::uint64_t c = 0);

// Dirichlet draw via normalized Gamma variates.
std::vector<double> sample_dirichlet(std::span<const double> concentration, Rng& rng);

// Uniform sample of `count` distinct indices from [0, n), returned sorted.
std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t count, Rng& rng);

}  // namespace fedrc
