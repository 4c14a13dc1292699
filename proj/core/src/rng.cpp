#include "fedrc/rng.hpp"

#include <algorithm>
#include <numeric>

namespace fedrc {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t root, std::string_view stream, std::uint64_t a,
                          std::uint64_t b, std::uint64_t c) {
    std::uint64_t h = splitmix64(root);
    h = splitmix64(h ^ fnv1a(stream));
    h = splitmix64(h ^ a);
    h = splitmix64(h ^ (b * 0xd6e8feb86659fd93ULL));
    h = splitmix64(h ^ (c * 0xa0761d6478bd642fULL));
    return h;
}

Rng make_rng(std::uint64_t root, std::string_view stream, std::uint64_t a, std::uint64_t b,
             std::uint64_t c) {
    return Rng(derive_seed(root, stream, a, b, c));
}

std::vector<double> sample_dirichlet(std::span<const double> concentration, Rng& rng) {
    std::vector<double> out(concentration.size());
    double total = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::gamma_distribution<double> gamma(concentration[i], 1.0);
        out[i] = gamma(rng);
        total += out[i];
    }
    if (total <= 0.0) {
        // All draws underflowed (tiny concentrations): put the mass on one coordinate.
        std::uniform_int_distribution<std::size_t> pick(0, out.size() - 1);
        std::fill(out.begin(), out.end(), 0.0);
        out[pick(rng)] = 1.0;
        return out;
    }
    for (auto& v : out) v /= total;
    return out;
}

std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t count, Rng& rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    count = std::min(count, n);
    // Partial Fisher-Yates.
    for (std::size_t i = 0; i < count; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, n - 1);
        std::swap(idx[i], idx[pick(rng)]);
    }
    idx.resize(count);
    std::sort(idx.begin(), idx.end());
    return idx;
}

}  // namespace fedrc
