#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "incgeo/incidence.hpp"

namespace incgeo {

// The project-wide PRNG. Streams and derived seeds are specified exactly so
// any implementation reproduces them from the seed (see README).
struct SplitMix64 {
    std::uint64_t state;
    explicit SplitMix64(std::uint64_t seed) : state(seed) {}
    std::uint64_t next() {
        std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }
};

// Derived stream seed: one SplitMix64 step from seed XOR tag.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag);
// Per-node seed for parallel-safe tree generation.
std::uint64_t node_seed(std::uint64_t seed, int level, std::int64_t ix, std::int64_t iy);

// Lemire multiply-shift bounded draw (n >= 1).
std::uint64_t uniform_below(SplitMix64& rng, std::uint64_t n);

// Explicit Fisher-Yates so shuffles are implementation independent.
template <typename T>
void fisher_yates(std::vector<T>& v, SplitMix64& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(uniform_below(rng, i));
        std::swap(v[i - 1], v[j]);
    }
}

// Quaternary Cantor constructions (branching base 1/4): each node keeps
// ceil(4^s) children chosen by seeded shuffle. Strict form requires an even
// scale exponent; the hybrid form appends one binary level for odd exponents.
SquareFamily cantor_square_set(int k, const mpq_class& s, std::uint64_t seed);
IntervalFamily cantor_interval_set(int k, const mpq_class& s, std::uint64_t seed);
SquareFamily spread_square_set(int k, const mpq_class& s, std::uint64_t seed);   // any k
IntervalFamily spread_interval_set(int k, const mpq_class& s, std::uint64_t seed);  // any k

// Seeded non-uniform set: every node keeps a random number of children biased
// around 2^s. Input material for the uniformisation battery.
SquareFamily random_frostman_set(int k, const mpq_class& s, std::uint64_t seed);

// Radii x directions construction: a Cantor set of radii in [1/2,1), a Cantor
// set of line slopes through the origin, and the squares containing the
// sampled points r*(1, theta).
struct CantorTarget {
    SquareFamily K;
    TubeFamily lines;
    std::vector<std::pair<DyadicTube, SquareFamily>> per_line;
    double dimension_proxy = 0.0;  // log2 |K| / k
};

CantorTarget cantor_target(int k, const mpq_class& s);

enum class SquareKind { Spread, Product, Single };

struct FurstenbergOptions {
    SquareKind squares = SquareKind::Spread;
    bool shared_slopes = false;
    ScaledRational certificate_budget = ScaledRational(mpq_class(256), 0);
    int max_attempts = 4;
    std::size_t max_squares = 0;  // 0: keep the full square family
};

struct FurstenbergConfig {
    NiceConfiguration config;
    TubeFamily universe;
    SpreadCertificate square_certificate;  // of the square family at exponent t
    std::uint64_t seed_used = 0;
};

// A square family of dimension t carrying M = ceil(delta^-s) tubes through
// each square whose slope sets are Cantor-spread of dimension s.
FurstenbergConfig furstenberg_config(int k, const mpq_class& s, const mpq_class& t,
                                     std::uint64_t seed, const FurstenbergOptions& opts = {});

struct GeneratorSpec {
    std::string kind;  // cantor | product | random_frostman | cantor_target | furstenberg
    int k = 6;
    mpq_class s = mpq_class(1, 2);
    mpq_class t = 1;
    std::uint64_t seed = 1;
    bool shared_slopes = false;

    std::string to_json_text() const;
    static GeneratorSpec from_json_text(const std::string& text);
};

}  // namespace incgeo
