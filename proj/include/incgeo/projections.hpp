#pragma once

#include <cstdint>
#include <optional>
#include <tuple>
#include <vector>

#include "incgeo/deltaset.hpp"
#include "incgeo/dyadic.hpp"
#include "incgeo/exact.hpp"
#include "incgeo/tubes.hpp"

namespace incgeo {

// Atomic measures on the dyadic grid with exact rational weights.
struct Measure1D {
    int k = 0;
    std::vector<std::pair<std::int64_t, mpq_class>> atoms;  // sorted by cell, weights > 0
    mpq_class mass;
};

struct Measure2D {
    int k = 0;
    std::vector<std::tuple<std::int64_t, std::int64_t, mpq_class>> atoms;
    mpq_class mass;
};

Measure2D counting_measure(const SquareFamily& P, bool normalized = true);

// Pushforward of the atom centres under pi_sigma: x - sigma y (Appendix) or
// sigma x + y (MainText), binned on the dyadic grid of the same scale.
// sigma = sigma_num * 2^-sigma_k must lie in [-1, 1).
Measure1D project_measure(const Measure2D& mu, std::int64_t sigma_num, int sigma_k,
                          Convention conv);
IntervalFamily project_family(const SquareFamily& P, std::int64_t sigma_num, int sigma_k,
                              Convention conv);

// Kernel values max(dist, delta)^-s are quantised to denominator 2^48
// (correctly rounded down; exactly representable values are kept exact), so
// energies are exact rationals of the quantised kernel.
inline constexpr long kKernelFracBits = 48;

mpq_class riesz_energy(const Measure1D& mu, const mpq_class& s);
mpq_class riesz_energy(const Measure2D& mu, const mpq_class& s);

struct DirectionSelection {
    std::vector<std::int64_t> slopes;  // slope indices at slope_k
    std::vector<mpq_class> energies;
    std::vector<char> selected;        // 1 iff energy <= 2 * mean
    mpq_class threshold;               // 2 * mean
    std::size_t selected_count = 0;
};

// Energies of the projections of the normalised counting measure on P in the
// given directions; keeps every direction with energy at most twice the mean,
// which is always at least half of them.
DirectionSelection good_directions(const SquareFamily& P, const std::vector<std::int64_t>& slopes,
                                   int slope_k, const mpq_class& s,
                                   Convention conv = Convention::Appendix);

// Input slice for the product-structure assembly: a coarse square, the fine
// squares inside it, and per fine square the incident fine tubes lying in the
// reference coarse tube. Appendix convention throughout; fine scale = 2 *
// coarse scale.
struct SliceInput {
    DyadicSquare Q;
    SquareFamily cells;
    std::vector<TubeFamily> tubes_per_cell;
};

struct ProductStructure {
    int coarse_k = 0;
    int fine_k = 0;
    DyadicTube reference;              // normalised to D([0,Delta)^2)
    IntervalFamily heights;            // distinct y-indices at the coarse scale
    struct Slice {
        std::int64_t y = 0;            // coarse y-index
        std::vector<std::int64_t> xs;  // fine x-indices (values x * delta; x/Delta in [0,3])
    };
    std::vector<Slice> slices;
    struct PointTubes {
        std::int64_t x_fine = 0;
        std::int64_t y_coarse = 0;
        TubeFamily tubes;              // coarse tubes through the rescaled point
    };
    std::vector<PointTubes> assignments;
    TubeFamily tube_universe;          // union of all assigned coarse tubes
    std::size_t fine_tube_count = 0;   // distinct fine tubes inside the reference
};

ProductStructure product_structure(const DyadicTube& T0, const std::vector<SliceInput>& slices);

// Exact membership of the rescaled point in its assigned tubes (re-check).
bool verify_product_membership(const ProductStructure& ps);

}  // namespace incgeo
