#pragma once

#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

#include "incgeo/incidence.hpp"

namespace incgeo {

// In-operation budget exponents: every "up to log factors" loss below is
// asserted against 16 * (log2(1/delta))^4, and the coarse/fine product
// inequality against (log2(1/delta))^8.
inline constexpr std::int64_t kRefineBudgetFactor = 16;
inline constexpr int kRefineBudgetPower = 4;
inline constexpr int kProductBudgetPower = 8;
inline constexpr std::int64_t kThickCertFactor = 64;  // thick-cover certificate budget

struct PigeonholeTrace {
    int level_per_square = 0;   // majority bucket exponent j(p); m1 = 2^j
    std::int64_t m1 = 1;
    mpq_class m2;               // M / m1
    int level_thick = 0;        // selected thick popularity exponent; H = m1 * 2^j
    std::size_t level_classes = 1;
    std::size_t input_squares = 0;
    std::size_t kept_squares = 0;

    nlohmann::ordered_json to_json() const;
};

// Thick-tube covering: a near-majority subset of squares together with a
// spread family of coarse tubes, each carrying at least H/8 fine incidences.
struct ThickCoverResult {
    SquareFamily squares;                      // kept squares
    std::vector<TubeFamily> tubes_per_square;  // their original fine families
    std::vector<std::vector<std::size_t>> thick_of_square;  // indices into `thick`
    TubeFamily thick;                          // coarse family
    mpq_class H;                               // uniform incidence floor
    SpreadCertificate thick_certificate;       // at the configuration exponent
    PigeonholeTrace trace;
};

ThickCoverResult thick_tube_refine(const NiceConfiguration& config, int coarse_k);

struct TubePacket {
    DyadicTube parent;                 // coarse ancestor shared by the members
    std::vector<std::size_t> members;  // indices into the input family
    DyadicTube representative;         // fine tube, slope aligned to the parent
    bool escaped = false;              // intercept one coarse step outside the parent
};

// Partition of a family of tubes through p by coarse ancestor, with one
// aligned representative per packet.
std::vector<TubePacket> tube_packets(const TubeFamily& tubes, const DyadicSquare& p, int kbar);

// Greedy per-slope thinning: keeps every (2*C_sep+2)-th tube by intercept, so
// kept same-slope tubes have intercept gaps > (2*C_sep+1) grid steps.
TubeFamily separated_subset(const TubeFamily& tubes, std::int64_t C_sep = 8);

struct InductionResult {
    // refined fine-scale configuration
    SquareFamily squares;
    std::vector<TubeFamily> tubes_per_square;
    // coarse-scale configuration (scale = coarse_k)
    NiceConfiguration coarse;
    TubeFamily coarse_universe;
    std::int64_t fine_per_thick = 1;  // frozen |universe cap T| class (N_Delta)
    // per coarse square: renormalised fine configuration at scale k - coarse_k
    struct PerSquare {
        DyadicSquare Q;
        NiceConfiguration config;
        TubeFamily universe;
    };
    std::vector<PerSquare> fine;
    // product inequality bookkeeping:
    // |T0|/M * budget >= (|T_Delta|/M_Delta) * max_Q (|T_Q|/M_Q)
    mpq_class product_lhs;
    mpq_class product_rhs;
    std::vector<nlohmann::ordered_json> traces;
};

InductionResult induction_on_scales(const NiceConfiguration& config, int coarse_k);

}  // namespace incgeo
