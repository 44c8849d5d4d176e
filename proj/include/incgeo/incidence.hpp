#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "incgeo/deltaset.hpp"
#include "incgeo/dyadic.hpp"
#include "incgeo/exact.hpp"
#include "incgeo/tubes.hpp"

namespace incgeo {

// A family of squares, each carrying an equally sized spread set of incident
// tubes. The assignment vector is aligned with squares.cells().
struct NiceConfiguration {
    int k = 0;
    mpq_class s;
    ScaledRational C;  // declared bound for every per-square slope-set certificate
    std::int64_t M = 0;
    SquareFamily squares;
    std::vector<TubeFamily> tubes_per_square;

    DyadicSquare square(std::size_t i) const { return squares.square(i); }
};

struct NiceReport {
    bool ok = true;
    std::string issue;
    std::optional<std::size_t> square_index;
    std::optional<DyadicTube> tube;
};

NiceReport validate_nice(const NiceConfiguration& config);

struct IncidenceCount {
    std::int64_t total = 0;
    // histogram aligned with universe.cells(): number of squares carrying it
    std::vector<std::int64_t> per_tube;
};

// Exact count of pairs (p, T) with T in the family of p and T in the universe.
// strict rejects assignment tubes missing from the universe.
IncidenceCount count_incidences(const NiceConfiguration& config, const TubeFamily& universe,
                                bool strict = false);

// (1 - t) / (1 - s), with 0 when s = t = 1.
mpq_class theta(const mpq_class& s, const mpq_class& t);

// Value of an incidence bound kept in exact log2 form; the log factor of the
// budget is supplied separately by the caller.
struct BoundValue {
    LogValue log2_value;
    double approx = 0.0;
};

// max{ sqrt(C_P C_T) (M delta^s)^(theta/2) |T|^(1/2) |P| , |T| }.
BoundValue incidence_upper_bound(const ScaledRational& C_P, const ScaledRational& C_T,
                                 std::int64_t M, int k, const mpq_class& s, const mpq_class& t,
                                 std::int64_t tube_count, std::int64_t square_count);

// (C_P C_T)^-1 M delta^-s (M delta^s)^((t-s)/(1-s)), exponent 1 when s = t = 1.
BoundValue tube_lower_bound(const ScaledRational& C_P, const ScaledRational& C_T, std::int64_t M,
                            int k, const mpq_class& s, const mpq_class& t);

// log2 of the standard budget factor budget * (log2(1/delta))^c.
LogValue log_budget(int k, int c, std::int64_t factor = 1);

struct ElementaryExponents {
    mpq_class wolff;                  // max(1/2 + s, 2s)
    mpq_class elementary_furstenberg; // 2s
    mpq_class target_base;            // 2s; the epsilon improvement has no formula
    bool epsilon_known = false;
};

ElementaryExponents elementary_exponents(const mpq_class& s, const mpq_class& t);

}  // namespace incgeo
