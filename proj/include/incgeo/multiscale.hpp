#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "incgeo/deltaset.hpp"
#include "incgeo/dyadic.hpp"
#include "incgeo/exact.hpp"

namespace incgeo {

// Cumulative branching profile of a uniform set: f(j) = sum log(N_i)/log(1/B)
// where B = 2^-base_k is the branching base. Values are exact rationals:
// log2(N_i) is quantised to denominator 2^16 (exact for powers of two), so
// all decomposition arithmetic downstream is rational.
struct BranchingFunction {
    int base_k = 2;
    int m = 0;
    std::vector<std::int64_t> counts;  // N_1..N_m (empty when built from values)
    std::vector<mpq_class> values;     // f(0..m), f(0) = 0

    mpq_class at(const mpq_class& x) const;  // piecewise-linear evaluation
    static BranchingFunction from_values(int base_k, std::vector<mpq_class> values);
};

// Validates that P is uniform for the scale ladder base_k, 2*base_k, ..., and
// reads off the per-level branching numbers.
BranchingFunction branching_function(const SquareFamily& P, int base_k);

bool is_uniform(const SquareFamily& P, const std::vector<int>& scale_ks,
                std::vector<std::int64_t>* counts_out = nullptr,
                std::string* witness_out = nullptr);

mpq_class slope_on(const BranchingFunction& f, const mpq_class& a, const mpq_class& b);
bool is_eps_linear(const BranchingFunction& f, const mpq_class& a, const mpq_class& b,
                   const mpq_class& eps);
bool is_eps_superlinear(const BranchingFunction& f, const mpq_class& a, const mpq_class& b,
                        const mpq_class& eps);

enum class WindowTag { Linear, Superlinear };

struct DecInterval {
    mpq_class a, b;
    WindowTag tag = WindowTag::Linear;
    mpq_class slope;
    mpq_class eps_claim;  // tolerance at which the tag re-verifies
};

struct IntervalDecomposition {
    std::vector<DecInterval> intervals;  // ascending, non-overlapping
    mpq_class leftover;                  // measure of [0,m] not covered
    mpq_class tau;                       // min interval length / m
    mpq_class eps;

    nlohmann::ordered_json to_json() const;
};

// Recursive bisection into eps-linear windows with a depth schedule; retries
// at finer granularity until the leftover is at most eps * m (termination is
// guaranteed because unit intervals are 0-linear).
IntervalDecomposition linear_decompose(const BranchingFunction& f, const mpq_class& eps);

// Scan-from-the-right merge: outputs are either eps-linear with slope >= s or
// eps-superlinear with slope exactly s. Requires f(x) >= t x - eps m.
IntervalDecomposition kaufman_decompose(const BranchingFunction& f, const mpq_class& s,
                                        const mpq_class& t, const mpq_class& eps);

// Re-verifies every emitted tag against the exact definitions.
bool verify_tags(const BranchingFunction& f, const IntervalDecomposition& dec, const mpq_class& s);

struct ScaleWindow {
    int a = 0, b = 0;     // window [base^-a, base^-b] boundaries as base exponents
    bool structured = false;
    WindowTag tag = WindowTag::Linear;
    mpq_class dimension;  // exact slope of f on the window (structured only)
};

struct ScaleDecomposition {
    int base_k = 2;
    int m = 0;
    mpq_class s, t, eps;
    mpq_class tau;                     // achieved min structured length / m
    std::vector<ScaleWindow> windows;  // ascending, covering [0, m]

    nlohmann::ordered_json to_json() const;
};

// Window certificate budgets for the structured-scale validation:
// spread <= 2^(2 eps len base_k + 4 base_k), same for the regularity constant.
ScaleDecomposition multiscale_decompose(const SquareFamily& P, const mpq_class& s,
                                        const mpq_class& t, int base_k, const mpq_class& eps);

struct ScaleClasses {
    std::vector<char> cls;  // per window: 'G', 'N', 'B'
    bool mass_ok = false;   // good-scale mass inequality
    mpq_class good_length;  // sum of good window lengths
    mpq_class required;     // eps_G m / 8
};

ScaleClasses classify_scales(const ScaleDecomposition& dec, const SquareFamily& P,
                             const mpq_class& s, const mpq_class& t, const mpq_class& eps_G);

struct UniformizeResult {
    SquareFamily P;
    std::vector<std::int64_t> Ns;  // per level
    mpq_class retained;            // |P'| / |P|
};

// Bottom-to-top pigeonhole onto a uniform subset; asserts the exact loss bound
// |P'| >= (4 log2(1/delta) / n)^-n |P| (logs base 2 throughout).
UniformizeResult uniformize(const SquareFamily& P, const std::vector<int>& scale_ks);

struct WindowClaim {
    int level = 1;  // 1-based window index
    bool regular = false;
    mpq_class dimension;
    ScaledRational C;
    ScaledRational K;  // used when regular
};

// Restores uniformity and per-window structure after passing to a subset of
// relative size 1/L, degrading constants by at most M = L (4 log2(1/delta))^n.
UniformizeResult uniform_refine(const SquareFamily& P, const SquareFamily& P_sub,
                                const std::vector<int>& scale_ks,
                                const std::vector<WindowClaim>& claims);

}  // namespace incgeo
