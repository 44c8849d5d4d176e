#pragma once

#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "incgeo/dyadic.hpp"
#include "incgeo/exact.hpp"
#include "incgeo/tubes.hpp"

namespace incgeo {

// Best constant C with |P cap Q|_delta <= C |P|_delta r^s over all dyadic
// r in [delta, 1] and all r-squares Q, together with the witnessing square.
struct SpreadCertificate {
    mpq_class s;
    ScaledRational C;          // (witness_count / family_size) * 2^(witness_level * s)
    int witness_level = 0;     // r = 2^-level
    std::int64_t witness_x = 0;
    std::int64_t witness_y = 0;  // 0 for interval families
    std::int64_t witness_count = 0;
    std::int64_t family_size = 0;

    nlohmann::ordered_json to_json() const;
};

SpreadCertificate spread_certificate(const SquareFamily& P, const mpq_class& s);
SpreadCertificate spread_certificate(const IntervalFamily& P, const mpq_class& s);
// Tube families are measured through their dual parameter squares.
SpreadCertificate spread_certificate(const TubeFamily& P, const mpq_class& s);

template <typename Family>
bool is_delta_set(const Family& P, const mpq_class& s, const ScaledRational& C) {
    return spread_certificate(P, s).C <= C;
}

// Non-concentration plus economy at the intermediate scale 2^-k/2:
// K = |P|_{sqrt(delta)} * delta^{s/2} exactly. Requires an even exponent.
struct RegularityCertificate {
    SpreadCertificate spread;
    ScaledRational K;
    std::int64_t half_scale_count = 0;
};

RegularityCertificate regularity_certificate(const SquareFamily& P, const mpq_class& s);

// Content lower bound via the certificate route: kappa_hat = 1 / C.
ScaledRational content_lower_bound(const SquareFamily& B, const mpq_class& s);
ScaledRational content_lower_bound(const IntervalFamily& B, const mpq_class& s);

// Spread subset extraction: top-down tree selection keeping at most
// ceil(2^s) children per node (ranked by subtree count, canonical ties),
// with a per-level global cap and a final trim enforcing |P| <= 2^(k s).
// The output's certificate is asserted <= kFrostmanFactor / kappa_hat.
inline constexpr std::int64_t kFrostmanFactor = 64;

SquareFamily frostman_extract(const SquareFamily& B, const mpq_class& s);
IntervalFamily frostman_extract(const IntervalFamily& B, const mpq_class& s);

// Thin subset with at most 2^(k s) members and certificate within
// kFrostmanFactor of the input's declared constant.
SquareFamily thin_subset(const SquareFamily& P, const mpq_class& s, const ScaledRational& C);

}  // namespace incgeo
