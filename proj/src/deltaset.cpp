#include "incgeo/deltaset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace incgeo {

namespace {

// Shared scan: cells as codes whose ancestor at d levels up is code >> (dim*d).
// Returns the maximising (level, count, first-cell-prefix) candidate.
struct ScanBest {
    int level = 0;
    std::int64_t count = 0;
    std::uint64_t prefix = 0;
    bool set = false;
};

ScanBest scan_levels(std::vector<std::uint64_t>& codes, int k, int dim, const mpq_class& s) {
    std::sort(codes.begin(), codes.end());
    ScanBest best;
    for (int level = 0; level <= k; ++level) {
        int shift = dim * (k - level);
        std::size_t i = 0;
        while (i < codes.size()) {
            std::uint64_t pre = codes[i] >> shift;
            std::size_t j = i;
            while (j < codes.size() && (codes[j] >> shift) == pre) ++j;
            auto count = static_cast<std::int64_t>(j - i);
            if (!best.set ||
                compare_count_pow(count, level, best.count, best.level, s) > 0) {
                best = {level, count, pre, true};
            }
            i = j;
        }
    }
    return best;
}

template <typename MakeCert>
SpreadCertificate certificate_from_codes(std::vector<std::uint64_t> codes, int k, int dim,
                                         const mpq_class& s, MakeCert&& fill_witness) {
    if (codes.empty()) throw input_error("spread_certificate: empty family");
    if (s < 0 || s > dim) throw input_error("spread_certificate: exponent out of range");
    ScanBest best = scan_levels(codes, k, dim, s);
    SpreadCertificate cert;
    cert.s = s;
    cert.witness_level = best.level;
    cert.witness_count = best.count;
    cert.family_size = static_cast<std::int64_t>(codes.size());
    cert.C = ScaledRational(mpq_class(best.count, cert.family_size), mpq_class(best.level) * s);
    fill_witness(cert, best.prefix, dim * (k - best.level));
    return cert;
}

}  // namespace

SpreadCertificate spread_certificate(const SquareFamily& P, const mpq_class& s) {
    std::vector<std::uint64_t> codes;
    codes.reserve(P.size());
    for (const auto& [ix, iy] : P.cells()) codes.push_back(morton_code(ix, iy));
    return certificate_from_codes(
        std::move(codes), P.scale_k(), 2, s,
        [&](SpreadCertificate& cert, std::uint64_t prefix, int shift) {
            auto [ix, iy] = morton_decode(prefix << shift);
            cert.witness_x = floor_shift(ix, P.scale_k() - cert.witness_level);
            cert.witness_y = floor_shift(iy, P.scale_k() - cert.witness_level);
        });
}

SpreadCertificate spread_certificate(const IntervalFamily& P, const mpq_class& s) {
    constexpr std::int64_t offset = std::int64_t{1} << 30;
    std::vector<std::uint64_t> codes;
    codes.reserve(P.size());
    for (std::int64_t i : P.cells()) codes.push_back(static_cast<std::uint64_t>(i + offset));
    return certificate_from_codes(
        std::move(codes), P.scale_k(), 1, s,
        [&](SpreadCertificate& cert, std::uint64_t prefix, int shift) {
            std::int64_t cell = static_cast<std::int64_t>(prefix << shift) - offset;
            cert.witness_x = floor_shift(cell, P.scale_k() - cert.witness_level);
            cert.witness_y = 0;
        });
}

SpreadCertificate spread_certificate(const TubeFamily& P, const mpq_class& s) {
    return spread_certificate(P.param_family(), s);
}

nlohmann::ordered_json SpreadCertificate::to_json() const {
    nlohmann::ordered_json j;
    j["s_num"] = s.get_num().get_str();
    j["s_den"] = s.get_den().get_str();
    mpq_class c_rat = C.to_rational(64);
    j["C_num"] = c_rat.get_num().get_str();
    j["C_den"] = c_rat.get_den().get_str();
    j["witness"] = {{"k", witness_level}, {"ix", witness_x}, {"iy", witness_y}};
    j["exact"] = {{"ratio_num", C.mantissa().get_num().get_str()},
                  {"ratio_den", C.mantissa().get_den().get_str()},
                  {"pow2_num", C.exponent2().get_num().get_str()},
                  {"pow2_den", C.exponent2().get_den().get_str()},
                  {"rounded", !C.exact_rational()}};
    return j;
}

RegularityCertificate regularity_certificate(const SquareFamily& P, const mpq_class& s) {
    if (P.scale_k() % 2 != 0) {
        throw input_error("regularity_certificate: scale exponent must be even");
    }
    RegularityCertificate out;
    out.spread = spread_certificate(P, s);
    int half = P.scale_k() / 2;
    out.half_scale_count = static_cast<std::int64_t>(cover_at(P, half).size());
    out.K = ScaledRational(mpq_class(out.half_scale_count), -mpq_class(P.scale_k()) * s / 2);
    return out;
}

ScaledRational content_lower_bound(const SquareFamily& B, const mpq_class& s) {
    SpreadCertificate c = spread_certificate(B, s);
    return ScaledRational(1, 0) / c.C;
}

ScaledRational content_lower_bound(const IntervalFamily& B, const mpq_class& s) {
    SpreadCertificate c = spread_certificate(B, s);
    return ScaledRational(1, 0) / c.C;
}

namespace {

// Top-down selection over the dyadic tree of sorted codes (dim bits consumed
// per level). Children of a kept node are ranked by subtree count (canonical
// order on ties); each node keeps at most ceil(2^s) children; each level keeps
// at most floor(2^((level + domain_shift) s)) cells globally, enforced
// round-robin across parents; a final trim enforces floor(2^(k s)).
std::vector<std::uint64_t> select_spread_subset(std::vector<std::uint64_t> codes, int k, int dim,
                                                const mpq_class& s) {
    std::sort(codes.begin(), codes.end());
    const std::int64_t per_node = ceil_pow2(s).get_si();
    const int domain_shift = 2;  // the tree roots sit two levels above unit scale
    struct Node {
        std::size_t begin, end;  // range in codes
    };
    std::vector<Node> kept;
    // roots: distinct prefixes at level 0
    {
        std::size_t i = 0;
        while (i < codes.size()) {
            std::uint64_t pre = codes[i] >> (dim * k);
            std::size_t j = i;
            while (j < codes.size() && (codes[j] >> (dim * k)) == pre) ++j;
            kept.push_back({i, j});
            i = j;
        }
    }
    for (int level = 1; level <= k; ++level) {
        int shift = dim * (k - level);
        // children of each kept node, ranked by count descending (stable:
        // canonical code order breaks ties)
        std::vector<std::vector<Node>> children(kept.size());
        for (std::size_t n = 0; n < kept.size(); ++n) {
            std::size_t i = kept[n].begin;
            while (i < kept[n].end) {
                std::uint64_t pre = codes[i] >> shift;
                std::size_t j = i;
                while (j < kept[n].end && (codes[j] >> shift) == pre) ++j;
                children[n].push_back({i, j});
                i = j;
            }
            std::stable_sort(children[n].begin(), children[n].end(),
                             [](const Node& a, const Node& b) {
                                 return (a.end - a.begin) > (b.end - b.begin);
                             });
            if (static_cast<std::int64_t>(children[n].size()) > per_node) {
                children[n].resize(static_cast<std::size_t>(per_node));
            }
        }
        mpz_class cap_z = floor_pow2(mpq_class(level + domain_shift) * s);
        std::size_t cap = cap_z.fits_ulong_p() ? cap_z.get_ui() : codes.size();
        std::vector<Node> next;
        // round-robin over parents so no parent hogs the level budget
        for (std::size_t round = 0; next.size() < cap; ++round) {
            bool any = false;
            for (std::size_t n = 0; n < kept.size() && next.size() < cap; ++n) {
                if (round < children[n].size()) {
                    next.push_back(children[n][round]);
                    any = true;
                }
            }
            if (!any) break;
        }
        kept = std::move(next);
    }
    // final trim to floor(2^(k s)): drop leaves from the most-populated kept
    // roots... at leaf level each node is a single cell; trim deterministically
    // from the end of the round-robin order
    mpz_class final_cap_z = floor_pow2(mpq_class(k) * s);
    std::size_t final_cap =
        final_cap_z.fits_ulong_p() ? std::max<std::size_t>(1, final_cap_z.get_ui()) : kept.size();
    if (kept.size() > final_cap) kept.resize(final_cap);
    std::vector<std::uint64_t> out;
    out.reserve(kept.size());
    for (const Node& n : kept) {
        for (std::size_t i = n.begin; i < n.end; ++i) out.push_back(codes[i]);
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace

SquareFamily frostman_extract(const SquareFamily& B, const mpq_class& s) {
    if (B.empty()) throw input_error("frostman_extract: empty family");
    std::int64_t bound = std::int64_t{2} << B.scale_k();
    for (const auto& [ix, iy] : B.cells()) {
        if (ix < -bound || ix >= bound || iy < -bound || iy >= bound) {
            throw input_error("frostman_extract: family leaves [-2,2)^2");
        }
    }
    std::vector<std::uint64_t> codes;
    codes.reserve(B.size());
    for (const auto& [ix, iy] : B.cells()) codes.push_back(morton_code(ix, iy));
    auto picked = select_spread_subset(std::move(codes), B.scale_k(), 2, s);
    std::vector<std::pair<std::int64_t, std::int64_t>> cells;
    cells.reserve(picked.size());
    for (std::uint64_t c : picked) cells.push_back(morton_decode(c));
    SquareFamily P(B.scale_k(), std::move(cells));
    ScaledRational kappa = content_lower_bound(B, s);
    ScaledRational budget = (ScaledRational(1, 0) / kappa).scaled(kFrostmanFactor);
    SpreadCertificate cert = spread_certificate(P, s);
    if (!(cert.C <= budget)) {
        throw check_error("frostman_extract: certificate exceeded 64/kappa");
    }
    return P;
}

IntervalFamily frostman_extract(const IntervalFamily& B, const mpq_class& s) {
    if (B.empty()) throw input_error("frostman_extract: empty family");
    constexpr std::int64_t offset = std::int64_t{1} << 30;
    std::int64_t bound = std::int64_t{2} << B.scale_k();
    std::vector<std::uint64_t> codes;
    codes.reserve(B.size());
    for (std::int64_t i : B.cells()) {
        if (i < -bound || i >= bound * 2) {
            throw input_error("frostman_extract: family leaves [-2,4)");
        }
        codes.push_back(static_cast<std::uint64_t>(i + offset));
    }
    auto picked = select_spread_subset(std::move(codes), B.scale_k(), 1, s);
    std::vector<std::int64_t> cells;
    cells.reserve(picked.size());
    for (std::uint64_t c : picked) cells.push_back(static_cast<std::int64_t>(c) - offset);
    IntervalFamily P(B.scale_k(), std::move(cells));
    ScaledRational kappa = content_lower_bound(B, s);
    ScaledRational budget = (ScaledRational(1, 0) / kappa).scaled(kFrostmanFactor);
    SpreadCertificate cert = spread_certificate(P, s);
    if (!(cert.C <= budget)) {
        throw check_error("frostman_extract: certificate exceeded 64/kappa");
    }
    return P;
}

SquareFamily thin_subset(const SquareFamily& P, const mpq_class& s, const ScaledRational& C) {
    SpreadCertificate in_cert = spread_certificate(P, s);
    if (!(in_cert.C <= C)) {
        throw input_error("thin_subset: input is not a (delta,s,C)-set for the given C");
    }
    mpz_class cap = floor_pow2(mpq_class(P.scale_k()) * s);
    if (mpz_class(static_cast<long>(P.size())) <= cap) return P;
    std::vector<std::uint64_t> codes;
    codes.reserve(P.size());
    for (const auto& [ix, iy] : P.cells()) codes.push_back(morton_code(ix, iy));
    auto picked = select_spread_subset(std::move(codes), P.scale_k(), 2, s);
    std::vector<std::pair<std::int64_t, std::int64_t>> cells;
    cells.reserve(picked.size());
    for (std::uint64_t c : picked) cells.push_back(morton_decode(c));
    SquareFamily out(P.scale_k(), std::move(cells));
    SpreadCertificate cert = spread_certificate(out, s);
    if (!(cert.C <= C.scaled(kFrostmanFactor))) {
        throw check_error("thin_subset: certificate exceeded 64*C");
    }
    return out;
}

}  // namespace incgeo
