#include "incgeo/incidence.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace incgeo {

NiceReport validate_nice(const NiceConfiguration& config) {
    NiceReport report;
    if (config.squares.size() != config.tubes_per_square.size()) {
        return {false, "assignment size differs from square count", std::nullopt, std::nullopt};
    }
    if (config.M < 1) return {false, "per-square tube count must be at least 1", {}, {}};
    for (std::size_t i = 0; i < config.squares.size(); ++i) {
        const TubeFamily& fam = config.tubes_per_square[i];
        if (fam.scale_k() != config.k) {
            return {false, "tube family scale differs from configuration scale", i, std::nullopt};
        }
        if (static_cast<std::int64_t>(fam.size()) != config.M) {
            return {false, "tube family size differs from M", i, std::nullopt};
        }
        DyadicSquare p = config.square(i);
        for (std::size_t t = 0; t < fam.size(); ++t) {
            if (!tube_meets_square(fam.tube(t), p)) {
                return {false, "tube does not meet its square", i, fam.tube(t)};
            }
        }
        SpreadCertificate cert = spread_certificate(fam, config.s);
        if (!(cert.C <= config.C)) {
            return {false, "per-square tube certificate exceeds the declared constant", i,
                    std::nullopt};
        }
    }
    return report;
}

IncidenceCount count_incidences(const NiceConfiguration& config, const TubeFamily& universe,
                                bool strict) {
    if (universe.scale_k() != config.k) {
        throw input_error("count_incidences: universe scale differs from configuration");
    }
    // slope-bucketed index: slope -> sorted (intercept, universe position)
    std::unordered_map<std::int64_t, std::vector<std::pair<std::int64_t, std::size_t>>> index;
    index.reserve(universe.size());
    for (std::size_t i = 0; i < universe.size(); ++i) {
        const auto& [ia, ib] = universe.cells()[i];
        index[ia].emplace_back(ib, i);
    }
    for (auto& [ia, bucket] : index) std::sort(bucket.begin(), bucket.end());
    IncidenceCount out;
    out.per_tube.assign(universe.size(), 0);
    for (const TubeFamily& fam : config.tubes_per_square) {
        for (const auto& [ia, ib] : fam.cells()) {
            auto it = index.find(ia);
            bool found = false;
            if (it != index.end()) {
                auto pos = std::lower_bound(it->second.begin(), it->second.end(),
                                            std::make_pair(ib, std::size_t{0}));
                if (pos != it->second.end() && pos->first == ib) {
                    ++out.per_tube[pos->second];
                    ++out.total;
                    found = true;
                }
            }
            if (strict && !found) {
                throw input_error("count_incidences: assignment tube missing from universe");
            }
        }
    }
    return out;
}

mpq_class theta(const mpq_class& s, const mpq_class& t) {
    if (s < 0 || t < s || t > 1) throw input_error("theta: need 0 <= s <= t <= 1");
    if (s == 1 && t == 1) return 0;
    return mpq_class(1 - t) / mpq_class(1 - s);
}

BoundValue incidence_upper_bound(const ScaledRational& C_P, const ScaledRational& C_T,
                                 std::int64_t M, int k, const mpq_class& s, const mpq_class& t,
                                 std::int64_t tube_count, std::int64_t square_count) {
    if (M < 1 || tube_count < 1 || square_count < 1) {
        throw input_error("incidence_upper_bound: counts must be positive");
    }
    mpq_class th = theta(s, t);
    // log2 of sqrt(C_P C_T) (M delta^s)^(th/2) |T|^(1/2) |P|
    LogValue main = LogValue::log2_of(C_P, mpq_class(1, 2));
    main += LogValue::log2_of(C_T, mpq_class(1, 2));
    LogValue m_delta_s = LogValue::log2_of(mpz_class(M)) + LogValue(-mpq_class(k) * s);
    main += m_delta_s.scaled(th / 2);
    main += LogValue::log2_of(mpz_class(tube_count), mpq_class(1, 2));
    main += LogValue::log2_of(mpz_class(square_count));
    LogValue trivial = LogValue::log2_of(mpz_class(tube_count));
    LogValue value = (main.compare(trivial) >= 0) ? main : trivial;
    return {value, std::exp2(value.to_double())};
}

BoundValue tube_lower_bound(const ScaledRational& C_P, const ScaledRational& C_T, std::int64_t M,
                            int k, const mpq_class& s, const mpq_class& t) {
    if (M < 1) throw input_error("tube_lower_bound: M must be at least 1");
    if (s < 0 || t < s || t > 1) throw input_error("tube_lower_bound: need 0 <= s <= t <= 1");
    mpq_class expo = (s == 1 && t == 1) ? mpq_class(1) : mpq_class(t - s) / mpq_class(1 - s);
    LogValue value = LogValue::log2_of(C_P, -1) + LogValue::log2_of(C_T, -1);
    value += LogValue::log2_of(mpz_class(M));
    value += LogValue(mpq_class(k) * s);
    LogValue m_delta_s = LogValue::log2_of(mpz_class(M)) + LogValue(-mpq_class(k) * s);
    value += m_delta_s.scaled(expo);
    return {value, std::exp2(value.to_double())};
}

LogValue log_budget(int k, int c, std::int64_t factor) {
    if (k < 1 || c < 0 || factor < 1) throw input_error("log_budget: bad arguments");
    LogValue v = LogValue::log2_of(mpz_class(factor));
    if (c > 0) v += LogValue::log2_of(mpz_class(k), c);
    return v;
}

ElementaryExponents elementary_exponents(const mpq_class& s, const mpq_class& t) {
    if (!(s > 0 && s < 1)) throw input_error("elementary_exponents: s outside (0,1)");
    if (!(t > s && t <= 2)) throw input_error("elementary_exponents: t outside (s,2]");
    ElementaryExponents out;
    mpq_class a = mpq_class(1, 2) + s;
    mpq_class b = 2 * s;
    out.wolff = std::max(a, b);
    out.elementary_furstenberg = b;
    out.target_base = b;
    out.epsilon_known = false;
    return out;
}

}  // namespace incgeo
