#include "incgeo/generators.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <nlohmann/json.hpp>

namespace incgeo {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
    SplitMix64 rng(seed ^ (tag * 0x9E3779B97F4A7C15ULL));
    return rng.next();
}

std::uint64_t node_seed(std::uint64_t seed, int level, std::int64_t ix, std::int64_t iy) {
    std::uint64_t h = seed;
    h = derive_seed(h, 0x100 + static_cast<std::uint64_t>(level));
    h = derive_seed(h, static_cast<std::uint64_t>(ix) * 0xD1342543DE82EF95ULL + 1);
    h = derive_seed(h, static_cast<std::uint64_t>(iy) * 0xAF251AF3B0F025B5ULL + 2);
    return h;
}

std::uint64_t uniform_below(SplitMix64& rng, std::uint64_t n) {
    if (n == 0) throw input_error("uniform_below: empty range");
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(rng.next()) * n) >> 64);
}

namespace {

// One refinement step: every cell splits into arity^dim children (arity = 2 or
// 4 per axis), each node keeps `keep` children chosen by seeded shuffle.
std::vector<std::pair<std::int64_t, std::int64_t>> refine_level_2d(
    const std::vector<std::pair<std::int64_t, std::int64_t>>& cells, int level, std::int64_t arity,
    std::int64_t keep, std::uint64_t seed) {
    std::vector<std::pair<std::int64_t, std::int64_t>> out;
    out.reserve(cells.size() * static_cast<std::size_t>(keep));
    std::vector<std::pair<std::int64_t, std::int64_t>> offsets;
    offsets.reserve(static_cast<std::size_t>(arity * arity));
    for (const auto& [ix, iy] : cells) {
        offsets.clear();
        for (std::int64_t dx = 0; dx < arity; ++dx) {
            for (std::int64_t dy = 0; dy < arity; ++dy) offsets.emplace_back(dx, dy);
        }
        SplitMix64 rng(node_seed(seed, level, ix, iy));
        fisher_yates(offsets, rng);
        for (std::int64_t n = 0; n < keep; ++n) {
            out.emplace_back(ix * arity + offsets[static_cast<std::size_t>(n)].first,
                             iy * arity + offsets[static_cast<std::size_t>(n)].second);
        }
    }
    return out;
}

std::vector<std::int64_t> refine_level_1d(const std::vector<std::int64_t>& cells, int level,
                                          std::int64_t arity, std::int64_t keep,
                                          std::uint64_t seed) {
    std::vector<std::int64_t> out;
    out.reserve(cells.size() * static_cast<std::size_t>(keep));
    std::vector<std::int64_t> offsets;
    for (std::int64_t i : cells) {
        offsets.clear();
        for (std::int64_t d = 0; d < arity; ++d) offsets.push_back(d);
        SplitMix64 rng(node_seed(seed, level, i, 0));
        fisher_yates(offsets, rng);
        for (std::int64_t n = 0; n < keep; ++n) out.push_back(i * arity + offsets[static_cast<std::size_t>(n)]);
    }
    return out;
}

SquareFamily build_square_set(int k, const mpq_class& s, std::uint64_t seed, bool strict) {
    if (k < 1) throw input_error("cantor set: scale exponent must be positive");
    if (s <= 0 || s > 2) throw input_error("cantor set: exponent outside (0,2]");
    if (strict && k % 2 != 0) {
        throw input_error("cantor set: scale must be a power of 1/4 (even exponent)");
    }
    std::int64_t keep4 = ceil_pow2(2 * s).get_si();   // ceil(4^s), children 16
    std::int64_t keep2 = ceil_pow2(s).get_si();       // ceil(2^s), children 4
    if (keep4 > 16) throw input_error("cantor set: branching count infeasible");
    std::vector<std::pair<std::int64_t, std::int64_t>> cells{{0, 0}};
    int level = 0;
    for (int q = 0; q < k / 2; ++q, ++level) {
        cells = refine_level_2d(cells, level, 4, keep4, seed);
    }
    if (k % 2 != 0) cells = refine_level_2d(cells, level, 2, keep2, seed);
    return SquareFamily(k, std::move(cells));
}

IntervalFamily build_interval_set(int k, const mpq_class& s, std::uint64_t seed, bool strict) {
    if (k < 1) throw input_error("cantor set: scale exponent must be positive");
    if (s <= 0 || s > 1) throw input_error("cantor set (1-D): exponent outside (0,1]");
    if (strict && k % 2 != 0) {
        throw input_error("cantor set: scale must be a power of 1/4 (even exponent)");
    }
    std::int64_t keep4 = ceil_pow2(2 * s).get_si();
    std::int64_t keep2 = ceil_pow2(s).get_si();
    if (keep4 > 4) throw input_error("cantor set (1-D): branching count infeasible");
    std::vector<std::int64_t> cells{0};
    int level = 0;
    for (int q = 0; q < k / 2; ++q, ++level) {
        cells = refine_level_1d(cells, level, 4, keep4, seed);
    }
    if (k % 2 != 0) cells = refine_level_1d(cells, level, 2, keep2, seed);
    return IntervalFamily(k, std::move(cells));
}

}  // namespace

SquareFamily cantor_square_set(int k, const mpq_class& s, std::uint64_t seed) {
    SquareFamily out = build_square_set(k, s, seed, /*strict=*/true);
    SpreadCertificate cert = spread_certificate(out, s);
    if (!(cert.C <= ScaledRational(mpq_class(16), 0))) {
        throw check_error("cantor_square_set: certificate exceeded 16");
    }
    return out;
}

IntervalFamily cantor_interval_set(int k, const mpq_class& s, std::uint64_t seed) {
    IntervalFamily out = build_interval_set(k, s, seed, /*strict=*/true);
    SpreadCertificate cert = spread_certificate(out, s);
    if (!(cert.C <= ScaledRational(mpq_class(16), 0))) {
        throw check_error("cantor_interval_set: certificate exceeded 16");
    }
    return out;
}

SquareFamily spread_square_set(int k, const mpq_class& s, std::uint64_t seed) {
    return build_square_set(k, s, seed, /*strict=*/false);
}

IntervalFamily spread_interval_set(int k, const mpq_class& s, std::uint64_t seed) {
    return build_interval_set(k, s, seed, /*strict=*/false);
}

SquareFamily random_frostman_set(int k, const mpq_class& s, std::uint64_t seed) {
    if (k < 1) throw input_error("random_frostman_set: scale exponent must be positive");
    std::int64_t target = ceil_pow2(s).get_si();  // ceil(2^s) in [1,4]
    std::vector<std::pair<std::int64_t, std::int64_t>> cells{{0, 0}};
    for (int level = 0; level < k; ++level) {
        std::vector<std::pair<std::int64_t, std::int64_t>> next;
        next.reserve(cells.size() * 2);
        std::vector<std::pair<std::int64_t, std::int64_t>> offsets;
        for (const auto& [ix, iy] : cells) {
            SplitMix64 rng(node_seed(seed, level, ix, iy));
            std::int64_t lo = std::max<std::int64_t>(1, target - 1);
            std::int64_t hi = std::min<std::int64_t>(4, target + 1);
            std::int64_t keep = lo + static_cast<std::int64_t>(uniform_below(
                                         rng, static_cast<std::uint64_t>(hi - lo + 1)));
            offsets = {{0, 0}, {0, 1}, {1, 0}, {1, 1}};
            fisher_yates(offsets, rng);
            for (std::int64_t n = 0; n < keep; ++n) {
                next.emplace_back(ix * 2 + offsets[static_cast<std::size_t>(n)].first,
                                  iy * 2 + offsets[static_cast<std::size_t>(n)].second);
            }
        }
        cells = std::move(next);
    }
    return SquareFamily(k, std::move(cells));
}

CantorTarget cantor_target(int k, const mpq_class& s) {
    if (k < 2) throw input_error("cantor_target: scale exponent must be at least 2");
    if (!(s > 0 && s < 1)) throw input_error("cantor_target: exponent outside (0,1)");
    const std::uint64_t seed_r = 0x52414449u;  // fixed: construction is deterministic
    const std::uint64_t seed_t = 0x534c4f50u;
    IntervalFamily radii_base = spread_interval_set(k - 1, s, seed_r);
    IntervalFamily slopes = spread_interval_set(k, s, seed_t);
    std::int64_t half = std::int64_t{1} << (k - 1);
    std::int64_t full = std::int64_t{1} << k;

    CantorTarget out;
    std::vector<std::pair<std::int64_t, std::int64_t>> k_cells;
    std::vector<std::pair<std::int64_t, std::int64_t>> line_cells;
    out.per_line.reserve(slopes.size());
    for (std::int64_t tj : slopes.cells()) {
        DyadicTube line{k, tj, 0, Convention::MainText};
        line_cells.emplace_back(tj, 0);
        std::vector<std::pair<std::int64_t, std::int64_t>> on_line;
        on_line.reserve(radii_base.size());
        for (std::int64_t xr : radii_base.cells()) {
            std::int64_t ir = half + xr;                    // r = ir * 2^-k in [1/2,1)
            std::int64_t iy = (ir * tj) / full;             // y = r * theta, both nonnegative
            on_line.emplace_back(ir, iy);
            k_cells.emplace_back(ir, iy);
        }
        out.per_line.emplace_back(line, SquareFamily(k, std::move(on_line)));
    }
    out.K = SquareFamily(k, std::move(k_cells));
    out.lines = TubeFamily(k, Convention::MainText, std::move(line_cells));
    out.dimension_proxy = std::log2(static_cast<double>(out.K.size())) / k;
    return out;
}

namespace {

std::int64_t intercept_index_through_center(int k, std::int64_t ix, std::int64_t iy,
                                            std::int64_t slope_index) {
    // b = y_c - sigma x_c with centers at (i + 1/2) 2^-k and sigma = slope * 2^-k:
    // index = floor((iy * 2^(k+1) + 2^k - slope (2 ix + 1)) / 2^(k+1))
    std::int64_t num = iy * (std::int64_t{2} << k) + (std::int64_t{1} << k) -
                       slope_index * (2 * ix + 1);
    return floor_shift(num, k + 1);
}

}  // namespace

FurstenbergConfig furstenberg_config(int k, const mpq_class& s, const mpq_class& t,
                                     std::uint64_t seed, const FurstenbergOptions& opts) {
    if (!(s > 0 && s <= std::min(mpq_class(1), t) && t <= 2)) {
        throw input_error("furstenberg_config: need 0 < s <= min(1,t), t <= 2");
    }
    std::int64_t M = ceil_pow2(mpq_class(k) * s).get_si();
    std::string last_issue;
    for (int attempt = 0; attempt < opts.max_attempts; ++attempt) {
        std::uint64_t trial = attempt == 0 ? seed : derive_seed(seed, 0xA77E + attempt);
        SquareFamily squares;
        switch (opts.squares) {
            case SquareKind::Spread:
                squares = spread_square_set(k, t, derive_seed(trial, 1));
                break;
            case SquareKind::Product: {
                mpq_class half_t = t / 2;
                IntervalFamily X = spread_interval_set(k, half_t, derive_seed(trial, 2));
                IntervalFamily Y = spread_interval_set(k, half_t, derive_seed(trial, 3));
                std::vector<std::pair<std::int64_t, std::int64_t>> cells;
                cells.reserve(X.size() * Y.size());
                for (std::int64_t x : X.cells()) {
                    for (std::int64_t y : Y.cells()) cells.emplace_back(x, y);
                }
                squares = SquareFamily(k, std::move(cells));
                break;
            }
            case SquareKind::Single:
                squares = SquareFamily(k, {{0, 0}});
                break;
        }
        if (opts.max_squares > 0 && squares.size() > opts.max_squares) {
            std::vector<std::pair<std::int64_t, std::int64_t>> cells = squares.cells();
            SplitMix64 rng(derive_seed(trial, 9));
            fisher_yates(cells, rng);
            cells.resize(opts.max_squares);
            squares = SquareFamily(k, std::move(cells));
        }
        IntervalFamily base_slopes = spread_interval_set(k, s, derive_seed(trial, 4));
        if (static_cast<std::int64_t>(base_slopes.size()) < M) {
            throw check_error("furstenberg_config: slope base smaller than M");
        }
        std::vector<std::int64_t> shared;
        if (opts.shared_slopes) {
            shared = base_slopes.cells();
            SplitMix64 rng(derive_seed(trial, 5));
            fisher_yates(shared, rng);
            shared.resize(static_cast<std::size_t>(M));
            std::sort(shared.begin(), shared.end());
        }
        std::vector<TubeFamily> assignment;
        assignment.reserve(squares.size());
        ScaledRational max_c(mpq_class(1), mpq_class(0));
        bool first = true;
        for (std::size_t i = 0; i < squares.size(); ++i) {
            const auto& [ix, iy] = squares.cells()[i];
            std::vector<std::int64_t> chosen;
            if (opts.shared_slopes) {
                chosen = shared;
            } else {
                chosen = base_slopes.cells();
                SplitMix64 rng(derive_seed(node_seed(trial, k + 1, ix, iy), 6));
                fisher_yates(chosen, rng);
                chosen.resize(static_cast<std::size_t>(M));
            }
            std::vector<std::pair<std::int64_t, std::int64_t>> tubes;
            tubes.reserve(chosen.size());
            for (std::int64_t slope : chosen) {
                tubes.emplace_back(slope, intercept_index_through_center(k, ix, iy, slope));
            }
            TubeFamily fam(k, Convention::MainText, std::move(tubes));
            SpreadCertificate cert = spread_certificate(fam, s);
            if (first || max_c < cert.C) {
                max_c = cert.C;
                first = false;
            }
            assignment.push_back(std::move(fam));
        }
        if (!(max_c <= opts.certificate_budget)) {
            last_issue = "per-square certificate exceeded the budget";
            continue;
        }
        FurstenbergConfig out;
        out.config.k = k;
        out.config.s = s;
        out.config.C = max_c;
        out.config.M = M;
        out.config.squares = squares;
        out.config.tubes_per_square = std::move(assignment);
        std::vector<std::pair<std::int64_t, std::int64_t>> all;
        for (const TubeFamily& fam : out.config.tubes_per_square) {
            all.insert(all.end(), fam.cells().begin(), fam.cells().end());
        }
        out.universe = TubeFamily(k, Convention::MainText, std::move(all));
        out.square_certificate = spread_certificate(squares, t);
        out.seed_used = trial;
        NiceReport report = validate_nice(out.config);
        if (!report.ok) throw check_error("furstenberg_config: " + report.issue);
        return out;
    }
    throw check_error("furstenberg_config: " + last_issue);
}

std::string GeneratorSpec::to_json_text() const {
    nlohmann::ordered_json j;
    j["version"] = 1;
    j["kind"] = kind;
    j["scale_exponent"] = k;
    j["s"] = {{"num", s.get_num().get_str()}, {"den", s.get_den().get_str()}};
    j["t"] = {{"num", t.get_num().get_str()}, {"den", t.get_den().get_str()}};
    j["seed"] = seed;
    j["shared_slopes"] = shared_slopes;
    return j.dump(2);
}

GeneratorSpec GeneratorSpec::from_json_text(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    GeneratorSpec spec;
    spec.kind = j.at("kind").get<std::string>();
    spec.k = j.at("scale_exponent").get<int>();
    spec.s = mpq_class(mpz_class(j.at("s").at("num").get<std::string>()),
                       mpz_class(j.at("s").at("den").get<std::string>()));
    spec.s.canonicalize();
    spec.t = mpq_class(mpz_class(j.at("t").at("num").get<std::string>()),
                       mpz_class(j.at("t").at("den").get<std::string>()));
    spec.t.canonicalize();
    spec.seed = j.at("seed").get<std::uint64_t>();
    spec.shared_slopes = j.value("shared_slopes", false);
    return spec;
}

}  // namespace incgeo
