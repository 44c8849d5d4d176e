#include "incgeo/tubes.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace incgeo {

std::string convention_name(Convention c) {
    return c == Convention::MainText ? "main" : "appendix";
}

Convention convention_from_name(const std::string& name) {
    if (name == "main") return Convention::MainText;
    if (name == "appendix") return Convention::Appendix;
    throw input_error("unknown duality convention: " + name);
}

mpq_class LineDescriptor::residual(const mpq_class& x, const mpq_class& y) const {
    if (conv == Convention::MainText) return y - (slope_param * x + intercept);
    return x - (slope_param * y + intercept);
}

LineDescriptor dual_line(const mpq_class& a, const mpq_class& b, Convention conv) {
    return LineDescriptor{a, b, conv};
}

bool valid_slope_range(int k, std::int64_t ia) {
    std::int64_t half = std::int64_t{1} << k;
    return ia >= -half && ia < half;
}

TubeFamily::TubeFamily(int k, Convention conv,
                       std::vector<std::pair<std::int64_t, std::int64_t>> tubes)
    : k_(k), conv_(conv), tubes_(std::move(tubes)) {
    if (k < 0) throw input_error("TubeFamily: negative scale exponent");
    std::sort(tubes_.begin(), tubes_.end());
    tubes_.erase(std::unique(tubes_.begin(), tubes_.end()), tubes_.end());
    for (const auto& [ia, ib] : tubes_) {
        if (!valid_slope_range(k_, ia)) {
            throw input_error("TubeFamily: slope parameter outside [-1,1)");
        }
    }
}

bool TubeFamily::contains(std::int64_t ia, std::int64_t ib) const {
    return std::binary_search(tubes_.begin(), tubes_.end(), std::make_pair(ia, ib));
}

SquareFamily TubeFamily::param_family() const { return SquareFamily(k_, tubes_); }

IntervalFamily TubeFamily::slope_family() const {
    std::vector<std::int64_t> slopes;
    slopes.reserve(tubes_.size());
    for (const auto& [ia, ib] : tubes_) slopes.push_back(ia);
    return IntervalFamily(k_, std::move(slopes));
}

TubeFamily TubeFamily::coarsened(int coarser_k) const {
    if (coarser_k > k_) throw input_error("coarsened: scale finer than family");
    int d = k_ - coarser_k;
    std::vector<std::pair<std::int64_t, std::int64_t>> out;
    out.reserve(tubes_.size());
    for (const auto& [ia, ib] : tubes_) {
        out.emplace_back(floor_shift(ia, d), floor_shift(ib, d));
    }
    return TubeFamily(coarser_k, conv_, std::move(out));
}

namespace {

using i128 = __int128;

struct Frac {
    i128 num;
    i128 den;  // > 0
};

int cmp(const Frac& a, const Frac& b) {
    i128 lhs = a.num * b.den;
    i128 rhs = b.num * a.den;
    if (lhs < rhs) return -1;
    if (lhs > rhs) return 1;
    return 0;
}

struct BoundSet {
    Frac lower;       // max of lower bounds
    bool lower_open;  // strict?
    Frac upper;       // min of (open) upper bounds
    bool infeasible = false;

    void add_lower(const Frac& f) {
        int c = cmp(f, lower);
        if (c > 0 || (c == 0 && !lower_open)) {
            lower = f;
            lower_open = true;
        }
    }
    void add_upper(const Frac& f) {
        if (cmp(f, upper) < 0) upper = f;
    }
    // A * x > C over the part
    void add_gt(i128 A, i128 C) {
        if (A > 0) {
            add_lower({C, A});
        } else if (A < 0) {
            add_upper({-C, -A});
        } else if (C >= 0) {
            infeasible = true;
        }
    }
    // A * x < C
    void add_lt(i128 A, i128 C) {
        if (A > 0) {
            add_upper({C, A});
        } else if (A < 0) {
            add_lower({-C, -A});
        } else if (C <= 0) {
            infeasible = true;
        }
    }
    bool feasible() const { return !infeasible && cmp(lower, upper) < 0; }
};

// Does a line y = a x + b with (a, b) in [A0,A1) x [B0,B1) pass through
// [X0,X1) x [Y0,Y1)? All values are integers over a common power-of-two grid.
bool box_line_feasible(i128 X0, i128 X1, i128 Y0, i128 Y1, i128 A0, i128 A1, i128 B0, i128 B1,
                       i128 S) {
    // x = 0 separately: b-range is exactly [B0,B1), y-range [Y0,Y1)
    if (X0 <= 0 && 0 < X1) {
        if (Y0 < B1 && Y1 > B0) return true;
    }
    // For fixed x != 0 the attainable y-set is an interval with endpoints
    // Y0 - A_hi x and Y1 - A_lo x; overlap with [B0,B1) reduces to two strict
    // linear inequalities (openness works out the same in every case).
    auto run_part = [&](i128 p, bool p_open, i128 q, i128 A_hi, i128 A_lo) {
        if (p >= q) return false;
        BoundSet bs{{p, 1}, p_open, {q, 1}};
        //  Y0 - A_hi x < B1   <=>  A_hi x > (Y0 - B1) -> scaled by S
        bs.add_gt(A_hi, (Y0 - B1) * S);
        //  Y1 - A_lo x > B0   <=>  A_lo x < (Y1 - B0)
        bs.add_lt(A_lo, (Y1 - B0) * S);
        return bs.feasible();
    };
    // positive x (open at 0 when the square straddles or starts at 0)
    if (X1 > 0 && run_part(std::max<i128>(X0, 0), X0 <= 0, X1, A1, A0)) return true;
    // negative x (upper bound at 0 is open, as all uppers are)
    if (X0 < 0 && run_part(X0, false, std::min<i128>(X1, 0), A0, A1)) return true;
    return false;
}

}  // namespace

bool tube_meets_square(const DyadicTube& T, const DyadicSquare& p) {
    int km = std::max(T.k, p.k);
    if (km > 30) throw input_error("tube_meets_square: scale too fine");
    int dt = km - T.k;
    int ds = km - p.k;
    i128 S = i128{1} << km;
    i128 A0 = i128{T.ia} << dt, A1 = i128{T.ia + 1} << dt;
    i128 B0 = i128{T.ib} << dt, B1 = i128{T.ib + 1} << dt;
    i128 X0, X1, Y0, Y1;
    if (T.conv == Convention::MainText) {
        X0 = i128{p.ix} << ds;
        X1 = i128{p.ix + 1} << ds;
        Y0 = i128{p.iy} << ds;
        Y1 = i128{p.iy + 1} << ds;
    } else {
        // x = a y + b: swap the square's roles
        X0 = i128{p.iy} << ds;
        X1 = i128{p.iy + 1} << ds;
        Y0 = i128{p.ix} << ds;
        Y1 = i128{p.ix + 1} << ds;
    }
    return box_line_feasible(X0, X1, Y0, Y1, A0, A1, B0, B1, S);
}

bool point_in_tube(const DyadicTube& T, const mpq_class& x, const mpq_class& y) {
    mpq_class delta(1, std::int64_t{1} << T.k);
    mpq_class A0 = T.ia * delta, A1 = (T.ia + 1) * delta;
    mpq_class B0 = T.ib * delta, B1 = (T.ib + 1) * delta;
    mpq_class u = (T.conv == Convention::MainText) ? x : y;  // multiplies a
    mpq_class v = (T.conv == Convention::MainText) ? y : x;  // equals a*u + b
    int su = sgn(u);
    if (su == 0) return B0 <= v && v < B1;
    if (su > 0) {
        // b-range (v - A1 u, v - A0 u]
        return (v - A1 * u < B1) && (v - A0 * u >= B0);
    }
    // b-range [v - A0 u, v - A1 u)
    return (v - A0 * u < B1) && (v - A1 * u > B0);
}

DyadicSquare dual_star(const DyadicTube& T) {
    if (T.conv != Convention::MainText) {
        throw input_error("dual_star: defined for the main-text convention");
    }
    return DyadicSquare{T.k, -(T.ia + 1), T.ib};
}

SlopeFibers slope_fibers(const TubeFamily& tubes, const DyadicSquare& p) {
    SlopeFibers out;
    for (std::size_t i = 0; i < tubes.size(); ++i) {
        DyadicTube T = tubes.tube(i);
        if (!tube_meets_square(T, p)) {
            throw input_error("slope_fibers: tube does not meet the square");
        }
        auto& fiber = out.fibers[T.ia];
        fiber.push_back(i);
        out.max_fiber = std::max(out.max_fiber, fiber.size());
    }
    return out;
}

std::vector<DyadicTube> rescale_tube_cover(const DyadicTube& T, const DyadicSquare& Q) {
    if (Q.k > T.k) throw input_error("rescale_tube_cover: reference square finer than tube");
    if (Q.ix < 0) throw input_error("rescale_tube_cover: reference square left of x=0");
    int kbar = T.k - Q.k;
    std::int64_t unit = std::int64_t{1} << Q.k;
    // image intercepts span [(Q.ix*ia + ib*unit - Q.iy*2^kT), ... + Q.ix + unit)
    // in units of 2^-kT
    std::int64_t lo = Q.ix * T.ia + T.ib * unit - (Q.iy << T.k);
    std::int64_t hi = Q.ix * (T.ia + 1) + (T.ib + 1) * unit - (Q.iy << T.k);
    std::int64_t jb_first = floor_shift(lo, Q.k);
    std::int64_t jb_last = floor_shift(hi - 1, Q.k);
    std::int64_t ia_bar = floor_shift(T.ia, Q.k);
    std::vector<DyadicTube> out;
    for (std::int64_t jb = jb_first; jb <= jb_last; ++jb) {
        out.push_back(DyadicTube{kbar, ia_bar, jb, T.conv});
    }
    if (out.size() > 4) throw check_error("rescale_tube_cover: cover exceeded 4 tubes");
    return out;
}

void write_tubes(std::ostream& os, const TubeFamily& f) {
    nlohmann::ordered_json header;
    header["scale_exponent"] = f.scale_k();
    header["convention"] = convention_name(f.convention());
    header["count"] = f.size();
    os << header.dump() << '\n';
    std::string conv = convention_name(f.convention());
    for (const auto& [ia, ib] : f.cells()) {
        os << f.scale_k() << ' ' << ia << ' ' << ib << ' ' << conv << '\n';
    }
}

TubeFamily read_tubes(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw input_error("tubes: missing header");
    nlohmann::json header = nlohmann::json::parse(line);
    int k = header.at("scale_exponent").get<int>();
    Convention conv = convention_from_name(header.at("convention").get<std::string>());
    std::size_t count = header.at("count").get<std::size_t>();
    std::vector<std::pair<std::int64_t, std::int64_t>> tubes;
    tubes.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        if (!std::getline(is, line)) throw input_error("tubes: truncated body");
        std::istringstream row(line);
        int rk;
        std::int64_t ia, ib;
        std::string cname;
        if (!(row >> rk >> ia >> ib >> cname)) throw input_error("tubes: malformed row");
        if (rk != k || convention_from_name(cname) != conv) {
            throw input_error("tubes: row disagrees with header");
        }
        tubes.emplace_back(ia, ib);
    }
    return TubeFamily(k, conv, std::move(tubes));
}

std::string to_text(const TubeFamily& f) {
    std::ostringstream os;
    write_tubes(os, f);
    return os.str();
}

TubeFamily tubes_from_text(const std::string& text) {
    std::istringstream is(text);
    return read_tubes(is);
}

}  // namespace incgeo
