#include "incgeo/multiscale.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>
#include <string>

namespace incgeo {

namespace {

// One pass over the Morton-sorted family: the renormalised sub-family below
// every occupied square at scale top_e, already at scale bot_e - top_e.
std::vector<SquareFamily> partition_windows(const SquareFamily& P, int top_e, int bot_e) {
    std::vector<std::uint64_t> codes;
    codes.reserve(P.size());
    for (const auto& [ix, iy] : P.cells()) codes.push_back(morton_code(ix, iy));
    std::sort(codes.begin(), codes.end());
    int pshift = 2 * (P.scale_k() - top_e);
    int cshift = 2 * (P.scale_k() - bot_e);
    std::uint64_t cmask = (bot_e - top_e) >= 32 ? ~std::uint64_t{0}
                                                : ((std::uint64_t{1} << (2 * (bot_e - top_e))) - 1);
    std::vector<SquareFamily> out;
    std::size_t i = 0;
    while (i < codes.size()) {
        std::uint64_t top = codes[i] >> pshift;
        std::vector<std::pair<std::int64_t, std::int64_t>> cells;
        std::size_t j = i;
        std::uint64_t last = ~std::uint64_t{0};
        while (j < codes.size() && (codes[j] >> pshift) == top) {
            std::uint64_t child = codes[j] >> cshift;
            if (child != last) {
                // local coordinates relative to the top square
                std::uint64_t local = child & cmask;
                auto [lx, ly] = morton_decode(local);
                cells.emplace_back(lx + (std::int64_t{1} << 30), ly + (std::int64_t{1} << 30));
                last = child;
            }
            ++j;
        }
        out.emplace_back(bot_e - top_e, std::move(cells));
        i = j;
    }
    return out;
}

mpz_class floor_q(const mpq_class& q) {
    mpz_class z;
    mpz_fdiv_q(z.get_mpz_t(), q.get_num().get_mpz_t(), q.get_den().get_mpz_t());
    return z;
}

mpz_class ceil_q(const mpq_class& q) {
    mpz_class z;
    mpz_cdiv_q(z.get_mpz_t(), q.get_num().get_mpz_t(), q.get_den().get_mpz_t());
    return z;
}

long floor_long(const mpq_class& q) { return floor_q(q).get_si(); }

}  // namespace

mpq_class BranchingFunction::at(const mpq_class& x) const {
    if (x < 0 || x > m) throw input_error("branching function: evaluation outside [0,m]");
    long j = floor_long(x);
    if (j == m) return values.back();
    mpq_class frac = x - j;
    return values[static_cast<std::size_t>(j)] +
           (values[static_cast<std::size_t>(j) + 1] - values[static_cast<std::size_t>(j)]) * frac;
}

BranchingFunction BranchingFunction::from_values(int base_k, std::vector<mpq_class> values) {
    if (base_k < 1 || values.size() < 2) throw input_error("branching function: bad values");
    for (mpq_class& v : values) v.canonicalize();  // equality tests need canonical form
    if (values.front() != 0) throw input_error("branching function: f(0) must be 0");
    for (std::size_t i = 1; i < values.size(); ++i) {
        mpq_class inc = values[i] - values[i - 1];
        if (inc < 0 || inc > 2) {
            throw input_error("branching function: increments must lie in [0,2]");
        }
    }
    BranchingFunction f;
    f.base_k = base_k;
    f.m = static_cast<int>(values.size()) - 1;
    f.values = std::move(values);
    return f;
}

bool is_uniform(const SquareFamily& P, const std::vector<int>& scale_ks,
                std::vector<std::int64_t>* counts_out, std::string* witness_out) {
    if (scale_ks.empty() || scale_ks.back() != P.scale_k()) {
        throw input_error("is_uniform: scale list must end at the family scale");
    }
    int prev = 0;
    for (int e : scale_ks) {
        if (e <= prev) throw input_error("is_uniform: scale list must be strictly increasing");
        prev = e;
    }
    std::vector<std::uint64_t> codes;
    codes.reserve(P.size());
    for (const auto& [ix, iy] : P.cells()) codes.push_back(morton_code(ix, iy));
    std::sort(codes.begin(), codes.end());
    if (counts_out) counts_out->clear();
    int parent_e = 0;
    for (int e : scale_ks) {
        int pshift = 2 * (P.scale_k() - parent_e);
        int cshift = 2 * (P.scale_k() - e);
        std::int64_t level_count = -1;
        std::uint64_t first_parent = 0;
        std::size_t i = 0;
        while (i < codes.size()) {
            std::uint64_t parent = codes[i] >> pshift;
            std::int64_t children = 0;
            std::uint64_t last_child = 0;
            bool have_child = false;
            std::size_t j = i;
            while (j < codes.size() && (codes[j] >> pshift) == parent) {
                std::uint64_t child = codes[j] >> cshift;
                if (!have_child || child != last_child) {
                    ++children;
                    last_child = child;
                    have_child = true;
                }
                ++j;
            }
            if (level_count < 0) {
                level_count = children;
                first_parent = parent;
            } else if (level_count != children) {
                if (witness_out) {
                    auto [ax, ay] = morton_decode(first_parent << pshift);
                    auto [bx, by] = morton_decode(parent << pshift);
                    int d = P.scale_k() - parent_e;
                    std::ostringstream os;
                    os << "at scale 2^-" << e << ": parent (" << floor_shift(ax, d) << ","
                       << floor_shift(ay, d) << ") has " << level_count << " children, parent ("
                       << floor_shift(bx, d) << "," << floor_shift(by, d) << ") has " << children;
                    *witness_out = os.str();
                }
                return false;
            }
            i = j;
        }
        if (counts_out) counts_out->push_back(level_count);
        parent_e = e;
    }
    return true;
}

BranchingFunction branching_function(const SquareFamily& P, int base_k) {
    if (base_k < 1) throw input_error("branching_function: bad branching base");
    if (P.empty()) throw input_error("branching_function: empty family");
    if (P.scale_k() % base_k != 0) {
        throw input_error("branching_function: scale is not a power of the base");
    }
    int m = P.scale_k() / base_k;
    std::vector<int> ladder;
    for (int i = 1; i <= m; ++i) ladder.push_back(i * base_k);
    std::vector<std::int64_t> counts;
    std::string witness;
    if (!is_uniform(P, ladder, &counts, &witness)) {
        throw input_error("branching_function: family is not uniform on the ladder (" + witness +
                          ")");
    }
    BranchingFunction f;
    f.base_k = base_k;
    f.m = m;
    f.counts = counts;
    f.values.resize(static_cast<std::size_t>(m) + 1);
    f.values[0] = 0;
    for (int i = 1; i <= m; ++i) {
        mpq_class inc =
            quantize_log2(mpz_class(counts[static_cast<std::size_t>(i - 1)]), kExponentDenomBits) /
            base_k;
        f.values[static_cast<std::size_t>(i)] = f.values[static_cast<std::size_t>(i - 1)] + inc;
    }
    return f;
}

mpq_class slope_on(const BranchingFunction& f, const mpq_class& a, const mpq_class& b) {
    if (!(a < b)) throw input_error("slope_on: need a < b");
    return (f.at(b) - f.at(a)) / (b - a);
}

namespace {

// breakpoints of f restricted to [a,b]: a, b, and the integers strictly inside
std::vector<mpq_class> window_breakpoints(const mpq_class& a, const mpq_class& b) {
    std::vector<mpq_class> xs;
    xs.push_back(a);
    for (long j = floor_long(a) + 1; mpq_class(j) < b; ++j) {
        if (mpq_class(j) > a) xs.emplace_back(j);
    }
    xs.push_back(b);
    return xs;
}

}  // namespace

bool is_eps_linear(const BranchingFunction& f, const mpq_class& a, const mpq_class& b,
                   const mpq_class& eps) {
    if (!(a < b)) throw input_error("is_eps_linear: need a < b");
    mpq_class sf = slope_on(f, a, b);
    mpq_class fa = f.at(a);
    mpq_class budget = eps * (b - a);
    for (const mpq_class& x : window_breakpoints(a, b)) {
        mpq_class dev = f.at(x) - (fa + sf * (x - a));
        if (dev < 0) dev = -dev;
        if (dev > budget) return false;
    }
    return true;
}

bool is_eps_superlinear(const BranchingFunction& f, const mpq_class& a, const mpq_class& b,
                        const mpq_class& eps) {
    if (!(a < b)) throw input_error("is_eps_superlinear: need a < b");
    mpq_class sf = slope_on(f, a, b);
    mpq_class fa = f.at(a);
    mpq_class budget = eps * (b - a);
    for (const mpq_class& x : window_breakpoints(a, b)) {
        if (f.at(x) < fa + sf * (x - a) - budget) return false;
    }
    return true;
}

nlohmann::ordered_json IntervalDecomposition::to_json() const {
    nlohmann::ordered_json j;
    j["eps_num"] = eps.get_num().get_str();
    j["eps_den"] = eps.get_den().get_str();
    j["leftover_num"] = leftover.get_num().get_str();
    j["leftover_den"] = leftover.get_den().get_str();
    j["tau_num"] = tau.get_num().get_str();
    j["tau_den"] = tau.get_den().get_str();
    j["intervals"] = nlohmann::ordered_json::array();
    for (const DecInterval& it : intervals) {
        nlohmann::ordered_json row;
        row["a"] = to_double(it.a);
        row["b"] = to_double(it.b);
        row["tag"] = it.tag == WindowTag::Linear ? "linear" : "superlinear";
        row["slope_num"] = it.slope.get_num().get_str();
        row["slope_den"] = it.slope.get_den().get_str();
        j["intervals"].push_back(row);
    }
    return j;
}

IntervalDecomposition linear_decompose(const BranchingFunction& f, const mpq_class& eps) {
    if (!(eps > 0)) throw input_error("linear_decompose: eps must be positive");
    const long m = f.m;
    // depth schedule: start at ceil(log2(1/tau0)) for tau0 = eps^2, deepen
    // until the discarded measure fits under eps * m; unit intervals are
    // 0-linear, so the deepest schedule always succeeds
    int depth_floor = 1;
    {
        mpq_class tau0 = eps * eps;
        while (mpq_class(1, std::int64_t{1} << depth_floor) > tau0 && depth_floor < 62) {
            ++depth_floor;
        }
    }
    for (;; ++depth_floor) {
        IntervalDecomposition out;
        out.eps = eps;
        out.leftover = 0;
        mpq_class min_len = m;
        struct Frame {
            long a, b;
            int depth;
        };
        std::vector<Frame> stack{{0, m, 0}};
        std::vector<DecInterval> acc;
        while (!stack.empty()) {
            Frame fr = stack.back();
            stack.pop_back();
            if (is_eps_linear(f, fr.a, fr.b, eps)) {
                DecInterval it;
                it.a = fr.a;
                it.b = fr.b;
                it.tag = WindowTag::Linear;
                it.slope = slope_on(f, fr.a, fr.b);
                it.eps_claim = eps;
                acc.push_back(std::move(it));
                min_len = std::min(min_len, mpq_class(fr.b - fr.a));
                continue;
            }
            if (fr.depth >= depth_floor) {
                out.leftover += fr.b - fr.a;
                continue;
            }
            long mid = (fr.a + fr.b) / 2;
            stack.push_back({mid, fr.b, fr.depth + 1});
            stack.push_back({fr.a, mid, fr.depth + 1});
        }
        if (out.leftover <= eps * m) {
            std::sort(acc.begin(), acc.end(),
                      [](const DecInterval& x, const DecInterval& y) { return x.a < y.a; });
            out.intervals = std::move(acc);
            out.tau = out.intervals.empty() ? mpq_class(0) : min_len / m;
            return out;
        }
        if (depth_floor > 62) throw check_error("linear_decompose: schedule exhausted");
    }
}

namespace {

// largest x below `upper` with slope_on(f, x, d) exactly s, given that the
// slope from upper is below s and the slope from 0 is above s
mpq_class largest_slope_root(const BranchingFunction& f, const mpq_class& d, const mpq_class& s,
                             const mpq_class& upper) {
    mpq_class fd = f.at(d);
    auto g = [&](const mpq_class& x) -> mpq_class { return fd - f.at(x) - s * (d - x); };
    mpq_class hi = upper;
    mpq_class g_hi = g(hi);
    if (!(g_hi < 0)) throw check_error("largest_slope_root: right end not below target slope");
    long lo_int = floor_long(hi);
    if (mpq_class(lo_int) == hi) --lo_int;
    for (long j = lo_int; j >= 0; --j) {
        mpq_class lo(j);
        mpq_class g_lo = g(lo);
        if (g_lo >= 0) {
            if (g_lo == 0) return lo;
            return lo + g_lo * (hi - lo) / (g_lo - g_hi);
        }
        hi = lo;
        g_hi = g_lo;
    }
    throw check_error("largest_slope_root: no crossing found");
}

}  // namespace

IntervalDecomposition kaufman_decompose(const BranchingFunction& f, const mpq_class& s,
                                        const mpq_class& t, const mpq_class& eps) {
    if (!(s > 0 && s < 2 && t > s && t <= 2)) {
        throw input_error("kaufman_decompose: need s in (0,2), t in (s,2]");
    }
    const long m = f.m;
    for (long i = 0; i <= m; ++i) {
        if (f.values[static_cast<std::size_t>(i)] < t * i - eps * m) {
            throw input_error("kaufman_decompose: hypothesis f(x) >= t x - eps m fails");
        }
    }
    IntervalDecomposition base = linear_decompose(f, eps * eps);
    std::vector<DecInterval> work = base.intervals;  // ascending
    std::vector<DecInterval> final_out;              // collected right to left
    mpq_class leftover = base.leftover;
    const mpq_class discard_cap = eps * m / (t - s);
    long guard = 8 * (m + static_cast<long>(work.size()) + 2);
    while (guard-- > 0) {
        while (!work.empty() && work.back().slope >= s) {
            final_out.push_back(work.back());
            work.pop_back();
        }
        if (work.empty()) break;
        DecInterval bad = work.back();
        work.pop_back();
        if (bad.b <= discard_cap) {
            for (const DecInterval& it : work) leftover += it.b - it.a;
            leftover += bad.b - bad.a;
            work.clear();
            break;
        }
        mpq_class c_prime = largest_slope_root(f, bad.b, s, bad.a);
        DecInterval merged;
        merged.a = c_prime;
        merged.b = bad.b;
        merged.tag = WindowTag::Superlinear;
        merged.slope = s;
        merged.eps_claim = eps;
        if (slope_on(f, merged.a, merged.b) != s) {
            throw check_error("kaufman_decompose: merged slope not exactly s");
        }
        final_out.push_back(merged);
        while (!work.empty() && work.back().a >= c_prime) {
            work.pop_back();  // fully covered by the merged interval
        }
        if (!work.empty() && work.back().b > c_prime) {
            DecInterval& last = work.back();
            if (c_prime - last.a <= eps * (last.b - last.a)) {
                leftover += c_prime - last.a;  // discard the small stub
                work.pop_back();
            } else {
                // a stub of at least an eps fraction of an (eps^2)-linear
                // interval is 2 eps-linear on its own
                last.b = c_prime;
                last.slope = slope_on(f, last.a, last.b);
                last.eps_claim = 2 * eps;
            }
        }
    }
    if (guard <= 0) throw check_error("kaufman_decompose: scan failed to terminate");

    IntervalDecomposition out;
    out.eps = eps;
    std::sort(final_out.begin(), final_out.end(),
              [](const DecInterval& x, const DecInterval& y) { return x.a < y.a; });
    out.intervals = std::move(final_out);
    mpq_class covered = 0;
    mpq_class min_len = m;
    for (const DecInterval& it : out.intervals) {
        covered += it.b - it.a;
        min_len = std::min(min_len, mpq_class(it.b - it.a));
    }
    out.leftover = m - covered;
    out.tau = out.intervals.empty() ? mpq_class(0) : min_len / m;
    mpq_class leftover_budget = 8 * (1 + 1 / (t - s)) * eps * m;
    if (out.leftover > leftover_budget) {
        throw check_error("kaufman_decompose: leftover exceeded 8(1+1/(t-s)) eps m");
    }
    if (!verify_tags(f, out, s)) {
        throw check_error("kaufman_decompose: tag re-verification failed");
    }
    return out;
}

bool verify_tags(const BranchingFunction& f, const IntervalDecomposition& dec, const mpq_class& s) {
    for (const DecInterval& it : dec.intervals) {
        if (it.tag == WindowTag::Linear) {
            if (!(it.slope >= s)) return false;
            if (!is_eps_linear(f, it.a, it.b, it.eps_claim)) return false;
        } else {
            if (it.slope != s) return false;
            if (slope_on(f, it.a, it.b) != s) return false;
            if (!is_eps_superlinear(f, it.a, it.b, it.eps_claim)) return false;
        }
    }
    return true;
}

nlohmann::ordered_json ScaleDecomposition::to_json() const {
    nlohmann::ordered_json j;
    j["base_exponent"] = base_k;
    j["levels"] = m;
    j["tau_num"] = tau.get_num().get_str();
    j["tau_den"] = tau.get_den().get_str();
    mpq_class bad = 0;
    for (const ScaleWindow& w : windows) {
        if (!w.structured) bad += w.b - w.a;
    }
    j["leftover_levels_num"] = bad.get_num().get_str();
    j["leftover_levels_den"] = bad.get_den().get_str();
    j["windows"] = nlohmann::ordered_json::array();
    for (const ScaleWindow& w : windows) {
        nlohmann::ordered_json row;
        row["a"] = w.a;
        row["b"] = w.b;
        row["structured"] = w.structured;
        if (w.structured) {
            row["tag"] = w.tag == WindowTag::Linear ? "linear" : "superlinear";
            row["dimension_num"] = w.dimension.get_num().get_str();
            row["dimension_den"] = w.dimension.get_den().get_str();
        }
        j["windows"].push_back(row);
    }
    return j;
}

ScaleDecomposition multiscale_decompose(const SquareFamily& P, const mpq_class& s,
                                        const mpq_class& t, int base_k, const mpq_class& eps) {
    if (!(eps > 0 && eps < 1)) throw input_error("multiscale_decompose: eps outside (0,1)");
    BranchingFunction f = branching_function(P, base_k);
    const int m = f.m;
    const int k = P.scale_k();
    SpreadCertificate cert = spread_certificate(P, t);
    if (!(cert.C <= ScaledRational::pow2(mpq_class(k) * eps))) {
        throw input_error("multiscale_decompose: family not certified at delta^-eps");
    }
    // inner tolerance: eps / (8(1 + 1/(t-s)) + 4), relaxed to the measured
    // branching deficit when that is larger
    mpq_class c_st = 8 * (1 + 1 / (t - s)) + 4;
    mpq_class eps_inner = eps / c_st;
    mpq_class deficit = 0;
    for (int i = 0; i <= m; ++i) {
        mpq_class d = (t * i - f.values[static_cast<std::size_t>(i)]) / m;
        deficit = std::max(deficit, d);
    }
    eps_inner = std::max(eps_inner, deficit);
    if (eps_inner > eps) {
        throw input_error("multiscale_decompose: branching deficit exceeds eps");
    }
    IntervalDecomposition dec = kaufman_decompose(f, s, t, eps_inner);

    // snap endpoints to integers: shared endpoints go to the nearest integer
    // (ties up) for both neighbours, isolated ones round outward; overlaps
    // clamp left to right
    struct Snapped {
        long a, b;
        WindowTag tag;
    };
    std::vector<Snapped> snapped;
    long prev_end = 0;
    for (std::size_t i = 0; i < dec.intervals.size(); ++i) {
        const DecInterval& it = dec.intervals[i];
        bool shares_left = i > 0 && dec.intervals[i - 1].b == it.a;
        bool shares_right = i + 1 < dec.intervals.size() && dec.intervals[i + 1].a == it.b;
        long a = shares_left ? prev_end : std::max<long>(floor_q(it.a).get_si(), prev_end);
        long b;
        if (shares_right) {
            b = floor_q(it.b + mpq_class(1, 2)).get_si();  // nearest integer, ties up
        } else {
            b = ceil_q(it.b).get_si();
        }
        b = std::min<long>(b, m);
        if (b > a) {
            snapped.push_back({a, b, it.tag});
            prev_end = b;
        } else {
            prev_end = std::max(prev_end, b);
        }
    }

    ScaleDecomposition out;
    out.base_k = base_k;
    out.m = m;
    out.s = s;
    out.t = t;
    out.eps = eps;
    long cursor = 0;
    mpq_class min_len = m;
    for (const Snapped& w : snapped) {
        if (w.a > cursor) {
            out.windows.push_back({static_cast<int>(cursor), static_cast<int>(w.a), false,
                                   WindowTag::Linear, mpq_class(0)});
        }
        ScaleWindow sw;
        sw.a = static_cast<int>(w.a);
        sw.b = static_cast<int>(w.b);
        sw.structured = true;
        sw.tag = w.tag;
        sw.dimension = slope_on(f, w.a, w.b);
        out.windows.push_back(sw);
        min_len = std::min(min_len, mpq_class(w.b - w.a));
        cursor = w.b;
    }
    if (cursor < m) {
        out.windows.push_back(
            {static_cast<int>(cursor), m, false, WindowTag::Linear, mpq_class(0)});
    }
    out.tau = snapped.empty() ? mpq_class(0) : min_len / m;

    // conclusion (i): structured windows are nonempty, bad mass at most eps m
    mpq_class bad_len = 0;
    for (const ScaleWindow& w : out.windows) {
        if (w.structured) {
            if (w.b - w.a < 1) throw check_error("multiscale_decompose: empty structured window");
        } else {
            bad_len += w.b - w.a;
        }
    }
    if (bad_len > eps * m) {
        throw check_error("multiscale_decompose: bad-scale mass exceeded eps m");
    }
    // conclusion (iv): no two adjacent bad windows
    for (std::size_t i = 1; i < out.windows.size(); ++i) {
        if (!out.windows[i - 1].structured && !out.windows[i].structured) {
            throw check_error("multiscale_decompose: adjacent bad windows");
        }
    }
    // conclusion (iii): structured exponent mass sum(len * t_j) >= (t - eps) m
    mpq_class mass = 0;
    for (const ScaleWindow& w : out.windows) {
        if (w.structured) mass += mpq_class(w.b - w.a) * w.dimension;
    }
    if (mass < (t - eps) * m) {
        throw check_error("multiscale_decompose: structured exponent mass below (t - eps) m");
    }
    // conclusion (ii): window-level certificates for every coarse square
    for (const ScaleWindow& w : out.windows) {
        if (!w.structured) continue;
        int len_k = (w.b - w.a) * base_k;
        ScaledRational budget =
            ScaledRational::pow2(mpq_class(2) * eps * len_k + mpq_class(4) * base_k);
        for (const SquareFamily& local : partition_windows(P, w.a * base_k, w.b * base_k)) {
            SpreadCertificate c = spread_certificate(local, w.dimension);
            if (!(c.C <= budget)) {
                throw check_error("multiscale_decompose: window spread certificate over budget");
            }
            if (w.tag == WindowTag::Linear && len_k % 2 == 0) {
                RegularityCertificate r = regularity_certificate(local, w.dimension);
                if (!(r.K <= budget)) {
                    throw check_error(
                        "multiscale_decompose: window regularity certificate over budget");
                }
            }
        }
    }
    return out;
}

ScaleClasses classify_scales(const ScaleDecomposition& dec, const SquareFamily& P,
                             const mpq_class& s, const mpq_class& t, const mpq_class& eps_G) {
    (void)P;
    (void)s;
    if (!(eps_G > 0)) throw input_error("classify_scales: eps_G must be positive");
    if (dec.eps * 4 > eps_G) {
        throw input_error("classify_scales: need eps <= eps_G / 4");
    }
    ScaleClasses out;
    out.cls.resize(dec.windows.size());
    mpq_class good_len = 0;
    for (std::size_t i = 0; i < dec.windows.size(); ++i) {
        const ScaleWindow& w = dec.windows[i];
        if (!w.structured) {
            out.cls[i] = 'B';
        } else if (w.dimension >= t - eps_G / 2) {
            out.cls[i] = 'G';
            good_len += w.b - w.a;
        } else {
            out.cls[i] = 'N';
        }
    }
    out.good_length = good_len;
    out.required = eps_G * dec.m / 8;
    out.mass_ok = good_len >= out.required;
    return out;
}

UniformizeResult uniformize(const SquareFamily& P, const std::vector<int>& scale_ks) {
    if (P.empty()) throw input_error("uniformize: empty family");
    if (scale_ks.empty() || scale_ks.back() != P.scale_k()) {
        throw input_error("uniformize: scale list must end at the family scale");
    }
    {
        int prev = 0;
        for (int e : scale_ks) {
            if (e <= prev) throw input_error("uniformize: scales must be strictly increasing");
            prev = e;
        }
    }
    const int k = P.scale_k();
    const int n = static_cast<int>(scale_ks.size());
    std::vector<std::uint64_t> codes;
    codes.reserve(P.size());
    for (const auto& [ix, iy] : P.cells()) codes.push_back(morton_code(ix, iy));
    std::sort(codes.begin(), codes.end());
    std::vector<std::int64_t> Ns(static_cast<std::size_t>(n), 0);

    for (int level = n; level >= 1; --level) {
        int parent_e = level >= 2 ? scale_ks[static_cast<std::size_t>(level) - 2] : 0;
        int child_e = scale_ks[static_cast<std::size_t>(level) - 1];
        int pshift = 2 * (k - parent_e);
        int cshift = 2 * (k - child_e);
        struct Child {
            std::size_t begin, end;
        };
        struct Parent {
            std::vector<Child> children;  // mass descending, code ascending
        };
        std::vector<Parent> parents;
        std::size_t i = 0;
        std::int64_t max_children = 0;
        while (i < codes.size()) {
            std::uint64_t pcode = codes[i] >> pshift;
            Parent par;
            std::size_t j = i;
            while (j < codes.size() && (codes[j] >> pshift) == pcode) {
                std::uint64_t ccode = codes[j] >> cshift;
                std::size_t e = j;
                while (e < codes.size() && (codes[e] >> cshift) == ccode) ++e;
                par.children.push_back({j, e});
                j = e;
            }
            std::stable_sort(par.children.begin(), par.children.end(),
                             [](const Child& a, const Child& b) {
                                 return (a.end - a.begin) > (b.end - b.begin);
                             });
            max_children = std::max(max_children, static_cast<std::int64_t>(par.children.size()));
            parents.push_back(std::move(par));
            i = j;
        }
        // dyadic class N maximising the retained fine mass over parents with
        // at least N children (ties toward the smaller N)
        std::int64_t best_N = 1;
        std::int64_t best_mass = -1;
        for (std::int64_t N = 1; N <= max_children; N *= 2) {
            std::int64_t mass = 0;
            for (const Parent& par : parents) {
                if (static_cast<std::int64_t>(par.children.size()) < N) continue;
                for (std::int64_t c = 0; c < N; ++c) {
                    const Child& ch = par.children[static_cast<std::size_t>(c)];
                    mass += static_cast<std::int64_t>(ch.end - ch.begin);
                }
            }
            if (mass > best_mass) {
                best_mass = mass;
                best_N = N;
            }
        }
        Ns[static_cast<std::size_t>(level) - 1] = best_N;
        std::vector<std::uint64_t> next;
        next.reserve(static_cast<std::size_t>(best_mass));
        for (const Parent& par : parents) {
            if (static_cast<std::int64_t>(par.children.size()) < best_N) continue;
            for (std::int64_t c = 0; c < best_N; ++c) {
                const Child& ch = par.children[static_cast<std::size_t>(c)];
                next.insert(next.end(), codes.begin() + static_cast<std::ptrdiff_t>(ch.begin),
                            codes.begin() + static_cast<std::ptrdiff_t>(ch.end));
            }
        }
        std::sort(next.begin(), next.end());
        codes = std::move(next);
        if (codes.empty()) throw check_error("uniformize: selection emptied the family");
    }

    std::vector<std::pair<std::int64_t, std::int64_t>> cells;
    cells.reserve(codes.size());
    for (std::uint64_t c : codes) cells.push_back(morton_decode(c));
    UniformizeResult out;
    out.P = SquareFamily(k, std::move(cells));
    out.Ns = Ns;
    out.retained = mpq_class(static_cast<long>(out.P.size())) / static_cast<long>(P.size());
    // exact loss bound |P'| (4 k / n)^n >= |P|, logs base 2
    mpq_class factor = 1;
    mpq_class base = mpq_class(4 * k) / n;
    for (int i = 0; i < n; ++i) factor *= base;
    if (mpq_class(static_cast<long>(out.P.size())) * factor <
        mpq_class(static_cast<long>(P.size()))) {
        throw check_error("uniformize: exact loss bound violated");
    }
    if (!is_uniform(out.P, scale_ks)) throw check_error("uniformize: output not uniform");
    return out;
}

namespace {

void certify_windows(const SquareFamily& P, const std::vector<int>& scale_ks,
                     const std::vector<WindowClaim>& claims, const mpq_class& loss,
                     const char* who) {
    for (const WindowClaim& claim : claims) {
        if (claim.level < 1 || claim.level > static_cast<int>(scale_ks.size())) {
            throw input_error(std::string(who) + ": claim level out of range");
        }
        int top_e = claim.level >= 2 ? scale_ks[static_cast<std::size_t>(claim.level) - 2] : 0;
        int bot_e = scale_ks[static_cast<std::size_t>(claim.level) - 1];
        ScaledRational c_budget = claim.C.scaled(loss);
        for (const SquareFamily& local : partition_windows(P, top_e, bot_e)) {
            SpreadCertificate c = spread_certificate(local, claim.dimension);
            if (!(c.C <= c_budget)) {
                throw check_error(std::string(who) + ": window spread claim failed");
            }
            if (claim.regular) {
                if ((bot_e - top_e) % 2 != 0) {
                    throw input_error(std::string(who) + ": regular claim needs even window");
                }
                RegularityCertificate r = regularity_certificate(local, claim.dimension);
                if (!(r.K <= claim.K)) {
                    throw check_error(std::string(who) + ": window regularity claim failed");
                }
            }
        }
    }
}

}  // namespace

UniformizeResult uniform_refine(const SquareFamily& P, const SquareFamily& P_sub,
                                const std::vector<int>& scale_ks,
                                const std::vector<WindowClaim>& claims) {
    if (P_sub.scale_k() != P.scale_k()) throw input_error("uniform_refine: scale mismatch");
    if (P_sub.empty()) throw input_error("uniform_refine: empty subset");
    for (const auto& cell : P_sub.cells()) {
        if (!P.contains(cell.first, cell.second)) {
            throw input_error("uniform_refine: subset is not contained in the family");
        }
    }
    std::vector<std::int64_t> Ns;
    if (!is_uniform(P, scale_ks, &Ns)) {
        throw input_error("uniform_refine: family is not uniform");
    }
    certify_windows(P, scale_ks, claims, 1, "uniform_refine (input)");
    const int n = static_cast<int>(scale_ks.size());
    const int k = P.scale_k();
    mpq_class L = mpq_class(static_cast<long>(P.size())) / static_cast<long>(P_sub.size());
    mpq_class M = L;
    for (int i = 0; i < n; ++i) M *= 4 * k;
    UniformizeResult out = uniformize(P_sub, scale_ks);
    for (int j = 0; j < n; ++j) {
        if (mpq_class(out.Ns[static_cast<std::size_t>(j)]) * M <
            mpq_class(Ns[static_cast<std::size_t>(j)])) {
            throw check_error("uniform_refine: per-level branching dropped below N/M");
        }
    }
    certify_windows(out.P, scale_ks, claims, M, "uniform_refine (output)");
    out.retained = mpq_class(static_cast<long>(out.P.size())) / static_cast<long>(P.size());
    return out;
}

}  // namespace incgeo
