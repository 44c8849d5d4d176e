#include <doctest.h>

#include <vector>

#include "incgeo/deltaset.hpp"
#include "incgeo/generators.hpp"
#include "incgeo/tubes.hpp"

using namespace incgeo;

namespace {

// line-sampling oracle: sample (a, b) on the fine sub-grid of the parameter
// square (half-open) and test whether the line crosses the square's y-window
// somewhere on its x-range; integer arithmetic over the common grid
bool meets_oracle(const DyadicTube& T, const DyadicSquare& p, int sample_k) {
    int d = sample_k - T.k;
    REQUIRE(d >= 0);
    std::int64_t steps = std::int64_t{1} << d;
    // all values scaled by 2^(sample_k + p.k): line value a x + b at the
    // square's x-edges against the y-window
    const std::int64_t w0 = p.iy << sample_k;
    const std::int64_t w1 = (p.iy + 1) << sample_k;
    for (std::int64_t ai = 0; ai < steps; ++ai) {
        std::int64_t a = T.ia * steps + ai;
        for (std::int64_t bi = 0; bi < steps; ++bi) {
            std::int64_t b = (T.ib * steps + bi) << p.k;
            std::int64_t va = a * p.ix + b;
            std::int64_t vb = a * (p.ix + 1) + b;
            std::int64_t lo = va < vb ? va : vb;
            std::int64_t hi = va < vb ? vb : va;
            if (va >= w0 && va < w1) return true;  // left endpoint is attained
            if (lo < w1 && hi > w0 && lo != hi) return true;
        }
    }
    return false;
}

}  // namespace

TEST_CASE("dual lines under both conventions") {
    LineDescriptor xaxis = dual_line(0, 0, Convention::MainText);
    CHECK(xaxis.residual(mpq_class(1, 3), 0) == 0);
    CHECK(xaxis.residual(0, mpq_class(1)) != 0);
    LineDescriptor diag = dual_line(1, 0, Convention::MainText);
    CHECK(diag.residual(mpq_class(5, 7), mpq_class(5, 7)) == 0);
    LineDescriptor vert = dual_line(0, mpq_class(3, 4), Convention::Appendix);
    CHECK(vert.residual(mpq_class(3, 4), mpq_class(9)) == 0);  // x = 3/4, any y
}

TEST_CASE("tube meets square: pinned cases") {
    int k = 3;
    DyadicTube T{k, 0, 0, Convention::MainText};  // lines y = a x + b, a,b in [0,1/8)
    DyadicSquare p{k, 0, 0};
    CHECK(tube_meets_square(T, p));  // point (0, b)
    // intercept near 1/2 cannot reach [0,1/8)^2 since a x < 1/8 on it
    DyadicTube far{k, 0, 4, Convention::MainText};
    CHECK(!tube_meets_square(far, p));
}

TEST_CASE("tube meets square agrees with dense line sampling at scale 2^-3") {
    const int k = 3;
    const int sample_k = 10;
    std::int64_t n = std::int64_t{1} << k;
    std::size_t mismatches = 0;
    std::size_t incident = 0;
    for (std::int64_t ia = -n; ia < n; ++ia) {
        for (std::int64_t ib = -n; ib < 2 * n; ++ib) {
            DyadicTube T{k, ia, ib, Convention::MainText};
            for (std::int64_t px = 0; px < n; ++px) {
                for (std::int64_t py = 0; py < n; ++py) {
                    DyadicSquare p{k, px, py};
                    bool exact = tube_meets_square(T, p);
                    bool sampled = meets_oracle(T, p, sample_k);
                    if (exact != sampled) ++mismatches;
                    if (exact) ++incident;
                }
            }
        }
    }
    CHECK(mismatches == 0);
    CHECK(incident > 0);
}

TEST_CASE("appendix convention swaps the roles of x and y") {
    DyadicTube T{3, 2, 1, Convention::Appendix};  // x = a y + b
    DyadicTube Tm{3, 2, 1, Convention::MainText};
    DyadicSquare p{3, 1, 2};
    DyadicSquare swapped{3, 2, 1};
    CHECK(tube_meets_square(T, p) == tube_meets_square(Tm, swapped));
}

TEST_CASE("point membership in tubes") {
    DyadicTube T{2, 1, 0, Convention::MainText};  // a in [1/4,1/2), b in [0,1/4)
    CHECK(point_in_tube(T, mpq_class(1, 2), mpq_class(1, 8)));   // y = 1/4 x + 0
    CHECK(!point_in_tube(T, mpq_class(1, 2), mpq_class(1, 2)));  // too high: max 1/4+1/4
    CHECK(point_in_tube(T, 0, mpq_class(1, 8)));                 // b = 1/8 works at x = 0
}

TEST_CASE("dual star reflects the slope interval and re-canonicalises") {
    DyadicTube T{4, 0, 5, Convention::MainText};
    DyadicSquare d = dual_star(T);
    CHECK(d.k == 4);
    CHECK(d.ix == -1);  // x-extent [-delta, 0)
    CHECK(d.iy == 5);
    DyadicTube T2{4, -3, 7, Convention::MainText};
    CHECK(dual_star(T2).ix == 2);  // [-a0-delta, -a0) with a0 = -3 delta
    // involution on indices
    DyadicSquare dd = dual_star(DyadicTube{4, dual_star(T2).ix, dual_star(T2).iy,
                                            Convention::MainText});
    CHECK(dd.ix == T2.ia);
    CHECK(dd.iy == T2.ib);
}

TEST_CASE("incidence transfers to the dual side exhaustively at 2^-4") {
    // for every incident (p, T) the tube of p meets the reflected square of T
    const int k = 4;
    std::int64_t n = std::int64_t{1} << k;
    std::size_t checked = 0;
    for (std::int64_t ia = -n; ia < n; ia += 3) {  // subsample for speed; the
        for (std::int64_t ib = -n; ib < 2 * n; ib += 2) {  // full sweep runs in acceptance
            DyadicTube T{k, ia, ib, Convention::MainText};
            DyadicSquare dstar = dual_star(T);
            for (std::int64_t px = 0; px < n; ++px) {
                for (std::int64_t py = 0; py < n; ++py) {
                    DyadicSquare p{k, px, py};
                    if (!tube_meets_square(T, p)) continue;
                    DyadicTube tp{k, px, py, Convention::MainText};
                    CHECK(tube_meets_square(tp, dstar));
                    ++checked;
                }
            }
        }
    }
    CHECK(checked > 100);
}

TEST_CASE("slope fibers of all tubes through a square are at most 10-to-1") {
    for (int k = 3; k <= 5; ++k) {
        std::int64_t n = std::int64_t{1} << k;
        for (std::int64_t px = 0; px < n; px += (k == 5 ? 7 : 1)) {
            for (std::int64_t py = 0; py < n; py += (k == 5 ? 5 : 1)) {
                DyadicSquare p{k, px, py};
                std::vector<std::pair<std::int64_t, std::int64_t>> cells;
                for (std::int64_t ia = -n; ia < n; ++ia) {
                    for (std::int64_t ib = -n; ib < 2 * n; ++ib) {
                        if (tube_meets_square(DyadicTube{k, ia, ib, Convention::MainText}, p)) {
                            cells.emplace_back(ia, ib);
                        }
                    }
                }
                TubeFamily fam(k, Convention::MainText, std::move(cells));
                SlopeFibers fibers = slope_fibers(fam, p);
                CHECK(fibers.max_fiber <= 10);
            }
        }
    }
}

TEST_CASE("slope fibers reject tubes that miss the square") {
    TubeFamily fam(3, Convention::MainText, {{0, 4}});
    CHECK_THROWS_AS(slope_fibers(fam, DyadicSquare{3, 0, 0}), input_error);
    TubeFamily one(3, Convention::MainText, {{0, 0}});
    SlopeFibers f = slope_fibers(one, DyadicSquare{3, 0, 0});
    CHECK(f.max_fiber == 1);
    CHECK(f.fibers.size() == 1);
}

TEST_CASE("fiber sizes match brute-force grouping at 2^-4") {
    const int k = 4;
    std::int64_t n = std::int64_t{1} << k;
    DyadicSquare p{k, 5, 9};
    std::vector<std::pair<std::int64_t, std::int64_t>> cells;
    for (std::int64_t ia = -n; ia < n; ++ia) {
        for (std::int64_t ib = -n; ib < 2 * n; ++ib) {
            if (tube_meets_square(DyadicTube{k, ia, ib, Convention::MainText}, p)) {
                cells.emplace_back(ia, ib);
            }
        }
    }
    TubeFamily fam(k, Convention::MainText, cells);
    SlopeFibers fibers = slope_fibers(fam, p);
    for (const auto& [slope, members] : fibers.fibers) {
        std::size_t brute = 0;
        for (const auto& [ia, ib] : cells) {
            if (ia == slope) ++brute;
        }
        CHECK(members.size() == brute);
    }
}

TEST_CASE("slope-set and parameter-set certificates track each other") {
    // all tubes through one square: slope certificate controls the parameter
    // certificate within the fiber bound, and conversely within a constant
    const int k = 4;
    std::int64_t n = std::int64_t{1} << k;
    DyadicSquare p{k, 3, 7};
    std::vector<std::pair<std::int64_t, std::int64_t>> cells;
    for (std::int64_t ia = -n; ia < n; ia += 2) {
        for (std::int64_t ib = -n; ib < 2 * n; ++ib) {
            if (tube_meets_square(DyadicTube{k, ia, ib, Convention::MainText}, p)) {
                cells.emplace_back(ia, ib);
            }
        }
    }
    TubeFamily fam(k, Convention::MainText, cells);
    mpq_class s(1, 2);
    SpreadCertificate c_params = spread_certificate(fam, s);
    SpreadCertificate c_slopes = spread_certificate(fam.slope_family(), s);
    CHECK(c_params.C <= c_slopes.C.scaled(10));
    CHECK(c_slopes.C <= c_params.C.scaled(64));
}

TEST_CASE("rescale cover: identity reference square") {
    DyadicTube T{5, 3, 7, Convention::MainText};
    auto cover = rescale_tube_cover(T, DyadicSquare{0, 0, 0});
    REQUIRE(cover.size() == 1);
    CHECK(cover[0] == T);
}

TEST_CASE("rescale cover: aligned slope at the corner square") {
    // sigma = 0, reference square at the origin: slopes stay 0, intercepts
    // scale by the inverse side length
    DyadicTube T{6, 0, 8, Convention::MainText};
    DyadicSquare Q{3, 0, 0};
    auto cover = rescale_tube_cover(T, Q);
    REQUIRE(!cover.empty());
    CHECK(cover.size() <= 2);
    for (const DyadicTube& c : cover) {
        CHECK(c.k == 3);
        CHECK(c.ia == 0);
    }
    CHECK(cover[0].ib == 8);  // intercept 8*2^-6 maps to 8*2^-6/2^-3 = 8*2^-3
}

TEST_CASE("rescale cover contains every sampled image point") {
    SplitMix64 rng_seed(2024);
    const int k = 6, kq = 3;
    std::int64_t nq = std::int64_t{1} << kq;
    for (int trial = 0; trial < 40; ++trial) {
        std::int64_t ia = static_cast<std::int64_t>(uniform_below(rng_seed, 2 << k)) - (1 << k);
        std::int64_t ib = static_cast<std::int64_t>(uniform_below(rng_seed, 3 << k)) - (1 << k);
        std::int64_t qx = static_cast<std::int64_t>(uniform_below(rng_seed, nq));
        std::int64_t qy = static_cast<std::int64_t>(uniform_below(rng_seed, nq));
        DyadicTube T{k, ia, ib, Convention::MainText};
        DyadicSquare Q{kq, qx, qy};
        auto cover = rescale_tube_cover(T, Q);
        CHECK(cover.size() <= 4);
        // sample points of T (parameter grid x positions), map through the
        // homothety, check membership in the cover
        mpq_class delta(1, 1 << k), Delta(1, 1 << kq);
        for (int ai = 0; ai < 4; ++ai) {
            for (int bi = 0; bi < 4; ++bi) {
                mpq_class a = ia * delta + mpq_class(ai, 4) * delta;
                mpq_class b = ib * delta + mpq_class(bi, 4) * delta;
                for (int xi = 0; xi < 5; ++xi) {
                    mpq_class x = qx * Delta + mpq_class(xi, 5) * Delta;
                    mpq_class y = a * x + b;
                    // image point under S_Q
                    mpq_class X = (x - qx * Delta) / Delta;
                    mpq_class Y = (y - qy * Delta) / Delta;
                    bool in_cover = false;
                    for (const DyadicTube& c : cover) {
                        if (point_in_tube(c, X, Y)) in_cover = true;
                    }
                    CHECK(in_cover);
                }
            }
        }
    }
}

TEST_CASE("tube family serialization round-trips") {
    TubeFamily fam(4, Convention::Appendix, {{-3, 5}, {0, 0}, {7, -2}});
    std::string text = to_text(fam);
    TubeFamily back = tubes_from_text(text);
    CHECK(back == fam);
    CHECK(to_text(back) == text);
}

TEST_CASE("tube families reject out-of-range slopes and mixed scales") {
    CHECK_THROWS_AS(TubeFamily(3, Convention::MainText, {{8, 0}}), input_error);
    CHECK_NOTHROW(TubeFamily(3, Convention::MainText, {{7, 0}, {-8, 1}}));
}
