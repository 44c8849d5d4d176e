#include <doctest.h>

#include "incgeo/generators.hpp"
#include "incgeo/incidence.hpp"

using namespace incgeo;

namespace {

NiceConfiguration tiny_config(int k, std::int64_t M) {
    // one square with M tubes through its corner at distinct slopes
    NiceConfiguration config;
    config.k = k;
    config.s = mpq_class(1, 2);
    config.M = M;
    config.squares = SquareFamily(k, {{0, 0}});
    std::vector<std::pair<std::int64_t, std::int64_t>> cells;
    for (std::int64_t a = 0; a < M; ++a) cells.emplace_back(a, 0);
    TubeFamily fam(k, Convention::MainText, cells);
    config.C = spread_certificate(fam, config.s).C;
    config.tubes_per_square.push_back(fam);
    return config;
}

}  // namespace

TEST_CASE("four squares sharing the same M tubes count 4M incidences") {
    const int k = 4;
    const std::int64_t M = 3;
    std::vector<std::pair<std::int64_t, std::int64_t>> tube_cells = {{0, 0}, {1, 0}, {2, 0}};
    TubeFamily shared(k, Convention::MainText, tube_cells);
    NiceConfiguration config;
    config.k = k;
    config.s = mpq_class(1, 2);
    config.M = M;
    config.squares = SquareFamily(k, {{0, 0}, {1, 0}, {2, 0}, {3, 0}});
    for (int i = 0; i < 4; ++i) config.tubes_per_square.push_back(shared);
    config.C = spread_certificate(shared, config.s).C;
    REQUIRE(validate_nice(config).ok);
    IncidenceCount count = count_incidences(config, shared);
    CHECK(count.total == 4 * M);
    for (std::int64_t h : count.per_tube) CHECK(h == 4);
}

TEST_CASE("single square single tube counts one incidence") {
    NiceConfiguration config = tiny_config(4, 1);
    IncidenceCount count = count_incidences(config, config.tubes_per_square[0]);
    CHECK(count.total == 1);
    NiceConfiguration zero = tiny_config(4, 1);
    zero.M = 0;
    zero.tubes_per_square[0] = TubeFamily(4, Convention::MainText, {});
    CHECK(!validate_nice(zero).ok);
}

TEST_CASE("random configuration count equals the double loop") {
    FurstenbergConfig fc = furstenberg_config(5, mpq_class(1, 2), mpq_class(1), 77);
    IncidenceCount fast = count_incidences(fc.config, fc.universe);
    std::int64_t brute = 0;
    for (std::size_t i = 0; i < fc.config.squares.size(); ++i) {
        for (std::size_t u = 0; u < fc.universe.size(); ++u) {
            const auto& [ia, ib] = fc.universe.cells()[u];
            if (fc.config.tubes_per_square[i].contains(ia, ib)) ++brute;
        }
    }
    CHECK(fast.total == brute);
    std::int64_t hist_sum = 0;
    for (std::int64_t h : fast.per_tube) hist_sum += h;
    CHECK(hist_sum == fast.total);
}

TEST_CASE("counting is additive over square partitions") {
    FurstenbergConfig fc = furstenberg_config(6, mpq_class(1, 2), mpq_class(1), 5);
    IncidenceCount whole = count_incidences(fc.config, fc.universe);
    NiceConfiguration left = fc.config, right = fc.config;
    std::vector<std::pair<std::int64_t, std::int64_t>> lc, rc;
    std::vector<TubeFamily> lt, rt;
    for (std::size_t i = 0; i < fc.config.squares.size(); ++i) {
        if (i % 2 == 0) {
            lc.push_back(fc.config.squares.cells()[i]);
            lt.push_back(fc.config.tubes_per_square[i]);
        } else {
            rc.push_back(fc.config.squares.cells()[i]);
            rt.push_back(fc.config.tubes_per_square[i]);
        }
    }
    left.squares = SquareFamily(fc.config.k, lc);
    left.tubes_per_square = lt;
    right.squares = SquareFamily(fc.config.k, rc);
    right.tubes_per_square = rt;
    CHECK(count_incidences(left, fc.universe).total + count_incidences(right, fc.universe).total ==
          whole.total);
}

TEST_CASE("strict mode rejects tubes outside the universe") {
    NiceConfiguration config = tiny_config(4, 2);
    TubeFamily partial(4, Convention::MainText, {{0, 0}});
    CHECK_THROWS_AS(count_incidences(config, partial, true), input_error);
    CHECK(count_incidences(config, partial, false).total == 1);
}

TEST_CASE("theta values and conventions") {
    CHECK(theta(mpq_class(1, 2), mpq_class(1)) == 0);
    CHECK(theta(mpq_class(1, 2), mpq_class(1, 2)) == 1);
    CHECK(theta(mpq_class(1), mpq_class(1)) == 0);
    CHECK(theta(mpq_class(1, 4), mpq_class(1, 2)) == mpq_class(2, 3));
    CHECK_THROWS_AS(theta(mpq_class(1, 2), mpq_class(2)), input_error);
}

TEST_CASE("upper bound spot values") {
    ScaledRational one(mpq_class(1), mpq_class(0));
    {
        // s = t (theta = 1), M delta^s = 1: max(sqrt(|T|) |P|, |T|)
        BoundValue b =
            incidence_upper_bound(one, one, 16, 8, mpq_class(1, 2), mpq_class(1, 2), 256, 64);
        CHECK(b.approx == doctest::Approx(1024.0));
        LogValue expect{mpq_class(10)};
        CHECK(b.log2_value.compare(expect) == 0);
    }
    {
        // theta = 0: bound independent of M
        BoundValue b1 =
            incidence_upper_bound(one, one, 16, 8, mpq_class(1, 2), mpq_class(1), 256, 64);
        BoundValue b2 =
            incidence_upper_bound(one, one, 64, 8, mpq_class(1, 2), mpq_class(1), 256, 64);
        CHECK(b1.log2_value.compare(b2.log2_value) == 0);
    }
    {
        // (M delta^s)^(theta/2) = 1 at M = 2^4, delta = 2^-8, s = 1/2
        BoundValue b =
            incidence_upper_bound(one, one, 16, 8, mpq_class(1, 2), mpq_class(3, 4), 1024, 100);
        CHECK(b.approx == doctest::Approx(3200.0));
    }
}

TEST_CASE("lower bound spot values") {
    ScaledRational one(mpq_class(1), mpq_class(0));
    BoundValue b = tube_lower_bound(one, one, 8, 6, mpq_class(1, 2), mpq_class(1, 2));
    CHECK(b.approx == doctest::Approx(64.0));  // M delta^-s = 8 * 2^3
    BoundValue c = tube_lower_bound(one, one, 16, 6, mpq_class(1, 2), mpq_class(1));
    CHECK(c.approx == doctest::Approx(256.0));  // exponent 1 gives M^2
}

TEST_CASE("validate_nice pinpoints violations") {
    NiceConfiguration config = tiny_config(4, 2);
    REQUIRE(validate_nice(config).ok);
    NiceConfiguration bad = config;
    bad.tubes_per_square[0] = TubeFamily(4, Convention::MainText, {{0, 0}, {0, 8}});
    NiceReport report = validate_nice(bad);
    CHECK(!report.ok);
    CHECK(report.square_index == 0);
    CHECK(report.tube.has_value());
    NiceConfiguration wrong = config;
    wrong.M = 3;
    CHECK(!validate_nice(wrong).ok);
}

TEST_CASE("elementary exponents") {
    ElementaryExponents e = elementary_exponents(mpq_class(1, 2), mpq_class(1));
    CHECK(e.wolff == 1);
    CHECK(e.elementary_furstenberg == 1);
    ElementaryExponents f = elementary_exponents(mpq_class(3, 4), mpq_class(1));
    CHECK(f.wolff == mpq_class(3, 2));
    ElementaryExponents g = elementary_exponents(mpq_class(1, 4), mpq_class(1, 2));
    CHECK(g.wolff == mpq_class(3, 4));
    CHECK(!g.epsilon_known);
    CHECK_THROWS_AS(elementary_exponents(mpq_class(1), mpq_class(2)), input_error);
}

TEST_CASE("measured incidences respect the budgeted bounds") {
    const std::uint64_t seeds[] = {1, 2, 3};
    for (std::uint64_t seed : seeds) {
        for (int k : {6, 7, 8}) {
            FurstenbergConfig fc = furstenberg_config(k, mpq_class(1, 2), mpq_class(1), seed);
            IncidenceCount count = count_incidences(fc.config, fc.universe);
            BoundValue bound = incidence_upper_bound(
                fc.square_certificate.C, fc.config.C, fc.config.M, k, fc.config.s, mpq_class(1),
                static_cast<std::int64_t>(fc.universe.size()),
                static_cast<std::int64_t>(fc.config.squares.size()));
            LogValue measured = LogValue::log2_of(mpz_class(count.total));
            LogValue budget = bound.log2_value + log_budget(k, 2, 10);
            CHECK(measured.compare(budget) <= 0);
            BoundValue lower = tube_lower_bound(fc.square_certificate.C, fc.config.C, fc.config.M,
                                                k, fc.config.s, mpq_class(1));
            LogValue tubes = LogValue::log2_of(mpz_class(fc.universe.size()));
            CHECK((lower.log2_value - log_budget(k, 2, 10)).compare(tubes) <= 0);
        }
    }
}

TEST_CASE("lower bound stays under the trivial tube cap on battery parameters") {
    const std::uint64_t seeds[] = {1, 2};
    for (std::uint64_t seed : seeds) {
        const int k = 7;
        FurstenbergConfig fc = furstenberg_config(k, mpq_class(1, 2), mpq_class(1), seed);
        BoundValue lower = tube_lower_bound(fc.square_certificate.C, fc.config.C, fc.config.M, k,
                                            fc.config.s, mpq_class(1));
        LogValue cap{mpq_class(2 * k + 2)};  // log2(4 delta^-2)
        CHECK(lower.log2_value.compare(cap) <= 0);
    }
}
