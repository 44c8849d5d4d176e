#include <doctest.h>

#include <map>
#include <set>

#include "incgeo/generators.hpp"
#include "incgeo/refine.hpp"

using namespace incgeo;

TEST_CASE("thick cover at the same scale keeps singleton packets") {
    FurstenbergConfig fc = furstenberg_config(6, mpq_class(1, 2), mpq_class(1), 2);
    ThickCoverResult cover = thick_tube_refine(fc.config, 6);
    CHECK(cover.trace.m1 == 1);  // every coarse tube holds exactly one fine tube
    CHECK(cover.squares.size() == fc.config.squares.size());
}

TEST_CASE("hand-traceable pigeonhole: shared separated slopes") {
    // all squares share coarse-separated slopes: every coarse tube holds one
    // fine tube per square it serves, so m1 = 1
    const int k = 6, kc = 3;
    std::vector<std::pair<std::int64_t, std::int64_t>> square_cells;
    for (std::int64_t x = 0; x < 8; ++x) square_cells.emplace_back(8 * x, 0);
    SquareFamily squares(k, square_cells);
    NiceConfiguration config;
    config.k = k;
    config.s = mpq_class(1, 2);
    config.M = 4;
    config.squares = squares;
    for (std::size_t i = 0; i < squares.size(); ++i) {
        const auto& [ix, iy] = squares.cells()[i];
        std::vector<std::pair<std::int64_t, std::int64_t>> cells;
        for (std::int64_t a = 0; a < 4; ++a) {
            std::int64_t slope = a * 8;  // coarse-separated slopes
            std::int64_t num = iy * (std::int64_t{2} << k) + (std::int64_t{1} << k) -
                               slope * (2 * ix + 1);
            cells.emplace_back(slope, floor_shift(num, k + 1));
        }
        config.tubes_per_square.emplace_back(k, Convention::MainText, std::move(cells));
    }
    config.C = spread_certificate(config.tubes_per_square[0], config.s).C;
    REQUIRE(validate_nice(config).ok);
    ThickCoverResult cover = thick_tube_refine(config, kc);
    CHECK(cover.trace.m1 == 1);
    CHECK(cover.squares.size() == squares.size());
    CHECK(cover.H >= 1);
}

TEST_CASE("thick cover post-conditions on seeded configurations") {
    const std::uint64_t seeds[] = {1, 2, 3};
    for (std::uint64_t seed : seeds) {
        FurstenbergConfig fc = furstenberg_config(8, mpq_class(1, 2), mpq_class(1), seed);
        ThickCoverResult cover = thick_tube_refine(fc.config, 4);
        CHECK(cover.trace.kept_squares * cover.trace.level_classes >= cover.trace.input_squares);
        for (std::size_t i = 0; i < cover.thick.size(); ++i) {
            DyadicTube thick = cover.thick.tube(i);
            bool meets_any = false;
            for (std::size_t q = 0; q < cover.squares.size() && !meets_any; ++q) {
                meets_any = tube_meets_square(thick, cover.squares.square(q).parent_at(4));
            }
            CHECK(meets_any);
        }
    }
}

TEST_CASE("packets partition by coarse ancestor with aligned representatives") {
    FurstenbergConfig fc = furstenberg_config(8, mpq_class(1, 2), mpq_class(1), 7);
    const int kbar = 4;
    for (std::size_t i = 0; i < 5; ++i) {
        DyadicSquare p = fc.config.squares.square(i);
        const TubeFamily& fam = fc.config.tubes_per_square[i];
        auto packets = tube_packets(fam, p, kbar);
        std::size_t members = 0;
        for (const TubePacket& packet : packets) {
            members += packet.members.size();
            for (std::size_t t : packet.members) {
                DyadicTube T = fam.tube(t);
                CHECK(T.ancestor_at(kbar) == packet.parent);
                CHECK(floor_shift(T.ia, fam.scale_k() - kbar) == packet.parent.ia);
            }
            CHECK(packet.representative.ia == (packet.parent.ia << (fam.scale_k() - kbar)));
            CHECK(tube_meets_square(packet.representative, p));
        }
        CHECK(members == fam.size());
    }
}

TEST_CASE("packets: single parent when all tubes share one coarse tube") {
    const int k = 6;
    DyadicSquare p{k, 0, 0};
    std::vector<std::pair<std::int64_t, std::int64_t>> cells;
    for (std::int64_t a = 0; a < 4; ++a) cells.emplace_back(a, 0);
    TubeFamily fam(k, Convention::MainText, cells);
    auto packets = tube_packets(fam, p, 2);
    REQUIRE(packets.size() == 1);
    CHECK(packets[0].members.size() == 4);
    std::vector<std::pair<std::int64_t, std::int64_t>> spread_cells;
    for (std::int64_t a = 0; a < 4; ++a) spread_cells.emplace_back(a * 16, 0);
    TubeFamily spread(k, Convention::MainText, spread_cells);
    auto singletons = tube_packets(spread, p, 2);
    CHECK(singletons.size() == 4);
    for (const TubePacket& packet : singletons) CHECK(packet.members.size() == 1);
}

TEST_CASE("packet sizes match brute-force ancestor grouping") {
    FurstenbergConfig fc = furstenberg_config(6, mpq_class(3, 4), mpq_class(1), 13);
    DyadicSquare p = fc.config.squares.square(0);
    const TubeFamily& fam = fc.config.tubes_per_square[0];
    auto packets = tube_packets(fam, p, 3);
    std::map<std::pair<std::int64_t, std::int64_t>, std::size_t> brute;
    for (std::size_t i = 0; i < fam.size(); ++i) {
        DyadicTube T = fam.tube(i);
        ++brute[{floor_shift(T.ia, 3), floor_shift(T.ib, 3)}];
    }
    CHECK(packets.size() == brute.size());
    for (const TubePacket& packet : packets) {
        CHECK(packet.members.size() == brute[{packet.parent.ia, packet.parent.ib}]);
    }
}

TEST_CASE("separated subset: spaced inputs survive, clustered inputs thin") {
    std::vector<std::pair<std::int64_t, std::int64_t>> spaced;
    for (std::int64_t i = 0; i < 5; ++i) spaced.emplace_back(0, 18 * i);
    TubeFamily fam(8, Convention::MainText, spaced);
    TubeFamily out = separated_subset(fam, 8);
    CHECK(out.size() == fam.size());
    std::vector<std::pair<std::int64_t, std::int64_t>> block;
    for (std::int64_t i = 0; i < 18; ++i) block.emplace_back(0, i);
    TubeFamily packed(8, Convention::MainText, block);
    TubeFamily thin = separated_subset(packed, 8);
    CHECK(thin.size() == 1);
    std::vector<std::pair<std::int64_t, std::int64_t>> mixed;
    SplitMix64 rng(5);
    for (int i = 0; i < 60; ++i) {
        mixed.emplace_back(static_cast<std::int64_t>(uniform_below(rng, 3)),
                           static_cast<std::int64_t>(uniform_below(rng, 40)));
    }
    TubeFamily out2 = separated_subset(TubeFamily(8, Convention::MainText, mixed), 8);
    for (std::size_t i = 0; i < out2.size(); ++i) {
        for (std::size_t j = i + 1; j < out2.size(); ++j) {
            const auto& a = out2.cells()[i];
            const auto& b = out2.cells()[j];
            if (a.first == b.first) {
                CHECK(std::abs(a.second - b.second) >= 18);  // 2 * 8 + 2
            }
        }
    }
    CHECK(out2.size() * (2 * 8 + 2) * 2 >= mixed.size());
}

TEST_CASE("separated representatives have disjoint packets") {
    FurstenbergConfig fc = furstenberg_config(8, mpq_class(1, 2), mpq_class(1), 21);
    const int kbar = 4;
    DyadicSquare p = fc.config.squares.square(0);
    const TubeFamily& fam = fc.config.tubes_per_square[0];
    auto packets = tube_packets(fam, p, kbar);
    std::vector<std::pair<std::int64_t, std::int64_t>> reps;
    for (const TubePacket& packet : packets) {
        reps.emplace_back(packet.representative.ia, packet.representative.ib);
    }
    TubeFamily reps_fam(8, Convention::MainText, reps);
    TubeFamily sep = separated_subset(reps_fam, 8);
    std::vector<const TubePacket*> kept;
    for (const auto& cell : sep.cells()) {
        for (const TubePacket& packet : packets) {
            if (packet.representative.ia == cell.first &&
                packet.representative.ib == cell.second) {
                kept.push_back(&packet);
            }
        }
    }
    for (std::size_t i = 0; i < kept.size(); ++i) {
        for (std::size_t j = i + 1; j < kept.size(); ++j) {
            std::set<std::size_t> a(kept[i]->members.begin(), kept[i]->members.end());
            for (std::size_t m : kept[j]->members) CHECK(a.count(m) == 0);
        }
    }
}

TEST_CASE("induction on scales: trivial coarse layer at scale 1") {
    FurstenbergConfig fc = furstenberg_config(6, mpq_class(1, 2), mpq_class(1), 3);
    InductionResult res = induction_on_scales(fc.config, 0);
    CHECK(res.coarse.squares.size() == 1);
    REQUIRE(res.fine.size() == 1);
    CHECK(res.fine[0].config.k == 6);
    CHECK(validate_nice(res.fine[0].config).ok);
    CHECK(validate_nice(res.coarse).ok);
}

TEST_CASE("induction on scales: seeded configurations pass all validators") {
    const std::uint64_t seeds[] = {1, 2};
    for (std::uint64_t seed : seeds) {
        FurstenbergConfig fc = furstenberg_config(8, mpq_class(1, 2), mpq_class(1), seed);
        InductionResult res = induction_on_scales(fc.config, 4);
        CHECK(validate_nice(res.coarse).ok);
        CHECK(!res.fine.empty());
        for (const auto& per : res.fine) {
            CHECK(per.config.k == 4);
            CHECK(validate_nice(per.config).ok);
        }
        CHECK(res.product_lhs > 0);
        CHECK(res.product_rhs > 0);
        mpq_class budget = 1;
        for (int i = 0; i < kProductBudgetPower; ++i) budget *= 8;
        CHECK(res.product_lhs * budget >= res.product_rhs);
    }
}

TEST_CASE("induction on scales: shared-slope product configuration") {
    FurstenbergOptions opts;
    opts.squares = SquareKind::Product;
    opts.shared_slopes = true;
    FurstenbergConfig fc = furstenberg_config(8, mpq_class(1, 2), mpq_class(1), 6, opts);
    InductionResult res = induction_on_scales(fc.config, 4);
    CHECK(validate_nice(res.coarse).ok);
    for (const auto& per : res.fine) CHECK(validate_nice(per.config).ok);
}

TEST_CASE("representative escapes the parent intercept range when forced") {
    // parent D([0,1/4)^2) at kbar = 2, member D([3/16,4/16) x [3/16,4/16))
    // meets p = [15/16,1) x [7/16,8/16), but no tube in the parent's leftmost
    // slope column does; the representative moves one coarse intercept step
    const int k = 4;
    DyadicSquare p{k, 15, 7};
    TubeFamily fam(k, Convention::MainText, {{3, 3}});
    REQUIRE(tube_meets_square(fam.tube(0), p));
    auto packets = tube_packets(fam, p, 2);
    REQUIRE(packets.size() == 1);
    CHECK(packets[0].parent.ia == 0);
    CHECK(packets[0].parent.ib == 0);
    CHECK(packets[0].escaped);
    CHECK(packets[0].representative.ia == 0);
    CHECK(tube_meets_square(packets[0].representative, p));
    // within one coarse step of the parent's range
    CHECK(packets[0].representative.ib >= -4);
    CHECK(packets[0].representative.ib < 8);
}
