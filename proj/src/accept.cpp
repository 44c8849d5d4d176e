#include "incgeo/accept.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "incgeo/generators.hpp"
#include "incgeo/incidence.hpp"
#include "incgeo/multiscale.hpp"
#include "incgeo/projections.hpp"
#include "incgeo/refine.hpp"

namespace incgeo {

namespace {

struct StageTimer {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
};

struct Battery {
    mpq_class s, t;
    std::string label;
};

std::vector<Battery> incidence_battery() {
    return {{mpq_class(1, 2), mpq_class(1), "0.5,1.0"},
            {mpq_class(1, 2), mpq_class(1, 2), "0.5,0.5"},
            {mpq_class(3, 4), exponent_proxy("0.9"), "0.75,0.9"}};
}

std::string csv_header_comment() {
    auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::ostringstream os;
    os << "# generated " << now << "\n";
    return os.str();
}

void write_csv(const std::string& out_dir, const std::string& name, const std::string& header,
               const std::vector<std::string>& rows) {
    if (out_dir.empty()) return;
    std::filesystem::create_directories(out_dir);
    std::ofstream os(std::filesystem::path(out_dir) / name);
    os << csv_header_comment() << header << "\n";
    for (const std::string& row : rows) os << row << "\n";
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(12);
    os << v;
    return os.str();
}

// ---- criterion bodies -----------------------------------------------------

// 1: exhaustive duality transfer at scale 2^-4
CriterionResult criterion_duality() {
    StageTimer timer;
    const int k = 4;
    const std::int64_t n = std::int64_t{1} << k;
    std::size_t pairs = 0, failures = 0;
    for (std::int64_t ia = -n; ia < n; ++ia) {
        for (std::int64_t ib = -n; ib < 2 * n; ++ib) {
            DyadicTube T{k, ia, ib, Convention::MainText};
            DyadicSquare reflected = dual_star(T);
            for (std::int64_t px = 0; px < n; ++px) {
                for (std::int64_t py = 0; py < n; ++py) {
                    DyadicSquare p{k, px, py};
                    if (!tube_meets_square(T, p)) continue;
                    ++pairs;
                    DyadicTube tube_of_p{k, px, py, Convention::MainText};
                    if (!tube_meets_square(tube_of_p, reflected)) ++failures;
                }
            }
        }
    }
    double sec = timer.seconds();
    std::ostringstream detail;
    detail << pairs << " incident pairs, " << failures << " transfer failures, " << fmt(sec)
           << " s";
    return {1, "duality transfer, exhaustive at 2^-4", failures == 0 && sec < 10.0, sec,
            detail.str()};
}

// 2: slope fibers at most 10-to-1, exhaustive at 2^-3..2^-5
CriterionResult criterion_fibers() {
    StageTimer timer;
    std::size_t max_seen = 0;
    bool ok = true;
    for (int k = 3; k <= 5; ++k) {
        std::int64_t n = std::int64_t{1} << k;
        for (std::int64_t px = 0; px < n && ok; ++px) {
            for (std::int64_t py = 0; py < n && ok; ++py) {
                DyadicSquare p{k, px, py};
                std::map<std::int64_t, std::size_t> fibers;
                for (std::int64_t ia = -n; ia < n; ++ia) {
                    for (std::int64_t ib = -n; ib < 2 * n; ++ib) {
                        if (tube_meets_square(DyadicTube{k, ia, ib, Convention::MainText}, p)) {
                            std::size_t f = ++fibers[ia];
                            max_seen = std::max(max_seen, f);
                            if (f > 10) ok = false;
                        }
                    }
                }
            }
        }
    }
    std::ostringstream detail;
    detail << "max fiber " << max_seen;
    return {2, "slope fibers at most 10-to-1, exhaustive at 2^-3..2^-5", ok, timer.seconds(),
            detail.str()};
}

// 3 and 4: incidence upper bound and tube-count lower bound on the battery
void criteria_incidence(const SuiteOptions& options, std::vector<CriterionResult>& out) {
    StageTimer timer;
    std::size_t runs = 0, upper_fail = 0, lower_fail = 0;
    std::vector<std::string> upper_rows, lower_rows;
    for (const Battery& cell : incidence_battery()) {
        for (int k = 6; k <= 10; ++k) {
            for (int seed = 1; seed <= options.incidence_seeds; ++seed) {
                FurstenbergConfig fc =
                    furstenberg_config(k, cell.s, cell.t, static_cast<std::uint64_t>(seed));
                IncidenceCount count = count_incidences(fc.config, fc.universe);
                ScaledRational c_p = fc.square_certificate.C;
                ScaledRational c_t = fc.config.C;
                auto t_count = static_cast<std::int64_t>(fc.universe.size());
                auto p_count = static_cast<std::int64_t>(fc.config.squares.size());
                BoundValue upper = incidence_upper_bound(c_p, c_t, fc.config.M, k, cell.s, cell.t,
                                                         t_count, p_count);
                LogValue budgeted_upper = upper.log2_value + log_budget(k, 2, 10);
                bool upper_ok =
                    LogValue::log2_of(mpz_class(count.total)).compare(budgeted_upper) <= 0;
                BoundValue lower = tube_lower_bound(c_p, c_t, fc.config.M, k, cell.s, cell.t);
                LogValue budgeted_lower = lower.log2_value - log_budget(k, 2, 10);
                bool lower_ok =
                    budgeted_lower.compare(LogValue::log2_of(mpz_class(t_count))) <= 0;
                ++runs;
                if (!upper_ok) ++upper_fail;
                if (!lower_ok) ++lower_fail;
                std::ostringstream row;
                row << "2^-" << k << "," << cell.label << "," << fc.config.M << ","
                    << fmt(c_p.to_double()) << "," << fmt(c_t.to_double()) << "," << p_count << ","
                    << t_count << "," << count.total << "," << fmt(upper.approx) << ","
                    << fmt(static_cast<double>(count.total) / upper.approx);
                upper_rows.push_back(row.str());
                std::ostringstream lrow;
                lrow << "2^-" << k << "," << cell.label << "," << fc.config.M << ","
                     << fmt(c_p.to_double()) << "," << fmt(c_t.to_double()) << "," << t_count
                     << "," << fmt(lower.approx) << ","
                     << fmt(static_cast<double>(t_count) / lower.approx);
                lower_rows.push_back(lrow.str());
            }
        }
    }
    write_csv(options.out_dir, "incidence.csv",
              "delta,s,t,M,C_P,C_T,P_count,T_count,incidences,bound,ratio", upper_rows);
    write_csv(options.out_dir, "lower_bound.csv", "delta,s,t,M,C_P,C_T,T_count,bound,ratio",
              lower_rows);
    double sec = timer.seconds();
    {
        std::ostringstream detail;
        detail << runs << " configurations, " << upper_fail << " violations, " << fmt(sec) << " s";
        out.push_back({3, "incidence upper bound within 10 log^2 budget",
                       upper_fail == 0 && sec < 300.0, sec, detail.str()});
    }
    {
        std::ostringstream detail;
        detail << runs << " configurations, " << lower_fail << " violations";
        out.push_back({4, "tube-count lower bound within 10 log^2 budget", lower_fail == 0, sec,
                       detail.str()});
    }
}

// 5: radii x directions target has box dimension near 2s at s = 1/2
CriterionResult criterion_target() {
    StageTimer timer;
    const int k = 12;
    CantorTarget target = cantor_target(k, mpq_class(1, 2));
    // 0.8 <= log2|K|/k <= 1.2, exactly: |K|^5 in [2^(4k), 2^(6k)]
    mpz_class count(static_cast<long>(target.K.size()));
    mpz_class fifth;
    mpz_pow_ui(fifth.get_mpz_t(), count.get_mpz_t(), 5);
    bool ok = fifth >= (mpz_class(1) << (4 * k)) && fifth <= (mpz_class(1) << (6 * k));
    double sec = timer.seconds();
    std::ostringstream detail;
    detail << "|K| = " << target.K.size() << ", proxy " << fmt(target.dimension_proxy) << ", "
           << fmt(sec) << " s";
    return {5, "target construction box dimension in [0.8, 1.2]", ok && sec < 60.0, sec,
            detail.str()};
}

// 6: uniformisation loss bound, exact, on 50 seeded sets
CriterionResult criterion_uniformize() {
    StageTimer timer;
    std::size_t failures = 0;
    for (std::uint64_t seed = 1; seed <= 50; ++seed) {
        int n = 2 + static_cast<int>(seed % 3);
        SplitMix64 rng(derive_seed(seed, 0x5ca1e));
        std::vector<int> ladder;
        int e = 0;
        for (int j = 0; j < n - 1; ++j) {
            e += 1 + static_cast<int>(uniform_below(rng, 3));
            e = std::min(e, 7 - (n - 2 - j));
            ladder.push_back(e);
        }
        ladder.push_back(8);
        try {
            SquareFamily fam = random_frostman_set(8, mpq_class(11, 10), seed);
            UniformizeResult res = uniformize(fam, ladder);  // exact bound asserted inside
            if (!is_uniform(res.P, ladder)) ++failures;
        } catch (const std::exception&) {
            ++failures;
        }
    }
    std::ostringstream detail;
    detail << "50 seeded sets, " << failures << " violations";
    return {6, "uniformisation exact loss bound on 50 seeded sets", failures == 0,
            timer.seconds(), detail.str()};
}

// 7: multiscale decomposition conclusions on uniform sets at 4^-8
CriterionResult criterion_multiscale(const SuiteOptions& options) {
    StageTimer timer;
    std::size_t runs = 0, failures = 0;
    std::ostringstream detail;
    const mpq_class eps(1, 4);
    struct Cell {
        mpq_class t, s;
    };
    std::vector<Cell> cells{{exponent_proxy("0.6"), exponent_proxy("0.4")},
                            {mpq_class(1), exponent_proxy("0.8")},
                            {exponent_proxy("1.4"), exponent_proxy("1.2")}};
    for (const Cell& cell : cells) {
        if (!options.heavy && cell.t > 1) continue;
        for (int seed = 1; seed <= options.decompose_seeds; ++seed) {
            ++runs;
            try {
                SquareFamily P = cantor_square_set(16, cell.t, static_cast<std::uint64_t>(seed));
                ScaleDecomposition dec = multiscale_decompose(P, cell.s, cell.t, 2, eps);
                ScaleClasses cls = classify_scales(dec, P, cell.s, cell.t, mpq_class(1));
                detail << "t=" << to_double(cell.t) << " seed=" << seed
                       << " windows=" << dec.windows.size()
                       << (cls.mass_ok ? " good-mass ok; " : "; ");
            } catch (const std::exception& e) {
                ++failures;
                detail << "t=" << to_double(cell.t) << " seed=" << seed << " FAILED: " << e.what()
                       << "; ";
            }
        }
    }
    return {7, "multiscale decomposition conclusions at 4^-8", failures == 0 && runs > 0,
            timer.seconds(), detail.str()};
}

// 8: roof oracle split point and random re-verification
CriterionResult criterion_roof() {
    StageTimer timer;
    bool ok = true;
    std::ostringstream detail;
    {
        const int m = 12;
        std::vector<mpq_class> values;
        for (int j = 0; j <= m; ++j) {
            values.emplace_back(j <= m / 2 ? mpq_class(2 * j) : mpq_class(m));
        }
        BranchingFunction f = BranchingFunction::from_values(2, values);
        IntervalDecomposition dec =
            kaufman_decompose(f, mpq_class(1, 2), mpq_class(1), mpq_class(1, 8));
        ok = dec.intervals.size() == 2 && dec.intervals[0].a == 0 && dec.intervals[0].b == 4 &&
             dec.intervals[0].tag == WindowTag::Linear && dec.intervals[0].slope == 2 &&
             dec.intervals[1].a == 4 && dec.intervals[1].b == 12 &&
             dec.intervals[1].tag == WindowTag::Superlinear &&
             dec.intervals[1].slope == mpq_class(1, 2) && verify_tags(f, dec, mpq_class(1, 2));
        detail << "roof split at " << to_double(dec.intervals[0].b) << " (expect 4); ";
    }
    std::size_t verified = 0;
    SplitMix64 rng(0x77F);
    for (int trial = 0; trial < 200; ++trial) {
        const int m = 12 + static_cast<int>(uniform_below(rng, 9));
        std::vector<mpq_class> vals{0};
        for (int j = 0; j < m; ++j) {
            vals.push_back(vals.back() + mpq_class(static_cast<long>(uniform_below(rng, 33)), 16));
        }
        BranchingFunction f = BranchingFunction::from_values(2, vals);
        mpq_class s(1, 2), t(3, 4);
        mpq_class deficit = 0;
        for (int j = 0; j <= m; ++j) {
            deficit =
                std::max(deficit, mpq_class((t * j - vals[static_cast<std::size_t>(j)]) / m));
        }
        mpq_class eps = std::max(mpq_class(1, 8), mpq_class(deficit + mpq_class(1, 64)));
        if (eps >= mpq_class(9, 10)) continue;
        try {
            IntervalDecomposition dec = kaufman_decompose(f, s, t, eps);
            if (!verify_tags(f, dec, s)) {
                ok = false;
            } else {
                ++verified;
            }
        } catch (const std::exception&) {
            ok = false;
        }
    }
    detail << verified << " random inputs re-verified";
    return {8, "scan-merge decomposition roof oracle and re-verification", ok && verified >= 150,
            timer.seconds(), detail.str()};
}

// 9 and 10: thick-cover and two-scale pipelines on seeded configurations
void criteria_refine(const SuiteOptions& options, std::vector<CriterionResult>& out) {
    StageTimer timer;
    std::size_t thick_runs = 0, thick_failures = 0;
    std::string thick_first;
    for (const Battery& cell : incidence_battery()) {
        for (int seed = 1; seed <= options.refine_seeds; ++seed) {
            ++thick_runs;
            try {
                FurstenbergConfig fc =
                    furstenberg_config(8, cell.s, cell.t, static_cast<std::uint64_t>(seed));
                thick_tube_refine(fc.config, 4);  // incidence floor and certificate asserted
            } catch (const std::exception& e) {
                ++thick_failures;
                if (thick_first.empty()) thick_first = e.what();
            }
        }
    }
    double sec9 = timer.seconds();
    {
        std::ostringstream detail;
        detail << thick_runs << " runs, " << thick_failures << " violations";
        if (!thick_first.empty()) detail << "; first: " << thick_first;
        out.push_back({9, "thick-tube covering pipeline post-conditions", thick_failures == 0,
                       sec9, detail.str()});
    }
    StageTimer timer10;
    std::size_t ind_runs = 0, ind_failures = 0;
    std::string ind_first;
    for (const Battery& cell : incidence_battery()) {
        for (int seed = 1; seed <= options.refine_seeds; ++seed) {
            ++ind_runs;
            try {
                FurstenbergConfig fc =
                    furstenberg_config(8, cell.s, cell.t, static_cast<std::uint64_t>(seed));
                InductionResult res = induction_on_scales(fc.config, 4);
                if (!validate_nice(res.coarse).ok) throw check_error("coarse validator failed");
                for (const auto& per : res.fine) {
                    if (!validate_nice(per.config).ok) {
                        throw check_error("fine validator failed");
                    }
                }
            } catch (const std::exception& e) {
                ++ind_failures;
                if (ind_first.empty()) ind_first = e.what();
            }
        }
    }
    {
        std::ostringstream detail;
        detail << ind_runs << " runs, " << ind_failures << " violations";
        if (!ind_first.empty()) detail << "; first: " << ind_first;
        out.push_back({10, "two-scale pipeline validators and product bound", ind_failures == 0,
                       timer10.seconds(), detail.str()});
    }
}

// 11: good-direction selection feeding spread extraction
CriterionResult criterion_directions(const SuiteOptions& options) {
    StageTimer timer;
    const int k = 8;
    const mpq_class s(1, 2);
    std::size_t half_failures = 0;
    std::size_t good = 0, tried = 0;
    std::vector<std::string> rows;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        IntervalFamily X = spread_interval_set(k, s, derive_seed(seed, 1));
        IntervalFamily Y = spread_interval_set(k, s, derive_seed(seed, 2));
        std::vector<std::pair<std::int64_t, std::int64_t>> cells;
        for (std::int64_t x : X.cells()) {
            for (std::int64_t y : Y.cells()) cells.emplace_back(x, y);
        }
        SquareFamily prod(k, std::move(cells));
        std::vector<std::int64_t> slopes;
        for (std::int64_t a = 0; a < 16; ++a) slopes.push_back(a * 16);
        DirectionSelection sel = good_directions(prod, slopes, k, s);
        if (2 * sel.selected_count < slopes.size()) ++half_failures;
        for (std::size_t i = 0; i < slopes.size(); ++i) {
            const mpq_class& e = sel.energies[i];
            std::ostringstream row;
            row << slopes[i] << "," << e.get_num().get_str() << "," << e.get_den().get_str() << ","
                << int(sel.selected[i]);
            rows.push_back(row.str());
            if (!sel.selected[i]) continue;
            ++tried;
            try {
                IntervalFamily image = project_family(prod, slopes[i], k, Convention::Appendix);
                IntervalFamily extracted = frostman_extract(image, s);
                if (spread_certificate(extracted, s).C <=
                    ScaledRational(mpq_class(256), mpq_class(0))) {
                    ++good;
                }
            } catch (const check_error&) {
            }
        }
    }
    write_csv(options.out_dir, "energies.csv", "sigma,energy_num,energy_den,selected", rows);
    std::ostringstream detail;
    detail << tried << " selected directions, " << good << " with certificates within 256";
    bool ok = half_failures == 0 && tried > 0 && good * 10 >= tried * 9;
    return {11, "good directions select at least half and extract s-spread images", ok,
            timer.seconds(), detail.str()};
}

// 12: product-structure assembly at 2^-8, plain and sheared reference tubes
CriterionResult criterion_product(const SuiteOptions& options) {
    (void)options;
    StageTimer timer;
    const int ck = 4, fk = 8;
    const std::int64_t unit = std::int64_t{1} << ck;
    std::size_t runs = 0, failures = 0;
    std::string first;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        for (int sheared = 0; sheared < 2; ++sheared) {
            ++runs;
            try {
                std::int64_t da = sheared ? 3 : 0;
                std::int64_t db = sheared ? 1 : 0;
                DyadicTube T0{ck, da, db, Convention::Appendix};
                IntervalFamily heights =
                    spread_interval_set(ck, mpq_class(1, 2), derive_seed(seed, 7));
                std::vector<SliceInput> slices;
                for (std::int64_t y : heights.cells()) {
                    SliceInput slice;
                    IntervalFamily xs = spread_interval_set(
                        ck, mpq_class(1, 2),
                        derive_seed(seed, 100 + static_cast<std::uint64_t>(y)));
                    std::vector<std::pair<std::int64_t, std::int64_t>> cells;
                    std::vector<TubeFamily> tubes;
                    for (std::int64_t xi : xs.cells()) {
                        std::int64_t iy = y * unit;
                        std::vector<std::pair<std::int64_t, std::int64_t>> fam;
                        for (std::int64_t sa = 0; sa < unit; sa += 4) {
                            std::int64_t num = xi * (std::int64_t{2} << fk) +
                                               (std::int64_t{1} << fk) - sa * (2 * iy + 1);
                            std::int64_t hb = floor_shift(num, fk + 1);
                            if (hb < 0 || hb >= unit) continue;
                            fam.emplace_back(sa + da * unit, hb + db * unit);
                        }
                        if (fam.empty()) continue;
                        // shear the squares along with the tubes
                        mpq_class delta(1, std::int64_t{1} << fk);
                        mpq_class xc = (2 * xi + 1) * delta / 2;
                        mpq_class yc = (2 * iy + 1) * delta / 2;
                        mpq_class shifted = xc + mpq_class(da, unit) * yc + mpq_class(db, unit);
                        mpq_class scaled = shifted / delta;
                        mpz_class fl;
                        mpz_fdiv_q(fl.get_mpz_t(), scaled.get_num().get_mpz_t(),
                                   scaled.get_den().get_mpz_t());
                        cells.emplace_back(fl.get_si(), iy);
                        tubes.emplace_back(fk, Convention::Appendix, std::move(fam));
                    }
                    if (cells.empty()) continue;
                    SquareFamily cell_family(fk, cells);
                    std::vector<TubeFamily> aligned(cell_family.size());
                    for (std::size_t i = 0; i < cells.size(); ++i) {
                        auto it = std::lower_bound(cell_family.cells().begin(),
                                                   cell_family.cells().end(), cells[i]);
                        aligned[static_cast<std::size_t>(it - cell_family.cells().begin())] =
                            tubes[i];
                    }
                    slice.Q = cell_family.square(0).parent_at(ck);
                    slice.cells = cell_family;
                    slice.tubes_per_cell = std::move(aligned);
                    slices.push_back(std::move(slice));
                }
                ProductStructure ps = product_structure(T0, slices);
                if (!verify_product_membership(ps)) throw check_error("membership re-check");
                if (ps.tube_universe.size() > 3 * ps.fine_tube_count) {
                    throw check_error("3-fold bound");
                }
            } catch (const std::exception& e) {
                ++failures;
                if (first.empty()) first = e.what();
            }
        }
    }
    std::ostringstream detail;
    detail << runs << " assemblies, " << failures << " violations";
    if (!first.empty()) detail << "; first: " << first;
    return {12, "product structure membership and 3-fold covering", failures == 0,
            timer.seconds(), detail.str()};
}

}  // namespace

std::vector<CriterionResult> run_acceptance(const SuiteOptions& options, std::ostream& log) {
    std::vector<CriterionResult> results;
    auto emit = [&](const CriterionResult& r) {
        results.push_back(r);
        log << (r.pass ? "[PASS] " : "[FAIL] ") << "criterion " << r.id << ": " << r.name << " ("
            << fmt(r.seconds) << " s) " << r.detail << "\n";
        log.flush();
    };
    emit(criterion_duality());
    emit(criterion_fibers());
    {
        std::vector<CriterionResult> pair;
        criteria_incidence(options, pair);
        for (const auto& r : pair) emit(r);
    }
    emit(criterion_target());
    emit(criterion_uniformize());
    emit(criterion_multiscale(options));
    emit(criterion_roof());
    {
        std::vector<CriterionResult> pair;
        criteria_refine(options, pair);
        for (const auto& r : pair) emit(r);
    }
    emit(criterion_directions(options));
    emit(criterion_product(options));
    if (!options.out_dir.empty()) {
        // timings stay in the log so the CSV bodies are run-to-run identical
        std::vector<std::string> rows;
        for (const CriterionResult& r : results) {
            std::ostringstream row;
            row << r.id << "," << (r.pass ? "pass" : "fail") << ",\"" << r.name << "\"";
            rows.push_back(row.str());
        }
        write_csv(options.out_dir, "criteria.csv", "criterion,result,name", rows);
    }
    return results;
}

bool csv_bodies_identical(const std::string& path_a, const std::string& path_b) {
    auto read_body = [](const std::string& path) {
        std::ifstream is(path);
        std::ostringstream body;
        std::string line;
        while (std::getline(is, line)) {
            if (!line.empty() && line[0] == '#') continue;
            body << line << "\n";
        }
        return body.str();
    };
    return read_body(path_a) == read_body(path_b);
}

}  // namespace incgeo
