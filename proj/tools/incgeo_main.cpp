// Experiment harness: generate, certify, count, refine, decompose, project.
// Exit codes: 0 success, 2 failed run-time check, 3 bad configuration.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "incgeo/accept.hpp"
#include "incgeo/generators.hpp"
#include "incgeo/incidence.hpp"
#include "incgeo/multiscale.hpp"
#include "incgeo/projections.hpp"
#include "incgeo/refine.hpp"

using namespace incgeo;

namespace {

mpq_class parse_exp(const std::string& text) { return exponent_proxy(text); }

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream os(path);
    if (!os) throw input_error("cannot open output file: " + path);
    os << text;
}

std::vector<int> parse_ladder(const std::string& text) {
    std::vector<int> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::stoi(item));
    return out;
}

int cmd_gen(std::string kind, int k, const std::string& s_text, const std::string& t_text,
            std::uint64_t seed, const std::string& out_prefix, const std::string& spec_path,
            bool shared_slopes) {
    mpq_class s = parse_exp(s_text);
    mpq_class t = parse_exp(t_text);
    if (!spec_path.empty()) {
        std::ifstream is(spec_path);
        if (!is) throw input_error("cannot open spec file: " + spec_path);
        std::stringstream buffer;
        buffer << is.rdbuf();
        GeneratorSpec spec = GeneratorSpec::from_json_text(buffer.str());
        kind = spec.kind;
        k = spec.k;
        s = spec.s;
        t = spec.t;
        seed = spec.seed;
        shared_slopes = spec.shared_slopes;
    }
    if (kind == "cantor") {
        SquareFamily fam = cantor_square_set(k, s, seed);
        write_text_file(out_prefix + ".squares.txt", to_text(fam));
        std::cout << "cantor set: " << fam.size() << " squares at 2^-" << k << "\n";
    } else if (kind == "random_frostman") {
        SquareFamily fam = random_frostman_set(k, s, seed);
        write_text_file(out_prefix + ".squares.txt", to_text(fam));
        std::cout << "random set: " << fam.size() << " squares at 2^-" << k << "\n";
    } else if (kind == "cantor_target") {
        CantorTarget target = cantor_target(k, s);
        write_text_file(out_prefix + ".squares.txt", to_text(target.K));
        write_text_file(out_prefix + ".tubes.txt", to_text(target.lines));
        std::cout << "target: |K| = " << target.K.size() << ", " << target.lines.size()
                  << " lines, dimension proxy " << target.dimension_proxy << "\n";
    } else if (kind == "furstenberg" || kind == "product") {
        FurstenbergOptions opts;
        if (kind == "product") opts.squares = SquareKind::Product;
        opts.shared_slopes = shared_slopes;
        FurstenbergConfig fc = furstenberg_config(k, s, t, seed, opts);
        write_text_file(out_prefix + ".squares.txt", to_text(fc.config.squares));
        write_text_file(out_prefix + ".tubes.txt", to_text(fc.universe));
        std::cout << "configuration: " << fc.config.squares.size() << " squares, M = "
                  << fc.config.M << ", " << fc.universe.size() << " tubes\n";
    } else {
        throw input_error("unknown generator kind: " + kind);
    }
    return 0;
}

int cmd_certify(const std::string& in_path, const std::string& s_text, bool regularity) {
    std::ifstream is(in_path);
    if (!is) throw input_error("cannot open input file: " + in_path);
    SquareFamily fam = read_family(is);
    mpq_class s = parse_exp(s_text);
    SpreadCertificate cert = spread_certificate(fam, s);
    nlohmann::ordered_json j = cert.to_json();
    j["family_size"] = fam.size();
    if (regularity) {
        RegularityCertificate reg = regularity_certificate(fam, s);
        mpq_class kq = reg.K.to_rational(64);
        j["regularity"] = {{"K_num", kq.get_num().get_str()},
                           {"K_den", kq.get_den().get_str()},
                           {"half_scale_count", reg.half_scale_count}};
    }
    std::cout << j.dump(2) << "\n";
    return 0;
}

int cmd_incidence(int k, const std::string& s_text, const std::string& t_text, std::uint64_t seed,
                  int seeds, const std::string& csv_path) {
    mpq_class s = parse_exp(s_text);
    mpq_class t = parse_exp(t_text);
    if (s > 0 && s < 1 && t > s && t <= 2) {
        ElementaryExponents exps = elementary_exponents(s, t);
        std::cout << "elementary exponents: max(1/2+s, 2s) = " << to_double(exps.wolff)
                  << ", 2s = " << to_double(exps.elementary_furstenberg)
                  << " (the epsilon improvement has no explicit formula)\n";
    }
    std::ostringstream csv;
    csv << "delta,s,t,M,C_P,C_T,P_count,T_count,incidences,bound,ratio\n";
    for (int i = 0; i < seeds; ++i) {
        FurstenbergConfig fc = furstenberg_config(k, s, t, seed + static_cast<std::uint64_t>(i));
        IncidenceCount count = count_incidences(fc.config, fc.universe);
        auto t_count = static_cast<std::int64_t>(fc.universe.size());
        auto p_count = static_cast<std::int64_t>(fc.config.squares.size());
        BoundValue upper = incidence_upper_bound(fc.square_certificate.C, fc.config.C, fc.config.M,
                                                 k, s, t, t_count, p_count);
        BoundValue lower = tube_lower_bound(fc.square_certificate.C, fc.config.C, fc.config.M, k,
                                            s, t);
        csv << "2^-" << k << "," << s_text << "," << t_text << "," << fc.config.M << ","
            << fc.square_certificate.C.to_double() << "," << fc.config.C.to_double() << ","
            << p_count << "," << t_count << "," << count.total << "," << upper.approx << ","
            << static_cast<double>(count.total) / upper.approx << "\n";
        std::cout << "seed " << seed + static_cast<std::uint64_t>(i) << ": |I| = " << count.total
                  << ", upper bound " << upper.approx << ", |T| = " << t_count
                  << ", lower bound " << lower.approx << "\n";
    }
    if (!csv_path.empty()) write_text_file(csv_path, csv.str());
    return 0;
}

int cmd_refine(int k, int coarse, const std::string& s_text, const std::string& t_text,
               std::uint64_t seed, const std::string& trace_path) {
    mpq_class s = parse_exp(s_text);
    mpq_class t = parse_exp(t_text);
    FurstenbergConfig fc = furstenberg_config(k, s, t, seed);
    ThickCoverResult cover = thick_tube_refine(fc.config, coarse);
    std::cout << "thick cover: kept " << cover.squares.size() << "/"
              << fc.config.squares.size() << " squares, " << cover.thick.size()
              << " coarse tubes, H = " << to_double(cover.H) << ", C2 = "
              << cover.thick_certificate.C.to_double() << "\n";
    InductionResult res = induction_on_scales(fc.config, coarse);
    std::cout << "two-scale: coarse " << res.coarse.squares.size() << " squares x M_D = "
              << res.coarse.M << ", fine blocks " << res.fine.size() << ", product lhs "
              << to_double(res.product_lhs) << " vs rhs " << to_double(res.product_rhs) << "\n";
    // report-only: measured tube counts against the elementary targets at the
    // fine and intermediate scales
    auto t_count = static_cast<double>(fc.universe.size());
    double coarse_count = 0;
    if (k % 2 == 0) {
        coarse_count = static_cast<double>(fc.universe.coarsened(k / 2).size());
        std::cout << "report: log2|T| = " << std::log2(t_count) << " vs 2s k = "
                  << 2.0 * to_double(s) * k << "; log2|T|_sqrt = " << std::log2(coarse_count)
                  << " vs s k = " << to_double(s) * k << "\n";
    }
    if (!trace_path.empty()) {
        nlohmann::ordered_json j;
        j["thick_trace"] = cover.trace.to_json();
        j["two_scale_traces"] = res.traces;
        j["fine_per_thick"] = res.fine_per_thick;
        j["H_num"] = cover.H.get_num().get_str();
        j["H_den"] = cover.H.get_den().get_str();
        write_text_file(trace_path, j.dump(2));
    }
    return 0;
}

// dense full branching for the first half of the levels, binary afterwards:
// the profile has two slopes and the decomposition splits
SquareFamily two_regime_set(int k, std::uint64_t seed) {
    if (k % 4 != 0) throw input_error("two_regime: scale exponent must be a multiple of 4");
    std::vector<std::pair<std::int64_t, std::int64_t>> cells{{0, 0}};
    int m = k / 2;
    for (int level = 0; level < m; ++level) {
        std::vector<std::pair<std::int64_t, std::int64_t>> next;
        std::int64_t keep = level < m / 2 ? 16 : 2;
        std::vector<std::pair<std::int64_t, std::int64_t>> offsets;
        for (const auto& [ix, iy] : cells) {
            offsets.clear();
            for (std::int64_t dx = 0; dx < 4; ++dx) {
                for (std::int64_t dy = 0; dy < 4; ++dy) offsets.emplace_back(dx, dy);
            }
            SplitMix64 rng(node_seed(seed, level, ix, iy));
            fisher_yates(offsets, rng);
            for (std::int64_t n = 0; n < keep; ++n) {
                next.emplace_back(ix * 4 + offsets[static_cast<std::size_t>(n)].first,
                                  iy * 4 + offsets[static_cast<std::size_t>(n)].second);
            }
        }
        cells = std::move(next);
    }
    return SquareFamily(k, std::move(cells));
}

int cmd_decompose(const std::string& kind, int k, const std::string& s_text,
                  const std::string& t_text, const std::string& eps_text,
                  const std::string& eps_good_text, std::uint64_t seed,
                  const std::string& json_path, bool pipeline) {
    mpq_class s = parse_exp(s_text);
    mpq_class t = parse_exp(t_text);
    mpq_class eps = parse_exp(eps_text);
    mpq_class eps_good = parse_exp(eps_good_text);
    SquareFamily P =
        kind == "two_regime" ? two_regime_set(k, seed) : cantor_square_set(k, t, seed);
    BranchingFunction f = branching_function(P, 2);
    std::cout << "branching profile:";
    for (const mpq_class& v : f.values) std::cout << " " << to_double(v);
    std::cout << "\n";
    ScaleDecomposition dec = multiscale_decompose(P, s, t, 2, eps);
    ScaleClasses cls = classify_scales(dec, P, s, t, eps_good);
    std::cout << "windows:";
    for (std::size_t i = 0; i < dec.windows.size(); ++i) {
        const ScaleWindow& w = dec.windows[i];
        std::cout << " [" << w.a << "," << w.b << "]" << (w.structured ? "" : "*") << "="
                  << cls.cls[i];
        if (w.structured) std::cout << "@" << to_double(w.dimension);
    }
    std::cout << "\ngood-scale mass " << to_double(cls.good_length) << " vs required "
              << to_double(cls.required) << (cls.mass_ok ? " (ok)\n" : " (FAILED)\n");
    if (!json_path.empty()) {
        nlohmann::ordered_json j = dec.to_json();
        j["classes"] = std::string(cls.cls.begin(), cls.cls.end());
        write_text_file(json_path, j.dump(2));
    }
    if (pipeline) {
        // measured composition of the two-scale pipeline along the window
        // cuts: report-only, since the per-window tube gains carry no
        // explicit constant
        FurstenbergOptions opts;
        opts.max_squares = 1024;  // the report needs structure, not density
        FurstenbergConfig fc = furstenberg_config(k, std::min(s, mpq_class(1)), t, seed, opts);
        NiceConfiguration config = fc.config;
        mpq_class start_ratio =
            mpq_class(static_cast<long>(fc.universe.size())) / mpq_class(config.M);
        mpq_class product = 1;
        std::cout << "pipeline: |T|/M at the finest scale = " << to_double(start_ratio) << "\n";
        for (std::size_t i = 0; i + 1 < dec.windows.size(); ++i) {
            int cut = dec.windows[i].b * dec.base_k;
            int rel = config.k - (k - cut);  // cut expressed inside the current window
            if (rel <= 0 || rel >= config.k) continue;
            InductionResult res = induction_on_scales(config, rel);
            mpq_class coarse_factor =
                mpq_class(static_cast<long>(res.coarse_universe.size())) /
                mpq_class(res.coarse.M);
            product *= coarse_factor;
            std::cout << "  window cut 2^-" << cut << ": coarse factor "
                      << to_double(coarse_factor) << "\n";
            // continue inside the square with the richest renormalised family
            const InductionResult::PerSquare* best = nullptr;
            mpq_class best_ratio = 0;
            for (const auto& per : res.fine) {
                mpq_class r = mpq_class(static_cast<long>(per.universe.size())) /
                              mpq_class(per.config.M);
                if (best == nullptr || r > best_ratio) {
                    best = &per;
                    best_ratio = r;
                }
            }
            if (best == nullptr) break;
            config = best->config;
        }
        // final factor: the last window's own tube-to-family ratio
        {
            std::vector<std::pair<std::int64_t, std::int64_t>> rest;
            for (const TubeFamily& fam : config.tubes_per_square) {
                rest.insert(rest.end(), fam.cells().begin(), fam.cells().end());
            }
            TubeFamily rest_universe(config.k, Convention::MainText, std::move(rest));
            product *= mpq_class(static_cast<long>(rest_universe.size())) /
                       mpq_class(config.M);
        }
        std::cout << "pipeline: product of per-level factors " << to_double(product)
                  << ", measured |T|/M " << to_double(start_ratio) << " (report only)\n";
    }
    if (!cls.mass_ok) throw check_error("classify_scales: good-scale mass below eps_G/8");
    return 0;
}

int cmd_uniformize(int k, const std::string& s_text, std::uint64_t seed,
                   const std::string& ladder_text) {
    mpq_class s = parse_exp(s_text);
    std::vector<int> ladder = parse_ladder(ladder_text);
    SquareFamily fam = random_frostman_set(k, s, seed);
    UniformizeResult res = uniformize(fam, ladder);
    std::cout << "uniformised " << fam.size() << " -> " << res.P.size() << " squares (retained "
              << to_double(res.retained) << "); branching numbers:";
    for (std::int64_t n : res.Ns) std::cout << " " << n;
    std::cout << "\n";
    return 0;
}

int cmd_project(int k, const std::string& s_text, std::uint64_t seed,
                const std::string& csv_path) {
    mpq_class s = parse_exp(s_text);
    IntervalFamily X = spread_interval_set(k, s, derive_seed(seed, 1));
    IntervalFamily Y = spread_interval_set(k, s, derive_seed(seed, 2));
    std::vector<std::pair<std::int64_t, std::int64_t>> cells;
    for (std::int64_t x : X.cells()) {
        for (std::int64_t y : Y.cells()) cells.emplace_back(x, y);
    }
    SquareFamily prod(k, std::move(cells));
    std::vector<std::int64_t> slopes;
    std::int64_t step = std::max<std::int64_t>(1, (std::int64_t{1} << k) / 16);
    for (std::int64_t a = 0; a < (std::int64_t{1} << k); a += step) slopes.push_back(a);
    DirectionSelection sel = good_directions(prod, slopes, k, s);
    std::ostringstream csv;
    csv << "sigma,energy_num,energy_den,selected\n";
    for (std::size_t i = 0; i < sel.slopes.size(); ++i) {
        csv << sel.slopes[i] << "," << sel.energies[i].get_num().get_str() << ","
            << sel.energies[i].get_den().get_str() << "," << int(sel.selected[i]) << "\n";
    }
    if (!csv_path.empty()) write_text_file(csv_path, csv.str());
    std::cout << "selected " << sel.selected_count << "/" << sel.slopes.size()
              << " directions, threshold " << to_double(sel.threshold) << "\n";
    // product-structure exponent report on the matching slice battery
    const int ck = k / 2;
    if (2 * ck == k) {
        const std::int64_t unit = std::int64_t{1} << ck;
        DyadicTube T0{ck, 0, 0, Convention::Appendix};
        IntervalFamily heights = spread_interval_set(ck, s, derive_seed(seed, 7));
        std::vector<SliceInput> slices;
        for (std::int64_t y : heights.cells()) {
            SliceInput slice;
            IntervalFamily xs = spread_interval_set(
                ck, s, derive_seed(seed, 100 + static_cast<std::uint64_t>(y)));
            std::vector<std::pair<std::int64_t, std::int64_t>> scells;
            std::vector<TubeFamily> tubes;
            for (std::int64_t xi : xs.cells()) {
                std::int64_t iy = y * unit;
                std::vector<std::pair<std::int64_t, std::int64_t>> fam;
                for (std::int64_t sa = 0; sa < unit; sa += 4) {
                    std::int64_t num = xi * (std::int64_t{2} << k) + (std::int64_t{1} << k) -
                                       sa * (2 * iy + 1);
                    std::int64_t hb = floor_shift(num, k + 1);
                    if (hb < 0 || hb >= unit) continue;
                    fam.emplace_back(sa, hb);
                }
                if (fam.empty()) continue;
                scells.emplace_back(xi, iy);
                tubes.emplace_back(k, Convention::Appendix, std::move(fam));
            }
            if (scells.empty()) continue;
            SquareFamily cell_family(k, scells);
            std::vector<TubeFamily> aligned(cell_family.size());
            for (std::size_t i = 0; i < scells.size(); ++i) {
                auto it = std::lower_bound(cell_family.cells().begin(), cell_family.cells().end(),
                                           scells[i]);
                aligned[static_cast<std::size_t>(it - cell_family.cells().begin())] = tubes[i];
            }
            slice.Q = cell_family.square(0).parent_at(ck);
            slice.cells = cell_family;
            slice.tubes_per_cell = std::move(aligned);
            slices.push_back(std::move(slice));
        }
        if (!slices.empty()) {
            ProductStructure ps = product_structure(T0, slices);
            double measured =
                std::log2(static_cast<double>(ps.tube_universe.size())) / ck;
            std::cout << "product structure: " << ps.assignments.size() << " points, "
                      << ps.tube_universe.size() << " tubes; measured exponent " << measured
                      << " against 2s = " << 2.0 * to_double(s) << " (report only)\n";
        }
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dyadic incidence geometry toolkit"};
    app.require_subcommand(1);

    std::string kind = "furstenberg", s_text = "0.5", t_text = "1.0", eps_text = "0.25";
    std::string eps_good_text = "1.0";
    std::string out_prefix = "out", in_path, csv_path, trace_path, json_path;
    std::string ladder_text = "3,5,8";
    int k = 8, coarse = 4, seeds = 1;
    std::uint64_t seed = 1;
    bool regularity = false;
    bool shared_slopes = false;
    std::string spec_path;

    auto* gen = app.add_subcommand("gen", "generate seeded families");
    gen->add_option("--kind", kind, "cantor|random_frostman|cantor_target|furstenberg|product");
    gen->add_option("--scale", k, "scale exponent: delta = 2^-k");
    gen->add_option("--s", s_text, "spread exponent");
    gen->add_option("--t", t_text, "square-family exponent");
    gen->add_option("--seed", seed, "generator seed");
    gen->add_option("--spec", spec_path, "JSON generator spec (overrides the flags)");
    gen->add_flag("--shared-slopes", shared_slopes, "one slope set shared by all squares");
    gen->add_option("--out", out_prefix, "output path prefix");

    auto* certify = app.add_subcommand("certify", "spread/regularity certificates");
    certify->add_option("--in", in_path, "square family file")->required();
    certify->add_option("--s", s_text, "exponent");
    certify->add_flag("--regularity", regularity, "also compute the half-scale constant");

    auto* incidence = app.add_subcommand("incidence", "incidence counts and bounds");
    incidence->add_option("--scale", k, "scale exponent");
    incidence->add_option("--s", s_text, "tube-set exponent");
    incidence->add_option("--t", t_text, "square-set exponent");
    incidence->add_option("--seed", seed, "first seed");
    incidence->add_option("--seeds", seeds, "number of seeds");
    incidence->add_option("--csv", csv_path, "CSV output path");

    auto* refine = app.add_subcommand("refine", "thick-cover and two-scale pipelines");
    refine->add_option("--scale", k, "fine scale exponent");
    refine->add_option("--coarse", coarse, "coarse scale exponent");
    refine->add_option("--s", s_text, "tube-set exponent");
    refine->add_option("--t", t_text, "square-set exponent");
    refine->add_option("--seed", seed, "seed");
    refine->add_option("--trace", trace_path, "JSON trace output path");

    bool pipeline = false;
    auto* decompose = app.add_subcommand("decompose", "branching and scale decompositions");
    decompose->add_flag("--pipeline", pipeline, "compose the two-scale pipeline along the windows (report only)");
    decompose->add_option("--kind", kind, "cantor|two_regime");
    decompose->add_option("--scale", k, "scale exponent (power of 4)");
    decompose->add_option("--s", s_text, "target lower exponent");
    decompose->add_option("--t", t_text, "set exponent");
    decompose->add_option("--eps", eps_text, "tolerance");
    decompose->add_option("--eps-good", eps_good_text, "good-scale tolerance");
    decompose->add_option("--seed", seed, "seed");
    decompose->add_option("--json", json_path, "JSON output path");

    auto* uniformize_cmd = app.add_subcommand("uniformize", "uniform subset extraction");
    uniformize_cmd->add_option("--scale", k, "scale exponent");
    uniformize_cmd->add_option("--s", s_text, "generator exponent");
    uniformize_cmd->add_option("--seed", seed, "seed");
    uniformize_cmd->add_option("--ladder", ladder_text, "comma-separated scale exponents");

    auto* project = app.add_subcommand("project", "energies, directions, product structure");
    project->add_option("--scale", k, "scale exponent");
    project->add_option("--s", s_text, "exponent");
    project->add_option("--seed", seed, "seed");
    project->add_option("--csv", csv_path, "energy table output path");

    std::string suite_out;
    SuiteOptions suite_options;
    bool quick = false;
    auto* suite = app.add_subcommand("suite", "full acceptance battery");
    suite->add_option("--out", suite_out, "CSV output directory");
    suite->add_option("--incidence-seeds", suite_options.incidence_seeds, "seeds per cell");
    suite->add_option("--refine-seeds", suite_options.refine_seeds, "seeds per pair");
    suite->add_option("--decompose-seeds", suite_options.decompose_seeds, "seeds per dimension");
    suite->add_flag("--quick", quick, "skip the heaviest decomposition input");

    try {
        app.parse(argc, argv);
        if (gen->parsed()) {
            return cmd_gen(kind, k, s_text, t_text, seed, out_prefix, spec_path, shared_slopes);
        }
        if (certify->parsed()) return cmd_certify(in_path, s_text, regularity);
        if (incidence->parsed()) return cmd_incidence(k, s_text, t_text, seed, seeds, csv_path);
        if (refine->parsed()) return cmd_refine(k, coarse, s_text, t_text, seed, trace_path);
        if (decompose->parsed()) {
            return cmd_decompose(kind, k, s_text, t_text, eps_text, eps_good_text, seed, json_path, pipeline);
        }
        if (uniformize_cmd->parsed()) return cmd_uniformize(k, s_text, seed, ladder_text);
        if (project->parsed()) return cmd_project(k, s_text, seed, csv_path);
        if (suite->parsed()) {
            suite_options.out_dir = suite_out;
            suite_options.heavy = !quick;
            auto results = run_acceptance(suite_options, std::cout);
            for (const auto& r : results) {
                if (!r.pass) return 2;
            }
            return 0;
        }
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 3;
    } catch (const incgeo::input_error& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 3;
    } catch (const incgeo::check_error& e) {
        std::cerr << "check failed: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
