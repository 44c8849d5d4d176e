#include "incgeo/projections.hpp"

#include <algorithm>
#include <map>

#include <mpfr.h>

namespace incgeo {

Measure2D counting_measure(const SquareFamily& P, bool normalized) {
    if (P.empty()) throw input_error("counting_measure: empty family");
    Measure2D mu;
    mu.k = P.scale_k();
    mpq_class w = normalized ? mpq_class(1, static_cast<long>(P.size())) : mpq_class(1);
    mu.atoms.reserve(P.size());
    for (const auto& [ix, iy] : P.cells()) mu.atoms.emplace_back(ix, iy, w);
    mu.mass = w * static_cast<long>(P.size());
    return mu;
}

namespace {

std::int64_t projected_index(std::int64_t ix, std::int64_t iy, std::int64_t sigma_num,
                             int sigma_k, Convention conv) {
    // centre (ix + 1/2, iy + 1/2) * 2^-k mapped by x - sigma y or sigma x + y,
    // everything in units of 2^-(k + sigma_k + 1); the scale cancels
    std::int64_t u = (conv == Convention::Appendix) ? 2 * ix + 1 : 2 * iy + 1;
    std::int64_t v = (conv == Convention::Appendix) ? 2 * iy + 1 : 2 * ix + 1;
    std::int64_t scaled = (u << sigma_k) + (conv == Convention::Appendix ? -1 : 1) * sigma_num * v;
    return floor_shift(scaled, sigma_k + 1);
}

}  // namespace

Measure1D project_measure(const Measure2D& mu, std::int64_t sigma_num, int sigma_k,
                          Convention conv) {
    if (!valid_slope_range(sigma_k, sigma_num)) {
        throw input_error("project_measure: slope outside [-1,1)");
    }
    std::map<std::int64_t, mpq_class> bins;
    for (const auto& [ix, iy, w] : mu.atoms) {
        bins[projected_index(ix, iy, sigma_num, sigma_k, conv)] += w;
    }
    Measure1D out;
    out.k = mu.k;
    out.mass = 0;
    out.atoms.reserve(bins.size());
    for (auto& [cell, w] : bins) {
        out.mass += w;
        out.atoms.emplace_back(cell, std::move(w));
    }
    return out;
}

IntervalFamily project_family(const SquareFamily& P, std::int64_t sigma_num, int sigma_k,
                              Convention conv) {
    if (!valid_slope_range(sigma_k, sigma_num)) {
        throw input_error("project_family: slope outside [-1,1)");
    }
    std::vector<std::int64_t> cells;
    cells.reserve(P.size());
    for (const auto& [ix, iy] : P.cells()) {
        cells.push_back(projected_index(ix, iy, sigma_num, sigma_k, conv));
    }
    return IntervalFamily(P.scale_k(), std::move(cells));
}

namespace {

struct MpfrGuard {
    mpfr_t v;
    explicit MpfrGuard(mpfr_prec_t prec) { mpfr_init2(v, prec); }
    ~MpfrGuard() { mpfr_clear(v); }
    MpfrGuard(const MpfrGuard&) = delete;
    MpfrGuard& operator=(const MpfrGuard&) = delete;
};

// floor(2^(k s) * m2^(-s/2) * 2^48) / 2^48: the kernel value for squared grid
// distance m2 at scale 2^-k
mpq_class kernel_value(std::int64_t m2, int k, const mpq_class& s) {
    if (m2 == 0) return quantize_pow2(mpq_class(k) * s, kKernelFracBits);
    if (mpz_popcount(mpz_class(m2).get_mpz_t()) == 1) {
        long a = static_cast<long>(mpz_sizeinbase(mpz_class(m2).get_mpz_t(), 2)) - 1;
        return quantize_pow2(mpq_class(k) * s - s * a / 2, kKernelFracBits);
    }
    // exponent k s - (s/2) log2(m2) is irrational; enclose and round down
    for (mpfr_prec_t prec = 96;; prec *= 2) {
        if (prec > (1 << 22)) throw check_error("kernel_value: enclosure failed to converge");
        MpfrGuard x(prec), lo(prec), hi(prec), e(prec);
        mpq_class half_s = s / 2;
        mpfr_set_si(x.v, static_cast<long>(m2), MPFR_RNDD);
        mpfr_log2(hi.v, x.v, MPFR_RNDU);  // upper log -> lower value
        mpfr_mul_q(hi.v, hi.v, half_s.get_mpq_t(), MPFR_RNDU);
        mpq_class ks = mpq_class(k) * s;
        mpfr_set_q(e.v, ks.get_mpq_t(), MPFR_RNDD);
        mpfr_sub(lo.v, e.v, hi.v, MPFR_RNDD);
        mpfr_log2(hi.v, x.v, MPFR_RNDD);
        mpfr_mul_q(hi.v, hi.v, half_s.get_mpq_t(), MPFR_RNDD);
        mpfr_set_q(e.v, ks.get_mpq_t(), MPFR_RNDU);
        mpfr_sub(hi.v, e.v, hi.v, MPFR_RNDU);
        mpfr_exp2(lo.v, lo.v, MPFR_RNDD);
        mpfr_exp2(hi.v, hi.v, MPFR_RNDU);
        mpfr_mul_2si(lo.v, lo.v, kKernelFracBits, MPFR_RNDD);
        mpfr_mul_2si(hi.v, hi.v, kKernelFracBits, MPFR_RNDU);
        mpz_class flo, fhi;
        mpfr_get_z(flo.get_mpz_t(), lo.v, MPFR_RNDD);
        mpfr_get_z(fhi.get_mpz_t(), hi.v, MPFR_RNDD);
        if (flo == fhi) {
            mpz_class den = 1;
            den <<= kKernelFracBits;
            mpq_class out(flo, den);
            out.canonicalize();
            return out;
        }
    }
}

mpq_class kernel_cached(std::int64_t m2, int k, const mpq_class& s) {
    thread_local std::map<std::tuple<std::int64_t, int, mpq_class>, mpq_class> cache;
    auto key = std::make_tuple(m2, k, s);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    mpq_class v = kernel_value(m2, k, s);
    cache.emplace(std::move(key), v);
    return v;
}

}  // namespace

mpq_class riesz_energy(const Measure1D& mu, const mpq_class& s) {
    if (!(s > 0 && s < 2)) throw input_error("riesz_energy: exponent outside (0,2)");
    mpq_class total = 0;
    for (std::size_t i = 0; i < mu.atoms.size(); ++i) {
        const auto& [ci, wi] = mu.atoms[i];
        total += wi * wi * kernel_cached(0, mu.k, s);
        for (std::size_t j = i + 1; j < mu.atoms.size(); ++j) {
            const auto& [cj, wj] = mu.atoms[j];
            std::int64_t d = cj - ci;
            total += 2 * wi * wj * kernel_cached(d * d, mu.k, s);
        }
    }
    return total;
}

mpq_class riesz_energy(const Measure2D& mu, const mpq_class& s) {
    if (!(s > 0 && s < 2)) throw input_error("riesz_energy: exponent outside (0,2)");
    mpq_class total = 0;
    for (std::size_t i = 0; i < mu.atoms.size(); ++i) {
        const auto& [xi, yi, wi] = mu.atoms[i];
        total += wi * wi * kernel_cached(0, mu.k, s);
        for (std::size_t j = i + 1; j < mu.atoms.size(); ++j) {
            const auto& [xj, yj, wj] = mu.atoms[j];
            std::int64_t dx = xj - xi;
            std::int64_t dy = yj - yi;
            total += 2 * wi * wj * kernel_cached(dx * dx + dy * dy, mu.k, s);
        }
    }
    return total;
}

DirectionSelection good_directions(const SquareFamily& P, const std::vector<std::int64_t>& slopes,
                                   int slope_k, const mpq_class& s, Convention conv) {
    if (slopes.empty()) throw input_error("good_directions: empty slope set");
    Measure2D mu = counting_measure(P);
    DirectionSelection out;
    out.slopes = slopes;
    out.energies.reserve(slopes.size());
    mpq_class sum = 0;
    for (std::int64_t sigma : slopes) {
        Measure1D nu = project_measure(mu, sigma, slope_k, conv);
        mpq_class e = riesz_energy(nu, s);
        sum += e;
        out.energies.push_back(std::move(e));
    }
    out.threshold = 2 * sum / static_cast<long>(slopes.size());
    out.selected.assign(slopes.size(), 0);
    for (std::size_t i = 0; i < slopes.size(); ++i) {
        if (out.energies[i] <= out.threshold) {
            out.selected[i] = 1;
            ++out.selected_count;
        }
    }
    if (2 * out.selected_count < slopes.size()) {
        throw check_error("good_directions: selection below half (impossible)");
    }
    return out;
}

ProductStructure product_structure(const DyadicTube& T0, const std::vector<SliceInput>& slices) {
    if (T0.conv != Convention::Appendix) {
        throw input_error("product_structure: reference tube must use the appendix duality");
    }
    const int coarse_k = T0.k;
    const int fine_k = 2 * coarse_k;
    const std::int64_t unit = std::int64_t{1} << coarse_k;
    for (const SliceInput& in : slices) {
        if (in.Q.k != coarse_k || in.cells.scale_k() != fine_k ||
            in.cells.size() != in.tubes_per_cell.size()) {
            throw input_error("product_structure: scale mismatch in slice input");
        }
        if (in.cells.empty()) throw input_error("product_structure: empty slice");
        for (std::size_t i = 0; i < in.cells.size(); ++i) {
            const TubeFamily& fam = in.tubes_per_cell[i];
            if (fam.scale_k() != fine_k || fam.convention() != Convention::Appendix) {
                throw input_error("product_structure: bad fine tube family");
            }
            for (std::size_t t = 0; t < fam.size(); ++t) {
                DyadicTube T = fam.tube(t);
                if (!(T.ancestor_at(coarse_k) == T0)) {
                    throw input_error("product_structure: fine tube outside the reference tube");
                }
                if (!tube_meets_square(T, in.cells.square(i))) {
                    throw input_error("product_structure: fine tube misses its square");
                }
            }
        }
    }

    // normalise the reference tube to D([0, Delta)^2) by the shear
    // F(x, y) = (x - sigma0 y - h0, y); tubes map exactly, squares become
    // parallelograms re-associated to the dyadic square capturing the most
    // incident tubes (ties toward canonical order)
    const std::int64_t da = T0.ia << coarse_k;  // parameter shift in fine units
    const std::int64_t db = T0.ib << coarse_k;
    const bool identity = (T0.ia == 0 && T0.ib == 0);

    struct Cell {
        std::int64_t ix, iy;
        std::vector<std::pair<std::int64_t, std::int64_t>> tubes;  // fine params, normalised
    };
    struct Group {  // per normalised coarse square
        std::vector<Cell> cells;
    };
    std::map<std::pair<std::int64_t, std::int64_t>, Group> groups;
    for (const SliceInput& in : slices) {
        for (std::size_t i = 0; i < in.cells.size(); ++i) {
            DyadicSquare p = in.cells.square(i);
            std::vector<std::pair<std::int64_t, std::int64_t>> moved;
            moved.reserve(in.tubes_per_cell[i].size());
            for (const auto& [ia, ib] : in.tubes_per_cell[i].cells()) {
                moved.emplace_back(ia - da, ib - db);
            }
            Cell cell;
            if (identity) {
                cell.ix = p.ix;
                cell.iy = p.iy;
                cell.tubes = std::move(moved);
            } else {
                // candidate squares covering F(p): x-extent has length
                // (1 + |sigma0|) delta, y unchanged
                mpq_class delta(1, std::int64_t{1} << fine_k);
                mpq_class sigma0(T0.ia, unit);
                mpq_class h0(T0.ib, unit);
                mpq_class x0 = p.ix * delta;
                mpq_class y0 = p.iy * delta;
                mpq_class lo = x0 - sigma0 * (sigma0 >= 0 ? y0 + delta : y0) - h0;
                mpq_class hi = x0 + delta - sigma0 * (sigma0 >= 0 ? y0 : y0 + delta) - h0;
                mpz_class lo_idx, hi_idx;
                mpq_class lo_s = lo / delta, hi_s = hi / delta;
                mpz_fdiv_q(lo_idx.get_mpz_t(), lo_s.get_num().get_mpz_t(),
                           lo_s.get_den().get_mpz_t());
                mpz_cdiv_q(hi_idx.get_mpz_t(), hi_s.get_num().get_mpz_t(),
                           hi_s.get_den().get_mpz_t());
                std::int64_t best_count = -1;
                std::int64_t best_ix = 0;
                for (std::int64_t cand = lo_idx.get_si(); cand < hi_idx.get_si(); ++cand) {
                    DyadicSquare sq{fine_k, cand, p.iy};
                    std::int64_t count = 0;
                    for (const auto& [ia, ib] : moved) {
                        if (tube_meets_square(DyadicTube{fine_k, ia, ib, Convention::Appendix},
                                              sq)) {
                            ++count;
                        }
                    }
                    if (count > best_count) {
                        best_count = count;
                        best_ix = cand;
                    }
                }
                if (best_count <= 0) continue;  // no tube survives the re-association
                cell.ix = best_ix;
                cell.iy = p.iy;
                DyadicSquare sq{fine_k, cell.ix, cell.iy};
                for (const auto& [ia, ib] : moved) {
                    if (tube_meets_square(DyadicTube{fine_k, ia, ib, Convention::Appendix}, sq)) {
                        cell.tubes.emplace_back(ia, ib);
                    }
                }
            }
            if (cell.tubes.empty()) continue;
            groups[{floor_shift(cell.ix, coarse_k), floor_shift(cell.iy, coarse_k)}]
                .cells.push_back(std::move(cell));
        }
    }

    // per original coarse square the re-association may scatter cells over up
    // to three coarse columns; keep, per distinct y-row, the column capturing
    // the most cells (ties toward canonical order)
    std::map<std::int64_t, std::pair<std::int64_t, std::size_t>> row_choice;  // y -> (x, count)
    for (const auto& [cell, group] : groups) {
        auto it = row_choice.find(cell.second);
        if (it == row_choice.end() || group.cells.size() > it->second.second) {
            row_choice[cell.second] = {cell.first, group.cells.size()};
        }
    }

    ProductStructure out;
    out.coarse_k = coarse_k;
    out.fine_k = fine_k;
    out.reference = DyadicTube{coarse_k, 0, 0, Convention::Appendix};
    std::vector<std::int64_t> heights;
    std::vector<std::pair<std::int64_t, std::int64_t>> universe_cells;
    std::map<std::pair<std::int64_t, std::int64_t>, bool> fine_seen;
    for (const auto& [y, choice] : row_choice) {
        const Group& group = groups.at({choice.first, y});
        heights.push_back(y);
        ProductStructure::Slice slice;
        slice.y = y;
        for (const Cell& cell : group.cells) {
            slice.xs.push_back(cell.ix);
            // x / Delta must land in [0,3]
            if (cell.ix < 0 || cell.ix > 3 * unit) {
                throw check_error("product_structure: rescaled slice leaves [0,3]");
            }
            ProductStructure::PointTubes pt;
            pt.x_fine = cell.ix;
            pt.y_coarse = y;
            std::vector<std::pair<std::int64_t, std::int64_t>> chosen;
            mpq_class zx = mpq_class(cell.ix, unit);  // x * delta / Delta = ix * Delta
            mpq_class zy = mpq_class(y, unit);
            for (const auto& [sa, hb] : cell.tubes) {
                fine_seen[{sa, hb}] = true;
                bool placed = false;
                // the point's intercept x - a y lands within one coarse step
                // of the dilated fine intercept on either side, so one of the
                // three stacked candidates contains it
                for (std::int64_t off = -1; off < 2 && !placed; ++off) {
                    DyadicTube cand{coarse_k, sa, hb + off, Convention::Appendix};
                    if (point_in_tube(cand, zx, zy)) {
                        chosen.emplace_back(cand.ia, cand.ib);
                        placed = true;
                    }
                }
                if (!placed) {
                    throw check_error("product_structure: no candidate tube contains the point");
                }
            }
            pt.tubes = TubeFamily(coarse_k, Convention::Appendix, chosen);
            universe_cells.insert(universe_cells.end(), pt.tubes.cells().begin(),
                                  pt.tubes.cells().end());
            out.assignments.push_back(std::move(pt));
        }
        std::sort(slice.xs.begin(), slice.xs.end());
        slice.xs.erase(std::unique(slice.xs.begin(), slice.xs.end()), slice.xs.end());
        out.slices.push_back(std::move(slice));
    }
    if (out.assignments.empty()) throw input_error("product_structure: empty output");
    out.heights = IntervalFamily(coarse_k, std::move(heights));
    out.tube_universe = TubeFamily(coarse_k, Convention::Appendix, std::move(universe_cells));
    out.fine_tube_count = fine_seen.size();
    if (out.tube_universe.size() > 3 * out.fine_tube_count) {
        throw check_error("product_structure: 3-fold covering bound violated");
    }
    if (!verify_product_membership(out)) {
        throw check_error("product_structure: membership re-check failed");
    }
    return out;
}

bool verify_product_membership(const ProductStructure& ps) {
    const std::int64_t unit = std::int64_t{1} << ps.coarse_k;
    for (const auto& pt : ps.assignments) {
        mpq_class zx(pt.x_fine, unit);
        mpq_class zy(pt.y_coarse, unit);
        for (std::size_t i = 0; i < pt.tubes.size(); ++i) {
            if (!point_in_tube(pt.tubes.tube(i), zx, zy)) return false;
        }
    }
    return true;
}

}  // namespace incgeo
