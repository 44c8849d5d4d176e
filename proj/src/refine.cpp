#include "incgeo/refine.hpp"

#include <algorithm>
#include <bit>
#include <limits>
#include <map>
#include <numeric>

namespace incgeo {

namespace {

using i128 = __int128;

// bucket exponent: count in (2^(j-1), 2^j]
int bucket_exponent(std::int64_t count) {
    return count <= 1 ? 0 : static_cast<int>(std::bit_width(static_cast<std::uint64_t>(count - 1)));
}

mpq_class budget_value(int k, int power, std::int64_t factor) {
    mpz_class v = factor;
    for (int i = 0; i < power; ++i) v *= k;
    return mpq_class(v);
}

struct AncestorCount {
    std::pair<std::int64_t, std::int64_t> cell;  // coarse (ia, ib)
    std::int64_t count;
};

std::vector<AncestorCount> ancestor_counts(const TubeFamily& fam, int coarse_k) {
    int d = fam.scale_k() - coarse_k;
    std::vector<std::pair<std::int64_t, std::int64_t>> anc;
    anc.reserve(fam.size());
    for (const auto& [ia, ib] : fam.cells()) {
        anc.emplace_back(floor_shift(ia, d), floor_shift(ib, d));
    }
    std::sort(anc.begin(), anc.end());
    std::vector<AncestorCount> out;
    std::size_t i = 0;
    while (i < anc.size()) {
        std::size_t j = i;
        while (j < anc.size() && anc[j] == anc[i]) ++j;
        out.push_back({anc[i], static_cast<std::int64_t>(j - i)});
        i = j;
    }
    return out;
}

}  // namespace

nlohmann::ordered_json PigeonholeTrace::to_json() const {
    nlohmann::ordered_json j;
    j["level_per_square"] = level_per_square;
    j["m1"] = m1;
    j["m2_num"] = m2.get_num().get_str();
    j["m2_den"] = m2.get_den().get_str();
    j["level_thick"] = level_thick;
    j["level_classes"] = level_classes;
    j["input_squares"] = input_squares;
    j["kept_squares"] = kept_squares;
    return j;
}

ThickCoverResult thick_tube_refine(const NiceConfiguration& config, int coarse_k) {
    if (coarse_k > config.k) throw input_error("thick_tube_refine: coarse scale finer than fine");
    if (coarse_k < 0) throw input_error("thick_tube_refine: negative scale");
    if (config.squares.empty()) throw input_error("thick_tube_refine: empty configuration");
    const int k = config.k;
    const std::int64_t M = config.M;

    // per square: counts of fine tubes below each coarse ancestor, then the
    // dyadic level maximising 2^j * |level-j bucket| among the admissible
    // levels 2^j >= M Delta^2 / 200
    const std::size_t n = config.squares.size();
    std::vector<std::vector<AncestorCount>> per_square(n);
    std::vector<int> level_of(n, -1);
    for (std::size_t i = 0; i < n; ++i) {
        per_square[i] = ancestor_counts(config.tubes_per_square[i], coarse_k);
        std::map<int, std::int64_t> bucket_sizes;
        for (const AncestorCount& a : per_square[i]) ++bucket_sizes[bucket_exponent(a.count)];
        int best_j = -1;
        i128 best_score = -1;
        for (const auto& [j, size] : bucket_sizes) {
            i128 lhs = (i128{1} << j) * 200;
            if (lhs * (i128{1} << (2 * coarse_k)) < M) continue;
            i128 score = (i128{1} << j) * size;
            if (score > best_score) {
                best_score = score;
                best_j = j;
            }
        }
        if (best_j < 0) throw check_error("thick_tube_refine: no admissible bucket level");
        level_of[i] = best_j;
    }

    // majority of the per-square levels, ties toward the smaller level
    std::map<int, std::size_t> level_hist;
    for (int j : level_of) ++level_hist[j];
    int j_star = -1;
    std::size_t best_count = 0;
    for (const auto& [j, c] : level_hist) {
        if (c > best_count) {
            best_count = c;
            j_star = j;
        }
    }
    std::vector<std::size_t> kept;
    for (std::size_t i = 0; i < n; ++i) {
        if (level_of[i] == j_star) kept.push_back(i);
    }
    if (kept.size() * level_hist.size() < n) {
        throw check_error("thick_tube_refine: majority class smaller than count/classes");
    }
    const std::int64_t m1 = std::int64_t{1} << j_star;

    // popularity of each coarse tube among kept squares (via their selected
    // buckets), plus the full fine incidence below each coarse tube
    std::map<std::pair<std::int64_t, std::int64_t>, std::int64_t> popularity;
    std::map<std::pair<std::int64_t, std::int64_t>, std::int64_t> incidence_below;
    std::vector<std::vector<std::pair<std::int64_t, std::int64_t>>> selected_of(n);
    for (std::size_t i : kept) {
        for (const AncestorCount& a : per_square[i]) {
            incidence_below[a.cell] += a.count;
            if (bucket_exponent(a.count) == j_star) {
                ++popularity[a.cell];
                selected_of[i].push_back(a.cell);
            }
        }
    }

    // second pigeonhole: popularity level maximising 2^j * bucket size among
    // levels with 2^j * 200 >= |kept| Delta^2
    std::map<int, std::int64_t> pop_buckets;
    for (const auto& [cell, pop] : popularity) ++pop_buckets[bucket_exponent(pop)];
    int best_jt = -1;
    i128 best_score = -1;
    for (const auto& [j, size] : pop_buckets) {
        i128 lhs = (i128{1} << j) * 200;
        if (lhs * (i128{1} << (2 * coarse_k)) < static_cast<i128>(kept.size())) continue;
        i128 score = (i128{1} << j) * size;
        if (score > best_score) {
            best_score = score;
            best_jt = j;
        }
    }
    if (best_jt < 0) throw check_error("thick_tube_refine: no admissible popularity level");

    std::vector<std::pair<std::int64_t, std::int64_t>> thick_cells;
    for (const auto& [cell, pop] : popularity) {
        if (bucket_exponent(pop) == best_jt) thick_cells.push_back(cell);
    }
    Convention conv = config.tubes_per_square.front().convention();
    TubeFamily thick(coarse_k, conv, std::move(thick_cells));

    mpq_class H = mpq_class(m1) * mpq_class(std::int64_t{1} << best_jt);

    // incidence floor: every selected coarse tube carries >= H/8 fine pairs
    for (const auto& cell : thick.cells()) {
        std::int64_t inc = incidence_below[cell];
        if (mpq_class(8) * mpq_class(inc) < H) {
            throw check_error("thick_tube_refine: incidence floor H/8 violated");
        }
    }

    SpreadCertificate cert = spread_certificate(thick, config.s);
    ScaledRational budget = config.C.scaled(budget_value(k, kRefineBudgetPower, kThickCertFactor));
    if (!(cert.C <= budget)) {
        throw check_error("thick_tube_refine: thick certificate exceeded 64 log^4 budget");
    }

    ThickCoverResult out;
    std::vector<std::pair<std::int64_t, std::int64_t>> kept_cells;
    kept_cells.reserve(kept.size());
    for (std::size_t i : kept) kept_cells.push_back(config.squares.cells()[i]);
    out.squares = SquareFamily(k, kept_cells);  // subset of a sorted list: order preserved
    out.tubes_per_square.reserve(kept.size());
    out.thick_of_square.resize(kept.size());
    for (std::size_t idx = 0; idx < kept.size(); ++idx) {
        out.tubes_per_square.push_back(config.tubes_per_square[kept[idx]]);
        for (const auto& cell : selected_of[kept[idx]]) {
            if (thick.contains(cell.first, cell.second)) {
                auto it = std::lower_bound(thick.cells().begin(), thick.cells().end(), cell);
                out.thick_of_square[idx].push_back(
                    static_cast<std::size_t>(it - thick.cells().begin()));
            }
        }
    }
    out.thick = thick;
    out.H = H;
    out.thick_certificate = cert;
    out.trace.level_per_square = j_star;
    out.trace.m1 = m1;
    out.trace.m2 = mpq_class(M) / mpq_class(m1);
    out.trace.level_thick = best_jt;
    out.trace.level_classes = level_hist.size();
    out.trace.input_squares = n;
    out.trace.kept_squares = kept.size();
    return out;
}

std::vector<TubePacket> tube_packets(const TubeFamily& tubes, const DyadicSquare& p, int kbar) {
    if (kbar > tubes.scale_k()) throw input_error("tube_packets: coarse scale finer than tubes");
    const int k = tubes.scale_k();
    const int d = k - kbar;
    std::map<std::pair<std::int64_t, std::int64_t>, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < tubes.size(); ++i) {
        DyadicTube T = tubes.tube(i);
        if (!tube_meets_square(T, p)) {
            throw input_error("tube_packets: tube does not meet the square");
        }
        groups[{floor_shift(T.ia, d), floor_shift(T.ib, d)}].push_back(i);
    }
    std::vector<TubePacket> out;
    out.reserve(groups.size());
    for (auto& [cell, members] : groups) {
        TubePacket packet;
        packet.parent = DyadicTube{kbar, cell.first, cell.second, tubes.convention()};
        packet.members = std::move(members);
        std::int64_t slope = cell.first << d;
        std::int64_t base = cell.second << d;
        std::int64_t span = std::int64_t{1} << d;
        bool found = false;
        for (std::int64_t ib = base; ib < base + span && !found; ++ib) {
            DyadicTube cand{k, slope, ib, tubes.convention()};
            if (tube_meets_square(cand, p)) {
                packet.representative = cand;
                found = true;
            }
        }
        if (!found) {
            // the aligned slope column can miss the parent's own intercept
            // range by less than one coarse step; widen one step each way
            for (std::int64_t ib = base - span; ib < base + 2 * span && !found; ++ib) {
                if (ib >= base && ib < base + span) continue;
                DyadicTube cand{k, slope, ib, tubes.convention()};
                if (tube_meets_square(cand, p)) {
                    packet.representative = cand;
                    packet.escaped = true;
                    found = true;
                }
            }
        }
        if (!found) throw check_error("tube_packets: no representative found");
        out.push_back(std::move(packet));
    }
    return out;
}

TubeFamily separated_subset(const TubeFamily& tubes, std::int64_t C_sep) {
    if (C_sep < 1) throw input_error("separated_subset: separation constant must be positive");
    // greedily keep tubes whose intercepts are at least 2 C_sep + 2 grid steps
    // apart within each slope class; intercepts are distinct integers, so at
    // most 2 C_sep + 1 tubes are skipped per kept one
    const std::int64_t stride = 2 * C_sep + 2;
    std::vector<std::pair<std::int64_t, std::int64_t>> out;
    std::size_t i = 0;
    const auto& cells = tubes.cells();
    while (i < cells.size()) {
        std::size_t j = i;
        std::int64_t last = cells[i].second - stride;
        while (j < cells.size() && cells[j].first == cells[i].first) {
            if (cells[j].second >= last + stride) {
                out.push_back(cells[j]);
                last = cells[j].second;
            }
            ++j;
        }
        i = j;
    }
    return TubeFamily(tubes.scale_k(), tubes.convention(), std::move(out));
}

namespace {

struct QGroup {
    DyadicSquare Q;
    std::vector<std::size_t> square_indices;
};

std::vector<QGroup> group_by_coarse_square(const NiceConfiguration& config, int coarse_k) {
    std::map<std::pair<std::int64_t, std::int64_t>, std::vector<std::size_t>> groups;
    int d = config.k - coarse_k;
    for (std::size_t i = 0; i < config.squares.size(); ++i) {
        const auto& [ix, iy] = config.squares.cells()[i];
        groups[{floor_shift(ix, d), floor_shift(iy, d)}].push_back(i);
    }
    std::vector<QGroup> out;
    out.reserve(groups.size());
    for (auto& [cell, idx] : groups) {
        out.push_back({DyadicSquare{coarse_k, cell.first, cell.second}, std::move(idx)});
    }
    return out;
}

}  // namespace

InductionResult induction_on_scales(const NiceConfiguration& config, int coarse_k) {
    if (coarse_k > config.k || coarse_k < 0) {
        throw input_error("induction_on_scales: bad coarse scale");
    }
    NiceReport report = validate_nice(config);
    if (!report.ok) {
        throw input_error("induction_on_scales: invalid configuration: " + report.issue);
    }
    const int k = config.k;
    const int kbar = k - coarse_k;
    const std::int64_t M = config.M;
    const Convention conv = config.tubes_per_square.front().convention();
    const mpq_class budget_small = budget_value(k, kRefineBudgetPower, kRefineBudgetFactor);

    // stage 1: thick-tube covering inside each coarse square
    std::vector<QGroup> groups = group_by_coarse_square(config, coarse_k);
    struct QState {
        DyadicSquare Q;
        ThickCoverResult cover;
        std::size_t input_count = 0;
    };
    std::vector<QState> states;
    states.reserve(groups.size());
    for (const QGroup& g : groups) {
        NiceConfiguration sub;
        sub.k = k;
        sub.s = config.s;
        sub.C = config.C;
        sub.M = M;
        std::vector<std::pair<std::int64_t, std::int64_t>> cells;
        cells.reserve(g.square_indices.size());
        for (std::size_t i : g.square_indices) cells.push_back(config.squares.cells()[i]);
        sub.squares = SquareFamily(k, cells);
        for (std::size_t i : g.square_indices) {
            sub.tubes_per_square.push_back(config.tubes_per_square[i]);
        }
        states.push_back({g.Q, thick_tube_refine(sub, coarse_k), g.square_indices.size()});
    }

    // stage 2: freeze |thick(Q)| to a dyadic class (majority by square count)
    {
        std::map<int, std::size_t> classes;
        for (const QState& st : states) {
            classes[bucket_exponent(static_cast<std::int64_t>(st.cover.thick.size()))]++;
        }
        int best = -1;
        std::size_t best_count = 0;
        for (const auto& [j, c] : classes) {
            if (c > best_count) {
                best_count = c;
                best = j;
            }
        }
        std::vector<QState> kept;
        for (QState& st : states) {
            if (bucket_exponent(static_cast<std::int64_t>(st.cover.thick.size())) == best) {
                kept.push_back(std::move(st));
            }
        }
        if (kept.size() * classes.size() < states.size()) {
            throw check_error("induction_on_scales: coarse majority class too small");
        }
        states = std::move(kept);
    }

    // stage 3: freeze the fine-per-thick count over the whole universe
    std::vector<std::pair<std::int64_t, std::int64_t>> universe_cells;
    for (const auto& fam : config.tubes_per_square) {
        universe_cells.insert(universe_cells.end(), fam.cells().begin(), fam.cells().end());
    }
    TubeFamily universe(k, conv, std::move(universe_cells));
    std::map<std::pair<std::int64_t, std::int64_t>, std::int64_t> fine_below;
    for (const AncestorCount& a : ancestor_counts(universe, coarse_k)) {
        fine_below[a.cell] = a.count;
    }
    std::map<int, std::int64_t> pairs_by_class;
    for (const QState& st : states) {
        for (const auto& cell : st.cover.thick.cells()) {
            pairs_by_class[bucket_exponent(fine_below[cell])]++;
        }
    }
    int n_class = -1;
    std::int64_t best_pairs = -1;
    for (const auto& [j, pairs] : pairs_by_class) {
        if (pairs > best_pairs) {
            best_pairs = pairs;
            n_class = j;
        }
    }
    const std::int64_t N_Delta = std::int64_t{1} << n_class;

    // intersect each thick family with the frozen class, re-freeze sizes
    std::vector<std::vector<std::pair<std::int64_t, std::int64_t>>> thick_kept(states.size());
    for (std::size_t i = 0; i < states.size(); ++i) {
        for (const auto& cell : states[i].cover.thick.cells()) {
            if (bucket_exponent(fine_below[cell]) == n_class) thick_kept[i].push_back(cell);
        }
    }
    {
        std::map<int, std::size_t> classes;
        for (const auto& cells : thick_kept) {
            if (!cells.empty()) {
                classes[bucket_exponent(static_cast<std::int64_t>(cells.size()))]++;
            }
        }
        if (classes.empty()) throw check_error("induction_on_scales: frozen class emptied");
        int best = -1;
        std::size_t best_count = 0;
        for (const auto& [j, c] : classes) {
            if (c > best_count) {
                best_count = c;
                best = j;
            }
        }
        std::vector<QState> kept_states;
        std::vector<std::vector<std::pair<std::int64_t, std::int64_t>>> kept_thick;
        for (std::size_t i = 0; i < states.size(); ++i) {
            if (!thick_kept[i].empty() &&
                bucket_exponent(static_cast<std::int64_t>(thick_kept[i].size())) == best) {
                kept_states.push_back(std::move(states[i]));
                kept_thick.push_back(std::move(thick_kept[i]));
            }
        }
        states = std::move(kept_states);
        thick_kept = std::move(kept_thick);
    }
    std::int64_t M_Delta = std::numeric_limits<std::int64_t>::max();
    for (const auto& cells : thick_kept) {
        M_Delta = std::min(M_Delta, static_cast<std::int64_t>(cells.size()));
    }
    for (auto& cells : thick_kept) cells.resize(static_cast<std::size_t>(M_Delta));

    // assemble the coarse configuration
    InductionResult out;
    {
        std::vector<std::pair<std::int64_t, std::int64_t>> q_cells;
        for (const QState& st : states) q_cells.emplace_back(st.Q.ix, st.Q.iy);
        SquareFamily q_family(coarse_k, q_cells);
        std::vector<TubeFamily> q_tubes(q_family.size());
        ScaledRational c_delta(mpq_class(1), mpq_class(0));
        bool first = true;
        std::vector<std::pair<std::int64_t, std::int64_t>> coarse_union;
        for (std::size_t i = 0; i < states.size(); ++i) {
            auto it = std::lower_bound(q_family.cells().begin(), q_family.cells().end(),
                                       std::make_pair(states[i].Q.ix, states[i].Q.iy));
            std::size_t row = static_cast<std::size_t>(it - q_family.cells().begin());
            q_tubes[row] = TubeFamily(coarse_k, conv, thick_kept[i]);
            coarse_union.insert(coarse_union.end(), thick_kept[i].begin(), thick_kept[i].end());
            SpreadCertificate cert = spread_certificate(q_tubes[row], config.s);
            if (first || c_delta < cert.C) {
                c_delta = cert.C;
                first = false;
            }
        }
        if (!(c_delta <= config.C.scaled(budget_small))) {
            throw check_error("induction_on_scales: coarse certificate exceeded budget");
        }
        out.coarse.k = coarse_k;
        out.coarse.s = config.s;
        out.coarse.C = c_delta;
        out.coarse.M = M_Delta;
        out.coarse.squares = q_family;
        out.coarse.tubes_per_square = std::move(q_tubes);
        out.coarse_universe = TubeFamily(coarse_k, conv, std::move(coarse_union));
        NiceReport coarse_report = validate_nice(out.coarse);
        if (!coarse_report.ok) {
            throw check_error("induction_on_scales: coarse configuration invalid: " +
                              coarse_report.issue);
        }
    }
    out.fine_per_thick = N_Delta;

    // stage 4: per kept coarse square, restrict the fine families to the
    // selected thick tubes, keep squares retaining enough, then packets,
    // representatives, and the renormalised configuration
    mpq_class max_ratio_fine(0);
    std::vector<std::pair<std::int64_t, std::int64_t>> final_cells;
    std::vector<TubeFamily> final_tubes;
    for (std::size_t qi = 0; qi < states.size(); ++qi) {
        const ThickCoverResult& cover = states[qi].cover;
        std::vector<std::pair<std::int64_t, std::int64_t>> thick_sorted = thick_kept[qi];
        std::sort(thick_sorted.begin(), thick_sorted.end());
        std::vector<std::vector<std::pair<std::int64_t, std::int64_t>>> restricted(
            cover.squares.size());
        std::int64_t total = 0;
        for (std::size_t i = 0; i < cover.squares.size(); ++i) {
            for (const auto& [ia, ib] : cover.tubes_per_square[i].cells()) {
                std::pair<std::int64_t, std::int64_t> anc{floor_shift(ia, kbar),
                                                          floor_shift(ib, kbar)};
                if (std::binary_search(thick_sorted.begin(), thick_sorted.end(), anc)) {
                    restricted[i].emplace_back(ia, ib);
                }
            }
            total += static_cast<std::int64_t>(restricted[i].size());
        }
        mpq_class tau = mpq_class(total) / mpq_class(2 * static_cast<long>(cover.squares.size()));
        std::vector<std::size_t> kept_rows;
        for (std::size_t i = 0; i < cover.squares.size(); ++i) {
            if (mpq_class(static_cast<long>(restricted[i].size())) >= tau &&
                !restricted[i].empty()) {
                kept_rows.push_back(i);
            }
        }
        if (kept_rows.empty()) throw check_error("induction_on_scales: threshold emptied a square");
        for (std::size_t i : kept_rows) {
            if (mpq_class(static_cast<long>(restricted[i].size())) * budget_small < M) {
                throw check_error("induction_on_scales: per-square retention below budget");
            }
        }
        if (mpq_class(static_cast<long>(kept_rows.size())) * budget_small <
            mpq_class(static_cast<long>(states[qi].input_count))) {
            throw check_error("induction_on_scales: per-Q square retention below budget");
        }

        struct RowData {
            std::size_t row;
            std::vector<TubePacket> packets;
            std::int64_t packet_count = 0;
        };
        std::vector<RowData> rows;
        for (std::size_t i : kept_rows) {
            TubeFamily fam(k, conv, restricted[i]);
            auto packets = tube_packets(fam, cover.squares.square(i), kbar);
            std::map<int, std::int64_t> classes;
            for (const TubePacket& packet : packets) {
                classes[bucket_exponent(static_cast<std::int64_t>(packet.members.size()))]++;
            }
            int best = -1;
            i128 best_score = -1;
            for (const auto& [j, c] : classes) {
                i128 score = (i128{1} << j) * c;
                if (score > best_score) {
                    best_score = score;
                    best = j;
                }
            }
            RowData rd;
            rd.row = i;
            for (TubePacket& packet : packets) {
                if (bucket_exponent(static_cast<std::int64_t>(packet.members.size())) == best) {
                    rd.packets.push_back(std::move(packet));
                }
            }
            rd.packet_count = static_cast<std::int64_t>(rd.packets.size());
            rows.push_back(std::move(rd));
        }
        {
            std::map<int, std::size_t> classes;
            for (const RowData& rd : rows) classes[bucket_exponent(rd.packet_count)]++;
            int best = -1;
            std::size_t best_count = 0;
            for (const auto& [j, c] : classes) {
                if (c > best_count) {
                    best_count = c;
                    best = j;
                }
            }
            std::vector<RowData> kept2;
            for (RowData& rd : rows) {
                if (bucket_exponent(rd.packet_count) == best) kept2.push_back(std::move(rd));
            }
            rows = std::move(kept2);
        }

        DyadicSquare Q = states[qi].Q;
        std::vector<std::pair<std::int64_t, std::int64_t>> q_cells;
        std::vector<std::vector<std::pair<std::int64_t, std::int64_t>>> q_tubes;
        for (const RowData& rd : rows) {
            DyadicSquare p = cover.squares.square(rd.row);
            DyadicSquare q{kbar, p.ix - (Q.ix << kbar), p.iy - (Q.iy << kbar)};
            std::vector<std::pair<std::int64_t, std::int64_t>> fam;
            for (const TubePacket& packet : rd.packets) {
                auto cover_tubes = rescale_tube_cover(packet.representative, Q);
                bool placed = false;
                for (const DyadicTube& ct : cover_tubes) {
                    if (tube_meets_square(ct, q)) {
                        fam.emplace_back(ct.ia, ct.ib);
                        placed = true;
                        break;
                    }
                }
                if (!placed) {
                    throw check_error("induction_on_scales: no rescaled tube meets its square");
                }
            }
            std::sort(fam.begin(), fam.end());
            fam.erase(std::unique(fam.begin(), fam.end()), fam.end());
            q_cells.emplace_back(q.ix, q.iy);
            q_tubes.push_back(std::move(fam));
        }
        // drop rows that lost more than half to deduplication, trim the rest
        std::int64_t target = rows.empty() ? 1 : rows.front().packet_count;
        std::vector<std::size_t> good_rows;
        for (std::size_t i = 0; i < q_tubes.size(); ++i) {
            if (static_cast<std::int64_t>(q_tubes[i].size()) * 2 >= target) good_rows.push_back(i);
        }
        if (good_rows.empty()) {
            throw check_error("induction_on_scales: renormalised families collapsed");
        }
        std::int64_t min_size = std::numeric_limits<std::int64_t>::max();
        for (std::size_t i : good_rows) {
            min_size = std::min(min_size, static_cast<std::int64_t>(q_tubes[i].size()));
        }
        InductionResult::PerSquare per;
        per.Q = Q;
        per.config.k = kbar;
        per.config.s = config.s;
        per.config.M = min_size;
        std::vector<std::pair<std::int64_t, std::int64_t>> cells2;
        for (std::size_t i : good_rows) cells2.push_back(q_cells[i]);
        per.config.squares = SquareFamily(kbar, cells2);
        per.config.tubes_per_square.resize(per.config.squares.size());
        ScaledRational c_q(mpq_class(1), mpq_class(0));
        bool first = true;
        std::vector<std::pair<std::int64_t, std::int64_t>> q_union;
        for (std::size_t i : good_rows) {
            auto it = std::lower_bound(per.config.squares.cells().begin(),
                                       per.config.squares.cells().end(), q_cells[i]);
            std::size_t row = static_cast<std::size_t>(it - per.config.squares.cells().begin());
            std::vector<std::pair<std::int64_t, std::int64_t>> trimmed(
                q_tubes[i].begin(), q_tubes[i].begin() + static_cast<std::ptrdiff_t>(min_size));
            q_union.insert(q_union.end(), q_tubes[i].begin(), q_tubes[i].end());
            per.config.tubes_per_square[row] = TubeFamily(kbar, conv, std::move(trimmed));
            SpreadCertificate cert = spread_certificate(per.config.tubes_per_square[row], config.s);
            if (first || c_q < cert.C) {
                c_q = cert.C;
                first = false;
            }
        }
        per.config.C = c_q;
        per.universe = TubeFamily(kbar, conv, std::move(q_union));
        if (!(c_q <= config.C.scaled(budget_small))) {
            throw check_error("induction_on_scales: renormalised certificate exceeded budget");
        }
        NiceReport fine_report = validate_nice(per.config);
        if (!fine_report.ok) {
            throw check_error("induction_on_scales: renormalised configuration invalid: " +
                              fine_report.issue);
        }
        mpq_class ratio =
            mpq_class(static_cast<long>(per.universe.size())) / mpq_class(per.config.M);
        max_ratio_fine = std::max(max_ratio_fine, ratio);
        out.fine.push_back(std::move(per));

        for (const RowData& rd : rows) {
            final_cells.push_back(cover.squares.cells()[rd.row]);
            final_tubes.push_back(TubeFamily(k, conv, restricted[rd.row]));
        }
        out.traces.push_back(cover.trace.to_json());
    }

    // fine output configuration in canonical square order
    {
        std::vector<std::size_t> order(final_cells.size());
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return final_cells[a] < final_cells[b];
        });
        std::vector<std::pair<std::int64_t, std::int64_t>> cells;
        std::vector<TubeFamily> tubes;
        cells.reserve(order.size());
        for (std::size_t i : order) {
            cells.push_back(final_cells[i]);
            tubes.push_back(std::move(final_tubes[i]));
        }
        out.squares = SquareFamily(k, cells);
        out.tubes_per_square = std::move(tubes);
    }

    // product inequality with the pinned budget (log2(1/delta))^8
    out.product_lhs = mpq_class(static_cast<long>(universe.size())) / mpq_class(M);
    out.product_rhs =
        (mpq_class(static_cast<long>(out.coarse_universe.size())) / mpq_class(out.coarse.M)) *
        max_ratio_fine;
    mpq_class budget = budget_value(k, kProductBudgetPower, 1);
    if (out.product_lhs * budget < out.product_rhs) {
        throw check_error("induction_on_scales: coarse/fine product bound violated");
    }
    return out;
}

}  // namespace incgeo
