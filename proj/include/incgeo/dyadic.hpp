#pragma once

#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "incgeo/exact.hpp"

namespace incgeo {

// Scales are 2^-k with k >= 0. Finer means larger exponent.
struct Scale {
    int k = 0;
    double delta() const { return std::exp2(-static_cast<double>(k)); }
    bool finer_or_equal(Scale o) const { return k >= o.k; }
};

inline std::int64_t floor_shift(std::int64_t v, int d) {
    return d == 0 ? v : (v >> d);  // arithmetic shift: floor division by 2^d
}

// Half-open square [ix*2^-k, (ix+1)*2^-k) x [iy*2^-k, (iy+1)*2^-k).
struct DyadicSquare {
    int k = 0;
    std::int64_t ix = 0;
    std::int64_t iy = 0;

    DyadicSquare parent_at(int coarser_k) const {
        if (coarser_k > k) throw input_error("parent_at: scale finer than square");
        int d = k - coarser_k;
        return {coarser_k, floor_shift(ix, d), floor_shift(iy, d)};
    }
    bool contains(const DyadicSquare& q) const {
        return q.k >= k && q.parent_at(k).ix == ix && q.parent_at(k).iy == iy;
    }
    bool operator==(const DyadicSquare& o) const { return k == o.k && ix == o.ix && iy == o.iy; }
    bool operator<(const DyadicSquare& o) const {
        if (k != o.k) return k < o.k;
        if (ix != o.ix) return ix < o.ix;
        return iy < o.iy;
    }
};

// Half-open interval [i*2^-k, (i+1)*2^-k).
struct DyadicInterval {
    int k = 0;
    std::int64_t i = 0;

    DyadicInterval parent_at(int coarser_k) const {
        if (coarser_k > k) throw input_error("parent_at: scale finer than interval");
        return {coarser_k, floor_shift(i, k - coarser_k)};
    }
    bool operator==(const DyadicInterval& o) const { return k == o.k && i == o.i; }
};

// Distance between square midpoints: sqrt(sq) * 2^-k, kept exact.
struct GridLength {
    std::int64_t sq = 0;  // squared distance in grid units
    int k = 0;
    double value() const { return std::sqrt(static_cast<double>(sq)) * std::exp2(-k); }
    bool zero() const { return sq == 0; }
};

// Deduplicated family of same-scale squares in canonical (ix, iy) order.
class SquareFamily {
  public:
    SquareFamily() = default;
    SquareFamily(int k, std::vector<std::pair<std::int64_t, std::int64_t>> cells);

    int scale_k() const { return k_; }
    std::size_t size() const { return cells_.size(); }
    bool empty() const { return cells_.empty(); }
    const std::vector<std::pair<std::int64_t, std::int64_t>>& cells() const { return cells_; }
    DyadicSquare square(std::size_t i) const { return {k_, cells_[i].first, cells_[i].second}; }
    bool contains(std::int64_t ix, std::int64_t iy) const;

    bool operator==(const SquareFamily& o) const { return k_ == o.k_ && cells_ == o.cells_; }

  private:
    int k_ = 0;
    std::vector<std::pair<std::int64_t, std::int64_t>> cells_;
};

class IntervalFamily {
  public:
    IntervalFamily() = default;
    IntervalFamily(int k, std::vector<std::int64_t> cells);

    int scale_k() const { return k_; }
    std::size_t size() const { return cells_.size(); }
    bool empty() const { return cells_.empty(); }
    const std::vector<std::int64_t>& cells() const { return cells_; }

    bool operator==(const IntervalFamily& o) const { return k_ == o.k_ && cells_ == o.cells_; }

  private:
    int k_ = 0;
    std::vector<std::int64_t> cells_;
};

// Minimal family of coarser squares whose union covers the family.
SquareFamily cover_at(const SquareFamily& family, int coarser_k);
IntervalFamily cover_at(const IntervalFamily& family, int coarser_k);

// Image of the members contained in Q under the homothety mapping Q to the
// unit square; result lives at scale family.k - Q.k.
SquareFamily renormalize(const SquareFamily& family, const DyadicSquare& Q);

GridLength midpoint_distance(const DyadicSquare& p, const DyadicSquare& q);

// Morton interleave of offset indices; ancestors at d levels up share the
// prefix code >> 2d. Used by all the counting scans.
std::uint64_t morton_code(std::int64_t ix, std::int64_t iy);
std::pair<std::int64_t, std::int64_t> morton_decode(std::uint64_t code);

// Serialization: a JSON header line {"scale_exponent":k,"count":n} followed by
// one "k ix iy" line per square. Round-trips byte-exactly.
void write_family(std::ostream& os, const SquareFamily& f);
SquareFamily read_family(std::istream& is);
std::string to_text(const SquareFamily& f);
SquareFamily family_from_text(const std::string& text);

}  // namespace incgeo
