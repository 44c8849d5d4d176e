#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "incgeo/dyadic.hpp"
#include "incgeo/exact.hpp"

namespace incgeo {

// Two dualities between parameter points and lines:
//   MainText:  (a, b) <-> { y = a x + b }
//   Appendix:  (a, b) <-> { x = a y + b }
enum class Convention { MainText, Appendix };

std::string convention_name(Convention c);
Convention convention_from_name(const std::string& name);

struct LineDescriptor {
    mpq_class slope_param;  // a
    mpq_class intercept;    // b
    Convention conv;
    // the defining relation evaluated at a point, zero iff on the line
    mpq_class residual(const mpq_class& x, const mpq_class& y) const;
};

LineDescriptor dual_line(const mpq_class& a, const mpq_class& b, Convention conv);

// Union of the dual lines over the half-open parameter square
// [ia*2^-k,(ia+1)*2^-k) x [ib*2^-k,(ib+1)*2^-k). The slope parameter must lie
// in [-1, 1).
struct DyadicTube {
    int k = 0;
    std::int64_t ia = 0;
    std::int64_t ib = 0;
    Convention conv = Convention::MainText;

    DyadicSquare param() const { return {k, ia, ib}; }
    DyadicTube ancestor_at(int coarser_k) const {
        if (coarser_k > k) throw input_error("tube ancestor: scale finer than tube");
        int d = k - coarser_k;
        return {coarser_k, floor_shift(ia, d), floor_shift(ib, d), conv};
    }
    bool operator==(const DyadicTube& o) const {
        return k == o.k && ia == o.ia && ib == o.ib && conv == o.conv;
    }
    bool operator<(const DyadicTube& o) const {
        if (ia != o.ia) return ia < o.ia;
        return ib < o.ib;
    }
};

bool valid_slope_range(int k, std::int64_t ia);  // sigma in [-1,1)

// Same-scale, same-convention, deduplicated, ordered by (ia, ib).
class TubeFamily {
  public:
    TubeFamily() = default;
    TubeFamily(int k, Convention conv, std::vector<std::pair<std::int64_t, std::int64_t>> tubes);

    int scale_k() const { return k_; }
    Convention convention() const { return conv_; }
    std::size_t size() const { return tubes_.size(); }
    bool empty() const { return tubes_.empty(); }
    const std::vector<std::pair<std::int64_t, std::int64_t>>& cells() const { return tubes_; }
    DyadicTube tube(std::size_t i) const { return {k_, tubes_[i].first, tubes_[i].second, conv_}; }
    bool contains(std::int64_t ia, std::int64_t ib) const;

    SquareFamily param_family() const;        // dual parameter squares
    IntervalFamily slope_family() const;      // slope indices as intervals
    TubeFamily coarsened(int coarser_k) const;  // minimal cover by coarser tubes

    bool operator==(const TubeFamily& o) const {
        return k_ == o.k_ && conv_ == o.conv_ && tubes_ == o.tubes_;
    }

  private:
    int k_ = 0;
    Convention conv_ = Convention::MainText;
    std::vector<std::pair<std::int64_t, std::int64_t>> tubes_;
};

// Exact: does some line of the tube pass through the half-open square?
bool tube_meets_square(const DyadicTube& T, const DyadicSquare& p);

// Exact membership of a rational point in the tube.
bool point_in_tube(const DyadicTube& T, const mpq_class& x, const mpq_class& y);

// Parameter square of the reflected family {(-a, b)}, boundaries
// re-canonicalised to half-open dyadic form. MainText only.
DyadicSquare dual_star(const DyadicTube& T);

struct SlopeFibers {
    std::map<std::int64_t, std::vector<std::size_t>> fibers;  // slope index -> members
    std::size_t max_fiber = 0;
};

// Groups tubes by slope; every tube must meet p.
SlopeFibers slope_fibers(const TubeFamily& tubes, const DyadicSquare& p);

// Dyadic (delta/Delta)-tubes covering the homothetic image of T under the map
// sending Q to the unit square. At most 4 tubes (3 in fact); when the slope of
// T is aligned to the coarse grid they all share its slope.
std::vector<DyadicTube> rescale_tube_cover(const DyadicTube& T, const DyadicSquare& Q);

// Serialization: JSON header {"scale_exponent":k,"convention":...,"count":n},
// then one "k ia ib convention" line per tube.
void write_tubes(std::ostream& os, const TubeFamily& f);
TubeFamily read_tubes(std::istream& is);
std::string to_text(const TubeFamily& f);
TubeFamily tubes_from_text(const std::string& text);

}  // namespace incgeo
