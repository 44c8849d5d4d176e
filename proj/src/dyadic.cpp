#include "incgeo/dyadic.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace incgeo {

namespace {

template <typename T>
void sort_unique(std::vector<T>& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
}

}  // namespace

SquareFamily::SquareFamily(int k, std::vector<std::pair<std::int64_t, std::int64_t>> cells)
    : k_(k), cells_(std::move(cells)) {
    if (k < 0) throw input_error("SquareFamily: negative scale exponent");
    sort_unique(cells_);
}

bool SquareFamily::contains(std::int64_t ix, std::int64_t iy) const {
    return std::binary_search(cells_.begin(), cells_.end(), std::make_pair(ix, iy));
}

IntervalFamily::IntervalFamily(int k, std::vector<std::int64_t> cells)
    : k_(k), cells_(std::move(cells)) {
    if (k < 0) throw input_error("IntervalFamily: negative scale exponent");
    sort_unique(cells_);
}

SquareFamily cover_at(const SquareFamily& family, int coarser_k) {
    if (coarser_k > family.scale_k()) {
        throw input_error("cover_at: requested scale is finer than the family");
    }
    if (coarser_k < 0) throw input_error("cover_at: negative scale exponent");
    int d = family.scale_k() - coarser_k;
    std::vector<std::pair<std::int64_t, std::int64_t>> out;
    out.reserve(family.size());
    for (const auto& [ix, iy] : family.cells()) {
        out.emplace_back(floor_shift(ix, d), floor_shift(iy, d));
    }
    return SquareFamily(coarser_k, std::move(out));
}

IntervalFamily cover_at(const IntervalFamily& family, int coarser_k) {
    if (coarser_k > family.scale_k()) {
        throw input_error("cover_at: requested scale is finer than the family");
    }
    if (coarser_k < 0) throw input_error("cover_at: negative scale exponent");
    int d = family.scale_k() - coarser_k;
    std::vector<std::int64_t> out;
    out.reserve(family.size());
    for (std::int64_t i : family.cells()) out.push_back(floor_shift(i, d));
    return IntervalFamily(coarser_k, std::move(out));
}

SquareFamily renormalize(const SquareFamily& family, const DyadicSquare& Q) {
    if (family.scale_k() < Q.k) {
        throw input_error("renormalize: family is coarser than the reference square");
    }
    int d = family.scale_k() - Q.k;
    std::int64_t bx = Q.ix << d;
    std::int64_t by = Q.iy << d;
    std::vector<std::pair<std::int64_t, std::int64_t>> out;
    for (const auto& [ix, iy] : family.cells()) {
        if (floor_shift(ix, d) == Q.ix && floor_shift(iy, d) == Q.iy) {
            out.emplace_back(ix - bx, iy - by);
        }
    }
    return SquareFamily(d, std::move(out));
}

GridLength midpoint_distance(const DyadicSquare& p, const DyadicSquare& q) {
    if (p.k != q.k) throw input_error("midpoint_distance: scale mismatch");
    std::int64_t dx = p.ix - q.ix;
    std::int64_t dy = p.iy - q.iy;
    return {dx * dx + dy * dy, p.k};
}

namespace {

constexpr std::int64_t kMortonOffset = std::int64_t{1} << 30;

std::uint64_t spread_bits(std::uint64_t v) {
    v &= 0x00000000ffffffffULL;
    v = (v | (v << 16)) & 0x0000ffff0000ffffULL;
    v = (v | (v << 8)) & 0x00ff00ff00ff00ffULL;
    v = (v | (v << 4)) & 0x0f0f0f0f0f0f0f0fULL;
    v = (v | (v << 2)) & 0x3333333333333333ULL;
    v = (v | (v << 1)) & 0x5555555555555555ULL;
    return v;
}

std::uint64_t compact_bits(std::uint64_t v) {
    v &= 0x5555555555555555ULL;
    v = (v | (v >> 1)) & 0x3333333333333333ULL;
    v = (v | (v >> 2)) & 0x0f0f0f0f0f0f0f0fULL;
    v = (v | (v >> 4)) & 0x00ff00ff00ff00ffULL;
    v = (v | (v >> 8)) & 0x0000ffff0000ffffULL;
    v = (v | (v >> 16)) & 0x00000000ffffffffULL;
    return v;
}

}  // namespace

std::uint64_t morton_code(std::int64_t ix, std::int64_t iy) {
    std::uint64_t ux = static_cast<std::uint64_t>(ix + kMortonOffset);
    std::uint64_t uy = static_cast<std::uint64_t>(iy + kMortonOffset);
    return (spread_bits(ux) << 1) | spread_bits(uy);
}

std::pair<std::int64_t, std::int64_t> morton_decode(std::uint64_t code) {
    std::int64_t ix = static_cast<std::int64_t>(compact_bits(code >> 1)) - kMortonOffset;
    std::int64_t iy = static_cast<std::int64_t>(compact_bits(code)) - kMortonOffset;
    return {ix, iy};
}

void write_family(std::ostream& os, const SquareFamily& f) {
    nlohmann::ordered_json header;
    header["scale_exponent"] = f.scale_k();
    header["count"] = f.size();
    os << header.dump() << '\n';
    for (const auto& [ix, iy] : f.cells()) {
        os << f.scale_k() << ' ' << ix << ' ' << iy << '\n';
    }
}

SquareFamily read_family(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw input_error("family: missing header");
    nlohmann::json header = nlohmann::json::parse(line);
    int k = header.at("scale_exponent").get<int>();
    std::size_t count = header.at("count").get<std::size_t>();
    std::vector<std::pair<std::int64_t, std::int64_t>> cells;
    cells.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        if (!std::getline(is, line)) throw input_error("family: truncated body");
        std::istringstream row(line);
        int rk;
        std::int64_t ix, iy;
        if (!(row >> rk >> ix >> iy)) throw input_error("family: malformed row");
        if (rk != k) throw input_error("family: row scale differs from header");
        cells.emplace_back(ix, iy);
    }
    return SquareFamily(k, std::move(cells));
}

std::string to_text(const SquareFamily& f) {
    std::ostringstream os;
    write_family(os, f);
    return os.str();
}

SquareFamily family_from_text(const std::string& text) {
    std::istringstream is(text);
    return read_family(is);
}

}  // namespace incgeo
