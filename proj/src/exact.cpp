#include "incgeo/exact.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include <mpfr.h>

namespace incgeo {

int sign(const mpq_class& q) { return sgn(q); }

double to_double(const mpq_class& q) { return q.get_d(); }

std::string to_string(const mpq_class& q) { return q.get_str(); }

double log2_approx(std::int64_t n) {
    return std::log2(static_cast<double>(n));
}

mpq_class exponent_proxy(double v) {
    if (!(v >= -4.0 && v <= 4.0)) throw input_error("exponent out of range");
    const double den = static_cast<double>(1L << kExponentDenomBits);
    long num = static_cast<long>(std::llround(v * den));
    mpq_class q(num, 1L << kExponentDenomBits);
    q.canonicalize();
    return q;
}

mpq_class exponent_proxy(const std::string& text) {
    mpq_class raw;
    auto slash = text.find('/');
    auto dot = text.find('.');
    if (slash != std::string::npos) {
        raw = mpq_class(text, 10);
        raw.canonicalize();
    } else if (dot != std::string::npos) {
        bool negative = !text.empty() && text[0] == '-';
        std::string body = negative ? text.substr(1) : text;
        dot = body.find('.');
        std::string digits = body.substr(0, dot) + body.substr(dot + 1);
        if (digits.empty()) throw input_error("exponent_proxy: empty number");
        long frac = static_cast<long>(body.size() - dot - 1);
        mpz_class num(digits, 10);
        if (negative) num = -num;
        mpz_class den;
        mpz_ui_pow_ui(den.get_mpz_t(), 10, frac);
        raw = mpq_class(num, den);
        raw.canonicalize();
    } else {
        raw = mpq_class(mpz_class(text, 10));
    }
    // round to nearest multiple of 2^-16, ties away from zero
    mpz_class scaled_num = raw.get_num() << kExponentDenomBits;
    mpz_class q, r;
    mpz_fdiv_qr(q.get_mpz_t(), r.get_mpz_t(), scaled_num.get_mpz_t(), raw.get_den().get_mpz_t());
    if (2 * r >= raw.get_den()) q += 1;
    mpq_class out(q, 1L << kExponentDenomBits);
    out.canonicalize();
    return out;
}

bool is_exponent_proxy(const mpq_class& q) {
    mpz_class den = q.get_den();
    mpz_class two16 = 1L << kExponentDenomBits;
    return mpz_divisible_p(two16.get_mpz_t(), den.get_mpz_t()) != 0;
}

namespace {

struct MpfrGuard {
    mpfr_t v;
    explicit MpfrGuard(mpfr_prec_t prec) { mpfr_init2(v, prec); }
    ~MpfrGuard() { mpfr_clear(v); }
    MpfrGuard(const MpfrGuard&) = delete;
    MpfrGuard& operator=(const MpfrGuard&) = delete;
};

// Enclosure of 2^e at the given precision: [lo, hi].
void pow2_enclosure(const mpq_class& e, mpfr_prec_t prec, mpfr_t lo, mpfr_t hi) {
    MpfrGuard t(prec);
    mpfr_set_q(t.v, e.get_mpq_t(), MPFR_RNDD);
    mpfr_exp2(lo, t.v, MPFR_RNDD);
    mpfr_set_q(t.v, e.get_mpq_t(), MPFR_RNDU);
    mpfr_exp2(hi, t.v, MPFR_RNDU);
}

}  // namespace

mpz_class floor_pow2(const mpq_class& e) {
    if (e.get_den() == 1) {
        mpz_class z = e.get_num();
        if (z < 0) return 0;
        if (!z.fits_slong_p()) throw input_error("floor_pow2: exponent too large");
        mpz_class out = 1;
        out <<= z.get_si();
        return out;
    }
    for (mpfr_prec_t prec = 96;; prec *= 2) {
        if (prec > (1 << 22)) throw check_error("floor_pow2: enclosure failed to converge");
        MpfrGuard lo(prec), hi(prec);
        pow2_enclosure(e, prec, lo.v, hi.v);
        mpz_class flo, fhi;
        mpfr_get_z(flo.get_mpz_t(), lo.v, MPFR_RNDD);
        mpfr_get_z(fhi.get_mpz_t(), hi.v, MPFR_RNDD);
        if (flo == fhi) return flo;
    }
}

mpz_class ceil_pow2(const mpq_class& e) {
    if (e.get_den() == 1) {
        mpz_class z = e.get_num();
        if (z < 0) return 1;
        if (!z.fits_slong_p()) throw input_error("ceil_pow2: exponent too large");
        mpz_class out = 1;
        out <<= z.get_si();
        return out;
    }
    // 2^e irrational for non-integer rational e, so ceil = floor + 1.
    return floor_pow2(e) + 1;
}

mpq_class quantize_pow2(const mpq_class& e, long frac_bits) {
    mpz_class scaled = floor_pow2(e + frac_bits);
    mpz_class den = 1;
    den <<= frac_bits;
    mpq_class out(scaled, den);
    out.canonicalize();
    return out;
}

mpq_class quantize_log2(const mpz_class& n, long frac_bits) {
    if (n <= 0) throw input_error("quantize_log2: nonpositive input");
    // exact when n is a power of two
    if (mpz_popcount(n.get_mpz_t()) == 1) {
        return mpq_class(static_cast<long>(mpz_sizeinbase(n.get_mpz_t(), 2)) - 1);
    }
    for (mpfr_prec_t prec = 96;; prec *= 2) {
        if (prec > (1 << 22)) throw check_error("quantize_log2: enclosure failed to converge");
        MpfrGuard x(prec), lo(prec), hi(prec);
        mpfr_set_z(x.v, n.get_mpz_t(), MPFR_RNDD);
        mpfr_log2(lo.v, x.v, MPFR_RNDD);
        mpfr_log2(hi.v, x.v, MPFR_RNDU);
        mpfr_mul_2si(lo.v, lo.v, frac_bits, MPFR_RNDD);
        mpfr_mul_2si(hi.v, hi.v, frac_bits, MPFR_RNDU);
        // round to nearest integer; log2 of a non-power-of-two is irrational so
        // the two roundings agree once the enclosure is tight enough
        mpz_class rlo, rhi;
        MpfrGuard tmp(prec);
        mpfr_add_d(tmp.v, lo.v, 0.5, MPFR_RNDD);
        mpfr_get_z(rlo.get_mpz_t(), tmp.v, MPFR_RNDD);
        mpfr_add_d(tmp.v, hi.v, 0.5, MPFR_RNDU);
        mpfr_get_z(rhi.get_mpz_t(), tmp.v, MPFR_RNDD);
        if (rlo == rhi) {
            mpz_class den = 1;
            den <<= frac_bits;
            mpq_class out(rlo, den);
            out.canonicalize();
            return out;
        }
    }
}

// ---------------------------------------------------------------------------
// ScaledRational

ScaledRational::ScaledRational(mpq_class mant, mpq_class exp2)
    : mant_(std::move(mant)), exp2_(std::move(exp2)) {
    // gmp comparisons require canonical form; inputs may arrive unreduced
    mant_.canonicalize();
    exp2_.canonicalize();
    if (mant_ <= 0) throw input_error("ScaledRational: mantissa must be positive");
}

ScaledRational ScaledRational::from_ratio(const mpz_class& num, const mpz_class& den) {
    if (num <= 0 || den <= 0) throw input_error("ScaledRational: nonpositive ratio");
    mpq_class q(num, den);
    q.canonicalize();
    return ScaledRational(q, 0);
}

ScaledRational ScaledRational::operator*(const ScaledRational& o) const {
    return ScaledRational(mant_ * o.mant_, exp2_ + o.exp2_);
}

ScaledRational ScaledRational::operator/(const ScaledRational& o) const {
    return ScaledRational(mant_ / o.mant_, exp2_ - o.exp2_);
}

ScaledRational ScaledRational::scaled(const mpq_class& factor) const {
    return ScaledRational(mant_ * factor, exp2_);
}

double ScaledRational::to_double() const {
    return mant_.get_d() * std::exp2(exp2_.get_d());
}

namespace {

double log2_mpq_approx(const mpq_class& q) {
    long en = 0, ed = 0;
    double dn = mpz_get_d_2exp(&en, q.get_num().get_mpz_t());
    double dd = mpz_get_d_2exp(&ed, q.get_den().get_mpz_t());
    return (std::log2(dn) + static_cast<double>(en)) - (std::log2(dd) + static_cast<double>(ed));
}

}  // namespace

double ScaledRational::log2_double() const {
    return log2_mpq_approx(mant_) + exp2_.get_d();
}

bool ScaledRational::exact_rational() const { return exp2_.get_den() == 1; }

mpq_class ScaledRational::to_rational(long frac_bits) const {
    if (exact_rational()) {
        mpq_class out = mant_;
        mpz_class e = exp2_.get_num();
        if (!e.fits_slong_p()) throw input_error("ScaledRational: exponent too large");
        long se = e.get_si();
        if (se >= 0) {
            out *= mpz_class(mpz_class(1) << se);
        } else {
            out /= mpz_class(mpz_class(1) << -se);
        }
        return out;
    }
    // value = 2^(exp2 + log2(mant)); enclose adaptively and round down to
    // denominator 2^frac_bits
    for (mpfr_prec_t prec = 128;; prec *= 2) {
        if (prec > (1 << 22)) throw check_error("ScaledRational: rounding failed to converge");
        MpfrGuard x(prec), lo(prec), hi(prec), e(prec);
        // exp2 is non-integral here, so the value is irrational and the
        // enclosure eventually excludes every scaled integer boundary
        mpfr_set_q(x.v, mant_.get_mpq_t(), MPFR_RNDD);
        mpfr_log2(lo.v, x.v, MPFR_RNDD);
        mpfr_set_q(e.v, exp2_.get_mpq_t(), MPFR_RNDD);
        mpfr_add(lo.v, lo.v, e.v, MPFR_RNDD);
        mpfr_set_q(x.v, mant_.get_mpq_t(), MPFR_RNDU);
        mpfr_log2(hi.v, x.v, MPFR_RNDU);
        mpfr_set_q(e.v, exp2_.get_mpq_t(), MPFR_RNDU);
        mpfr_add(hi.v, hi.v, e.v, MPFR_RNDU);
        mpfr_exp2(lo.v, lo.v, MPFR_RNDD);
        mpfr_exp2(hi.v, hi.v, MPFR_RNDU);
        mpfr_mul_2si(lo.v, lo.v, frac_bits, MPFR_RNDD);
        mpfr_mul_2si(hi.v, hi.v, frac_bits, MPFR_RNDU);
        mpz_class flo, fhi;
        mpfr_get_z(flo.get_mpz_t(), lo.v, MPFR_RNDD);
        mpfr_get_z(fhi.get_mpz_t(), hi.v, MPFR_RNDD);
        if (flo == fhi) {
            mpz_class den = 1;
            den <<= frac_bits;
            mpq_class out(flo, den);
            out.canonicalize();
            return out;
        }
    }
}

int ScaledRational::compare(const ScaledRational& o) const {
    // fast path: well-separated logs
    double d = log2_double() - o.log2_double();
    if (d > 1e-9) return 1;
    if (d < -1e-9) return -1;
    LogValue diff = LogValue::log2_of(*this) - LogValue::log2_of(o);
    return diff.sign();
}

// ---------------------------------------------------------------------------
// LogValue

void LogValue::add_term(mpz_class base, mpq_class coef) {
    if (base <= 0) throw input_error("LogValue: nonpositive base");
    if (coef == 0 || base == 1) return;
    // pull powers of two into the rational part
    unsigned long tz = mpz_scan1(base.get_mpz_t(), 0);
    if (tz > 0) {
        rat_ += coef * static_cast<long>(tz);
        base >>= tz;
    }
    if (base == 1) return;
    auto it = std::lower_bound(
        terms_.begin(), terms_.end(), base,
        [](const std::pair<mpz_class, mpq_class>& t, const mpz_class& b) { return t.first < b; });
    if (it != terms_.end() && it->first == base) {
        it->second += coef;
        if (it->second == 0) terms_.erase(it);
    } else {
        terms_.insert(it, {std::move(base), std::move(coef)});
    }
}

LogValue LogValue::log2_of(const mpz_class& n, const mpq_class& coef) {
    LogValue v;
    v.add_term(n, coef);
    return v;
}

LogValue LogValue::log2_of(const mpq_class& q, const mpq_class& coef) {
    if (q <= 0) throw input_error("LogValue: nonpositive rational");
    LogValue v;
    v.add_term(q.get_num(), coef);
    v.add_term(q.get_den(), -coef);
    return v;
}

LogValue LogValue::log2_of(const ScaledRational& x, const mpq_class& coef) {
    LogValue v = log2_of(x.mantissa(), coef);
    v.rat_ += coef * x.exponent2();
    return v;
}

LogValue& LogValue::operator+=(const LogValue& o) {
    rat_ += o.rat_;
    for (const auto& [b, c] : o.terms_) add_term(b, c);
    return *this;
}

LogValue& LogValue::operator-=(const LogValue& o) {
    rat_ -= o.rat_;
    for (const auto& [b, c] : o.terms_) add_term(b, -c);
    return *this;
}

LogValue LogValue::operator+(const LogValue& o) const {
    LogValue v = *this;
    v += o;
    return v;
}

LogValue LogValue::operator-(const LogValue& o) const {
    LogValue v = *this;
    v -= o;
    return v;
}

LogValue LogValue::scaled(const mpq_class& c) const {
    LogValue v;
    v.rat_ = rat_ * c;
    if (c != 0) {
        v.terms_ = terms_;
        for (auto& t : v.terms_) t.second *= c;
    }
    return v;
}

// Split shared factors until the bases are pairwise coprime (they are odd and
// > 1 throughout, so afterwards {1} u {log2 base_i} is linearly independent
// over Q and a zero value must have all coefficients zero).
void LogValue::normalize_bases() {
    bool changed = true;
    while (changed) {
        changed = false;
        for (size_t i = 0; i < terms_.size() && !changed; ++i) {
            for (size_t j = i + 1; j < terms_.size() && !changed; ++j) {
                mpz_class g;
                mpz_gcd(g.get_mpz_t(), terms_[i].first.get_mpz_t(), terms_[j].first.get_mpz_t());
                if (g == 1) continue;
                mpz_class ai = terms_[i].first / g;
                mpz_class aj = terms_[j].first / g;
                mpq_class ci = terms_[i].second;
                mpq_class cj = terms_[j].second;
                // log(b_i) = log(g) + log(b_i / g), same for b_j
                std::vector<std::pair<mpz_class, mpq_class>> rebuilt;
                rebuilt.reserve(terms_.size() + 2);
                for (size_t t = 0; t < terms_.size(); ++t) {
                    if (t != i && t != j) rebuilt.push_back(terms_[t]);
                }
                terms_ = std::move(rebuilt);
                add_term(g, ci + cj);
                add_term(ai, ci);
                add_term(aj, cj);
                changed = true;
            }
        }
    }
}

namespace {

int sign_of_enclosure(const mpq_class& rat,
                      const std::vector<std::pair<mpz_class, mpq_class>>& terms,
                      mpfr_prec_t prec) {
    MpfrGuard lo(prec), hi(prec), t(prec), l_lo(prec), l_hi(prec);
    mpfr_set_q(lo.v, rat.get_mpq_t(), MPFR_RNDD);
    mpfr_set_q(hi.v, rat.get_mpq_t(), MPFR_RNDU);
    for (const auto& [base, coef] : terms) {
        mpfr_set_z(t.v, base.get_mpz_t(), MPFR_RNDD);
        mpfr_log2(l_lo.v, t.v, MPFR_RNDD);
        mpfr_set_z(t.v, base.get_mpz_t(), MPFR_RNDU);
        mpfr_log2(l_hi.v, t.v, MPFR_RNDU);
        if (coef > 0) {
            mpfr_mul_q(t.v, l_lo.v, coef.get_mpq_t(), MPFR_RNDD);
            mpfr_add(lo.v, lo.v, t.v, MPFR_RNDD);
            mpfr_mul_q(t.v, l_hi.v, coef.get_mpq_t(), MPFR_RNDU);
            mpfr_add(hi.v, hi.v, t.v, MPFR_RNDU);
        } else {
            mpfr_mul_q(t.v, l_hi.v, coef.get_mpq_t(), MPFR_RNDD);
            mpfr_add(lo.v, lo.v, t.v, MPFR_RNDD);
            mpfr_mul_q(t.v, l_lo.v, coef.get_mpq_t(), MPFR_RNDU);
            mpfr_add(hi.v, hi.v, t.v, MPFR_RNDU);
        }
    }
    if (mpfr_sgn(lo.v) > 0) return 1;
    if (mpfr_sgn(hi.v) < 0) return -1;
    return 0;  // enclosure straddles zero
}

}  // namespace

int LogValue::sign() const {
    if (terms_.empty()) return sgn(rat_);
    for (mpfr_prec_t prec = 128; prec <= 1024; prec *= 2) {
        int sg = sign_of_enclosure(rat_, terms_, prec);
        if (sg != 0) return sg;
    }
    // possibly an exact zero hiding behind multiplicatively dependent bases:
    // refine a copy into coprime form, where zero is a syntactic property
    LogValue refined = *this;
    refined.normalize_bases();
    if (refined.terms_.empty()) return sgn(refined.rat_);
    for (mpfr_prec_t prec = 2048;; prec *= 2) {
        int sg = sign_of_enclosure(refined.rat_, refined.terms_, prec);
        if (sg != 0) return sg;
        if (prec > (1 << 20)) throw check_error("LogValue: sign enclosure failed to converge");
    }
}

double LogValue::to_double() const {
    double v = rat_.get_d();
    for (const auto& [base, coef] : terms_) {
        long e = 0;
        double d = mpz_get_d_2exp(&e, base.get_mpz_t());
        v += coef.get_d() * (std::log2(d) + static_cast<double>(e));
    }
    return v;
}

int compare_count_pow(std::int64_t n1, long l1, std::int64_t n2, long l2, const mpq_class& s) {
    if (n1 <= 0 || n2 <= 0) throw input_error("compare_count_pow: nonpositive count");
    const double sd = s.get_d();
    double d = (log2_approx(n1) + static_cast<double>(l1) * sd) -
               (log2_approx(n2) + static_cast<double>(l2) * sd);
    if (d > 1e-9) return 1;
    if (d < -1e-9) return -1;
    // exact: 2^w * o1/o2 vs 2^((l2-l1)*s) with o1, o2 odd
    std::int64_t o1 = n1, o2 = n2;
    long w = 0;
    while ((o1 & 1) == 0) { o1 >>= 1; ++w; }
    while ((o2 & 1) == 0) { o2 >>= 1; --w; }
    mpq_class e = mpq_class(l2 - l1) * s - w;
    if (o1 == o2) return sign(-e);  // compare w + (l1-l2)s vs 0
    LogValue v = LogValue::log2_of(mpz_class(o1)) - LogValue::log2_of(mpz_class(o2));
    v -= LogValue(e);
    return v.sign();
}

}  // namespace incgeo
