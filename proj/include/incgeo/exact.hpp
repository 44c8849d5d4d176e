#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <gmpxx.h>

namespace incgeo {

// Thrown when an input violates an operation's preconditions (CLI exit 3).
struct input_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Thrown when a certified inequality fails at run time (CLI exit 2).
struct check_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

int sign(const mpq_class& q);
double to_double(const mpq_class& q);
std::string to_string(const mpq_class& q);

// User-supplied exponents (s, t, eps, ...) are snapped once to denominator 2^16
// at the API boundary; everything downstream is an exact function of the proxy.
inline constexpr long kExponentDenomBits = 16;

mpq_class exponent_proxy(double v);
mpq_class exponent_proxy(const std::string& text);  // decimal ("0.75") or fraction ("3/4")
bool is_exponent_proxy(const mpq_class& q);

// Exact floor/ceil of 2^e for rational e. 2^e is irrational unless e is an
// integer, so the enclosure refinement below always terminates.
mpz_class floor_pow2(const mpq_class& e);
mpz_class ceil_pow2(const mpq_class& e);

// floor(2^e * 2^frac_bits) / 2^frac_bits: the canonical rounding used whenever
// an irrational power has to become a reportable rational.
mpq_class quantize_pow2(const mpq_class& e, long frac_bits);

// log2(n) rounded to denominator 2^frac_bits (n >= 1). Exact for powers of two.
mpq_class quantize_log2(const mpz_class& n, long frac_bits);

// A positive quantity mant * 2^exp2 with rational mantissa and rational base-2
// exponent. Closed under multiplication and division; ordering is exact.
class ScaledRational {
  public:
    ScaledRational() : mant_(1), exp2_(0) {}
    ScaledRational(mpq_class mant, mpq_class exp2);
    static ScaledRational from_ratio(const mpz_class& num, const mpz_class& den);
    static ScaledRational pow2(const mpq_class& e) { return ScaledRational(1, e); }

    const mpq_class& mantissa() const { return mant_; }
    const mpq_class& exponent2() const { return exp2_; }

    ScaledRational operator*(const ScaledRational& o) const;
    ScaledRational operator/(const ScaledRational& o) const;
    ScaledRational scaled(const mpq_class& factor) const;  // multiply mantissa

    // -1, 0, +1 of (*this - o); exact.
    int compare(const ScaledRational& o) const;
    bool operator<(const ScaledRational& o) const { return compare(o) < 0; }
    bool operator<=(const ScaledRational& o) const { return compare(o) <= 0; }
    bool operator==(const ScaledRational& o) const { return compare(o) == 0; }

    double to_double() const;
    double log2_double() const;
    // Exact rational value when exp2 is an integer; otherwise the documented
    // 2^-frac_bits rounding of the true value.
    mpq_class to_rational(long frac_bits = 64) const;
    bool exact_rational() const;

  private:
    mpq_class mant_;  // > 0
    mpq_class exp2_;
};

// rat + sum_i coef_i * log2(base_i) with integer bases >= 2. Used for exact
// comparisons of products of powers (incidence bounds, budget inequalities).
// Sign determination is exact: powers of two fold into the rational part, a
// gcd-free refinement makes the remaining odd bases multiplicatively
// independent, and an adaptive-precision enclosure separates nonzero values.
class LogValue {
  public:
    LogValue() : rat_(0) {}
    explicit LogValue(mpq_class rat) : rat_(std::move(rat)) {}

    static LogValue log2_of(const mpz_class& n, const mpq_class& coef = 1);
    static LogValue log2_of(const mpq_class& q, const mpq_class& coef = 1);
    static LogValue log2_of(const ScaledRational& v, const mpq_class& coef = 1);

    LogValue& operator+=(const LogValue& o);
    LogValue& operator-=(const LogValue& o);
    LogValue operator+(const LogValue& o) const;
    LogValue operator-(const LogValue& o) const;
    LogValue scaled(const mpq_class& c) const;

    int sign() const;
    int compare(const LogValue& o) const { return (*this - o).sign(); }
    bool operator<=(const LogValue& o) const { return compare(o) <= 0; }

    double to_double() const;

  private:
    void add_term(mpz_class base, mpq_class coef);
    void normalize_bases();  // gcd-free refinement into pairwise-coprime bases

    mpq_class rat_;
    std::vector<std::pair<mpz_class, mpq_class>> terms_;  // sorted by base

    friend class ScaledRational;
};

// Exact sign of log2(n1/n2) + (l1 - l2) * s for positive 64-bit counts and
// integer levels: the hot comparison of the certificate scans. Fast double
// path with a conservative margin, exact fallback.
int compare_count_pow(std::int64_t n1, long l1, std::int64_t n2, long l2, const mpq_class& s);

// Fast approximate log2 of a positive integer (error < 1e-13 for n < 2^62).
double log2_approx(std::int64_t n);

}  // namespace incgeo
