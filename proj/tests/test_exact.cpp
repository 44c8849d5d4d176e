#include <doctest.h>

#include <cmath>

#include "incgeo/exact.hpp"

using namespace incgeo;

TEST_CASE("exponent proxy snaps to denominator 2^16") {
    CHECK(exponent_proxy(0.5) == mpq_class(1, 2));
    CHECK(exponent_proxy("0.75") == mpq_class(3, 4));
    CHECK(exponent_proxy("1/2") == mpq_class(1, 2));
    mpq_class p9 = exponent_proxy("0.9");
    CHECK(p9.get_den() <= (1L << kExponentDenomBits));
    CHECK(to_double(p9) == doctest::Approx(0.9).epsilon(1e-4));
    CHECK(is_exponent_proxy(p9));
}

TEST_CASE("floor and ceil of rational powers of two") {
    CHECK(floor_pow2(mpq_class(3)) == 8);
    CHECK(floor_pow2(mpq_class(-2)) == 0);
    CHECK(ceil_pow2(mpq_class(-2)) == 1);
    CHECK(floor_pow2(mpq_class(7, 2)) == 11);  // 2^3.5 = 11.31
    CHECK(ceil_pow2(mpq_class(7, 2)) == 12);
    CHECK(floor_pow2(mpq_class(1, 2)) == 1);
    CHECK(ceil_pow2(mpq_class(1, 2)) == 2);
    CHECK(quantize_pow2(mpq_class(2), 10) == 4);
}

TEST_CASE("quantize_log2 is exact on powers of two") {
    CHECK(quantize_log2(mpz_class(8), 16) == 3);
    CHECK(quantize_log2(mpz_class(1), 16) == 0);
    mpq_class l3 = quantize_log2(mpz_class(3), 16);
    CHECK(to_double(l3) == doctest::Approx(1.58496).epsilon(1e-4));
    CHECK(l3.get_den() <= (1L << 16));
}

TEST_CASE("scaled rational comparisons are exact") {
    ScaledRational a(mpq_class(3, 4), mpq_class(1, 2));  // 0.75 * 2^0.5
    ScaledRational b(mpq_class(3, 4), mpq_class(1, 2));
    CHECK(a == b);
    ScaledRational c(mpq_class(3, 2), mpq_class(-1, 2));  // same value
    CHECK(a == c);
    ScaledRational d(mpq_class(3, 2), mpq_class(-1, 3));
    CHECK(a < d);
    ScaledRational e(mpq_class(1), mpq_class(0));
    ScaledRational f(mpq_class(2), mpq_class(-1));
    CHECK(e == f);
    ScaledRational g(mpq_class(2), mpq_class(-65535, 65536));
    CHECK(e < g);
}

TEST_CASE("scaled rational rounding to rationals") {
    ScaledRational v(mpq_class(3), mpq_class(2));
    CHECK(v.exact_rational());
    CHECK(v.to_rational() == 12);
    ScaledRational w(mpq_class(1), mpq_class(1, 2));  // sqrt(2)
    CHECK(!w.exact_rational());
    mpq_class r = w.to_rational(32);
    CHECK(to_double(r) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-9));
}

TEST_CASE("log value sign with multiplicatively dependent bases") {
    LogValue v = LogValue::log2_of(mpz_class(9)) - LogValue::log2_of(mpz_class(3), 2);
    CHECK(v.sign() == 0);
    LogValue w = LogValue::log2_of(mpz_class(6)) - LogValue::log2_of(mpz_class(3)) -
                 LogValue(mpq_class(1));
    CHECK(w.sign() == 0);
    LogValue x = LogValue::log2_of(mpz_class(10)) - LogValue::log2_of(mpz_class(5)) -
                 LogValue(mpq_class(1));
    CHECK(x.sign() == 0);
    LogValue y = LogValue::log2_of(mpz_class(2187)) - LogValue(mpq_class(11));
    CHECK(y.sign() > 0);  // log2(2187) = 11.0947
    LogValue z = LogValue::log2_of(mpz_class(2187)) - LogValue(mpq_class(111, 10));
    CHECK(z.sign() < 0);
}

TEST_CASE("count power comparison matches rational arithmetic") {
    mpq_class s(1, 2);
    CHECK(compare_count_pow(3, 5, 4, 4, s) > 0);  // 16.97 vs 16
    CHECK(compare_count_pow(4, 4, 3, 5, s) < 0);
    CHECK(compare_count_pow(2, 4, 8, 0, s) == 0);  // 2 * 2^2 == 8
    CHECK(compare_count_pow(7, 3, 7, 3, s) == 0);
}
