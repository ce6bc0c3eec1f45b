#pragma once

#include <gmpxx.h>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace heatsym {

using Rat = mpq_class;

inline Rat rat(long num, long den = 1) {
    Rat r(num, den);
    r.canonicalize();
    return r;
}

inline Rat rat_from_string(const std::string& s) {
    Rat r;
    if (r.set_str(s, 10) != 0) throw std::invalid_argument("bad rational: " + s);
    r.canonicalize();
    return r;
}

inline std::string to_string(const Rat& r) { return r.get_str(); }

inline Rat factorial(unsigned n) {
    Rat r = 1;
    for (unsigned k = 2; k <= n; ++k) r *= (long)k;
    return r;
}

// Binomial with the negative-argument convention: C(m,k)=0 if m<0, k<0 or m<k.
inline long binom(long m, long k) {
    if (m < 0 || k < 0 || m < k) return 0;
    long r = 1;
    for (long i = 0; i < k; ++i) r = r * (m - i) / (i + 1);
    return r;
}

// Exact complex rational a + b*i.  The numeric oracle needs these because
// derivative prefixes carry (-i) factors.
struct GaussRat {
    Rat re, im;
    GaussRat() : re(0), im(0) {}
    GaussRat(Rat r) : re(std::move(r)), im(0) {}
    GaussRat(Rat r, Rat i) : re(std::move(r)), im(std::move(i)) {}

    bool is_zero() const { return re == 0 && im == 0; }
    bool operator==(const GaussRat& o) const { return re == o.re && im == o.im; }
    bool operator!=(const GaussRat& o) const { return !(*this == o); }

    GaussRat& operator+=(const GaussRat& o) { re += o.re; im += o.im; return *this; }
    GaussRat& operator-=(const GaussRat& o) { re -= o.re; im -= o.im; return *this; }
    friend GaussRat operator+(GaussRat a, const GaussRat& b) { a += b; return a; }
    friend GaussRat operator-(GaussRat a, const GaussRat& b) { a -= b; return a; }
    friend GaussRat operator*(const GaussRat& a, const GaussRat& b) {
        return GaussRat(a.re * b.re - a.im * b.im, a.re * b.im + a.im * b.re);
    }
    GaussRat& operator*=(const GaussRat& o) { *this = *this * o; return *this; }
};

// (-i)^k
inline GaussRat minus_i_pow(unsigned k) {
    switch (k % 4) {
        case 0: return GaussRat(Rat(1), Rat(0));
        case 1: return GaussRat(Rat(0), Rat(-1));
        case 2: return GaussRat(Rat(-1), Rat(0));
        default: return GaussRat(Rat(0), Rat(1));
    }
}

inline std::string to_string(const GaussRat& g) {
    if (g.im == 0) return g.re.get_str();
    if (g.re == 0) return g.im.get_str() + "*i";
    return g.re.get_str() + (g.im > 0 ? "+" : "") + g.im.get_str() + "*i";
}

}  // namespace heatsym
