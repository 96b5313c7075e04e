#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <boost/multiprecision/gmp.hpp>
#include <boost/multiprecision/mpfr.hpp>

namespace revlab {

namespace mp = boost::multiprecision;
using BigInt = mp::number<mp::gmp_int, mp::et_off>;
using Rational = mp::number<mp::gmp_rational, mp::et_off>;
using BigFloat = mp::number<mp::mpfr_float_backend<0>, mp::et_off>;
using u128 = unsigned __int128;

enum class ErrorKind {
  PrecisionExhausted,
  RationalInput,
  MemoryBudget,
  DegenerateOverlap,
  DimensionMismatch,
  WeightSum,
  Divisibility,
  Unsatisfiable,
  InconsistentRelation,
  DepthInsufficient,
  GoldenMissing,
  Config,
  Precondition,
};

inline const char* error_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::PrecisionExhausted: return "PrecisionExhausted";
    case ErrorKind::RationalInput: return "RationalInput";
    case ErrorKind::MemoryBudget: return "MemoryBudget";
    case ErrorKind::DegenerateOverlap: return "DegenerateOverlap";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::WeightSum: return "WeightSum";
    case ErrorKind::Divisibility: return "Divisibility";
    case ErrorKind::Unsatisfiable: return "Unsatisfiable";
    case ErrorKind::InconsistentRelation: return "InconsistentRelation";
    case ErrorKind::DepthInsufficient: return "DepthInsufficient";
    case ErrorKind::GoldenMissing: return "GoldenMissing";
    case ErrorKind::Config: return "Config";
    case ErrorKind::Precondition: return "Precondition";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(error_name(kind)) + ": " + what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

inline void require(bool ok, ErrorKind kind, const std::string& what) {
  if (!ok) throw Error(kind, what);
}

// ---------------------------------------------------------------------------
// Precision. mpfr_float in Boost 1.74 keeps one process-wide default precision,
// so scopes must not be interleaved across threads.

inline unsigned bits_to_digits10(unsigned bits) {
  return static_cast<unsigned>(std::ceil(bits * 0.30102999566398120)) + 1;
}

class PrecisionScope {
 public:
  explicit PrecisionScope(unsigned bits) : saved_(BigFloat::default_precision()) {
    BigFloat::default_precision(bits_to_digits10(bits));
  }
  ~PrecisionScope() { BigFloat::default_precision(saved_); }
  PrecisionScope(const PrecisionScope&) = delete;
  PrecisionScope& operator=(const PrecisionScope&) = delete;

 private:
  unsigned saved_;
};

// ---------------------------------------------------------------------------
// Exact conversions.

inline BigInt pow2(unsigned e) {
  BigInt r = 1;
  r <<= e;
  return r;
}

inline Rational to_rational(const BigFloat& v) {
  if (v == 0) return Rational(0);
  BigInt z;
  mpfr_exp_t e = mpfr_get_z_2exp(z.backend().data(), v.backend().data());
  if (e >= 0) return Rational(z << static_cast<unsigned>(e));
  return Rational(z, pow2(static_cast<unsigned>(-e)));
}

inline BigFloat to_bigfloat(const Rational& q) {
  BigFloat n(boost::multiprecision::numerator(q));
  BigFloat d(boost::multiprecision::denominator(q));
  return n / d;
}

inline BigFloat to_bigfloat(const BigInt& z) { return BigFloat(z); }

inline double to_double(const Rational& q) { return q.convert_to<double>(); }
inline double to_double(const BigFloat& v) { return v.convert_to<double>(); }
inline double to_double(const BigInt& v) { return v.convert_to<double>(); }
inline double to_double(double v) { return v; }

inline Rational parse_rational(const std::string& s) {
  auto slash = s.find('/');
  if (slash != std::string::npos) {
    Rational den = parse_rational(s.substr(slash + 1));
    require(den != 0, ErrorKind::Config, "zero denominator: " + s);
    return parse_rational(s.substr(0, slash)) / den;
  }
  std::string t = s;
  bool neg = false;
  if (!t.empty() && (t[0] == '-' || t[0] == '+')) {
    neg = t[0] == '-';
    t = t.substr(1);
  }
  int exp10 = 0;
  auto epos = t.find_first_of("eE");
  if (epos != std::string::npos) {
    exp10 = std::stoi(t.substr(epos + 1));
    t = t.substr(0, epos);
  }
  auto dot = t.find('.');
  std::string digits = t;
  if (dot != std::string::npos) {
    digits = t.substr(0, dot) + t.substr(dot + 1);
    exp10 -= static_cast<int>(t.size() - dot - 1);
  }
  require(!digits.empty() && digits.find_first_not_of("0123456789") == std::string::npos,
          ErrorKind::Config, "not a number: " + s);
  // A leading zero would select octal in the string constructor.
  auto nz = digits.find_first_not_of('0');
  digits = nz == std::string::npos ? "0" : digits.substr(nz);
  BigInt num(digits);
  BigInt ten = 10;
  Rational r(num);
  if (exp10 > 0) r *= Rational(boost::multiprecision::pow(ten, static_cast<unsigned>(exp10)));
  if (exp10 < 0) r /= Rational(boost::multiprecision::pow(ten, static_cast<unsigned>(-exp10)));
  return neg ? Rational(-r) : r;
}

inline std::string to_string(const Rational& q) {
  if (boost::multiprecision::denominator(q) == 1) return boost::multiprecision::numerator(q).str();
  return q.str();
}

// Decimal string with `digits` significant digits.
inline std::string to_decimal(const BigFloat& v, int digits) {
  return v.str(digits, std::ios_base::fmtflags(0));
}

inline std::string to_decimal(const Rational& q, int digits = 20) {
  PrecisionScope scope(static_cast<unsigned>(digits * 3.33) + 64);
  return to_decimal(to_bigfloat(q), digits);
}

inline std::string to_decimal(double v) {
  if (v == 0) return "0";
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

// ---------------------------------------------------------------------------
// Integer helpers.

inline BigInt floor_div(const BigInt& a, const BigInt& b) {
  BigInt q = a / b;
  BigInt r = a - q * b;
  if (r != 0 && ((r < 0) != (b < 0))) q -= 1;
  return q;
}

inline BigInt floor_mod(const BigInt& a, const BigInt& b) { return a - floor_div(a, b) * b; }

inline BigInt floor_of(const Rational& x) {
  return floor_div(boost::multiprecision::numerator(x), boost::multiprecision::denominator(x));
}

inline Rational frac_of(const Rational& x) { return x - Rational(floor_of(x)); }

inline BigFloat frac_of(const BigFloat& x) { return x - floor(x); }

// sum_{j=0}^{n-1} floor((a*j + b) / m) for m > 0, n >= 0, any sign of a, b.
inline BigInt floor_sum(BigInt n, BigInt m, BigInt a, BigInt b) {
  BigInt ans = 0;
  if (n <= 0) return ans;
  if (a < 0 || a >= m) {
    BigInt qa = floor_div(a, m);
    ans += (n * (n - 1) / 2) * qa;
    a -= qa * m;
  }
  if (b < 0 || b >= m) {
    BigInt qb = floor_div(b, m);
    ans += n * qb;
    b -= qb * m;
  }
  while (true) {
    if (a >= m) {
      ans += (n * (n - 1) / 2) * (a / m);
      a %= m;
    }
    if (b >= m) {
      ans += n * (b / m);
      b %= m;
    }
    BigInt y_max = a * n + b;
    if (y_max < m) break;
    n = y_max / m;
    b = y_max % m;
    std::swap(m, a);
  }
  return ans;
}

// sum_{j=0}^{n-1} floor(x + j*alpha) for rationals x, alpha.
inline BigInt floor_sum_rational(const BigInt& n, const Rational& x, const Rational& alpha) {
  using boost::multiprecision::denominator;
  using boost::multiprecision::numerator;
  BigInt dx = denominator(x), da = denominator(alpha);
  BigInt m = boost::multiprecision::lcm(dx, da);
  BigInt b = numerator(x) * (m / dx);
  BigInt a = numerator(alpha) * (m / da);
  return floor_sum(n, m, a, b);
}

inline BigInt binomial(unsigned n, unsigned k) {
  if (k > n) return 0;
  BigInt r = 1;
  for (unsigned i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

inline BigInt factorial(unsigned n) {
  BigInt r = 1;
  for (unsigned i = 2; i <= n; ++i) r *= i;
  return r;
}

inline unsigned bit_length(const BigInt& v) {
  if (v == 0) return 0;
  return static_cast<unsigned>(boost::multiprecision::msb(boost::multiprecision::abs(v))) + 1;
}

// ---------------------------------------------------------------------------
// Fixed-point circle: x in [0,1) stored as floor(x * 2^128); rotation is a wrapping add.

inline BigInt u128_to_bigint(u128 v) {
  BigInt hi = static_cast<uint64_t>(v >> 64);
  BigInt lo = static_cast<uint64_t>(v);
  return (hi << 64) | lo;
}

inline u128 bigint_to_u128(const BigInt& v) {
  BigInt m = floor_mod(v, pow2(128));
  BigInt lo = m & BigInt(std::numeric_limits<uint64_t>::max());
  BigInt hi = m >> 64;
  return (static_cast<u128>(hi.convert_to<uint64_t>()) << 64) | lo.convert_to<uint64_t>();
}

inline u128 to_fixed(const Rational& x) {
  Rational f = frac_of(x);
  return bigint_to_u128(floor_of(f * Rational(pow2(128))));
}

inline u128 to_fixed(const BigFloat& x) { return to_fixed(to_rational(x)); }

inline u128 to_fixed(double x) {
  double f = x - std::floor(x);
  return to_fixed(Rational(f));
}

inline Rational fixed_to_rational(u128 v) { return Rational(u128_to_bigint(v), pow2(128)); }

inline double fixed_to_double(u128 v) {
  return static_cast<double>(static_cast<uint64_t>(v >> 64)) * 0x1p-64 +
         static_cast<double>(static_cast<uint64_t>(v)) * 0x1p-128;
}

// Signed offset of a small fixed-point difference, as a double.
inline double fixed_delta_to_double(u128 d) {
  if (d >> 127) return -fixed_to_double(static_cast<u128>(0) - d);
  return fixed_to_double(d);
}

// ---------------------------------------------------------------------------
// Deterministic per-index random streams.

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline double stream_uniform(uint64_t seed, uint64_t index) {
  uint64_t h = splitmix64(seed ^ splitmix64(index + 0x632be59bd9b4e019ULL));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

}  // namespace revlab
