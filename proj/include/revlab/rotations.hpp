#pragma once

#include <optional>
#include <string>
#include <vector>

#include "core.hpp"

namespace revlab {

struct PartialQuotients {
  std::vector<BigInt> a;  // a_1, a_2, ...

  std::size_t size() const { return a.size(); }
  bool operator==(const PartialQuotients&) const = default;

  static PartialQuotients from(std::initializer_list<long long> xs) {
    PartialQuotients pq;
    for (long long x : xs) pq.a.emplace_back(x);
    return pq;
  }
};

struct Convergent {
  BigInt p, q;
  bool operator==(const Convergent&) const = default;
};

// Convergents indexed from -1: (p_{-1}, q_{-1}) = (1, 0), (p_0, q_0) = (0, 1).
class ConvergentSeq {
 public:
  ConvergentSeq() : p_{1, 0}, q_{0, 1} {}

  explicit ConvergentSeq(const PartialQuotients& pq) : ConvergentSeq() {
    for (const auto& a : pq.a) push(a);
  }

  void push(const BigInt& a) {
    std::size_t k = p_.size();
    p_.push_back(a * p_[k - 1] + p_[k - 2]);
    q_.push_back(a * q_[k - 1] + q_[k - 2]);
  }

  int depth() const { return static_cast<int>(p_.size()) - 2; }
  const BigInt& p(int n) const { return p_.at(static_cast<std::size_t>(n + 1)); }
  const BigInt& q(int n) const { return q_.at(static_cast<std::size_t>(n + 1)); }

  // (p_n, q_n) for n = 1..depth.
  std::vector<Convergent> entries() const {
    std::vector<Convergent> out;
    for (int n = 1; n <= depth(); ++n) out.push_back({p(n), q(n)});
    return out;
  }

 private:
  std::vector<BigInt> p_, q_;
};

inline ConvergentSeq convergents(const PartialQuotients& pq) { return ConvergentSeq(pq); }

namespace detail {

// Continued fraction of a rational in (0,1): quotients of [0; a_1, a_2, ...].
inline std::vector<BigInt> rational_cf(const Rational& x, std::size_t max_terms) {
  std::vector<BigInt> out;
  BigInt num = boost::multiprecision::numerator(x);
  BigInt den = boost::multiprecision::denominator(x);
  if (num <= 0 || num >= den) return out;
  while (num != 0 && out.size() < max_terms) {
    BigInt a = den / num;
    BigInt r = den % num;
    out.push_back(a);
    den = num;
    num = r;
  }
  return out;
}

inline unsigned precision_bits_of(const BigFloat& v) {
  return static_cast<unsigned>(mpfr_get_prec(v.backend().data()));
}

}  // namespace detail

struct Expansion {
  std::vector<BigInt> certified;  // quotients valid for every real within the input uncertainty
  std::size_t exact_length = 0;   // length of the dyadic value's own expansion
  bool terminates = false;
  BigInt last_q;                  // q_L of the dyadic expansion
};

inline Expansion certified_expansion(const BigFloat& value, std::size_t max_terms = 100000) {
  unsigned bits = detail::precision_bits_of(value);
  Rational v = to_rational(value);
  require(v > 0 && v < 1, ErrorKind::Precondition, "value must lie in (0,1)");
  Rational delta(BigInt(1), pow2(bits - 1));
  Rational lo = v - delta, hi = v + delta;
  if (lo <= 0) lo = Rational(1, pow2(bits + 8));
  if (hi >= 1) hi = 1 - Rational(1, pow2(bits + 8));
  Expansion ex;
  auto exact = detail::rational_cf(v, max_terms + 1);
  auto a_lo = detail::rational_cf(lo, max_terms + 1);
  auto a_hi = detail::rational_cf(hi, max_terms + 1);
  ex.exact_length = exact.size();
  ex.terminates = exact.size() <= max_terms;
  ConvergentSeq cs;
  for (const auto& a : exact) cs.push(a);
  ex.last_q = cs.q(cs.depth());
  std::size_t n = std::min({exact.size(), a_lo.size(), a_hi.size(), max_terms});
  // The last quotient of a finite expansion is never certified: neighbours split it.
  for (std::size_t i = 0; i < n; ++i) {
    if (exact[i] != a_lo[i] || exact[i] != a_hi[i]) break;
    if (i + 1 == a_lo.size() || i + 1 == a_hi.size() || i + 1 == exact.size()) break;
    ex.certified.push_back(exact[i]);
  }
  return ex;
}

inline PartialQuotients cf_expand(const BigFloat& value, std::size_t n_terms) {
  unsigned bits = detail::precision_bits_of(value);
  Expansion ex = certified_expansion(value, n_terms + 2);
  if (ex.exact_length < n_terms) {
    BigInt q2 = ex.last_q * ex.last_q;
    if (bits > 64 && q2 < pow2(bits - 64)) {
      throw Error(ErrorKind::RationalInput,
                  "expansion terminates after " + std::to_string(ex.exact_length) + " terms");
    }
  }
  require(ex.certified.size() >= n_terms, ErrorKind::PrecisionExhausted,
          "only " + std::to_string(ex.certified.size()) + " quotients certified at " +
              std::to_string(bits) + " bits");
  PartialQuotients pq;
  pq.a.assign(ex.certified.begin(), ex.certified.begin() + static_cast<long>(n_terms));
  return pq;
}

struct CircleNorm {
  BigFloat frac;
  BigFloat norm;
  bool sign;  // true when {q alpha} = ||q alpha||
};

class Rotation {
 public:
  Rotation() = default;

  // Builds a rotation from a value; quotients are the certified prefix of its expansion.
  static Rotation from_value(const BigFloat& value) {
    Rotation r;
    r.bits_ = detail::precision_bits_of(value);
    PrecisionScope scope(r.bits_);
    r.value_ = value;
    r.exact_ = to_rational(value);
    Expansion ex = certified_expansion(value);
    r.pq_.a = ex.certified;
    r.conv_ = ConvergentSeq(r.pq_);
    r.fixed_ = to_fixed(r.exact_);
    r.approx_ = to_double(r.exact_);
    return r;
  }

  unsigned bits() const { return bits_; }
  const BigFloat& value() const { return value_; }
  const Rational& exact() const { return exact_; }
  double approx() const { return approx_; }
  u128 fixed() const { return fixed_; }
  const PartialQuotients& quotients() const { return pq_; }
  const ConvergentSeq& conv() const { return conv_; }
  int depth() const { return conv_.depth(); }

  const BigInt& q(int n) const {
    require(n <= depth(), ErrorKind::PrecisionExhausted,
            "convergent " + std::to_string(n) + " beyond certified depth " + std::to_string(depth()));
    return conv_.q(n);
  }
  const BigInt& p(int n) const {
    require(n <= depth(), ErrorKind::PrecisionExhausted,
            "convergent " + std::to_string(n) + " beyond certified depth " + std::to_string(depth()));
    return conv_.p(n);
  }
  const BigInt& a(int n) const { return pq_.a.at(static_cast<std::size_t>(n - 1)); }

  // {j alpha} exactly, for the stored dyadic alpha.
  Rational frac_mult(const BigInt& j) const { return frac_of(Rational(j) * exact_); }

  u128 fixed_mult(const BigInt& j) const { return bigint_to_u128(j) * fixed_; }

 private:
  unsigned bits_ = 0;
  BigFloat value_;
  Rational exact_;
  u128 fixed_ = 0;
  double approx_ = 0;
  PartialQuotients pq_;
  ConvergentSeq conv_;
};

inline void check_precision_for(const Rotation& rot, const BigInt& q) {
  unsigned need = 64 + 2 * bit_length(q);
  require(rot.bits() >= need, ErrorKind::PrecisionExhausted,
          "need " + std::to_string(need) + " bits for q = " + q.str());
}

inline CircleNorm circle_norm(const BigInt& q, const Rotation& rot) {
  check_precision_for(rot, q);
  PrecisionScope scope(rot.bits());
  Rational f = rot.frac_mult(q);
  Rational n = f <= Rational(1, 2) ? f : Rational(1 - f);
  return {to_bigfloat(f), to_bigfloat(n), f == n};
}

// Exact ||q alpha|| for the stored dyadic alpha.
inline Rational circle_norm_exact(const BigInt& q, const Rotation& rot) {
  Rational f = rot.frac_mult(q);
  return f <= Rational(1, 2) ? f : Rational(1 - f);
}

// Golden tail: [0; a_1..a_N, 1, 1, ...] = (p_N phi + p_{N-1}) / (q_N phi + q_{N-1}).
inline Rotation synthesize(const PartialQuotients& pq, unsigned bits) {
  for (const auto& a : pq.a) require(a >= 1, ErrorKind::Precondition, "quotients must be positive");
  ConvergentSeq cs(pq);
  int n = cs.depth();
  BigInt qn = cs.q(n);
  require(bit_length(qn * qn) + 64 < bits, ErrorKind::PrecisionExhausted,
          "q_N = " + qn.str() + " exceeds the " + std::to_string(bits) + "-bit budget");
  PrecisionScope scope(bits);
  BigFloat phi = (1 + sqrt(BigFloat(5))) / 2;
  BigFloat value = (BigFloat(cs.p(n)) * phi + BigFloat(cs.p(n - 1))) /
                   (BigFloat(cs.q(n)) * phi + BigFloat(cs.q(n - 1)));
  if (n == 0) value = 1 / phi;
  Rotation rot = Rotation::from_value(value);
  require(rot.depth() >= n, ErrorKind::PrecisionExhausted, "synthesized value does not certify its quotients");
  for (int i = 1; i <= n; ++i) {
    require(rot.a(i) == pq.a[static_cast<std::size_t>(i - 1)], ErrorKind::PrecisionExhausted,
            "round trip mismatch at quotient " + std::to_string(i));
  }
  return rot;
}

inline Rotation golden(unsigned bits = 256) {
  PrecisionScope scope(bits);
  BigFloat v = (sqrt(BigFloat(5)) - 1) / 2;
  return Rotation::from_value(v);
}

enum class ScanKind { QNorm, ProdNext, Power };

struct ScanRow {
  int n;
  BigInt q;
  BigFloat stat;
};

struct ScanRun {
  int first, last;
  double mean;
};

struct ScanResult {
  std::vector<ScanRow> rows;
  std::vector<ScanRun> runs;  // maximal index runs whose values stay within tol of each other
};

inline ScanResult scan_renormalization(const Rotation& rot, ScanKind kind, int n_lo, int n_hi,
                                       int r = 1, double tol = 1e-3) {
  ScanResult out;
  PrecisionScope scope(rot.bits());
  for (int n = n_lo; n <= n_hi; ++n) {
    const BigInt& q = rot.q(n);
    check_precision_for(rot, q);
    Rational nq = circle_norm_exact(q, rot);
    Rational s;
    switch (kind) {
      case ScanKind::QNorm: s = Rational(q) * nq; break;
      case ScanKind::ProdNext: s = Rational(rot.q(n + 1)) * nq; break;
      case ScanKind::Power: s = Rational(boost::multiprecision::pow(q, static_cast<unsigned>(r + 1))) * nq; break;
    }
    out.rows.push_back({n, q, to_bigfloat(s)});
  }
  std::size_t i = 0;
  while (i < out.rows.size()) {
    std::size_t j = i;
    double lo = to_double(out.rows[i].stat), hi = lo, sum = lo;
    while (j + 1 < out.rows.size()) {
      double v = to_double(out.rows[j + 1].stat);
      if (std::max(hi, v) - std::min(lo, v) > tol) break;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      sum += v;
      ++j;
    }
    if (j > i) out.runs.push_back({out.rows[i].n, out.rows[j].n, sum / static_cast<double>(j - i + 1)});
    i = j + 1;
  }
  return out;
}

struct Period {
  std::size_t preperiod, period;
  bool operator==(const Period&) const = default;
};

// Finite-horizon evidence only: the candidate must repeat at least twice after the preperiod.
inline std::optional<Period> detect_period(const PartialQuotients& pq) {
  const auto& a = pq.a;
  std::size_t n = a.size();
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t p = 1; s + 2 * p <= n; ++p) {
      bool ok = true;
      for (std::size_t i = s; i + p < n && ok; ++i) ok = a[i] == a[i + p];
      if (ok) return Period{s, p};
    }
  }
  return std::nullopt;
}

}  // namespace revlab
