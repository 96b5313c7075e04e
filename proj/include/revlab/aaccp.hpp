#pragma once

#include <array>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "core.hpp"
#include "measures.hpp"
#include "roofs.hpp"
#include "rotations.hpp"

namespace revlab {

// ---------------------------------------------------------------------------
// Jump patterns.

enum class PatternKind { Four, Five, RationalRatio };

struct Pattern {
  PatternKind kind = PatternKind::Four;
  Rational t0 = Rational(3, 10), u0 = Rational(7, 10);  // four
  Rational a = Rational(1, 5), b = Rational(1, 2), c = Rational(9, 10);  // five
  long long ratio_b = 2;  // rational: block length b

  static Pattern four(const Rational& t0, const Rational& u0) {
    Pattern p;
    p.kind = PatternKind::Four;
    p.t0 = t0;
    p.u0 = u0;
    return p;
  }
  static Pattern five(const Rational& a, const Rational& b, const Rational& c) {
    Pattern p;
    p.kind = PatternKind::Five;
    p.a = a;
    p.b = b;
    p.c = c;
    return p;
  }
  static Pattern rational(const Rational& t0, long long b) {
    Pattern p;
    p.kind = PatternKind::RationalRatio;
    p.t0 = t0;
    p.ratio_b = b;
    return p;
  }

  std::string name() const {
    switch (kind) {
      case PatternKind::Four: return "four";
      case PatternKind::Five: return "five";
      case PatternKind::RationalRatio: return "rational";
    }
    return "";
  }
};

// One repeated cycle of the row with the share of blocks it occupies.
struct PatternCycle {
  Rational share;
  std::vector<Rational> values;
};

inline std::vector<PatternCycle> pattern_cycles(const Pattern& p) {
  switch (p.kind) {
    case PatternKind::Four:
      return {{Rational(1), {p.t0, p.u0, Rational(-p.u0), Rational(-p.t0)}}};
    case PatternKind::Five:
      return {{Rational(1, 2), {p.a, p.b, p.c, p.b, p.b}},
              {Rational(1, 2), {Rational(-p.a), Rational(-p.b), Rational(-p.c), Rational(-p.b), Rational(-p.b)}}};
    case PatternKind::RationalRatio: {
      require(p.ratio_b >= 2, ErrorKind::Precondition, "rational pattern needs b >= 2");
      std::vector<Rational> v{p.t0};
      for (long long i = 1; i < p.ratio_b; ++i) v.push_back(-p.t0 / Rational(p.ratio_b - 1));
      return {{Rational(1), v}};
    }
  }
  return {};
}

inline long long pattern_divisor(const Pattern& p) {
  switch (p.kind) {
    case PatternKind::Four: return 4;
    case PatternKind::Five: return 10;
    case PatternKind::RationalRatio: return p.ratio_b;
  }
  return 1;
}

inline std::vector<Rational> pattern_row(const Pattern& p, long long M) {
  long long div = pattern_divisor(p);
  require(M > 0 && M % div == 0, ErrorKind::Divisibility,
          p.name() + " pattern needs M divisible by " + std::to_string(div));
  std::vector<Rational> row;
  for (const auto& cyc : pattern_cycles(p)) {
    long long copies = (M * boost::multiprecision::numerator(cyc.share).convert_to<long long>()) /
                       (boost::multiprecision::denominator(cyc.share).convert_to<long long>() *
                        static_cast<long long>(cyc.values.size()));
    for (long long r = 0; r < copies; ++r) row.insert(row.end(), cyc.values.begin(), cyc.values.end());
  }
  return row;
}

// Limit of the pushforward of (phi^{(k_0 e q)}, ..., phi^{(k_{d-1} e q)}): for a uniformly
// chosen block i inside a cycle, coordinate j is the sum of k_j consecutive entries from i.
inline ExactMeasure expected_limit(const Pattern& p, const std::vector<long long>& multipliers) {
  ExactMeasure m;
  m.d = multipliers.size();
  for (const auto& cyc : pattern_cycles(p)) {
    const std::size_t L = cyc.values.size();
    for (std::size_t i = 0; i < L; ++i) {
      std::vector<Rational> x;
      for (long long k : multipliers) {
        Rational s = 0;
        for (long long r = 0; r < k; ++r) s += cyc.values[(i + static_cast<std::size_t>(r)) % L];
        x.push_back(s);
      }
      m.add(x, cyc.share / Rational(static_cast<long long>(L)));
    }
  }
  return m.merged();
}

// ---------------------------------------------------------------------------
// Parameters.

struct Stage {
  long long M = 4;
  std::vector<Rational> d;
  Rational eps = Rational(3, 10);
  long long N = 1;          // degree placeholder in the realization inequality
  long long e = 0;          // odd block multiplicity, set by realize_alpha
  int n = 0;                // tower index n_k, set by realize_alpha
  std::optional<Rational> eta;  // chosen inside its window when absent

  Rational D() const {
    Rational m = 0;
    for (const auto& x : d) m = std::max(m, Rational(abs(x)));
    return m;
  }
};

struct AACCPParams {
  std::vector<Stage> stages;
  Rational A = 2;
  bool magnification = true;  // a_{2n_k+1} = e_k M_k

  static AACCPParams from_pattern(const Pattern& p, const std::vector<long long>& Ms,
                                  std::optional<Rational> eps = std::nullopt, const Rational& A = 2) {
    AACCPParams params;
    params.A = A;
    for (long long M : Ms) {
      Stage s;
      s.M = M;
      s.d = pattern_row(p, M);
      Rational D = s.D();
      if (eps) {
        s.eps = *eps;
      } else {
        // 0.3 unless the sum or the 1/D^2 bound forces smaller.
        Rational e = Rational(3, 10);
        Rational cap = Rational(9, 10) / Rational(static_cast<long long>(Ms.size()));
        e = std::min(e, cap);
        if (D > 0) e = std::min(e, Rational(1, 2) / (D * D));
        s.eps = e;
      }
      params.stages.push_back(s);
    }
    return params;
  }
};

struct Validation {
  std::vector<std::string> violations;
  std::vector<std::string> diagnostics;
  std::vector<Rational> eta;
  std::vector<double> sqrt_eps_M_partial;
  double mag2_C1 = 0;

  bool ok() const { return violations.empty(); }
};

inline long long smallest_odd_above(const Rational& x) {
  BigInt f = floor_of(x) + 1;
  if (f % 2 == 0) f += 1;
  if (f < 3) f = 3;
  return f.convert_to<long long>();
}

inline Rational eta_window_mid(const Stage& s, const BigInt& a, const BigInt& q) {
  Rational lo = Rational(2) / Rational(a * q);
  Rational hi = s.eps / (Rational(4 * s.M) * Rational(q));
  return (lo + hi) / 2;
}

inline Validation validate(const AACCPParams& params, const Rotation& rot) {
  Validation v;
  Rational eps_sum = 0;
  double partial = 0;
  long long prefix_M = 0;
  int prev_n = 0;
  for (std::size_t idx = 0; idx < params.stages.size(); ++idx) {
    const Stage& s = params.stages[idx];
    const long long k = static_cast<long long>(idx) + 1;
    const std::string tag = "stage " + std::to_string(k) + ": ";
    Rational sum = 0;
    for (const auto& x : s.d) sum += x;
    if (static_cast<long long>(s.d.size()) != s.M) v.violations.push_back(tag + "row length differs from M_k");
    if (sum != 0) v.violations.push_back(tag + "sum of d_ki is not 0");
    Rational D = s.D();
    if (!(s.eps > 0)) v.violations.push_back(tag + "eps_k must be positive");
    if (D > 0 && !(s.eps * D * D < 1)) v.violations.push_back(tag + "eps_k < 1/D_k^2 fails");
    eps_sum += s.eps;
    partial += std::sqrt(to_double(s.eps)) * static_cast<double>(s.M);
    v.sqrt_eps_M_partial.push_back(partial);
    if (idx > 0) v.mag2_C1 = std::max(v.mag2_C1, static_cast<double>(prefix_M) / std::sqrt(double(s.M)));
    prefix_M += s.M;
    if (s.n <= prev_n) v.violations.push_back(tag + "n_k must increase");
    prev_n = s.n;
    if (2 * s.n + 1 > rot.depth()) {
      v.violations.push_back(tag + "rotation depth too small for n_k");
      continue;
    }
    const BigInt& q = rot.q(2 * s.n);
    const BigInt& a = rot.a(2 * s.n + 1);
    if (!(a > 2)) v.violations.push_back(tag + "a_{2n_k+1} > 2 fails");
    Rational lhs = Rational(D * Rational(s.M)) / Rational(a * q);
    for (long long i = 0; i < s.N; ++i) lhs *= params.A;
    if (!(lhs < Rational(1) / Rational(pow2(static_cast<unsigned>(k)))))
      v.violations.push_back(tag + "realization inequality A^N D M/(a q) < 2^-k fails");
    if (params.magnification) {
      if (s.e < 3 || s.e % 2 == 0) v.violations.push_back(tag + "e_k must be odd and >= 3");
      if (a != BigInt(s.e) * s.M) v.violations.push_back(tag + "a_{2n_k+1} = e_k M_k fails");
    }
    Rational eta = s.eta ? *s.eta : eta_window_mid(s, a, q);
    v.eta.push_back(eta);
    if (!(Rational(4 * s.M) * eta < s.eps / Rational(q)))
      v.violations.push_back(tag + "4 M_k eta_k < eps_k / q_{2n_k} fails");
    if (!(Rational(1) / Rational(a * q) < eta / 2))
      v.violations.push_back(tag + "1/(a_{2n_k+1} q_{2n_k}) < eta_k / 2 fails");
    // Block length against its window; in the magnification regime lambda ~ 1/(M q)
    // while eta < eps/(4 M q), so lambda < 2 eta needs eps > 2 and is reported only.
    Rational ell = rot.frac_mult(q);
    Rational lambda = Rational(s.e) * ell;
    if (!(lambda > eta && lambda < 2 * eta)) {
      v.diagnostics.push_back(tag + "lambda_k = " + to_decimal(lambda, 6) + " outside (eta_k, 2 eta_k) = (" +
                              to_decimal(eta, 6) + ", " + to_decimal(Rational(2 * eta), 6) + ")");
    }
  }
  if (!(eps_sum < 1)) v.violations.push_back("sum of eps_k < 1 fails");
  return v;
}

struct Realization {
  PartialQuotients pq;
  Rotation rot;
  std::vector<int> n;
  std::vector<long long> e;
};

// Quotients are 1 except a_{2n_k+1} = e_k M_k with n_k = k; e_k is the smallest odd
// value opening the eta window and meeting the realization inequality.
inline Realization realize_alpha(AACCPParams& params, unsigned bits = 256,
                                 const BigInt& quotient_budget = pow2(32)) {
  require(!params.stages.empty(), ErrorKind::Precondition, "no stages");
  require(params.A > 1, ErrorKind::Precondition, "A must exceed 1");
  PartialQuotients pq;
  ConvergentSeq conv;
  auto push = [&](const BigInt& a) {
    pq.a.push_back(a);
    conv.push(a);
  };
  Realization r;
  for (std::size_t idx = 0; idx < params.stages.size(); ++idx) {
    Stage& s = params.stages[idx];
    const int n = static_cast<int>(idx) + 1;
    while (static_cast<int>(pq.a.size()) < 2 * n) push(BigInt(1));
    const BigInt q = conv.q(2 * n);
    const Rational D = s.D();
    long long e = smallest_odd_above(Rational(8) / s.eps);
    Rational Apow = 1;
    for (long long i = 0; i < s.N; ++i) Apow *= params.A;
    Rational bound = Rational(1) / Rational(pow2(static_cast<unsigned>(idx + 1)));
    while (true) {
      BigInt a = BigInt(e) * s.M;
      require(a <= quotient_budget, ErrorKind::Unsatisfiable,
              "stage " + std::to_string(n) + " needs a partial quotient beyond the budget");
      if (Apow * D * Rational(s.M) / Rational(a * q) < bound) break;
      // jump close to the required size, keeping e odd
      Rational need = Apow * D * Rational(s.M) / (bound * Rational(q) * Rational(s.M));
      long long next = smallest_odd_above(need);
      e = std::max(e + 2, next);
      if (BigInt(e) * s.M > quotient_budget) {
        throw Error(ErrorKind::Unsatisfiable,
                    "stage " + std::to_string(n) + " needs a partial quotient beyond the budget");
      }
    }
    s.e = e;
    s.n = n;
    push(BigInt(e) * s.M);
    r.n.push_back(n);
    r.e.push_back(e);
  }
  push(BigInt(1));
  r.pq = pq;
  r.rot = synthesize(pq, bits);
  return r;
}

// ---------------------------------------------------------------------------
// Towers.

struct TowerPair {
  std::vector<std::pair<Rational, Rational>> A;  // q_{2n+1} levels of length {q_{2n} alpha}
  std::vector<std::pair<Rational, Rational>> B;  // q_{2n} levels of length 1 - {q_{2n+1} alpha}
  Rational total;
  Rational max_overlap;
};

inline TowerPair towers(const Rotation& rot, int n, std::size_t max_levels = 200000) {
  const BigInt& q = rot.q(2 * n);
  const BigInt& h = rot.q(2 * n + 1);
  require(q + h <= BigInt(max_levels), ErrorKind::MemoryBudget, "too many tower levels");
  const Rational& a = rot.exact();
  Rational ell = rot.frac_mult(q);
  Rational ellp = Rational(1) - rot.frac_mult(h);
  TowerPair t;
  Rational x = 0;
  long long H = h.convert_to<long long>(), Q = q.convert_to<long long>();
  for (long long j = 0; j < H + Q; ++j) {
    if (j < H) t.A.push_back({x, x + ell});
    else t.B.push_back({x, x + ellp});
    x += a;
    if (x >= 1) x -= 1;
  }
  std::vector<std::pair<Rational, Rational>> all = t.A;
  all.insert(all.end(), t.B.begin(), t.B.end());
  std::sort(all.begin(), all.end());
  t.total = 0;
  t.max_overlap = 0;
  for (std::size_t i = 0; i < all.size(); ++i) {
    t.total += all[i].second - all[i].first;
    if (i > 0) t.max_overlap = std::max(t.max_overlap, Rational(all[i - 1].second - all[i].first));
  }
  require(all.back().second <= 1, ErrorKind::DegenerateOverlap, "tower level crosses 1");
  return t;
}

// ---------------------------------------------------------------------------
// Step cocycle.

struct StageGeometry {
  int n = 0;
  BigInt q;      // q_{2n_k}
  BigInt h;      // q_{2n_k+1}
  BigInt a;      // a_{2n_k+1}
  long long e = 0;
  long long M = 0;
  Rational ell;   // {q_{2n_k} alpha}, the length of J_t^k
  Rational ellp;  // 1 - {q_{2n_k+1} alpha}
  std::vector<long long> middle;  // s_{k,i}
  std::vector<Rational> d;

  Rational I_length() const { return Rational(a) * ell; }
  // J^k_t = [(t-1) ell, t ell)
  std::pair<Rational, Rational> J(long long t) const {
    return {Rational(t - 1) * ell, Rational(t) * ell};
  }
};

struct StepCocycle {
  StepFunction phi;
  std::vector<StageGeometry> stages;
  Rational scale;  // common denominator of all values
};

inline StageGeometry stage_geometry(const Stage& s, const Rotation& rot) {
  StageGeometry g;
  g.n = s.n;
  g.q = rot.q(2 * s.n);
  g.h = rot.q(2 * s.n + 1);
  g.a = rot.a(2 * s.n + 1);
  g.e = s.e;
  g.M = s.M;
  g.d = s.d;
  g.ell = Rational(g.q) * rot.exact() - Rational(rot.p(2 * s.n));
  g.ellp = Rational(rot.p(2 * s.n + 1)) - Rational(g.h) * rot.exact();
  require(g.ell > 0 && g.ellp > 0, ErrorKind::PrecisionExhausted, "convergent parity check failed");
  require(BigInt(g.e) * g.M <= g.a, ErrorKind::Precondition, "blocks do not fit in I_k");
  for (long long i = 1; i <= g.M; ++i) g.middle.push_back((i - 1) * g.e + (g.e + 1) / 2);
  return g;
}

inline StepCocycle build_cocycle(const AACCPParams& params, const Rotation& rot, std::size_t K) {
  require(K <= params.stages.size(), ErrorKind::Precondition, "K exceeds the stage count");
  if (K > 0) {
    Validation v = validate(params, rot);
    if (!v.ok()) throw Error(ErrorKind::Precondition, "parameters fail validation: " + v.violations.front());
  }
  StepCocycle c;
  std::vector<std::pair<std::pair<Rational, Rational>, Rational>> pieces;
  BigInt den = 1;
  for (std::size_t k = 0; k < K; ++k) {
    StageGeometry g = stage_geometry(params.stages[k], rot);
    for (std::size_t i = 0; i < g.d.size(); ++i) {
      pieces.push_back({g.J(g.middle[i]), g.d[i]});
      den = boost::multiprecision::lcm(den, BigInt(boost::multiprecision::denominator(g.d[i])));
    }
    c.stages.push_back(std::move(g));
  }
  c.scale = Rational(den);
  std::sort(pieces.begin(), pieces.end(), [](const auto& x, const auto& y) { return x.first.first < y.first.first; });
  StepFunction f;
  f.breaks.push_back(Rational(0));
  f.values.push_back(Rational(0));
  for (const auto& [iv, val] : pieces) {
    require(iv.first >= f.breaks.back(), ErrorKind::DegenerateOverlap, "supports overlap");
    if (iv.first == f.breaks.back()) {
      require(f.values.back() == 0, ErrorKind::DegenerateOverlap, "supports overlap");
      f.values.back() = val;
    } else {
      f.breaks.push_back(iv.first);
      f.values.push_back(val);
    }
    f.breaks.push_back(iv.second);
    f.values.push_back(Rational(0));
  }
  if (f.breaks.back() == 1) {
    f.breaks.pop_back();
    f.values.pop_back();
  }
  c.phi = f;
  // supports of different stages are disjoint and lie outside J^k_1 of coarser stages
  for (std::size_t k = 1; k < c.stages.size(); ++k) {
    require(c.stages[k].I_length() <= c.stages[k - 1].ell, ErrorKind::DegenerateOverlap, "I_{k+1} not inside J^k_1");
  }
  return c;
}

struct ZeroSumCheck {
  std::size_t stage = 0;
  long long levels = 0;
  Rational sum;
  bool constant_on_levels = true;
};

// phi is constant on T^i I_k for 1 <= i < q_{2n_k}, and the values sum to 0.
inline ZeroSumCheck zero_sum_check(const StepCocycle& c, const Rotation& rot, std::size_t k) {
  const StageGeometry& g = c.stages.at(k);
  ZeroSumCheck z;
  z.stage = k + 1;
  z.sum = 0;
  const Rational& a = rot.exact();
  Rational len = g.I_length();
  Rational x = 0;
  long long Q = g.q.convert_to<long long>();
  z.levels = Q - 1;
  const auto& br = c.phi.breaks;
  for (long long i = 1; i < Q; ++i) {
    x += a;
    if (x >= 1) x -= 1;
    Rational end = x + len;
    auto it = std::upper_bound(br.begin(), br.end(), x);
    if (it != br.end() && *it < std::min(end, Rational(1))) z.constant_on_levels = false;
    if (end > 1 && !br.empty() && br.front() == 0 && br.size() > 1 && br[1] < end - 1) z.constant_on_levels = false;
    z.sum += c.phi.eval(x);
  }
  return z;
}

// ---------------------------------------------------------------------------
// Exact pushforward of window sums of phi over the finest towers.

namespace detail {

struct TupleKey {
  std::array<long long, 3> v{0, 0, 0};
  bool operator==(const TupleKey& o) const { return v == o.v; }
};

struct TupleHash {
  std::size_t operator()(const TupleKey& k) const {
    uint64_t h = 0x12345678;
    for (long long x : k.v) h = splitmix64(h ^ static_cast<uint64_t>(x));
    return static_cast<std::size_t>(h);
  }
};

using TupleCounts = std::unordered_map<TupleKey, std::array<long long, 3>, TupleHash>;

// Support entries are packed as (position << 16) | value id.
inline long long packed_pos(uint64_t x) { return static_cast<long long>(x >> 16); }

// For starts iota in [lo, hi), accumulate run lengths of the window sums
// W_m(iota) = sum of values at positions in [iota, iota + m).
inline void sweep_windows(const std::vector<uint64_t>& S, const std::vector<long long>& table, long long lo,
                          long long hi, const std::vector<long long>& ms, int cls, TupleCounts& acc) {
  if (lo >= hi) return;
  const std::size_t d = ms.size();
  const long long INF = std::numeric_limits<long long>::max();
  auto first_at_least = [&](long long p) {
    return static_cast<std::size_t>(
        std::lower_bound(S.begin(), S.end(), static_cast<uint64_t>(p) << 16) - S.begin());
  };
  std::array<std::size_t, 3> enter{}, leave{};
  TupleKey W;
  for (std::size_t w = 0; w < d; ++w) {
    leave[w] = first_at_least(lo);
    enter[w] = first_at_least(lo + ms[w]);
    long long s = 0;
    for (std::size_t i = leave[w]; i < enter[w]; ++i) s += table[S[i] & 0xffff];
    W.v[w] = s;
  }
  long long cur = lo;
  auto it = acc.end();
  TupleKey last;
  bool have_last = false;
  while (cur < hi) {
    long long next = hi;
    for (std::size_t w = 0; w < d; ++w) {
      if (enter[w] < S.size()) next = std::min(next, packed_pos(S[enter[w]]) - ms[w] + 1);
      if (leave[w] < S.size()) next = std::min(next, packed_pos(S[leave[w]]) + 1);
    }
    if (next > cur) {
      if (!have_last || !(last == W)) {
        it = acc.try_emplace(W, std::array<long long, 3>{0, 0, 0}).first;
        last = W;
        have_last = true;
      }
      it->second[cls] += next - cur;
      cur = next;
    }
    if (cur >= hi) break;
    for (std::size_t w = 0; w < d; ++w) {
      while (enter[w] < S.size() && packed_pos(S[enter[w]]) - ms[w] + 1 == cur) {
        W.v[w] += table[S[enter[w]] & 0xffff];
        ++enter[w];
      }
      while (leave[w] < S.size() && packed_pos(S[leave[w]]) + 1 == cur) {
        W.v[w] -= table[S[leave[w]] & 0xffff];
        ++leave[w];
      }
    }
    (void)INF;
  }
}

// Visit times tau in [0, limit) of the orbit of 0 to [0, ell) for stage geometry g.
inline std::vector<long long> visit_times(const StageGeometry& g, long long limit) {
  std::vector<long long> out;
  const u128 L = to_fixed(g.ell), Lp = to_fixed(g.ellp);
  const long long hA = g.h.convert_to<long long>(), q = g.q.convert_to<long long>();
  const u128 margin = static_cast<u128>(1) << 40;  // 2^-88 of the circle
  u128 s = 0;
  long long tau = 0;
  while (tau < limit) {
    out.push_back(tau);
    u128 diff = s >= Lp ? s - Lp : Lp - s;
    require(diff > margin || s == 0, ErrorKind::DegenerateOverlap, "orbit point too close to a tower boundary");
    if (s >= Lp) {
      s -= Lp;
      tau += hA;
    } else {
      s = s + L - Lp;
      tau += hA + q;
    }
  }
  return out;
}

}  // namespace detail

struct WindowPushforward {
  ExactMeasure measure;
  std::vector<long long> windows;
  std::size_t supports = 0;
  std::size_t distinct = 0;
};

// Exact law of (phi^{(w_0)}, ..., phi^{(w_{d-1})}) for phi built from the selected stages,
// computed on the towers of the finest built stage.
inline WindowPushforward window_pushforward(const StepCocycle& c, const std::vector<long long>& windows,
                                            std::vector<bool> stage_mask = {},
                                            std::size_t max_supports = 200'000'000) {
  require(!c.stages.empty(), ErrorKind::Precondition, "empty cocycle");
  require(!windows.empty() && windows.size() <= 3, ErrorKind::Precondition, "1..3 windows supported");
  if (stage_mask.empty()) stage_mask.assign(c.stages.size(), true);
  const StageGeometry& F = c.stages.back();
  const long long hA = F.h.convert_to<long long>();
  const long long N = hA + F.q.convert_to<long long>();
  require(N < (1LL << 46), ErrorKind::MemoryBudget, "tower too tall for packed positions");
  long long m_max = *std::max_element(windows.begin(), windows.end());
  require(m_max >= 1 && m_max < hA, ErrorKind::Precondition, "windows must be shorter than the finest tower");

  std::vector<long long> table;
  std::map<Rational, uint64_t> ids;
  auto id_of = [&](const Rational& v) {
    auto [it, fresh] = ids.emplace(v, table.size());
    if (fresh) {
      Rational units = v * c.scale;
      require(boost::multiprecision::denominator(units) == 1, ErrorKind::Precondition, "value off the unit grid");
      table.push_back(boost::multiprecision::numerator(units).convert_to<long long>());
    }
    require(table.size() < 65536, ErrorKind::MemoryBudget, "too many distinct values");
    return it->second;
  };

  std::vector<uint64_t> S;
  std::size_t est = 0;
  for (std::size_t k = 0; k < c.stages.size(); ++k)
    if (stage_mask[k])
      est += static_cast<std::size_t>(c.stages[k].M) *
             static_cast<std::size_t>(N / c.stages[k].h.convert_to<long long>() + 1);
  require(est <= max_supports, ErrorKind::MemoryBudget, "support list exceeds budget");
  S.reserve(est + est / 16);
  for (std::size_t k = 0; k < c.stages.size(); ++k) {
    if (!stage_mask[k]) continue;
    const StageGeometry& g = c.stages[k];
    long long qk = g.q.convert_to<long long>();
    std::vector<long long> tau = detail::visit_times(g, N);
    for (std::size_t i = 0; i < g.d.size(); ++i) {
      if (g.d[i] == 0) continue;
      uint64_t vid = id_of(g.d[i]);
      long long L = (g.middle[i] - 1) * qk;
      for (long long t : tau) {
        long long z = L + t;
        if (z >= N) break;
        S.push_back((static_cast<uint64_t>(z) << 16) | vid);
      }
    }
  }
  std::sort(S.begin(), S.end());
  for (std::size_t i = 1; i < S.size(); ++i)
    require(detail::packed_pos(S[i]) != detail::packed_pos(S[i - 1]), ErrorKind::DegenerateOverlap,
            "two stages charge the same level");

  WindowPushforward out;
  out.windows = windows;
  out.supports = S.size();
  detail::TupleCounts acc;
  const long long split = hA - m_max + 1;

  // Seq2: A levels only, the top continuing into the A base.
  std::vector<uint64_t> S2;
  for (uint64_t x : S) {
    long long z = detail::packed_pos(x);
    if (z > hA - m_max && z < hA) S2.push_back(x);
  }
  for (uint64_t x : S) {
    long long z = detail::packed_pos(x);
    if (z >= m_max) break;
    S2.push_back((static_cast<uint64_t>(z + hA) << 16) | (x & 0xffff));
  }
  // Seq1: natural order, the B top continuing into the A base.
  std::size_t base = S.size();
  for (std::size_t i = 0; i < base; ++i) {
    long long z = detail::packed_pos(S[i]);
    if (z >= m_max) break;
    S.push_back((static_cast<uint64_t>(z + N) << 16) | (S[i] & 0xffff));
  }
  detail::sweep_windows(S, table, 0, split, windows, 0, acc);
  detail::sweep_windows(S, table, split, N, windows, 1, acc);
  detail::sweep_windows(S2, table, split, hA, windows, 2, acc);
  S.clear();
  S.shrink_to_fit();

  const Rational w0 = F.ell, w1 = F.ellp, w2 = F.ell - F.ellp;
  ExactMeasure m;
  m.d = windows.size();
  Rational total = 0;
  for (const auto& [key, cnt] : acc) {
    std::vector<Rational> x;
    for (std::size_t w = 0; w < windows.size(); ++w) x.push_back(Rational(key.v[w]) / c.scale);
    Rational wt = Rational(cnt[0]) * w0 + Rational(cnt[1]) * w1 + Rational(cnt[2]) * w2;
    if (wt == 0) continue;
    total += wt;
    m.add(x, wt);
  }
  require(total == 1, ErrorKind::WeightSum, "window pushforward mass is not 1");
  out.measure = m.merged();
  out.distinct = out.measure.size();
  return out;
}

struct LimitCheck {
  std::size_t stage = 0;
  long long m = 0;  // e_k q_{2n_k}
  WindowPushforward push;
  ExactMeasure expected;
  Distance distance;
  double l2 = 0;          // ||phi^{(m)}||_2
  double sup = 0;         // max |phi^{(m)}|
  Rational frac_m_alpha;  // {m alpha}
};

inline LimitCheck verify_limits(const StepCocycle& c, const Rotation& rot, const Pattern& p, std::size_t k,
                                const std::vector<long long>& multipliers, std::vector<bool> stage_mask = {}) {
  require(k >= 1 && k <= c.stages.size(), ErrorKind::Precondition, "stage out of range");
  const StageGeometry& g = c.stages[k - 1];
  LimitCheck out;
  out.stage = k;
  out.m = g.e * g.q.convert_to<long long>();
  std::vector<long long> ws;
  for (long long mult : multipliers) ws.push_back(mult * out.m);
  out.push = window_pushforward(c, ws, stage_mask);
  out.expected = expected_limit(p, multipliers);
  out.distance = distance_full(out.push.measure, out.expected);
  Rational l2sq = 0;
  const ExactMeasure& P = out.push.measure;
  std::size_t last = P.d - 1;
  for (std::size_t i = 0; i < P.size(); ++i) {
    l2sq += P.weights[i] * P.point(i)[last] * P.point(i)[last];
    out.sup = std::max(out.sup, std::abs(to_double(P.point(i)[last])));
  }
  out.l2 = std::sqrt(to_double(l2sq));
  out.frac_m_alpha = rot.frac_mult(BigInt(out.m));
  return out;
}

}  // namespace revlab
