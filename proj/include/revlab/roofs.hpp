#pragma once

#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <variant>
#include <vector>

#include "core.hpp"
#include "poly.hpp"
#include "rotations.hpp"

namespace revlab {

// ---------------------------------------------------------------------------
// Roof families.

struct Jump {
  Rational beta;
  Rational d;
};

// f(x) = sum_i d_i {x - beta_i} + constant, right-continuous.
struct PLRoof {
  std::vector<Jump> jumps;
  Rational constant;

  // {x} + c: one unit jump at 0.
  static PLRoof affine(const Rational& c) { return PLRoof{{{Rational(0), Rational(1)}}, c}; }
};

// Piecewise polynomial of odd degree r with pieces on [0, beta) and [beta, 1), global coordinates.
struct PolyRoof {
  int r = 1;
  Rational beta;
  Rational positivity;  // constant added to the zero-mean part
  Poly<Rational> left, right;
};

// Value i on [breaks[i], breaks[i+1]); the last arc wraps through 0.
struct StepFunction {
  std::vector<Rational> breaks;
  std::vector<Rational> values;

  static StepFunction constant(const Rational& c) { return StepFunction{{Rational(0)}, {c}}; }

  // 1 on [a, b), 0 elsewhere, for 0 <= a < b <= 1.
  static StepFunction indicator(const Rational& a, const Rational& b) {
    StepFunction s;
    if (a == 0 && b == 1) return constant(1);
    if (a == 0) return StepFunction{{Rational(0), b}, {Rational(1), Rational(0)}};
    if (b == 1) return StepFunction{{Rational(0), a}, {Rational(0), Rational(1)}};
    return StepFunction{{Rational(0), a, b}, {Rational(0), Rational(1), Rational(0)}};
  }

  std::size_t arc_of(const Rational& x) const {
    Rational y = frac_of(x);
    auto it = std::upper_bound(breaks.begin(), breaks.end(), y);
    if (it == breaks.begin()) return breaks.size() - 1;
    return static_cast<std::size_t>(it - breaks.begin()) - 1;
  }

  const Rational& eval(const Rational& x) const { return values[arc_of(x)]; }
};

struct CallableRoof {
  std::string name;
  std::function<double(double)> f;
  double mean = 0;
};

using RoofFunction = std::variant<PLRoof, PolyRoof, StepFunction, CallableRoof>;

inline void validate_step(const StepFunction& s) {
  require(!s.breaks.empty() && s.breaks.size() == s.values.size(), ErrorKind::Precondition,
          "step function needs one value per breakpoint");
  for (std::size_t i = 0; i < s.breaks.size(); ++i) {
    require(s.breaks[i] >= 0 && s.breaks[i] < 1, ErrorKind::Precondition, "breakpoints must lie in [0,1)");
    if (i > 0) require(s.breaks[i - 1] < s.breaks[i], ErrorKind::Precondition, "breakpoints must increase");
  }
}

// ---------------------------------------------------------------------------
// Canonical piecewise polynomial on the circle; piece i uses t = x - breaks[i].

struct CirclePoly {
  std::vector<Rational> breaks;
  std::vector<Poly<Rational>> pieces;

  std::size_t degree() const {
    std::size_t d = 0;
    for (const auto& p : pieces) d = std::max(d, p.size() - 1);
    return d;
  }

  Rational length(std::size_t i) const {
    if (i + 1 < breaks.size()) return breaks[i + 1] - breaks[i];
    return Rational(1) + breaks[0] - breaks[i];
  }

  Rational eval(const Rational& x) const {
    Rational y = frac_of(x);
    auto it = std::upper_bound(breaks.begin(), breaks.end(), y);
    std::size_t i;
    if (it == breaks.begin()) {
      i = breaks.size() - 1;
      y += 1;
    } else {
      i = static_cast<std::size_t>(it - breaks.begin()) - 1;
    }
    return poly_eval(pieces[i], Rational(y - breaks[i]));
  }
};

inline Rational jump_sum(const PLRoof& f) {
  Rational s = 0;
  for (const auto& j : f.jumps) s += j.d;
  return s;
}

inline CirclePoly to_circle_poly(const PLRoof& f) {
  CirclePoly cp;
  for (const auto& j : f.jumps) cp.breaks.push_back(frac_of(j.beta));
  std::sort(cp.breaks.begin(), cp.breaks.end());
  cp.breaks.erase(std::unique(cp.breaks.begin(), cp.breaks.end()), cp.breaks.end());
  if (cp.breaks.empty()) cp.breaks.push_back(Rational(0));
  Rational S = jump_sum(f);
  for (const auto& b : cp.breaks) {
    Rational c0 = f.constant;
    for (const auto& j : f.jumps) c0 += j.d * frac_of(b - j.beta);
    cp.pieces.push_back(S == 0 ? Poly<Rational>{c0} : Poly<Rational>{c0, S});
  }
  return cp;
}

inline CirclePoly to_circle_poly(const PolyRoof& f) {
  CirclePoly cp;
  cp.breaks = {Rational(0), f.beta};
  cp.pieces = {f.left, poly_shift(f.right, f.beta)};
  return cp;
}

inline CirclePoly to_circle_poly(const StepFunction& s) {
  validate_step(s);
  CirclePoly cp;
  cp.breaks = s.breaks;
  for (const auto& v : s.values) cp.pieces.push_back({v});
  return cp;
}

inline CirclePoly to_circle_poly(const RoofFunction& f) {
  return std::visit(
      [](const auto& g) -> CirclePoly {
        using G = std::decay_t<decltype(g)>;
        if constexpr (std::is_same_v<G, CallableRoof>) {
          throw Error(ErrorKind::Precondition, "callable roofs have no piecewise form");
        } else {
          return to_circle_poly(g);
        }
      },
      f);
}

inline bool is_piecewise(const RoofFunction& f) { return !std::holds_alternative<CallableRoof>(f); }

inline Rational eval_exact(const PLRoof& f, const Rational& x) {
  Rational v = f.constant;
  for (const auto& j : f.jumps) v += j.d * frac_of(x - j.beta);
  return v;
}

inline Rational eval_exact(const PolyRoof& f, const Rational& x) {
  Rational y = frac_of(x);
  return y < f.beta ? poly_eval(f.left, y) : poly_eval(f.right, y);
}

inline Rational eval_exact(const RoofFunction& f, const Rational& x) {
  return std::visit(
      [&](const auto& g) -> Rational {
        using G = std::decay_t<decltype(g)>;
        if constexpr (std::is_same_v<G, CallableRoof>) {
          throw Error(ErrorKind::Precondition, "callable roofs have no exact evaluation");
        } else if constexpr (std::is_same_v<G, StepFunction>) {
          return g.eval(x);
        } else {
          return eval_exact(g, x);
        }
      },
      f);
}

// Fast evaluator on the fixed-point circle.
class FastRoof {
 public:
  FastRoof() = default;

  explicit FastRoof(const RoofFunction& f) {
    if (const auto* c = std::get_if<CallableRoof>(&f)) {
      callable_ = c->f;
      return;
    }
    CirclePoly cp = to_circle_poly(f);
    for (std::size_t i = 0; i < cp.breaks.size(); ++i) {
      breaks_.push_back(to_fixed(cp.breaks[i]));
      Poly<double> p;
      for (const auto& c : cp.pieces[i]) p.push_back(to_double(c));
      pieces_.push_back(p);
    }
  }

  double operator()(u128 x) const {
    if (callable_) return callable_(fixed_to_double(x));
    auto it = std::upper_bound(breaks_.begin(), breaks_.end(), x);
    std::size_t i = it == breaks_.begin() ? breaks_.size() - 1 : static_cast<std::size_t>(it - breaks_.begin()) - 1;
    double u = fixed_to_double(x - breaks_[i]);
    return poly_eval(pieces_[i], u);
  }

 private:
  std::vector<u128> breaks_;
  std::vector<Poly<double>> pieces_;
  std::function<double(double)> callable_;
};

// ---------------------------------------------------------------------------
// centering

struct Centered {
  RoofFunction roof;
  Rational mean;
  double mean_approx = 0;
};

inline Rational mean_of(const CirclePoly& cp) {
  Rational m = 0;
  for (std::size_t i = 0; i < cp.breaks.size(); ++i) {
    m += poly_integrate_between(cp.pieces[i], Rational(0), cp.length(i));
  }
  return m;
}

inline Centered center(const RoofFunction& f) {
  Centered out;
  if (const auto* pl = std::get_if<PLRoof>(&f)) {
    Rational mean = jump_sum(*pl) / 2 + pl->constant;
    PLRoof g = *pl;
    g.constant -= mean;
    return {g, mean, to_double(mean)};
  }
  if (const auto* pr = std::get_if<PolyRoof>(&f)) {
    Rational mean = mean_of(to_circle_poly(*pr));
    PolyRoof g = *pr;
    g.left[0] -= mean;
    g.right[0] -= mean;
    g.positivity -= mean;
    return {g, mean, to_double(mean)};
  }
  if (const auto* st = std::get_if<StepFunction>(&f)) {
    Rational mean = mean_of(to_circle_poly(*st));
    StepFunction g = *st;
    for (auto& v : g.values) v -= mean;
    return {g, mean, to_double(mean)};
  }
  const auto& c = std::get<CallableRoof>(f);
  CallableRoof g{c.name + "-centered", [h = c.f, m = c.mean](double x) { return h(x) - m; }, 0.0};
  return {g, Rational(c.mean), c.mean};
}

// ---------------------------------------------------------------------------
// Birkhoff sums.

// Exact f^{(k)}(x) for piecewise-linear and step roofs via floor sums.
inline Rational birkhoff_exact(const RoofFunction& f, const Rotation& rot, const BigInt& k, const Rational& x) {
  if (k == 0) return Rational(0);
  const Rational& a = rot.exact();
  if (k < 0) {
    return -birkhoff_exact(f, rot, -k, x + Rational(k) * a);
  }
  if (const auto* pl = std::get_if<PLRoof>(&f)) {
    Rational kk(k);
    Rational total = kk * pl->constant;
    Rational tri = a * kk * (kk - 1) / 2;
    for (const auto& j : pl->jumps) {
      Rational y = x - j.beta;
      BigInt F = floor_sum_rational(k, y, a);
      total += j.d * (kk * y + tri - Rational(F));
    }
    return total;
  }
  if (const auto* st = std::get_if<StepFunction>(&f)) {
    validate_step(*st);
    Rational total = 0;
    std::size_t n = st->breaks.size();
    for (std::size_t i = 0; i < n; ++i) {
      const Rational& b = st->breaks[i];
      Rational e = i + 1 < n ? st->breaks[i + 1] : st->breaks[0] + 1;
      BigInt cnt = floor_sum_rational(k, x - b, a) - floor_sum_rational(k, x - e, a);
      total += st->values[i] * Rational(cnt);
    }
    return total;
  }
  if (const auto* pr = std::get_if<PolyRoof>(&f)) {
    Rational total = 0;
    for (BigInt j = 0; j < k; ++j) total += eval_exact(*pr, x + Rational(j) * a);
    return total;
  }
  throw Error(ErrorKind::Precondition, "callable roofs have no exact Birkhoff sums");
}

inline BigFloat birkhoff(const RoofFunction& f, const Rotation& rot, const BigInt& k, const BigFloat& x) {
  PrecisionScope scope(rot.bits());
  if (k == 0) return BigFloat(0);
  require(bit_length(boost::multiprecision::abs(k)) + 64 < rot.bits(), ErrorKind::PrecisionExhausted,
          "|k| too large for the working precision");
  if (std::holds_alternative<PLRoof>(f) || std::holds_alternative<StepFunction>(f)) {
    return to_bigfloat(birkhoff_exact(f, rot, k, to_rational(x)));
  }
  if (k < 0) {
    BigFloat y = x + BigFloat(k) * rot.value();
    return -birkhoff(f, rot, -k, y);
  }
  if (const auto* pr = std::get_if<PolyRoof>(&f)) {
    CirclePoly cp = to_circle_poly(*pr);
    std::vector<Poly<BigFloat>> pieces;
    for (const auto& p : cp.pieces) {
      Poly<BigFloat> q;
      for (const auto& c : p) q.push_back(to_bigfloat(c));
      pieces.push_back(q);
    }
    BigFloat beta = to_bigfloat(pr->beta);
    BigFloat total = 0, y = frac_of(x);
    const BigFloat& a = rot.value();
    for (BigInt j = 0; j < k; ++j) {
      total += y < beta ? poly_eval(pieces[0], y) : poly_eval(pieces[1], BigFloat(y - beta));
      y += a;
      if (y >= 1) y -= 1;
    }
    return total;
  }
  const auto& c = std::get<CallableRoof>(f);
  double total = 0, y = to_double(frac_of(x));
  double a = rot.approx();
  for (BigInt j = 0; j < k; ++j) {
    total += c.f(y);
    y += a;
    if (y >= 1) y -= 1;
  }
  return BigFloat(total);
}

// ---------------------------------------------------------------------------
// Closed form of f^{(k)} as a piecewise polynomial.

class PiecewiseFunction {
 public:
  std::vector<BigFloat> breaks;            // piece starts in [0,1), breaks[0] == 0
  std::vector<Poly<BigFloat>> pieces;      // local coefficients in u = x - breaks[i]
  unsigned bits = 0;

  std::size_t size() const { return breaks.size(); }

  BigFloat length(std::size_t i) const {
    return i + 1 < breaks.size() ? BigFloat(breaks[i + 1] - breaks[i]) : BigFloat(1 - breaks[i]);
  }

  std::size_t piece_of(const BigFloat& y) const {
    auto it = std::upper_bound(breaks.begin(), breaks.end(), y);
    return static_cast<std::size_t>(it - breaks.begin()) - 1;
  }

  BigFloat eval(const BigFloat& x) const {
    PrecisionScope scope(bits);
    BigFloat y = frac_of(x);
    std::size_t i = piece_of(y);
    return poly_eval(pieces[i], BigFloat(y - breaks[i]));
  }

  double eval_fast(u128 x) const {
    auto it = std::upper_bound(fbreaks_.begin(), fbreaks_.end(), x);
    std::size_t i = static_cast<std::size_t>(it - fbreaks_.begin()) - 1;
    double u = fixed_to_double(x - fbreaks_[i]);
    const double* c = &fcoef_[i * stride_];
    double acc = 0;
    for (std::size_t e = stride_; e-- > 0;) acc = acc * u + c[e];
    return acc;
  }

  void build_fast() {
    stride_ = 1;
    for (const auto& p : pieces) stride_ = std::max(stride_, p.size());
    fbreaks_.clear();
    fcoef_.assign(pieces.size() * stride_, 0.0);
    for (std::size_t i = 0; i < pieces.size(); ++i) {
      fbreaks_.push_back(to_fixed(breaks[i]));
      for (std::size_t e = 0; e < pieces[i].size(); ++e) fcoef_[i * stride_ + e] = to_double(pieces[i][e]);
    }
  }

 private:
  std::vector<u128> fbreaks_;
  std::vector<double> fcoef_;
  std::size_t stride_ = 1;
};

inline PiecewiseFunction birkhoff_piecewise(const RoofFunction& f, const Rotation& rot, long long k,
                                            std::size_t memory_budget = 50'000'000) {
  require(k >= 1, ErrorKind::Precondition, "k must be positive");
  CirclePoly cp = to_circle_poly(f);
  const std::size_t P = cp.breaks.size();
  const std::size_t deg = cp.degree();
  require(static_cast<double>(k) * static_cast<double>(P) * static_cast<double>(deg + 1) <=
              static_cast<double>(memory_budget),
          ErrorKind::MemoryBudget, "closed form would exceed the coefficient budget");
  check_precision_for(rot, BigInt(k));
  PrecisionScope scope(rot.bits());

  std::vector<BigFloat> b(P), len(P);
  std::vector<Poly<BigFloat>> coef(P);
  for (std::size_t p = 0; p < P; ++p) {
    b[p] = to_bigfloat(cp.breaks[p]);
    len[p] = to_bigfloat(cp.length(p));
    for (const auto& c : cp.pieces[p]) coef[p].push_back(to_bigfloat(c));
    coef[p].resize(deg + 1, BigFloat(0));
  }
  const BigFloat& alpha = rot.value();

  // Power sums of offsets per arc of f.
  std::vector<std::vector<BigFloat>> S(P, std::vector<BigFloat>(deg + 1, BigFloat(0)));
  {
    BigFloat y = 0;
    for (long long j = 0; j < k; ++j) {
      auto it = std::upper_bound(b.begin(), b.end(), y);
      std::size_t p;
      BigFloat o;
      if (it == b.begin()) {
        p = P - 1;
        o = y + 1 - b[p];
      } else {
        p = static_cast<std::size_t>(it - b.begin()) - 1;
        o = y - b[p];
      }
      BigFloat pw = 1;
      for (std::size_t e = 0; e <= deg; ++e) {
        S[p][e] += pw;
        pw *= o;
      }
      y += alpha;
      if (y >= 1) y -= 1;
    }
  }

  struct Event {
    BigFloat pos;
    std::size_t arc;
  };
  std::vector<Event> ev;
  ev.reserve(static_cast<std::size_t>(k) * P);
  for (std::size_t p = 0; p < P; ++p) {
    BigFloat pos = b[p];
    for (long long j = 0; j < k; ++j) {
      if (j > 0) {
        pos -= alpha;
        if (pos < 0) pos += 1;
      }
      ev.push_back({pos, p});
    }
  }
  std::sort(ev.begin(), ev.end(), [](const Event& x, const Event& y) { return x.pos < y.pos; });
  BigFloat tol = ldexp(BigFloat(1), -static_cast<int>(rot.bits()) + 2 * static_cast<int>(bit_length(BigInt(k))) + 16);
  for (std::size_t i = 1; i < ev.size(); ++i) {
    require(ev[i].pos - ev[i - 1].pos > tol, ErrorKind::DegenerateOverlap,
            "two breakpoints of the Birkhoff sum coincide");
  }

  std::vector<std::vector<BigInt>> binom(deg + 1);
  for (std::size_t m = 0; m <= deg; ++m)
    for (std::size_t l = 0; l <= m; ++l) binom[m].push_back(binomial(static_cast<unsigned>(m), static_cast<unsigned>(l)));

  auto current_poly = [&]() {
    Poly<BigFloat> g(deg + 1, BigFloat(0));
    for (std::size_t p = 0; p < P; ++p) {
      if (S[p][0] == 0) continue;
      for (std::size_t m = 0; m <= deg; ++m) {
        if (coef[p][m] == 0) continue;
        for (std::size_t l = 0; l <= m; ++l) g[l] += coef[p][m] * BigFloat(binom[m][l]) * S[p][m - l];
      }
    }
    return g;
  };
  auto shift = [&](const BigFloat& d) {
    std::vector<BigFloat> dp(deg + 1);
    dp[0] = 1;
    for (std::size_t e = 1; e <= deg; ++e) dp[e] = dp[e - 1] * d;
    for (std::size_t p = 0; p < P; ++p) {
      if (S[p][0] == 0) continue;
      for (std::size_t e = deg; e >= 1; --e) {
        BigFloat acc = 0;
        for (std::size_t l = 0; l <= e; ++l) acc += BigFloat(binom[e][l]) * dp[e - l] * S[p][l];
        S[p][e] = acc;
      }
    }
  };

  PiecewiseFunction out;
  out.bits = rot.bits();
  BigFloat cur = 0;
  std::size_t i = 0;
  while (i < ev.size() && ev[i].pos == 0) ++i;  // already placed by the initial offsets
  for (; i < ev.size(); ++i) {
    const Event& e = ev[i];
    out.breaks.push_back(cur);
    out.pieces.push_back(current_poly());
    shift(BigFloat(e.pos - cur));
    cur = e.pos;
    std::size_t prev = e.arc == 0 ? P - 1 : e.arc - 1;
    BigFloat pw = 1;
    for (std::size_t d = 0; d <= deg; ++d) {
      S[prev][d] -= pw;
      pw *= len[prev];
    }
    S[e.arc][0] += 1;
  }
  out.breaks.push_back(cur);
  out.pieces.push_back(current_poly());
  out.build_fast();
  return out;
}

// ---------------------------------------------------------------------------
// Norms of a piecewise function.

struct Norms {
  BigFloat sup;
  BigFloat variation;
  BigFloat l2;
};

inline Norms norms(const PiecewiseFunction& g) {
  PrecisionScope scope(g.bits);
  Norms n{BigFloat(0), BigFloat(0), BigFloat(0)};
  BigFloat l2sq = 0;
  std::size_t m = g.size();
  for (std::size_t i = 0; i < m; ++i) {
    const auto& P = g.pieces[i];
    BigFloat L = g.length(i);
    Poly<double> dP = poly_derivative(poly_to_double(P));
    std::vector<BigFloat> pts{BigFloat(0)};
    for (double r : poly_roots_in(dP, 0.0, to_double(L))) pts.push_back(BigFloat(r));
    pts.push_back(L);
    std::vector<BigFloat> vals;
    for (const auto& t : pts) vals.push_back(poly_eval(P, t));
    for (std::size_t j = 0; j < vals.size(); ++j) {
      if (abs(vals[j]) > n.sup) n.sup = abs(vals[j]);
      if (j > 0) n.variation += abs(vals[j] - vals[j - 1]);
    }
    BigFloat next_start = poly_eval(g.pieces[(i + 1) % m], BigFloat(0));
    n.variation += abs(next_start - vals.back());
    l2sq += poly_integrate_between(poly_mul(P, P), BigFloat(0), L);
  }
  n.l2 = sqrt(l2sq);
  return n;
}

// ---------------------------------------------------------------------------
// Partition sets A_eps^n for piecewise-linear roofs.

struct EpsCell {
  uint32_t eps = 0;
  Rational measure;
  std::vector<std::pair<Rational, Rational>> intervals;
};

struct EpsPartition {
  int n = 0;
  BigInt q;
  Rational norm;
  bool mirror = false;  // {q_n alpha} = 1 - ||q_n alpha||
  std::size_t K = 0;
  std::vector<EpsCell> cells;  // indexed by eps bitmask, bit i <-> jump i

  const EpsCell& cell(uint32_t eps) const { return cells.at(eps); }
};

inline EpsPartition epsilon_partition(const PLRoof& f, const Rotation& rot, int n) {
  require(!f.jumps.empty() && f.jumps.size() <= 16, ErrorKind::Precondition, "need 1..16 jumps");
  EpsPartition out;
  out.n = n;
  out.q = rot.q(n);
  check_precision_for(rot, out.q);
  out.K = f.jumps.size();
  Rational fr = rot.frac_mult(out.q);
  out.mirror = fr > Rational(1, 2);
  out.norm = out.mirror ? Rational(1 - fr) : fr;
  const Rational& l = out.norm;
  const Rational& a = rot.exact();
  long long q = out.q.convert_to<long long>();
  require(static_cast<double>(q) * static_cast<double>(out.K) < 5e6, ErrorKind::MemoryBudget,
          "too many partition intervals");

  struct Ev {
    Rational pos;
    int delta;
    std::size_t jump;
  };
  std::vector<Ev> ev;
  std::vector<int> count(out.K, 0);
  for (std::size_t i = 0; i < out.K; ++i) {
    Rational base = frac_of(f.jumps[i].beta);
    for (long long j = 0; j < q; ++j) {
      Rational s = out.mirror ? frac_of(base - Rational(j) * a) : frac_of(base - Rational(j) * a - l);
      Rational e = s + l;
      if (e > 1) {
        e -= 1;
        count[i] += 1;
      } else if (e == 1) {
        e = 0;
      }
      ev.push_back({s, +1, i});
      if (e != 0) ev.push_back({e, -1, i});
      else count[i] += 0;
    }
  }
  std::sort(ev.begin(), ev.end(), [](const Ev& x, const Ev& y) { return x.pos < y.pos; });
  for (std::size_t i = 1; i < ev.size(); ++i) {
    if (ev[i].pos == ev[i - 1].pos && ev[i].jump != ev[i - 1].jump) {
      throw Error(ErrorKind::DegenerateOverlap, "jump locations collide modulo the orbit grid");
    }
  }
  out.cells.resize(std::size_t(1) << out.K);
  for (uint32_t e = 0; e < out.cells.size(); ++e) out.cells[e].eps = e;
  auto label = [&]() {
    uint32_t e = 0;
    for (std::size_t i = 0; i < out.K; ++i) {
      require(count[i] == 0 || count[i] == 1, ErrorKind::Precondition, "indicator sum outside {0,1}");
      if (count[i]) e |= 1u << i;
    }
    return e;
  };
  // Events at position 0 open at 0 and must be applied before the first segment.
  Rational cur = 0;
  std::size_t i = 0;
  while (i < ev.size() && ev[i].pos == 0) {
    count[ev[i].jump] += ev[i].delta;
    ++i;
  }
  while (i <= ev.size()) {
    Rational nxt = i < ev.size() ? ev[i].pos : Rational(1);
    if (nxt > cur) {
      EpsCell& c = out.cells[label()];
      c.measure += nxt - cur;
      if (!c.intervals.empty() && c.intervals.back().second == cur) c.intervals.back().second = nxt;
      else c.intervals.push_back({cur, nxt});
      cur = nxt;
    }
    if (i == ev.size()) break;
    Rational p = ev[i].pos;
    while (i < ev.size() && ev[i].pos == p) {
      count[ev[i].jump] += ev[i].delta;
      ++i;
    }
  }
  return out;
}

struct RenormCheck {
  std::vector<double> max_residual;  // per eps cell; negative when the cell is empty
  std::vector<Rational> predicted;   // per eps cell
  std::size_t samples = 0;
};

inline Rational drift_constant(const PLRoof& f, const EpsPartition& part, uint32_t eps) {
  Rational S = jump_sum(f);
  Rational C = 0;
  for (std::size_t i = 0; i < part.K; ++i)
    if (eps & (1u << i)) C += f.jumps[i].d;
  Rational base = Rational(part.q) * part.norm * S;
  return part.mirror ? Rational(C - base) : Rational(base - C);
}

// cum[i] = total width of intervals before i.
inline std::vector<Rational> cell_offsets(const EpsCell& c) {
  std::vector<Rational> cum;
  cum.reserve(c.intervals.size());
  Rational acc = 0;
  for (const auto& [a, b] : c.intervals) {
    cum.push_back(acc);
    acc += b - a;
  }
  return cum;
}

inline Rational sample_in_cell(const EpsCell& c, const std::vector<Rational>& cum, double u) {
  Rational target = c.measure * Rational(u);
  auto it = std::upper_bound(cum.begin(), cum.end(), target);
  std::size_t i = static_cast<std::size_t>(it - cum.begin()) - 1;
  const auto& [a, b] = c.intervals[i];
  Rational x = a + (target - cum[i]);
  return x < b ? x : a;
}

inline Rational sample_in_cell(const EpsCell& c, double u) { return sample_in_cell(c, cell_offsets(c), u); }

inline RenormCheck renorm_identity_check(const PLRoof& f, const Rotation& rot, int n, std::size_t sample_count,
                                         uint64_t seed = 1) {
  EpsPartition part = epsilon_partition(f, rot, n);
  RenormCheck out;
  out.samples = sample_count;
  RoofFunction rf = f;
  Rational shift = Rational(part.q) * rot.exact();
  for (const auto& c : part.cells) {
    Rational pred = drift_constant(f, part, c.eps);
    out.predicted.push_back(pred);
    if (c.measure == 0) {
      out.max_residual.push_back(-1);
      continue;
    }
    double worst = 0;
    std::vector<Rational> cum = cell_offsets(c);
    for (std::size_t s = 0; s < sample_count; ++s) {
      double u = (static_cast<double>(s) + stream_uniform(seed + c.eps, s)) / static_cast<double>(sample_count);
      Rational x = sample_in_cell(c, cum, u);
      Rational d = birkhoff_exact(rf, rot, part.q, x + shift) - birkhoff_exact(rf, rot, part.q, x);
      worst = std::max(worst, std::abs(to_double(Rational(d - pred))));
    }
    out.max_residual.push_back(worst);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Difference operator: sum_k (-1)^(r-k) C(r,k) g(x + k h).

template <class T, class G>
T difference_op(G&& g, const T& h, unsigned r, const T& x) {
  T acc = 0;
  for (unsigned k = 0; k <= r; ++k) {
    T term = T(binomial(r, k)) * g(x + T(static_cast<long>(k)) * h);
    if ((r - k) % 2) acc -= term;
    else acc += term;
  }
  return acc;
}

// ---------------------------------------------------------------------------
// Piecewise-polynomial roof with prescribed D^r f.

struct PolyRoofCheck {
  Rational max_matching_residual;  // C^{r-1} matching at 0 and beta
  Rational dr_left, dr_right;      // D^r f on the two pieces
};

inline std::pair<std::vector<Poly<Rational>>, std::vector<Poly<Rational>>> poly_roof_derivatives(const PolyRoof& f) {
  std::vector<Poly<Rational>> L{f.left}, R{f.right};
  for (int j = 0; j < f.r; ++j) {
    L.push_back(poly_derivative(L.back()));
    R.push_back(poly_derivative(R.back()));
  }
  return {L, R};
}

inline PolyRoofCheck check_poly_roof(const PolyRoof& f) {
  auto [L, R] = poly_roof_derivatives(f);
  PolyRoofCheck c;
  c.max_matching_residual = 0;
  for (int j = 0; j < f.r; ++j) {
    Rational r0 = abs(poly_eval(L[j], Rational(0)) - poly_eval(R[j], Rational(1)));
    Rational rb = abs(poly_eval(L[j], f.beta) - poly_eval(R[j], f.beta));
    c.max_matching_residual = std::max({c.max_matching_residual, r0, rb});
  }
  c.dr_left = poly_eval(L[f.r], Rational(0));
  c.dr_right = poly_eval(R[f.r], Rational(0));
  return c;
}

inline PolyRoof poly_roof_build(int r, const Rational& beta, const Rational& margin) {
  require(r >= 1 && r % 2 == 1, ErrorKind::Precondition, "r must be odd and positive");
  require(beta > 0 && beta < 1, ErrorKind::Precondition, "beta must lie in (0,1)");
  Poly<Rational> L{Rational(1) - beta}, R{-beta};
  Poly<Rational> L1, R1;
  for (int j = 0; j < r; ++j) {
    Poly<Rational> Li = poly_integral(L), Ri = poly_integral(R);
    Rational jump = poly_eval(Li, beta) - poly_eval(Ri, beta);
    Ri[0] += jump;
    Rational mean = poly_eval(poly_integral(Li), beta) +
                    poly_integrate_between(Ri, beta, Rational(1));
    Li[0] -= mean;
    Ri[0] -= mean;
    if (j == r - 1) {
      L1 = L;
      R1 = R;
    }
    L = Li;
    R = Ri;
  }
  // Rigorous lower bound of the zero-mean part: grid minimum minus Lipschitz slack.
  auto bound = [](const Poly<Rational>& p) {
    Rational s = 0;
    for (const auto& c : p) s += abs(c);
    return s;
  };
  Rational lip = std::max(bound(L1), bound(R1));
  const int grid = 4096;
  Rational h(1, grid);
  Rational lo = poly_eval(L, Rational(0));
  for (int i = 0; i <= grid; ++i) {
    Rational x = Rational(i) * h;
    Rational v = x < beta ? poly_eval(L, x) : poly_eval(R, x);
    lo = std::min(lo, v);
  }
  lo -= lip * h / 2;
  Rational C = margin - lo;
  L[0] += C;
  R[0] += C;
  PolyRoof f{r, beta, C, L, R};
  PolyRoofCheck chk = check_poly_roof(f);
  require(chk.max_matching_residual == 0, ErrorKind::Precondition, "C^{r-1} matching failed");
  return f;
}

// ---------------------------------------------------------------------------
// Special flow evolution.

struct SpecialFlowPoint {
  BigFloat x;
  BigFloat s;
};

struct FlowStep {
  SpecialFlowPoint point;
  long long crossings = 0;
};

inline BigFloat roof_value(const RoofFunction& f, const BigFloat& x) {
  if (const auto* c = std::get_if<CallableRoof>(&f)) return BigFloat(c->f(to_double(frac_of(x))));
  return to_bigfloat(eval_exact(f, to_rational(x)));
}

inline FlowStep flow_step(const RoofFunction& f, const Rotation& rot, const SpecialFlowPoint& p, const BigFloat& t,
                          long long max_crossings = 100'000'000) {
  PrecisionScope scope(rot.bits());
  FlowStep out;
  BigFloat x = frac_of(p.x);
  BigFloat acc = p.s + t;
  const BigFloat& a = rot.value();
  long long n = 0;
  if (acc >= 0) {
    while (true) {
      BigFloat fx = roof_value(f, x);
      require(fx > 0, ErrorKind::Precondition, "roof must be strictly positive");
      if (acc < fx) break;
      acc -= fx;
      x += a;
      if (x >= 1) x -= 1;
      require(++n <= max_crossings, ErrorKind::PrecisionExhausted, "time too large");
    }
  } else {
    while (acc < 0) {
      x -= a;
      if (x < 0) x += 1;
      BigFloat fx = roof_value(f, x);
      require(fx > 0, ErrorKind::Precondition, "roof must be strictly positive");
      acc += fx;
      require(-(--n) <= max_crossings, ErrorKind::PrecisionExhausted, "time too large");
    }
  }
  out.point = {x, acc};
  out.crossings = n;
  return out;
}

// x -> f(delta - x) for piecewise-linear roofs, equal almost everywhere and right-continuous.
inline PLRoof reflect(const PLRoof& f, const Rational& delta) {
  PLRoof g;
  g.constant = f.constant + jump_sum(f);
  for (const auto& j : f.jumps) g.jumps.push_back({frac_of(delta - j.beta), -j.d});
  return g;
}

inline PLRoof pl_sum(const PLRoof& a, const PLRoof& b, const Rational& sb = 1) {
  PLRoof g = a;
  g.constant += sb * b.constant;
  for (const auto& j : b.jumps) g.jumps.push_back({j.beta, sb * j.d});
  return g;
}

}  // namespace revlab
