#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "core.hpp"
#include "roofs.hpp"
#include "rotations.hpp"

namespace revlab {

struct IntMatrix2 {
  long long a11 = 1, a12 = 0, a21 = 0, a22 = 1;

  long long det() const { return a11 * a22 - a12 * a21; }
  bool in_gl2() const { return det() == 1 || det() == -1; }
  bool is_identity_type() const { return a12 == 0 && a21 == 0 && a11 == a22; }
  IntMatrix2 operator-() const { return {-a11, -a12, -a21, -a22}; }
  bool operator==(const IntMatrix2&) const = default;

  std::string str() const {
    return "[[" + std::to_string(a11) + "," + std::to_string(a12) + "],[" + std::to_string(a21) + "," +
           std::to_string(a22) + "]]";
  }
};

enum class EigenSide { Left, Right };

struct EigenResult {
  BigFloat value;     // gamma (left) or the eigenvalue (right)
  BigFloat residual;
};

inline BigFloat default_relation_tol(const Rotation& rot) {
  PrecisionScope scope(rot.bits());
  return pow(BigFloat(2), -static_cast<int>(rot.bits() / 2));
}

// left:  a12 + a22 alpha = (a11 + a21 alpha) alpha, gamma = a11 + a21 alpha
// right: A (alpha, 1)^T = lambda (alpha, 1)^T
inline std::optional<EigenResult> eigen_relation(const IntMatrix2& A, const Rotation& rot, EigenSide side,
                                                 std::optional<BigFloat> tol = std::nullopt) {
  PrecisionScope scope(rot.bits());
  const BigFloat tolv = tol ? *tol : default_relation_tol(rot);
  const BigFloat& al = rot.value();
  if (side == EigenSide::Left) {
    BigFloat gamma = BigFloat(A.a11) + BigFloat(A.a21) * al;
    BigFloat res = abs(BigFloat(A.a12) + BigFloat(A.a22) * al - gamma * al);
    if (res < tolv) return EigenResult{gamma, res};
    return std::nullopt;
  }
  BigFloat x = BigFloat(A.a11) * al + BigFloat(A.a12);
  BigFloat y = BigFloat(A.a21) * al + BigFloat(A.a22);
  if (abs(y) < tolv) return std::nullopt;
  BigFloat lambda = y;  // second coordinate of (alpha, 1) is 1
  BigFloat res = abs(x - lambda * al);
  if (res < tolv) return EigenResult{lambda, res};
  return std::nullopt;
}

struct ScaleResult {
  BigFloat s;
  int sigma = 1;
  BigFloat gamma;
  BigFloat inverse_form;  // sigma (a22 - a21 alpha)^{-1}
  BigFloat residual;      // |sigma s - sigma (a22 - a21 alpha)^{-1}| in the gamma normalization
  bool trivial = false;   // s = 1
};

// gamma = a11 + a21 alpha = sigma s = sigma (a22 - a21 alpha)^{-1}
inline ScaleResult scale(const IntMatrix2& A, const Rotation& rot, std::optional<BigFloat> tol = std::nullopt) {
  require(A.in_gl2(), ErrorKind::Precondition, "matrix is not in GL2(Z)");
  PrecisionScope scope(rot.bits());
  auto left = eigen_relation(A, rot, EigenSide::Left, tol);
  require(left.has_value(), ErrorKind::InconsistentRelation, "no left eigen relation for " + A.str());
  const BigFloat& al = rot.value();
  ScaleResult out;
  out.sigma = static_cast<int>(A.det());
  out.gamma = left->value;
  out.s = out.sigma * out.gamma;
  BigFloat den = BigFloat(A.a22) - BigFloat(A.a21) * al;
  require(den != 0, ErrorKind::InconsistentRelation, "a22 - a21 alpha vanishes");
  out.inverse_form = out.sigma / den;
  out.residual = abs(out.gamma - out.inverse_form);
  const BigFloat tolv = tol ? *tol : default_relation_tol(rot);
  require(out.residual < tolv, ErrorKind::InconsistentRelation, "the two scale expressions disagree");
  out.trivial = abs(out.s - 1) < tolv;
  return out;
}

struct MatrixHit {
  IntMatrix2 A;
  BigFloat gamma;
  BigFloat s;
  BigFloat residual;
};

inline std::vector<MatrixHit> search_matrices(const Rotation& rot, long long bound, bool include_trivial = false) {
  require(bound >= 0 && bound <= 50, ErrorKind::Precondition, "bound must lie in [0, 50]");
  std::vector<MatrixHit> out;
  if (bound == 0) return out;
  PrecisionScope scope(rot.bits());
  for (long long a11 = -bound; a11 <= bound; ++a11)
    for (long long a12 = -bound; a12 <= bound; ++a12)
      for (long long a21 = -bound; a21 <= bound; ++a21)
        for (long long a22 = -bound; a22 <= bound; ++a22) {
          IntMatrix2 A{a11, a12, a21, a22};
          if (!A.in_gl2()) continue;
          if (!include_trivial && A.is_identity_type()) continue;
          auto e = eigen_relation(A, rot, EigenSide::Left);
          if (!e) continue;
          ScaleResult s = scale(A, rot);
          out.push_back({A, e->value, s.s, s.residual});
        }
  return out;
}

// ---------------------------------------------------------------------------
// Boundedness probes.

enum class Growth { Bounded, Linear, Undetermined };

inline const char* growth_name(Growth g) {
  switch (g) {
    case Growth::Bounded: return "bounded";
    case Growth::Linear: return "linear";
    case Growth::Undetermined: return "undetermined";
  }
  return "";
}

constexpr double kPlateauBand = 0.05;
constexpr double kSlopeBand = 0.2;
constexpr double kZeroSup = 1e-9;  // sums this small count as identically zero

struct ProbeReport {
  long long horizon = 0;
  std::vector<double> sup;  // sup |g^{(m)}|, m = 1..horizon
  Growth growth = Growth::Undetermined;
  double slope = 0;
  bool exact_sup = true;
};

inline Growth classify_growth(const std::vector<double>& sup, double& slope) {
  const std::size_t M = sup.size();
  slope = 0;
  if (M < 4) return Growth::Undetermined;
  double lower = 0, upper = 0;
  for (std::size_t m = 1; m <= M; ++m) (m <= M / 2 ? lower : upper) = std::max(m <= M / 2 ? lower : upper, sup[m - 1]);
  // least-squares slope over the upper half
  double sx = 0, sy = 0, sxx = 0, sxy = 0, n = 0;
  for (std::size_t m = M / 2; m <= M; ++m) {
    double x = static_cast<double>(m), y = sup[m - 1];
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    n += 1;
  }
  slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  if (std::max(lower, upper) <= kZeroSup) return Growth::Bounded;
  if (upper <= (1 + kPlateauBand) * lower) return Growth::Bounded;
  double r1 = sup[3 * M / 4 - 1] / static_cast<double>(3 * M / 4), r2 = sup[M - 1] / static_cast<double>(M);
  if (slope > 0 && r2 > 0 && std::abs(r1 - r2) <= kSlopeBand * r2) return Growth::Linear;
  return Growth::Undetermined;
}

namespace detail {

// One-sided limits are read 2^-80 to either side: far above the rounding of b - j alpha
// in fixed point, far below any gap between distinct orbit points at desk scale.
constexpr u128 kSideOffset = static_cast<u128>(1) << 48;

// PL or step roof read on fixed-point circle points, with one-sided limits.
struct FixedRoof {
  bool step = false;
  std::vector<u128> breaks;
  std::vector<double> d;  // PL: jump sizes at breaks; step: arc values
  double c = 0;

  double eval(u128 y, bool left) const {
    y = left ? y - kSideOffset : y + kSideOffset;
    if (!step) {
      double v = c;
      for (std::size_t i = 0; i < breaks.size(); ++i) v += d[i] * fixed_to_double(y - breaks[i]);
      return v;
    }
    auto it = std::upper_bound(breaks.begin(), breaks.end(), y);
    std::size_t i = it == breaks.begin() ? breaks.size() - 1 : static_cast<std::size_t>(it - breaks.begin()) - 1;
    return d[i];
  }
};

inline std::optional<FixedRoof> fixed_roof(const RoofFunction& g) {
  FixedRoof f;
  if (const auto* pl = std::get_if<PLRoof>(&g)) {
    f.c = to_double(pl->constant);
    for (const auto& j : pl->jumps) {
      f.breaks.push_back(to_fixed(j.beta));
      f.d.push_back(to_double(j.d));
    }
    return f;
  }
  if (const auto* st = std::get_if<StepFunction>(&g)) {
    f.step = true;
    for (std::size_t i = 0; i < st->breaks.size(); ++i) {
      f.breaks.push_back(to_fixed(st->breaks[i]));
      f.d.push_back(to_double(st->values[i]));
    }
    return f;
  }
  return std::nullopt;
}

// sup |g^{(m)}| for m = 1..M. Between the points b - j alpha the sums are linear (PL) or
// constant (step), so the sup is a one-sided limit at one of them.
inline std::vector<double> breakpoint_sups(const FixedRoof& f, u128 alpha, long long M) {
  std::vector<u128> pts;
  std::vector<double> L, R;
  std::vector<double> out;
  for (long long m = 1; m <= M; ++m) {
    const u128 shift = static_cast<u128>(m - 1) * alpha;
    for (std::size_t k = 0; k < pts.size(); ++k) {
      L[k] += f.eval(pts[k] + shift, true);
      R[k] += f.eval(pts[k] + shift, false);
    }
    for (u128 b : f.breaks) {
      u128 p = b - shift;
      double l = 0, r = 0;
      for (long long j = 0; j < m; ++j) {
        u128 y = p + static_cast<u128>(j) * alpha;
        l += f.eval(y, true);
        r += f.eval(y, false);
      }
      pts.push_back(p);
      L.push_back(l);
      R.push_back(r);
    }
    double best = f.breaks.empty() ? std::abs(static_cast<double>(m) * f.c) : 0.0;
    for (std::size_t k = 0; k < pts.size(); ++k) best = std::max({best, std::abs(L[k]), std::abs(R[k])});
    out.push_back(best);
  }
  return out;
}

}  // namespace detail

inline ProbeReport gh_probe(const RoofFunction& g, const Rotation& rot, long long M, std::size_t grid = 4096) {
  require(M >= 1, ErrorKind::Precondition, "horizon must be positive");
  ProbeReport rep;
  rep.horizon = M;
  if (auto fr = detail::fixed_roof(g)) {
    Rational mean = mean_of(to_circle_poly(g));
    require(mean == 0, ErrorKind::Precondition, "probe needs a centered function");
    rep.exact_sup = false;
    rep.sup = detail::breakpoint_sups(*fr, rot.fixed(), M);
  } else if (is_piecewise(g)) {
    Rational mean = mean_of(to_circle_poly(g));
    require(mean == 0, ErrorKind::Precondition, "probe needs a centered function");
    for (long long m = 1; m <= M; ++m) {
      PiecewiseFunction pf = birkhoff_piecewise(g, rot, m);
      rep.sup.push_back(to_double(norms(pf).sup));
    }
  } else {
    const auto& c = std::get<CallableRoof>(g);
    require(std::abs(c.mean) < 1e-12, ErrorKind::Precondition, "probe needs a centered function");
    rep.exact_sup = false;
    std::vector<double> acc(grid, 0.0);
    const double a = rot.approx();
    for (long long m = 1; m <= M; ++m) {
      double best = 0;
      for (std::size_t j = 0; j < grid; ++j) {
        double x = static_cast<double>(j) / static_cast<double>(grid) + static_cast<double>(m - 1) * a;
        acc[j] += c.f(x - std::floor(x));
        best = std::max(best, std::abs(acc[j]));
      }
      rep.sup.push_back(best);
    }
  }
  rep.growth = classify_growth(rep.sup, rep.slope);
  return rep;
}

// h - h∘T for a callable h.
inline CallableRoof coboundary(const std::function<double(double)>& h, const Rotation& rot, const std::string& name) {
  double a = rot.approx();
  return CallableRoof{name, [h, a](double x) {
                        double y = x + a;
                        return h(x) - h(y - std::floor(y));
                      },
                      0.0};
}

// x -> f(delta - x) for step functions, equal almost everywhere.
inline StepFunction reflect(const StepFunction& f, const Rational& delta) {
  // arc [b_i, b_{i+1}) maps to (delta - b_{i+1}, delta - b_i]
  std::vector<std::pair<Rational, Rational>> arcs;
  const std::size_t P = f.breaks.size();
  for (std::size_t i = 0; i < P; ++i) {
    Rational end = i + 1 < P ? f.breaks[i + 1] : Rational(f.breaks[0] + 1);
    arcs.push_back({frac_of(delta - end), f.values[i]});
  }
  std::sort(arcs.begin(), arcs.end());
  StepFunction g;
  if (arcs.front().first != 0) {
    g.breaks.push_back(Rational(0));
    g.values.push_back(arcs.back().second);
  }
  for (const auto& [b, v] : arcs) {
    g.breaks.push_back(b);
    g.values.push_back(v);
  }
  return g;
}

// Equality almost everywhere of two step functions.
inline bool step_equal_ae(const StepFunction& f, const StepFunction& g) {
  std::vector<Rational> pts = f.breaks;
  pts.insert(pts.end(), g.breaks.begin(), g.breaks.end());
  pts.push_back(Rational(0));
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    Rational end = i + 1 < pts.size() ? pts[i + 1] : Rational(1);
    Rational mid = (pts[i] + end) / 2;
    if (f.eval(mid) != g.eval(mid)) return false;
  }
  return true;
}

struct InverseProbe {
  std::vector<Rational> deltas;
  std::vector<ProbeReport> reports;
  std::optional<bool> exact_symmetry;  // two-step shortcut: f∘R∘S = f
  std::optional<Rational> bounded_delta;
};

// The two-step shortcut: b on [0, a), c on [a, 1), S(x) = -x, R(x) = x + a.
inline bool two_step_symmetry(const StepFunction& f) {
  require(f.breaks.size() == 2 && f.breaks[0] == 0, ErrorKind::Precondition, "not a two-step roof");
  return step_equal_ae(reflect(f, f.breaks[1]), f);
}

inline InverseProbe inverse_cohomology_probe(const RoofFunction& f, const Rotation& rot,
                                             const std::vector<Rational>& deltas, long long M) {
  InverseProbe out;
  out.deltas = deltas;
  if (const auto* st = std::get_if<StepFunction>(&f)) {
    if (st->breaks.size() == 2 && st->breaks[0] == 0) out.exact_symmetry = two_step_symmetry(*st);
  }
  for (const auto& d : deltas) {
    RoofFunction diff;
    if (const auto* pl = std::get_if<PLRoof>(&f)) {
      diff = pl_sum(reflect(*pl, d), *pl, Rational(-1));
    } else if (const auto* st = std::get_if<StepFunction>(&f)) {
      StepFunction r = reflect(*st, d);
      std::vector<Rational> pts = r.breaks;
      pts.insert(pts.end(), st->breaks.begin(), st->breaks.end());
      std::sort(pts.begin(), pts.end());
      pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
      StepFunction s;
      for (std::size_t i = 0; i < pts.size(); ++i) {
        s.breaks.push_back(pts[i]);
        s.values.push_back(r.eval(pts[i]) - st->eval(pts[i]));
      }
      diff = s;
    } else if (const auto* c = std::get_if<CallableRoof>(&f)) {
      double dd = to_double(d);
      auto h = c->f;
      diff = CallableRoof{c->name + "-reflected-difference", [h, dd](double x) {
                            double y = dd - x;
                            return h(y - std::floor(y)) - h(x);
                          },
                          0.0};
    } else {
      throw Error(ErrorKind::Precondition, "inverse probe supports PL, step and callable roofs");
    }
    Centered cd = center(diff);
    out.reports.push_back(gh_probe(cd.roof, rot, M));
    if (out.reports.back().growth == Growth::Bounded && !out.bounded_delta) out.bounded_delta = d;
  }
  return out;
}

// |rho^n x_n - x_0| against M0 / (1 - |rho|) for |rho x_{k+1} - x_k| <= M0.
inline std::pair<double, double> contraction_telescope(double rho, const std::vector<double>& xs) {
  require(std::abs(rho) < 1, ErrorKind::Precondition, "|rho| must be below 1");
  double M0 = 0;
  for (std::size_t k = 0; k + 1 < xs.size(); ++k) M0 = std::max(M0, std::abs(rho * xs[k + 1] - xs[k]));
  double n = static_cast<double>(xs.size() - 1);
  double lhs = std::abs(std::pow(rho, n) * xs.back() - xs.front());
  return {lhs, M0 / (1 - std::abs(rho))};
}

}  // namespace revlab
