#pragma once

#include <array>
#include <complex>
#include <string>
#include <vector>

#include "core.hpp"
#include "measures.hpp"
#include "roofs.hpp"
#include "rotations.hpp"

namespace revlab {

// ---------------------------------------------------------------------------
// Symmetry maps.

enum class SymmetryKind { Theta2, Theta3, ThetaD, BarTheta };

struct SymmetryMap {
  SymmetryKind kind = SymmetryKind::Theta2;
  std::size_t d = 2;  // ThetaD: vector length; BarTheta: number of bits

  static SymmetryMap theta2() { return {SymmetryKind::Theta2, 2}; }
  static SymmetryMap theta3() { return {SymmetryKind::Theta3, 3}; }
  static SymmetryMap theta_d(std::size_t d) { return {SymmetryKind::ThetaD, d}; }
  static SymmetryMap bar_theta(std::size_t d) { return {SymmetryKind::BarTheta, d}; }

  std::size_t domain_dim() const {
    return kind == SymmetryKind::BarTheta ? (std::size_t(1) << d) - 1 : d;
  }

  std::string name() const {
    switch (kind) {
      case SymmetryKind::Theta2: return "theta2";
      case SymmetryKind::Theta3: return "theta3";
      case SymmetryKind::ThetaD: return "theta_d(" + std::to_string(d) + ")";
      case SymmetryKind::BarTheta: return "bar_theta(" + std::to_string(d) + ")";
    }
    return "";
  }
};

// (t_0, ..., t_{d-1}) -> (t_0, t_0 - t_{d-1}, ..., t_0 - t_1).
template <class T>
std::vector<T> theta_apply(const std::vector<T>& t) {
  std::vector<T> r(t.size());
  if (t.empty()) return r;
  r[0] = t[0];
  for (std::size_t j = 1; j < t.size(); ++j) r[j] = t[0] - t[t.size() - j];
  return r;
}

// Coordinates indexed by bitmask e in 1 .. 2^d - 1 at position e - 1; t_0 = 0.
template <class T>
std::vector<T> bar_theta_apply(const std::vector<T>& t, std::size_t d) {
  const std::size_t full = (std::size_t(1) << d) - 1;
  std::vector<T> r(full);
  for (std::size_t e = 1; e <= full; ++e) {
    std::size_t ie = full ^ e;
    T ti = ie == 0 ? T(0) : t[ie - 1];
    r[e - 1] = t[full - 1] - ti;
  }
  return r;
}

template <class T>
std::vector<T> apply_symmetry(const SymmetryMap& m, const std::vector<T>& v) {
  require(v.size() == m.domain_dim(), ErrorKind::DimensionMismatch, "vector does not match " + m.name());
  if (m.kind == SymmetryKind::BarTheta) return bar_theta_apply(v, m.d);
  return theta_apply(v);
}

// FS(a): the sums sum_i e_i a_i for every nonzero bitmask e, at position e - 1.
template <class T>
std::vector<T> fs_vector(const std::vector<T>& a) {
  const std::size_t full = (std::size_t(1) << a.size()) - 1;
  std::vector<T> r(full, T(0));
  for (std::size_t e = 1; e <= full; ++e)
    for (std::size_t i = 0; i < a.size(); ++i)
      if (e & (std::size_t(1) << i)) r[e - 1] += a[i];
  return r;
}

// rho(x)_e = x_{d - |e|}.
template <class T>
std::vector<T> rho_apply(const std::vector<T>& x) {
  const std::size_t d = x.size();
  const std::size_t full = (std::size_t(1) << d) - 1;
  std::vector<T> r(full);
  for (std::size_t e = 1; e <= full; ++e) r[e - 1] = x[d - static_cast<std::size_t>(__builtin_popcountll(e))];
  return r;
}

// ---------------------------------------------------------------------------
// Line-support maps on R^{r+1}.

template <class T>
T alt_binomial_sum(const std::vector<T>& x, std::size_t r, std::size_t first) {
  T s = 0;
  for (std::size_t k = 1; k <= r; ++k) {
    T term = T(binomial(static_cast<unsigned>(r + 1), static_cast<unsigned>(k))) * x[first + k - 1];
    if (k % 2) s += term;
    else s -= term;
  }
  return s;
}

// A(x_1..x_r) = (sum_k (-1)^{k+1} C(r+1,k) x_k, x_1, ..., x_r).
template <class T>
std::vector<T> line_A(const std::vector<T>& x) {
  std::vector<T> r{alt_binomial_sum(x, x.size(), 0)};
  r.insert(r.end(), x.begin(), x.end());
  return r;
}

template <class T>
std::vector<T> line_R(const std::vector<T>& x, const T& c) {
  std::vector<T> r = x;
  r[0] += c;
  return r;
}

template <class T>
std::vector<T> line_B(const std::vector<T>& x, const T& c) {
  const std::size_t r = x.size();
  T s = alt_binomial_sum(x, r, 0);
  std::vector<T> out(r);
  for (std::size_t l = 1; l <= r; ++l) out[l - 1] = s - x[r - l] + c;
  return out;
}

// c = x_0 - sum_k (-1)^{k+1} C(r+1,k) x_k.
template <class T>
T line_residual(const std::vector<T>& x) {
  return x[0] - alt_binomial_sum(x, x.size() - 1, 1);
}

// ---------------------------------------------------------------------------
// Verdicts.

enum class VerdictLabel { Symmetric, Asymmetric, Inconclusive };

inline const char* verdict_name(VerdictLabel l) {
  switch (l) {
    case VerdictLabel::Symmetric: return "symmetric-within-tol";
    case VerdictLabel::Asymmetric: return "asymmetric";
    case VerdictLabel::Inconclusive: return "inconclusive";
  }
  return "";
}

struct Witness {
  std::vector<double> point;
  double weight = 0;
  double image_weight = 0;
};

struct Verdict {
  double distance = 0;
  bool distance_exact = true;
  double tau_lo = 0.02;
  double tau_hi = 0.05;
  VerdictLabel label = VerdictLabel::Inconclusive;
  std::vector<Witness> witnesses;
};

inline VerdictLabel classify(double dist, double tau_lo, double tau_hi) {
  if (dist < tau_lo) return VerdictLabel::Symmetric;
  if (dist > tau_hi) return VerdictLabel::Asymmetric;
  return VerdictLabel::Inconclusive;
}

template <class T>
Measure<T> symmetry_image(const Measure<T>& P, const SymmetryMap& m) {
  require(P.d == m.domain_dim(), ErrorKind::DimensionMismatch, "measure does not match " + m.name());
  return map_through(P, [&](const std::vector<T>& x) { return apply_symmetry(m, x); });
}

// Symmetrization 1/2 (P + map_* P).
template <class T>
Measure<T> symmetrize(const Measure<T>& P, const SymmetryMap& m) {
  return mixture<T>({{T(1) / T(2), P}, {T(1) / T(2), symmetry_image(P, m)}});
}

// Atoms whose weight differs from that of their image by more than tol.
inline std::vector<Witness> atom_asymmetry(const ExactMeasure& P, const SymmetryMap& m, double tol = 0) {
  ExactMeasure Q = P.merged();
  std::vector<Witness> out;
  for (std::size_t i = 0; i < Q.size(); ++i) {
    auto x = Q.point_vec(i);
    Rational wi = Q.weights[i];
    Rational wm = Q.weight_at(apply_symmetry(m, x));
    if (to_double(Rational(abs(wi - wm))) > tol) {
      Witness w;
      for (const auto& c : x) w.point.push_back(to_double(c));
      w.weight = to_double(wi);
      w.image_weight = to_double(wm);
      out.push_back(w);
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const Witness& a, const Witness& b) {
    return std::abs(a.weight - a.image_weight) > std::abs(b.weight - b.image_weight);
  });
  return out;
}

struct Cluster {
  std::vector<double> center;
  double mass = 0;
};

// Greedy clustering: each point joins the first cluster whose seed lies within radius.
inline std::vector<Cluster> cluster_points(const SampledMeasure& P, double radius) {
  std::vector<Cluster> cl;
  std::vector<std::vector<double>> seeds, sums;
  for (std::size_t i = 0; i < P.size(); ++i) {
    const double* x = P.point(i);
    std::size_t c = 0;
    for (; c < seeds.size(); ++c) {
      double s = 0;
      for (std::size_t k = 0; k < P.d; ++k) s += (x[k] - seeds[c][k]) * (x[k] - seeds[c][k]);
      if (std::sqrt(s) <= radius) break;
    }
    if (c == seeds.size()) {
      seeds.push_back({x, x + P.d});
      sums.push_back(std::vector<double>(P.d, 0.0));
      cl.push_back({});
    }
    cl[c].mass += P.weights[i];
    for (std::size_t k = 0; k < P.d; ++k) sums[c][k] += P.weights[i] * x[k];
  }
  for (std::size_t c = 0; c < cl.size(); ++c) {
    cl[c].center.resize(P.d);
    for (std::size_t k = 0; k < P.d; ++k) cl[c].center[k] = sums[c][k] / cl[c].mass;
  }
  std::sort(cl.begin(), cl.end(), [](const Cluster& a, const Cluster& b) { return a.mass > b.mass; });
  return cl;
}

// Default radius 10 N^{-1/2} times the diameter of the cloud.
inline double default_cluster_radius(const SampledMeasure& P) {
  double diam = 0;
  for (std::size_t k = 0; k < P.d; ++k) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t i = 0; i < P.size(); ++i) lo = std::min(lo, P.point(i)[k]), hi = std::max(hi, P.point(i)[k]);
    diam = std::max(diam, hi - lo);
  }
  return 10.0 * diam / std::sqrt(static_cast<double>(std::max<std::size_t>(P.size(), 1)));
}

inline std::vector<Witness> atom_asymmetry(const SampledMeasure& P, const SymmetryMap& m, double tol,
                                           double radius) {
  auto cl = cluster_points(P, radius);
  std::vector<Witness> out;
  for (const auto& c : cl) {
    auto img = apply_symmetry(m, c.center);
    double wm = 0;
    for (const auto& o : cl) {
      double s = 0;
      for (std::size_t k = 0; k < P.d; ++k) s += (img[k] - o.center[k]) * (img[k] - o.center[k]);
      if (std::sqrt(s) <= radius) wm += o.mass;
    }
    if (std::abs(c.mass - wm) > tol) out.push_back({c.center, c.mass, wm});
  }
  std::stable_sort(out.begin(), out.end(), [](const Witness& a, const Witness& b) {
    return std::abs(a.weight - a.image_weight) > std::abs(b.weight - b.image_weight);
  });
  return out;
}

template <class T>
Verdict theta_invariance(const Measure<T>& P, const SymmetryMap& m, double tau_lo = 0.02, double tau_hi = 0.05) {
  Verdict v;
  v.tau_lo = tau_lo;
  v.tau_hi = tau_hi;
  Distance d = distance_full(symmetry_image(P, m), P);
  v.distance = d.value;
  v.distance_exact = d.exact;
  v.label = classify(d.value, tau_lo, tau_hi);
  if constexpr (std::is_same_v<T, Rational>) {
    v.witnesses = atom_asymmetry(P, m, 0.0);
  } else {
    v.witnesses = atom_asymmetry(P, m, tau_hi, default_cluster_radius(P));
  }
  return v;
}

// ---------------------------------------------------------------------------
// Characteristic-function identity for theta3: P^(a,b,c) = P^(a+b+c, -c, -b).

template <class T>
double char_symmetry_test(const Measure<T>& P, const std::vector<std::array<double, 3>>& grid) {
  require(P.d == 3, ErrorKind::DimensionMismatch, "char_symmetry_test needs a measure on R^3");
  double worst = 0;
  for (const auto& s : grid) {
    auto lhs = char_fn(P, {s[0], s[1], s[2]});
    auto rhs = char_fn(P, {s[0] + s[1] + s[2], -s[2], -s[1]});
    worst = std::max(worst, std::abs(lhs - rhs));
  }
  return worst;
}

inline std::vector<std::array<double, 3>> integer_grid(int radius) {
  std::vector<std::array<double, 3>> g;
  for (int a = -radius; a <= radius; ++a)
    for (int b = -radius; b <= radius; ++b)
      for (int c = -radius; c <= radius; ++c) g.push_back({double(a), double(b), double(c)});
  return g;
}

// ---------------------------------------------------------------------------
// Affine roof test: |P^_n(1,-1,-1)| against q_{n+1} ||q_n alpha||.

struct JomRow {
  int n = 0;
  double modulus = 0;
  double statistic = 0;
  bool degenerate = false;
};

inline std::vector<JomRow> affine_jom_test(const PLRoof& f, const Rotation& rot, int n_lo, int n_hi, std::size_t N,
                                           uint64_t seed = 1) {
  RoofFunction f0 = center(RoofFunction(f)).roof;
  bool degenerate = f.jumps.empty() || jump_sum(f) == 0;
  std::vector<JomRow> out;
  for (int n = n_lo; n <= n_hi; ++n) {
    JomRow row;
    row.n = n;
    row.degenerate = degenerate;
    const BigInt& q = rot.q(n);
    const BigInt& q1 = rot.q(n + 1);
    row.statistic = to_double(Rational(Rational(q1) * circle_norm_exact(q, rot)));
    Rational shift = Rational(q1) * rot.exact();
    std::complex<double> acc = 0;
    for (std::size_t j = 0; j < N; ++j) {
      Rational x = (Rational(static_cast<long long>(j)) + Rational(stream_uniform(seed, j))) /
                   Rational(static_cast<long long>(N));
      Rational D = birkhoff_exact(f0, rot, q, x + shift) - birkhoff_exact(f0, rot, q, x);
      double ph = to_double(frac_of(D));
      acc += std::polar(1.0, 2 * M_PI * ph);
    }
    row.modulus = std::abs(acc) / static_cast<double>(N);
    out.push_back(row);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Line-support decomposition on R^{r+1}.

struct ResidualCluster {
  double c = 0;
  double mass = 0;
};

struct LineSupport {
  std::size_t r = 1;
  double radius = 0;
  std::vector<ResidualCluster> clusters;        // of P
  std::vector<ResidualCluster> theta_clusters;  // of theta_* P
  double shared_mass = 0;  // mass of P on residual values that theta_* P also charges
};

inline std::vector<ResidualCluster> cluster_residuals(std::vector<std::pair<double, double>> cw, double radius) {
  std::sort(cw.begin(), cw.end());
  std::vector<ResidualCluster> out;
  double start = 0, sum = 0, mass = 0;
  for (std::size_t i = 0; i < cw.size(); ++i) {
    if (i == 0 || cw[i].first - start > radius) {
      if (i > 0) out.push_back({sum / mass, mass});
      start = cw[i].first;
      sum = 0;
      mass = 0;
    }
    sum += cw[i].first * cw[i].second;
    mass += cw[i].second;
  }
  if (!cw.empty()) out.push_back({sum / mass, mass});
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.mass > b.mass; });
  return out;
}

template <class T>
LineSupport line_support_decompose(const Measure<T>& P, double radius) {
  require(P.d >= 2, ErrorKind::DimensionMismatch, "line support needs dimension r+1 >= 2");
  LineSupport ls;
  ls.r = P.d - 1;
  ls.radius = radius;
  require(ls.r % 2 == 1, ErrorKind::Precondition, "r must be odd");
  std::vector<std::pair<double, double>> a, b;
  for (std::size_t i = 0; i < P.size(); ++i) {
    auto x = P.point_vec(i);
    double w = to_double(P.weights[i]);
    a.push_back({to_double(line_residual(x)), w});
    b.push_back({to_double(line_residual(theta_apply(x))), w});
  }
  ls.clusters = cluster_residuals(a, radius);
  ls.theta_clusters = cluster_residuals(b, radius);
  for (const auto& c : ls.clusters) {
    for (const auto& t : ls.theta_clusters) {
      if (std::abs(c.c - t.c) <= radius) {
        ls.shared_mass += c.mass;
        break;
      }
    }
  }
  return ls;
}

}  // namespace revlab
