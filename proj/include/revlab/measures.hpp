#pragma once

#include <complex>
#include <functional>
#include <map>
#include <numeric>
#include <vector>

#include "core.hpp"
#include "roofs.hpp"

namespace revlab {

// Finitely supported probability measure on R^d. Coordinates are stored flat,
// atom i occupying coords[i*d .. i*d+d). Sampled measures keep their points
// unmerged with equal weights.
template <class T>
struct Measure {
  std::size_t d = 1;
  std::vector<T> coords;
  std::vector<T> weights;
  bool sampled = false;

  std::size_t size() const { return weights.size(); }
  const T* point(std::size_t i) const { return coords.data() + i * d; }
  std::vector<T> point_vec(std::size_t i) const { return {point(i), point(i) + d}; }

  T total() const {
    T s = 0;
    for (const auto& w : weights) s += w;
    return s;
  }

  void add(const std::vector<T>& x, const T& w) {
    require(x.size() == d, ErrorKind::DimensionMismatch, "atom dimension");
    coords.insert(coords.end(), x.begin(), x.end());
    weights.push_back(w);
  }

  static Measure dirac(const std::vector<T>& x) {
    Measure m;
    m.d = x.size();
    m.add(x, T(1));
    return m;
  }

  // Merge atoms at exactly equal points; sort lexicographically.
  Measure merged() const {
    std::map<std::vector<T>, T> acc;
    for (std::size_t i = 0; i < size(); ++i) acc[point_vec(i)] += weights[i];
    Measure m;
    m.d = d;
    for (const auto& [x, w] : acc)
      if (w != 0) m.add(x, w);
    return m;
  }

  // Weight at an exact point.
  T weight_at(const std::vector<T>& x) const {
    T w = 0;
    for (std::size_t i = 0; i < size(); ++i)
      if (std::equal(x.begin(), x.end(), point(i))) w += weights[i];
    return w;
  }
};

using ExactMeasure = Measure<Rational>;
using SampledMeasure = Measure<double>;

inline SampledMeasure to_double(const ExactMeasure& m) {
  SampledMeasure r;
  r.d = m.d;
  r.sampled = m.sampled;
  for (const auto& c : m.coords) r.coords.push_back(to_double(c));
  for (const auto& w : m.weights) r.weights.push_back(to_double(w));
  return r;
}

inline void check_mass(const ExactMeasure& m) {
  require(m.total() == 1, ErrorKind::WeightSum, "total mass must be 1");
}

inline void check_mass(const SampledMeasure& m) {
  require(std::abs(m.total() - 1.0) <= std::ldexp(1.0, -40), ErrorKind::WeightSum, "total mass must be 1");
}

// ---------------------------------------------------------------------------
// Pushforwards.

using CircleFn = std::function<double(u128)>;

inline SampledMeasure pushforward_sampled(const std::vector<CircleFn>& fns, std::size_t N, uint64_t seed,
                                          bool jitter = true) {
  require(N >= 1 && !fns.empty(), ErrorKind::Precondition, "need N >= 1 and at least one function");
  SampledMeasure m;
  m.d = fns.size();
  m.sampled = true;
  m.coords.resize(N * m.d);
  m.weights.assign(N, 1.0 / static_cast<double>(N));
  // x_j = (j + u_j)/N, rounded to a multiple of 2^-64 so the fixed-point step is cheap.
  for (std::size_t j = 0; j < N; ++j) {
    double u = jitter ? stream_uniform(seed, j) : 0.0;
    u128 x = (static_cast<u128>(j) << 64) / N + static_cast<u128>(std::ldexp(u, 64) / static_cast<double>(N));
    x <<= 64;
    for (std::size_t i = 0; i < m.d; ++i) m.coords[j * m.d + i] = fns[i](x);
  }
  return m;
}

inline ExactMeasure pushforward_exact_step(const std::vector<StepFunction>& fns, std::size_t max_atoms = 5'000'000) {
  require(!fns.empty(), ErrorKind::Precondition, "need at least one function");
  std::vector<Rational> br;
  for (const auto& f : fns) {
    validate_step(f);
    br.insert(br.end(), f.breaks.begin(), f.breaks.end());
  }
  br.push_back(Rational(0));
  std::sort(br.begin(), br.end());
  br.erase(std::unique(br.begin(), br.end()), br.end());
  require(br.size() <= max_atoms, ErrorKind::MemoryBudget, "common refinement too large");
  std::map<std::vector<Rational>, Rational> acc;
  std::vector<std::size_t> cursor(fns.size(), 0);
  for (std::size_t i = 0; i < br.size(); ++i) {
    Rational len = (i + 1 < br.size() ? br[i + 1] : Rational(1)) - br[i];
    std::vector<Rational> v(fns.size());
    for (std::size_t k = 0; k < fns.size(); ++k) {
      const auto& f = fns[k];
      auto& c = cursor[k];
      while (c + 1 < f.breaks.size() && f.breaks[c + 1] <= br[i]) ++c;
      std::size_t arc = br[i] < f.breaks[0] ? f.breaks.size() - 1 : c;
      v[k] = f.values[arc];
    }
    acc[v] += len;
  }
  ExactMeasure m;
  m.d = fns.size();
  for (const auto& [x, w] : acc) m.add(x, w);
  return m;
}

// ---------------------------------------------------------------------------
// Algebra.

template <class T>
Measure<T> mixture(const std::vector<std::pair<T, Measure<T>>>& comps) {
  require(!comps.empty(), ErrorKind::Precondition, "empty mixture");
  T s = 0;
  for (const auto& c : comps) s += c.first;
  if constexpr (std::is_same_v<T, Rational>) {
    require(s == 1, ErrorKind::WeightSum, "mixture weights must sum to 1");
  } else {
    require(std::abs(s - 1.0) <= std::ldexp(1.0, -40), ErrorKind::WeightSum, "mixture weights must sum to 1");
  }
  Measure<T> m;
  m.d = comps[0].second.d;
  bool any_sampled = false;
  for (const auto& [w, P] : comps) {
    require(P.d == m.d, ErrorKind::DimensionMismatch, "mixture components differ in dimension");
    any_sampled = any_sampled || P.sampled;
    for (std::size_t i = 0; i < P.size(); ++i) m.add(P.point_vec(i), w * P.weights[i]);
  }
  if (any_sampled) {
    m.sampled = true;
    return m;
  }
  return m.merged();
}

template <class T>
Measure<T> translate(const Measure<T>& P, const std::vector<T>& c) {
  require(c.size() == P.d, ErrorKind::DimensionMismatch, "translation dimension");
  Measure<T> m = P;
  for (std::size_t i = 0; i < P.size(); ++i)
    for (std::size_t k = 0; k < P.d; ++k) m.coords[i * P.d + k] += c[k];
  return m;
}

template <class T, class F>
Measure<T> map_through(const Measure<T>& P, F&& A) {
  Measure<T> m;
  m.sampled = P.sampled;
  for (std::size_t i = 0; i < P.size(); ++i) {
    std::vector<T> y = A(P.point_vec(i));
    if (i == 0) m.d = y.size();
    m.add(y, P.weights[i]);
  }
  if (P.size() == 0) m.d = P.d;
  return P.sampled ? m : m.merged();
}

template <class T>
std::complex<double> char_fn(const Measure<T>& P, const std::vector<double>& s) {
  require(s.size() == P.d, ErrorKind::DimensionMismatch, "frequency dimension");
  std::complex<double> acc = 0;
  for (std::size_t i = 0; i < P.size(); ++i) {
    double phase = 0;
    for (std::size_t k = 0; k < P.d; ++k) phase += s[k] * to_double(P.point(i)[k]);
    phase -= std::floor(phase);
    acc += to_double(P.weights[i]) * std::polar(1.0, 2 * M_PI * phase);
  }
  return acc;
}

// ---------------------------------------------------------------------------
// Capped Wasserstein-1 distance, ground cost min(1, |x - y|_2).

inline double capped_cost(const double* x, const double* y, std::size_t d) {
  double s = 0;
  for (std::size_t k = 0; k < d; ++k) s += (x[k] - y[k]) * (x[k] - y[k]);
  return std::min(1.0, std::sqrt(s));
}

namespace detail {

// Min-cost transport between two atomic measures of equal mass by successive
// shortest paths with potentials. Dense, O((n+m)^2) per augmentation.
inline double transport_ssp(const std::vector<double>& xs, std::vector<double> a, const std::vector<double>& ys,
                            std::vector<double> b, std::size_t d) {
  const std::size_t n = a.size(), m = b.size();
  if (n == 0 || m == 0) return 0;
  std::vector<double> cost(n * m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) cost[i * m + j] = capped_cost(&xs[i * d], &ys[j * d], d);
  std::vector<double> flow(n * m, 0.0);
  std::vector<double> pot(n + m, 0.0);
  const double eps = 1e-15;
  const double inf = std::numeric_limits<double>::infinity();
  double total = 0;
  double remaining = std::accumulate(a.begin(), a.end(), 0.0);
  double remaining_b = std::accumulate(b.begin(), b.end(), 0.0);
  remaining = std::min(remaining, remaining_b);
  // Source edges carry zero cost; potentials start at 0 and stay feasible.
  for (int iter = 0; remaining > eps && iter < 200'000; ++iter) {
    std::vector<double> dist(n + m, inf);
    std::vector<long> prev(n + m, -1);
    std::vector<char> done(n + m, 0);
    for (std::size_t i = 0; i < n; ++i)
      if (a[i] > eps) dist[i] = std::max(0.0, -pot[i]);
    while (true) {
      std::size_t u = n + m;
      double best = inf;
      for (std::size_t v = 0; v < n + m; ++v)
        if (!done[v] && dist[v] < best) {
          best = dist[v];
          u = v;
        }
      if (u == n + m) break;
      done[u] = 1;
      if (u < n) {
        for (std::size_t j = 0; j < m; ++j) {
          if (done[n + j]) continue;
          double nd = dist[u] + std::max(0.0, cost[u * m + j] + pot[u] - pot[n + j]);
          if (nd < dist[n + j]) {
            dist[n + j] = nd;
            prev[n + j] = static_cast<long>(u);
          }
        }
      } else {
        std::size_t j = u - n;
        for (std::size_t i = 0; i < n; ++i) {
          if (done[i] || flow[i * m + j] <= eps) continue;
          double nd = dist[u] + std::max(0.0, -cost[i * m + j] + pot[u] - pot[i]);
          if (nd < dist[i]) {
            dist[i] = nd;
            prev[i] = static_cast<long>(u);
          }
        }
      }
    }
    // Pick the cheapest reachable sink.
    std::size_t sink = n + m;
    double best = inf;
    for (std::size_t j = 0; j < m; ++j)
      if (b[j] > eps && dist[n + j] + pot[n + j] < best) {
        best = dist[n + j] + pot[n + j];
        sink = n + j;
      }
    if (sink == n + m) break;
    double reach = 0;
    for (std::size_t v = 0; v < n + m; ++v)
      if (dist[v] < inf) reach = std::max(reach, dist[v]);
    for (std::size_t v = 0; v < n + m; ++v) pot[v] += dist[v] < inf ? dist[v] : reach;
    // Bottleneck.
    double push = b[sink - n];
    std::size_t v = sink;
    while (prev[v] >= 0) {
      std::size_t u = static_cast<std::size_t>(prev[v]);
      if (u >= n) push = std::min(push, flow[v * m + (u - n)]);
      v = u;
    }
    push = std::min(push, a[v]);
    a[v] -= push;
    b[sink - n] -= push;
    v = sink;
    while (prev[v] >= 0) {
      std::size_t u = static_cast<std::size_t>(prev[v]);
      if (u < n) {
        flow[u * m + (v - n)] += push;
        total += push * cost[u * m + (v - n)];
      } else {
        flow[v * m + (u - n)] -= push;
        total -= push * cost[v * m + (u - n)];
      }
      v = u;
    }
    remaining -= push;
  }
  return total;
}

struct Residual {
  std::vector<double> xs, a, ys, b;
  double mass = 0;
};

// Cancel mass common to both measures at identical points.
template <class T>
Residual cancel_common(const Measure<T>& P, const Measure<T>& Q) {
  std::map<std::vector<T>, std::pair<T, T>> acc;
  for (std::size_t i = 0; i < P.size(); ++i) acc[P.point_vec(i)].first += P.weights[i];
  for (std::size_t i = 0; i < Q.size(); ++i) acc[Q.point_vec(i)].second += Q.weights[i];
  Residual r;
  for (const auto& [x, w] : acc) {
    T diff = w.first - w.second;
    if (diff > 0) {
      for (const auto& c : x) r.xs.push_back(to_double(c));
      r.a.push_back(to_double(diff));
      r.mass += to_double(diff);
    } else if (diff < 0) {
      for (const auto& c : x) r.ys.push_back(to_double(c));
      r.b.push_back(to_double(T(-diff)));
    }
  }
  return r;
}

// Reduce to at most k atoms: farthest-point centers, nearest-center assignment,
// weighted centroids. Returns the capped displacement cost of the reduction.
inline double reduce_atoms(const std::vector<double>& xs, const std::vector<double>& w, std::size_t d, std::size_t k,
                           std::vector<double>& cx, std::vector<double>& cw) {
  const std::size_t n = w.size();
  auto dist2 = [&](std::size_t i, const double* c) {
    double s = 0;
    for (std::size_t t = 0; t < d; ++t) s += (xs[i * d + t] - c[t]) * (xs[i * d + t] - c[t]);
    return s;
  };
  std::vector<std::size_t> centers{0};
  std::vector<double> best(n, std::numeric_limits<double>::infinity());
  std::vector<std::size_t> owner(n, 0);
  while (true) {
    std::size_t c = centers.size() - 1;
    const double* cp = &xs[centers[c] * d];
    std::size_t far = 0;
    for (std::size_t i = 0; i < n; ++i) {
      double d2 = dist2(i, cp);
      if (d2 < best[i]) best[i] = d2, owner[i] = c;
      if (best[i] > best[far]) far = i;
    }
    if (centers.size() >= k || best[far] == 0) break;
    centers.push_back(far);
  }
  cx.assign(centers.size() * d, 0.0);
  cw.assign(centers.size(), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    cw[owner[i]] += w[i];
    for (std::size_t t = 0; t < d; ++t) cx[owner[i] * d + t] += w[i] * xs[i * d + t];
  }
  for (std::size_t c = 0; c < cw.size(); ++c)
    for (std::size_t t = 0; t < d; ++t) cx[c * d + t] /= cw[c];
  double disp = 0;
  for (std::size_t i = 0; i < n; ++i) disp += w[i] * capped_cost(&xs[i * d], &cx[owner[i] * d], d);
  return disp;
}

inline double uncapped_w1_1d(const Residual& r) {
  std::vector<std::pair<double, double>> ev;
  for (std::size_t i = 0; i < r.a.size(); ++i) ev.push_back({r.xs[i], r.a[i]});
  for (std::size_t j = 0; j < r.b.size(); ++j) ev.push_back({r.ys[j], -r.b[j]});
  std::sort(ev.begin(), ev.end());
  double cdf = 0, total = 0;
  for (std::size_t i = 0; i + 1 < ev.size(); ++i) {
    cdf += ev[i].second;
    total += std::abs(cdf) * (ev[i + 1].first - ev[i].first);
  }
  return total;
}

}  // namespace detail

struct Distance {
  double value = 0;
  bool exact = true;  // false: value is an upper bound
};

constexpr std::size_t kExactTransportAtoms = 256;

template <class T>
Distance distance_full(const Measure<T>& P, const Measure<T>& Q) {
  require(P.d == Q.d, ErrorKind::DimensionMismatch, "distance between measures of different dimension");
  const std::size_t d = P.d;
  detail::Residual r = detail::cancel_common(P, Q);
  if (r.a.empty() || r.b.empty()) return {0.0, true};
  if (r.a.size() <= kExactTransportAtoms && r.b.size() <= kExactTransportAtoms) {
    return {detail::transport_ssp(r.xs, r.a, r.ys, r.b, d), true};
  }
  double best = r.mass;  // total variation of the residual, cost <= 1 per unit
  if (d == 1) best = std::min(best, detail::uncapped_w1_1d(r));
  std::vector<double> bx, bw, cx, cw;
  double dp = r.a.size() > kExactTransportAtoms ? detail::reduce_atoms(r.xs, r.a, d, kExactTransportAtoms, bx, bw)
                                                 : (bx = r.xs, bw = r.a, 0.0);
  double dq = r.b.size() > kExactTransportAtoms ? detail::reduce_atoms(r.ys, r.b, d, kExactTransportAtoms, cx, cw)
                                                 : (cx = r.ys, cw = r.b, 0.0);
  best = std::min(best, dp + dq + detail::transport_ssp(bx, bw, cx, cw, d));
  return {best, false};
}

template <class T>
double distance(const Measure<T>& P, const Measure<T>& Q) {
  return distance_full(P, Q).value;
}

// ---------------------------------------------------------------------------
// Convergence scan for (f_0^{(k_0 q_n)}, ..., f_0^{(k_{d-1} q_n)}).

struct ScanStep {
  int n = 0;
  BigInt q;
  SampledMeasure measure;
  double distance_to_previous = -1;
  bool distance_exact = true;
};

inline std::vector<CircleFn> birkhoff_fns(const RoofFunction& f0, const Rotation& rot,
                                          const std::vector<long long>& ks,
                                          std::vector<std::shared_ptr<PiecewiseFunction>>* keep = nullptr) {
  std::vector<CircleFn> fns;
  if (std::holds_alternative<CallableRoof>(f0)) {
    FastRoof fr(f0);
    u128 a = rot.fixed();
    for (long long k : ks) {
      fns.push_back([fr, a, k](u128 x) {
        double s = 0;
        for (long long j = 0; j < k; ++j, x += a) s += fr(x);
        return s;
      });
    }
    return fns;
  }
  for (long long k : ks) {
    auto pw = std::make_shared<PiecewiseFunction>(birkhoff_piecewise(f0, rot, k));
    if (keep) keep->push_back(pw);
    fns.push_back([pw](u128 x) { return pw->eval_fast(x); });
  }
  return fns;
}

inline std::vector<ScanStep> convergence_scan(const RoofFunction& f, const Rotation& rot,
                                              const std::vector<long long>& multipliers, int n_lo, int n_hi,
                                              std::size_t N, uint64_t seed = 1) {
  require(!multipliers.empty(), ErrorKind::Precondition, "need multipliers");
  for (long long k : multipliers) require(k >= 1, ErrorKind::Precondition, "multipliers must be positive");
  RoofFunction f0 = center(f).roof;
  std::vector<ScanStep> out;
  for (int n = n_lo; n <= n_hi; ++n) {
    ScanStep st;
    st.n = n;
    st.q = rot.q(n);
    std::vector<long long> ks;
    for (long long k : multipliers) ks.push_back(k * st.q.convert_to<long long>());
    st.measure = pushforward_sampled(birkhoff_fns(f0, rot, ks), N, seed);
    if (!out.empty()) {
      Distance dd = distance_full(out.back().measure, st.measure);
      st.distance_to_previous = dd.value;
      st.distance_exact = dd.exact;
    }
    out.push_back(std::move(st));
  }
  return out;
}

}  // namespace revlab
