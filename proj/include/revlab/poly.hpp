#pragma once

#include <vector>

#include "core.hpp"

namespace revlab {

// Dense univariate polynomials, coefficient i multiplies x^i.
template <class T>
using Poly = std::vector<T>;

template <class T>
void poly_trim(Poly<T>& p) {
  while (p.size() > 1 && p.back() == 0) p.pop_back();
  if (p.empty()) p.push_back(T(0));
}

template <class T>
T poly_eval(const Poly<T>& p, const T& x) {
  T acc = 0;
  for (std::size_t i = p.size(); i-- > 0;) acc = acc * x + p[i];
  return acc;
}

template <class T>
Poly<T> poly_derivative(const Poly<T>& p) {
  Poly<T> d;
  for (std::size_t i = 1; i < p.size(); ++i) d.push_back(p[i] * T(static_cast<long>(i)));
  if (d.empty()) d.push_back(T(0));
  return d;
}

// Antiderivative vanishing at 0.
template <class T>
Poly<T> poly_integral(const Poly<T>& p) {
  Poly<T> r{T(0)};
  for (std::size_t i = 0; i < p.size(); ++i) r.push_back(p[i] / T(static_cast<long>(i + 1)));
  return r;
}

// q(t) = p(t + s).
template <class T>
Poly<T> poly_shift(const Poly<T>& p, const T& s) {
  std::size_t n = p.size();
  Poly<T> r(n, T(0));
  for (std::size_t i = 0; i < n; ++i) {
    // (t + s)^i = sum_m C(i,m) s^m t^(i-m)
    BigInt c = 1;
    T spow = 1;
    for (std::size_t m = 0; m <= i; ++m) {
      r[i - m] += p[i] * T(c) * spow;
      c = c * (i - m) / (m + 1);
      spow *= s;
    }
  }
  return r;
}

template <class T>
Poly<T> poly_scale_arg(const Poly<T>& p, const T& a) {
  Poly<T> r = p;
  T apow = 1;
  for (auto& c : r) {
    c *= apow;
    apow *= a;
  }
  return r;
}

template <class T>
Poly<T> poly_add(const Poly<T>& a, const Poly<T>& b) {
  Poly<T> r(std::max(a.size(), b.size()), T(0));
  for (std::size_t i = 0; i < a.size(); ++i) r[i] += a[i];
  for (std::size_t i = 0; i < b.size(); ++i) r[i] += b[i];
  return r;
}

template <class T>
Poly<T> poly_mul(const Poly<T>& a, const Poly<T>& b) {
  Poly<T> r(a.size() + b.size() - 1, T(0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) r[i + j] += a[i] * b[j];
  return r;
}

template <class T>
T poly_integrate_between(const Poly<T>& p, const T& a, const T& b) {
  Poly<T> I = poly_integral(p);
  return poly_eval(I, b) - poly_eval(I, a);
}

inline Poly<double> poly_to_double(const Poly<BigFloat>& p) {
  Poly<double> r;
  for (const auto& c : p) r.push_back(to_double(c));
  return r;
}

// Real roots of p strictly inside (a, b), by recursion on the derivative.
inline std::vector<double> poly_roots_in(const Poly<double>& p0, double a, double b) {
  Poly<double> p = p0;
  while (p.size() > 1 && p.back() == 0) p.pop_back();
  std::size_t deg = p.size() - 1;
  std::vector<double> out;
  if (deg == 0) return out;
  if (deg == 1) {
    double x = -p[0] / p[1];
    if (x > a && x < b) out.push_back(x);
    return out;
  }
  std::vector<double> pts{a};
  for (double c : poly_roots_in(poly_derivative(p), a, b)) pts.push_back(c);
  pts.push_back(b);
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    double u = pts[i], v = pts[i + 1];
    double fu = poly_eval(p, u), fv = poly_eval(p, v);
    if (fu == 0 && u > a) {
      out.push_back(u);
      continue;
    }
    if ((fu < 0) == (fv < 0) || fv == 0) continue;
    for (int it = 0; it < 200 && v - u > 0; ++it) {
      double m = 0.5 * (u + v);
      if (m <= u || m >= v) break;
      double fm = poly_eval(p, m);
      if ((fm < 0) == (fu < 0)) {
        u = m;
        fu = fm;
      } else {
        v = m;
      }
    }
    out.push_back(0.5 * (u + v));
  }
  return out;
}

}  // namespace revlab
