#include "test_support.hpp"

#include "revlab/reversibility.hpp"

using namespace revlab;

namespace {

using Pt = std::vector<Rational>;

Pt random_vec(std::size_t n) {
  Pt v;
  for (std::size_t i = 0; i < n; ++i) v.push_back(oracle::random_rational(97));
  return v;
}

ExactMeasure random_atomic(std::size_t d, int max_atoms = 6) {
  ExactMeasure m;
  m.d = d;
  int n = static_cast<int>(oracle::uniform(1, max_atoms));
  for (int i = 0; i < n; ++i) m.add(random_vec(d), Rational(1, n));
  return m.merged();
}

ExactMeasure quarter(const Rational& t0, const Rational& u0) {
  ExactMeasure m;
  m.d = 2;
  for (const auto& x : {Pt{t0 + u0, t0}, Pt{Rational(0), u0}, Pt{-t0 - u0, -u0}, Pt{Rational(0), -t0}})
    m.add(x, Rational(1, 4));
  return m;
}

}  // namespace

TEST_CASE("apply_symmetry") {
  auto t2 = apply_symmetry(SymmetryMap::theta2(), Pt{Rational(1), Rational(3, 10)});
  CHECK(t2 == Pt{Rational(1), Rational(7, 10)});
  Pt v{Rational(5), Rational(1), Rational(2), Rational(3)};
  CHECK(apply_symmetry(SymmetryMap::theta_d(4), v) == Pt{Rational(5), Rational(2), Rational(3), Rational(4)});
  auto t3 = apply_symmetry(SymmetryMap::theta3(), Pt{Rational(1), Rational(2), Rational(7)});
  CHECK(t3 == Pt{Rational(1), Rational(-6), Rational(-1)});
  try {
    apply_symmetry(SymmetryMap::theta3(), Pt{Rational(1)});
    FAIL("expected DimensionMismatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::DimensionMismatch);
  }
  CHECK(SymmetryMap::bar_theta(3).domain_dim() == 7);
}

TEST_CASE("property: symmetry maps are involutions") {
  int failures = 0;
  std::vector<SymmetryMap> maps{SymmetryMap::theta2(), SymmetryMap::theta3(), SymmetryMap::theta_d(4),
                                SymmetryMap::theta_d(6), SymmetryMap::bar_theta(2), SymmetryMap::bar_theta(3),
                                SymmetryMap::bar_theta(4)};
  for (const auto& m : maps) {
    for (int c = 0; c < oracle::kCases; ++c) {
      Pt v = random_vec(m.domain_dim());
      if (apply_symmetry(m, apply_symmetry(m, v)) != v) ++failures;
    }
  }
  CHECK(failures == 0);
}

TEST_CASE("property: theta2 fixed points are the line u = t/2") {
  int failures = 0;
  for (int c = 0; c < oracle::kCases; ++c) {
    Rational t = oracle::random_rational(31);
    Rational u = oracle::uniform(0, 1) ? Rational(t / 2) : oracle::random_rational(31);
    bool fixed = apply_symmetry(SymmetryMap::theta2(), Pt{t, u}) == Pt{t, u};
    if (fixed != (u == t / 2)) ++failures;
  }
  CHECK(failures == 0);
}

TEST_CASE("fs_vector and rho") {
  Rational a0(3), a1(5);
  auto fs = fs_vector(Pt{a0, a1});
  CHECK(fs == Pt{a0, a1, a0 + a1});
  CHECK(fs_vector(Pt(4, Rational(0))) == Pt(15, Rational(0)));
  auto f3 = fs_vector(Pt{Rational(1), Rational(2), Rational(4)});
  Pt sorted = f3;
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted == Pt{1, 2, 3, 4, 5, 6, 7});
  CHECK(f3 == Pt{1, 2, 3, 4, 5, 6, 7});  // position e - 1 holds the sum for bitmask e

  // rho is the FS vector of (q, ..., q) read through x_{d - |e|}.
  Pt x{Rational(10), Rational(20), Rational(30)};
  auto r = rho_apply(x);
  CHECK(r[0] == 30);  // |e| = 1
  CHECK(r[2] == 20);  // |e| = 2
  CHECK(r[6] == 10);  // full mask
}

TEST_CASE("property: rho intertwines theta and bar theta") {
  int failures = 0;
  for (std::size_t d : {2u, 3u, 4u, 5u}) {
    for (int c = 0; c < oracle::kCases; ++c) {
      Pt x = random_vec(d);
      if (rho_apply(theta_apply(x)) != bar_theta_apply(rho_apply(x), d)) ++failures;
    }
  }
  CHECK(failures == 0);
}

TEST_CASE("property: line maps satisfy theta R_c A = R_{-c} A B_c for odd r") {
  for (std::size_t r : {1u, 3u, 5u}) {
    int failures = 0;
    for (int c = 0; c < oracle::kCases; ++c) {
      Pt x = random_vec(r);
      Rational cc = oracle::random_rational(97);
      Pt lhs = theta_apply(line_R(line_A(x), cc));
      Pt rhs = line_R(line_A(line_B(x, cc)), Rational(-cc));
      if (lhs != rhs) ++failures;
    }
    CHECK(failures == 0);
  }
  // Even r: the identity breaks for generic inputs.
  int holds = 0;
  for (int c = 0; c < oracle::kCases; ++c) {
    Pt x = random_vec(2);
    Rational cc = oracle::random_rational(97);
    if (theta_apply(line_R(line_A(x), cc)) == line_R(line_A(line_B(x, cc)), Rational(-cc))) ++holds;
  }
  CHECK(holds < oracle::kCases / 100);
}

TEST_CASE("theta_invariance and atom_asymmetry") {
  ExactMeasure pair;
  pair.d = 2;
  pair.add({Rational(0), Rational(2, 5)}, Rational(1, 2));
  pair.add({Rational(0), Rational(-2, 5)}, Rational(1, 2));
  auto v = theta_invariance(pair, SymmetryMap::theta2());
  CHECK(v.distance == 0);
  CHECK(v.label == VerdictLabel::Symmetric);
  CHECK(atom_asymmetry(pair, SymmetryMap::theta2()).empty());

  ExactMeasure Q = quarter(Rational(3, 10), Rational(7, 10));
  auto vq = theta_invariance(Q, SymmetryMap::theta2());
  CHECK(vq.distance > 0.05);
  CHECK(vq.label == VerdictLabel::Asymmetric);
  auto wit = atom_asymmetry(Q, SymmetryMap::theta2());
  bool has = false;
  for (const auto& w : wit) has = has || (w.point == std::vector<double>{0.0, 0.7} && w.image_weight == 0);
  CHECK(has);
  CHECK(Q.weight_at({Rational(0), Rational(-7, 10)}) == 0);

  CHECK(atom_asymmetry(ExactMeasure::dirac({Rational(0), Rational(0)}), SymmetryMap::theta2()).empty());
  CHECK(std::string(verdict_name(VerdictLabel::Inconclusive)).size() > 0);
  CHECK(classify(0.03, 0.02, 0.05) == VerdictLabel::Inconclusive);
}

TEST_CASE("property: symmetrized measures are invariant") {
  int failures = 0;
  std::vector<SymmetryMap> maps{SymmetryMap::theta2(), SymmetryMap::theta3(), SymmetryMap::theta_d(4),
                                SymmetryMap::bar_theta(2)};
  for (int c = 0; c < oracle::kCases; ++c) {
    const auto& m = maps[static_cast<std::size_t>(c) % maps.size()];
    ExactMeasure P = random_atomic(m.domain_dim());
    auto S = symmetrize(P, m);
    auto v = theta_invariance(S, m);
    if (v.label != VerdictLabel::Symmetric || v.distance > std::ldexp(1.0, -30) || !v.witnesses.empty()) ++failures;
  }
  CHECK(failures == 0);
}

TEST_CASE("char_symmetry_test") {
  auto grid = integer_grid(2);
  CHECK(char_symmetry_test(ExactMeasure::dirac({Rational(0), Rational(0), Rational(0)}), grid) == 0);

  // The identity follows from s . theta3(x) = (a+b+c) t - c u - b v.
  int failures = 0;
  for (int c = 0; c < oracle::kCases; ++c) {
    ExactMeasure S = symmetrize(random_atomic(3), SymmetryMap::theta3());
    if (char_symmetry_test(S, grid) > std::ldexp(1.0, -30)) ++failures;
  }
  CHECK(failures == 0);

  // Five-pattern style triple measure with generic a, b, c is not invariant.
  Rational a(1, 5), b(1, 2), cc(9, 10);
  ExactMeasure T;
  T.d = 3;
  for (const auto& x : {Pt{a + b, a, b}, Pt{b + cc, b, cc}, Pt{Rational(0), b, b}, Pt{-a - b, -b, -a},
                        Pt{-b - cc, -cc, -b}})
    T.add(x, Rational(1, 5));
  CHECK(theta_invariance(T, SymmetryMap::theta3()).label == VerdictLabel::Asymmetric);
  // Integer frequencies only see atoms modulo Z^3; use an incommensurate grid.
  std::vector<std::array<double, 3>> fine;
  for (const auto& g : grid) fine.push_back({0.37 * g[0], 0.37 * g[1], 0.37 * g[2]});
  CHECK(char_symmetry_test(T, fine) > 1e-3);
  CHECK_THROWS_AS(char_symmetry_test(ExactMeasure::dirac({Rational(0)}), grid), Error);
}

TEST_CASE("affine_jom_test") {
  PartialQuotients pq;
  pq.a.assign(40, BigInt(3));
  Rotation r = synthesize(pq, 256);
  auto rows = affine_jom_test(PLRoof::affine(Rational(1)), r, 6, 12, 256);
  REQUIRE(rows.size() == 7);
  for (const auto& row : rows) {
    CHECK(std::abs(row.modulus - 1) < std::ldexp(1.0, -30));
    CHECK(std::abs(row.statistic - 0.916025) < 1e-3);
    CHECK(!row.degenerate);
  }
  auto deg = affine_jom_test(PLRoof{{}, Rational(2)}, r, 6, 6, 64);
  CHECK(deg[0].degenerate);
  CHECK(std::abs(deg[0].modulus - 1) < 1e-12);
}

TEST_CASE("line_support_decompose") {
  auto one = line_support_decompose(ExactMeasure::dirac({Rational(11, 10), Rational(3, 10)}), 1e-9);
  REQUIRE(one.clusters.size() == 1);
  CHECK(std::abs(one.clusters[0].c - 0.5) < 1e-15);
  CHECK(one.clusters[0].mass == 1);

  // Residuals x0 - 2 x1 of the quarter atoms: u0 - t0 twice, -2 u0, t0.
  Rational t0(3, 10), u0(7, 10);
  auto q = line_support_decompose(quarter(t0, u0), 1e-9);
  std::map<double, double> want{{to_double(Rational(u0 - t0)), 0.5}, {to_double(Rational(-2 * u0)), 0.25},
                                {to_double(Rational(2 * t0)), 0.25}};
  REQUIRE(q.clusters.size() == 3);
  for (const auto& c : q.clusters) {
    bool hit = false;
    for (const auto& [x, m] : want) hit = hit || (std::abs(c.c - x) < 1e-12 && std::abs(c.mass - m) < 1e-12);
    CHECK(hit);
  }

  // A followed by R_c, r = 3.
  ExactMeasure P;
  P.d = 4;
  Rational cc(-2, 7);
  for (int i = 0; i < 20; ++i) P.add(line_R(line_A(random_vec(3)), cc), Rational(1, 20));
  auto l3 = line_support_decompose(P, 1e-9);
  REQUIRE(l3.clusters.size() == 1);
  CHECK(std::abs(l3.clusters[0].c - to_double(cc)) < 1e-12);
  CHECK(std::abs(l3.clusters[0].mass - 1) < 1e-12);
  CHECK_THROWS_AS(line_support_decompose(ExactMeasure::dirac({Rational(0), Rational(0), Rational(0)}), 0.1), Error);
}
