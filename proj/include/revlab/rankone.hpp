#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "core.hpp"
#include "measures.hpp"

namespace revlab {

// Cut-and-stack rank-one towers. Subcolumn 1 occupies the lowest heights, its spacers
// sit directly above it, then subcolumn 2, and so on.

struct RankOneStage {
  long long r = 2;
  std::vector<long long> s;  // spacers over subcolumn i

  long long spacer_count() const {
    long long t = 0;
    for (long long x : s) t += x;
    return t;
  }
};

struct RankOneSpec {
  std::string name;
  std::vector<RankOneStage> stages;
  std::vector<int> special;  // stages n_k cut into r subcolumns and followed by a growth stage
  long long r = 0;

  void check() const {
    for (const auto& st : stages) {
      require(st.r >= 2, ErrorKind::Precondition, "cut count must be >= 2");
      require(static_cast<long long>(st.s.size()) == st.r, ErrorKind::Precondition, "spacer vector length differs from r");
      for (long long x : st.s) require(x >= 0, ErrorKind::Precondition, "negative spacer count");
    }
  }
};

inline RankOneStage upper_half_spacers(long long r) {
  RankOneStage st;
  st.r = r;
  st.s.assign(static_cast<std::size_t>(r), 0);
  for (long long i = r / 2 + 1; i <= r; ++i) st.s[static_cast<std::size_t>(i - 1)] = 1;
  return st;
}

// Stages alternate r cuts and R_k cuts, one spacer over each upper-half subcolumn;
// a final r stage closes the construction.
inline RankOneSpec chacon_preset(long long r, const std::vector<long long>& growth) {
  require(r >= 4 && r % 2 == 0, ErrorKind::Precondition, "r must be even and >= 4");
  for (std::size_t i = 0; i < growth.size(); ++i) {
    require(growth[i] >= 2, ErrorKind::Precondition, "growth entries must be >= 2");
    if (i > 0) require(growth[i] > growth[i - 1], ErrorKind::Precondition, "growth must increase");
  }
  RankOneSpec spec;
  spec.name = "chacon-type";
  spec.r = r;
  for (long long R : growth) {
    spec.special.push_back(static_cast<int>(spec.stages.size()));
    spec.stages.push_back(upper_half_spacers(r));
    spec.stages.push_back(upper_half_spacers(R));
  }
  spec.stages.push_back(upper_half_spacers(r));
  return spec;
}

inline RankOneSpec classical_chacon(std::size_t n_stages = 8) {
  RankOneSpec spec;
  spec.name = "classical-chacon";
  for (std::size_t i = 0; i < n_stages; ++i) spec.stages.push_back({3, {0, 1, 0}});
  return spec;
}

struct TowerStack {
  int depth = 0;
  std::vector<long long> q;                     // q_0 .. q_depth
  std::vector<std::vector<long long>> offsets;  // offsets[n][i] for subcolumn i+1 of stage n
  std::vector<std::vector<long long>> spacers;  // spacer heights of C_{n+1}
  std::vector<long long> r;
  std::vector<double> spacer_series;            // partial sums of (sum_i s_i)/q_{n+1}

  long long height(int n) const { return q.at(static_cast<std::size_t>(n)); }
};

constexpr long long kMaxTowerHeight = 10'000'000;

inline TowerStack build(const RankOneSpec& spec, int depth, long long max_height = kMaxTowerHeight) {
  spec.check();
  require(depth >= 0 && depth <= static_cast<int>(spec.stages.size()), ErrorKind::Precondition,
          "depth exceeds the stage count");
  TowerStack t;
  t.depth = depth;
  t.q.push_back(1);
  double series = 0;
  for (int n = 0; n < depth; ++n) {
    const auto& st = spec.stages[static_cast<std::size_t>(n)];
    long long qn = t.q.back();
    std::vector<long long> off, sp;
    long long h = 0;
    for (long long i = 0; i < st.r; ++i) {
      off.push_back(h);
      h += qn;
      for (long long j = 0; j < st.s[static_cast<std::size_t>(i)]; ++j) sp.push_back(h++);
    }
    require(h <= max_height, ErrorKind::MemoryBudget, "tower height exceeds the desk budget");
    series += static_cast<double>(st.spacer_count()) / static_cast<double>(h);
    t.q.push_back(h);
    t.offsets.push_back(std::move(off));
    t.spacers.push_back(std::move(sp));
    t.r.push_back(st.r);
    t.spacer_series.push_back(series);
  }
  return t;
}

struct LevelSet {
  int stage = 0;
  std::vector<long long> levels;
};

// Heights in C_m of the levels of C_n.
inline std::vector<long long> decompose(const TowerStack& t, const LevelSet& A, int m,
                                        std::size_t max_size = 50'000'000) {
  require(A.stage >= 0 && m >= A.stage && m <= t.depth, ErrorKind::Precondition, "target stage out of range");
  std::vector<long long> H = A.levels;
  for (long long h : H)
    require(h >= 0 && h < t.height(A.stage), ErrorKind::Precondition, "level index out of range");
  std::sort(H.begin(), H.end());
  H.erase(std::unique(H.begin(), H.end()), H.end());
  for (int n = A.stage; n < m; ++n) {
    const auto& off = t.offsets[static_cast<std::size_t>(n)];
    require(H.size() * off.size() <= max_size, ErrorKind::MemoryBudget, "height set too large");
    std::vector<long long> next;
    next.reserve(H.size() * off.size());
    for (long long o : off)
      for (long long h : H) next.push_back(o + h);
    H.swap(next);  // already sorted: subcolumns are stacked in increasing order
  }
  return H;
}

inline std::vector<long long> decompose(const TowerStack& t, int n, long long level, int m) {
  return decompose(t, LevelSet{n, {level}}, m);
}

struct CorrelationResult {
  Rational value;        // units of one level of C_m
  Rational error_bound;  // same units
  Rational normalizer;   // mu(A) in the same units

  double probability() const { return to_double(value / normalizer); }
  double error() const { return to_double(error_bound / normalizer); }
};

inline bool contains_sorted(const std::vector<long long>& H, long long x) {
  return std::binary_search(H.begin(), H.end(), x);
}

// mu(T^{-a} A  ∩  T^{-b} B  ∩  C) for heights already decomposed into C_m.
inline CorrelationResult correlation_heights(long long a, long long b, const std::vector<long long>& HA,
                                             const std::vector<long long>& HB, const std::vector<long long>& HC,
                                             long long qm) {
  require(a >= 0 && b >= 0, ErrorKind::Precondition, "shifts must be non-negative");
  long long s = std::max(a, b);
  require(s < qm, ErrorKind::DepthInsufficient, "shift reaches the tower height");
  long long count = 0, boundary = 0;
  for (long long h : HC) {
    if (h + s >= qm) {
      ++boundary;
      continue;
    }
    if (contains_sorted(HA, h + a) && contains_sorted(HB, h + b)) ++count;
  }
  return {Rational(count), Rational(boundary), Rational(static_cast<long long>(HA.size()))};
}

inline CorrelationResult correlation(const TowerStack& t, long long a, long long b, const LevelSet& A,
                                     const LevelSet& B, const LevelSet& C, int m) {
  require(std::max(a, b) < t.height(m), ErrorKind::DepthInsufficient, "max(a, b) >= q_m");
  return correlation_heights(a, b, decompose(t, A, m), decompose(t, B, m), decompose(t, C, m), t.height(m));
}

// Entry (a, b) is mu(A ∩ T^{-(2q+a)} A ∩ T^{-(q+b)} A) / mu(A), so the table is keyed by
// the same coordinates as the limit joining measure.
struct TableEntry {
  long long a = 0, b = 0;
  double value = 0;
  double error = 0;
  Rational exact_value, exact_error;
};

struct JoiningTable {
  int stage = 0;  // n_k
  long long q = 0;
  int depth = 0;
  LevelSet A;
  long long window = 0;
  std::vector<TableEntry> entries;

  const TableEntry& at(long long a, long long b) const {
    for (const auto& e : entries)
      if (e.a == a && e.b == b) return e;
    throw Error(ErrorKind::Precondition, "entry outside the window");
  }
  Rational total() const {
    Rational s = 0;
    for (const auto& e : entries) s += e.exact_value;
    return s;
  }
  Rational max_error() const {
    Rational s = 0;
    for (const auto& e : entries) s = std::max(s, e.exact_error);
    return s;
  }
};

inline JoiningTable joining_table(const TowerStack& t, int stage, const LevelSet& A, long long window, int depth) {
  require(stage < depth && depth <= t.depth, ErrorKind::DepthInsufficient, "depth must exceed the special stage");
  require(A.stage <= stage, ErrorKind::Precondition, "A must be a level set of an earlier stage");
  JoiningTable tab;
  tab.stage = stage;
  tab.q = t.height(stage);
  tab.depth = depth;
  tab.A = A;
  tab.window = window;
  std::vector<long long> H = decompose(t, A, depth);
  long long qm = t.height(depth);
  for (long long a = 0; a <= window; ++a) {
    for (long long b = 0; b <= window; ++b) {
      CorrelationResult c = correlation_heights(2 * tab.q + a, tab.q + b, H, H, H, qm);
      TableEntry e;
      e.a = a;
      e.b = b;
      e.exact_value = c.value / c.normalizer;
      e.exact_error = c.error_bound / c.normalizer;
      e.value = to_double(e.exact_value);
      e.error = to_double(e.exact_error);
      tab.entries.push_back(e);
    }
  }
  return tab;
}

inline ExactMeasure table_measure(const JoiningTable& tab, bool normalize = true) {
  ExactMeasure m;
  m.d = 2;
  Rational total = tab.total();
  require(total > 0, ErrorKind::WeightSum, "empty joining table");
  for (const auto& e : tab.entries) {
    if (e.exact_value == 0) continue;
    m.add({Rational(e.a), Rational(e.b)}, normalize ? Rational(e.exact_value / total) : e.exact_value);
  }
  return m.merged();
}

// Limit joining atoms in (a, b) coordinates.
inline ExactMeasure limit_atoms(long long r) {
  require(r >= 4 && r % 2 == 0, ErrorKind::Precondition, "r must be even and >= 4");
  Rational R(r);
  ExactMeasure m;
  m.d = 2;
  auto add = [&](long long a, long long b, const Rational& w) { m.add({Rational(a), Rational(b)}, w); };
  add(0, 0, Rational(r - 2) / (2 * R));
  add(1, 1, Rational(1) / (2 * R));
  add(2, 2, Rational(1) / (2 * R));
  add(1, 0, Rational(1) / R);
  add(2, 1, Rational(r - 3) / (2 * R));
  add(3, 1, Rational(1) / (2 * R));
  return m;
}

}  // namespace revlab
