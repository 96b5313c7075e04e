#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "revlab/aaccp.hpp"
#include "revlab/measures.hpp"
#include "revlab/rankone.hpp"
#include "revlab/reversibility.hpp"
#include "revlab/roofs.hpp"
#include "revlab/rotations.hpp"
#include "revlab/selfsim.hpp"

namespace revlab::cli {

using json = nlohmann::ordered_json;

constexpr const char* kVersion = "0.3.0";
constexpr const char* kPrecisionEnv = "REVLAB_PRECISION_BITS";
constexpr unsigned kFallbackPrecision = 256;

inline unsigned default_precision() {
  if (const char* v = std::getenv(kPrecisionEnv)) {
    char* end = nullptr;
    unsigned long b = std::strtoul(v, &end, 10);
    require(end && *end == 0 && b >= 64 && b <= 65536, ErrorKind::Config,
            std::string(kPrecisionEnv) + " must be an integer in [64, 65536]");
    return static_cast<unsigned>(b);
  }
  return kFallbackPrecision;
}

// ---------------------------------------------------------------------------
// Configuration: flat key = value text, '#' comments, [section] headers ignored.

struct ExperimentConfig {
  std::string kind;
  std::map<std::string, std::string> values;  // every key explicit after parsing

  std::string field(const std::string& key) const { return kind + "." + key; }

  const std::string& raw(const std::string& key) const {
    auto it = values.find(key);
    if (it == values.end()) throw Error(ErrorKind::Config, "missing field " + field(key));
    return it->second;
  }

  std::string str(const std::string& key) const { return raw(key); }

  long long integer(const std::string& key) const {
    const std::string& v = raw(key);
    try {
      std::size_t pos = 0;
      long long x = std::stoll(v, &pos);
      if (pos == v.size()) return x;
    } catch (const std::exception&) {
    }
    throw Error(ErrorKind::Config, "field " + field(key) + " must be an integer, got '" + v + "'");
  }

  Rational rational(const std::string& key) const {
    try {
      return parse_rational(raw(key));
    } catch (const Error&) {
      throw;
    } catch (const std::exception&) {
      throw Error(ErrorKind::Config, "field " + field(key) + " must be a number, got '" + raw(key) + "'");
    }
  }

  bool boolean(const std::string& key) const {
    const std::string& v = raw(key);
    if (v == "true") return true;
    if (v == "false") return false;
    throw Error(ErrorKind::Config, "field " + field(key) + " must be true or false");
  }

  std::vector<std::string> list(const std::string& key) const {
    std::vector<std::string> out;
    std::stringstream ss(raw(key));
    std::string item;
    while (std::getline(ss, item, ',')) {
      auto b = item.find_first_not_of(" \t");
      auto e = item.find_last_not_of(" \t");
      if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
    }
    return out;
  }

  std::vector<long long> int_list(const std::string& key) const {
    std::vector<long long> out;
    for (const auto& s : list(key)) {
      try {
        std::size_t pos = 0;
        long long x = std::stoll(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        out.push_back(x);
      } catch (const std::exception&) {
        throw Error(ErrorKind::Config, "field " + field(key) + " must be a list of integers");
      }
    }
    return out;
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::string unquote(std::string v) {
  v = trim(v);
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') return v.substr(1, v.size() - 2);
  if (v.size() >= 2 && v.front() == '[' && v.back() == ']') {
    std::string inner = v.substr(1, v.size() - 2), out;
    for (char c : inner)
      if (c != '"') out += c;
    return trim(out);
  }
  return v;
}

inline bool sampled_kind(const std::string& k) { return k == "vonneumann" || k == "affine-jom" || k == "polyroof"; }

inline const std::vector<std::string>& kinds() {
  static const std::vector<std::string> k{"cf-scan", "vonneumann", "affine-jom", "polyroof",
                                          "aaccp",   "rankone",    "selfsim"};
  return k;
}

inline std::map<std::string, std::string> defaults(const std::string& kind) {
  std::map<std::string, std::string> d{
      {"precision_bits", std::to_string(default_precision())}, {"out", ""}, {"csv", ""}};
  auto rotation = [&](const std::string& src, const std::string& q, const std::string& rep) {
    d["rotation"] = src;
    d["quotients"] = q;
    d["quotient_repeat"] = rep;
    d["decimal"] = "";
  };
  if (kind == "cf-scan") {
    rotation("golden", "", "1");
    d["n_lo"] = "1";
    d["n_hi"] = "20";
    d["statistic"] = "qnorm";
    d["r"] = "1";
  } else if (kind == "vonneumann") {
    rotation("golden", "", "1");
    d["jumps"] = "0:1";
    d["constant"] = "1";
    d["partition_n"] = "6";
    d["samples"] = "1000";
    d["multipliers"] = "2, 1";
    d["n_lo"] = "8";
    d["n_hi"] = "16";
    d["N"] = "16384";
    d["kd_max"] = "20";
  } else if (kind == "affine-jom") {
    rotation("quotients", "3", "40");
    d["constant"] = "1";
    d["n_lo"] = "6";
    d["n_hi"] = "12";
    d["N"] = "1024";
  } else if (kind == "polyroof") {
    d["r"] = "1";
    d["beta"] = "0.37";
    d["margin"] = "0.1";
    d["kappa"] = "0.2";
    d["cf_depth"] = "4";
    d["n"] = "2";
    d["N"] = "65536";
    d["radius"] = "0.05";
  } else if (kind == "aaccp") {
    d["pattern"] = "four";
    d["t0"] = "0.3";
    d["u0"] = "0.7";
    d["a"] = "0.2";
    d["b"] = "0.5";
    d["c"] = "0.9";
    d["ratio_b"] = "2";
    d["M"] = "8, 32, 128";
    d["A"] = "2";
    d["windows"] = "2, 1";
  } else if (kind == "rankone") {
    d["preset"] = "chacon-type";
    d["r"] = "4";
    d["growth"] = "6, 10, 14";
    d["stage"] = "4";
    d["depth"] = "7";
    d["window"] = "4";
    d["level_stage"] = "1";
    d["levels"] = "3";
  } else if (kind == "selfsim") {
    rotation("golden", "", "1");
    d["bound"] = "3";
    d["include_trivial"] = "false";
  }
  return d;
}

}  // namespace detail

// Parse key = value text. Unknown keys are errors; absent keys take their declared defaults.
inline ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig c;
  std::map<std::string, std::string> given;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty() || line.front() == '[') continue;
    auto eq = line.find('=');
    require(eq != std::string::npos, ErrorKind::Config, "line " + std::to_string(lineno) + ": expected key = value");
    given[detail::trim(line.substr(0, eq))] = detail::unquote(line.substr(eq + 1));
  }
  auto k = given.find("kind");
  require(k != given.end(), ErrorKind::Config, "missing field kind");
  c.kind = k->second;
  given.erase(k);
  const auto& ks = detail::kinds();
  require(std::find(ks.begin(), ks.end(), c.kind) != ks.end(), ErrorKind::Config, "unknown kind '" + c.kind + "'");
  c.values = detail::defaults(c.kind);
  for (const auto& [key, v] : given) {
    bool known = c.values.count(key) || (key == "seed" && detail::sampled_kind(c.kind));
    require(known, ErrorKind::Config, "unknown field " + c.kind + "." + key);
    c.values[key] = v;
  }
  return c;
}

inline ExperimentConfig default_config(const std::string& kind) { return parse_config("kind = \"" + kind + "\"\n"); }

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::Config, "cannot read config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

inline void validate_config(const ExperimentConfig& c) {
  if (detail::sampled_kind(c.kind)) {
    require(c.values.count("seed") > 0, ErrorKind::Config, "missing field " + c.field("seed") + " (required for sampled experiments)");
    require(c.integer("seed") >= 0, ErrorKind::Config, "field " + c.field("seed") + " must be non-negative");
  }
  long long bits = c.integer("precision_bits");
  require(bits >= 64 && bits <= 65536, ErrorKind::Config, "field " + c.field("precision_bits") + " out of range");
}

// ---------------------------------------------------------------------------
// Number formatting: decimal strings only, so output bytes do not depend on float printing.

inline std::string dec(const Rational& q, unsigned bits) { return to_decimal(q, static_cast<int>(bits_to_digits10(bits))); }

inline std::string dec(const BigFloat& v, unsigned bits) {
  PrecisionScope scope(bits);
  return to_decimal(v, static_cast<int>(bits_to_digits10(bits)));
}

inline std::string dec(double v) { return to_decimal(v); }

template <class T>
json measure_json(const Measure<T>& P, unsigned bits) {
  json atoms = json::array();
  for (std::size_t i = 0; i < P.size(); ++i) {
    json pt = json::array();
    for (std::size_t k = 0; k < P.d; ++k) {
      if constexpr (std::is_same_v<T, Rational>) pt.push_back(dec(P.point(i)[k], bits));
      else pt.push_back(dec(P.point(i)[k]));
    }
    json a;
    a["point"] = pt;
    if constexpr (std::is_same_v<T, Rational>) {
      a["weight"] = dec(P.weights[i], bits);
      a["weight_exact"] = to_string(P.weights[i]);
    } else {
      a["weight"] = dec(P.weights[i]);
    }
    atoms.push_back(a);
  }
  return atoms;
}

inline json verdict_json(const Verdict& v) {
  json j;
  j["label"] = verdict_name(v.label);
  j["distance"] = dec(v.distance);
  j["distance_exact"] = v.distance_exact;
  j["tau_lo"] = dec(v.tau_lo);
  j["tau_hi"] = dec(v.tau_hi);
  j["evidence"] = "numerical evidence";
  json w = json::array();
  for (const auto& x : v.witnesses) {
    json p = json::array();
    for (double c : x.point) p.push_back(dec(c));
    w.push_back({{"point", p}, {"weight", dec(x.weight)}, {"image_weight", dec(x.image_weight)}});
  }
  j["witnesses"] = w;
  return j;
}

inline Rotation make_rotation(const ExperimentConfig& c, unsigned bits) {
  const std::string src = c.str("rotation");
  if (src == "golden") return golden(bits);
  if (src == "quotients") {
    auto q = c.int_list("quotients");
    long long rep = c.integer("quotient_repeat");
    require(!q.empty(), ErrorKind::Config, "field " + c.field("quotients") + " is empty");
    require(rep >= 1, ErrorKind::Config, "field " + c.field("quotient_repeat") + " must be >= 1");
    PartialQuotients pq;
    for (long long i = 0; i < rep; ++i)
      for (long long a : q) {
        require(a >= 1, ErrorKind::Config, "field " + c.field("quotients") + " must be positive");
        pq.a.emplace_back(a);
      }
    return synthesize(pq, bits);
  }
  if (src == "decimal") {
    PrecisionScope scope(bits);
    BigFloat v;
    try {
      v = BigFloat(c.str("decimal"));
    } catch (const std::exception&) {
      throw Error(ErrorKind::Config, "field " + c.field("decimal") + " is not a decimal number");
    }
    return Rotation::from_value(v);
  }
  throw Error(ErrorKind::Config, "field " + c.field("rotation") + " must be golden, quotients or decimal");
}

inline PLRoof make_pl_roof(const ExperimentConfig& c) {
  PLRoof f;
  f.constant = c.rational("constant");
  for (const auto& s : c.list("jumps")) {
    auto colon = s.find(':');
    require(colon != std::string::npos, ErrorKind::Config, "field " + c.field("jumps") + " entries must be beta:d");
    f.jumps.push_back({parse_rational(s.substr(0, colon)), parse_rational(s.substr(colon + 1))});
  }
  return f;
}

struct RunOutput {
  json bundle;
  std::vector<std::vector<std::string>> csv;  // first row is the header
};

// ---------------------------------------------------------------------------
// Experiments.

namespace detail {

inline json run_cf_scan(const ExperimentConfig& c, unsigned bits, RunOutput& out) {
  Rotation rot = make_rotation(c, bits);
  int lo = static_cast<int>(c.integer("n_lo")), hi = static_cast<int>(c.integer("n_hi"));
  std::string st = c.str("statistic");
  ScanKind kind = st == "qnorm" ? ScanKind::QNorm : st == "prodnext" ? ScanKind::ProdNext : ScanKind::Power;
  require(st == "qnorm" || st == "prodnext" || st == "power", ErrorKind::Config,
          "field " + c.field("statistic") + " must be qnorm, prodnext or power");
  ScanResult sr = scan_renormalization(rot, kind, lo, hi, static_cast<int>(c.integer("r")));
  json rows = json::array();
  out.csv.push_back({"n", "q_n", "norm", "q_n_norm", "statistic"});
  for (const auto& row : sr.rows) {
    Rational nq = circle_norm_exact(row.q, rot);
    std::string a = dec(nq, bits), b = dec(Rational(Rational(row.q) * nq), bits), s = dec(row.stat, bits);
    rows.push_back({{"n", row.n}, {"q", row.q.str()}, {"norm", a}, {"q_norm", b}, {"statistic", s}});
    out.csv.push_back({std::to_string(row.n), row.q.str(), a, b, s});
  }
  json runs = json::array();
  for (const auto& r : sr.runs) runs.push_back({{"first", r.first}, {"last", r.last}, {"mean", dec(r.mean)}});
  auto period = detect_period(rot.quotients());
  json res;
  res["depth"] = rot.depth();
  res["rows"] = rows;
  res["runs"] = runs;
  res["period"] = period ? json{{"preperiod", period->preperiod}, {"period", period->period},
                                {"evidence", "finite-horizon heuristic"}}
                         : json(nullptr);
  return res;
}

inline json run_vonneumann(const ExperimentConfig& c, unsigned bits, RunOutput& out) {
  Rotation rot = make_rotation(c, bits);
  PLRoof f = make_pl_roof(c);
  uint64_t seed = static_cast<uint64_t>(c.integer("seed"));
  int pn = static_cast<int>(c.integer("partition_n"));
  EpsPartition part = epsilon_partition(f, rot, pn);
  RenormCheck rc = renorm_identity_check(f, rot, pn, static_cast<std::size_t>(c.integer("samples")), seed);
  json cells = json::array();
  for (std::size_t i = 0; i < part.cells.size(); ++i) {
    cells.push_back({{"eps", part.cells[i].eps},
                     {"measure", dec(part.cells[i].measure, bits)},
                     {"predicted_difference", dec(rc.predicted[i], bits)},
                     {"max_residual", dec(rc.max_residual[i])}});
  }
  RoofFunction f0 = center(RoofFunction(f)).roof;
  PLRoof fp = std::get<PLRoof>(f0);
  Rational var = 0;
  for (const auto& j : f.jumps) var += abs(j.d);
  var += abs(jump_sum(f));
  json kd = json::array();
  for (int m = 1; m <= c.integer("kd_max"); ++m) {
    Norms nm = norms(birkhoff_piecewise(f0, rot, rot.q(m).convert_to<long long>()));
    kd.push_back({{"m", m}, {"q", rot.q(m).str()}, {"sup", dec(nm.sup, bits)},
                  {"holds", to_rational(nm.sup) <= var}});
  }
  std::vector<long long> mult = c.int_list("multipliers");
  auto scan = convergence_scan(f, rot, mult, static_cast<int>(c.integer("n_lo")), static_cast<int>(c.integer("n_hi")),
                               static_cast<std::size_t>(c.integer("N")), seed);
  json sj = json::array();
  out.csv.push_back({"n", "q_n", "distance_to_previous", "exact"});
  for (const auto& s : scan) {
    std::string dist = s.distance_to_previous < 0 ? "" : dec(s.distance_to_previous);
    sj.push_back({{"n", s.n}, {"q", s.q.str()}, {"distance_to_previous", dist}, {"exact", s.distance_exact}});
    out.csv.push_back({std::to_string(s.n), s.q.str(), dist, s.distance_exact ? "1" : "0"});
  }
  json res;
  res["jump_sum"] = dec(jump_sum(f), bits);
  res["variation"] = dec(var, bits);
  res["partition"] = {{"n", pn}, {"q", part.q.str()}, {"norm", dec(part.norm, bits)}, {"mirror", part.mirror},
                      {"cells", cells}};
  res["koksma_denjoy"] = kd;
  res["scan"] = sj;
  return res;
}

inline json run_affine_jom(const ExperimentConfig& c, unsigned bits, RunOutput& out) {
  Rotation rot = make_rotation(c, bits);
  PLRoof f = PLRoof::affine(c.rational("constant"));
  auto rows = affine_jom_test(f, rot, static_cast<int>(c.integer("n_lo")), static_cast<int>(c.integer("n_hi")),
                              static_cast<std::size_t>(c.integer("N")), static_cast<uint64_t>(c.integer("seed")));
  json rj = json::array();
  out.csv.push_back({"n", "modulus", "statistic"});
  for (const auto& r : rows) {
    rj.push_back({{"n", r.n}, {"modulus", dec(r.modulus)}, {"statistic", dec(r.statistic)}, {"degenerate", r.degenerate}});
    out.csv.push_back({std::to_string(r.n), dec(r.modulus), dec(r.statistic)});
  }
  json res;
  res["rows"] = rj;
  res["kappa"] = rows.empty() ? "" : dec(rows.back().statistic);
  return res;
}

// a_{n+1} = ceil(q_n / kappa), so q_n^{r+1} ||q_n alpha|| stays near kappa for r = 1.
inline PartialQuotients kappa_quotients(const Rational& kappa, int depth) {
  PartialQuotients pq;
  ConvergentSeq cs;
  for (int i = 0; i < depth; ++i) {
    Rational t = Rational(cs.q(cs.depth())) / kappa;
    BigInt a = floor_of(t);
    if (Rational(a) < t) a += 1;
    if (a < 1) a = 1;
    pq.a.push_back(a);
    cs.push(a);
  }
  return pq;
}

inline json run_polyroof(const ExperimentConfig& c, unsigned bits, RunOutput& out) {
  int r = static_cast<int>(c.integer("r"));
  Rational beta = c.rational("beta");
  Rational kappa = c.rational("kappa");
  Rotation rot = synthesize(kappa_quotients(kappa, static_cast<int>(c.integer("cf_depth"))), bits);
  PolyRoof f = poly_roof_build(r, beta, c.rational("margin"));
  RoofFunction f0 = center(RoofFunction(f)).roof;
  int n = static_cast<int>(c.integer("n"));
  BigInt q = rot.q(n);
  BigInt k = boost::multiprecision::pow(q, static_cast<unsigned>(r + 1));
  require(k <= BigInt(5'000'000), ErrorKind::MemoryBudget, "q_n^{r+1} exceeds 5e6");
  std::vector<long long> ks;
  for (int j = r + 1; j >= 1; --j) ks.push_back(j * k.convert_to<long long>());
  auto P = pushforward_sampled(birkhoff_fns(f0, rot, ks), static_cast<std::size_t>(c.integer("N")),
                               static_cast<uint64_t>(c.integer("seed")));
  double radius = to_double(c.rational("radius"));
  LineSupport ls = line_support_decompose(P, radius);
  Rational kap_n = Rational(k) * circle_norm_exact(q, rot);
  Rational kr = 1;
  for (int i = 0; i < r; ++i) kr *= kap_n;
  Rational gamma = frac_of(Rational(q) * beta);
  bool mirror = rot.frac_mult(q) > Rational(1, 2);
  Rational t0 = -gamma * kr, t1 = (1 - gamma) * kr;
  if (mirror) {  // T^{q_n} moves left, so the residual changes sign
    Rational lo = -t1, hi = -t0;
    t0 = lo;
    t1 = hi;
  }
  json cl = json::array();
  out.csv.push_back({"center", "mass"});
  for (const auto& x : ls.clusters) {
    cl.push_back({{"center", dec(x.c)}, {"mass", dec(x.mass)}});
    out.csv.push_back({dec(x.c), dec(x.mass)});
  }
  json res;
  res["q"] = q.str();
  res["kappa_n"] = dec(kap_n, bits);
  res["gamma"] = dec(gamma, bits);
  res["mirror"] = mirror;
  res["targets"] = {dec(t0, bits), dec(t1, bits)};
  res["clusters"] = cl;
  res["shared_mass"] = dec(ls.shared_mass);
  return res;
}

inline Pattern make_pattern(const ExperimentConfig& c) {
  std::string p = c.str("pattern");
  if (p == "four") return Pattern::four(c.rational("t0"), c.rational("u0"));
  if (p == "five") return Pattern::five(c.rational("a"), c.rational("b"), c.rational("c"));
  if (p == "rational") return Pattern::rational(c.rational("t0"), c.integer("ratio_b"));
  throw Error(ErrorKind::Config, "field " + c.field("pattern") + " must be four, five or rational");
}

inline json run_aaccp(const ExperimentConfig& c, unsigned bits, RunOutput& out) {
  Pattern p = make_pattern(c);
  std::vector<long long> Ms = c.int_list("M");
  auto params = AACCPParams::from_pattern(p, Ms, std::nullopt, c.rational("A"));
  Realization real = realize_alpha(params, bits);
  Validation v = validate(params, real.rot);
  StepCocycle coc = build_cocycle(params, real.rot, Ms.size());
  json stages = json::array();
  for (std::size_t k = 0; k < Ms.size(); ++k) {
    ZeroSumCheck z = zero_sum_check(coc, real.rot, k);
    const auto& g = coc.stages[k];
    stages.push_back({{"M", Ms[k]}, {"n", real.n[k]}, {"e", real.e[k]}, {"q", g.q.str()},
                      {"zero_sum", to_string(z.sum)}, {"constant_on_levels", z.constant_on_levels},
                      {"e_q_alpha", dec(Rational(Rational(g.e) * g.ell), bits)}});
  }
  std::vector<long long> windows = c.int_list("windows");
  LimitCheck L = verify_limits(coc, real.rot, p, Ms.size(), windows);
  Verdict verdict = theta_invariance(L.push.measure, windows.size() == 2 ? SymmetryMap::theta2() : SymmetryMap::theta3());
  json quot = json::array();
  for (const auto& a : real.pq.a) quot.push_back(a.str());
  out.csv.push_back({"point", "weight"});
  for (std::size_t i = 0; i < L.push.measure.size(); ++i) {
    std::string pt;
    for (std::size_t k = 0; k < L.push.measure.d; ++k) pt += (k ? " " : "") + dec(L.push.measure.point(i)[k], bits);
    out.csv.push_back({pt, dec(L.push.measure.weights[i], bits)});
  }
  json res;
  res["pattern"] = p.name();
  res["quotients"] = quot;
  res["violations"] = v.violations;
  res["diagnostics"] = v.diagnostics;
  res["stages"] = stages;
  res["windows"] = windows;
  res["distance"] = dec(L.distance.value);
  res["distance_exact"] = L.distance.exact;
  res["l2"] = dec(L.l2);
  res["sup"] = dec(L.sup);
  res["expected"] = measure_json(L.expected, bits);
  res["pushforward"] = measure_json(L.push.measure, bits);
  res["verdict"] = verdict_json(verdict);
  return res;
}

inline json run_rankone(const ExperimentConfig& c, unsigned bits, RunOutput& out) {
  std::string preset = c.str("preset");
  RankOneSpec spec;
  if (preset == "chacon-type") spec = chacon_preset(c.integer("r"), c.int_list("growth"));
  else if (preset == "classical") spec = classical_chacon();
  else throw Error(ErrorKind::Config, "field " + c.field("preset") + " must be chacon-type or classical");
  int depth = static_cast<int>(c.integer("depth"));
  TowerStack t = build(spec, depth);
  LevelSet A{static_cast<int>(c.integer("level_stage")), c.int_list("levels")};
  JoiningTable tab = joining_table(t, static_cast<int>(c.integer("stage")), A, c.integer("window"), depth);
  json entries = json::array();
  out.csv.push_back({"a", "b", "value", "error"});
  for (const auto& e : tab.entries) {
    entries.push_back({{"a", e.a}, {"b", e.b}, {"value", dec(e.exact_value, bits)}, {"value_exact", to_string(e.exact_value)},
                       {"error", dec(e.exact_error, bits)}});
    out.csv.push_back({std::to_string(e.a), std::to_string(e.b), dec(e.exact_value, bits), dec(e.exact_error, bits)});
  }
  json heights = json::array();
  for (long long q : t.q) heights.push_back(q);
  json res;
  res["heights"] = heights;
  res["stage_height"] = tab.q;
  res["depth"] = depth;
  res["total"] = dec(tab.total(), bits);
  res["max_error"] = dec(tab.max_error(), bits);
  res["table"] = entries;
  if (spec.r >= 4) {
    res["limit"] = measure_json(limit_atoms(spec.r), bits);
    res["verdict"] = verdict_json(theta_invariance(table_measure(tab), SymmetryMap::theta2()));
  }
  return res;
}

inline json run_selfsim(const ExperimentConfig& c, unsigned bits, RunOutput& out) {
  Rotation rot = make_rotation(c, bits);
  auto hits = search_matrices(rot, c.integer("bound"), c.boolean("include_trivial"));
  json hj = json::array();
  out.csv.push_back({"matrix", "gamma", "s", "residual"});
  for (const auto& h : hits) {
    hj.push_back({{"matrix", h.A.str()}, {"gamma", dec(h.gamma, bits)}, {"s", dec(h.s, bits)},
                  {"residual", dec(h.residual, bits)}});
    out.csv.push_back({h.A.str(), dec(h.gamma, bits), dec(h.s, bits), dec(h.residual, bits)});
  }
  json res;
  res["hits"] = hj;
  return res;
}

}  // namespace detail

inline RunOutput run(const ExperimentConfig& c) {
  validate_config(c);
  unsigned bits = static_cast<unsigned>(c.integer("precision_bits"));
  PrecisionScope scope(bits);
  RunOutput out;
  json cfg;
  cfg["kind"] = c.kind;
  for (const auto& [k, v] : c.values) cfg[k] = v;
  out.bundle["version"] = kVersion;
  out.bundle["config"] = cfg;
  json res;
  try {
    if (c.kind == "cf-scan") res = detail::run_cf_scan(c, bits, out);
    else if (c.kind == "vonneumann") res = detail::run_vonneumann(c, bits, out);
    else if (c.kind == "affine-jom") res = detail::run_affine_jom(c, bits, out);
    else if (c.kind == "polyroof") res = detail::run_polyroof(c, bits, out);
    else if (c.kind == "aaccp") res = detail::run_aaccp(c, bits, out);
    else if (c.kind == "rankone") res = detail::run_rankone(c, bits, out);
    else res = detail::run_selfsim(c, bits, out);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Config) throw;
    std::string what = e.what(), prefix = std::string(error_name(e.kind())) + ": ";
    if (what.rfind(prefix, 0) == 0) what = what.substr(prefix.size());
    throw Error(e.kind(), "experiment " + c.kind + ": " + what);
  }
  out.bundle["result"] = res;
  return out;
}

inline std::string to_csv(const std::vector<std::vector<std::string>>& rows) {
  std::string s;
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) s += (i ? "," : "") + r[i];
    s += "\n";
  }
  return s;
}

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  require(static_cast<bool>(f), ErrorKind::Config, "cannot write " + path);
  f << text;
}

// Writes the bundle and CSV to the paths named in the config, if any.
inline void emit(const ExperimentConfig& c, const RunOutput& out) {
  if (!c.str("out").empty()) write_file(c.str("out"), out.bundle.dump(2) + "\n");
  if (!c.str("csv").empty()) write_file(c.str("csv"), to_csv(out.csv));
}

// ---------------------------------------------------------------------------
// Golden regression.

struct FieldDiff {
  std::string pointer, expected, actual;
  std::string tolerance;
};

struct GoldenResult {
  std::string name;
  bool pass = true;
  std::vector<FieldDiff> diffs;
};

struct RegressReport {
  std::string suite;
  std::vector<GoldenResult> files;
  std::vector<std::string> warnings;

  bool pass() const {
    for (const auto& f : files)
      if (!f.pass) return false;
    return true;
  }
};

inline std::string golden_root() {
  if (const char* v = std::getenv("REVLAB_GOLDEN_DIR")) return v;
#ifdef REVLAB_GOLDEN_ROOT
  return REVLAB_GOLDEN_ROOT;
#else
  return "tests/golden";
#endif
}

inline std::optional<Rational> as_number(const std::string& s) {
  if (s.empty()) return std::nullopt;
  try {
    return parse_rational(s);
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

inline std::string json_text(const json& j) { return j.is_string() ? j.get<std::string>() : j.dump(); }

inline GoldenResult check_golden(const json& golden, const std::string& name) {
  GoldenResult gr;
  gr.name = name;
  require(golden.contains("config") && golden.contains("expected"), ErrorKind::Config,
          "golden file " + name + " needs config and expected");
  std::string text;
  for (const auto& [k, v] : golden["config"].items()) text += k + " = \"" + json_text(v) + "\"\n";
  ExperimentConfig c = parse_config(text);
  RunOutput out = run(c);
  const json& tol = golden.contains("tolerance") ? golden["tolerance"] : json::object();
  std::string dflt = tol.contains("default") ? json_text(tol["default"]) : "0";
  for (const auto& [ptr, ev] : golden["expected"].items()) {
    std::string exp = json_text(ev);
    std::string t = tol.contains(ptr) ? json_text(tol[ptr]) : dflt;
    json::json_pointer jp(ptr);
    std::string act = out.bundle.contains(jp) ? json_text(out.bundle[jp]) : "<missing>";
    auto a = as_number(act), e = as_number(exp), tv = as_number(t);
    bool ok = (a && e && tv) ? abs(*a - *e) <= *tv : act == exp;
    if (!ok) {
      gr.pass = false;
      gr.diffs.push_back({ptr, exp, act, t});
    }
  }
  return gr;
}

inline RegressReport regress(const std::string& suite, const std::string& root = golden_root()) {
  namespace fs = std::filesystem;
  fs::path dir = fs::path(root) / suite;
  require(fs::is_directory(dir), ErrorKind::GoldenMissing, "no golden suite at " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  RegressReport rep;
  rep.suite = suite;
  if (files.empty()) rep.warnings.push_back("suite " + suite + " is empty");
  for (const auto& f : files) {
    std::ifstream in(f);
    json g;
    try {
      g = json::parse(in);
    } catch (const json::exception& e) {
      throw Error(ErrorKind::Config, "golden file " + f.filename().string() + ": " + e.what());
    }
    rep.files.push_back(check_golden(g, f.filename().string()));
  }
  return rep;
}

inline json report_json(const RegressReport& r) {
  json j;
  j["suite"] = r.suite;
  j["pass"] = r.pass();
  j["warnings"] = r.warnings;
  json fs = json::array();
  for (const auto& f : r.files) {
    json d = json::array();
    for (const auto& x : f.diffs)
      d.push_back({{"field", x.pointer}, {"expected", x.expected}, {"actual", x.actual}, {"tolerance", x.tolerance}});
    fs.push_back({{"file", f.name}, {"pass", f.pass}, {"diffs", d}});
  }
  j["files"] = fs;
  return j;
}

}  // namespace revlab::cli
