#include <iostream>
#include <map>
#include <set>
#include <string>

#include <CLI11.hpp>

#include "experiment.hpp"

namespace {

using namespace revlab;
using namespace revlab::cli;

struct Command {
  std::string default_kind;
  std::set<std::string> kinds;
  std::string help;
};

const std::map<std::string, Command>& commands() {
  static const std::map<std::string, Command> c{
      {"cf", {"cf-scan", {"cf-scan"}, "continued fraction scans of q_n ||q_n alpha||"}},
      {"birkhoff", {"vonneumann", {"vonneumann"}, "Birkhoff sums, partition sets and Koksma-Denjoy checks"}},
      {"dist", {"vonneumann", {"vonneumann", "polyroof"}, "pushforward measures and their distances"}},
      {"rev", {"affine-jom", {"affine-jom", "polyroof"}, "reversibility tests for special flows"}},
      {"aaccp", {"aaccp", {"aaccp"}, "step cocycle construction and limit atoms"}},
      {"rankone", {"rankone", {"rankone"}, "rank-one joining tables"}},
      {"selfsim", {"selfsim", {"selfsim"}, "self-similarity matrix search"}},
  };
  return c;
}

struct Flags {
  std::string config, out;
  unsigned precision_bits = 0;
  long long seed = -1;
};

int run_command(const std::string& name, const Flags& fl) {
  const Command& cmd = commands().at(name);
  ExperimentConfig c = fl.config.empty() ? default_config(cmd.default_kind) : load_config(fl.config);
  require(cmd.kinds.count(c.kind) > 0, ErrorKind::Config,
          "kind '" + c.kind + "' cannot run under the " + name + " subcommand");
  if (fl.precision_bits) c.values["precision_bits"] = std::to_string(fl.precision_bits);
  if (fl.seed >= 0) {
    if (cli::detail::sampled_kind(c.kind)) c.values["seed"] = std::to_string(fl.seed);
    else std::cerr << "note: --seed ignored, " << c.kind << " is not sampled\n";
  }
  if (!fl.out.empty()) c.values["out"] = fl.out;
  RunOutput out = run(c);
  emit(c, out);
  if (c.str("out").empty()) std::cout << out.bundle.dump(2) << "\n";
  return 0;
}

int run_regress(const std::string& suite, const std::string& dir, const Flags& fl) {
  RegressReport rep = dir.empty() ? regress(suite) : regress(suite, dir);
  std::string text = report_json(rep).dump(2) + "\n";
  if (fl.out.empty()) std::cout << text;
  else write_file(fl.out, text);
  for (const auto& w : rep.warnings) std::cerr << "warning: " << w << "\n";
  for (const auto& f : rep.files) {
    std::cerr << (f.pass ? "pass " : "FAIL ") << f.name << "\n";
    for (const auto& d : f.diffs)
      std::cerr << "  " << d.pointer << ": expected " << d.expected << " got " << d.actual << " (tol " << d.tolerance
                << ")\n";
  }
  return rep.pass() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"revlab: special flows over rotations, joinings and reversibility experiments"};
  app.require_subcommand(1);
  Flags fl;
  std::map<std::string, CLI::App*> subs;
  auto add_flags = [&](CLI::App* s) {
    s->add_option("--config", fl.config, "key = value experiment file");
    s->add_option("--out", fl.out, "JSON output path (stdout when absent)");
    s->add_option("--precision-bits", fl.precision_bits,
                  std::string("working precision; default from ") + kPrecisionEnv + " or 256");
    s->add_option("--seed", fl.seed, "seed for sampled experiments");
  };
  for (const auto& [name, cmd] : commands()) {
    subs[name] = app.add_subcommand(name, cmd.help);
    add_flags(subs[name]);
  }
  std::string suite, golden_dir;
  CLI::App* reg = app.add_subcommand("regress", "re-run golden configs and compare");
  reg->add_option("suite", suite, "suite name")->required();
  reg->add_option("--golden-dir", golden_dir, "root directory of golden suites");
  add_flags(reg);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  try {
    if (reg->parsed()) return run_regress(suite, golden_dir, fl);
    for (const auto& [name, s] : subs)
      if (s->parsed()) return run_command(name, fl);
  } catch (const revlab::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
