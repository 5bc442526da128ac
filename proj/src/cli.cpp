#include "snewton/cli_app.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "snewton/data.hpp"
#include "snewton/engine.hpp"
#include "snewton/experiments.hpp"
#include "snewton/validate.hpp"

namespace snewton {

namespace {

struct Settings {
  std::uint64_t seed = 1;
  std::string config_path;
  std::string generator = "linear-diag";
  std::string algo = "wasna-log:2";
  std::string algos = "sna,wasna-uniform,wasna-log:2,sgd,asgd,adagrad,avg-adagrad";
  double r0 = 1.0;
  int replicates = 50;
  int clt_replicates = 200;
  std::int64_t horizon = 0;  // 0: family default
  int probes = 30;
  std::int64_t n_star = 20000;
  long oracle_samples = 1000000;
  int jobs = 1;
  std::int64_t limit = 0;  // 0: whole training set
  int shuffle = 1;
  std::string out_path;
  std::string svg_path;
  std::string train_images, train_labels, test_images, test_labels;
};

std::string trim(const std::string& text) {
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return "";
  const auto last = text.find_last_not_of(" \t\r\n");
  return text.substr(first, last - first + 1);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> parts;
  std::istringstream in(text);
  std::string part;
  while (std::getline(in, part, ',')) {
    part = trim(part);
    if (!part.empty()) parts.push_back(part);
  }
  return parts;
}

// key=value lines; '#' starts a comment, blank lines are skipped. Values
// override command line flags (the derived tokens are appended last and all
// options take the last occurrence).
std::vector<std::pair<std::string, std::string>> load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::ios_base::failure("cannot open config file " + path);
  std::vector<std::pair<std::string, std::string>> entries;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument(path + ":" + std::to_string(lineno) +
                                  ": expected key=value, got '" + stripped + "'");
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (key.empty())
      throw std::invalid_argument(path + ":" + std::to_string(lineno) + ": empty key");
    entries.emplace_back(key, value);
  }
  return entries;
}

void write_file(const std::string& path, const std::function<void(std::ostream&)>& body) {
  std::ofstream file(path);
  if (!file) throw std::ios_base::failure("cannot open output file " + path);
  body(file);
  file.flush();
  if (!file) throw std::ios_base::failure("error writing " + path);
}

// Writes to the file at `path`, or to `fallback` when no path was given.
void write_output(const std::string& path, std::ostream& fallback,
                  const std::function<void(std::ostream&)>& body) {
  if (path.empty())
    body(fallback);
  else
    write_file(path, body);
}

std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

std::string weights_id(const WeightSchedule& w) {
  switch (w.variant) {
    case WeightSchedule::Variant::Last:
      return "last";
    case WeightSchedule::Variant::Uniform:
      return "uniform";
    case WeightSchedule::Variant::Polynomial:
      return "poly:" + format_number(w.omega);
    case WeightSchedule::Variant::Logarithmic:
      return "log:" + format_number(w.omega);
  }
  return "";
}

std::int64_t family_horizon(const GeneratorSpec& gen) {
  return gen.model().kind() == RiskModel::Kind::Linear ? 10000 : 5000;
}

std::vector<AlgorithmConfig> parse_roster(const std::string& algos) {
  std::vector<AlgorithmConfig> roster;
  for (const std::string& token : split_list(algos)) roster.push_back(parse_algorithm(token));
  if (roster.empty()) throw std::invalid_argument("empty algorithm list");
  return roster;
}

int run_simulate(const Settings& s, std::ostream& out, std::ostream& err) {
  GeneratorSpec gen = parse_generator(s.generator);
  ExperimentConfig cfg{gen};
  cfg.roster = parse_roster(s.algos);
  cfg.r0 = s.r0;
  cfg.replicates = s.replicates;
  cfg.horizon = s.horizon > 0 ? s.horizon : family_horizon(gen);
  cfg.probes = log_probe_grid(cfg.horizon, s.probes);
  cfg.base_seed = s.seed;
  cfg.jobs = s.jobs;

  const CurveTable table = mse_curve(cfg);
  write_output(s.out_path, out, [&](std::ostream& o) { write_curve_csv(o, table); });
  if (!s.out_path.empty())
    write_file(s.out_path + ".json",
               [&](std::ostream& o) { o << experiment_sidecar_json(cfg, table); });
  if (!s.svg_path.empty())
    write_file(s.svg_path, [&](std::ostream& o) { write_curve_svg(o, table); });
  for (const std::string& failure : table.failures) err << "run failure: " << failure << '\n';
  return 0;
}

int run_clt(const Settings& s, std::ostream& out, std::ostream& err) {
  GeneratorSpec gen = parse_generator(s.generator);
  ExperimentConfig cfg{gen};
  cfg.roster = {parse_algorithm(s.algo)};
  cfg.r0 = s.r0;
  cfg.base_seed = s.seed;
  cfg.jobs = s.jobs;

  Rng oracle_rng(mix_seed(s.seed, 0x0AC1EULL));
  const MomentOracle oracle = oracle_for(gen, s.oracle_samples, oracle_rng);
  const CltReport report = clt_covariance(cfg, s.n_star, s.clt_replicates, oracle);
  write_output(s.out_path, out, [&](std::ostream& o) { write_clt_csv(o, report); });
  err << "trace ratio " << format_number(report.trace_ratio) << " over "
      << report.replicates << " replicates at n=" << report.n_star << '\n';
  return 0;
}

int run_mnist(const Settings& s, std::ostream& out, std::ostream& err) {
  LabeledImages train = read_idx(s.train_images, s.train_labels);
  const LabeledImages test = read_idx(s.test_images, s.test_labels);
  if (s.limit > 0) train = train.head(std::min<Eigen::Index>(s.limit, train.size()));

  const AlgorithmConfig algo = parse_algorithm(s.algo);
  const ImageFitResult result = fit_images(train, test, algo, s.seed, s.shuffle != 0);
  write_output(s.out_path, out, [&](std::ostream& o) {
    o << "metric,value\n";
    o << "accuracy," << format_number(result.confusion.accuracy) << '\n';
    o << "steps," << result.steps << '\n';
    o << "seconds," << format_number(result.seconds) << '\n';
    o << "train_size," << train.size() << '\n';
    o << "test_size," << test.size() << '\n';
    o << '\n';
    write_confusion_csv(o, result.confusion);
  });
  err << "accuracy " << format_number(result.confusion.accuracy) << " on " << test.size()
      << " held-out samples (" << result.steps << " steps, "
      << format_number(result.seconds) << "s)\n";
  return 0;
}

int run_validate(const Settings& s, std::ostream& out) {
  const std::vector<CheckResult> results = run_validation_suite(s.seed);
  bool all_pass = true;
  for (const CheckResult& r : results) {
    out << (r.pass ? "[PASS] " : "[FAIL] ") << r.name << " (" << r.detail << ")\n";
    all_pass = all_pass && r.pass;
  }
  out << (all_pass ? "validation passed\n" : "validation FAILED\n");
  return all_pass ? 0 : 1;
}

void describe_algorithm(std::ostream& out, const AlgorithmConfig& algo) {
  out << "# algo " << algo.id << ": ";
  if (algo.is_newton()) {
    const NewtonConfig& cfg = algo.newton();
    out << "newton step c=" << format_number(cfg.step.c)
        << " c_prime=" << format_number(cfg.step.c_prime)
        << " gamma=" << format_number(cfg.step.gamma) << ", weights " << weights_id(cfg.weights)
        << ", feed " << (cfg.feed == HessianFeed::AveragedIterate ? "averaged" : "raw")
        << ", c0=" << format_number(cfg.c0) << ", trunc c_beta=" << format_number(cfg.trunc.c_beta)
        << " beta=" << format_number(cfg.trunc.beta);
  } else {
    const BaselineConfig& cfg = algo.baseline();
    const char* kind = "";
    switch (cfg.kind) {
      case BaselineKind::Sgd:
        kind = "sgd";
        break;
      case BaselineKind::AveragedSgd:
        kind = "averaged sgd";
        break;
      case BaselineKind::Adagrad:
        kind = "adagrad";
        break;
      case BaselineKind::AveragedAdagrad:
        kind = "averaged adagrad";
        break;
    }
    out << "baseline " << kind << " c=" << format_number(cfg.c);
    if (cfg.kind == BaselineKind::Sgd || cfg.kind == BaselineKind::AveragedSgd)
      out << " gamma=" << format_number(cfg.gamma);
    else
      out << " eps=" << format_number(cfg.eps);
  }
  out << '\n';
}

int run_inspect(const Settings& s, std::ostream& out) {
  // Resolved settings, one key=value per line; the block parses back as a
  // --config file reproducing this state. Keys with empty values are
  // omitted (empty `--opt=` tokens read as missing arguments).
  const auto kv = [&out](const char* key, const std::string& value) {
    if (!value.empty()) out << key << '=' << value << '\n';
  };
  out << "algo=" << s.algo << '\n';
  out << "algos=" << s.algos << '\n';
  out << "generator=" << s.generator << '\n';
  out << "horizon=" << s.horizon << '\n';
  out << "jobs=" << s.jobs << '\n';
  out << "limit=" << s.limit << '\n';
  out << "n-star=" << s.n_star << '\n';
  out << "oracle-samples=" << s.oracle_samples << '\n';
  kv("out", s.out_path);
  out << "probes=" << s.probes << '\n';
  out << "r0=" << format_number(s.r0) << '\n';
  out << "replicates=" << s.replicates << '\n';
  out << "seed=" << s.seed << '\n';
  out << "shuffle=" << s.shuffle << '\n';
  kv("svg", s.svg_path);
  kv("test-images", s.test_images);
  kv("test-labels", s.test_labels);
  kv("train-images", s.train_images);
  kv("train-labels", s.train_labels);

  const GeneratorSpec gen = parse_generator(s.generator);
  out << "# generator " << gen.id() << ": model " << gen.model().id() << ", sigma "
      << format_number(gen.noise_sigma()) << ", theta_true [";
  for (Eigen::Index i = 0; i < gen.theta_true().size(); ++i)
    out << (i > 0 ? " " : "") << format_number(gen.theta_true()[i]);
  out << "], effective horizon " << (s.horizon > 0 ? s.horizon : family_horizon(gen)) << '\n';
  describe_algorithm(out, parse_algorithm(s.algo));
  for (const AlgorithmConfig& algo : parse_roster(s.algos)) describe_algorithm(out, algo);
  return 0;
}

}  // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Settings s;
  std::function<int()> action;

  CLI::App app{"Streaming second-order optimization toolkit", "snewton"};
  app.require_subcommand(1);

  auto add_common = [&s](CLI::App* cmd, bool seed_required) {
    auto* seed =
        cmd->add_option("--seed", s.seed, "base seed; all randomness derives from it")
            ->take_last();
    if (seed_required) seed->required();
    cmd->add_option("--config", s.config_path,
                    "key=value file; entries override command line flags")
        ->take_last();
    cmd->add_option("--jobs", s.jobs, "worker threads for replicated runs")
        ->capture_default_str()
        ->take_last();
    cmd->add_option("--out", s.out_path, "output file (default: stdout)")->take_last();
  };

  CLI::App* sim = app.add_subcommand(
      "simulate", "estimation-error curves for a roster of algorithms on a synthetic stream");
  add_common(sim, true);
  sim->add_option("--generator", s.generator, "observation distribution specifier")
      ->capture_default_str()
      ->take_last();
  sim->add_option("--algos", s.algos, "comma-separated algorithm specifiers")
      ->capture_default_str()
      ->take_last();
  sim->add_option("--replicates", s.replicates, "independent replicates per algorithm")
      ->capture_default_str()
      ->take_last();
  sim->add_option("--horizon", s.horizon,
                  "stream length (0 = family default: 10000 linear, 5000 otherwise)")
      ->capture_default_str()
      ->take_last();
  sim->add_option("--probes", s.probes, "number of log-spaced probe points")
      ->capture_default_str()
      ->take_last();
  sim->add_option("--r0", s.r0, "initial distance from the true parameter")
      ->capture_default_str()
      ->take_last();
  sim->add_option("--svg", s.svg_path, "also write a log-log chart to this path")->take_last();
  sim->callback([&] { action = [&] { return run_simulate(s, out, err); }; });

  CLI::App* clt = app.add_subcommand(
      "clt", "empirical vs theoretical covariance of the rescaled estimate at a fixed horizon");
  add_common(clt, true);
  clt->add_option("--generator", s.generator, "observation distribution specifier")
      ->capture_default_str()
      ->take_last();
  clt->add_option("--algo", s.algo, "algorithm specifier (one averaging variant)")
      ->capture_default_str()
      ->take_last();
  clt->add_option("--n-star", s.n_star, "horizon at which the estimate is rescaled")
      ->capture_default_str()
      ->take_last();
  clt->add_option("--replicates", s.clt_replicates, "independent replicates (>= 100)")
      ->capture_default_str()
      ->take_last();
  clt->add_option("--oracle-samples", s.oracle_samples,
                  "Monte Carlo draws for the moment oracle (non-linear families)")
      ->capture_default_str()
      ->take_last();
  clt->add_option("--r0", s.r0, "initial distance from the true parameter")
      ->capture_default_str()
      ->take_last();
  clt->callback([&] { action = [&] { return run_clt(s, out, err); }; });

  CLI::App* mnist = app.add_subcommand(
      "mnist", "one-pass softmax fit of an IDX image dataset plus held-out evaluation");
  add_common(mnist, false);
  mnist->add_option("--train-images", s.train_images, "IDX (or .gz) training images")
      ->required()
      ->take_last();
  mnist->add_option("--train-labels", s.train_labels, "IDX (or .gz) training labels")
      ->required()
      ->take_last();
  mnist->add_option("--test-images", s.test_images, "IDX (or .gz) test images")
      ->required()
      ->take_last();
  mnist->add_option("--test-labels", s.test_labels, "IDX (or .gz) test labels")
      ->required()
      ->take_last();
  mnist->add_option("--algo", s.algo, "algorithm specifier")
      ->capture_default_str()
      ->take_last();
  mnist->add_option("--limit", s.limit, "train on the first N samples only (0 = all)")
      ->capture_default_str()
      ->take_last();
  mnist->add_option("--shuffle", s.shuffle, "1: visit samples in seeded shuffled order")
      ->capture_default_str()
      ->take_last();
  mnist->callback([&] { action = [&] { return run_mnist(s, out, err); }; });

  CLI::App* validate = app.add_subcommand("validate", "run the built-in correctness checks");
  add_common(validate, false);
  validate->get_option("--seed")->default_str("12345");
  validate->callback([&] {
    if (validate->get_option("--seed")->count() == 0) s.seed = 12345;
    action = [&] { return run_validate(s, out); };
  });

  CLI::App* inspect =
      app.add_subcommand("inspect", "print the resolved configuration without running");
  add_common(inspect, false);
  inspect->add_option("--generator", s.generator)->capture_default_str()->take_last();
  inspect->add_option("--algo", s.algo)->capture_default_str()->take_last();
  inspect->add_option("--algos", s.algos)->capture_default_str()->take_last();
  inspect->add_option("--replicates", s.replicates)->capture_default_str()->take_last();
  inspect->add_option("--horizon", s.horizon)->capture_default_str()->take_last();
  inspect->add_option("--probes", s.probes)->capture_default_str()->take_last();
  inspect->add_option("--r0", s.r0)->capture_default_str()->take_last();
  inspect->add_option("--n-star", s.n_star)->capture_default_str()->take_last();
  inspect->add_option("--oracle-samples", s.oracle_samples)->capture_default_str()->take_last();
  inspect->add_option("--limit", s.limit)->capture_default_str()->take_last();
  inspect->add_option("--shuffle", s.shuffle)->capture_default_str()->take_last();
  inspect->add_option("--svg", s.svg_path)->take_last();
  inspect->add_option("--train-images", s.train_images)->take_last();
  inspect->add_option("--train-labels", s.train_labels)->take_last();
  inspect->add_option("--test-images", s.test_images)->take_last();
  inspect->add_option("--test-labels", s.test_labels)->take_last();
  inspect->callback([&] { action = [&] { return run_inspect(s, out); }; });

  try {
    std::vector<std::string> tokens;
    for (int i = 1; i < argc; ++i) tokens.emplace_back(argv[i]);
    std::string config_path;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (tokens[i] == "--config" && i + 1 < tokens.size())
        config_path = tokens[i + 1];
      else if (tokens[i].rfind("--config=", 0) == 0)
        config_path = tokens[i].substr(9);
    }
    if (!config_path.empty())
      for (const auto& [key, value] : load_config(config_path))
        tokens.push_back("--" + key + "=" + value);
    std::reverse(tokens.begin(), tokens.end());
    app.parse(tokens);
    if (!action) {
      err << app.help();
      return 2;
    }
    return action();
  } catch (const CLI::CallForHelp&) {
    // Print the help of the deepest subcommand that was parsed, so that
    // `snewton simulate --help` documents simulate rather than the top level.
    const CLI::App* target = &app;
    while (!target->get_subcommands().empty()) target = target->get_subcommands().front();
    out << target->help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n(run with --help for usage)\n";
    return 2;
  } catch (const IdxError& e) {
    err << "error: " << e.what() << '\n';
    return 3;
  } catch (const SizeExceeded& e) {
    err << "error: " << e.what() << '\n';
    return 3;
  } catch (const std::ios_base::failure& e) {
    err << "error: " << e.what() << '\n';
    return 3;
  } catch (const Unsupported& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace snewton
