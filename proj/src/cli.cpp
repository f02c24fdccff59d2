#include "cobra/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <tuple>

#include "cobra/assembly.hpp"
#include "cobra/bnn.hpp"
#include "cobra/encap.hpp"
#include "cobra/eval.hpp"
#include "cobra/ingest.hpp"
#include "cobra/sim.hpp"

namespace cobra::cli {

namespace fs = std::filesystem;

namespace {

// Bad flags, config values or missing input files (exit 2).
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, sep)) out.push_back(trim(tok));
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

std::size_t to_size(const std::string& value, const std::string& key) {
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    if (value.empty() || value.front() == '-') throw std::invalid_argument(value);
    v = std::stoull(value, &pos);
  } catch (const std::exception&) {
    pos = std::string::npos;
  }
  if (pos != value.size()) throw UsageError(key + ": expected a non-negative integer, got '" + value + "'");
  return static_cast<std::size_t>(v);
}

double to_real(const std::string& value, const std::string& key) {
  try {
    return parse_double(value, key);
  } catch (const ParseError& e) {
    throw UsageError(e.what());
  }
}

std::string read_text(const std::string& path, const std::string& what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read " + what + " '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

fs::path prepare_out_dir(const std::string& flag) {
  std::string dir = flag;
  if (dir.empty()) {
    const char* env = std::getenv("COBRA_OUT");
    dir = env && *env ? env : "cobra_out";
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw UsageError("output directory '" + dir + "' is not writable");
  return fs::path(dir);
}

std::vector<eval::Method> parse_methods(const std::string& list) {
  std::vector<eval::Method> out;
  for (const auto& name : split(list, ',')) {
    if (name == "all") {
      out.assign(eval::kAllMethods.begin(), eval::kAllMethods.end());
      continue;
    }
    const auto m = eval::parse_method(name);
    if (!m) {
      std::string known;
      for (auto k : eval::kAllMethods) known += " " + std::string(eval::to_string(k));
      throw UsageError("unknown method '" + name + "'; known:" + known);
    }
    if (std::find(out.begin(), out.end(), *m) == out.end()) out.push_back(*m);
  }
  if (out.empty()) throw UsageError("--methods: empty list");
  return out;
}

// Everything a subcommand can be configured with. Defaults, then config
// file, then flags.
struct Settings {
  sim::SimConfig sim;
  std::size_t grid_a = 10;
  std::size_t grid_b = 10;
  double grid_lo = 0.25;
  double grid_hi = 128.0;
  std::vector<eval::Method> methods{eval::kAllMethods.begin(), eval::kAllMethods.end()};
  std::size_t subsample = ingest::kDefaultSubsample;
  std::size_t max_advisees = 0;  // 0: every user
  double sla_threshold = ingest::kSlaThreshold;
  std::string out;
};

void apply_key(Settings& s, const std::string& key, const std::string& value) {
  auto& c = s.sim;
  auto& h = c.hyper;
  if (key == "n_advisors_malicious") c.n_advisors_malicious = to_size(value, key);
  else if (key == "n_advisors_legit") c.n_advisors_legit = to_size(value, key);
  else if (key == "n_targets") c.n_targets = to_size(value, key);
  else if (key == "n_context_features") c.n_context_features = to_size(value, key);
  else if (key == "rounds") c.rounds = to_size(value, key);
  else if (key == "advisee_rounds") c.advisee_rounds = to_size(value, key);
  else if (key == "sigma") c.sigma = to_real(value, key);
  else if (key == "seed") c.seed = to_size(value, key);
  else if (key == "grid") std::tie(s.grid_a, s.grid_b) = parse_grid_spec(value);
  else if (key == "grid_lo") s.grid_lo = to_real(value, key);
  else if (key == "grid_hi") s.grid_hi = to_real(value, key);
  else if (key == "encap") {
    const auto p = encap::parse_kind_policy(value);
    if (!p) throw UsageError("encap: expected dt, gnb or hyb, got '" + value + "'");
    c.policy = *p;
  }
  else if (key == "folds") c.folds = to_size(value, key);
  else if (key == "epochs") h.epochs = to_size(value, key);
  else if (key == "learning_rate") h.learning_rate = to_real(value, key);
  else if (key == "batch_size") h.batch_size = to_size(value, key);
  else if (key == "momentum") h.momentum = to_real(value, key);
  else if (key == "validation_fraction") h.validation_fraction = to_real(value, key);
  else if (key == "patience") {
    if (value == "none") h.patience.reset();
    else h.patience = to_size(value, key);
  }
  else if (key == "methods") s.methods = parse_methods(value);
  else if (key == "subsample") s.subsample = to_size(value, key);
  else if (key == "max_advisees") s.max_advisees = to_size(value, key);
  else if (key == "sla_threshold") s.sla_threshold = to_real(value, key);
  else if (key == "out") s.out = value;
  else throw UsageError("unknown config key '" + key + "'");
}

// Flags shared by the subcommands. Each subcommand registers the ones it uses.
struct Flags {
  std::string config;
  std::uint64_t seed = 0;
  std::string out;
  std::string grid;
  std::string methods;
  std::size_t subsample = 0;
  std::size_t epochs = 0;
  std::string encap;

  CLI::Option* seed_opt = nullptr;
  CLI::Option* grid_opt = nullptr;
  CLI::Option* methods_opt = nullptr;
  CLI::Option* subsample_opt = nullptr;
  CLI::Option* epochs_opt = nullptr;
  CLI::Option* encap_opt = nullptr;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "key=value config file");
  f.seed_opt = cmd->add_option("--seed", f.seed, "base random seed");
  cmd->add_option("--out", f.out, "output directory (default $COBRA_OUT or ./cobra_out)");
  f.epochs_opt = cmd->add_option("--epochs", f.epochs, "training epochs");
}

Settings load_settings(const Flags& f) {
  Settings s;
  if (!f.config.empty()) {
    std::istringstream in(read_text(f.config, "config file"));
    std::map<std::string, std::string> kv;
    try {
      kv = parse_config(in);
    } catch (const ParseError& e) {
      throw UsageError(f.config + ": " + e.what());
    }
    for (const auto& [k, v] : kv) apply_key(s, k, v);
  }
  if (f.seed_opt && f.seed_opt->count()) s.sim.seed = f.seed;
  if (!f.out.empty()) s.out = f.out;
  if (f.grid_opt && f.grid_opt->count()) std::tie(s.grid_a, s.grid_b) = parse_grid_spec(f.grid);
  if (f.methods_opt && f.methods_opt->count()) s.methods = parse_methods(f.methods);
  if (f.subsample_opt && f.subsample_opt->count()) s.subsample = f.subsample;
  if (f.epochs_opt && f.epochs_opt->count()) s.sim.hyper.epochs = f.epochs;
  if (f.encap_opt && f.encap_opt->count()) apply_key(s, "encap", f.encap);
  try {
    s.sim.grid = sim::log_grid(s.grid_a, s.grid_b, s.grid_lo, s.grid_hi);
    s.sim.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return s;
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(digits) << v;
  return ss.str();
}

std::string summarize_results(std::span<const sim::CellResult> results) {
  const auto n = results.size();
  const auto ok = sim::count_ok(results);
  const auto failed = static_cast<std::size_t>(std::count_if(
      results.begin(), results.end(), [](const auto& r) { return r.status.starts_with("failed"); }));
  double sum = 0.0;
  for (const auto& r : results) {
    if (r.ok() && r.acc) sum += *r.acc;
  }
  std::ostringstream os;
  os << "cells ≥0.85: " << sim::count_at_least(results, 0.85) << '/' << n << '\n';
  os << "cells ≥0.80: " << sim::count_at_least(results, 0.80) << '/' << n << '\n';
  os << "evaluated: " << ok << '/' << n << " (skipped " << (n - ok - failed) << ", failed " << failed
     << ")\n";
  if (ok > 0) os << "mean acc: " << fixed(sum / static_cast<double>(ok)) << '\n';
  return os.str();
}

int cmd_simulate(const Flags& f, std::ostream& out, std::ostream& err) {
  const Settings s = load_settings(f);
  const auto dir = prepare_out_dir(s.out);
  const auto total = s.sim.grid.size();
  const auto results = sim::run_grid(s.sim, [&](const sim::CellResult& r) {
    err << "cell " << (r.index + 1) << '/' << total << " alpha=" << format_double(r.alpha)
        << " beta=" << format_double(r.beta) << " n=" << r.n_evidence;
    if (r.acc) err << " acc=" << fixed(*r.acc);
    err << ' ' << r.status << std::endl;
  });
  std::ostringstream table;
  sim::write_results(table, results);
  write_text(dir / "results.csv", table.str());
  const auto summary = summarize_results(results);
  write_text(dir / "summary.txt", summary);
  out << summary;
  const bool all_failed = std::all_of(results.begin(), results.end(),
                                      [](const auto& r) { return r.status.starts_with("failed"); });
  return all_failed ? kExitRuntime : kExitOk;
}

int cmd_experiment(const Flags& f, const std::string& data_path, std::ostream& out,
                   std::ostream& err) {
  const Settings s = load_settings(f);
  if (!fs::exists(data_path)) throw UsageError("cannot read QoS data file '" + data_path + "'");
  ingest::ParseResult parsed;
  try {
    parsed = ingest::parse_records_file(data_path);
  } catch (const ParseError& e) {
    throw UsageError(e.what());
  }
  const auto records = ingest::subsample(parsed.records, s.subsample, s.sim.seed);
  err << "ingested " << parsed.records.size() << " records (" << parsed.rejects.size()
      << " rejected); using " << records.size() << std::endl;
  const auto dir = prepare_out_dir(s.out);

  const auto by_user = ingest::partition_by_user(records, s.sla_threshold);
  eval::AdvisorPool pool;
  for (const auto& [user, store] : by_user) pool.advisors.push_back({AgentId(user), store});

  std::vector<eval::Scenario> scenarios;
  for (const auto& [user, store] : by_user) {
    if (s.max_advisees && scenarios.size() >= s.max_advisees) break;
    eval::Scenario sc;
    sc.advisee = AgentId(user);
    sc.evidence = store;
    for (const auto& r : store) sc.truth.push_back(r.outcome);
    for (const auto& [other, _] : by_user) {
      if (other != user) sc.roster.emplace_back(other);
    }
    sc.context_names = {"slice"};
    scenarios.push_back(std::move(sc));
  }

  std::ostringstream history;
  history << "method,advisee,fold,epoch,train_loss,val_loss,train_acc,val_acc,seconds\n";
  eval::CompareOptions options;
  options.folds = s.sim.folds;
  options.seed = s.sim.seed;
  options.hyper = s.sim.hyper;
  options.hyper.seed = s.sim.seed;
  options.on_history = [&](eval::Method m, const AgentId& advisee, std::size_t fold,
                           std::span<const bnn::EpochStats> h) {
    for (const auto& e : h) {
      history << eval::to_string(m) << ',' << advisee << ',' << fold << ',' << e.epoch << ','
              << format_double(e.train_loss) << ',' << format_double(e.val_loss) << ','
              << format_double(e.train_acc) << ',' << format_double(e.val_acc) << ','
              << format_double(e.seconds) << '\n';
    }
  };
  std::vector<std::string> skipped;
  const auto rows = eval::compare(s.methods, pool, scenarios, options, &skipped);

  std::ostringstream table, plot, timing, skips;
  eval::write_comparison(table, rows);
  eval::write_plot_data(plot, rows);
  eval::write_timing(timing, rows);
  for (const auto& line : skipped) {
    skips << line << '\n';
    err << "skipped " << line << '\n';
  }
  write_text(dir / "comparison.csv", table.str());
  write_text(dir / "plot_data.csv", plot.str());
  write_text(dir / "timing.csv", timing.str());
  write_text(dir / "history.csv", history.str());
  write_text(dir / "skipped.txt", skips.str());
  out << table.str();
  if (rows.empty()) {
    err << "no advisee had at least " << options.folds << " records\n";
    return kExitRuntime;
  }
  return kExitOk;
}

struct TrainFlags {
  std::string training_set;
  std::string evidence;
  std::string models;
  std::string arch = "bnn";
};

encap::ModelRepository load_models(const std::string& dir) {
  if (!fs::is_directory(dir)) throw UsageError("model directory '" + dir + "' does not exist");
  try {
    return encap::ModelRepository::load(dir);
  } catch (const ParseError& e) {
    throw UsageError(e.what());
  }
}

int cmd_train(const Flags& f, const TrainFlags& t, std::ostream& out, std::ostream&) {
  const Settings s = load_settings(f);
  assembly::TrainingSet set;
  bool assembled = false;
  try {
    if (!t.training_set.empty()) {
      std::istringstream in(read_text(t.training_set, "training set"));
      set = assembly::read_training_set(in);
    } else if (!t.evidence.empty() && !t.models.empty()) {
      std::istringstream in(read_text(t.evidence, "evidence file"));
      const auto ev = read_evidence(in);
      const auto repo = load_models(t.models);
      set = assembly::init_training_data(ev.records, repo, repo.advisors(), ev.feature_names);
      assembled = true;
    } else {
      throw UsageError("train needs --training-set, or --evidence with --models");
    }
  } catch (const ParseError& e) {
    throw UsageError(e.what());
  }
  if (t.arch != "bnn" && t.arch != "dense") throw UsageError("--arch: expected bnn or dense");
  const auto dir = prepare_out_dir(s.out);

  const auto entropies = set.column_entropies();
  const auto kinds = set.input_kinds();
  auto topo = t.arch == "bnn" ? bnn::build_topology(entropies, kinds)
                              : bnn::build_dense_topology(entropies, kinds);
  bnn::TrainHyperparams hyper = s.sim.hyper;
  hyper.seed = s.sim.seed;
  auto result = bnn::train(bnn::BnnNetwork::initialized(std::move(topo), hyper.seed), set.view(), hyper);

  write_text(dir / "network.json",
             bnn::serialize_network({result.network, set.input_names(), hyper}));
  std::ostringstream hist;
  bnn::write_history(hist, result.history);
  write_text(dir / "history.csv", hist.str());
  if (assembled) {
    std::ostringstream ts;
    assembly::write_training_set(ts, set);
    write_text(dir / "training_set.csv", ts.str());
  }
  out << "trained on " << set.rows() << " rows for " << result.history.size() << " epochs"
      << (result.stopped_early ? " (stopped early)" : "") << "; " << result.network.topology().edge_count()
      << " edges; wrote " << (dir / "network.json").string() << '\n';
  return kExitOk;
}

struct PredictFlags {
  std::string network;
  std::string models;
  std::string target;
  std::string context;
  bool show_input = false;
};

int cmd_predict(const PredictFlags& p, std::ostream& out) {
  bnn::NetworkFile nf = [&] {
    try {
      return bnn::deserialize_network(read_text(p.network, "network file"));
    } catch (const ParseError& e) {
      throw UsageError(e.what());
    }
  }();
  const auto repo = p.models.empty() ? encap::ModelRepository{} : load_models(p.models);

  const auto& topo = nf.network.topology();
  std::vector<AgentId> roster;
  std::size_t n_context = 0;
  for (std::size_t i = 0; i < topo.input_kind.size(); ++i) {
    if (topo.input_kind[i] == bnn::InputKind::context) {
      ++n_context;
    } else {
      roster.emplace_back(nf.input_names.at(i));
    }
  }
  std::vector<double> values;
  for (const auto& tok : split(p.context, ',')) values.push_back(to_real(tok, "--context"));
  if (values.size() != n_context) {
    throw UsageError("--context has " + std::to_string(values.size()) + " values, network expects " +
                     std::to_string(n_context));
  }
  const auto row = assembly::input_row(repo, roster, AgentId(p.target), ContextVector(values));
  if (p.show_input) {
    out << "input:";
    for (double v : row) out << ' ' << format_double(v);
    out << '\n';
  }
  out << format_double(nf.network.forward(row)) << '\n';
  return kExitOk;
}

int cmd_report(const std::string& path, std::ostream& out) {
  const auto text = read_text(path, "report input");
  const auto header = text.substr(0, text.find('\n'));
  std::istringstream in(text);
  if (header.starts_with("index,alpha,beta")) {
    std::vector<sim::CellResult> results;
    try {
      results = sim::read_results(in);
    } catch (const ParseError& e) {
      throw UsageError(e.what());
    }
    out << summarize_results(results);
    return kExitOk;
  }
  if (header.starts_with("method,acc,rmse")) {
    std::string line;
    std::getline(in, line);
    out << std::left << std::setw(14) << "method" << std::setw(9) << "ACC" << std::setw(9) << "RMSE"
        << "m\n";
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto f = split(line, ',');
      if (f.size() != 8) throw UsageError(path + ": malformed comparison row '" + line + "'");
      out << std::left << std::setw(14) << f[0] << std::setw(9) << fixed(to_real(f[1], "acc"))
          << std::setw(9) << fixed(to_real(f[2], "rmse")) << f[7] << '\n';
    }
    return kExitOk;
  }
  throw UsageError(path + ": not a results or comparison file");
}

}  // namespace

std::map<std::string, std::string> parse_config(std::istream& is) {
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError("line " + std::to_string(line_no) + ": expected key = value");
    }
    auto key = trim(line.substr(0, eq));
    if (key.empty()) throw ParseError("line " + std::to_string(line_no) + ": empty key");
    kv[key] = trim(line.substr(eq + 1));
  }
  return kv;
}

std::pair<std::size_t, std::size_t> parse_grid_spec(const std::string& spec) {
  const auto x = spec.find_first_of("xX");
  if (x == std::string::npos) throw UsageError("grid: expected AxB, got '" + spec + "'");
  const auto a = to_size(spec.substr(0, x), "grid");
  const auto b = to_size(spec.substr(x + 1), "grid");
  if (a == 0 || b == 0) throw UsageError("grid: both dimensions must be positive");
  return {a, b};
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Context-aware trust prediction from shared advisor models"};
  app.name("cobra");
  app.require_subcommand(1);

  Flags flags;
  auto* simulate = app.add_subcommand("simulate", "run the adversarial simulation grid");
  add_common(simulate, flags);
  flags.grid_opt = simulate->add_option("--grid", flags.grid, "grid size AxB");
  flags.encap_opt = simulate->add_option("--encap", flags.encap, "advisor model kind: dt, gnb or hyb");

  Flags xflags;
  std::string data_path;
  auto* experiment = app.add_subcommand("experiment", "compare methods on QoS response-time data");
  add_common(experiment, xflags);
  experiment->add_option("data", data_path, "QoS data file")->required();
  xflags.methods_opt = experiment->add_option("--methods", xflags.methods, "comma-separated methods");
  xflags.subsample_opt = experiment->add_option("--subsample", xflags.subsample, "record cap");

  Flags tflags;
  TrainFlags tf;
  auto* train = app.add_subcommand("train", "train a network on an advisee's data");
  add_common(train, tflags);
  train->add_option("--training-set", tf.training_set, "assembled training set file");
  train->add_option("--evidence", tf.evidence, "advisee evidence file");
  train->add_option("--models", tf.models, "directory of shared advisor models");
  train->add_option("--arch", tf.arch, "bnn or dense");

  PredictFlags pf;
  auto* predict = app.add_subcommand("predict", "score a target in a context");
  predict->add_option("--network", pf.network, "trained network file")->required();
  predict->add_option("--models", pf.models, "directory of shared advisor models");
  predict->add_option("--target", pf.target, "target id")->required();
  predict->add_option("--context", pf.context, "comma-separated context values")->required();
  predict->add_flag("--show-input", pf.show_input, "print the assembled input row");

  std::string report_path;
  auto* report = app.add_subcommand("report", "summarize a results or comparison file");
  report->add_option("file", report_path, "results.csv or comparison.csv")->required();

  std::vector<const char*> argv{"cobra"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*simulate) return cmd_simulate(flags, out, err);
    if (*experiment) return cmd_experiment(xflags, data_path, out, err);
    if (*train) return cmd_train(tflags, tf, out, err);
    if (*predict) return cmd_predict(pf, out);
    if (*report) return cmd_report(report_path, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, out, err);
}

}  // namespace cobra::cli
