#include "cobra/sim.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "cobra/assembly.hpp"

namespace cobra::sim {

std::vector<GridCell> log_grid(std::size_t na, std::size_t nb, double lo, double hi) {
  if (na == 0 || nb == 0) throw std::invalid_argument("grid must have at least one cell");
  if (!(lo > 0.0) || !(hi >= lo)) throw std::invalid_argument("grid range must satisfy 0 < lo <= hi");
  auto axis = [&](std::size_t n) {
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) {
      v[i] = n == 1 ? lo : lo * std::pow(hi / lo, static_cast<double>(i) / static_cast<double>(n - 1));
    }
    return v;
  };
  const auto as = axis(na);
  const auto bs = axis(nb);
  std::vector<GridCell> grid;
  for (double a : as) {
    for (double b : bs) grid.emplace_back(a, b);
  }
  return grid;
}

void SimConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("invalid simulation config: ") + what);
  };
  require(n_advisors() > 0, "need at least one advisor");
  require(n_targets > 0, "n_targets must be positive");
  require(n_context_features > 0, "n_context_features must be positive");
  require(rounds > 0, "rounds must be positive");
  require(advisee_rounds > 0, "advisee_rounds must be positive");
  require(sigma > 0.0 && std::isfinite(sigma), "sigma must be positive");
  require(!grid.empty(), "grid is empty");
  for (const auto& [a, b] : grid) {
    require(a > 0.0 && b > 0.0 && std::isfinite(a) && std::isfinite(b), "alpha and beta must be > 0");
  }
  require(folds >= 2, "folds must be at least 2");
  hyper.validate();
}

double target_violation_prob(const TargetProfile& profile, std::span<const double> context) {
  if (context.size() != profile.mu.size() || profile.sigma.size() != profile.mu.size()) {
    throw std::invalid_argument("context size does not match target profile");
  }
  if (context.empty()) throw std::invalid_argument("empty context");
  double sum = 0.0;
  for (std::size_t f = 0; f < context.size(); ++f) {
    const double d = context[f] - profile.mu[f];
    sum += std::exp(-(d * d) / (2.0 * profile.sigma[f] * profile.sigma[f]));
  }
  return sum / static_cast<double>(context.size());
}

double sample_beta(std::mt19937_64& rng, double alpha, double beta) {
  std::gamma_distribution<double> ga(alpha, 1.0);
  std::gamma_distribution<double> gb(beta, 1.0);
  const double x = ga(rng);
  const double y = gb(rng);
  // Both gammas can underflow for tiny shapes.
  if (!(x + y > 0.0)) return alpha / (alpha + beta);
  return x / (x + y);
}

const TargetProfile& World::profile(const AgentId& target) const {
  const auto it = std::find(targets.begin(), targets.end(), target);
  if (it == targets.end()) throw std::invalid_argument("unknown target " + target.str());
  return profiles[static_cast<std::size_t>(it - targets.begin())];
}

double World::violation_prob(const AgentId& target, std::span<const double> context) const {
  return target_violation_prob(profile(target), context);
}

Outcome World::truth(const EvidenceRecord& record) const {
  return 1.0 - violation_prob(record.target, record.context.values()) >= 0.5 ? 1 : 0;
}

std::vector<Outcome> World::truth(std::span<const EvidenceRecord> records) const {
  std::vector<Outcome> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(truth(r));
  return out;
}

std::vector<std::string> World::context_names() const {
  const std::size_t k = profiles.empty() ? 0 : profiles.front().mu.size();
  std::vector<std::string> names;
  for (std::size_t f = 0; f < k; ++f) names.push_back("c" + std::to_string(f + 1));
  return names;
}

namespace {

EvidenceStore interact(std::mt19937_64& rng, const World& world, std::size_t target_index,
                       double phi, std::size_t rounds, std::size_t features) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> feature(-1.0, 1.0);
  EvidenceStore out;
  const auto& profile = world.profiles[target_index];
  for (std::size_t r = 0; r < rounds; ++r) {
    if (!(unit(rng) < phi)) continue;
    std::vector<double> ctx(features);
    for (auto& x : ctx) x = feature(rng);
    const double pv = target_violation_prob(profile, ctx);
    const int t = unit(rng) < pv ? 0 : 1;
    out.emplace_back(world.targets[target_index], ContextVector(std::move(ctx)), t);
  }
  return out;
}

}  // namespace

World gen_world(const SimConfig& config, double alpha, double beta, std::uint64_t seed) {
  config.validate();
  if (!(alpha > 0.0) || !(beta > 0.0)) throw std::invalid_argument("alpha and beta must be > 0");
  std::mt19937_64 rng(seed);
  World w;
  for (std::size_t i = 0; i < config.n_advisors(); ++i) w.advisors.emplace_back("u" + std::to_string(i + 1));
  for (std::size_t z = 0; z < config.n_targets; ++z) w.targets.emplace_back("z" + std::to_string(z + 1));

  std::uniform_real_distribution<double> centre(-1.0, 1.0);
  for (std::size_t z = 0; z < config.n_targets; ++z) {
    TargetProfile p;
    for (std::size_t f = 0; f < config.n_context_features; ++f) {
      p.mu.push_back(centre(rng));
      p.sigma.push_back(config.sigma);
    }
    w.profiles.push_back(std::move(p));
  }

  std::vector<std::size_t> order(w.advisors.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(config.n_advisors_malicious);
  std::sort(order.begin(), order.end());
  for (auto i : order) w.malicious.push_back(w.advisors[i]);

  for (const auto& u : w.advisors) {
    encap::AdvisorEvidence ev{u, {}};
    for (std::size_t z = 0; z < config.n_targets; ++z) {
      const double phi = sample_beta(rng, alpha, beta);
      w.interaction_rates.push_back(phi);
      auto recs = interact(rng, w, z, phi, config.rounds, config.n_context_features);
      ev.records.insert(ev.records.end(), std::make_move_iterator(recs.begin()),
                        std::make_move_iterator(recs.end()));
    }
    w.advisor_evidence.push_back(std::move(ev));
  }
  for (std::size_t z = 0; z < config.n_targets; ++z) {
    const double phi = sample_beta(rng, alpha, beta);
    auto recs = interact(rng, w, z, phi, config.advisee_rounds, config.n_context_features);
    w.advisee_evidence.insert(w.advisee_evidence.end(), std::make_move_iterator(recs.begin()),
                              std::make_move_iterator(recs.end()));
  }
  return w;
}

encap::ModelRepository apply_attack(const encap::ModelRepository& repo,
                                    std::span<const AgentId> malicious) {
  const auto& roster = repo.advisors();
  for (const auto& m : malicious) {
    if (std::find(roster.begin(), roster.end(), m) == roster.end()) {
      throw std::invalid_argument("malicious advisor " + m.str() + " is not in the roster");
    }
  }
  return encap::flip_owned(repo, malicious);
}

eval::AdvisorPool make_pool(const World& world, bool attack) {
  eval::AdvisorPool pool{world.advisor_evidence, {}};
  if (attack) pool.malicious = world.malicious;
  return pool;
}

eval::Scenario make_scenario(const World& world) {
  return {world.advisee, world.advisee_evidence, world.truth(world.advisee_evidence), world.advisors,
          world.context_names()};
}

CellResult run_cell(const SimConfig& config, std::size_t index) {
  if (index >= config.grid.size()) throw std::out_of_range("grid cell index out of range");
  CellResult r;
  r.index = index;
  r.alpha = config.grid[index].first;
  r.beta = config.grid[index].second;
  r.seed = config.seed + index;
  try {
    const World world = gen_world(config, r.alpha, r.beta, r.seed);
    r.n_evidence = world.advisee_evidence.size();
    auto repo = encap::build_repository(world.advisor_evidence, config.policy, r.seed);
    r.n_models = repo.size();
    if (world.advisee_evidence.empty()) {
      r.status = "skipped: no advisee evidence";
      return r;
    }
    if (r.n_evidence < config.folds) {
      r.status = "skipped: insufficient advisee evidence (" + std::to_string(r.n_evidence) + " < " +
                 std::to_string(config.folds) + " folds)";
      return r;
    }
    repo = apply_attack(repo, world.malicious);
    const auto set = assembly::init_training_data(world.advisee_evidence, repo, world.advisors,
                                                  world.context_names());
    const auto& observed = set.labels();
    const auto folds = eval::kfold(observed, config.folds, r.seed);
    bnn::TrainHyperparams hyper = config.hyper;
    hyper.seed = r.seed;
    const auto predictions = eval::cross_validated_predictions(set, folds, config.folds,
                                                               eval::Architecture::bnn, hyper);
    const auto truth = world.truth(world.advisee_evidence);
    const auto vs_truth = eval::evaluate_folds(predictions, truth, folds, config.folds);
    const auto vs_observed = eval::evaluate_folds(predictions, observed, folds, config.folds);
    r.acc = vs_truth.mean_fold_acc();
    r.rmse = vs_truth.mean_fold_rmse();
    r.acc_observed = vs_observed.mean_fold_acc();
  } catch (const std::exception& e) {
    r.status = std::string("failed: ") + e.what();
  }
  return r;
}

std::vector<CellResult> run_grid(const SimConfig& config, const CellSink& on_cell) {
  config.validate();
  std::vector<CellResult> out;
  out.reserve(config.grid.size());
  for (std::size_t i = 0; i < config.grid.size(); ++i) {
    out.push_back(run_cell(config, i));
    if (on_cell) on_cell(out.back());
  }
  return out;
}

namespace {

constexpr const char* kResultsHeader =
    "index,alpha,beta,seed,acc,rmse,acc_observed,n_evidence,n_models,status";

std::string optional_field(const std::optional<double>& v) { return v ? format_double(*v) : ""; }

std::string sanitize(std::string s) {
  std::replace(s.begin(), s.end(), ',', ';');
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

std::size_t parse_count(const std::string& token, const std::string& what) {
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(token, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (token.empty() || pos != token.size() || token.front() == '-') {
    throw ParseError(what + ": not a non-negative integer: '" + token + "'");
  }
  return static_cast<std::size_t>(v);
}

}  // namespace

void write_results(std::ostream& os, std::span<const CellResult> results) {
  os << kResultsHeader << '\n';
  for (const auto& r : results) {
    os << r.index << ',' << format_double(r.alpha) << ',' << format_double(r.beta) << ',' << r.seed
       << ',' << optional_field(r.acc) << ',' << optional_field(r.rmse) << ','
       << optional_field(r.acc_observed) << ',' << r.n_evidence << ',' << r.n_models << ','
       << sanitize(r.status) << '\n';
  }
}

std::vector<CellResult> read_results(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kResultsHeader) {
    throw ParseError("results: line 1: expected header '" + std::string(kResultsHeader) + "'");
  }
  std::vector<CellResult> out;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) f.push_back(tok);
    if (!line.empty() && line.back() == ',') f.emplace_back();
    const std::string where = "results: line " + std::to_string(line_no);
    if (f.size() != 10) throw ParseError(where + ": expected 10 fields, got " + std::to_string(f.size()));
    CellResult r;
    r.index = parse_count(f[0], where);
    r.alpha = parse_double(f[1], where + " alpha");
    r.beta = parse_double(f[2], where + " beta");
    r.seed = parse_count(f[3], where);
    auto opt = [&](const std::string& t, const char* name) -> std::optional<double> {
      if (t.empty()) return std::nullopt;
      return parse_double(t, where + " " + name);
    };
    r.acc = opt(f[4], "acc");
    r.rmse = opt(f[5], "rmse");
    r.acc_observed = opt(f[6], "acc_observed");
    r.n_evidence = parse_count(f[7], where);
    r.n_models = parse_count(f[8], where);
    r.status = f[9];
    out.push_back(std::move(r));
  }
  return out;
}

std::size_t count_at_least(std::span<const CellResult> results, double threshold) {
  return static_cast<std::size_t>(std::count_if(results.begin(), results.end(), [&](const CellResult& r) {
    return r.ok() && r.acc && *r.acc >= threshold;
  }));
}

std::size_t count_ok(std::span<const CellResult> results) {
  return static_cast<std::size_t>(
      std::count_if(results.begin(), results.end(), [](const CellResult& r) { return r.ok(); }));
}

}  // namespace cobra::sim
