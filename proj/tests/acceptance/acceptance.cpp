// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero when any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cobra/assembly.hpp"
#include "cobra/baselines.hpp"
#include "cobra/bnn.hpp"
#include "cobra/cli.hpp"
#include "cobra/eval.hpp"
#include "cobra/sim.hpp"

using namespace cobra;
namespace fs = std::filesystem;

namespace {

// Tolerances.
constexpr std::size_t kGridCellsAt80 = 75;
constexpr std::size_t kGridCellsAt85 = 50;
constexpr double kBaselineMargin = 0.03;
constexpr std::size_t kTimingRuns = 5;
constexpr double kGapSlack = 0.02;
constexpr std::size_t kMaxS = 100;
constexpr std::size_t kMaxGateWidth = 50;
constexpr double kFiniteDiffEps = 1e-5;
constexpr double kGradRelTol = 1e-4;
constexpr int kEquivalenceTrials = 100;
constexpr std::uint64_t kBrsMax = 50;
constexpr double kMetricFixtureTol = 1e-15;

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int digits = 4) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(digits) << v;
  return ss.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---- grid (criteria 1 and 9 share the two runs) ---------------------------

struct GridRuns {
  int code_a = -1;
  int code_b = -1;
  std::string results_a;
  std::string results_b;
  std::string err;
};

GridRuns run_grid_twice() {
  GridRuns g;
  const auto root = fs::temp_directory_path() / "cobra_acceptance";
  fs::remove_all(root);
  for (int pass = 0; pass < 2; ++pass) {
    const auto dir = root / (pass == 0 ? "a" : "b");
    std::ostringstream out, err;
    const int code = cli::run({"simulate", "--seed", "42", "--out", dir.string()}, out, err);
    (pass == 0 ? g.code_a : g.code_b) = code;
    (pass == 0 ? g.results_a : g.results_b) = slurp(dir / "results.csv");
    if (code != cli::kExitOk) g.err += err.str();
    std::cerr << "grid run " << (pass + 1) << "/2 done" << std::endl;
  }
  return g;
}

Verdict grid_accuracy(const GridRuns& g) {
  if (g.code_a != cli::kExitOk) return {false, "simulate exited " + std::to_string(g.code_a) + ": " + g.err};
  std::istringstream in(g.results_a);
  const auto results = sim::read_results(in);
  const auto ok = sim::count_ok(results);
  const auto at80 = sim::count_at_least(results, 0.80);
  const auto at85 = sim::count_at_least(results, 0.85);
  return {at80 >= kGridCellsAt80 && at85 >= kGridCellsAt85,
          std::to_string(at80) + " cells >= 0.80 (need " + std::to_string(kGridCellsAt80) + "), " +
              std::to_string(at85) + " cells >= 0.85 (need " + std::to_string(kGridCellsAt85) + "), of " +
              std::to_string(ok) + " evaluated"};
}

Verdict determinism(const GridRuns& g) {
  if (g.code_a != cli::kExitOk || g.code_b != cli::kExitOk) return {false, "simulate failed"};
  const bool same = !g.results_a.empty() && g.results_a == g.results_b;
  return {same, same ? "results.csv byte-identical (" + std::to_string(g.results_a.size()) + " bytes)"
                     : "results.csv differs between runs"};
}

// ---- the no-attack world (criteria 2, 3, 4) -------------------------------

struct CleanWorld {
  sim::World world;
  eval::AdvisorPool pool;
  eval::Scenario scenario;
  assembly::TrainingSet set;
};

CleanWorld clean_world() {
  sim::SimConfig c;
  c.n_advisors_malicious = 0;
  c.n_advisors_legit = 100;
  CleanWorld w{sim::gen_world(c, 4.0, 1.0, c.seed), {}, {}, {}};
  w.pool = sim::make_pool(w.world, false);
  w.scenario = sim::make_scenario(w.world);
  const auto repo = encap::build_repository(w.pool.advisors, encap::KindPolicy::all_tree, c.seed);
  w.set = assembly::init_training_data(w.scenario.evidence, repo, w.scenario.roster, w.scenario.context_names);
  return w;
}

Verdict beats_baseline(const CleanWorld& w) {
  eval::CompareOptions opt;
  const std::vector<eval::Method> methods{eval::Method::cobra_dt_b, eval::Method::brs};
  const std::vector<eval::Scenario> scenarios{w.scenario};
  const auto rows = eval::compare(methods, w.pool, scenarios, opt);
  const eval::MetricsReport* cobra = nullptr;
  const eval::MetricsReport* brs = nullptr;
  for (const auto& r : rows) (r.method == eval::Method::brs ? brs : cobra) = &r.metrics;
  if (!cobra || !brs) return {false, "advisee had too few records to evaluate"};
  const bool pass = cobra->acc >= brs->acc + kBaselineMargin && cobra->rmse < brs->rmse;
  return {pass, "cobra-dt-b ACC " + fmt(cobra->acc) + " RMSE " + fmt(cobra->rmse) + " vs brs ACC " + fmt(brs->acc) +
                    " RMSE " + fmt(brs->rmse) + " over " + std::to_string(cobra->m) + " records"};
}

struct ArchRuns {
  std::vector<double> epoch_seconds;  // mean per-epoch time, one per run
  std::vector<double> gaps;           // final train_acc - val_acc, one per run
  std::size_t edges = 0;
};

ArchRuns train_runs(const assembly::TrainingSet& set, bool dense) {
  const auto h = set.column_entropies();
  const auto kinds = set.input_kinds();
  ArchRuns out;
  for (std::size_t run = 0; run < kTimingRuns; ++run) {
    auto topo = dense ? bnn::build_dense_topology(h, kinds) : bnn::build_topology(h, kinds);
    out.edges = topo.edge_count();
    bnn::TrainHyperparams hyper;
    hyper.seed = 100 + run;
    hyper.patience.reset();
    const auto r = bnn::train(bnn::BnnNetwork::initialized(std::move(topo), hyper.seed), set.view(), hyper);
    double total = 0.0;
    for (const auto& e : r.history) total += e.seconds;
    out.epoch_seconds.push_back(total / static_cast<double>(r.history.size()));
    out.gaps.push_back(r.history.back().train_acc - r.history.back().val_acc);
  }
  return out;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

Verdict efficiency(const CleanWorld& w, const ArchRuns& bnn_runs, const ArchRuns& dense_runs) {
  // Edge counts on random entropy vectors with the experiment's four context
  // columns; any advisor with H > 0 must prune at least one edge.
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::size_t violations = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t advisors = 1 + trial % 30;
    std::vector<double> h(4, 0.0);
    std::vector<bnn::InputKind> kinds(4, bnn::InputKind::context);
    for (std::size_t a = 0; a < advisors; ++a) {
      h.push_back(trial % 5 == 0 ? 1.0 : u(rng));
      kinds.push_back(bnn::InputKind::advisor);
    }
    h[4] = std::max(h[4], 1e-3);
    if (bnn::build_topology(h, kinds).edge_count() >= bnn::build_dense_topology(h, kinds).edge_count()) ++violations;
  }
  const double tb = median(bnn_runs.epoch_seconds);
  const double td = median(dense_runs.epoch_seconds);
  const bool pass = violations == 0 && bnn_runs.edges < dense_runs.edges && tb <= td;
  return {pass, "world edges " + std::to_string(bnn_runs.edges) + " vs " + std::to_string(dense_runs.edges) +
                    "; random vectors with more BNN edges: " + std::to_string(violations) +
                    "/500; median epoch " + fmt(tb * 1e3, 2) + " ms vs " + fmt(td * 1e3, 2) + " ms over " +
                    std::to_string(w.set.rows()) + " rows"};
}

Verdict overfitting(const ArchRuns& bnn_runs, const ArchRuns& dense_runs) {
  const double gb = mean(bnn_runs.gaps);
  const double gd = mean(dense_runs.gaps);
  return {gb <= gd + kGapSlack, "train-val gap after 100 epochs, mean of " + std::to_string(kTimingRuns) +
                                    " seeds: BNN " + fmt(gb) + ", Dense " + fmt(gd)};
}

// ---- topology invariants --------------------------------------------------

std::size_t iterate_gate(std::size_t width, double h) {
  std::size_t c = 0;
  while (c < width) {
    const double numer = std::floor(static_cast<double>(width) - h * static_cast<double>(width));
    if (std::floor(numer / static_cast<double>(c + 1)) < 1.0) break;
    ++c;
  }
  return c;
}

Verdict topology_invariants() {
  std::size_t bad_widths = 0;
  for (std::size_t s = 0; s <= kMaxS; ++s) {
    // L1 = 2/3 S + L2, L2 = 2/3 L1 + 1, solved by iteration.
    long double l1 = 0.0L;
    long double l2 = 0.0L;
    for (int it = 0; it < 400; ++it) {
      l1 = 2.0L / 3.0L * static_cast<long double>(s) + l2;
      l2 = 2.0L / 3.0L * l1 + 1.0L;
    }
    std::vector<double> h(s, 0.0);
    h.push_back(1.0);
    const auto w = bnn::compute_widths(h);
    if (w.hidden1 != static_cast<std::size_t>(std::llround(l1)) ||
        w.hidden2 != static_cast<std::size_t>(std::floor(l2 + 1e-9L)) || w.output != 1) {
      ++bad_widths;
    }
  }
  std::size_t bad_gates = 0;
  for (std::size_t w = 1; w <= kMaxGateWidth; ++w) {
    for (int hi = 0; hi <= 100; ++hi) {
      const double h = hi / 100.0;
      if (bnn::gate_budget(w, h) < 1) continue;
      if (bnn::clamped_fan_out(w, h, true) != iterate_gate(w, h)) ++bad_gates;
    }
  }
  std::size_t bad_outputs = 0;
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t contexts = trial % 4;
    const std::size_t advisors = 1 + trial % 40;
    std::vector<double> h(contexts, 0.0);
    std::vector<bnn::InputKind> kinds(contexts, bnn::InputKind::context);
    for (std::size_t a = 0; a < advisors; ++a) {
      const double r = u(rng);
      h.push_back(trial % 3 == 0 ? 1.0 : (r < 0.2 ? 1.0 : r));
      kinds.push_back(bnn::InputKind::advisor);
    }
    if (bnn::build_topology(h, kinds).masks[2].col_count(0) < 1) ++bad_outputs;
  }
  return {bad_widths == 0 && bad_gates == 0 && bad_outputs == 0,
          "width mismatches " + std::to_string(bad_widths) + "/" + std::to_string(kMaxS + 1) +
              ", gate mismatches " + std::to_string(bad_gates) + ", outputs without inputs " +
              std::to_string(bad_outputs) + "/2000"};
}

// ---- gradient oracle ------------------------------------------------------

Verdict gradient_oracle() {
  const std::vector<double> h{0, 0, 0.1, 0.4, 0.8, 1.0, 0.3};
  std::vector<bnn::InputKind> kinds(2, bnn::InputKind::context);
  kinds.insert(kinds.end(), 5, bnn::InputKind::advisor);
  auto net = bnn::BnnNetwork::initialized(bnn::build_topology(h, kinds), 3);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t k = 0; k < bnn::kDepth; ++k) {
    for (auto& b : net.mutable_layers()[k].bias) b = 0.1 * u(rng);
  }
  std::vector<double> x;
  std::vector<Outcome> y;
  for (int r = 0; r < 5; ++r) {
    for (int c = 0; c < 7; ++c) x.push_back(u(rng));
    y.push_back(static_cast<Outcome>(r % 2));
  }
  const bnn::DataView view{x, 7, y};
  const std::vector<std::size_t> rows{0, 1, 2, 3, 4};
  const auto g = bnn::batch_gradients(net, view, rows);
  double worst = 0.0;
  std::size_t checked = 0;
  for (std::size_t k = 0; k < bnn::kDepth; ++k) {
    auto& w = net.mutable_layers()[k].weight;
    for (std::size_t e = 0; e < w.size(); ++e) {
      const double orig = w[e];
      w[e] = orig + kFiniteDiffEps;
      const double up = bnn::batch_loss(net, view, rows);
      w[e] = orig - kFiniteDiffEps;
      const double down = bnn::batch_loss(net, view, rows);
      w[e] = orig;
      const double numeric = (up - down) / (2 * kFiniteDiffEps);
      const double analytic = g.weight[k][e];
      const double scale = std::max(std::abs(numeric), std::abs(analytic));
      ++checked;
      if (scale > 1e-9) worst = std::max(worst, std::abs(numeric - analytic) / scale);
    }
  }
  return {worst <= kGradRelTol, std::to_string(checked) + " unmasked weights, worst relative error " +
                                    fmt(worst * 1e6, 3) + "e-6"};
}

// ---- assembly equivalence -------------------------------------------------

struct RandomWorld {
  EvidenceStore evidence;
  encap::ModelRepository repo;
  std::vector<AgentId> roster;
};

RandomWorld random_world(std::mt19937_64& rng, std::size_t n_records, std::size_t n_advisors, std::size_t n_targets,
                         std::size_t dim) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  std::uniform_int_distribution<std::size_t> pick(0, n_targets - 1);
  RandomWorld w;
  for (std::size_t a = 0; a < n_advisors; ++a) w.roster.emplace_back("u" + std::to_string(a));
  auto ctx = [&] {
    std::vector<double> v(dim);
    for (auto& x : v) x = u(rng);
    return ContextVector(v);
  };
  for (std::size_t i = 0; i < n_records; ++i) {
    w.evidence.emplace_back(AgentId("z" + std::to_string(pick(rng))), ctx(), coin(rng) ? 1 : 0);
  }
  for (std::size_t a = 0; a < n_advisors; ++a) {
    for (std::size_t z = 0; z < n_targets; ++z) {
      if (!coin(rng)) continue;
      std::vector<encap::LabelledContext> recs;
      for (int k = 0; k < 8; ++k) recs.push_back({ctx(), static_cast<Outcome>(coin(rng))});
      const AgentId subject("z" + std::to_string(z));
      auto m = coin(rng) ? encap::train_decision_tree(w.roster[a], subject, recs)
                         : encap::train_gaussian_nb(w.roster[a], subject, recs);
      w.repo.put(coin(rng) ? encap::flip(m) : m);
    }
  }
  return w;
}

Verdict assembly_equivalence() {
  std::mt19937_64 rng(99);
  int mismatches = 0;
  for (int trial = 0; trial < kEquivalenceTrials; ++trial) {
    auto w = random_world(rng, 12, 5, 4, 2);
    encap::ModelRepository partial;
    const encap::EncapsulatedModel* held = nullptr;
    for (const auto& [key, m] : w.repo.models()) {
      if (!held) {
        held = &m;
      } else {
        partial.put(m);
      }
    }
    const EvidenceStore head(w.evidence.begin(), w.evidence.end() - 1);
    auto set = assembly::init_training_data(head, partial, w.roster);
    assembly::update_vertical(set, w.evidence.back(), partial);
    if (held) assembly::update_horizontal(set, *held, w.evidence);
    if (!(set == assembly::init_training_data(w.evidence, w.repo, w.roster))) ++mismatches;
  }
  std::size_t bad_counters = 0;
  std::ostringstream sizes;
  for (std::size_t scale : {1u, 2u, 4u}) {
    const std::size_t records = 50 * scale;
    const std::size_t advisors = 10 * scale;
    auto w = random_world(rng, records, advisors, 3, 1);
    assembly::AssemblyCounters init, vertical, horizontal;
    auto set = assembly::init_training_data(w.evidence, w.repo, w.roster, {}, &init);
    assembly::update_vertical(set, w.evidence.front(), w.repo, &vertical);
    w.evidence.push_back(w.evidence.front());
    std::vector<encap::LabelledContext> one{{ContextVector{0.0}, 1}};
    assembly::update_horizontal(set, encap::train_decision_tree(w.roster[0], AgentId("z0"), one), w.evidence,
                                &horizontal);
    if (init.model_queries != records * advisors) ++bad_counters;
    if (vertical.model_queries != advisors || vertical.rows_visited != 1) ++bad_counters;
    if (horizontal.rows_visited != records + 1 || horizontal.model_queries > records + 1) ++bad_counters;
    sizes << ' ' << records << 'x' << advisors << ':' << init.model_queries << '/' << vertical.model_queries << '/'
          << horizontal.model_queries;
  }
  return {mismatches == 0 && bad_counters == 0,
          std::to_string(kEquivalenceTrials - mismatches) + "/" + std::to_string(kEquivalenceTrials) +
              " rebuilds equal; counters init/vertical/horizontal" + sizes.str()};
}

// ---- BRS and metric fixtures ----------------------------------------------

Verdict brs_and_metrics() {
  std::size_t bad = 0;
  for (std::uint64_t r = 0; r <= kBrsMax; ++r) {
    for (std::uint64_t s = 0; s <= kBrsMax; ++s) {
      const double expected = (static_cast<double>(r) + 1.0) / (static_cast<double>(r + s) + 2.0);
      if (baselines::brs_score({r, s}).value() != expected) ++bad;
    }
  }
  const std::vector<double> p{0.8, 0.2};
  const std::vector<Outcome> t{1, 0};
  const double r = eval::rmse(p, t);
  const std::vector<Outcome> pred{1, 1, 1, 1, 1, 1, 1, 1, 1, 0};
  const std::vector<Outcome> truth(10, 1);
  const auto c = eval::accuracy(pred, truth);
  const bool metrics_ok = std::abs(r - 0.2) <= kMetricFixtureTol && c.accuracy() == 0.9 && c.tp == 9 && c.fn == 1;
  return {bad == 0 && metrics_ok, "BRS mismatches " + std::to_string(bad) + "/" +
                                      std::to_string((kBrsMax + 1) * (kBrsMax + 1)) + "; RMSE fixture " +
                                      format_double(r) + ", ACC fixture " + format_double(c.accuracy())};
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](int n, const char* name, const std::function<Verdict()>& check) {
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!v.pass) ++failures;
    std::cout << (v.pass ? "PASS" : "FAIL") << " [" << n << "] " << name << ": " << v.detail << " (" << fmt(secs, 1)
              << " s)" << std::endl;
  };

  report(5, "topology invariants", topology_invariants);
  report(6, "gradient oracle", gradient_oracle);
  report(7, "assembly equivalence", assembly_equivalence);
  report(8, "BRS and metric oracles", brs_and_metrics);

  CleanWorld world;
  ArchRuns bnn_runs, dense_runs;
  std::string setup_error;
  try {
    world = clean_world();
    bnn_runs = train_runs(world.set, false);
    dense_runs = train_runs(world.set, true);
  } catch (const std::exception& e) {
    setup_error = e.what();
  }
  auto guarded = [&](auto check) {
    return [&, check]() -> Verdict {
      if (!setup_error.empty()) return {false, "setup failed: " + setup_error};
      return check();
    };
  };
  report(2, "beats context-blind baseline", guarded([&] { return beats_baseline(world); }));
  report(3, "BNN vs Dense efficiency", guarded([&] { return efficiency(world, bnn_runs, dense_runs); }));
  report(4, "overfitting divergence", guarded([&] { return overfitting(bnn_runs, dense_runs); }));

  const auto grid = run_grid_twice();
  report(1, "51-percent attack grid", [&] { return grid_accuracy(grid); });
  report(9, "determinism", [&] { return determinism(grid); });

  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
