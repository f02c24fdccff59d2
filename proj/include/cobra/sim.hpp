#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cobra/bnn.hpp"
#include "cobra/core.hpp"
#include "cobra/encap.hpp"
#include "cobra/eval.hpp"

namespace cobra::sim {

using GridCell = std::pair<double, double>;  // (alpha, beta)

/// na x nb cells, log-spaced in [lo, hi] on both axes. Cell index i*nb + j
/// holds (alpha_i, beta_j).
std::vector<GridCell> log_grid(std::size_t na, std::size_t nb, double lo = 0.25, double hi = 128.0);

struct SimConfig {
  std::size_t n_advisors_malicious = 51;
  std::size_t n_advisors_legit = 49;
  std::size_t n_targets = 100;
  std::size_t n_context_features = 4;
  std::size_t rounds = 200;          // T, per advisor-target pair
  std::size_t advisee_rounds = 20;   // same, for the advisee
  double sigma = 0.5;                // width of every violation bump
  std::uint64_t seed = 42;
  std::vector<GridCell> grid = log_grid(10, 10);
  encap::KindPolicy policy = encap::KindPolicy::all_tree;
  bnn::TrainHyperparams hyper;
  std::size_t folds = 10;

  std::size_t n_advisors() const noexcept { return n_advisors_malicious + n_advisors_legit; }
  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

/// Per-feature Gaussian bump centres and widths.
struct TargetProfile {
  std::vector<double> mu;
  std::vector<double> sigma;

  friend bool operator==(const TargetProfile&, const TargetProfile&) = default;
};

/// Mean over features of exp(-(x_f - mu_f)^2 / (2 sigma_f^2)).
double target_violation_prob(const TargetProfile& profile, std::span<const double> context);

/// Beta(alpha, beta) draw from two gamma variates.
double sample_beta(std::mt19937_64& rng, double alpha, double beta);

struct World {
  AgentId advisee{"a"};
  std::vector<AgentId> advisors;   // roster order
  std::vector<AgentId> malicious;  // subset, roster order
  std::vector<AgentId> targets;
  std::vector<TargetProfile> profiles;  // by target index
  std::vector<encap::AdvisorEvidence> advisor_evidence;
  EvidenceStore advisee_evidence;
  std::vector<double> interaction_rates;  // phi for every (advisor, target), advisor-major

  const TargetProfile& profile(const AgentId& target) const;
  double violation_prob(const AgentId& target, std::span<const double> context) const;
  /// Ground-truth trustworthiness: 1 when the SLA is more likely met than not.
  Outcome truth(const EvidenceRecord& record) const;
  std::vector<Outcome> truth(std::span<const EvidenceRecord> records) const;
  std::vector<std::string> context_names() const;

  friend bool operator==(const World&, const World&) = default;
};

World gen_world(const SimConfig& config, double alpha, double beta, std::uint64_t seed);

/// Every model owned by a malicious advisor wrapped in a flip. Throws
/// std::invalid_argument if a malicious id is not among the repo's advisors.
encap::ModelRepository apply_attack(const encap::ModelRepository& repo,
                                    std::span<const AgentId> malicious);

eval::AdvisorPool make_pool(const World& world, bool attack = true);
eval::Scenario make_scenario(const World& world);

struct CellResult {
  std::size_t index = 0;
  double alpha = 0.0;
  double beta = 0.0;
  std::uint64_t seed = 0;
  std::optional<double> acc;           // mean fold ACC against ground truth
  std::optional<double> rmse;
  std::optional<double> acc_observed;  // against the sampled outcomes
  std::size_t n_evidence = 0;
  std::size_t n_models = 0;
  std::string status = "ok";

  bool ok() const { return status == "ok"; }
};

CellResult run_cell(const SimConfig& config, std::size_t index);

using CellSink = std::function<void(const CellResult&)>;
std::vector<CellResult> run_grid(const SimConfig& config, const CellSink& on_cell = {});

/// index,alpha,beta,seed,acc,rmse,acc_observed,n_evidence,n_models,status
void write_results(std::ostream& os, std::span<const CellResult> results);
std::vector<CellResult> read_results(std::istream& is);

/// Cells with status ok and acc >= threshold.
std::size_t count_at_least(std::span<const CellResult> results, double threshold);
std::size_t count_ok(std::span<const CellResult> results);

}  // namespace cobra::sim
