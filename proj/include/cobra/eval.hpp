#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cobra/assembly.hpp"
#include "cobra/bnn.hpp"
#include "cobra/core.hpp"
#include "cobra/encap.hpp"

namespace cobra::eval {

/// Scores at or above this are classified as trustworthy.
inline constexpr double kDecisionThreshold = 0.5;

inline Outcome classify(double score) { return score >= kDecisionThreshold ? 1 : 0; }

struct Confusion {
  std::size_t tp = 0;
  std::size_t tn = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  std::size_t total() const noexcept { return tp + tn + fp + fn; }
  double accuracy() const;
  friend bool operator==(const Confusion&, const Confusion&) = default;
};

/// Confusion counts of predicted labels against truth.
Confusion accuracy(std::span<const Outcome> predicted, std::span<const Outcome> truth);
/// Same, thresholding scores at 0.5 first.
Confusion accuracy_from_scores(std::span<const double> scores, std::span<const Outcome> truth);

double rmse(std::span<const double> predicted, std::span<const double> truth);
double rmse(std::span<const double> predicted, std::span<const Outcome> truth);

/// Stratified fold id (0..k-1) for every row. Each class is shuffled with
/// `seed` and dealt round-robin, continuing across classes, so fold sizes
/// differ by at most one. Throws when rows < k.
std::vector<std::size_t> kfold(std::span<const Outcome> labels, std::size_t k, std::uint64_t seed);

struct MetricsReport {
  double acc = 0.0;
  double rmse = 0.0;
  Confusion confusion;
  std::size_t m = 0;
  std::vector<double> fold_acc;
  std::vector<double> fold_rmse;
  double train_seconds = 0.0;
  double predict_seconds = 0.0;

  double mean_fold_acc() const;
  double mean_fold_rmse() const;
};

/// Pooled metrics plus the per-fold breakdown (fold ids from kfold).
MetricsReport evaluate_folds(std::span<const double> predictions, std::span<const Outcome> truth,
                             std::span<const std::size_t> folds, std::size_t k);

enum class Architecture : std::uint8_t { bnn, dense };

using HistorySink = std::function<void(std::size_t fold, std::span<const bnn::EpochStats>)>;

/// Held-out prediction for every row: for each fold, builds a topology from
/// the training rows' column entropies, trains, and predicts the fold.
/// Fold f trains with seed hyper.seed + f.
std::vector<double> cross_validated_predictions(const assembly::TrainingSet& set,
                                                std::span<const std::size_t> folds,
                                                std::size_t k, Architecture arch,
                                                const bnn::TrainHyperparams& hyper,
                                                MetricsReport* timing = nullptr,
                                                const HistorySink& on_history = {});

// Method comparison.

enum class Method : std::uint8_t {
  cobra_dt_b,
  cobra_gnb_b,
  cobra_hyb_b,
  cobra_dt_d,
  cobra_gnb_d,
  cobra_hyb_d,
  brs,
  tmsiot,
};

inline constexpr std::array<Method, 8> kAllMethods = {
    Method::cobra_dt_b, Method::cobra_gnb_b, Method::cobra_hyb_b, Method::cobra_dt_d,
    Method::cobra_gnb_d, Method::cobra_hyb_d, Method::brs,        Method::tmsiot};

std::string_view to_string(Method method);
std::optional<Method> parse_method(std::string_view name);

/// Advisors with raw evidence (used to train their shared models and, for the
/// baselines, as raw feedback counts) and the subset that lies.
struct AdvisorPool {
  std::vector<encap::AdvisorEvidence> advisors;
  std::vector<AgentId> malicious;
};

/// One advisee's first-hand evidence E_a and what its predictions are scored
/// against (the observed outcomes, or a simulator's ground truth).
struct Scenario {
  AgentId advisee;
  EvidenceStore evidence;
  std::vector<Outcome> truth;
  std::vector<AgentId> roster;  // X_a, in column order
  std::vector<std::string> context_names;
};

struct CompareOptions {
  std::size_t folds = 10;
  std::uint64_t seed = 42;
  bnn::TrainHyperparams hyper;
  std::function<void(Method, const AgentId& advisee, std::size_t fold,
                     std::span<const bnn::EpochStats>)>
      on_history;
};

struct ComparisonRow {
  Method method;
  MetricsReport metrics;
};

/// Runs every method on identical folds for every scenario. Scenarios with
/// fewer rows than folds are skipped and reported in `skipped`. Rows sorted by
/// pooled ACC, descending.
std::vector<ComparisonRow> compare(std::span<const Method> methods, const AdvisorPool& pool,
                                   std::span<const Scenario> scenarios,
                                   const CompareOptions& options,
                                   std::vector<std::string>* skipped = nullptr);

/// method,acc,rmse,tp,tn,fp,fn,m. Deterministic for a fixed seed.
void write_comparison(std::ostream& os, std::span<const ComparisonRow> rows);
/// method,train_seconds,predict_seconds
void write_timing(std::ostream& os, std::span<const ComparisonRow> rows);
/// method,metric,value
void write_plot_data(std::ostream& os, std::span<const ComparisonRow> rows);

}  // namespace cobra::eval
