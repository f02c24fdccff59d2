#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "cobra/bnn.hpp"
#include "cobra/core.hpp"
#include "cobra/encap.hpp"

namespace cobra::assembly {

/// Placeholder input for an advisor that has not shared a model on the target.
inline constexpr double kNoInformation = 0.5;

/// BNN training data: one row per evidence record laid out as
/// [context features..., G_a for each advisor in roster order], plus labels.
class TrainingSet {
 public:
  TrainingSet() = default;
  TrainingSet(std::vector<std::string> context_names, std::vector<AgentId> roster);

  std::size_t context_size() const noexcept { return context_names_.size(); }
  std::size_t advisor_count() const noexcept { return roster_.size(); }
  std::size_t width() const noexcept { return context_size() + advisor_count(); }
  std::size_t rows() const noexcept { return labels_.size(); }
  bool empty() const noexcept { return labels_.empty(); }

  const std::vector<std::string>& context_names() const noexcept { return context_names_; }
  const std::vector<AgentId>& roster() const noexcept { return roster_; }
  const std::vector<double>& features() const noexcept { return features_; }
  const std::vector<Outcome>& labels() const noexcept { return labels_; }

  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(features_).subspan(i * width(), width());
  }
  double at(std::size_t row, std::size_t col) const { return features_.at(row * width() + col); }
  void set(std::size_t row, std::size_t col, double value);

  void append_row(std::span<const double> values, Outcome label);

  /// Adds an advisor column filled with the no-information placeholder.
  void add_advisor(const AgentId& advisor);
  /// Column index of `advisor`, or npos.
  std::size_t advisor_column(const AgentId& advisor) const;
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  bnn::DataView view() const { return {features_, width(), labels_}; }

  /// Copy holding only the selected rows, in the given order.
  TrainingSet select(std::span<const std::size_t> rows) const;

  /// H of each column: 0 for context columns, average Bernoulli entropy for
  /// advisor columns.
  std::vector<double> column_entropies() const;
  std::vector<bnn::InputKind> input_kinds() const;
  /// Context names followed by advisor ids.
  std::vector<std::string> input_names() const;

  friend bool operator==(const TrainingSet&, const TrainingSet&) = default;

 private:
  std::vector<std::string> context_names_;
  std::vector<AgentId> roster_;
  std::vector<double> features_;
  std::vector<Outcome> labels_;
};

/// Work counters for the assembly algorithms.
struct AssemblyCounters {
  std::size_t model_queries = 0;  // G_a evaluations
  std::size_t rows_visited = 0;
};

/// G_a(u, z, context): the shared model's prediction, or 0.5 when absent.
double advisor_input(const encap::ModelRepository& repo, const AgentId& advisor,
                     const AgentId& target, const ContextVector& context);

/// The BNN input row x for (target, context) given a roster.
std::vector<double> input_row(const encap::ModelRepository& repo, std::span<const AgentId> roster,
                              const AgentId& target, const ContextVector& context,
                              AssemblyCounters* counters = nullptr);

/// Training data initialization over all of E_a.
TrainingSet init_training_data(std::span<const EvidenceRecord> evidence,
                               const encap::ModelRepository& repo, std::span<const AgentId> roster,
                               std::vector<std::string> context_names = {},
                               AssemblyCounters* counters = nullptr);

/// Appends the row for one new first-hand record.
void update_vertical(TrainingSet& set, const EvidenceRecord& record,
                     const encap::ModelRepository& repo, AssemblyCounters* counters = nullptr);

/// Recomputes the model's owner column on every row whose evidence target is
/// the model's subject. An unknown owner first gets a 0.5 column.
/// `evidence` must be the records the rows were built from, in row order.
void update_horizontal(TrainingSet& set, const encap::EncapsulatedModel& model,
                       std::span<const EvidenceRecord> evidence,
                       AssemblyCounters* counters = nullptr);

/// Delimited text: header of context names, `@`-prefixed advisor ids, then
/// `label`; one row per record.
void write_training_set(std::ostream& os, const TrainingSet& set);
TrainingSet read_training_set(std::istream& is);

}  // namespace cobra::assembly
