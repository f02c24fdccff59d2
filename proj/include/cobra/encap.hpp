#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "cobra/core.hpp"

namespace cobra::encap {

enum class ModelKind : std::uint8_t { decision_tree, gaussian_nb, flipped_wrapper };

std::string_view to_string(ModelKind kind);
std::optional<ModelKind> parse_model_kind(std::string_view name);

/// A labelled training example for an encapsulated classifier.
struct LabelledContext {
  ContextVector context;
  Outcome outcome = 0;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;   // taken when context[feature] <= threshold
  int right = -1;
  double probability = 0.0;  // empirical positive fraction at this node
  std::size_t samples = 0;

  bool is_leaf() const noexcept { return feature < 0; }
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

struct DecisionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  friend bool operator==(const DecisionTree&, const DecisionTree&) = default;
};

/// Per-class Gaussian likelihoods. Index 0 is class t=0, index 1 is t=1.
struct GaussianNb {
  std::array<std::size_t, 2> class_count{};
  std::array<double, 2> prior{};
  std::array<std::vector<double>, 2> mean;
  std::array<std::vector<double>, 2> variance;

  friend bool operator==(const GaussianNb&, const GaussianNb&) = default;
};

struct TreeOptions {
  int max_depth = 8;
  std::size_t min_leaf = 2;
};

inline constexpr double kGnbVarianceFloor = 1e-9;

class EncapsulatedModel;

/// Malicious testimony: reports 1 - p for whatever the wrapped model says.
struct FlippedWrapper {
  std::shared_ptr<const EncapsulatedModel> inner;
};

/// A classifier M_u^z trained by advisor `owner` on its interactions with
/// `subject`. Immutable once built; copies share wrapped inner models.
class EncapsulatedModel {
 public:
  using Parameters = std::variant<DecisionTree, GaussianNb, FlippedWrapper>;

  EncapsulatedModel(AgentId owner, AgentId subject, std::size_t dimension, Parameters params);

  ModelKind kind() const noexcept;
  const AgentId& owner() const noexcept { return owner_; }
  const AgentId& subject() const noexcept { return subject_; }
  std::size_t dimension() const noexcept { return dimension_; }
  const Parameters& parameters() const noexcept { return params_; }

  /// Predicted probability that the subject meets the SLA in `context`.
  /// Throws std::invalid_argument on a dimension mismatch.
  TrustScore predict(const ContextVector& context) const;
  double predict(std::span<const double> context) const;

 private:
  AgentId owner_;
  AgentId subject_;
  std::size_t dimension_ = 0;
  Parameters params_;
};

EncapsulatedModel train_decision_tree(AgentId owner, AgentId subject,
                                      std::span<const LabelledContext> records,
                                      const TreeOptions& options = {});

EncapsulatedModel train_gaussian_nb(AgentId owner, AgentId subject,
                                    std::span<const LabelledContext> records);

EncapsulatedModel flip(const EncapsulatedModel& model);

// Model exchange document (JSON).

std::string serialize_model(const EncapsulatedModel& model);
EncapsulatedModel deserialize_model(std::string_view document);

/// R_a: at most one model per (advisor, subject) pair.
class ModelRepository {
 public:
  using Key = std::pair<AgentId, AgentId>;

  /// Inserts or replaces the model for (owner, subject). Extends rosters.
  void put(EncapsulatedModel model);
  const EncapsulatedModel* find(const AgentId& advisor, const AgentId& subject) const;
  bool contains(const AgentId& advisor, const AgentId& subject) const {
    return find(advisor, subject) != nullptr;
  }

  std::size_t size() const noexcept { return models_.size(); }
  bool empty() const noexcept { return models_.empty(); }

  /// Advisors and subjects in first-insertion order.
  const std::vector<AgentId>& advisors() const noexcept { return advisors_; }
  const std::vector<AgentId>& subjects() const noexcept { return subjects_; }

  const std::map<Key, EncapsulatedModel>& models() const noexcept { return models_; }

  /// One file per (u, z) pair, named `<u>__<z>.json`.
  void save(const std::string& directory) const;
  static ModelRepository load(const std::string& directory);

 private:
  std::map<Key, EncapsulatedModel> models_;
  std::vector<AgentId> advisors_;
  std::vector<AgentId> subjects_;
};

/// Copy of `repo` where every model owned by one of `owners` is flipped.
ModelRepository flip_owned(const ModelRepository& repo, std::span<const AgentId> owners);

enum class KindPolicy : std::uint8_t { all_tree, all_gnb, hybrid };

std::string_view to_string(KindPolicy policy);
std::optional<KindPolicy> parse_kind_policy(std::string_view name);

/// Classifier kind per advisor. The hybrid policy gives a seeded random
/// floor(n/2) advisors a decision tree and the rest Gaussian NB.
std::map<AgentId, ModelKind> assign_kinds(std::span<const AgentId> advisors, KindPolicy policy,
                                          std::uint64_t seed);

struct AdvisorEvidence {
  AgentId advisor;
  EvidenceStore records;

  friend bool operator==(const AdvisorEvidence&, const AdvisorEvidence&) = default;
};

/// Trains one model per (advisor, target) pair that has at least one record.
ModelRepository build_repository(std::span<const AdvisorEvidence> evidence, KindPolicy policy,
                                 std::uint64_t seed = 0);

}  // namespace cobra::encap
