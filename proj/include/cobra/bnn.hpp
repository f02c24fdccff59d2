#pragma once

// Entropy-gated Bernoulli neural network: two ReLU hidden layers and a
// sigmoid output. Each source node connects to a number of units in the
// next layer that shrinks with its (average) Bernoulli entropy, so inputs
// that never carry information are pruned from the graph entirely.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cobra/core.hpp"

namespace cobra::bnn {

/// Number of weighted layers (two hidden + output).
inline constexpr std::size_t kDepth = 3;

enum class InputKind : std::uint8_t { context, advisor };

struct LayerWidths {
  std::size_t hidden1 = 0;
  std::size_t hidden2 = 0;
  std::size_t output = 1;

  friend bool operator==(const LayerWidths&, const LayerWidths&) = default;
};

/// S = ceil(sum_j (1 - H_j)).
std::size_t information_sum(std::span<const double> entropies);

/// |L1| = 2S + 3, |L2| = floor(4S/3) + 3, |L3| = 1.
LayerWidths compute_widths(std::span<const double> entropies);

/// Raw gate budget floor(width - h * width): the number of targets for which
/// the sgn(floor(.)) gate stays open.
std::size_t gate_budget(std::size_t width, double h);

/// Realized fan-out of a source node into a layer of `width` units:
/// min(width, max(m, gate_budget)), with m = 1 when the node is live.
std::size_t clamped_fan_out(std::size_t width, double h, bool live);

/// Row-major boolean matrix: rows are source nodes, columns targets.
class EdgeMask {
 public:
  EdgeMask() = default;
  EdgeMask(std::size_t rows, std::size_t cols, bool value = false)
      : rows_(rows), cols_(cols), bits_(rows * cols, value ? 1 : 0) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool operator()(std::size_t r, std::size_t c) const { return bits_[r * cols_ + c] != 0; }
  void set(std::size_t r, std::size_t c, bool v) { bits_[r * cols_ + c] = v ? 1 : 0; }

  std::size_t count() const noexcept;
  std::size_t row_count(std::size_t r) const;
  std::size_t col_count(std::size_t c) const;
  /// True when every edge set here is also set in `other`.
  bool subset_of(const EdgeMask& other) const;

  friend bool operator==(const EdgeMask&, const EdgeMask&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::uint8_t> bits_;
};

struct BnnTopology {
  std::array<std::size_t, kDepth + 1> widths{};
  std::vector<double> input_entropy;  // H(x_j) as measured (context entries are 0)
  std::vector<InputKind> input_kind;
  std::array<std::vector<double>, kDepth + 1> node_entropy;  // h per node per layer
  std::array<EdgeMask, kDepth> masks;  // masks[k]: L_k -> L_{k+1}
  bool dense = false;

  std::size_t input_count() const noexcept { return widths[0]; }
  std::size_t edge_count() const noexcept;

  friend bool operator==(const BnnTopology&, const BnnTopology&) = default;
};

/// Entropy-gated topology. Context inputs are forced to h = 0. When S = 0
/// every edge is kept so the network stays trainable.
BnnTopology build_topology(std::span<const double> entropies, std::span<const InputKind> kinds);

/// Fully connected ablation with the same widths as build_topology.
BnnTopology build_dense_topology(std::span<const double> entropies,
                                 std::span<const InputKind> kinds);

/// Row-major feature matrix with binary labels; a borrowed view.
struct DataView {
  std::span<const double> features;
  std::size_t width = 0;
  std::span<const Outcome> labels;

  std::size_t rows() const noexcept { return labels.size(); }
  std::span<const double> row(std::size_t i) const { return features.subspan(i * width, width); }
};

struct TrainHyperparams {
  double learning_rate = 0.01;
  std::size_t batch_size = 32;
  std::size_t epochs = 100;
  double momentum = 0.9;
  std::uint64_t seed = 42;
  double validation_fraction = 0.1;
  std::optional<std::size_t> patience = 10;

  /// Throws std::invalid_argument when a field is out of range.
  void validate() const;
};

class BnnNetwork {
 public:
  /// Parameters for one weighted layer, stored only for allowed edges and
  /// grouped by target node (CSR). Masked edges have no storage at all.
  struct Layer {
    std::size_t inputs = 0;
    std::size_t outputs = 0;
    std::vector<std::uint32_t> offsets;  // outputs + 1 entries
    std::vector<std::uint32_t> source;   // per edge
    std::vector<double> weight;          // per edge
    std::vector<double> bias;            // per output node

    friend bool operator==(const Layer&, const Layer&) = default;
  };

  /// All weights and biases zero.
  explicit BnnNetwork(BnnTopology topology);

  /// Weights uniform in +-sqrt(6 / (fan_in + fan_out)) per allowed edge,
  /// biases zero.
  static BnnNetwork initialized(BnnTopology topology, std::uint64_t seed);

  const BnnTopology& topology() const noexcept { return topology_; }
  std::size_t input_size() const noexcept { return topology_.widths[0]; }

  /// Output probability in (0, 1). Throws std::invalid_argument when
  /// x has the wrong length.
  double forward(std::span<const double> x) const;
  TrustScore predict(std::span<const double> x) const { return TrustScore(forward(x)); }

  /// Weight on edge (src in L_layer, dst in L_layer+1); 0 for a masked edge.
  double weight(std::size_t layer, std::size_t src, std::size_t dst) const;
  void set_weight(std::size_t layer, std::size_t src, std::size_t dst, double w);
  double bias(std::size_t layer, std::size_t node) const { return layers_.at(layer).bias.at(node); }
  void set_bias(std::size_t layer, std::size_t node, double b) { layers_.at(layer).bias.at(node) = b; }

  /// Dense |L_k| x |L_k+1| row-major copy of layer `layer` weights.
  std::vector<double> weight_matrix(std::size_t layer) const;

  const std::array<Layer, kDepth>& layers() const noexcept { return layers_; }
  std::array<Layer, kDepth>& mutable_layers() noexcept { return layers_; }

  friend bool operator==(const BnnNetwork&, const BnnNetwork&) = default;

 private:
  std::size_t edge_index(std::size_t layer, std::size_t src, std::size_t dst) const;

  BnnTopology topology_;
  std::array<Layer, kDepth> layers_;
};

/// Gradients aligned with BnnNetwork::Layer edge and bias storage.
struct Gradients {
  std::array<std::vector<double>, kDepth> weight;
  std::array<std::vector<double>, kDepth> bias;
};

/// Mean binary cross-entropy over the rows (probabilities clamped to
/// [1e-12, 1 - 1e-12] inside the log).
double batch_loss(const BnnNetwork& net, const DataView& data, std::span<const std::size_t> rows);

/// Analytic gradient of batch_loss by backpropagation.
Gradients batch_gradients(const BnnNetwork& net, const DataView& data,
                          std::span<const std::size_t> rows);

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;  // NaN without a validation split
  double train_acc = 0.0;
  double val_acc = 0.0;
  double seconds = 0.0;
};

struct TrainResult {
  BnnNetwork network;
  std::vector<EpochStats> history;
  bool stopped_early = false;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Mini-batch gradient descent with momentum on binary cross-entropy.
/// Deterministic for a given hyperparams.seed. Throws TrainingError when the
/// loss becomes non-finite.
TrainResult train(BnnNetwork net, const DataView& data, const TrainHyperparams& hyper);

// Files.

struct NetworkFile {
  BnnNetwork network;
  std::vector<std::string> input_names;
  std::optional<TrainHyperparams> hyperparams;
};

std::string serialize_network(const NetworkFile& file);
NetworkFile deserialize_network(std::string_view document);

void write_history(std::ostream& os, std::span<const EpochStats> history);
std::vector<EpochStats> read_history(std::istream& is);

}  // namespace cobra::bnn
