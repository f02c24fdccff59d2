#include "cobra/bnn.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <istream>
#include <json.hpp>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

namespace cobra::bnn {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Widths and gate

std::size_t information_sum(std::span<const double> entropies) {
  double sum = 0.0;
  for (double h : entropies) sum += 1.0 - h;
  // Snap floating residue so that e.g. 4 + 1e-15 does not round up to 5.
  const double nearest = std::round(sum);
  if (std::abs(sum - nearest) < 1e-9) sum = nearest;
  return static_cast<std::size_t>(std::max(0.0, std::ceil(sum)));
}

LayerWidths compute_widths(std::span<const double> entropies) {
  const std::size_t s = information_sum(entropies);
  return LayerWidths{2 * s + 3, (4 * s) / 3 + 3, 1};
}

std::size_t gate_budget(std::size_t width, double h) {
  const double w = static_cast<double>(width);
  const double budget = std::floor(w - h * w);
  return budget <= 0.0 ? 0 : static_cast<std::size_t>(budget);
}

std::size_t clamped_fan_out(std::size_t width, double h, bool live) {
  return std::min(width, std::max<std::size_t>(live ? 1 : 0, gate_budget(width, h)));
}

// ---------------------------------------------------------------------------
// Masks and topology

std::size_t EdgeMask::count() const noexcept {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

std::size_t EdgeMask::row_count(std::size_t r) const {
  std::size_t n = 0;
  for (std::size_t c = 0; c < cols_; ++c) n += (*this)(r, c);
  return n;
}

std::size_t EdgeMask::col_count(std::size_t c) const {
  std::size_t n = 0;
  for (std::size_t r = 0; r < rows_; ++r) n += (*this)(r, c);
  return n;
}

bool EdgeMask::subset_of(const EdgeMask& other) const {
  if (rows_ != other.rows_ || cols_ != other.cols_) return false;
  for (std::size_t i = 0; i < bits_.size(); ++i) {
    if (bits_[i] && !other.bits_[i]) return false;
  }
  return true;
}

std::size_t BnnTopology::edge_count() const noexcept {
  std::size_t n = 0;
  for (const auto& m : masks) n += m.count();
  return n;
}

namespace {

std::vector<double> input_entropies(std::span<const double> entropies,
                                    std::span<const InputKind> kinds) {
  if (entropies.empty()) throw std::invalid_argument("topology needs at least one input");
  if (entropies.size() != kinds.size()) {
    throw std::invalid_argument("entropy and input-kind lists differ in length");
  }
  std::vector<double> h(entropies.size());
  for (std::size_t i = 0; i < h.size(); ++i) {
    if (kinds[i] == InputKind::context) {
      h[i] = 0.0;
    } else {
      if (!(entropies[i] >= 0.0 && entropies[i] <= 1.0)) {
        throw std::invalid_argument("input entropy outside [0,1]");
      }
      h[i] = entropies[i];
    }
  }
  return h;
}

// h of each target node: mean h over connected sources, 1 when unconnected.
std::vector<double> propagate_entropy(const EdgeMask& mask, std::span<const double> source_h) {
  std::vector<double> sum(mask.cols(), 0.0);
  std::vector<std::size_t> deg(mask.cols(), 0);
  for (std::size_t i = 0; i < mask.rows(); ++i) {
    for (std::size_t j = 0; j < mask.cols(); ++j) {
      if (mask(i, j)) {
        sum[j] += source_h[i];
        ++deg[j];
      }
    }
  }
  std::vector<double> h(mask.cols());
  for (std::size_t j = 0; j < h.size(); ++j) {
    h[j] = deg[j] == 0 ? 1.0 : sum[j] / static_cast<double>(deg[j]);
  }
  return h;
}

BnnTopology make_topology(std::span<const double> entropies, std::span<const InputKind> kinds,
                          bool dense) {
  BnnTopology topo;
  auto h0 = input_entropies(entropies, kinds);
  const auto widths = compute_widths(h0);
  topo.widths = {h0.size(), widths.hidden1, widths.hidden2, widths.output};
  topo.input_entropy = h0;
  topo.input_kind.assign(kinds.begin(), kinds.end());
  topo.dense = dense;
  const bool full = dense || information_sum(h0) == 0;
  topo.node_entropy[0] = std::move(h0);

  std::vector<bool> live(topo.widths[0]);
  for (std::size_t i = 0; i < live.size(); ++i) live[i] = topo.node_entropy[0][i] < 1.0;

  for (std::size_t k = 0; k < kDepth; ++k) {
    const std::size_t rows = topo.widths[k];
    const std::size_t cols = topo.widths[k + 1];
    EdgeMask mask(rows, cols, full);
    if (!full) {
      for (std::size_t i = 0; i < rows; ++i) {
        const std::size_t fan = clamped_fan_out(cols, topo.node_entropy[k][i], live[i]);
        for (std::size_t t = 0; t < fan; ++t) mask.set(i, (i + t) % cols, true);
      }
    }
    topo.node_entropy[k + 1] = propagate_entropy(mask, topo.node_entropy[k]);
    live.assign(cols, false);
    for (std::size_t j = 0; j < cols; ++j) live[j] = mask.col_count(j) > 0;
    topo.masks[k] = std::move(mask);
  }
  return topo;
}

}  // namespace

BnnTopology build_topology(std::span<const double> entropies, std::span<const InputKind> kinds) {
  return make_topology(entropies, kinds, false);
}

BnnTopology build_dense_topology(std::span<const double> entropies,
                                 std::span<const InputKind> kinds) {
  return make_topology(entropies, kinds, true);
}

// ---------------------------------------------------------------------------
// Network

void TrainHyperparams::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
  if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must be in [0,1)");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw std::invalid_argument("validation_fraction must be in [0,1)");
  }
  if (patience && *patience == 0) throw std::invalid_argument("patience must be positive");
}

BnnNetwork::BnnNetwork(BnnTopology topology) : topology_(std::move(topology)) {
  for (std::size_t k = 0; k < kDepth; ++k) {
    const auto& mask = topology_.masks[k];
    if (mask.rows() != topology_.widths[k] || mask.cols() != topology_.widths[k + 1]) {
      throw std::invalid_argument("mask shape does not match layer widths");
    }
    Layer& layer = layers_[k];
    layer.inputs = mask.rows();
    layer.outputs = mask.cols();
    layer.offsets.assign(layer.outputs + 1, 0);
    for (std::size_t j = 0; j < layer.outputs; ++j) {
      for (std::size_t i = 0; i < layer.inputs; ++i) {
        if (mask(i, j)) layer.source.push_back(static_cast<std::uint32_t>(i));
      }
      layer.offsets[j + 1] = static_cast<std::uint32_t>(layer.source.size());
    }
    layer.weight.assign(layer.source.size(), 0.0);
    layer.bias.assign(layer.outputs, 0.0);
  }
}

BnnNetwork BnnNetwork::initialized(BnnTopology topology, std::uint64_t seed) {
  BnnNetwork net(std::move(topology));
  std::mt19937_64 rng(seed);
  for (auto& layer : net.layers_) {
    const double limit = std::sqrt(6.0 / static_cast<double>(layer.inputs + layer.outputs));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (auto& w : layer.weight) w = dist(rng);
  }
  return net;
}

std::size_t BnnNetwork::edge_index(std::size_t layer, std::size_t src, std::size_t dst) const {
  const Layer& l = layers_.at(layer);
  if (src >= l.inputs || dst >= l.outputs) throw std::out_of_range("edge index out of range");
  const auto first = l.source.begin() + l.offsets[dst];
  const auto last = l.source.begin() + l.offsets[dst + 1];
  const auto it = std::lower_bound(first, last, static_cast<std::uint32_t>(src));
  if (it == last || *it != src) return std::numeric_limits<std::size_t>::max();
  return static_cast<std::size_t>(it - l.source.begin());
}

double BnnNetwork::weight(std::size_t layer, std::size_t src, std::size_t dst) const {
  const auto e = edge_index(layer, src, dst);
  return e == std::numeric_limits<std::size_t>::max() ? 0.0 : layers_[layer].weight[e];
}

void BnnNetwork::set_weight(std::size_t layer, std::size_t src, std::size_t dst, double w) {
  const auto e = edge_index(layer, src, dst);
  if (e == std::numeric_limits<std::size_t>::max()) {
    throw std::invalid_argument("cannot set weight on a masked edge");
  }
  layers_[layer].weight[e] = w;
}

std::vector<double> BnnNetwork::weight_matrix(std::size_t layer) const {
  const Layer& l = layers_.at(layer);
  std::vector<double> m(l.inputs * l.outputs, 0.0);
  for (std::size_t j = 0; j < l.outputs; ++j) {
    for (auto e = l.offsets[j]; e < l.offsets[j + 1]; ++e) m[l.source[e] * l.outputs + j] = l.weight[e];
  }
  return m;
}

namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

constexpr double kLogClamp = 1e-12;

double cross_entropy(double y, Outcome t) {
  const double q = std::clamp(y, kLogClamp, 1.0 - kLogClamp);
  return t ? -std::log(q) : -std::log(1.0 - q);
}

// Pre-activations and outputs of every layer for one row.
struct Activations {
  std::array<std::vector<double>, kDepth> pre;
  std::array<std::vector<double>, kDepth> out;
  std::array<std::vector<double>, kDepth> delta;

  explicit Activations(const BnnNetwork& net) {
    for (std::size_t k = 0; k < kDepth; ++k) {
      const auto n = net.layers()[k].outputs;
      pre[k].assign(n, 0.0);
      out[k].assign(n, 0.0);
      delta[k].assign(n, 0.0);
    }
  }
};

double run_forward(const BnnNetwork& net, std::span<const double> x, Activations& act) {
  std::span<const double> input = x;
  for (std::size_t k = 0; k < kDepth; ++k) {
    const auto& layer = net.layers()[k];
    auto& pre = act.pre[k];
    auto& out = act.out[k];
    const bool last = k + 1 == kDepth;
    for (std::size_t j = 0; j < layer.outputs; ++j) {
      double z = layer.bias[j];
      for (auto e = layer.offsets[j]; e < layer.offsets[j + 1]; ++e) {
        z += layer.weight[e] * input[layer.source[e]];
      }
      pre[j] = z;
      out[j] = last ? sigmoid(z) : std::max(0.0, z);
    }
    input = out;
  }
  return act.out[kDepth - 1][0];
}

// Adds d(loss)/d(param) for one row into `grad`. Returns the prediction.
double accumulate_row(const BnnNetwork& net, std::span<const double> x, Outcome t,
                      Activations& act, Gradients& grad) {
  const double y = run_forward(net, x, act);
  act.delta[kDepth - 1][0] = y - static_cast<double>(t);
  for (std::size_t k = kDepth; k-- > 0;) {
    const auto& layer = net.layers()[k];
    std::span<const double> input = k == 0 ? x : std::span<const double>(act.out[k - 1]);
    auto& gw = grad.weight[k];
    auto& gb = grad.bias[k];
    if (k > 0) std::fill(act.delta[k - 1].begin(), act.delta[k - 1].end(), 0.0);
    for (std::size_t j = 0; j < layer.outputs; ++j) {
      const double d = act.delta[k][j];
      if (d == 0.0) continue;
      gb[j] += d;
      for (auto e = layer.offsets[j]; e < layer.offsets[j + 1]; ++e) {
        const auto src = layer.source[e];
        gw[e] += d * input[src];
        if (k > 0) act.delta[k - 1][src] += layer.weight[e] * d;
      }
    }
    if (k > 0) {
      auto& below = act.delta[k - 1];
      const auto& pre = act.pre[k - 1];
      for (std::size_t i = 0; i < below.size(); ++i) {
        if (pre[i] <= 0.0) below[i] = 0.0;
      }
    }
  }
  return y;
}

Gradients zero_gradients(const BnnNetwork& net) {
  Gradients g;
  for (std::size_t k = 0; k < kDepth; ++k) {
    g.weight[k].assign(net.layers()[k].weight.size(), 0.0);
    g.bias[k].assign(net.layers()[k].bias.size(), 0.0);
  }
  return g;
}

void check_view(const BnnNetwork& net, const DataView& data) {
  if (data.width != net.input_size()) {
    throw std::invalid_argument("data width " + std::to_string(data.width) +
                                " does not match network input size " +
                                std::to_string(net.input_size()));
  }
  if (data.features.size() != data.rows() * data.width) {
    throw std::invalid_argument("feature matrix size does not match label count");
  }
}

}  // namespace

double BnnNetwork::forward(std::span<const double> x) const {
  if (x.size() != input_size()) {
    throw std::invalid_argument("forward: input has " + std::to_string(x.size()) +
                                " values, network expects " + std::to_string(input_size()));
  }
  Activations act(*this);
  return run_forward(*this, x, act);
}

double batch_loss(const BnnNetwork& net, const DataView& data, std::span<const std::size_t> rows) {
  check_view(net, data);
  if (rows.empty()) throw std::invalid_argument("batch_loss: empty batch");
  Activations act(net);
  double loss = 0.0;
  for (auto r : rows) loss += cross_entropy(run_forward(net, data.row(r), act), data.labels[r]);
  return loss / static_cast<double>(rows.size());
}

Gradients batch_gradients(const BnnNetwork& net, const DataView& data,
                          std::span<const std::size_t> rows) {
  check_view(net, data);
  if (rows.empty()) throw std::invalid_argument("batch_gradients: empty batch");
  Activations act(net);
  Gradients g = zero_gradients(net);
  for (auto r : rows) accumulate_row(net, data.row(r), data.labels[r], act, g);
  const double scale = 1.0 / static_cast<double>(rows.size());
  for (std::size_t k = 0; k < kDepth; ++k) {
    for (auto& v : g.weight[k]) v *= scale;
    for (auto& v : g.bias[k]) v *= scale;
  }
  return g;
}

// ---------------------------------------------------------------------------
// Training

TrainResult train(BnnNetwork net, const DataView& data, const TrainHyperparams& hyper) {
  hyper.validate();
  check_view(net, data);
  const std::size_t n = data.rows();
  if (n == 0) throw std::invalid_argument("train: no training rows");
  for (auto t : data.labels) {
    if (t > 1) throw std::invalid_argument("train: labels must be 0 or 1");
  }

  std::mt19937_64 rng(hyper.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t n_val = static_cast<std::size_t>(std::floor(hyper.validation_fraction * static_cast<double>(n)));
  n_val = std::min(n_val, n - 1);
  std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> fit(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());

  TrainResult result{std::move(net), {}, false};
  BnnNetwork& model = result.network;
  Activations act(model);
  Gradients grad = zero_gradients(model);
  Gradients velocity = zero_gradients(model);

  const bool early_stop = hyper.patience.has_value() && !val.empty();
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  auto best_layers = model.layers();

  for (std::size_t epoch = 1; epoch <= hyper.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::shuffle(fit.begin(), fit.end(), rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;

    for (std::size_t b = 0; b < fit.size(); b += hyper.batch_size) {
      const std::size_t end = std::min(fit.size(), b + hyper.batch_size);
      for (std::size_t k = 0; k < kDepth; ++k) {
        std::fill(grad.weight[k].begin(), grad.weight[k].end(), 0.0);
        std::fill(grad.bias[k].begin(), grad.bias[k].end(), 0.0);
      }
      double batch_loss_sum = 0.0;
      for (std::size_t i = b; i < end; ++i) {
        const auto r = fit[i];
        const double y = accumulate_row(model, data.row(r), data.labels[r], act, grad);
        batch_loss_sum += cross_entropy(y, data.labels[r]);
        correct += static_cast<std::size_t>((y >= 0.5) == (data.labels[r] == 1));
      }
      if (!std::isfinite(batch_loss_sum)) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(b / hyper.batch_size) +
                            "; lower the learning rate");
      }
      loss_sum += batch_loss_sum;

      const double scale = hyper.learning_rate / static_cast<double>(end - b);
      auto& layers = model.mutable_layers();
      for (std::size_t k = 0; k < kDepth; ++k) {
        auto& w = layers[k].weight;
        auto& vw = velocity.weight[k];
        for (std::size_t e = 0; e < w.size(); ++e) {
          vw[e] = hyper.momentum * vw[e] - scale * grad.weight[k][e];
          w[e] += vw[e];
        }
        auto& bias = layers[k].bias;
        auto& vb = velocity.bias[k];
        for (std::size_t j = 0; j < bias.size(); ++j) {
          vb[j] = hyper.momentum * vb[j] - scale * grad.bias[k][j];
          bias[j] += vb[j];
        }
      }
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_sum / static_cast<double>(fit.size());
    stats.train_acc = static_cast<double>(correct) / static_cast<double>(fit.size());
    stats.val_loss = std::numeric_limits<double>::quiet_NaN();
    stats.val_acc = std::numeric_limits<double>::quiet_NaN();
    if (!val.empty()) {
      double vl = 0.0;
      std::size_t vc = 0;
      for (auto r : val) {
        const double y = run_forward(model, data.row(r), act);
        vl += cross_entropy(y, data.labels[r]);
        vc += static_cast<std::size_t>((y >= 0.5) == (data.labels[r] == 1));
      }
      stats.val_loss = vl / static_cast<double>(val.size());
      stats.val_acc = static_cast<double>(vc) / static_cast<double>(val.size());
    }
    stats.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.history.push_back(stats);

    if (early_stop) {
      if (stats.val_loss < best_val) {
        best_val = stats.val_loss;
        best_layers = model.layers();
        since_best = 0;
      } else if (++since_best >= *hyper.patience) {
        result.stopped_early = true;
        break;
      }
    }
  }
  if (early_stop && !result.history.empty()) model.mutable_layers() = best_layers;
  return result;
}

// ---------------------------------------------------------------------------
// Files

namespace {

constexpr int kNetworkFormatVersion = 1;

const json& field(const json& doc, const char* name) {
  auto it = doc.find(name);
  if (it == doc.end()) throw ParseError(std::string("network document: missing field '") + name + "'");
  return *it;
}

template <class T>
T get_field(const json& doc, const char* name) {
  const json& v = field(doc, name);
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw ParseError(std::string("network document: field '") + name + "' has the wrong type");
  }
}

json hyper_to_json(const TrainHyperparams& h) {
  json j{{"learning_rate", h.learning_rate},
         {"batch_size", h.batch_size},
         {"epochs", h.epochs},
         {"momentum", h.momentum},
         {"seed", h.seed},
         {"validation_fraction", h.validation_fraction}};
  j["patience"] = h.patience ? json(*h.patience) : json(nullptr);
  return j;
}

TrainHyperparams hyper_from_json(const json& j) {
  TrainHyperparams h;
  h.learning_rate = get_field<double>(j, "learning_rate");
  h.batch_size = get_field<std::size_t>(j, "batch_size");
  h.epochs = get_field<std::size_t>(j, "epochs");
  h.momentum = get_field<double>(j, "momentum");
  h.seed = get_field<std::uint64_t>(j, "seed");
  h.validation_fraction = get_field<double>(j, "validation_fraction");
  const json& p = field(j, "patience");
  h.patience = p.is_null() ? std::nullopt : std::optional<std::size_t>(p.get<std::size_t>());
  return h;
}

}  // namespace

std::string serialize_network(const NetworkFile& file) {
  const auto& net = file.network;
  const auto& topo = net.topology();
  json doc;
  doc["format"] = "cobra-bnn";
  doc["version"] = kNetworkFormatVersion;
  doc["architecture"] = topo.dense ? "dense" : "bnn";
  doc["widths"] = topo.widths;
  doc["activations"] = {"relu", "relu", "sigmoid"};
  doc["input_names"] = file.input_names;
  doc["input_entropy"] = topo.input_entropy;
  json kinds = json::array();
  for (auto k : topo.input_kind) kinds.push_back(k == InputKind::context ? "context" : "advisor");
  doc["input_kind"] = std::move(kinds);
  doc["node_entropy"] = topo.node_entropy;
  json masks = json::array();
  json weights = json::array();
  json biases = json::array();
  for (std::size_t k = 0; k < kDepth; ++k) {
    const auto& mask = topo.masks[k];
    json rows = json::array();
    for (std::size_t i = 0; i < mask.rows(); ++i) {
      std::string bits(mask.cols(), '0');
      for (std::size_t j = 0; j < mask.cols(); ++j) bits[j] = mask(i, j) ? '1' : '0';
      rows.push_back(std::move(bits));
    }
    masks.push_back(std::move(rows));
    const auto m = net.weight_matrix(k);
    json wrows = json::array();
    for (std::size_t i = 0; i < mask.rows(); ++i) {
      wrows.push_back(std::vector<double>(m.begin() + static_cast<std::ptrdiff_t>(i * mask.cols()),
                                          m.begin() + static_cast<std::ptrdiff_t>((i + 1) * mask.cols())));
    }
    weights.push_back(std::move(wrows));
    biases.push_back(net.layers()[k].bias);
  }
  doc["masks"] = std::move(masks);
  doc["weights"] = std::move(weights);
  doc["biases"] = std::move(biases);
  doc["training"] = file.hyperparams ? hyper_to_json(*file.hyperparams) : json(nullptr);
  return doc.dump(1);
}

NetworkFile deserialize_network(std::string_view document) {
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("network document: ") + e.what());
  }
  if (!doc.is_object()) throw ParseError("network document: not an object");
  if (get_field<std::string>(doc, "format") != "cobra-bnn") {
    throw ParseError("network document: unexpected format tag");
  }
  if (get_field<int>(doc, "version") != kNetworkFormatVersion) {
    throw ParseError("network document: unsupported version");
  }
  const auto arch = get_field<std::string>(doc, "architecture");
  if (arch != "bnn" && arch != "dense") {
    throw ParseError("network document: unknown architecture '" + arch + "'");
  }
  BnnTopology topo;
  topo.dense = arch == "dense";
  topo.widths = get_field<std::array<std::size_t, kDepth + 1>>(doc, "widths");
  topo.input_entropy = get_field<std::vector<double>>(doc, "input_entropy");
  for (const auto& k : get_field<std::vector<std::string>>(doc, "input_kind")) {
    if (k == "context") {
      topo.input_kind.push_back(InputKind::context);
    } else if (k == "advisor") {
      topo.input_kind.push_back(InputKind::advisor);
    } else {
      throw ParseError("network document: unknown input kind '" + k + "'");
    }
  }
  topo.node_entropy = get_field<std::array<std::vector<double>, kDepth + 1>>(doc, "node_entropy");
  if (topo.input_entropy.size() != topo.widths[0] || topo.input_kind.size() != topo.widths[0]) {
    throw ParseError("network document: input metadata length differs from widths[0]");
  }
  if (topo.widths[kDepth] != 1) throw ParseError("network document: output width must be 1");

  const auto masks = get_field<std::vector<std::vector<std::string>>>(doc, "masks");
  const auto weights = get_field<std::vector<std::vector<std::vector<double>>>>(doc, "weights");
  const auto biases = get_field<std::vector<std::vector<double>>>(doc, "biases");
  if (masks.size() != kDepth || weights.size() != kDepth || biases.size() != kDepth) {
    throw ParseError("network document: expected 3 mask/weight/bias layers");
  }
  for (std::size_t k = 0; k < kDepth; ++k) {
    const std::size_t rows = topo.widths[k];
    const std::size_t cols = topo.widths[k + 1];
    if (masks[k].size() != rows) throw ParseError("network document: mask row count mismatch");
    EdgeMask mask(rows, cols);
    for (std::size_t i = 0; i < rows; ++i) {
      if (masks[k][i].size() != cols) throw ParseError("network document: mask column count mismatch");
      for (std::size_t j = 0; j < cols; ++j) {
        const char c = masks[k][i][j];
        if (c != '0' && c != '1') throw ParseError("network document: mask bits must be 0/1");
        mask.set(i, j, c == '1');
      }
    }
    topo.masks[k] = std::move(mask);
    if (topo.node_entropy[k + 1].size() != cols) {
      throw ParseError("network document: node_entropy length mismatch");
    }
  }

  NetworkFile file{BnnNetwork(topo), {}, std::nullopt};
  for (std::size_t k = 0; k < kDepth; ++k) {
    const std::size_t rows = topo.widths[k];
    const std::size_t cols = topo.widths[k + 1];
    if (weights[k].size() != rows || biases[k].size() != cols) {
      throw ParseError("network document: weight/bias shape mismatch in layer " + std::to_string(k));
    }
    for (std::size_t i = 0; i < rows; ++i) {
      if (weights[k][i].size() != cols) throw ParseError("network document: weight row length mismatch");
      for (std::size_t j = 0; j < cols; ++j) {
        const double w = weights[k][i][j];
        if (topo.masks[k](i, j)) {
          file.network.set_weight(k, i, j, w);
        } else if (w != 0.0) {
          throw ParseError("network document: non-zero weight on masked edge (" +
                           std::to_string(k) + "," + std::to_string(i) + "," + std::to_string(j) + ")");
        }
      }
    }
    for (std::size_t j = 0; j < cols; ++j) file.network.set_bias(k, j, biases[k][j]);
  }
  file.input_names = get_field<std::vector<std::string>>(doc, "input_names");
  if (!file.input_names.empty() && file.input_names.size() != topo.widths[0]) {
    throw ParseError("network document: input_names length differs from widths[0]");
  }
  const json& training = field(doc, "training");
  if (!training.is_null()) file.hyperparams = hyper_from_json(training);
  return file;
}

void write_history(std::ostream& os, std::span<const EpochStats> history) {
  os << "epoch,train_loss,val_loss,train_acc,val_acc,seconds\n";
  for (const auto& e : history) {
    os << e.epoch << ',' << format_double(e.train_loss) << ',' << format_double(e.val_loss) << ','
       << format_double(e.train_acc) << ',' << format_double(e.val_acc) << ','
       << format_double(e.seconds) << '\n';
  }
}

std::vector<EpochStats> read_history(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "epoch,train_loss,val_loss,train_acc,val_acc,seconds") {
    throw ParseError("history: bad header");
  }
  std::vector<EpochStats> out;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) f.push_back(tok);
    const std::string where = "history line " + std::to_string(line_no);
    if (f.size() != 6) throw ParseError(where + ": expected 6 fields");
    EpochStats e;
    e.epoch = static_cast<std::size_t>(parse_double(f[0], where));
    e.train_loss = parse_double(f[1], where);
    e.val_loss = parse_double(f[2], where);
    e.train_acc = parse_double(f[3], where);
    e.val_acc = parse_double(f[4], where);
    e.seconds = parse_double(f[5], where);
    out.push_back(e);
  }
  return out;
}

}  // namespace cobra::bnn
