#include "cobra/encap.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <numbers>
#include <random>
#include <sstream>

namespace cobra::encap {

using json = nlohmann::json;

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::decision_tree: return "decision_tree";
    case ModelKind::gaussian_nb: return "gaussian_nb";
    case ModelKind::flipped_wrapper: return "flipped_wrapper";
  }
  return "unknown";
}

std::optional<ModelKind> parse_model_kind(std::string_view name) {
  if (name == "decision_tree") return ModelKind::decision_tree;
  if (name == "gaussian_nb") return ModelKind::gaussian_nb;
  if (name == "flipped_wrapper") return ModelKind::flipped_wrapper;
  return std::nullopt;
}

EncapsulatedModel::EncapsulatedModel(AgentId owner, AgentId subject, std::size_t dimension,
                                     Parameters params)
    : owner_(std::move(owner)), subject_(std::move(subject)), dimension_(dimension),
      params_(std::move(params)) {
  if (const auto* w = std::get_if<FlippedWrapper>(&params_)) {
    if (!w->inner) throw std::invalid_argument("flipped wrapper without inner model");
    if (w->inner->dimension() != dimension_) {
      throw std::invalid_argument("flipped wrapper dimension differs from inner model");
    }
  }
}

ModelKind EncapsulatedModel::kind() const noexcept {
  return static_cast<ModelKind>(params_.index());
}

namespace {

double predict_tree(const DecisionTree& tree, std::span<const double> x) {
  std::size_t i = 0;
  while (!tree.nodes[i].is_leaf()) {
    const auto& n = tree.nodes[i];
    i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left
                                                                                         : n.right);
  }
  return tree.nodes[i].probability;
}

double log_joint(const GaussianNb& nb, int c, std::span<const double> x) {
  double lj = std::log(nb.prior[c]);
  for (std::size_t f = 0; f < x.size(); ++f) {
    const double var = nb.variance[c][f];
    const double d = x[f] - nb.mean[c][f];
    lj -= 0.5 * std::log(2.0 * std::numbers::pi * var) + d * d / (2.0 * var);
  }
  return lj;
}

double predict_gnb(const GaussianNb& nb, std::span<const double> x) {
  if (nb.class_count[1] == 0) return 0.0;
  if (nb.class_count[0] == 0) return 1.0;
  const double d = log_joint(nb, 1, x) - log_joint(nb, 0, x);
  if (d >= 0.0) return 1.0 / (1.0 + std::exp(-d));
  const double e = std::exp(d);
  return e / (1.0 + e);
}

}  // namespace

double EncapsulatedModel::predict(std::span<const double> context) const {
  if (context.size() != dimension_) {
    throw std::invalid_argument("predict: context has " + std::to_string(context.size()) +
                                " features, model expects " + std::to_string(dimension_));
  }
  return std::visit(
      [&](const auto& p) -> double {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, DecisionTree>) {
          return predict_tree(p, context);
        } else if constexpr (std::is_same_v<T, GaussianNb>) {
          return predict_gnb(p, context);
        } else {
          return 1.0 - p.inner->predict(context);
        }
      },
      params_);
}

TrustScore EncapsulatedModel::predict(const ContextVector& context) const {
  return TrustScore(predict(context.values()));
}

// ---------------------------------------------------------------------------
// CART training

namespace {

std::size_t check_records(std::span<const LabelledContext> records, const char* who) {
  if (records.empty()) throw std::invalid_argument(std::string(who) + ": no training records");
  const std::size_t dim = records.front().context.size();
  for (const auto& r : records) {
    if (r.context.size() != dim) {
      throw std::invalid_argument(std::string(who) + ": inconsistent context lengths");
    }
  }
  return dim;
}

class TreeBuilder {
 public:
  TreeBuilder(std::span<const LabelledContext> records, std::size_t dim, const TreeOptions& opt)
      : records_(records), dim_(dim), opt_(opt) {}

  DecisionTree build() {
    std::vector<std::size_t> idx(records_.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    grow(idx, 0);
    return std::move(tree_);
  }

 private:
  struct Split {
    int feature = -1;
    double threshold = 0.0;
  };

  // Weighted child impurity up to the constant factor 2/n; exact on counts.
  static double impurity(double pos, double n) { return n > 0 ? pos * (n - pos) / n : 0.0; }

  Split best_split(const std::vector<std::size_t>& idx, std::size_t pos) const {
    const double n = static_cast<double>(idx.size());
    const double parent = impurity(static_cast<double>(pos), n);
    double best_gain = 1e-12;
    Split best;
    std::vector<std::pair<double, Outcome>> column(idx.size());
    for (std::size_t f = 0; f < dim_; ++f) {
      for (std::size_t i = 0; i < idx.size(); ++i) {
        const auto& r = records_[idx[i]];
        column[i] = {r.context[f], r.outcome};
      }
      std::sort(column.begin(), column.end());
      std::size_t left_n = 0;
      std::size_t left_pos = 0;
      for (std::size_t i = 0; i + 1 < column.size(); ++i) {
        ++left_n;
        left_pos += column[i].second;
        const double lo = column[i].first;
        const double hi = column[i + 1].first;
        if (lo == hi) continue;
        const std::size_t right_n = idx.size() - left_n;
        if (left_n < opt_.min_leaf || right_n < opt_.min_leaf) continue;
        const double children =
            impurity(static_cast<double>(left_pos), static_cast<double>(left_n)) +
            impurity(static_cast<double>(pos - left_pos), static_cast<double>(right_n));
        const double gain = parent - children;
        if (gain > best_gain) {
          best_gain = gain;
          double mid = lo + (hi - lo) / 2.0;
          if (!(mid < hi)) mid = lo;
          best = {static_cast<int>(f), mid};
        }
      }
    }
    return best;
  }

  int grow(const std::vector<std::size_t>& idx, int depth) {
    std::size_t pos = 0;
    for (auto i : idx) pos += records_[i].outcome;
    const int id = static_cast<int>(tree_.nodes.size());
    TreeNode node;
    node.samples = idx.size();
    node.probability = static_cast<double>(pos) / static_cast<double>(idx.size());
    tree_.nodes.push_back(node);

    const bool pure = pos == 0 || pos == idx.size();
    if (pure || depth >= opt_.max_depth || idx.size() < 2 * opt_.min_leaf) return id;

    const Split split = best_split(idx, pos);
    if (split.feature < 0) return id;

    std::vector<std::size_t> left;
    std::vector<std::size_t> right;
    for (auto i : idx) {
      (records_[i].context[static_cast<std::size_t>(split.feature)] <= split.threshold ? left
                                                                                       : right)
          .push_back(i);
    }
    const int l = grow(left, depth + 1);
    const int r = grow(right, depth + 1);
    auto& n = tree_.nodes[static_cast<std::size_t>(id)];
    n.feature = split.feature;
    n.threshold = split.threshold;
    n.left = l;
    n.right = r;
    return id;
  }

  std::span<const LabelledContext> records_;
  std::size_t dim_;
  TreeOptions opt_;
  DecisionTree tree_;
};

}  // namespace

EncapsulatedModel train_decision_tree(AgentId owner, AgentId subject,
                                      std::span<const LabelledContext> records,
                                      const TreeOptions& options) {
  const std::size_t dim = check_records(records, "train_decision_tree");
  TreeBuilder builder(records, dim, options);
  return EncapsulatedModel(std::move(owner), std::move(subject), dim, builder.build());
}

EncapsulatedModel train_gaussian_nb(AgentId owner, AgentId subject,
                                    std::span<const LabelledContext> records) {
  const std::size_t dim = check_records(records, "train_gaussian_nb");
  GaussianNb nb;
  for (int c = 0; c < 2; ++c) {
    nb.mean[c].assign(dim, 0.0);
    nb.variance[c].assign(dim, 0.0);
  }
  for (const auto& r : records) {
    ++nb.class_count[r.outcome];
    for (std::size_t f = 0; f < dim; ++f) nb.mean[r.outcome][f] += r.context[f];
  }
  for (int c = 0; c < 2; ++c) {
    if (nb.class_count[c] == 0) continue;
    for (auto& m : nb.mean[c]) m /= static_cast<double>(nb.class_count[c]);
  }
  for (const auto& r : records) {
    for (std::size_t f = 0; f < dim; ++f) {
      const double d = r.context[f] - nb.mean[r.outcome][f];
      nb.variance[r.outcome][f] += d * d;
    }
  }
  const double n = static_cast<double>(records.size());
  for (int c = 0; c < 2; ++c) {
    nb.prior[c] = static_cast<double>(nb.class_count[c]) / n;
    for (auto& v : nb.variance[c]) {
      if (nb.class_count[c] > 0) v /= static_cast<double>(nb.class_count[c]);
      v = std::max(v, kGnbVarianceFloor);
    }
  }
  return EncapsulatedModel(std::move(owner), std::move(subject), dim, std::move(nb));
}

EncapsulatedModel flip(const EncapsulatedModel& model) {
  return EncapsulatedModel(model.owner(), model.subject(), model.dimension(),
                           FlippedWrapper{std::make_shared<const EncapsulatedModel>(model)});
}

ModelRepository flip_owned(const ModelRepository& repo, std::span<const AgentId> owners) {
  ModelRepository out = repo;
  for (const auto& [key, model] : repo.models()) {
    if (std::find(owners.begin(), owners.end(), key.first) != owners.end()) out.put(flip(model));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

constexpr int kModelFormatVersion = 1;

json model_to_json(const EncapsulatedModel& m) {
  json doc;
  doc["format"] = "cobra-model";
  doc["version"] = kModelFormatVersion;
  doc["kind"] = to_string(m.kind());
  doc["owner"] = m.owner().str();
  doc["subject"] = m.subject().str();
  doc["dimension"] = m.dimension();
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, DecisionTree>) {
          json nodes = json::array();
          for (const auto& n : p.nodes) {
            nodes.push_back({{"feature", n.feature},
                             {"threshold", n.threshold},
                             {"left", n.left},
                             {"right", n.right},
                             {"p", n.probability},
                             {"samples", n.samples}});
          }
          doc["nodes"] = std::move(nodes);
        } else if constexpr (std::is_same_v<T, GaussianNb>) {
          doc["class_count"] = p.class_count;
          doc["prior"] = p.prior;
          doc["mean"] = p.mean;
          doc["variance"] = p.variance;
        } else {
          doc["inner"] = model_to_json(*p.inner);
        }
      },
      m.parameters());
  return doc;
}

const json& field(const json& doc, const char* name, const std::string& where) {
  auto it = doc.find(name);
  if (it == doc.end()) throw ParseError(where + ": missing field '" + name + "'");
  return *it;
}

template <class T>
T get_field(const json& doc, const char* name, const std::string& where) {
  const json& v = field(doc, name, where);
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw ParseError(where + ": field '" + name + "' has the wrong type: " + v.dump());
  }
}

EncapsulatedModel model_from_json(const json& doc, const std::string& where) {
  if (!doc.is_object()) throw ParseError(where + ": document is not an object");
  const auto format = get_field<std::string>(doc, "format", where);
  if (format != "cobra-model") throw ParseError(where + ": unexpected format '" + format + "'");
  const int version = get_field<int>(doc, "version", where);
  if (version != kModelFormatVersion) {
    throw ParseError(where + ": unsupported version " + std::to_string(version));
  }
  const auto kind_name = get_field<std::string>(doc, "kind", where);
  const auto kind = parse_model_kind(kind_name);
  if (!kind) throw ParseError(where + ": unknown model kind '" + kind_name + "'");
  AgentId owner(get_field<std::string>(doc, "owner", where));
  AgentId subject(get_field<std::string>(doc, "subject", where));
  const auto dim = get_field<std::size_t>(doc, "dimension", where);

  switch (*kind) {
    case ModelKind::decision_tree: {
      DecisionTree tree;
      const json& nodes = field(doc, "nodes", where);
      if (!nodes.is_array() || nodes.empty()) {
        throw ParseError(where + ": field 'nodes' must be a non-empty array");
      }
      for (std::size_t i = 0; i < nodes.size(); ++i) {
        const std::string nw = where + " nodes[" + std::to_string(i) + "]";
        TreeNode n;
        n.feature = get_field<int>(nodes[i], "feature", nw);
        n.threshold = get_field<double>(nodes[i], "threshold", nw);
        n.left = get_field<int>(nodes[i], "left", nw);
        n.right = get_field<int>(nodes[i], "right", nw);
        n.probability = get_field<double>(nodes[i], "p", nw);
        n.samples = get_field<std::size_t>(nodes[i], "samples", nw);
        if (!(n.probability >= 0.0 && n.probability <= 1.0)) {
          throw ParseError(nw + ": field 'p' outside [0,1]");
        }
        const auto count = static_cast<int>(nodes.size());
        if (!n.is_leaf() &&
            (n.feature >= static_cast<int>(dim) || n.left <= static_cast<int>(i) ||
             n.right <= static_cast<int>(i) || n.left >= count || n.right >= count)) {
          throw ParseError(nw + ": invalid split (feature or child index out of range)");
        }
        tree.nodes.push_back(n);
      }
      return EncapsulatedModel(std::move(owner), std::move(subject), dim, std::move(tree));
    }
    case ModelKind::gaussian_nb: {
      GaussianNb nb;
      nb.class_count = get_field<std::array<std::size_t, 2>>(doc, "class_count", where);
      nb.prior = get_field<std::array<double, 2>>(doc, "prior", where);
      nb.mean = get_field<std::array<std::vector<double>, 2>>(doc, "mean", where);
      nb.variance = get_field<std::array<std::vector<double>, 2>>(doc, "variance", where);
      for (int c = 0; c < 2; ++c) {
        if (nb.mean[c].size() != dim || nb.variance[c].size() != dim) {
          throw ParseError(where + ": mean/variance length differs from dimension");
        }
        for (double v : nb.variance[c]) {
          if (!(v > 0.0)) throw ParseError(where + ": field 'variance' must be positive");
        }
      }
      return EncapsulatedModel(std::move(owner), std::move(subject), dim, std::move(nb));
    }
    case ModelKind::flipped_wrapper: {
      auto inner = std::make_shared<const EncapsulatedModel>(
          model_from_json(field(doc, "inner", where), where + " inner"));
      if (inner->dimension() != dim) throw ParseError(where + ": inner dimension mismatch");
      return EncapsulatedModel(std::move(owner), std::move(subject), dim,
                               FlippedWrapper{std::move(inner)});
    }
  }
  throw ParseError(where + ": unreachable kind");
}

}  // namespace

std::string serialize_model(const EncapsulatedModel& model) { return model_to_json(model).dump(1); }

EncapsulatedModel deserialize_model(std::string_view document) {
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("model document: ") + e.what());
  }
  return model_from_json(doc, "model document");
}

// ---------------------------------------------------------------------------
// Repository

void ModelRepository::put(EncapsulatedModel model) {
  Key key{model.owner(), model.subject()};
  if (std::find(advisors_.begin(), advisors_.end(), key.first) == advisors_.end()) {
    advisors_.push_back(key.first);
  }
  if (std::find(subjects_.begin(), subjects_.end(), key.second) == subjects_.end()) {
    subjects_.push_back(key.second);
  }
  models_.insert_or_assign(std::move(key), std::move(model));
}

const EncapsulatedModel* ModelRepository::find(const AgentId& advisor,
                                               const AgentId& subject) const {
  auto it = models_.find(Key{advisor, subject});
  return it == models_.end() ? nullptr : &it->second;
}

namespace {

void check_file_safe(const AgentId& id) {
  if (id.empty()) throw std::invalid_argument("empty agent id");
  for (char c : id.str()) {
    const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.' ||
                    (c == '_');
    if (!ok) throw std::invalid_argument("agent id not usable in a file name: " + id.str());
  }
  if (id.str().find("__") != std::string::npos) {
    throw std::invalid_argument("agent id may not contain '__': " + id.str());
  }
}

}  // namespace

void ModelRepository::save(const std::string& directory) const {
  namespace fs = std::filesystem;
  fs::create_directories(directory);
  for (const auto& [key, model] : models_) {
    check_file_safe(key.first);
    check_file_safe(key.second);
    const fs::path path = fs::path(directory) / (key.first.str() + "__" + key.second.str() + ".json");
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write model file: " + path.string());
    out << serialize_model(model) << '\n';
  }
}

ModelRepository ModelRepository::load(const std::string& directory) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(directory)) throw std::runtime_error("no such model directory: " + directory);
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(directory)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  ModelRepository repo;
  for (const auto& path : files) {
    std::ifstream in(path);
    std::stringstream buf;
    buf << in.rdbuf();
    try {
      repo.put(deserialize_model(buf.str()));
    } catch (const ParseError& e) {
      throw ParseError(path.filename().string() + ": " + e.what());
    }
  }
  return repo;
}

// ---------------------------------------------------------------------------
// Policies

std::string_view to_string(KindPolicy policy) {
  switch (policy) {
    case KindPolicy::all_tree: return "dt";
    case KindPolicy::all_gnb: return "gnb";
    case KindPolicy::hybrid: return "hyb";
  }
  return "unknown";
}

std::optional<KindPolicy> parse_kind_policy(std::string_view name) {
  if (name == "dt") return KindPolicy::all_tree;
  if (name == "gnb") return KindPolicy::all_gnb;
  if (name == "hyb") return KindPolicy::hybrid;
  return std::nullopt;
}

std::map<AgentId, ModelKind> assign_kinds(std::span<const AgentId> advisors, KindPolicy policy,
                                          std::uint64_t seed) {
  std::map<AgentId, ModelKind> kinds;
  switch (policy) {
    case KindPolicy::all_tree:
      for (const auto& a : advisors) kinds[a] = ModelKind::decision_tree;
      break;
    case KindPolicy::all_gnb:
      for (const auto& a : advisors) kinds[a] = ModelKind::gaussian_nb;
      break;
    case KindPolicy::hybrid: {
      std::vector<AgentId> order(advisors.begin(), advisors.end());
      std::mt19937_64 rng(seed);
      std::shuffle(order.begin(), order.end(), rng);
      const std::size_t trees = order.size() / 2;
      for (std::size_t i = 0; i < order.size(); ++i) {
        kinds[order[i]] = i < trees ? ModelKind::decision_tree : ModelKind::gaussian_nb;
      }
      break;
    }
  }
  return kinds;
}

ModelRepository build_repository(std::span<const AdvisorEvidence> evidence, KindPolicy policy,
                                 std::uint64_t seed) {
  std::vector<AgentId> roster;
  roster.reserve(evidence.size());
  for (const auto& e : evidence) roster.push_back(e.advisor);
  const auto kinds = assign_kinds(roster, policy, seed);

  ModelRepository repo;
  for (const auto& e : evidence) {
    std::vector<AgentId> order;
    std::map<AgentId, std::vector<LabelledContext>> by_target;
    for (const auto& r : e.records) {
      auto [it, inserted] = by_target.try_emplace(r.target);
      if (inserted) order.push_back(r.target);
      it->second.push_back({r.context, r.outcome});
    }
    const ModelKind kind = kinds.at(e.advisor);
    for (const auto& z : order) {
      const auto& rows = by_target.at(z);
      repo.put(kind == ModelKind::decision_tree ? train_decision_tree(e.advisor, z, rows)
                                                : train_gaussian_nb(e.advisor, z, rows));
    }
  }
  return repo;
}

}  // namespace cobra::encap
