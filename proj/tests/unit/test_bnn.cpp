#include "catch_amalgamated.hpp"

#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "cobra/bnn.hpp"

using namespace cobra;
using namespace cobra::bnn;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

std::vector<InputKind> kinds_of(std::size_t contexts, std::size_t advisors) {
  std::vector<InputKind> k(contexts, InputKind::context);
  k.insert(k.end(), advisors, InputKind::advisor);
  return k;
}

// Number of edges the literal gate sgn(floor(W(1-h) / (c+1))) admits when
// edges are added one at a time, c counting the edges placed so far.
std::size_t iterate_gate(std::size_t width, double h) {
  std::size_t c = 0;
  while (c < width) {
    const double numer = std::floor(static_cast<double>(width) - h * static_cast<double>(width));
    if (std::floor(numer / static_cast<double>(c + 1)) < 1.0) break;
    ++c;
  }
  return c;
}

struct Fixture {
  std::vector<double> x;
  std::vector<Outcome> y;
  DataView view(std::size_t width) const { return {x, width, y}; }
};

Fixture separable(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Fixture f;
  while (f.y.size() < n) {
    const double a = u(rng);
    const double b = u(rng);
    if (std::abs(a - b) < 0.05) continue;  // keep a margin
    f.x.push_back(a);
    f.x.push_back(b);
    f.y.push_back(a > b ? 1 : 0);
  }
  return f;
}

}  // namespace

TEST_CASE("layer widths follow the closed form", "[bnn]") {
  const std::vector<double> mixed{0, 0, 0, 0, 1, 1, 1};
  CHECK(information_sum(mixed) == 4);
  CHECK(compute_widths(mixed) == LayerWidths{11, 8, 1});
  CHECK(compute_widths(std::vector<double>{1, 1}) == LayerWidths{3, 3, 1});
  CHECK(compute_widths(std::vector<double>{0}) == LayerWidths{5, 4, 1});
  // Ten copies of (1 - 0.9) sum to just under 1 in floating point.
  const std::vector<double> tenths(10, 0.9);
  CHECK(information_sum(tenths) == 1);
  CHECK(information_sum(std::vector<double>{0.75, 0.75}) == 1);
}

TEST_CASE("fan-out of single inputs", "[bnn]") {
  // h = 0 into 11 units and h = 1 pruned.
  const std::vector<double> h{0, 0, 0, 0, 1, 1, 1};
  const auto topo = build_topology(h, kinds_of(4, 3));
  REQUIRE(topo.widths[1] == 11);
  for (std::size_t i = 0; i < 4; ++i) CHECK(topo.masks[0].row_count(i) == 11);
  for (std::size_t i = 4; i < 7; ++i) CHECK(topo.masks[0].row_count(i) == 0);

  // h = 0.5 into 11 units: S = 3 + 0.5 + 0.5 = 4.
  const std::vector<double> half{0, 0, 0, 0.5, 0.5};
  const auto t2 = build_topology(half, kinds_of(3, 2));
  REQUIRE(t2.widths[1] == 11);
  CHECK(t2.masks[0].row_count(3) == 5);
  CHECK(iterate_gate(11, 0.5) == 5);
  CHECK(iterate_gate(11, 0.0) == 11);
  CHECK(iterate_gate(11, 1.0) == 0);
}

TEST_CASE("hidden node entropy is the mean over its sources", "[bnn]") {
  const std::vector<double> h{0, 0, 0.5, 0.2, 0.9, 1.0};
  const auto topo = build_topology(h, kinds_of(2, 4));
  for (std::size_t k = 0; k < kDepth; ++k) {
    const auto& mask = topo.masks[k];
    for (std::size_t j = 0; j < mask.cols(); ++j) {
      double sum = 0.0;
      std::size_t n = 0;
      for (std::size_t i = 0; i < mask.rows(); ++i) {
        if (mask(i, j)) {
          sum += topo.node_entropy[k][i];
          ++n;
        }
      }
      const double expected = n ? sum / static_cast<double>(n) : 1.0;
      CHECK_THAT(topo.node_entropy[k + 1][j], WithinAbs(expected, 1e-15));
    }
  }
  // Direct two-source case: a unit fed by h = 0 and h = 0.5 only.
  const std::vector<double> pair{0, 0.5};
  const auto t = build_topology(pair, kinds_of(1, 1));
  bool found = false;
  for (std::size_t j = 0; j < t.masks[0].cols(); ++j) {
    if (t.masks[0](0, j) && t.masks[0](1, j)) {
      CHECK(t.node_entropy[1][j] == 0.25);
      found = true;
    }
  }
  CHECK(found);
}

TEST_CASE("context inputs are forced to zero entropy and fully connected", "[bnn]") {
  const std::vector<double> h{0.7, 0.3, 0.3};
  const auto topo = build_topology(h, kinds_of(1, 2));
  CHECK(topo.node_entropy[0][0] == 0.0);
  CHECK(topo.masks[0].row_count(0) == topo.widths[1]);
}

TEST_CASE("fan-out equals the iterated gate where the clamp is inactive", "[bnn][property]") {
  for (std::size_t w = 1; w <= 50; ++w) {
    for (int hi = 0; hi <= 100; ++hi) {
      const double h = hi / 100.0;
      const auto budget = gate_budget(w, h);
      if (budget >= 1) {
        REQUIRE(clamped_fan_out(w, h, true) == iterate_gate(w, h));
        REQUIRE(clamped_fan_out(w, h, false) == iterate_gate(w, h));
      } else {
        REQUIRE(clamped_fan_out(w, h, true) == 1);
        REQUIRE(clamped_fan_out(w, h, false) == 0);
      }
    }
  }
}

TEST_CASE("lower entropy never gives smaller fan-out", "[bnn][property]") {
  for (std::size_t w = 1; w <= 60; ++w) {
    std::size_t prev = w + 1;
    for (int hi = 0; hi <= 100; ++hi) {
      const auto f = clamped_fan_out(w, hi / 100.0, true);
      REQUIRE(f <= prev);
      prev = f;
    }
  }
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> h(6);
    for (auto& v : h) v = u(rng);
    const auto topo = build_topology(h, kinds_of(0, 6));
    for (std::size_t a = 0; a < 6; ++a) {
      for (std::size_t b = 0; b < 6; ++b) {
        if (h[a] < h[b]) CHECK(topo.masks[0].row_count(a) >= topo.masks[0].row_count(b));
      }
    }
  }
}

TEST_CASE("random topologies keep the output reachable", "[bnn][property]") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> n_in(1, 30);
  for (int trial = 0; trial < 300; ++trial) {
    const auto n = static_cast<std::size_t>(n_in(rng));
    std::vector<double> h(n);
    for (auto& v : h) {
      const double r = u(rng);
      v = r < 0.2 ? 1.0 : (r < 0.3 ? 0.0 : u(rng));
    }
    const auto contexts = static_cast<std::size_t>(trial % 3 == 0 ? 0 : 1);
    const auto kinds = kinds_of(std::min(contexts, n), n - std::min(contexts, n));
    const auto topo = build_topology(h, kinds);
    REQUIRE(topo.widths[3] == 1);
    REQUIRE(topo.masks[2].col_count(0) >= 1);
    const auto dense = build_dense_topology(h, kinds);
    REQUIRE(topo.masks[0].subset_of(dense.masks[0]));
    REQUIRE(topo.masks[1].subset_of(dense.masks[1]));
    REQUIRE(topo.masks[2].subset_of(dense.masks[2]));
  }
}

TEST_CASE("an all-uninformative world falls back to full connectivity", "[bnn]") {
  const std::vector<double> h{1, 1, 1};
  const auto topo = build_topology(h, kinds_of(0, 3));
  CHECK(topo.widths[1] == 3);
  CHECK(topo.edge_count() == build_dense_topology(h, kinds_of(0, 3)).edge_count());
}

TEST_CASE("dense topology edge counts", "[bnn]") {
  const std::vector<double> h{0, 0, 0, 0, 1, 1, 1};
  const auto dense = build_dense_topology(h, kinds_of(4, 3));
  CHECK(dense.widths[1] == 11);
  CHECK(dense.widths[2] == 8);
  CHECK(dense.edge_count() == 11 * 8 + 8 * 1 + 7 * 11);
  const auto bnn = build_topology(h, kinds_of(4, 3));
  CHECK(bnn.edge_count() < dense.edge_count());
  CHECK_THROWS(build_topology(std::vector<double>{}, std::vector<InputKind>{}));
}

TEST_CASE("forward pass by hand", "[bnn]") {
  const std::vector<double> h{0};
  const auto topo = build_topology(h, kinds_of(1, 0));
  REQUIRE(topo.widths == std::array<std::size_t, 4>{1, 5, 4, 1});
  BnnNetwork zero(topo);
  const std::vector<double> x{1.0};
  CHECK(zero.forward(x) == 0.5);

  BnnNetwork path(topo);
  path.set_weight(0, 0, 0, 1.0);
  path.set_weight(1, 0, 0, 1.0);
  path.set_weight(2, 0, 0, 1.0);
  CHECK_THAT(path.forward(x), WithinAbs(1.0 / (1.0 + std::exp(-1.0)), 1e-15));
  CHECK_THAT(path.forward(x), WithinAbs(0.731059, 1e-6));
  // ReLU cuts a negative input.
  const std::vector<double> neg{-1.0};
  CHECK(path.forward(neg) == 0.5);
  CHECK_THROWS_AS(path.forward(std::vector<double>{1.0, 2.0}), std::invalid_argument);
}

TEST_CASE("pruned advisor columns do not affect the output", "[bnn]") {
  const std::vector<double> h{0, 0.3, 1.0};
  const auto net = BnnNetwork::initialized(build_topology(h, kinds_of(1, 2)), 5);
  CHECK(net.topology().masks[0].row_count(2) == 0);
  std::vector<double> x{0.2, 0.8, 0.5};
  const double base = net.forward(x);
  for (double v : {0.0, 0.1, 0.9, 1.0}) {
    x[2] = v;
    CHECK(net.forward(x) == base);
  }
  CHECK_THROWS(BnnNetwork(net).set_weight(0, 2, 0, 1.0));
}

TEST_CASE("initialization is seeded and bounded", "[bnn]") {
  const std::vector<double> h{0, 0.2, 0.6};
  const auto topo = build_topology(h, kinds_of(1, 2));
  const auto a = BnnNetwork::initialized(topo, 9);
  CHECK(a == BnnNetwork::initialized(topo, 9));
  CHECK_FALSE(a == BnnNetwork::initialized(topo, 10));
  for (std::size_t k = 0; k < kDepth; ++k) {
    const double limit = std::sqrt(6.0 / static_cast<double>(topo.widths[k] + topo.widths[k + 1]));
    const auto m = a.weight_matrix(k);
    for (std::size_t i = 0; i < topo.widths[k]; ++i) {
      for (std::size_t j = 0; j < topo.widths[k + 1]; ++j) {
        const double w = m[i * topo.widths[k + 1] + j];
        if (!topo.masks[k](i, j)) {
          CHECK(w == 0.0);
        } else {
          CHECK(std::abs(w) <= limit);
        }
      }
    }
  }
}

TEST_CASE("backprop matches finite differences", "[bnn]") {
  const std::vector<double> h{0, 0, 0.1, 0.4, 0.8, 1.0, 0.3};
  const auto topo = build_topology(h, kinds_of(2, 5));
  auto net = BnnNetwork::initialized(topo, 3);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t k = 0; k < kDepth; ++k) {
    for (auto& b : net.mutable_layers()[k].bias) b = 0.1 * u(rng);
  }
  Fixture f;
  for (int r = 0; r < 5; ++r) {
    for (int c = 0; c < 7; ++c) f.x.push_back(u(rng));
    f.y.push_back(r % 2);
  }
  const auto view = f.view(7);
  std::vector<std::size_t> rows{0, 1, 2, 3, 4};
  const auto g = batch_gradients(net, view, rows);
  const double eps = 1e-5;
  for (std::size_t k = 0; k < kDepth; ++k) {
    auto& w = net.mutable_layers()[k].weight;
    for (std::size_t e = 0; e < w.size(); ++e) {
      const double orig = w[e];
      w[e] = orig + eps;
      const double up = batch_loss(net, view, rows);
      w[e] = orig - eps;
      const double down = batch_loss(net, view, rows);
      w[e] = orig;
      const double numeric = (up - down) / (2 * eps);
      const double analytic = g.weight[k][e];
      const double scale = std::max(std::abs(numeric), std::abs(analytic));
      if (scale > 1e-9) CHECK(std::abs(numeric - analytic) / scale <= 1e-4);
    }
  }
}

TEST_CASE("training fits separable data", "[bnn]") {
  const auto f = separable(200, 1);
  const std::vector<double> h{0, 0};
  const auto topo = build_topology(h, kinds_of(2, 0));
  TrainHyperparams hp;
  hp.patience.reset();
  hp.seed = 7;
  const auto res = train(BnnNetwork::initialized(topo, 7), f.view(2), hp);
  REQUIRE(res.history.size() == 100);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < f.y.size(); ++i) {
    correct += (res.network.forward(f.view(2).row(i)) >= 0.5) == (f.y[i] == 1);
  }
  CHECK(static_cast<double>(correct) / static_cast<double>(f.y.size()) >= 0.95);
}

TEST_CASE("training on all-positive labels drives the output up", "[bnn]") {
  Fixture f;
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 64; ++i) {
    f.x.push_back(u(rng));
    f.x.push_back(u(rng));
    f.y.push_back(1);
  }
  const std::vector<double> h{0, 0.5};
  TrainHyperparams hp;
  hp.patience.reset();
  hp.validation_fraction = 0.0;
  const auto res = train(BnnNetwork::initialized(build_topology(h, kinds_of(1, 1)), 1), f.view(2), hp);
  for (std::size_t i = 1; i < res.history.size(); ++i) {
    CHECK(res.history[i].train_loss <= res.history[i - 1].train_loss);
  }
  for (std::size_t i = 0; i < f.y.size(); ++i) CHECK(res.network.forward(f.view(2).row(i)) > 0.9);
  CHECK(std::isnan(res.history.back().val_loss));
}

TEST_CASE("masked weights stay zero through training", "[bnn]") {
  const auto f = separable(100, 3);
  std::vector<double> x;
  for (std::size_t i = 0; i < f.y.size(); ++i) {
    x.push_back(f.x[2 * i]);
    x.push_back(f.x[2 * i + 1]);
    x.push_back(0.5);
    x.push_back(i % 2 ? 0.9 : 0.3);
  }
  const std::vector<double> h{0, 0, 1.0, 0.7};
  const auto topo = build_topology(h, kinds_of(2, 2));
  TrainHyperparams hp;
  hp.epochs = 30;
  const auto res = train(BnnNetwork::initialized(topo, 2), DataView{x, 4, f.y}, hp);
  double masked = 0.0;
  for (std::size_t k = 0; k < kDepth; ++k) {
    const auto m = res.network.weight_matrix(k);
    for (std::size_t i = 0; i < topo.widths[k]; ++i) {
      for (std::size_t j = 0; j < topo.widths[k + 1]; ++j) {
        if (!topo.masks[k](i, j)) masked += std::abs(m[i * topo.widths[k + 1] + j]);
      }
    }
  }
  CHECK(masked == 0.0);
}

TEST_CASE("training is deterministic and epochs=0 returns the initialization", "[bnn]") {
  const auto f = separable(80, 5);
  const std::vector<double> h{0, 0};
  const auto init = BnnNetwork::initialized(build_topology(h, kinds_of(2, 0)), 3);
  TrainHyperparams hp;
  hp.epochs = 5;
  CHECK(train(init, f.view(2), hp).network == train(init, f.view(2), hp).network);
  hp.epochs = 0;
  const auto res = train(init, f.view(2), hp);
  CHECK(res.network == init);
  CHECK(res.history.empty());
}

TEST_CASE("early stopping restores the best validation weights", "[bnn]") {
  // Random labels: validation loss stops improving quickly.
  Fixture f;
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    f.x.push_back(u(rng));
    f.y.push_back(u(rng) < 0.5 ? 1 : 0);
  }
  const std::vector<double> h{0};
  TrainHyperparams hp;
  hp.learning_rate = 0.1;
  const auto res = train(BnnNetwork::initialized(build_topology(h, kinds_of(1, 0)), 1), f.view(1), hp);
  REQUIRE(res.stopped_early);
  std::size_t best = 0;
  for (std::size_t i = 1; i < res.history.size(); ++i) {
    if (res.history[i].val_loss < res.history[best].val_loss) best = i;
  }
  CHECK(res.history.size() == best + 1 + 10);
}

TEST_CASE("exploding updates abort with a diagnostic", "[bnn]") {
  const auto f = separable(64, 9);
  std::vector<double> big(f.x);
  for (auto& v : big) v *= 1e150;
  const std::vector<double> h{0, 0};
  TrainHyperparams hp;
  hp.learning_rate = 1e150;
  CHECK_THROWS_AS(train(BnnNetwork::initialized(build_topology(h, kinds_of(2, 0)), 1),
                        DataView{big, 2, f.y}, hp),
                  TrainingError);
}

TEST_CASE("hyperparameter validation", "[bnn]") {
  TrainHyperparams hp;
  CHECK_NOTHROW(hp.validate());
  hp.validation_fraction = 1.0;
  CHECK_THROWS(hp.validate());
  hp = {};
  hp.batch_size = 0;
  CHECK_THROWS(hp.validate());
  hp = {};
  hp.learning_rate = 0.0;
  CHECK_THROWS(hp.validate());
}

TEST_CASE("network file round trip", "[bnn]") {
  const auto f = separable(60, 2);
  const std::vector<double> h{0, 0.4};
  const auto topo = build_topology(h, kinds_of(1, 1));
  TrainHyperparams hp;
  hp.epochs = 3;
  const auto net = train(BnnNetwork::initialized(topo, 4), f.view(2), hp).network;
  const NetworkFile file{net, {"c1", "u1"}, hp};
  const auto back = deserialize_network(serialize_network(file));
  CHECK(back.network == net);
  CHECK(back.input_names == file.input_names);
  REQUIRE(back.hyperparams.has_value());
  CHECK(back.hyperparams->seed == hp.seed);
  CHECK(back.hyperparams->epochs == 3);
}

TEST_CASE("a network file with weight on a pruned edge is rejected", "[bnn]") {
  const std::vector<double> h{0, 1.0};
  const auto topo = build_topology(h, kinds_of(1, 1));
  const NetworkFile file{BnnNetwork(topo), {"c1", "u1"}, std::nullopt};
  auto doc = nlohmann::json::parse(serialize_network(file));
  REQUIRE(doc["weights"][0][1][0] == 0.0);
  CHECK_NOTHROW(deserialize_network(doc.dump()));
  doc["weights"][0][1][0] = 7.0;  // input u1 is pruned
  CHECK_THROWS_AS(deserialize_network(doc.dump()), ParseError);
}

TEST_CASE("history file round trip", "[bnn]") {
  std::vector<EpochStats> h{{1, 0.7, 0.69, 0.5, 0.55, 0.01},
                            {2, 0.6, std::numeric_limits<double>::quiet_NaN(), 0.6, 0.0, 0.02}};
  std::stringstream ss;
  write_history(ss, h);
  CHECK(ss.str().starts_with("epoch,train_loss,val_loss,train_acc,val_acc,seconds\n"));
  const auto back = read_history(ss);
  REQUIRE(back.size() == 2);
  CHECK(back[0].val_acc == 0.55);
  CHECK(std::isnan(back[1].val_loss));
}
