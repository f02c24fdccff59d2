#include "cobra/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <set>

#include "cobra/baselines.hpp"

namespace cobra::eval {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

}  // namespace

double Confusion::accuracy() const {
  if (total() == 0) throw std::invalid_argument("accuracy of an empty confusion matrix");
  return static_cast<double>(tp + tn) / static_cast<double>(total());
}

Confusion accuracy(std::span<const Outcome> predicted, std::span<const Outcome> truth) {
  if (predicted.size() != truth.size()) throw std::invalid_argument("accuracy: length mismatch");
  if (predicted.empty()) throw std::invalid_argument("accuracy: no predictions");
  Confusion c;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (predicted[i] > 1 || truth[i] > 1) throw std::invalid_argument("accuracy: labels must be 0/1");
    if (predicted[i]) {
      ++(truth[i] ? c.tp : c.fp);
    } else {
      ++(truth[i] ? c.fn : c.tn);
    }
  }
  return c;
}

Confusion accuracy_from_scores(std::span<const double> scores, std::span<const Outcome> truth) {
  std::vector<Outcome> predicted(scores.size());
  std::transform(scores.begin(), scores.end(), predicted.begin(), classify);
  return accuracy(predicted, truth);
}

double rmse(std::span<const double> predicted, std::span<const double> truth) {
  if (predicted.size() != truth.size()) throw std::invalid_argument("rmse: length mismatch");
  if (predicted.empty()) throw std::invalid_argument("rmse: no predictions");
  double sum = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double d = truth[i] - predicted[i];
    sum += d * d;
  }
  return std::sqrt(sum / static_cast<double>(predicted.size()));
}

double rmse(std::span<const double> predicted, std::span<const Outcome> truth) {
  std::vector<double> t(truth.begin(), truth.end());
  return rmse(predicted, std::span<const double>(t));
}

std::vector<std::size_t> kfold(std::span<const Outcome> labels, std::size_t k, std::uint64_t seed) {
  if (k == 0) throw std::invalid_argument("kfold: k must be positive");
  if (labels.size() < k) {
    throw std::invalid_argument("kfold: " + std::to_string(labels.size()) + " rows cannot fill " +
                                std::to_string(k) + " folds; use a smaller k");
  }
  std::array<std::vector<std::size_t>, 2> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i] ? 1 : 0].push_back(i);
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> folds(labels.size());
  std::size_t next = 0;
  for (int c : {1, 0}) {
    std::shuffle(by_class[c].begin(), by_class[c].end(), rng);
    for (auto i : by_class[c]) {
      folds[i] = next;
      next = (next + 1) % k;
    }
  }
  return folds;
}

double MetricsReport::mean_fold_acc() const {
  if (fold_acc.empty()) return acc;
  return std::accumulate(fold_acc.begin(), fold_acc.end(), 0.0) / static_cast<double>(fold_acc.size());
}

double MetricsReport::mean_fold_rmse() const {
  if (fold_rmse.empty()) return rmse;
  return std::accumulate(fold_rmse.begin(), fold_rmse.end(), 0.0) /
         static_cast<double>(fold_rmse.size());
}

MetricsReport evaluate_folds(std::span<const double> predictions, std::span<const Outcome> truth,
                             std::span<const std::size_t> folds, std::size_t k) {
  if (predictions.size() != truth.size() || folds.size() != truth.size()) {
    throw std::invalid_argument("evaluate_folds: length mismatch");
  }
  MetricsReport r;
  r.confusion = accuracy_from_scores(predictions, truth);
  r.acc = r.confusion.accuracy();
  r.rmse = eval::rmse(predictions, truth);
  r.m = r.confusion.total();
  for (std::size_t f = 0; f < k; ++f) {
    std::vector<double> p;
    std::vector<Outcome> t;
    for (std::size_t i = 0; i < folds.size(); ++i) {
      if (folds[i] == f) {
        p.push_back(predictions[i]);
        t.push_back(truth[i]);
      }
    }
    if (p.empty()) continue;
    r.fold_acc.push_back(accuracy_from_scores(p, t).accuracy());
    r.fold_rmse.push_back(eval::rmse(p, t));
  }
  return r;
}

std::vector<double> cross_validated_predictions(const assembly::TrainingSet& set,
                                                std::span<const std::size_t> folds,
                                                std::size_t k, Architecture arch,
                                                const bnn::TrainHyperparams& hyper,
                                                MetricsReport* timing,
                                                const HistorySink& on_history) {
  if (folds.size() != set.rows()) throw std::invalid_argument("fold ids do not match rows");
  std::vector<double> predictions(set.rows(), assembly::kNoInformation);
  for (std::size_t f = 0; f < k; ++f) {
    std::vector<std::size_t> fit_rows;
    std::vector<std::size_t> test_rows;
    for (std::size_t i = 0; i < folds.size(); ++i) (folds[i] == f ? test_rows : fit_rows).push_back(i);
    if (test_rows.empty() || fit_rows.empty()) continue;

    const auto start = Clock::now();
    const auto fit = set.select(fit_rows);
    const auto entropies = fit.column_entropies();
    const auto kinds = fit.input_kinds();
    auto topology = arch == Architecture::bnn ? bnn::build_topology(entropies, kinds)
                                              : bnn::build_dense_topology(entropies, kinds);
    bnn::TrainHyperparams hp = hyper;
    hp.seed = hyper.seed + f;
    auto result = bnn::train(bnn::BnnNetwork::initialized(std::move(topology), hp.seed), fit.view(), hp);
    if (timing) timing->train_seconds += seconds_since(start);
    if (on_history) on_history(f, result.history);

    const auto predict_start = Clock::now();
    for (auto r : test_rows) predictions[r] = result.network.forward(set.row(r));
    if (timing) timing->predict_seconds += seconds_since(predict_start);
  }
  return predictions;
}

std::string_view to_string(Method method) {
  switch (method) {
    case Method::cobra_dt_b: return "cobra-dt-b";
    case Method::cobra_gnb_b: return "cobra-gnb-b";
    case Method::cobra_hyb_b: return "cobra-hyb-b";
    case Method::cobra_dt_d: return "cobra-dt-d";
    case Method::cobra_gnb_d: return "cobra-gnb-d";
    case Method::cobra_hyb_d: return "cobra-hyb-d";
    case Method::brs: return "brs";
    case Method::tmsiot: return "tmsiot";
  }
  return "unknown";
}

std::optional<Method> parse_method(std::string_view name) {
  for (auto m : kAllMethods) {
    if (to_string(m) == name) return m;
  }
  return std::nullopt;
}

namespace {

struct CobraVariant {
  encap::KindPolicy policy;
  Architecture arch;
};

std::optional<CobraVariant> cobra_variant(Method m) {
  switch (m) {
    case Method::cobra_dt_b: return CobraVariant{encap::KindPolicy::all_tree, Architecture::bnn};
    case Method::cobra_gnb_b: return CobraVariant{encap::KindPolicy::all_gnb, Architecture::bnn};
    case Method::cobra_hyb_b: return CobraVariant{encap::KindPolicy::hybrid, Architecture::bnn};
    case Method::cobra_dt_d: return CobraVariant{encap::KindPolicy::all_tree, Architecture::dense};
    case Method::cobra_gnb_d: return CobraVariant{encap::KindPolicy::all_gnb, Architecture::dense};
    case Method::cobra_hyb_d: return CobraVariant{encap::KindPolicy::hybrid, Architecture::dense};
    case Method::brs:
    case Method::tmsiot: return std::nullopt;
  }
  return std::nullopt;
}

// Raw feedback each advisor would report about each target; liars swap r/s.
using TallyIndex = std::map<AgentId, std::vector<std::pair<AgentId, baselines::FeedbackTally>>>;

TallyIndex index_tallies(const AdvisorPool& pool) {
  const std::set<AgentId> liars(pool.malicious.begin(), pool.malicious.end());
  TallyIndex index;
  for (const auto& adv : pool.advisors) {
    std::map<AgentId, baselines::FeedbackTally> per_target;
    for (const auto& r : adv.records) per_target[r.target].add(r.outcome);
    const bool lies = liars.contains(adv.advisor);
    for (const auto& [z, tally] : per_target) {
      index[z].emplace_back(adv.advisor, lies ? tally.swapped() : tally);
    }
  }
  return index;
}

std::vector<double> baseline_predictions(Method method, const Scenario& sc,
                                         const TallyIndex& tallies,
                                         std::span<const std::size_t> folds, std::size_t k,
                                         MetricsReport& timing) {
  const std::set<AgentId> roster(sc.roster.begin(), sc.roster.end());
  std::vector<double> predictions(sc.evidence.size(), assembly::kNoInformation);
  for (std::size_t f = 0; f < k; ++f) {
    const auto start = Clock::now();
    std::map<AgentId, baselines::FeedbackTally> own;
    for (std::size_t i = 0; i < sc.evidence.size(); ++i) {
      if (folds[i] != f) own[sc.evidence[i].target].add(sc.evidence[i].outcome);
    }
    timing.train_seconds += seconds_since(start);

    const auto predict_start = Clock::now();
    for (std::size_t i = 0; i < sc.evidence.size(); ++i) {
      if (folds[i] != f) continue;
      const auto& z = sc.evidence[i].target;
      const auto own_it = own.find(z);
      const baselines::FeedbackTally own_tally =
          own_it == own.end() ? baselines::FeedbackTally{} : own_it->second;
      const auto t_it = tallies.find(z);
      if (method == Method::brs) {
        baselines::FeedbackTally total = own_tally;
        if (t_it != tallies.end()) {
          for (const auto& [u, tally] : t_it->second) {
            if (roster.contains(u)) total += tally;
          }
        }
        predictions[i] = baselines::brs_score(total).value();
      } else {
        std::vector<TrustScore> opinions;
        if (t_it != tallies.end()) {
          for (const auto& [u, tally] : t_it->second) {
            if (roster.contains(u)) opinions.push_back(baselines::brs_score(tally));
          }
        }
        const TrustScore mine = own_it == own.end() ? TrustScore(assembly::kNoInformation)
                                                    : baselines::brs_score(own_tally);
        predictions[i] = baselines::tmsiot_score(mine, opinions).value();
      }
    }
    timing.predict_seconds += seconds_since(predict_start);
  }
  return predictions;
}

struct Accumulator {
  std::vector<double> predictions;
  std::vector<Outcome> truth;
  std::vector<double> fold_acc;
  std::vector<double> fold_rmse;
  double train_seconds = 0.0;
  double predict_seconds = 0.0;
};

}  // namespace

std::vector<ComparisonRow> compare(std::span<const Method> methods, const AdvisorPool& pool,
                                   std::span<const Scenario> scenarios,
                                   const CompareOptions& options,
                                   std::vector<std::string>* skipped) {
  std::map<encap::KindPolicy, encap::ModelRepository> repos;
  for (auto m : methods) {
    if (auto v = cobra_variant(m); v && !repos.contains(v->policy)) {
      repos.emplace(v->policy, encap::flip_owned(encap::build_repository(pool.advisors, v->policy,
                                                                          options.seed),
                                                 pool.malicious));
    }
  }
  const TallyIndex tallies = index_tallies(pool);

  std::vector<Accumulator> acc(methods.size());
  for (const auto& sc : scenarios) {
    if (sc.truth.size() != sc.evidence.size()) {
      throw std::invalid_argument("scenario truth does not match evidence");
    }
    if (sc.evidence.size() < options.folds) {
      if (skipped) {
        skipped->push_back(sc.advisee.str() + ": " + std::to_string(sc.evidence.size()) +
                           " records < " + std::to_string(options.folds) + " folds");
      }
      continue;
    }
    std::vector<Outcome> observed(sc.evidence.size());
    std::transform(sc.evidence.begin(), sc.evidence.end(), observed.begin(),
                   [](const EvidenceRecord& r) { return r.outcome; });
    const auto folds = kfold(observed, options.folds, options.seed);

    for (std::size_t mi = 0; mi < methods.size(); ++mi) {
      const Method m = methods[mi];
      MetricsReport timing;
      std::vector<double> predictions;
      if (auto v = cobra_variant(m)) {
        const auto set =
            assembly::init_training_data(sc.evidence, repos.at(v->policy), sc.roster, sc.context_names);
        HistorySink sink;
        if (options.on_history) {
          sink = [&](std::size_t fold, std::span<const bnn::EpochStats> h) {
            options.on_history(m, sc.advisee, fold, h);
          };
        }
        predictions = cross_validated_predictions(set, folds, options.folds, v->arch, options.hyper,
                                                  &timing, sink);
      } else {
        predictions = baseline_predictions(m, sc, tallies, folds, options.folds, timing);
      }
      const auto report = evaluate_folds(predictions, sc.truth, folds, options.folds);
      auto& a = acc[mi];
      a.predictions.insert(a.predictions.end(), predictions.begin(), predictions.end());
      a.truth.insert(a.truth.end(), sc.truth.begin(), sc.truth.end());
      a.fold_acc.insert(a.fold_acc.end(), report.fold_acc.begin(), report.fold_acc.end());
      a.fold_rmse.insert(a.fold_rmse.end(), report.fold_rmse.begin(), report.fold_rmse.end());
      a.train_seconds += timing.train_seconds;
      a.predict_seconds += timing.predict_seconds;
    }
  }

  std::vector<ComparisonRow> rows;
  for (std::size_t mi = 0; mi < methods.size(); ++mi) {
    auto& a = acc[mi];
    if (a.predictions.empty()) continue;
    ComparisonRow row{methods[mi], {}};
    row.metrics.confusion = accuracy_from_scores(a.predictions, a.truth);
    row.metrics.acc = row.metrics.confusion.accuracy();
    row.metrics.rmse = rmse(a.predictions, a.truth);
    row.metrics.m = row.metrics.confusion.total();
    row.metrics.fold_acc = std::move(a.fold_acc);
    row.metrics.fold_rmse = std::move(a.fold_rmse);
    row.metrics.train_seconds = a.train_seconds;
    row.metrics.predict_seconds = a.predict_seconds;
    rows.push_back(std::move(row));
  }
  std::stable_sort(rows.begin(), rows.end(), [](const ComparisonRow& a, const ComparisonRow& b) {
    return a.metrics.acc > b.metrics.acc;
  });
  return rows;
}

void write_comparison(std::ostream& os, std::span<const ComparisonRow> rows) {
  os << "method,acc,rmse,tp,tn,fp,fn,m\n";
  for (const auto& r : rows) {
    const auto& c = r.metrics.confusion;
    os << to_string(r.method) << ',' << format_double(r.metrics.acc) << ','
       << format_double(r.metrics.rmse) << ',' << c.tp << ',' << c.tn << ',' << c.fp << ',' << c.fn
       << ',' << r.metrics.m << '\n';
  }
}

void write_timing(std::ostream& os, std::span<const ComparisonRow> rows) {
  os << "method,train_seconds,predict_seconds\n";
  for (const auto& r : rows) {
    os << to_string(r.method) << ',' << format_double(r.metrics.train_seconds) << ','
       << format_double(r.metrics.predict_seconds) << '\n';
  }
}

void write_plot_data(std::ostream& os, std::span<const ComparisonRow> rows) {
  os << "method,metric,value\n";
  for (const auto& r : rows) {
    os << to_string(r.method) << ",acc," << format_double(r.metrics.acc) << '\n';
    os << to_string(r.method) << ",rmse," << format_double(r.metrics.rmse) << '\n';
  }
}

}  // namespace cobra::eval
