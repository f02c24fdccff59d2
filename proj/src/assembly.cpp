#include "cobra/assembly.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <sstream>

namespace cobra::assembly {

TrainingSet::TrainingSet(std::vector<std::string> context_names, std::vector<AgentId> roster)
    : context_names_(std::move(context_names)), roster_(std::move(roster)) {}

void TrainingSet::set(std::size_t row, std::size_t col, double value) {
  features_.at(row * width() + col) = value;
}

void TrainingSet::append_row(std::span<const double> values, Outcome label) {
  if (values.size() != width()) {
    throw std::invalid_argument("append_row: row has " + std::to_string(values.size()) +
                                " values, expected " + std::to_string(width()));
  }
  if (label > 1) throw std::invalid_argument("append_row: label must be 0 or 1");
  for (std::size_t j = context_size(); j < width(); ++j) {
    if (!(values[j] >= 0.0 && values[j] <= 1.0)) {
      throw std::invalid_argument("append_row: advisor column outside [0,1]");
    }
  }
  features_.insert(features_.end(), values.begin(), values.end());
  labels_.push_back(label);
}

void TrainingSet::add_advisor(const AgentId& advisor) {
  if (advisor_column(advisor) != npos) return;
  const std::size_t old_width = width();
  roster_.push_back(advisor);
  std::vector<double> widened;
  widened.reserve(rows() * width());
  for (std::size_t r = 0; r < rows(); ++r) {
    const auto first = features_.begin() + static_cast<std::ptrdiff_t>(r * old_width);
    widened.insert(widened.end(), first, first + static_cast<std::ptrdiff_t>(old_width));
    widened.push_back(kNoInformation);
  }
  features_ = std::move(widened);
}

std::size_t TrainingSet::advisor_column(const AgentId& advisor) const {
  const auto it = std::find(roster_.begin(), roster_.end(), advisor);
  return it == roster_.end() ? npos
                             : context_size() + static_cast<std::size_t>(it - roster_.begin());
}

TrainingSet TrainingSet::select(std::span<const std::size_t> rows) const {
  TrainingSet out(context_names_, roster_);
  out.features_.reserve(rows.size() * width());
  out.labels_.reserve(rows.size());
  for (auto r : rows) {
    const auto src = row(r);
    out.features_.insert(out.features_.end(), src.begin(), src.end());
    out.labels_.push_back(labels_.at(r));
  }
  return out;
}

std::vector<double> TrainingSet::column_entropies() const {
  std::vector<double> h(width(), 0.0);
  std::vector<double> column(rows());
  for (std::size_t j = context_size(); j < width(); ++j) {
    for (std::size_t r = 0; r < rows(); ++r) column[r] = features_[r * width() + j];
    h[j] = average_entropy(column);
  }
  return h;
}

std::vector<bnn::InputKind> TrainingSet::input_kinds() const {
  std::vector<bnn::InputKind> kinds(width(), bnn::InputKind::advisor);
  std::fill(kinds.begin(), kinds.begin() + static_cast<std::ptrdiff_t>(context_size()),
            bnn::InputKind::context);
  return kinds;
}

std::vector<std::string> TrainingSet::input_names() const {
  std::vector<std::string> names = context_names_;
  for (const auto& a : roster_) names.push_back(a.str());
  return names;
}

double advisor_input(const encap::ModelRepository& repo, const AgentId& advisor,
                     const AgentId& target, const ContextVector& context) {
  const auto* model = repo.find(advisor, target);
  return model ? model->predict(context.values()) : kNoInformation;
}

std::vector<double> input_row(const encap::ModelRepository& repo, std::span<const AgentId> roster,
                              const AgentId& target, const ContextVector& context,
                              AssemblyCounters* counters) {
  std::vector<double> row(context.values().begin(), context.values().end());
  row.reserve(context.size() + roster.size());
  for (const auto& u : roster) row.push_back(advisor_input(repo, u, target, context));
  if (counters) {
    counters->model_queries += roster.size();
    ++counters->rows_visited;
  }
  return row;
}

namespace {

std::vector<std::string> default_context_names(std::size_t k) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < k; ++i) names.push_back("c" + std::to_string(i + 1));
  return names;
}

}  // namespace

TrainingSet init_training_data(std::span<const EvidenceRecord> evidence,
                               const encap::ModelRepository& repo, std::span<const AgentId> roster,
                               std::vector<std::string> context_names,
                               AssemblyCounters* counters) {
  if (context_names.empty() && !evidence.empty()) {
    context_names = default_context_names(evidence.front().context.size());
  }
  TrainingSet set(std::move(context_names), std::vector<AgentId>(roster.begin(), roster.end()));
  for (const auto& rec : evidence) {
    if (rec.context.size() != set.context_size()) {
      throw std::invalid_argument("init_training_data: context length mismatch");
    }
    set.append_row(input_row(repo, roster, rec.target, rec.context, counters), rec.outcome);
  }
  return set;
}

void update_vertical(TrainingSet& set, const EvidenceRecord& record,
                     const encap::ModelRepository& repo, AssemblyCounters* counters) {
  if (record.context.size() != set.context_size()) {
    throw std::invalid_argument("update_vertical: context length mismatch");
  }
  set.append_row(input_row(repo, set.roster(), record.target, record.context, counters),
                 record.outcome);
}

void update_horizontal(TrainingSet& set, const encap::EncapsulatedModel& model,
                       std::span<const EvidenceRecord> evidence, AssemblyCounters* counters) {
  if (evidence.size() != set.rows()) {
    throw std::invalid_argument("update_horizontal: evidence does not match training rows");
  }
  set.add_advisor(model.owner());
  const std::size_t col = set.advisor_column(model.owner());
  for (std::size_t i = 0; i < evidence.size(); ++i) {
    if (counters) ++counters->rows_visited;
    if (evidence[i].target != model.subject()) continue;
    set.set(i, col, model.predict(evidence[i].context.values()));
    if (counters) ++counters->model_queries;
  }
}

void write_training_set(std::ostream& os, const TrainingSet& set) {
  for (const auto& name : set.context_names()) os << name << ',';
  for (const auto& advisor : set.roster()) os << '@' << advisor.str() << ',';
  os << "label\n";
  for (std::size_t r = 0; r < set.rows(); ++r) {
    for (double v : set.row(r)) os << format_double(v) << ',';
    os << static_cast<int>(set.labels()[r]) << '\n';
  }
}

TrainingSet read_training_set(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw ParseError("training set: missing header");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) header.push_back(tok);
  }
  if (header.empty() || header.back() != "label") {
    throw ParseError("training set line 1: last column must be 'label'");
  }
  header.pop_back();
  std::vector<std::string> context;
  std::vector<AgentId> roster;
  for (const auto& h : header) {
    if (!h.empty() && h.front() == '@') {
      roster.emplace_back(h.substr(1));
    } else {
      if (!roster.empty()) throw ParseError("training set line 1: context column after advisor column");
      context.push_back(h);
    }
  }
  TrainingSet set(std::move(context), std::move(roster));
  std::size_t line_no = 1;
  std::vector<double> values(set.width());
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string tok;
    std::vector<std::string> f;
    while (std::getline(ss, tok, ',')) f.push_back(tok);
    const std::string where = "training set line " + std::to_string(line_no);
    if (f.size() != set.width() + 1) throw ParseError(where + ": wrong field count");
    for (std::size_t j = 0; j < set.width(); ++j) values[j] = parse_double(f[j], where);
    if (f.back() != "0" && f.back() != "1") throw ParseError(where + ": label must be 0 or 1");
    try {
      set.append_row(values, f.back() == "1" ? 1 : 0);
    } catch (const std::invalid_argument& e) {
      throw ParseError(where + ": " + e.what());
    }
  }
  return set;
}

}  // namespace cobra::assembly
