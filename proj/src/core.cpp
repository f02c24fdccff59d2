#include "cobra/core.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

namespace cobra {

std::string_view to_string(AgentRole role) {
  switch (role) {
    case AgentRole::advisor: return "advisor";
    case AgentRole::target: return "target";
    case AgentRole::advisee: return "advisee";
  }
  return "unknown";
}

std::ostream& operator<<(std::ostream& os, const AgentId& id) { return os << id.str(); }

TrustScore::TrustScore(double p) : p_(p) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw std::domain_error("trust score outside [0,1]: " + format_double(p));
  }
}

ContextVector::ContextVector(std::vector<double> features) : features_(std::move(features)) {
  for (double f : features_) {
    if (!std::isfinite(f)) throw std::invalid_argument("context feature is not finite");
  }
}

EvidenceRecord::EvidenceRecord(AgentId target_id, ContextVector ctx, int t)
    : target(std::move(target_id)), context(std::move(ctx)) {
  if (t != 0 && t != 1) throw std::invalid_argument("outcome must be 0 or 1");
  outcome = static_cast<Outcome>(t);
}

double bernoulli_entropy(double p) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw std::domain_error("bernoulli_entropy: probability outside [0,1]");
  }
  auto term = [](double q) { return q > 0.0 ? -q * std::log2(q) : 0.0; };
  return term(p) + term(1.0 - p);
}

double average_entropy(std::span<const double> samples) {
  if (samples.empty()) return 1.0;
  double sum = 0.0;
  for (double p : samples) sum += bernoulli_entropy(p);
  return sum / static_cast<double>(samples.size());
}

std::string format_double(double value) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc{}) throw std::runtime_error("format_double failed");
  return std::string(buf, end);
}

double parse_double(std::string_view token, std::string_view what) {
  double value = 0.0;
  const char* first = token.data();
  const char* last = token.data() + token.size();
  if (!token.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last || token.empty()) {
    throw ParseError(std::string(what) + ": malformed number '" + std::string(token) + "'");
  }
  return value;
}

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

std::string_view trim_cr(std::string_view s) {
  if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
  return s;
}

}  // namespace

void write_evidence(std::ostream& os, const EvidenceFile& file) {
  os << "target";
  for (const auto& name : file.feature_names) os << ',' << name;
  os << ",t\n";
  for (const auto& rec : file.records) {
    if (rec.context.size() != file.feature_names.size()) {
      throw std::invalid_argument("write_evidence: record context length does not match header");
    }
    os << rec.target.str();
    for (double f : rec.context.values()) os << ',' << format_double(f);
    os << ',' << static_cast<int>(rec.outcome) << '\n';
  }
}

EvidenceFile read_evidence(std::istream& is) {
  EvidenceFile file;
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(is, line)) throw ParseError("evidence: missing header line");
  ++line_no;
  auto header = split_commas(trim_cr(line));
  if (header.size() < 2 || header.front() != "target" || header.back() != "t") {
    throw ParseError("evidence line 1: header must be 'target,<features...>,t'");
  }
  for (std::size_t i = 1; i + 1 < header.size(); ++i) file.feature_names.emplace_back(header[i]);
  const std::size_t k = file.feature_names.size();

  while (std::getline(is, line)) {
    ++line_no;
    auto view = trim_cr(line);
    if (view.empty()) continue;
    auto fields = split_commas(view);
    const std::string where = "evidence line " + std::to_string(line_no);
    if (fields.size() != k + 2) {
      throw ParseError(where + ": expected " + std::to_string(k + 2) + " fields, got " +
                       std::to_string(fields.size()));
    }
    if (fields.front().empty()) throw ParseError(where + ": empty target id");
    std::vector<double> ctx(k);
    for (std::size_t j = 0; j < k; ++j) {
      ctx[j] = parse_double(fields[j + 1], where + " field " + file.feature_names[j]);
      if (!std::isfinite(ctx[j])) throw ParseError(where + ": non-finite context feature");
    }
    const auto t = fields.back();
    if (t != "0" && t != "1") throw ParseError(where + ": outcome must be 0 or 1");
    file.records.emplace_back(AgentId(std::string(fields.front())), ContextVector(std::move(ctx)),
                              t == "1" ? 1 : 0);
  }
  return file;
}

EvidenceFile read_evidence_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open evidence file: " + path);
  return read_evidence(in);
}

void write_evidence_file(const std::string& path, const EvidenceFile& file) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write evidence file: " + path);
  write_evidence(out, file);
}

}  // namespace cobra
