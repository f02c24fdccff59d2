#include "cobra/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>

namespace cobra::ingest {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  if (line.find(',') != std::string_view::npos) {
    std::size_t start = 0;
    while (true) {
      const auto comma = line.find(',', start);
      out.push_back(trim(line.substr(start, comma - start)));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    return out;
  }
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    if (i == line.size()) break;
    const auto start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    out.push_back(line.substr(start, i - start));
  }
  return out;
}

// Empty string on success, otherwise the reason.
std::string parse_line(std::string_view line, ResponseRecord& rec) {
  const auto f = split_fields(line);
  if (f.size() != 4) return "expected 4 fields, got " + std::to_string(f.size());
  if (f[0].empty() || f[1].empty()) return "empty user or service id";
  rec.user_id = std::string(f[0]);
  rec.service_id = std::string(f[1]);

  unsigned long slice = 0;
  const std::string s(f[2]);
  std::size_t pos = 0;
  try {
    if (s.empty() || s.front() == '-' || s.front() == '+') throw std::invalid_argument("sign");
    slice = std::stoul(s, &pos);
  } catch (const std::exception&) {
    return "time slice is not a non-negative integer: '" + s + "'";
  }
  if (pos != s.size()) return "time slice is not a non-negative integer: '" + s + "'";
  if (slice > kMaxTimeSlice) return "time slice " + s + " exceeds " + std::to_string(kMaxTimeSlice);
  rec.time_slice = static_cast<unsigned>(slice);

  double rt = 0.0;
  try {
    rt = parse_double(f[3], "response time");
  } catch (const ParseError& e) {
    return e.what();
  }
  if (!std::isfinite(rt)) return "response time is not finite";
  if (!(rt > 0.0)) return "non-positive response time (missing measurement)";
  rec.response_time = rt;
  return {};
}

}  // namespace

ParseResult parse_records(std::istream& is) {
  ParseResult result;
  std::string line;
  std::size_t line_no = 0;
  std::size_t considered = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto body = trim(line);
    if (body.empty() || body.front() == '#') continue;
    ++considered;
    ResponseRecord rec;
    auto reason = parse_line(body, rec);
    if (reason.empty()) {
      result.records.push_back(std::move(rec));
    } else {
      result.rejects.push_back({line_no, std::move(reason)});
    }
  }
  if (considered > 0 && 2 * result.rejects.size() > considered) {
    const auto& first = result.rejects.front();
    throw ParseError("QoS data: " + std::to_string(result.rejects.size()) + " of " +
                     std::to_string(considered) + " lines malformed (format mismatch?); first at line " +
                     std::to_string(first.line) + ": " + first.reason);
  }
  return result;
}

ParseResult parse_records_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open QoS data file '" + path + "'");
  return parse_records(in);
}

void write_records(std::ostream& os, std::span<const ResponseRecord> records) {
  for (const auto& r : records) {
    os << r.user_id << '\t' << r.service_id << '\t' << r.time_slice << '\t'
       << format_double(r.response_time) << '\n';
  }
}

Outcome label_sla(double rt, double threshold) {
  if (!(rt > 0.0)) throw std::invalid_argument("response time must be positive");
  return rt <= threshold ? 1 : 0;
}

EvidenceRecord to_evidence(const ResponseRecord& record, double threshold) {
  const double slice = static_cast<double>(record.time_slice) / static_cast<double>(kMaxTimeSlice);
  return {AgentId(record.service_id), ContextVector{slice}, label_sla(record.response_time, threshold)};
}

EvidenceStore to_evidence(std::span<const ResponseRecord> records, const std::string& user,
                          double threshold) {
  EvidenceStore out;
  for (const auto& r : records) {
    if (r.user_id == user) out.push_back(to_evidence(r, threshold));
  }
  return out;
}

std::map<std::string, EvidenceStore> partition_by_user(std::span<const ResponseRecord> records,
                                                       double threshold) {
  std::map<std::string, EvidenceStore> out;
  for (const auto& r : records) out[r.user_id].push_back(to_evidence(r, threshold));
  return out;
}

std::vector<ResponseRecord> subsample(std::span<const ResponseRecord> records, std::size_t cap,
                                      std::uint64_t seed) {
  if (records.size() <= cap) return {records.begin(), records.end()};
  std::vector<std::size_t> idx(records.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(cap);
  std::sort(idx.begin(), idx.end());
  std::vector<ResponseRecord> out;
  out.reserve(cap);
  for (auto i : idx) out.push_back(records[i]);
  return out;
}

}  // namespace cobra::ingest
