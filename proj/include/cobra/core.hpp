#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cobra {

/// Raised when a text document (evidence file, model file, network file,
/// config) cannot be parsed. The message carries the line or field at fault.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class AgentRole : std::uint8_t { advisor, target, advisee };

std::string_view to_string(AgentRole role);

/// Opaque agent identifier. Unique within a world.
class AgentId {
 public:
  AgentId() = default;
  explicit AgentId(std::string value) : value_(std::move(value)) {}

  const std::string& str() const noexcept { return value_; }
  bool empty() const noexcept { return value_.empty(); }

  friend auto operator<=>(const AgentId&, const AgentId&) = default;
  friend bool operator==(const AgentId&, const AgentId&) = default;

 private:
  std::string value_;
};

std::ostream& operator<<(std::ostream& os, const AgentId& id);

/// Probability that a target is trustworthy. Always in [0, 1].
class TrustScore {
 public:
  TrustScore() = default;
  explicit TrustScore(double p);

  double value() const noexcept { return p_; }

  friend auto operator<=>(const TrustScore&, const TrustScore&) = default;

 private:
  double p_ = 0.5;
};

/// Ordered tuple of real-valued context features. Every feature is finite.
class ContextVector {
 public:
  ContextVector() = default;
  explicit ContextVector(std::vector<double> features);
  ContextVector(std::initializer_list<double> features)
      : ContextVector(std::vector<double>(features)) {}

  std::size_t size() const noexcept { return features_.size(); }
  double operator[](std::size_t i) const { return features_[i]; }
  std::span<const double> values() const noexcept { return features_; }

  friend bool operator==(const ContextVector&, const ContextVector&) = default;

 private:
  std::vector<double> features_;
};

/// Binary interaction outcome: 0 = SLA violated, 1 = SLA met.
using Outcome = std::uint8_t;

/// One first-hand interaction with a target.
struct EvidenceRecord {
  EvidenceRecord() = default;
  EvidenceRecord(AgentId target, ContextVector context, int outcome);

  AgentId target;
  ContextVector context;
  Outcome outcome = 0;

  friend bool operator==(const EvidenceRecord&, const EvidenceRecord&) = default;
};

using EvidenceStore = std::vector<EvidenceRecord>;

/// Entropy in bits of a Bernoulli(p) variable, with 0*log2(0) = 0.
/// Throws std::domain_error when p is outside [0, 1].
double bernoulli_entropy(double p);

/// Mean Bernoulli entropy of the samples; 1.0 for an empty list.
double average_entropy(std::span<const double> samples);

// Evidence file: header `target,<feature names...>,t`, then one record per line.

struct EvidenceFile {
  std::vector<std::string> feature_names;
  EvidenceStore records;
};

void write_evidence(std::ostream& os, const EvidenceFile& file);
EvidenceFile read_evidence(std::istream& is);
EvidenceFile read_evidence_file(const std::string& path);
void write_evidence_file(const std::string& path, const EvidenceFile& file);

/// Shortest decimal representation that parses back to the same double.
std::string format_double(double value);

/// Strict double parse of a whole token; throws ParseError naming `what`.
double parse_double(std::string_view token, std::string_view what);

}  // namespace cobra

template <>
struct std::hash<cobra::AgentId> {
  std::size_t operator()(const cobra::AgentId& id) const noexcept {
    return std::hash<std::string>{}(id.str());
  }
};
