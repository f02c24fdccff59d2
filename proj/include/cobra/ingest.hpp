#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "cobra/core.hpp"

namespace cobra::ingest {

/// Largest time slice in the QoS data; slices are normalized by it.
inline constexpr unsigned kMaxTimeSlice = 63;
/// Response times at or below this many seconds meet the SLA.
inline constexpr double kSlaThreshold = 1.0;
inline constexpr std::size_t kDefaultSubsample = 100000;

/// One measured invocation of a service by a user.
struct ResponseRecord {
  std::string user_id;
  std::string service_id;
  unsigned time_slice = 0;
  double response_time = 0.0;  // seconds

  friend bool operator==(const ResponseRecord&, const ResponseRecord&) = default;
};

struct Reject {
  std::size_t line = 0;
  std::string reason;
};

struct ParseResult {
  std::vector<ResponseRecord> records;
  std::vector<Reject> rejects;
};

/// Reads `user service slice rt` lines, separated by whitespace or commas.
/// Blank lines and lines starting with '#' are ignored. Malformed lines are
/// collected as rejects; more than half malformed raises ParseError.
ParseResult parse_records(std::istream& is);
/// Throws std::runtime_error if the file cannot be opened.
ParseResult parse_records_file(const std::string& path);

/// Tab-separated, one record per line, doubles written losslessly.
void write_records(std::ostream& os, std::span<const ResponseRecord> records);

/// 1 when rt <= threshold. Throws std::invalid_argument unless rt > 0.
Outcome label_sla(double rt, double threshold = kSlaThreshold);

/// Context is the single feature slice / 63.
EvidenceRecord to_evidence(const ResponseRecord& record, double threshold = kSlaThreshold);

/// Evidence store of one user, in file order.
EvidenceStore to_evidence(std::span<const ResponseRecord> records, const std::string& user,
                          double threshold = kSlaThreshold);

/// One store per user, records in file order.
std::map<std::string, EvidenceStore> partition_by_user(std::span<const ResponseRecord> records,
                                                       double threshold = kSlaThreshold);

/// At most `cap` records chosen uniformly at random with `seed`, file order kept.
std::vector<ResponseRecord> subsample(std::span<const ResponseRecord> records, std::size_t cap,
                                      std::uint64_t seed);

}  // namespace cobra::ingest
