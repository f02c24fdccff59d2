#pragma once

#include <cstdint>
#include <span>

#include "cobra/core.hpp"

namespace cobra::baselines {

/// Positive (r) and negative (s) feedback counts about one target.
struct FeedbackTally {
  std::uint64_t positive = 0;
  std::uint64_t negative = 0;

  void add(Outcome t) { (t ? positive : negative) += 1; }
  FeedbackTally swapped() const { return {negative, positive}; }

  FeedbackTally& operator+=(const FeedbackTally& o) {
    positive += o.positive;
    negative += o.negative;
    return *this;
  }
  friend bool operator==(const FeedbackTally&, const FeedbackTally&) = default;
};

/// Beta Reputation System: posterior mean (r + 1) / (r + s + 2) of
/// Beta(r + 1, s + 1). Context-blind.
TrustScore brs_score(const FeedbackTally& tally);

inline constexpr double kDefaultOwnWeight = 0.5;

/// TMSIoT-style aggregation: w_own * own + (1 - w_own) * mean(opinions).
/// Returns `own` when there are no opinions.
TrustScore tmsiot_score(TrustScore own, std::span<const TrustScore> opinions,
                        double w_own = kDefaultOwnWeight);

}  // namespace cobra::baselines
