#include "cobra/baselines.hpp"

#include <stdexcept>

namespace cobra::baselines {

TrustScore brs_score(const FeedbackTally& tally) {
  const double r = static_cast<double>(tally.positive);
  const double s = static_cast<double>(tally.negative);
  return TrustScore((r + 1.0) / (r + s + 2.0));
}

TrustScore tmsiot_score(TrustScore own, std::span<const TrustScore> opinions, double w_own) {
  if (!(w_own >= 0.0 && w_own <= 1.0)) throw std::invalid_argument("w_own must be in [0,1]");
  if (opinions.empty()) return own;
  double sum = 0.0;
  for (const auto& o : opinions) sum += o.value();
  const double mean = sum / static_cast<double>(opinions.size());
  // Clamp guards the last-ulp drift of the convex combination.
  const double v = w_own * own.value() + (1.0 - w_own) * mean;
  return TrustScore(v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v));
}

}  // namespace cobra::baselines
