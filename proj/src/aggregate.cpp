#include "replysent/aggregate.hpp"

#include <cmath>

namespace replysent::agg {

ReplyLabelCounts ReplyLabelCounts::from_labels(std::span<const corpus::SentimentLabel> labels) {
  ReplyLabelCounts counts;
  for (corpus::SentimentLabel label : labels) {
    switch (label) {
      case corpus::SentimentLabel::positive: counts.n_pos += 1; break;
      case corpus::SentimentLabel::negative: counts.n_neg += 1; break;
      case corpus::SentimentLabel::neutral: counts.n_neu += 1; break;
    }
  }
  return counts;
}

void AggregationThresholds::validate() const {
  if (!(neutral_fraction > 0.0 && neutral_fraction < 1.0)) {
    throw ConfigError("AggregationThresholds: neutral_fraction must lie in (0, 1)");
  }
  if (pos_over_neg < 1.0 || neg_over_pos < 1.0) {
    throw ConfigError("AggregationThresholds: dominance ratios must be >= 1");
  }
}

namespace {

constexpr long long kScale = 1'000'000;

long long to_scaled(double threshold) {
  return static_cast<long long>(std::llround(threshold * static_cast<double>(kScale)));
}

// count_a > threshold * count_b, in exact integer arithmetic.
bool exceeds(long long count_a, long long threshold_scaled, long long count_b) {
  return static_cast<__int128>(count_a) * kScale >
         static_cast<__int128>(threshold_scaled) * count_b;
}

}  // namespace

corpus::SentimentLabel aggregate_label(const ReplyLabelCounts& counts,
                                       const AggregationThresholds& thresholds) {
  thresholds.validate();
  if (counts.n_pos < 0 || counts.n_neg < 0 || counts.n_neu < 0) {
    throw DataError("aggregate_label: negative count");
  }
  const long long total = counts.total();
  if (total < 1) {
    throw DataError("aggregate_label: no replies to aggregate");
  }
  if (exceeds(counts.n_neu, to_scaled(thresholds.neutral_fraction), total)) {
    return corpus::SentimentLabel::neutral;
  }
  if (exceeds(counts.n_pos, to_scaled(thresholds.pos_over_neg), counts.n_neg)) {
    return corpus::SentimentLabel::positive;
  }
  if (exceeds(counts.n_neg, to_scaled(thresholds.neg_over_pos), counts.n_pos)) {
    return corpus::SentimentLabel::negative;
  }
  return corpus::SentimentLabel::neutral;
}

std::vector<corpus::LabeledTweet> autolabel_threads(
    std::span<const corpus::ThreadRecord> threads, const ReplyClassifier& classifier,
    const AggregationThresholds& thresholds) {
  std::vector<corpus::LabeledTweet> labeled;
  labeled.reserve(threads.size());
  for (const corpus::ThreadRecord& thread : threads) {
    ReplyLabelCounts counts;
    try {
      for (const std::string& reply : thread.replies) {
        switch (classifier(reply)) {
          case corpus::SentimentLabel::positive: counts.n_pos += 1; break;
          case corpus::SentimentLabel::negative: counts.n_neg += 1; break;
          case corpus::SentimentLabel::neutral: counts.n_neu += 1; break;
        }
      }
      labeled.push_back(corpus::LabeledTweet{thread.source_id, thread.source_text,
                                             aggregate_label(counts, thresholds)});
    } catch (const NumericError& e) {
      throw NumericError("thread '" + thread.source_id + "': " + e.what());
    } catch (const DataError& e) {
      throw DataError("thread '" + thread.source_id + "': " + e.what());
    }
  }
  return labeled;
}

}  // namespace replysent::agg
