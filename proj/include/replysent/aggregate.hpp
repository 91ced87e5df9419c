#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "replysent/corpus.hpp"

namespace replysent::agg {

struct ReplyLabelCounts {
  long long n_pos = 0;
  long long n_neg = 0;
  long long n_neu = 0;

  long long total() const { return n_pos + n_neg + n_neu; }

  static ReplyLabelCounts from_labels(std::span<const corpus::SentimentLabel> labels);
};

// Decision thresholds: neutral wins outright above `neutral_fraction` of all
// replies; otherwise positive needs more than `pos_over_neg` times the
// negatives, negative more than `neg_over_pos` times the positives.
struct AggregationThresholds {
  double neutral_fraction = 0.85;
  double pos_over_neg = 1.5;
  double neg_over_pos = 1.6;

  void validate() const;
};

// One label from reply-label counts. Branches evaluate in order with strict
// comparisons: neutral-majority, then positive dominance, then negative
// dominance, else neutral. Comparisons run in exact integer arithmetic
// (thresholds quantized to rationals over 10^6) so boundary counts such as
// 17 neutral of 20 fall through rather than hitting float rounding.
corpus::SentimentLabel aggregate_label(const ReplyLabelCounts& counts,
                                       const AggregationThresholds& thresholds);

using ReplyClassifier = std::function<corpus::SentimentLabel(const std::string&)>;

// Classifies every reply of every thread (the source text is never given to
// the classifier), aggregates the predicted labels, and emits one labeled
// record per thread keyed by the source id. Output order matches input
// order. Classifier failures carry the offending thread id.
std::vector<corpus::LabeledTweet> autolabel_threads(
    std::span<const corpus::ThreadRecord> threads, const ReplyClassifier& classifier,
    const AggregationThresholds& thresholds);

}  // namespace replysent::agg
