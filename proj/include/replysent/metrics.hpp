#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <utility>

#include "replysent/corpus.hpp"

namespace replysent::pipeline {

// 3x3 count table; rows are gold labels, columns predictions, both in the
// fixed (negative, neutral, positive) order.
struct ConfusionMatrix {
  std::array<std::array<long long, 3>, 3> counts{};

  void add(corpus::SentimentLabel gold, corpus::SentimentLabel predicted) {
    counts[corpus::label_index(gold)][corpus::label_index(predicted)] += 1;
  }

  long long total() const;
  long long gold_count(int c) const;
  long long predicted_count(int c) const;

  bool operator==(const ConfusionMatrix&) const = default;
};

struct Metrics {
  double accuracy = 0.0;
  std::array<double, 3> precision{};
  std::array<double, 3> recall{};
  std::array<double, 3> f1{};
  double eq1_precision = 0.0;
  double eq1_recall = 0.0;
  double eq1_f1 = 0.0;
};

// Mean of a metric's positive-class and negative-class values; the neutral
// class is excluded from the aggregate.
double eq1(double score_pos, double score_neg);

// Zero-denominator convention: precision/recall with an empty denominator
// is 0, and F1 of (0, 0) is 0.
Metrics metrics_from_confusion(const ConfusionMatrix& cm);

ConfusionMatrix confusion_from_pairs(
    std::span<const std::pair<corpus::SentimentLabel, corpus::SentimentLabel>> gold_predicted);

// Writes <base>.txt (aligned table), <base>.json (machine-readable counts)
// and <base>.svg (heatmap).
void render_confusion(const ConfusionMatrix& cm, const std::filesystem::path& base_path);

ConfusionMatrix load_confusion_counts(const std::filesystem::path& json_path);

}  // namespace replysent::pipeline
