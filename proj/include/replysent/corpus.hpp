#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "replysent/errors.hpp"
#include "replysent/rng.hpp"

namespace replysent::corpus {

// Fixed three-way polarity. The index order (negative, neutral, positive)
// is used everywhere: loss weights, confusion-matrix axes, tie-breaking.
enum class SentimentLabel : int { negative = 0, neutral = 1, positive = 2 };

inline constexpr int kNumClasses = 3;
inline constexpr std::array<SentimentLabel, 3> kAllLabels = {
    SentimentLabel::negative, SentimentLabel::neutral, SentimentLabel::positive};

std::string_view label_name(SentimentLabel label);
std::optional<SentimentLabel> parse_label(std::string_view text);  // case-insensitive

inline int label_index(SentimentLabel label) { return static_cast<int>(label); }

struct LabeledTweet {
  std::string id;
  std::string text;
  SentimentLabel label;

  bool operator==(const LabeledTweet&) const = default;
};

struct ThreadRecord {
  std::string source_id;
  std::string source_text;
  std::vector<std::string> replies;
  std::optional<SentimentLabel> gold_label;

  bool operator==(const ThreadRecord&) const = default;
};

struct ClassDistribution {
  std::array<long long, 3> counts{};
  std::array<double, 3> fractions{};

  long long total() const { return counts[0] + counts[1] + counts[2]; }
};

struct ClassWeights {
  std::array<double, 3> values{};

  double operator[](SentimentLabel label) const { return values[label_index(label)]; }
};

// ---- file formats (JSON Lines, UTF-8, one record per line) ----

std::vector<LabeledTweet> load_labeled_corpus(const std::filesystem::path& path,
                                              std::string_view format = "jsonl");
void save_labeled_corpus(std::span<const LabeledTweet> records,
                         const std::filesystem::path& path);

std::vector<ThreadRecord> load_threads(const std::filesystem::path& path);
void save_threads(std::span<const ThreadRecord> threads, const std::filesystem::path& path);

// ---- transforms ----

using Tokenizer = std::function<std::vector<std::string>(const std::string&)>;

// Keeps threads with at least `min_replies` replies. When min_tokens > 0,
// replies shorter than min_tokens tokens are dropped first, the source text
// must reach min_tokens tokens, and the reply-count check applies to the
// surviving replies.
std::vector<ThreadRecord> filter_threads(std::vector<ThreadRecord> threads, int min_replies,
                                         int min_tokens, const Tokenizer& tokenizer);

// Deterministic shuffle-and-cut: validation gets floor(val_fraction * N)
// examples, the remainder trains. Same seed, same partition.
template <typename T>
std::pair<std::vector<T>, std::vector<T>> split(const std::vector<T>& examples,
                                                double val_fraction, std::uint64_t seed) {
  if (val_fraction < 0.0 || val_fraction >= 1.0) {
    throw ConfigError("split: val_fraction " + std::to_string(val_fraction) +
                      " outside [0, 1)");
  }
  std::vector<std::size_t> order(examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  nn::RngStream rng(seed);
  rng.shuffle(order);

  const std::size_t n_val =
      static_cast<std::size_t>(val_fraction * static_cast<double>(examples.size()));
  std::vector<T> val;
  std::vector<T> train;
  val.reserve(n_val);
  train.reserve(examples.size() - n_val);
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < n_val ? val : train).push_back(examples[order[i]]);
  }
  return {std::move(train), std::move(val)};
}

ClassDistribution class_distribution(std::span<const LabeledTweet> examples);
ClassDistribution distribution_from_labels(std::span<const SentimentLabel> labels);

// weight_c = N / (3 * n_c); balanced counts give all ones. Any zero class
// count is an error.
ClassWeights class_weights(const ClassDistribution& dist);

}  // namespace replysent::corpus
