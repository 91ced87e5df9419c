#include "replysent/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <unordered_set>

#include <json.hpp>

namespace replysent::corpus {

using nlohmann::json;

std::string_view label_name(SentimentLabel label) {
  switch (label) {
    case SentimentLabel::negative: return "negative";
    case SentimentLabel::neutral: return "neutral";
    case SentimentLabel::positive: return "positive";
  }
  return "invalid";
}

std::optional<SentimentLabel> parse_label(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "negative") return SentimentLabel::negative;
  if (lower == "neutral") return SentimentLabel::neutral;
  if (lower == "positive") return SentimentLabel::positive;
  return std::nullopt;
}

namespace {

[[noreturn]] void line_error(const std::filesystem::path& path, std::size_t line,
                             const std::string& what) {
  throw DataError(path.string() + ":" + std::to_string(line) + ": " + what);
}

json parse_line(const std::filesystem::path& path, std::size_t line, const std::string& text) {
  json record = json::parse(text, nullptr, false);
  if (record.is_discarded() || !record.is_object()) {
    line_error(path, line, "malformed record");
  }
  return record;
}

std::string require_string(const json& record, const char* field,
                           const std::filesystem::path& path, std::size_t line) {
  auto it = record.find(field);
  if (it == record.end()) line_error(path, line, std::string("missing field '") + field + "'");
  if (!it->is_string()) {
    line_error(path, line, std::string("field '") + field + "' must be a string");
  }
  return it->get<std::string>();
}

SentimentLabel require_label(const json& record, const char* field,
                             const std::filesystem::path& path, std::size_t line) {
  const std::string raw = require_string(record, field, path, line);
  auto label = parse_label(raw);
  if (!label) line_error(path, line, "unknown label '" + raw + "'");
  return *label;
}

bool is_blank(const std::string& s) {
  return std::all_of(s.begin(), s.end(),
                     [](unsigned char c) { return std::isspace(c) != 0; });
}

std::ifstream open_for_read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

std::ofstream open_for_write(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

}  // namespace

std::vector<LabeledTweet> load_labeled_corpus(const std::filesystem::path& path,
                                              std::string_view format) {
  if (format != "jsonl") {
    throw ConfigError("load_labeled_corpus: unknown format id '" + std::string(format) + "'");
  }
  std::ifstream in = open_for_read(path);
  std::vector<LabeledTweet> records;
  std::unordered_set<std::string> seen_ids;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (is_blank(text)) continue;
    const json record = parse_line(path, line, text);
    LabeledTweet tweet;
    tweet.id = require_string(record, "id", path, line);
    tweet.text = require_string(record, "text", path, line);
    tweet.label = require_label(record, "label", path, line);
    if (is_blank(tweet.text)) line_error(path, line, "empty text");
    if (!seen_ids.insert(tweet.id).second) {
      line_error(path, line, "duplicate id '" + tweet.id + "'");
    }
    records.push_back(std::move(tweet));
  }
  return records;
}

void save_labeled_corpus(std::span<const LabeledTweet> records,
                         const std::filesystem::path& path) {
  std::ofstream out = open_for_write(path);
  for (const LabeledTweet& tweet : records) {
    json record;
    record["id"] = tweet.id;
    record["text"] = tweet.text;
    record["label"] = label_name(tweet.label);
    out << record.dump() << '\n';
  }
  if (!out) throw DataError("write failed for " + path.string());
}

std::vector<ThreadRecord> load_threads(const std::filesystem::path& path) {
  std::ifstream in = open_for_read(path);
  std::vector<ThreadRecord> threads;
  std::unordered_set<std::string> seen_ids;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (is_blank(text)) continue;
    const json record = parse_line(path, line, text);
    ThreadRecord thread;
    thread.source_id = require_string(record, "source_id", path, line);
    thread.source_text = require_string(record, "source_text", path, line);
    auto replies = record.find("replies");
    if (replies == record.end() || !replies->is_array()) {
      line_error(path, line, "missing or non-array field 'replies'");
    }
    for (const json& reply : *replies) {
      if (!reply.is_string()) line_error(path, line, "non-string reply");
      thread.replies.push_back(reply.get<std::string>());
    }
    if (record.contains("gold_label")) {
      thread.gold_label = require_label(record, "gold_label", path, line);
    }
    if (!seen_ids.insert(thread.source_id).second) {
      line_error(path, line, "duplicate source_id '" + thread.source_id + "'");
    }
    threads.push_back(std::move(thread));
  }
  return threads;
}

void save_threads(std::span<const ThreadRecord> threads, const std::filesystem::path& path) {
  std::ofstream out = open_for_write(path);
  for (const ThreadRecord& thread : threads) {
    json record;
    record["source_id"] = thread.source_id;
    record["source_text"] = thread.source_text;
    record["replies"] = thread.replies;
    if (thread.gold_label) record["gold_label"] = label_name(*thread.gold_label);
    out << record.dump() << '\n';
  }
  if (!out) throw DataError("write failed for " + path.string());
}

std::vector<ThreadRecord> filter_threads(std::vector<ThreadRecord> threads, int min_replies,
                                         int min_tokens, const Tokenizer& tokenizer) {
  if (min_replies < 0 || min_tokens < 0) {
    throw ConfigError("filter_threads: thresholds must be non-negative");
  }
  std::vector<ThreadRecord> kept;
  kept.reserve(threads.size());
  for (ThreadRecord& thread : threads) {
    if (min_tokens > 0) {
      if (static_cast<int>(tokenizer(thread.source_text).size()) < min_tokens) continue;
      std::erase_if(thread.replies, [&](const std::string& reply) {
        return static_cast<int>(tokenizer(reply).size()) < min_tokens;
      });
    }
    if (static_cast<int>(thread.replies.size()) < min_replies) continue;
    kept.push_back(std::move(thread));
  }
  return kept;
}

ClassDistribution class_distribution(std::span<const LabeledTweet> examples) {
  ClassDistribution dist;
  for (const LabeledTweet& tweet : examples) {
    dist.counts[label_index(tweet.label)] += 1;
  }
  const long long total = dist.total();
  if (total > 0) {
    for (int c = 0; c < kNumClasses; ++c) {
      dist.fractions[c] = static_cast<double>(dist.counts[c]) / static_cast<double>(total);
    }
  }
  return dist;
}

ClassDistribution distribution_from_labels(std::span<const SentimentLabel> labels) {
  ClassDistribution dist;
  for (SentimentLabel label : labels) dist.counts[label_index(label)] += 1;
  const long long total = dist.total();
  if (total > 0) {
    for (int c = 0; c < kNumClasses; ++c) {
      dist.fractions[c] = static_cast<double>(dist.counts[c]) / static_cast<double>(total);
    }
  }
  return dist;
}

ClassWeights class_weights(const ClassDistribution& dist) {
  const long long total = dist.total();
  ClassWeights weights;
  for (int c = 0; c < kNumClasses; ++c) {
    if (dist.counts[c] == 0) {
      throw DataError("class_weights: class '" +
                      std::string(label_name(static_cast<SentimentLabel>(c))) +
                      "' has zero count");
    }
    weights.values[c] = static_cast<double>(total) /
                        (static_cast<double>(kNumClasses) * static_cast<double>(dist.counts[c]));
  }
  return weights;
}

}  // namespace replysent::corpus
