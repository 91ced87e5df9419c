#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "replysent/pipeline.hpp"

namespace replysent::cli {

// Flat-key run configuration. Every field has a documented default except
// the data paths; command-line overrides win over file values.
struct RunConfig {
  std::uint64_t seed = 42;
  std::string out_dir = "out";

  // data paths (no defaults)
  std::string labeled_corpus_path;
  std::string threads_path;
  std::string gold_threads_path;
  std::string embeddings_path;  // optional; empty means seeded random init

  std::size_t embed_dim = 200;
  std::size_t stage1_vocab_size = 50'000;
  std::size_t stage2_vocab_size = 750'000;
  std::size_t stage1_hidden_size = 256;
  std::size_t stage2_hidden_size = 300;
  std::size_t num_stacked_bilstm = 2;
  std::size_t cnn_maps_per_width = 200;
  double dropout = 0.5;

  double stage1_learning_rate = 1e-4;
  double stage1_weight_decay = 1e-5;
  double stage2_learning_rate = 9e-5;
  double stage2_weight_decay = 1e-4;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 30;
  double val_fraction = 0.1;
  std::string checkpoint_selection = "best_val_eq1_f1";

  int min_replies = 20;
  int min_tokens = 0;
  double neutral_fraction = 0.85;
  double pos_over_neg = 1.5;
  double neg_over_pos = 1.6;

  // Loads defaults, then the config file (when given), then key=value
  // overrides. Unknown keys and unparseable values are config errors.
  static RunConfig load(const std::optional<std::filesystem::path>& file,
                        const std::vector<std::string>& overrides);

  void apply_override(const std::string& key, const std::string& value);

  std::string to_json_string() const;

  // Writes the fully resolved configuration into the output directory.
  void echo(const std::filesystem::path& out_dir) const;

  pipeline::TrainConfig stage1_train_config() const;
  pipeline::TrainConfig stage2_train_config() const;
  agg::AggregationThresholds thresholds() const;
  pipeline::TwoStageConfig two_stage() const;
};

}  // namespace replysent::cli
