#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "replysent/aggregate.hpp"
#include "replysent/corpus.hpp"
#include "replysent/metrics.hpp"
#include "replysent/models.hpp"

namespace replysent::pipeline {

enum class SelectionRule { best_val_eq1_f1, last_epoch };

std::string_view selection_rule_name(SelectionRule rule);
std::optional<SelectionRule> parse_selection_rule(std::string_view name);

struct TrainConfig {
  std::string stage_id = "stage1";
  double learning_rate = 1e-4;
  double weight_decay = 1e-5;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 30;
  std::uint64_t seed = 42;
  SelectionRule selection = SelectionRule::best_val_eq1_f1;
};

struct EpochStats {
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_eq1_f1 = 0.0;
};

struct TrainingHistory {
  std::vector<EpochStats> epochs;
  int selected_epoch = 0;  // 1-based; 0 when no epochs ran
};

void save_history(const TrainingHistory& history, const std::filesystem::path& path);
TrainingHistory load_history(const std::filesystem::path& path);

// An encoded training/evaluation example.
struct Example {
  std::vector<int> indices;
  corpus::SentimentLabel label;
};

std::vector<Example> encode_examples(std::span<const corpus::LabeledTweet> tweets,
                                     const text::Vocabulary& vocab);

// Mini-batch Adam training with the weighted cross-entropy loss; loss
// weights come from the class distribution of the training split (every
// class must be present). The model is left holding the parameters of the
// selected epoch (default: best validation eq1 F1; latest epoch when the
// validation set is empty or the rule says so).
TrainingHistory train(models::Model& model, const TrainConfig& config,
                      std::span<const Example> train_set, std::span<const Example> val_set);

struct EvalResult {
  Metrics metrics;
  ConfusionMatrix confusion;
};

EvalResult evaluate(const models::Model& model, std::span<const Example> examples);
EvalResult evaluate_ensemble(const models::Model& a, const models::Model& b,
                             std::span<const Example> examples);

// Classifies each thread's source text with the given (stage-1) model and
// scores it against the thread's gold reply-sentiment label.
EvalResult direct_baseline(const models::Model& stage1,
                           std::span<const corpus::ThreadRecord> gold_threads);

// ---- two-stage orchestration ----

struct TwoStageConfig {
  std::filesystem::path labeled_corpus_path;
  std::filesystem::path threads_path;
  std::filesystem::path gold_threads_path;
  std::filesystem::path out_dir;
  std::filesystem::path embeddings_path;  // empty: seeded random embeddings

  std::uint64_t seed = 42;
  std::size_t embed_dim = 200;
  std::size_t stage1_vocab_size = 50'000;
  std::size_t stage2_vocab_size = 750'000;
  std::size_t stage1_hidden_size = 256;
  std::size_t stage2_hidden_size = 300;
  std::size_t num_stacked_bilstm = 2;
  std::size_t cnn_maps_per_width = 200;
  double dropout_p = 0.5;
  double val_fraction = 0.1;

  TrainConfig stage1_train{.stage_id = "stage1",
                           .learning_rate = 1e-4,
                           .weight_decay = 1e-5};
  TrainConfig stage2_train{.stage_id = "stage2",
                           .learning_rate = 9e-5,
                           .weight_decay = 1e-4};

  int min_replies = 20;
  int min_tokens = 0;
  agg::AggregationThresholds thresholds;
};

struct TwoStageReport {
  Metrics stage1_validation;
  corpus::ClassDistribution autolabel_distribution;
  Metrics proposed;
  Metrics ensemble;
  Metrics direct;
  std::filesystem::path report_path;
};

// Runs the full pipeline: stage-1 training on the labeled corpus,
// auto-labeling of the threads, stage-2 BiLSTM + CNN training on the
// auto-labels, and evaluation of the proposed system, the ensemble, and the
// direct baseline on the gold threads. Inputs are loaded per stage so that
// stage-1 artifacts persist even when a later stage's input is missing;
// failures carry their stage id.
TwoStageReport two_stage_run(const TwoStageConfig& config);

// Serialization of a metrics block (used per evaluated system).
void save_metrics(const Metrics& metrics, const std::filesystem::path& path);

}  // namespace replysent::pipeline
