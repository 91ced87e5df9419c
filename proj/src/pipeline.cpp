#include "replysent/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "replysent/adam.hpp"

namespace replysent::pipeline {

using nlohmann::json;

std::string_view selection_rule_name(SelectionRule rule) {
  return rule == SelectionRule::best_val_eq1_f1 ? "best_val_eq1_f1" : "last_epoch";
}

std::optional<SelectionRule> parse_selection_rule(std::string_view name) {
  if (name == "best_val_eq1_f1") return SelectionRule::best_val_eq1_f1;
  if (name == "last_epoch") return SelectionRule::last_epoch;
  return std::nullopt;
}

void save_history(const TrainingHistory& history, const std::filesystem::path& path) {
  json doc;
  doc["selected_epoch"] = history.selected_epoch;
  json epochs = json::array();
  for (const EpochStats& e : history.epochs) {
    epochs.push_back(json{{"train_loss", e.train_loss},
                          {"val_loss", e.val_loss},
                          {"val_eq1_f1", e.val_eq1_f1}});
  }
  doc["epochs"] = std::move(epochs);
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

TrainingHistory load_history(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw DataError("malformed history file " + path.string());
  TrainingHistory history;
  history.selected_epoch = doc.at("selected_epoch").get<int>();
  for (const json& e : doc.at("epochs")) {
    history.epochs.push_back(EpochStats{e.at("train_loss").get<double>(),
                                        e.at("val_loss").get<double>(),
                                        e.at("val_eq1_f1").get<double>()});
  }
  return history;
}

std::vector<Example> encode_examples(std::span<const corpus::LabeledTweet> tweets,
                                     const text::Vocabulary& vocab) {
  std::vector<Example> examples;
  examples.reserve(tweets.size());
  for (const corpus::LabeledTweet& tweet : tweets) {
    examples.push_back(Example{text::encode(text::tokenize(tweet.text), vocab), tweet.label});
  }
  return examples;
}

namespace {

corpus::SentimentLabel argmax_label(const float* logits) {
  int best = 0;
  for (int c = 1; c < 3; ++c) {
    if (logits[c] > logits[best]) best = c;
  }
  return static_cast<corpus::SentimentLabel>(best);
}

// One pass over a dataset without gradient tracking: weighted loss plus the
// confusion matrix of argmax predictions.
template <typename NetT>
std::pair<double, ConfusionMatrix> inference_pass(NetT& net, std::span<const Example> examples,
                                                  const std::array<double, 3>& weights,
                                                  std::size_t batch_size) {
  double loss_sum = 0.0;
  ConfusionMatrix cm;
  for (std::size_t begin = 0; begin < examples.size(); begin += batch_size) {
    const std::size_t end = std::min(begin + batch_size, examples.size());
    nn::Graph<float> g;
    std::vector<typename nn::Graph<float>::NodeId> logit_rows;
    std::vector<int> targets;
    for (std::size_t i = begin; i < end; ++i) {
      logit_rows.push_back(net.forward_logits(g, examples[i].indices, false, nullptr));
      targets.push_back(corpus::label_index(examples[i].label));
      cm.add(examples[i].label, argmax_label(g.value(logit_rows.back()).data()));
    }
    auto loss = g.weighted_cross_entropy(g.stack_rows(logit_rows), targets, weights);
    loss_sum += static_cast<double>(g.value(loss)[0]) * static_cast<double>(end - begin);
  }
  return {loss_sum / static_cast<double>(examples.size()), cm};
}

template <typename NetT>
TrainingHistory train_net(NetT& net, models::Model& model, const TrainConfig& config,
                          std::span<const Example> train_set, std::span<const Example> val_set) {
  if (train_set.empty()) throw DataError("train: empty training set");
  if (config.batch_size == 0) throw ConfigError("train: batch_size must be positive");

  std::vector<corpus::SentimentLabel> labels;
  labels.reserve(train_set.size());
  for (const Example& e : train_set) labels.push_back(e.label);
  const corpus::ClassWeights weights =
      corpus::class_weights(corpus::distribution_from_labels(labels));

  nn::RngStream shuffle_rng(nn::derive_seed(config.seed, config.stage_id + "/shuffle"));
  nn::RngStream dropout_rng(nn::derive_seed(config.seed, config.stage_id + "/dropout"));

  std::vector<nn::Parameter<float>*> params = net.parameters();
  nn::AdamState<float> adam;

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  TrainingHistory history;
  const bool track_best =
      config.selection == SelectionRule::best_val_eq1_f1 && !val_set.empty();
  double best_score = -1.0;
  int best_epoch = 0;
  std::vector<nn::Tensor<float>> best_values;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(begin + config.batch_size, order.size());
      nn::Graph<float> g;
      std::vector<typename nn::Graph<float>::NodeId> logit_rows;
      std::vector<int> targets;
      for (std::size_t i = begin; i < end; ++i) {
        const Example& example = train_set[order[i]];
        logit_rows.push_back(net.forward_logits(g, example.indices, true, &dropout_rng));
        targets.push_back(corpus::label_index(example.label));
      }
      auto loss = g.weighted_cross_entropy(g.stack_rows(logit_rows), targets, weights.values);
      loss_sum += static_cast<double>(g.value(loss)[0]) * static_cast<double>(end - begin);
      g.backward(loss);
      nn::adam_step<float>(params, adam, static_cast<float>(config.learning_rate),
                           static_cast<float>(config.weight_decay));
    }

    EpochStats stats;
    stats.train_loss = loss_sum / static_cast<double>(train_set.size());
    if (!val_set.empty()) {
      auto [val_loss, cm] = inference_pass(net, val_set, weights.values, config.batch_size);
      stats.val_loss = val_loss;
      stats.val_eq1_f1 = metrics_from_confusion(cm).eq1_f1;
    }
    history.epochs.push_back(stats);

    if (track_best && stats.val_eq1_f1 > best_score) {
      best_score = stats.val_eq1_f1;
      best_epoch = static_cast<int>(epoch);
      best_values.clear();
      for (nn::Parameter<float>* p : params) best_values.push_back(p->value);
    }
  }

  if (track_best && best_epoch > 0) {
    for (std::size_t k = 0; k < params.size(); ++k) params[k]->value = best_values[k];
    history.selected_epoch = best_epoch;
  } else {
    history.selected_epoch = static_cast<int>(history.epochs.size());
  }

  model.meta.seed = config.seed;
  model.meta.epochs_trained = static_cast<int>(history.epochs.size());
  model.meta.selected_epoch = history.selected_epoch;
  model.meta.validation_eq1_f1 =
      history.selected_epoch > 0 ? history.epochs[history.selected_epoch - 1].val_eq1_f1 : 0.0;
  return history;
}

}  // namespace

TrainingHistory train(models::Model& model, const TrainConfig& config,
                      std::span<const Example> train_set, std::span<const Example> val_set) {
  return std::visit(
      [&](auto& net) { return train_net(net, model, config, train_set, val_set); }, model.net);
}

EvalResult evaluate(const models::Model& model, std::span<const Example> examples) {
  if (examples.empty()) throw DataError("evaluate: empty data");
  ConfusionMatrix cm;
  for (const Example& example : examples) {
    cm.add(example.label, models::predict_label(model.predict_indices(example.indices)));
  }
  return {metrics_from_confusion(cm), cm};
}

EvalResult evaluate_ensemble(const models::Model& a, const models::Model& b,
                             std::span<const Example> examples) {
  if (examples.empty()) throw DataError("evaluate: empty data");
  ConfusionMatrix cm;
  for (const Example& example : examples) {
    const auto mean = models::ensemble_predict(a.predict_indices(example.indices),
                                               b.predict_indices(example.indices));
    cm.add(example.label, models::predict_label(mean));
  }
  return {metrics_from_confusion(cm), cm};
}

namespace {

EvalResult evaluate_texts(const models::Model& model,
                          std::span<const corpus::LabeledTweet> tweets) {
  if (tweets.empty()) throw DataError("evaluate: empty data");
  ConfusionMatrix cm;
  for (const corpus::LabeledTweet& tweet : tweets) {
    cm.add(tweet.label, model.classify_text(tweet.text));
  }
  return {metrics_from_confusion(cm), cm};
}

EvalResult evaluate_texts_ensemble(const models::Model& a, const models::Model& b,
                                   std::span<const corpus::LabeledTweet> tweets) {
  if (tweets.empty()) throw DataError("evaluate: empty data");
  ConfusionMatrix cm;
  for (const corpus::LabeledTweet& tweet : tweets) {
    const auto mean = models::ensemble_predict(a.predict_text(tweet.text),
                                               b.predict_text(tweet.text));
    cm.add(tweet.label, models::predict_label(mean));
  }
  return {metrics_from_confusion(cm), cm};
}

}  // namespace

EvalResult direct_baseline(const models::Model& stage1,
                           std::span<const corpus::ThreadRecord> gold_threads) {
  if (gold_threads.empty()) throw DataError("direct_baseline: empty data");
  ConfusionMatrix cm;
  for (const corpus::ThreadRecord& thread : gold_threads) {
    if (!thread.gold_label) {
      throw DataError("direct_baseline: thread '" + thread.source_id + "' has no gold label");
    }
    cm.add(*thread.gold_label, stage1.classify_text(thread.source_text));
  }
  return {metrics_from_confusion(cm), cm};
}

void save_metrics(const Metrics& metrics, const std::filesystem::path& path) {
  json doc;
  doc["accuracy"] = metrics.accuracy;
  doc["precision"] = metrics.precision;
  doc["recall"] = metrics.recall;
  doc["f1"] = metrics.f1;
  doc["eq1_precision"] = metrics.eq1_precision;
  doc["eq1_recall"] = metrics.eq1_recall;
  doc["eq1_f1"] = metrics.eq1_f1;
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

namespace {

template <typename Fn>
auto run_stage(const std::string& stage_id, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    throw ConfigError(stage_id + ": " + e.what());
  } catch (const NumericError& e) {
    throw NumericError(stage_id + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError(stage_id + ": " + e.what());
  }
}

std::vector<std::vector<std::string>> tokenized_texts(
    std::span<const corpus::LabeledTweet> tweets) {
  std::vector<std::vector<std::string>> out;
  out.reserve(tweets.size());
  for (const corpus::LabeledTweet& tweet : tweets) out.push_back(text::tokenize(tweet.text));
  return out;
}

text::EmbeddingMatrix make_embeddings(const TwoStageConfig& config,
                                      const text::Vocabulary& vocab, std::uint64_t seed) {
  if (config.embeddings_path.empty()) {
    return text::random_embeddings(config.embed_dim, vocab, seed);
  }
  return text::load_embeddings(config.embeddings_path, config.embed_dim, vocab, seed);
}

std::string format_metric(double value) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4) << value;
  return os.str();
}

void write_metric_block(std::ostream& out, const Metrics& m) {
  out << "accuracy        " << format_metric(m.accuracy) << '\n';
  for (corpus::SentimentLabel label : corpus::kAllLabels) {
    const int c = corpus::label_index(label);
    out << std::left << std::setw(16) << corpus::label_name(label) << "precision "
        << format_metric(m.precision[c]) << "  recall " << format_metric(m.recall[c])
        << "  f1 " << format_metric(m.f1[c]) << '\n';
  }
  out << "eq1_precision   " << format_metric(m.eq1_precision) << '\n';
  out << "eq1_recall      " << format_metric(m.eq1_recall) << '\n';
  out << "eq1_f1          " << format_metric(m.eq1_f1) << '\n';
}

json two_stage_config_json(const TwoStageConfig& c) {
  json doc;
  doc["labeled_corpus_path"] = c.labeled_corpus_path.string();
  doc["threads_path"] = c.threads_path.string();
  doc["gold_threads_path"] = c.gold_threads_path.string();
  doc["out_dir"] = c.out_dir.string();
  doc["embeddings_path"] = c.embeddings_path.string();
  doc["seed"] = c.seed;
  doc["embed_dim"] = c.embed_dim;
  doc["stage1_vocab_size"] = c.stage1_vocab_size;
  doc["stage2_vocab_size"] = c.stage2_vocab_size;
  doc["stage1_hidden_size"] = c.stage1_hidden_size;
  doc["stage2_hidden_size"] = c.stage2_hidden_size;
  doc["num_stacked_bilstm"] = c.num_stacked_bilstm;
  doc["cnn_maps_per_width"] = c.cnn_maps_per_width;
  doc["dropout_p"] = c.dropout_p;
  doc["val_fraction"] = c.val_fraction;
  doc["stage1_learning_rate"] = c.stage1_train.learning_rate;
  doc["stage1_weight_decay"] = c.stage1_train.weight_decay;
  doc["stage2_learning_rate"] = c.stage2_train.learning_rate;
  doc["stage2_weight_decay"] = c.stage2_train.weight_decay;
  doc["batch_size"] = c.stage1_train.batch_size;
  doc["max_epochs"] = c.stage1_train.max_epochs;
  doc["min_replies"] = c.min_replies;
  doc["min_tokens"] = c.min_tokens;
  doc["neutral_fraction"] = c.thresholds.neutral_fraction;
  doc["pos_over_neg"] = c.thresholds.pos_over_neg;
  doc["neg_over_pos"] = c.thresholds.neg_over_pos;
  return doc;
}

}  // namespace

TwoStageReport two_stage_run(const TwoStageConfig& config) {
  namespace fs = std::filesystem;
  fs::create_directories(config.out_dir);
  {
    std::ofstream echo(config.out_dir / "config_echo.json");
    if (!echo) throw DataError("cannot write config echo under " + config.out_dir.string());
    echo << two_stage_config_json(config).dump(2) << '\n';
  }

  TwoStageReport report;

  // Stage 1: message-level sentiment classifier on the labeled corpus.
  models::Model stage1 = run_stage("stage1", [&] {
    auto tweets = corpus::load_labeled_corpus(config.labeled_corpus_path);
    auto [train_tweets, val_tweets] =
        corpus::split(tweets, config.val_fraction, nn::derive_seed(config.seed, "stage1/split"));

    text::Vocabulary vocab =
        text::build_vocabulary(tokenized_texts(train_tweets), config.stage1_vocab_size);
    const text::EmbeddingMatrix embeddings =
        make_embeddings(config, vocab, nn::derive_seed(config.seed, "stage1/embeddings"));

    models::BiLstmConfig net_config;
    net_config.embed_dim = config.embed_dim;
    net_config.hidden_size = config.stage1_hidden_size;
    net_config.num_stacked_bilstm = config.num_stacked_bilstm;
    net_config.dropout_p = config.dropout_p;
    models::Model model = models::make_bilstm_model(
        net_config, std::move(vocab), embeddings, nn::derive_seed(config.seed, "stage1/init"));

    TrainConfig train_config = config.stage1_train;
    train_config.stage_id = "stage1";
    train_config.seed = nn::derive_seed(config.seed, "stage1/train");

    const auto train_examples = encode_examples(train_tweets, model.vocab);
    const auto val_examples = encode_examples(val_tweets, model.vocab);
    TrainingHistory history = train(model, train_config, train_examples, val_examples);

    models::save_checkpoint(model, config.out_dir / "stage1.ckpt");
    save_history(history, config.out_dir / "stage1_history.json");

    const EvalResult eval =
        val_examples.empty() ? evaluate(model, train_examples) : evaluate(model, val_examples);
    report.stage1_validation = eval.metrics;
    save_metrics(eval.metrics, config.out_dir / "metrics_stage1.json");
    render_confusion(eval.confusion, config.out_dir / "confusion_stage1");
    return model;
  });

  // Auto-labeling: classify replies, aggregate one label per source tweet.
  const std::vector<corpus::LabeledTweet> autolabeled = run_stage("autolabel", [&] {
    auto threads = corpus::load_threads(config.threads_path);
    threads = corpus::filter_threads(std::move(threads), config.min_replies, config.min_tokens,
                                     [](const std::string& s) { return text::tokenize(s); });
    auto labeled = agg::autolabel_threads(
        threads, [&](const std::string& reply) { return stage1.classify_text(reply); },
        config.thresholds);
    corpus::save_labeled_corpus(labeled, config.out_dir / "autolabeled.jsonl");

    report.autolabel_distribution = corpus::class_distribution(labeled);
    json dist;
    dist["counts"] = report.autolabel_distribution.counts;
    dist["fractions"] = report.autolabel_distribution.fractions;
    std::ofstream out(config.out_dir / "autolabel_distribution.json");
    out << dist.dump(2) << '\n';
    return labeled;
  });

  // Stage 2: reply-sentiment prediction from source text, trained on the
  // automatic labels only.
  auto [stage2_bilstm, stage2_cnn] = run_stage("stage2", [&] {
    auto [train_tweets, val_tweets] = corpus::split(
        autolabeled, config.val_fraction, nn::derive_seed(config.seed, "stage2/split"));

    text::Vocabulary vocab =
        text::build_vocabulary(tokenized_texts(train_tweets), config.stage2_vocab_size);

    models::BiLstmConfig bilstm_config;
    bilstm_config.embed_dim = config.embed_dim;
    bilstm_config.hidden_size = config.stage2_hidden_size;
    bilstm_config.num_stacked_bilstm = config.num_stacked_bilstm;
    bilstm_config.dropout_p = config.dropout_p;
    models::Model bilstm = models::make_bilstm_model(
        bilstm_config, vocab,
        make_embeddings(config, vocab, nn::derive_seed(config.seed, "stage2/embeddings")),
        nn::derive_seed(config.seed, "stage2/bilstm/init"));

    models::CnnConfig cnn_config;
    cnn_config.embed_dim = config.embed_dim;
    cnn_config.maps_per_width = config.cnn_maps_per_width;
    cnn_config.dropout_p = config.dropout_p;
    models::Model cnn = models::make_cnn_model(
        cnn_config, vocab,
        make_embeddings(config, vocab, nn::derive_seed(config.seed, "stage2/embeddings")),
        nn::derive_seed(config.seed, "stage2/cnn/init"));

    const auto train_bilstm_examples = encode_examples(train_tweets, bilstm.vocab);
    const auto val_bilstm_examples = encode_examples(val_tweets, bilstm.vocab);

    TrainConfig bilstm_train = config.stage2_train;
    bilstm_train.stage_id = "stage2/bilstm";
    bilstm_train.seed = nn::derive_seed(config.seed, "stage2/bilstm/train");
    TrainingHistory bilstm_history =
        train(bilstm, bilstm_train, train_bilstm_examples, val_bilstm_examples);
    models::save_checkpoint(bilstm, config.out_dir / "stage2_bilstm.ckpt");
    save_history(bilstm_history, config.out_dir / "stage2_bilstm_history.json");

    TrainConfig cnn_train = config.stage2_train;
    cnn_train.stage_id = "stage2/cnn";
    cnn_train.seed = nn::derive_seed(config.seed, "stage2/cnn/train");
    TrainingHistory cnn_history =
        train(cnn, cnn_train, train_bilstm_examples, val_bilstm_examples);
    models::save_checkpoint(cnn, config.out_dir / "stage2_cnn.ckpt");
    save_history(cnn_history, config.out_dir / "stage2_cnn_history.json");

    return std::pair(std::move(bilstm), std::move(cnn));
  });

  // Evaluation on the gold test threads.
  run_stage("evaluate", [&] {
    auto gold_threads = corpus::load_threads(config.gold_threads_path);
    std::vector<corpus::LabeledTweet> gold;
    gold.reserve(gold_threads.size());
    for (const corpus::ThreadRecord& thread : gold_threads) {
      if (!thread.gold_label) {
        throw DataError("thread '" + thread.source_id + "' has no gold label");
      }
      gold.push_back(
          corpus::LabeledTweet{thread.source_id, thread.source_text, *thread.gold_label});
    }

    const EvalResult proposed = evaluate_texts(stage2_bilstm, gold);
    const EvalResult ensemble = evaluate_texts_ensemble(stage2_bilstm, stage2_cnn, gold);
    const EvalResult direct = direct_baseline(stage1, gold_threads);

    report.proposed = proposed.metrics;
    report.ensemble = ensemble.metrics;
    report.direct = direct.metrics;

    save_metrics(proposed.metrics, config.out_dir / "metrics_proposed.json");
    render_confusion(proposed.confusion, config.out_dir / "confusion_proposed");
    save_metrics(ensemble.metrics, config.out_dir / "metrics_ensemble.json");
    render_confusion(ensemble.confusion, config.out_dir / "confusion_ensemble");
    save_metrics(direct.metrics, config.out_dir / "metrics_direct.json");
    render_confusion(direct.confusion, config.out_dir / "confusion_direct");
    return 0;
  });

  // Consolidated report.
  report.report_path = config.out_dir / "report.txt";
  {
    std::ofstream out(report.report_path);
    if (!out) throw DataError("cannot write " + report.report_path.string());
    out << "# two-stage reply-sentiment run\n\n";
    out << "## configuration\n" << two_stage_config_json(config).dump(2) << "\n\n";
    out << "## stage-1 metrics (validation split)\n";
    write_metric_block(out, report.stage1_validation);
    out << "\n## auto-label distribution\n";
    for (corpus::SentimentLabel label : corpus::kAllLabels) {
      const int c = corpus::label_index(label);
      out << std::left << std::setw(16) << corpus::label_name(label)
          << report.autolabel_distribution.counts[c] << "  ("
          << format_metric(report.autolabel_distribution.fractions[c]) << ")\n";
    }
    out << "\n## stage-2 metrics (proposed, gold test)\n";
    write_metric_block(out, report.proposed);
    out << "\n## ensemble metrics (gold test)\n";
    write_metric_block(out, report.ensemble);
    out << "\n## direct-baseline metrics (gold test)\n";
    write_metric_block(out, report.direct);
  }
  return report;
}

}  // namespace replysent::pipeline
