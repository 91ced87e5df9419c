#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "replysent/config.hpp"
#include "replysent/pipeline.hpp"

namespace fs = std::filesystem;
using namespace replysent;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

struct GlobalArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::vector<std::string> overrides;
};

cli::RunConfig resolve_config(const GlobalArgs& args) {
  std::optional<fs::path> file;
  if (!args.config_path.empty()) {
    file = args.config_path;
  } else if (const char* env = std::getenv("REPLYSENT_CONFIG"); env != nullptr && *env != '\0') {
    file = fs::path(env);
  }
  cli::RunConfig config = cli::RunConfig::load(file, args.overrides);
  if (args.seed) config.seed = *args.seed;
  if (!args.out_dir.empty()) config.out_dir = args.out_dir;
  return config;
}

std::string require_path(const std::string& flag_value, const std::string& config_value,
                         const std::string& field) {
  if (!flag_value.empty()) return flag_value;
  if (!config_value.empty()) return config_value;
  throw ConfigError("missing data path '" + field + "' (set it in the config file or pass the "
                    "command flag)");
}

text::EmbeddingMatrix resolve_embeddings(const cli::RunConfig& config,
                                         const text::Vocabulary& vocab,
                                         std::uint64_t embed_seed) {
  if (config.embeddings_path.empty()) {
    return text::random_embeddings(config.embed_dim, vocab, embed_seed);
  }
  return text::load_embeddings(config.embeddings_path, config.embed_dim, vocab, embed_seed);
}

std::vector<std::vector<std::string>> tokenized(std::span<const corpus::LabeledTweet> tweets) {
  std::vector<std::vector<std::string>> out;
  out.reserve(tweets.size());
  for (const auto& tweet : tweets) out.push_back(text::tokenize(tweet.text));
  return out;
}

void write_eval_outputs(const fs::path& out_dir, const std::string& system,
                        const pipeline::EvalResult& result) {
  pipeline::save_metrics(result.metrics, out_dir / ("metrics_" + system + ".json"));
  pipeline::render_confusion(result.confusion, out_dir / ("confusion_" + system));
}

// Trains one architecture on an already-loaded corpus and persists
// checkpoint, history, and validation metrics.
void train_and_persist(models::Model model, const pipeline::TrainConfig& train_config,
                       std::span<const corpus::LabeledTweet> train_tweets,
                       std::span<const corpus::LabeledTweet> val_tweets,
                       const fs::path& out_dir, const std::string& tag) {
  const auto train_examples = pipeline::encode_examples(train_tweets, model.vocab);
  const auto val_examples = pipeline::encode_examples(val_tweets, model.vocab);
  const pipeline::TrainingHistory history =
      pipeline::train(model, train_config, train_examples, val_examples);
  models::save_checkpoint(model, out_dir / (tag + ".ckpt"));
  pipeline::save_history(history, out_dir / (tag + "_history.json"));
  const pipeline::EvalResult eval = val_examples.empty()
                                        ? pipeline::evaluate(model, train_examples)
                                        : pipeline::evaluate(model, val_examples);
  write_eval_outputs(out_dir, tag, eval);
  std::cout << tag << ": trained " << history.epochs.size() << " epoch(s), selected epoch "
            << history.selected_epoch << ", val eq1_f1 "
            << std::fixed << std::setprecision(4) << model.meta.validation_eq1_f1 << "\n";
}

int cmd_train_base(const cli::RunConfig& config, const std::string& corpus_flag) {
  const std::string corpus_path =
      require_path(corpus_flag, config.labeled_corpus_path, "labeled_corpus_path");
  config.echo(config.out_dir);

  auto tweets = corpus::load_labeled_corpus(corpus_path);
  auto [train_tweets, val_tweets] =
      corpus::split(tweets, config.val_fraction, nn::derive_seed(config.seed, "stage1/split"));

  text::Vocabulary vocab =
      text::build_vocabulary(tokenized(train_tweets), config.stage1_vocab_size);
  const auto embeddings =
      resolve_embeddings(config, vocab, nn::derive_seed(config.seed, "stage1/embeddings"));

  models::BiLstmConfig net_config;
  net_config.embed_dim = config.embed_dim;
  net_config.hidden_size = config.stage1_hidden_size;
  net_config.num_stacked_bilstm = config.num_stacked_bilstm;
  net_config.dropout_p = config.dropout;
  models::Model model = models::make_bilstm_model(net_config, std::move(vocab), embeddings,
                                                  nn::derive_seed(config.seed, "stage1/init"));

  pipeline::TrainConfig tc = config.stage1_train_config();
  train_and_persist(std::move(model), tc, train_tweets, val_tweets, config.out_dir, "stage1");
  return kExitOk;
}

int cmd_autolabel(const cli::RunConfig& config, const std::string& model_flag,
                  const std::string& threads_flag) {
  config.echo(config.out_dir);
  const fs::path model_path =
      model_flag.empty() ? fs::path(config.out_dir) / "stage1.ckpt" : fs::path(model_flag);
  const std::string threads_path =
      require_path(threads_flag, config.threads_path, "threads_path");

  const models::Model model = models::load_checkpoint(model_path);
  auto threads = corpus::load_threads(threads_path);
  const std::size_t loaded = threads.size();
  threads = corpus::filter_threads(std::move(threads), config.min_replies, config.min_tokens,
                                   [](const std::string& s) { return text::tokenize(s); });

  const auto labeled = agg::autolabel_threads(
      threads, [&](const std::string& reply) { return model.classify_text(reply); },
      config.thresholds());

  const fs::path out_dir(config.out_dir);
  corpus::save_labeled_corpus(labeled, out_dir / "autolabeled.jsonl");
  const corpus::ClassDistribution dist = corpus::class_distribution(labeled);
  {
    nlohmann::json doc;
    doc["counts"] = dist.counts;
    doc["fractions"] = dist.fractions;
    std::ofstream out(out_dir / "autolabel_distribution.json");
    out << doc.dump(2) << '\n';
  }
  std::cout << "autolabel: kept " << labeled.size() << " thread(s), excluded "
            << (loaded - labeled.size()) << " below thresholds\n";
  std::cout << "autolabel distribution: negative " << dist.counts[0] << ", neutral "
            << dist.counts[1] << ", positive " << dist.counts[2] << "\n";
  return kExitOk;
}

int cmd_train_reply(const cli::RunConfig& config, const std::string& corpus_flag,
                    const std::string& arch) {
  config.echo(config.out_dir);
  const fs::path corpus_path = corpus_flag.empty()
                                   ? fs::path(config.out_dir) / "autolabeled.jsonl"
                                   : fs::path(corpus_flag);

  auto tweets = corpus::load_labeled_corpus(corpus_path);
  auto [train_tweets, val_tweets] =
      corpus::split(tweets, config.val_fraction, nn::derive_seed(config.seed, "stage2/split"));

  text::Vocabulary vocab =
      text::build_vocabulary(tokenized(train_tweets), config.stage2_vocab_size);

  if (arch == "bilstm" || arch == "both") {
    models::BiLstmConfig net_config;
    net_config.embed_dim = config.embed_dim;
    net_config.hidden_size = config.stage2_hidden_size;
    net_config.num_stacked_bilstm = config.num_stacked_bilstm;
    net_config.dropout_p = config.dropout;
    models::Model model = models::make_bilstm_model(
        net_config, vocab,
        resolve_embeddings(config, vocab, nn::derive_seed(config.seed, "stage2/embeddings")),
        nn::derive_seed(config.seed, "stage2/bilstm/init"));
    pipeline::TrainConfig tc = config.stage2_train_config();
    tc.stage_id = "stage2/bilstm";
    tc.seed = nn::derive_seed(config.seed, "stage2/bilstm/train");
    train_and_persist(std::move(model), tc, train_tweets, val_tweets, config.out_dir,
                      "stage2_bilstm");
  }
  if (arch == "cnn" || arch == "both") {
    models::CnnConfig net_config;
    net_config.embed_dim = config.embed_dim;
    net_config.maps_per_width = config.cnn_maps_per_width;
    net_config.dropout_p = config.dropout;
    models::Model model = models::make_cnn_model(
        net_config, vocab,
        resolve_embeddings(config, vocab, nn::derive_seed(config.seed, "stage2/embeddings")),
        nn::derive_seed(config.seed, "stage2/cnn/init"));
    pipeline::TrainConfig tc = config.stage2_train_config();
    tc.stage_id = "stage2/cnn";
    tc.seed = nn::derive_seed(config.seed, "stage2/cnn/train");
    train_and_persist(std::move(model), tc, train_tweets, val_tweets, config.out_dir,
                      "stage2_cnn");
  }
  return kExitOk;
}

int cmd_evaluate(const cli::RunConfig& config, const std::vector<std::string>& model_flags,
                 const std::string& threads_flag, const std::string& corpus_flag, bool direct) {
  config.echo(config.out_dir);
  if (model_flags.empty() || model_flags.size() > 2) {
    throw ConfigError("evaluate needs one checkpoint (--model) or two for an ensemble");
  }
  if (direct && threads_flag.empty() && config.gold_threads_path.empty()) {
    throw ConfigError("--direct evaluates source tweets against gold threads; pass --threads");
  }

  std::vector<corpus::LabeledTweet> gold;
  std::vector<corpus::ThreadRecord> gold_threads;
  if (direct || !threads_flag.empty() || corpus_flag.empty()) {
    const std::string path =
        require_path(threads_flag, config.gold_threads_path, "gold_threads_path");
    gold_threads = corpus::load_threads(path);
    for (const auto& thread : gold_threads) {
      if (!thread.gold_label) {
        throw DataError("thread '" + thread.source_id + "' has no gold label");
      }
      gold.push_back(
          corpus::LabeledTweet{thread.source_id, thread.source_text, *thread.gold_label});
    }
  } else {
    gold = corpus::load_labeled_corpus(corpus_flag);
  }
  if (gold.empty()) throw DataError("evaluation set is empty");

  const models::Model first = models::load_checkpoint(model_flags[0]);
  const fs::path out_dir(config.out_dir);
  std::ofstream report(out_dir / "report.txt");
  if (!report) throw DataError("cannot write report under " + out_dir.string());

  auto emit = [&](const std::string& system, const pipeline::EvalResult& result) {
    write_eval_outputs(out_dir, system, result);
    report << "## " << system << " metrics\n";
    report << "accuracy " << std::fixed << std::setprecision(4) << result.metrics.accuracy
           << "  eq1_f1 " << result.metrics.eq1_f1 << "  eq1_precision "
           << result.metrics.eq1_precision << "  eq1_recall " << result.metrics.eq1_recall
           << "\n\n";
    std::cout << system << ": accuracy " << std::fixed << std::setprecision(4)
              << result.metrics.accuracy << ", eq1_f1 " << result.metrics.eq1_f1 << "\n";
  };

  if (direct) {
    emit("direct", pipeline::direct_baseline(first, gold_threads));
    return kExitOk;
  }
  if (model_flags.size() == 2) {
    const models::Model second = models::load_checkpoint(model_flags[1]);
    pipeline::ConfusionMatrix cm;
    for (const auto& tweet : gold) {
      const auto mean = models::ensemble_predict(first.predict_text(tweet.text),
                                                 second.predict_text(tweet.text));
      cm.add(tweet.label, models::predict_label(mean));
    }
    emit("ensemble", pipeline::EvalResult{pipeline::metrics_from_confusion(cm), cm});
    return kExitOk;
  }
  {
    pipeline::ConfusionMatrix cm;
    for (const auto& tweet : gold) {
      cm.add(tweet.label, first.classify_text(tweet.text));
    }
    emit("model", pipeline::EvalResult{pipeline::metrics_from_confusion(cm), cm});
  }
  return kExitOk;
}

int cmd_predict(const cli::RunConfig& config, const std::string& model_flag,
                const std::string& text_arg, const std::string& input_flag) {
  config.echo(config.out_dir);
  const fs::path model_path =
      model_flag.empty() ? fs::path(config.out_dir) / "stage1.ckpt" : fs::path(model_flag);
  const models::Model model = models::load_checkpoint(model_path);

  auto emit_line = [&](const std::string& line) {
    if (text::tokenize(line).empty()) return;  // nothing to classify
    const models::PredictedDistribution dist = model.predict_text(line);
    std::cout << corpus::label_name(models::predict_label(dist)) << ' ' << std::fixed
              << std::setprecision(6) << dist.probabilities[0] << ' ' << dist.probabilities[1]
              << ' ' << dist.probabilities[2] << "\n";
  };

  if (!text_arg.empty()) {
    emit_line(text_arg);
    return kExitOk;
  }
  if (input_flag.empty()) {
    throw ConfigError("predict needs --text or --input");
  }
  std::ifstream in(input_flag);
  if (!in) throw DataError("cannot open input file " + input_flag);
  std::string line;
  while (std::getline(in, line)) emit_line(line);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-stage reply-sentiment pipeline"};
  app.require_subcommand(1);

  GlobalArgs globals;
  app.add_option("--config", globals.config_path,
                 "JSON config file (default: $REPLYSENT_CONFIG)");
  app.add_option("--seed", globals.seed, "root random seed (overrides config)");
  app.add_option("--out", globals.out_dir, "output directory (overrides config)");
  app.add_option("--set", globals.overrides, "config override key=value (repeatable)");

  auto* train_base = app.add_subcommand("train-base", "train the stage-1 sentiment classifier");
  std::string tb_corpus;
  train_base->add_option("--corpus", tb_corpus, "labeled tweet corpus (jsonl)");

  auto* autolabel = app.add_subcommand("autolabel", "aggregate reply predictions into labels");
  std::string al_model, al_threads;
  autolabel->add_option("--model", al_model, "stage-1 checkpoint (default <out>/stage1.ckpt)");
  autolabel->add_option("--threads", al_threads, "thread file (jsonl)");

  auto* train_reply = app.add_subcommand("train-reply", "train stage-2 model(s) on auto-labels");
  std::string tr_corpus, tr_arch = "both";
  train_reply->add_option("--corpus", tr_corpus,
                          "auto-labeled corpus (default <out>/autolabeled.jsonl)");
  train_reply->add_option("--arch", tr_arch, "bilstm, cnn, or both")
      ->check(CLI::IsMember({"bilstm", "cnn", "both"}));

  auto* evaluate = app.add_subcommand("evaluate", "score checkpoint(s) against gold data");
  std::vector<std::string> ev_models;
  std::string ev_threads, ev_corpus;
  bool ev_direct = false;
  evaluate->add_option("--model", ev_models, "checkpoint path (twice for an ensemble)");
  evaluate->add_option("--threads", ev_threads, "gold thread file");
  evaluate->add_option("--corpus", ev_corpus, "labeled tweet file");
  evaluate->add_flag("--direct", ev_direct, "direct baseline: classify the source tweet");

  auto* predict = app.add_subcommand("predict", "print label and probabilities per input line");
  std::string pr_model, pr_text, pr_input;
  predict->add_option("--model", pr_model, "checkpoint path (default <out>/stage1.ckpt)");
  predict->add_option("--text", pr_text, "single text to classify");
  predict->add_option("--input", pr_input, "file with one text per line");

  try {
    app.parse(argc, argv);
    const cli::RunConfig config = resolve_config(globals);
    if (train_base->parsed()) return cmd_train_base(config, tb_corpus);
    if (autolabel->parsed()) return cmd_autolabel(config, al_model, al_threads);
    if (train_reply->parsed()) return cmd_train_reply(config, tr_corpus, tr_arch);
    if (evaluate->parsed()) {
      return cmd_evaluate(config, ev_models, ev_threads, ev_corpus, ev_direct);
    }
    if (predict->parsed()) return cmd_predict(config, pr_model, pr_text, pr_input);
    return kExitUsage;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitNumeric;
  }
}
