#include "replysent/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>

#include <json.hpp>

namespace replysent::cli {

using nlohmann::json;

namespace {

struct FieldBinding {
  std::function<void(RunConfig&, const json&)> set;
  std::function<json(const RunConfig&)> get;
};

template <typename T>
T value_as(const json& v, const std::string& key) {
  try {
    if constexpr (std::is_same_v<T, std::string>) {
      if (v.is_string()) return v.get<std::string>();
      throw ConfigError("config key '" + key + "' must be a string");
    } else {
      if (v.is_string()) {
        // Overrides arrive as strings; parse through JSON for numbers.
        json parsed = json::parse(v.get<std::string>(), nullptr, false);
        if (parsed.is_discarded()) {
          throw ConfigError("config key '" + key + "': cannot parse '" +
                            v.get<std::string>() + "'");
        }
        return parsed.get<T>();
      }
      return v.get<T>();
    }
  } catch (const json::exception&) {
    throw ConfigError("config key '" + key + "': invalid value");
  }
}

template <typename T>
FieldBinding field_of(T RunConfig::* member) {
  return FieldBinding{
      [member](RunConfig& c, const json& v) { c.*member = value_as<T>(v, "?"); },
      [member](const RunConfig& c) { return json(c.*member); }};
}

const std::vector<std::pair<std::string, FieldBinding>>& field_table() {
  static const std::vector<std::pair<std::string, FieldBinding>> table = {
      {"seed", field_of(&RunConfig::seed)},
      {"out_dir", field_of(&RunConfig::out_dir)},
      {"labeled_corpus_path", field_of(&RunConfig::labeled_corpus_path)},
      {"threads_path", field_of(&RunConfig::threads_path)},
      {"gold_threads_path", field_of(&RunConfig::gold_threads_path)},
      {"embeddings_path", field_of(&RunConfig::embeddings_path)},
      {"embed_dim", field_of(&RunConfig::embed_dim)},
      {"stage1_vocab_size", field_of(&RunConfig::stage1_vocab_size)},
      {"stage2_vocab_size", field_of(&RunConfig::stage2_vocab_size)},
      {"stage1_hidden_size", field_of(&RunConfig::stage1_hidden_size)},
      {"stage2_hidden_size", field_of(&RunConfig::stage2_hidden_size)},
      {"num_stacked_bilstm", field_of(&RunConfig::num_stacked_bilstm)},
      {"cnn_maps_per_width", field_of(&RunConfig::cnn_maps_per_width)},
      {"dropout", field_of(&RunConfig::dropout)},
      {"stage1_learning_rate", field_of(&RunConfig::stage1_learning_rate)},
      {"stage1_weight_decay", field_of(&RunConfig::stage1_weight_decay)},
      {"stage2_learning_rate", field_of(&RunConfig::stage2_learning_rate)},
      {"stage2_weight_decay", field_of(&RunConfig::stage2_weight_decay)},
      {"batch_size", field_of(&RunConfig::batch_size)},
      {"max_epochs", field_of(&RunConfig::max_epochs)},
      {"val_fraction", field_of(&RunConfig::val_fraction)},
      {"checkpoint_selection", field_of(&RunConfig::checkpoint_selection)},
      {"min_replies", field_of(&RunConfig::min_replies)},
      {"min_tokens", field_of(&RunConfig::min_tokens)},
      {"neutral_fraction", field_of(&RunConfig::neutral_fraction)},
      {"pos_over_neg", field_of(&RunConfig::pos_over_neg)},
      {"neg_over_pos", field_of(&RunConfig::neg_over_pos)},
  };
  return table;
}

const FieldBinding* find_field(const std::string& key) {
  for (const auto& [name, binding] : field_table()) {
    if (name == key) return &binding;
  }
  return nullptr;
}

}  // namespace

RunConfig RunConfig::load(const std::optional<std::filesystem::path>& file,
                          const std::vector<std::string>& overrides) {
  RunConfig config;
  if (file) {
    std::ifstream in(*file);
    if (!in) throw ConfigError("cannot open config file " + file->string());
    json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) {
      throw ConfigError("config file " + file->string() + " is not a JSON object");
    }
    for (const auto& [key, value] : doc.items()) {
      const FieldBinding* binding = find_field(key);
      if (binding == nullptr) {
        throw ConfigError("config file " + file->string() + ": unknown key '" + key + "'");
      }
      binding->set(config, value);
    }
  }
  for (const std::string& entry : overrides) {
    const std::size_t eq = entry.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("override '" + entry + "' is not of the form key=value");
    }
    config.apply_override(entry.substr(0, eq), entry.substr(eq + 1));
  }

  if (config.val_fraction < 0.0 || config.val_fraction >= 1.0) {
    throw ConfigError("val_fraction must lie in [0, 1)");
  }
  if (!pipeline::parse_selection_rule(config.checkpoint_selection)) {
    throw ConfigError("checkpoint_selection must be 'best_val_eq1_f1' or 'last_epoch'");
  }
  return config;
}

void RunConfig::apply_override(const std::string& key, const std::string& value) {
  const FieldBinding* binding = find_field(key);
  if (binding == nullptr) throw ConfigError("unknown config key '" + key + "'");
  binding->set(*this, json(value));
}

std::string RunConfig::to_json_string() const {
  json doc;
  for (const auto& [name, binding] : field_table()) doc[name] = binding.get(*this);
  return doc.dump(2);
}

void RunConfig::echo(const std::filesystem::path& out_dir) const {
  std::filesystem::create_directories(out_dir);
  std::ofstream out(out_dir / "config_resolved.json");
  if (!out) throw DataError("cannot write config echo under " + out_dir.string());
  out << to_json_string() << '\n';
}

pipeline::TrainConfig RunConfig::stage1_train_config() const {
  pipeline::TrainConfig tc;
  tc.stage_id = "stage1";
  tc.learning_rate = stage1_learning_rate;
  tc.weight_decay = stage1_weight_decay;
  tc.batch_size = batch_size;
  tc.max_epochs = max_epochs;
  tc.seed = nn::derive_seed(seed, "stage1/train");
  tc.selection = *pipeline::parse_selection_rule(checkpoint_selection);
  return tc;
}

pipeline::TrainConfig RunConfig::stage2_train_config() const {
  pipeline::TrainConfig tc;
  tc.stage_id = "stage2";
  tc.learning_rate = stage2_learning_rate;
  tc.weight_decay = stage2_weight_decay;
  tc.batch_size = batch_size;
  tc.max_epochs = max_epochs;
  tc.seed = nn::derive_seed(seed, "stage2/train");
  tc.selection = *pipeline::parse_selection_rule(checkpoint_selection);
  return tc;
}

agg::AggregationThresholds RunConfig::thresholds() const {
  agg::AggregationThresholds th;
  th.neutral_fraction = neutral_fraction;
  th.pos_over_neg = pos_over_neg;
  th.neg_over_pos = neg_over_pos;
  th.validate();
  return th;
}

pipeline::TwoStageConfig RunConfig::two_stage() const {
  pipeline::TwoStageConfig ts;
  ts.labeled_corpus_path = labeled_corpus_path;
  ts.threads_path = threads_path;
  ts.gold_threads_path = gold_threads_path;
  ts.out_dir = out_dir;
  ts.embeddings_path = embeddings_path;
  ts.seed = seed;
  ts.embed_dim = embed_dim;
  ts.stage1_vocab_size = stage1_vocab_size;
  ts.stage2_vocab_size = stage2_vocab_size;
  ts.stage1_hidden_size = stage1_hidden_size;
  ts.stage2_hidden_size = stage2_hidden_size;
  ts.num_stacked_bilstm = num_stacked_bilstm;
  ts.cnn_maps_per_width = cnn_maps_per_width;
  ts.dropout_p = dropout;
  ts.val_fraction = val_fraction;
  ts.stage1_train = stage1_train_config();
  ts.stage2_train = stage2_train_config();
  ts.min_replies = min_replies;
  ts.min_tokens = min_tokens;
  ts.thresholds = thresholds();
  return ts;
}

}  // namespace replysent::cli
