#include "replysent/models.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace replysent::models {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

void BiLstmConfig::validate() const {
  if (embed_dim == 0 || hidden_size == 0 || num_stacked_bilstm == 0 || vocab_size < 2 ||
      num_classes != 3) {
    throw ConfigError("BiLstmConfig: all sizes must be positive (vocab >= 2, 3 classes)");
  }
  if (dropout_p < 0.0 || dropout_p >= 1.0) {
    throw ConfigError("BiLstmConfig: dropout_p must lie in [0, 1)");
  }
}

std::size_t CnnConfig::max_filter_width() const {
  std::size_t w = 0;
  for (std::size_t width : filter_widths) w = std::max(w, width);
  return w;
}

void CnnConfig::validate() const {
  if (embed_dim == 0 || filter_widths.empty() || maps_per_width == 0 || vocab_size < 2 ||
      num_classes != 3) {
    throw ConfigError("CnnConfig: all sizes must be positive (vocab >= 2, 3 classes)");
  }
  for (std::size_t width : filter_widths) {
    if (width == 0) throw ConfigError("CnnConfig: zero filter width");
  }
  if (dropout_p < 0.0 || dropout_p >= 1.0) {
    throw ConfigError("CnnConfig: dropout_p must lie in [0, 1)");
  }
}

corpus::SentimentLabel predict_label(const PredictedDistribution& p) {
  int best = 0;
  for (int c = 1; c < 3; ++c) {
    if (p.probabilities[c] > p.probabilities[best]) best = c;
  }
  return static_cast<corpus::SentimentLabel>(best);
}

PredictedDistribution ensemble_predict(const PredictedDistribution& p,
                                       const PredictedDistribution& q) {
  PredictedDistribution out;
  for (int c = 0; c < 3; ++c) {
    out.probabilities[c] = 0.5 * (p.probabilities[c] + q.probabilities[c]);
  }
  return out;
}

namespace detail {

std::span<const int> strip_trailing_pads(std::span<const int> indices) {
  std::size_t n = indices.size();
  while (n > 0 && indices[n - 1] == text::Vocabulary::kPadIndex) --n;
  return indices.first(n);
}

}  // namespace detail

std::vector<nn::Parameter<float>*> Model::parameters() {
  return std::visit([](auto& net) { return net.parameters(); }, net);
}

PredictedDistribution Model::predict_indices(std::span<const int> indices) const {
  return std::visit([&](const auto& net) { return net.predict(indices); }, net);
}

PredictedDistribution Model::predict_text(const std::string& raw_text) const {
  const std::vector<int> indices = text::encode(text::tokenize(raw_text), vocab);
  return predict_indices(indices);
}

corpus::SentimentLabel Model::classify_text(const std::string& raw_text) const {
  return predict_label(predict_text(raw_text));
}

Model make_bilstm_model(const BiLstmConfig& config, text::Vocabulary vocab,
                        const text::EmbeddingMatrix& embeddings, std::uint64_t seed) {
  BiLstmConfig cfg = config;
  cfg.vocab_size = static_cast<std::size_t>(vocab.size());
  Model model{std::move(vocab), BiLstmNet<float>::init(cfg, embeddings, seed), {}};
  model.meta.seed = seed;
  return model;
}

Model make_cnn_model(const CnnConfig& config, text::Vocabulary vocab,
                     const text::EmbeddingMatrix& embeddings, std::uint64_t seed) {
  CnnConfig cfg = config;
  cfg.vocab_size = static_cast<std::size_t>(vocab.size());
  Model model{std::move(vocab), CnnNet<float>::init(cfg, embeddings, seed), {}};
  model.meta.seed = seed;
  return model;
}

// ---- checkpoint io ----

namespace {

constexpr char kMagic[4] = {'R', 'S', 'C', 'P'};

std::uint64_t fnv1a64_bytes(const char* data, std::size_t n,
                            std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 0x100000001b3ULL;
  }
  return h;
}

void append_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void append_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t read_u32(const std::string& buf, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[at + i])) << (8 * i);
  }
  return v;
}

std::uint64_t read_u64(const std::string& buf, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[at + i])) << (8 * i);
  }
  return v;
}

json config_to_json(const BiLstmConfig& c) {
  return json{{"embed_dim", c.embed_dim},
              {"hidden_size", c.hidden_size},
              {"num_stacked_bilstm", c.num_stacked_bilstm},
              {"dropout_p", c.dropout_p},
              {"num_classes", c.num_classes},
              {"vocab_size", c.vocab_size}};
}

json config_to_json(const CnnConfig& c) {
  return json{{"embed_dim", c.embed_dim},
              {"filter_widths", c.filter_widths},
              {"maps_per_width", c.maps_per_width},
              {"dropout_p", c.dropout_p},
              {"num_classes", c.num_classes},
              {"vocab_size", c.vocab_size}};
}

template <typename ConfigT>
ConfigT config_from_json(const json& j);

template <>
BiLstmConfig config_from_json<BiLstmConfig>(const json& j) {
  BiLstmConfig c;
  c.embed_dim = j.at("embed_dim").get<std::size_t>();
  c.hidden_size = j.at("hidden_size").get<std::size_t>();
  c.num_stacked_bilstm = j.at("num_stacked_bilstm").get<std::size_t>();
  c.dropout_p = j.at("dropout_p").get<double>();
  c.num_classes = j.at("num_classes").get<std::size_t>();
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  return c;
}

template <>
CnnConfig config_from_json<CnnConfig>(const json& j) {
  CnnConfig c;
  c.embed_dim = j.at("embed_dim").get<std::size_t>();
  c.filter_widths = j.at("filter_widths").get<std::vector<std::size_t>>();
  c.maps_per_width = j.at("maps_per_width").get<std::size_t>();
  c.dropout_p = j.at("dropout_p").get<double>();
  c.num_classes = j.at("num_classes").get<std::size_t>();
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  return c;
}

std::string build_header(const Model& model) {
  json header;
  header["architecture"] = std::string(model.architecture());
  header["config"] = std::visit([](const auto& net) { return config_to_json(net.config); },
                                model.net);
  header["metadata"] = json{{"seed", model.meta.seed},
                            {"epochs_trained", model.meta.epochs_trained},
                            {"selected_epoch", model.meta.selected_epoch},
                            {"validation_eq1_f1", model.meta.validation_eq1_f1}};
  json params = json::array();
  for (nn::Parameter<float>* p : const_cast<Model&>(model).parameters()) {
    params.push_back(json{{"name", p->name}, {"shape", p->value.shape()}});
  }
  header["parameters"] = std::move(params);
  header["vocabulary"] = model.vocab.tokens();
  return header.dump();
}

[[noreturn]] void fail(CheckpointErrorKind kind, const std::string& msg) {
  throw CheckpointError(kind, msg);
}

}  // namespace

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  std::string out;
  out.append(kMagic, 4);
  append_u32(out, kCheckpointVersion);
  const std::string header = build_header(model);
  append_u64(out, header.size());
  out.append(header);

  for (nn::Parameter<float>* p : const_cast<Model&>(model).parameters()) {
    const std::size_t bytes = p->value.size() * sizeof(float);
    const std::size_t at = out.size();
    out.resize(at + bytes);
    std::memcpy(out.data() + at, p->value.data(), bytes);
  }
  append_u64(out, fnv1a64_bytes(out.data(), out.size()));

  std::ofstream file(path, std::ios::binary);
  if (!file) fail(CheckpointErrorKind::io, "cannot write checkpoint " + path.string());
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) fail(CheckpointErrorKind::io, "write failed for checkpoint " + path.string());
}

namespace {

template <typename NetT, typename ConfigT>
Model assemble(const json& header, const std::string& buf, std::size_t payload_at,
               const std::filesystem::path& path) {
  const ConfigT config = config_from_json<ConfigT>(header.at("config"));

  const auto vocab_tokens = header.at("vocabulary").get<std::vector<std::string>>();
  text::Vocabulary vocab = text::Vocabulary::from_tokens(vocab_tokens);
  if (static_cast<std::size_t>(vocab.size()) != config.vocab_size) {
    fail(CheckpointErrorKind::shape_mismatch,
         path.string() + ": vocabulary size does not match config");
  }

  text::EmbeddingMatrix zeros;
  zeros.rows = config.vocab_size;
  zeros.dim = config.embed_dim;
  zeros.values.assign(zeros.rows * zeros.dim, 0.0f);

  Model model{std::move(vocab), NetT::init(config, zeros, 0), {}};
  const json& meta = header.at("metadata");
  model.meta.seed = meta.at("seed").get<std::uint64_t>();
  model.meta.epochs_trained = meta.at("epochs_trained").get<int>();
  model.meta.selected_epoch = meta.at("selected_epoch").get<int>();
  model.meta.validation_eq1_f1 = meta.at("validation_eq1_f1").get<double>();

  const json& params = header.at("parameters");
  std::vector<nn::Parameter<float>*> live = model.parameters();
  if (params.size() != live.size()) {
    fail(CheckpointErrorKind::shape_mismatch,
         path.string() + ": checkpoint stores " + std::to_string(params.size()) +
             " parameters, architecture has " + std::to_string(live.size()));
  }
  std::size_t at = payload_at;
  for (std::size_t k = 0; k < live.size(); ++k) {
    const std::string name = params[k].at("name").get<std::string>();
    const auto shape = params[k].at("shape").get<std::vector<std::size_t>>();
    if (name != live[k]->name || shape != live[k]->value.shape()) {
      fail(CheckpointErrorKind::shape_mismatch,
           path.string() + ": parameter '" + name + "' does not match architecture slot '" +
               live[k]->name + "' " + live[k]->value.shape_string());
    }
    const std::size_t bytes = live[k]->value.size() * sizeof(float);
    if (at + bytes > buf.size()) {
      fail(CheckpointErrorKind::corrupt, path.string() + ": truncated parameter data");
    }
    std::memcpy(live[k]->value.data(), buf.data() + at, bytes);
    if (!live[k]->value.all_finite()) {
      fail(CheckpointErrorKind::corrupt,
           path.string() + ": non-finite values in parameter '" + name + "'");
    }
    at += bytes;
  }
  if (at != buf.size() - 8) {
    fail(CheckpointErrorKind::corrupt, path.string() + ": unexpected trailing data");
  }
  return model;
}

}  // namespace

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) fail(CheckpointErrorKind::io, "cannot open checkpoint " + path.string());
  std::string buf((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());

  constexpr std::size_t kPrefix = 4 + 4 + 8;
  if (buf.size() < kPrefix + 8) {
    fail(CheckpointErrorKind::corrupt, path.string() + ": file too short");
  }
  if (std::memcmp(buf.data(), kMagic, 4) != 0) {
    fail(CheckpointErrorKind::corrupt, path.string() + ": bad magic");
  }
  const std::uint32_t version = read_u32(buf, 4);
  if (version != kCheckpointVersion) {
    fail(CheckpointErrorKind::version_mismatch,
         path.string() + ": checkpoint version " + std::to_string(version) + ", expected " +
             std::to_string(kCheckpointVersion));
  }
  const std::uint64_t stored_sum = read_u64(buf, buf.size() - 8);
  if (stored_sum != fnv1a64_bytes(buf.data(), buf.size() - 8)) {
    fail(CheckpointErrorKind::corrupt, path.string() + ": checksum mismatch");
  }
  const std::uint64_t header_len = read_u64(buf, 8);
  if (kPrefix + header_len + 8 > buf.size()) {
    fail(CheckpointErrorKind::corrupt, path.string() + ": header length out of range");
  }
  const json header = json::parse(buf.substr(kPrefix, header_len), nullptr, false);
  if (header.is_discarded() || !header.is_object()) {
    fail(CheckpointErrorKind::corrupt, path.string() + ": unparseable header");
  }

  const std::string arch = header.value("architecture", "");
  const std::size_t payload_at = kPrefix + header_len;
  try {
    if (arch == kArchBiLstm) {
      return assemble<BiLstmNet<float>, BiLstmConfig>(header, buf, payload_at, path);
    }
    if (arch == kArchCnn) {
      return assemble<CnnNet<float>, CnnConfig>(header, buf, payload_at, path);
    }
  } catch (const json::exception& e) {
    fail(CheckpointErrorKind::corrupt, path.string() + ": bad header field: " + e.what());
  }
  fail(CheckpointErrorKind::architecture_mismatch,
       path.string() + ": unknown architecture id '" + arch + "'");
}

Model load_checkpoint_as(const std::filesystem::path& path, std::string_view architecture) {
  Model model = load_checkpoint(path);
  if (model.architecture() != architecture) {
    fail(CheckpointErrorKind::architecture_mismatch,
         path.string() + ": checkpoint holds '" + std::string(model.architecture()) +
             "', expected '" + std::string(architecture) + "'");
  }
  return model;
}

}  // namespace replysent::models
