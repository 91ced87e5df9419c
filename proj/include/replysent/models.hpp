#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "replysent/corpus.hpp"
#include "replysent/lstm.hpp"
#include "replysent/text.hpp"

namespace replysent::models {

struct BiLstmConfig {
  std::size_t embed_dim = 200;
  std::size_t hidden_size = 256;
  std::size_t num_stacked_bilstm = 2;
  double dropout_p = 0.5;
  std::size_t num_classes = 3;
  std::size_t vocab_size = 0;

  void validate() const;
  bool operator==(const BiLstmConfig&) const = default;
};

struct CnnConfig {
  std::size_t embed_dim = 200;
  std::vector<std::size_t> filter_widths = {3, 4, 5};
  std::size_t maps_per_width = 200;
  double dropout_p = 0.5;
  std::size_t num_classes = 3;
  std::size_t vocab_size = 0;

  std::size_t feature_size() const { return filter_widths.size() * maps_per_width; }
  std::size_t max_filter_width() const;
  void validate() const;
  bool operator==(const CnnConfig&) const = default;
};

struct PredictedDistribution {
  std::array<double, 3> probabilities{};
};

// Argmax with exact ties broken by lowest class index.
corpus::SentimentLabel predict_label(const PredictedDistribution& p);

// Elementwise mean of the two distributions.
PredictedDistribution ensemble_predict(const PredictedDistribution& p,
                                       const PredictedDistribution& q);

namespace detail {

// Drops artificial trailing pad indices; real tokens never encode to pad,
// so this is exact masking of the padded tail.
std::span<const int> strip_trailing_pads(std::span<const int> indices);

template <typename T>
PredictedDistribution distribution_from(const nn::Tensor<T>& probs) {
  PredictedDistribution out;
  for (std::size_t c = 0; c < 3; ++c) out.probabilities[c] = static_cast<double>(probs[c]);
  return out;
}

}  // namespace detail

// Stacked-BiLSTM classifier: embedding -> dropout -> BiLSTM -> dropout ->
// BiLSTM -> dropout -> fully connected over the top layer's final forward
// and backward hidden states -> softmax.
template <typename T>
struct BiLstmNet {
  BiLstmConfig config;
  nn::Parameter<T> embedding;  // (V x E)
  std::vector<nn::BiLstmLayer<T>> layers;
  nn::Parameter<T> fc_weight;  // (3 x 2H)
  nn::Parameter<T> fc_bias;    // (3)

  static BiLstmNet init(const BiLstmConfig& config, const text::EmbeddingMatrix& embeddings,
                        std::uint64_t seed) {
    config.validate();
    if (embeddings.rows != config.vocab_size || embeddings.dim != config.embed_dim) {
      throw NumericError("BiLstmNet: embedding matrix " + std::to_string(embeddings.rows) + "x" +
                         std::to_string(embeddings.dim) + " does not match config");
    }
    nn::RngStream rng(seed);
    BiLstmNet net;
    net.config = config;

    nn::Tensor<T> table({config.vocab_size, config.embed_dim});
    for (std::size_t i = 0; i < table.size(); ++i) {
      table[i] = static_cast<T>(embeddings.values[i]);
    }
    net.embedding = nn::Parameter<T>("embedding", std::move(table));

    std::size_t input_size = config.embed_dim;
    for (std::size_t k = 0; k < config.num_stacked_bilstm; ++k) {
      net.layers.push_back(nn::BiLstmLayer<T>::init(input_size, config.hidden_size,
                                                    "layer" + std::to_string(k), rng));
      input_size = 2 * config.hidden_size;
    }
    const double bound = 1.0 / std::sqrt(static_cast<double>(2 * config.hidden_size));
    net.fc_weight = nn::Parameter<T>(
        "fc.weight",
        nn::uniform_tensor<T>({config.num_classes, 2 * config.hidden_size}, bound, rng));
    net.fc_bias =
        nn::Parameter<T>("fc.bias", nn::uniform_tensor<T>({config.num_classes}, bound, rng));
    return net;
  }

  std::vector<nn::Parameter<T>*> parameters() {
    std::vector<nn::Parameter<T>*> out{&embedding};
    for (auto& layer : layers) {
      for (nn::LstmDirection<T>* dir : {&layer.fwd, &layer.bwd}) {
        out.push_back(&dir->w_ih);
        out.push_back(&dir->w_hh);
        out.push_back(&dir->bias);
      }
    }
    out.push_back(&fc_weight);
    out.push_back(&fc_bias);
    return out;
  }

  typename nn::Graph<T>::NodeId forward_logits(nn::Graph<T>& g, std::span<const int> indices,
                                               bool training, nn::RngStream* rng) {
    const std::span<const int> effective = detail::strip_trailing_pads(indices);
    if (effective.empty()) {
      throw DataError("bilstm_forward: empty input sequence");
    }
    auto embedded = g.embedding_lookup(g.parameter(embedding),
                                       std::vector<int>(effective.begin(), effective.end()));
    auto x = apply_dropout(g, embedded, training, rng);
    typename nn::Graph<T>::NodeId final_fwd = 0, final_bwd = 0;
    for (std::size_t k = 0; k < layers.size(); ++k) {
      nn::BiLstmRun<T> run = nn::run_bilstm(g, layers[k], x);
      final_fwd = run.final_forward;
      final_bwd = run.final_backward;
      if (k + 1 < layers.size()) {
        x = apply_dropout(g, run.sequence, training, rng);
      }
    }
    auto summary = g.concat({final_fwd, final_bwd}, 0);
    summary = apply_dropout(g, summary, training, rng);
    return g.add(g.matvec(g.parameter(fc_weight), summary), g.parameter(fc_bias));
  }

  PredictedDistribution predict(std::span<const int> indices) const {
    nn::Graph<T> g;
    auto& self = const_cast<BiLstmNet&>(*this);  // inference records but never mutates
    auto probs = g.softmax(self.forward_logits(g, indices, /*training=*/false, nullptr), 0);
    return detail::distribution_from(g.value(probs));
  }

private:
  typename nn::Graph<T>::NodeId apply_dropout(nn::Graph<T>& g, typename nn::Graph<T>::NodeId x,
                                              bool training, nn::RngStream* rng) {
    if (!training) return x;
    if (rng == nullptr) throw NumericError("forward: training mode requires an rng");
    return g.dropout(x, config.dropout_p, true, *rng);
  }
};

// Convolutional classifier: embedding -> per filter width conv1d + relu +
// max-over-time -> concat -> dropout -> fully connected -> softmax. Inputs
// shorter than the widest filter are right-padded with the pad index.
template <typename T>
struct CnnNet {
  CnnConfig config;
  nn::Parameter<T> embedding;  // (V x E)
  struct Branch {
    std::size_t width = 0;
    nn::Parameter<T> weight;  // (maps x width*E)
    nn::Parameter<T> bias;    // (maps)
  };
  std::vector<Branch> branches;
  nn::Parameter<T> fc_weight;  // (3 x feature_size)
  nn::Parameter<T> fc_bias;    // (3)

  static CnnNet init(const CnnConfig& config, const text::EmbeddingMatrix& embeddings,
                     std::uint64_t seed) {
    config.validate();
    if (embeddings.rows != config.vocab_size || embeddings.dim != config.embed_dim) {
      throw NumericError("CnnNet: embedding matrix " + std::to_string(embeddings.rows) + "x" +
                         std::to_string(embeddings.dim) + " does not match config");
    }
    nn::RngStream rng(seed);
    CnnNet net;
    net.config = config;

    nn::Tensor<T> table({config.vocab_size, config.embed_dim});
    for (std::size_t i = 0; i < table.size(); ++i) {
      table[i] = static_cast<T>(embeddings.values[i]);
    }
    net.embedding = nn::Parameter<T>("embedding", std::move(table));

    for (std::size_t width : config.filter_widths) {
      const std::size_t fan_in = width * config.embed_dim;
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      Branch branch;
      branch.width = width;
      branch.weight =
          nn::Parameter<T>("conv" + std::to_string(width) + ".weight",
                           nn::uniform_tensor<T>({config.maps_per_width, fan_in}, bound, rng));
      branch.bias = nn::Parameter<T>("conv" + std::to_string(width) + ".bias",
                                     nn::uniform_tensor<T>({config.maps_per_width}, bound, rng));
      net.branches.push_back(std::move(branch));
    }
    const double bound = 1.0 / std::sqrt(static_cast<double>(config.feature_size()));
    net.fc_weight = nn::Parameter<T>(
        "fc.weight",
        nn::uniform_tensor<T>({config.num_classes, config.feature_size()}, bound, rng));
    net.fc_bias =
        nn::Parameter<T>("fc.bias", nn::uniform_tensor<T>({config.num_classes}, bound, rng));
    return net;
  }

  std::vector<nn::Parameter<T>*> parameters() {
    std::vector<nn::Parameter<T>*> out{&embedding};
    for (Branch& branch : branches) {
      out.push_back(&branch.weight);
      out.push_back(&branch.bias);
    }
    out.push_back(&fc_weight);
    out.push_back(&fc_bias);
    return out;
  }

  typename nn::Graph<T>::NodeId forward_logits(nn::Graph<T>& g, std::span<const int> indices,
                                               bool training, nn::RngStream* rng) {
    const std::span<const int> effective = detail::strip_trailing_pads(indices);
    if (effective.empty()) {
      throw DataError("cnn_forward: empty input sequence");
    }
    std::vector<int> padded(effective.begin(), effective.end());
    while (padded.size() < config.max_filter_width()) {
      padded.push_back(text::Vocabulary::kPadIndex);
    }
    auto embedded = g.embedding_lookup(g.parameter(embedding), std::move(padded));
    std::vector<typename nn::Graph<T>::NodeId> pooled;
    pooled.reserve(branches.size());
    for (Branch& branch : branches) {
      auto conv = g.conv1d(embedded, g.parameter(branch.weight), g.parameter(branch.bias),
                           branch.width);
      pooled.push_back(g.max_over_time(g.relu(conv)));
    }
    auto features = g.concat(pooled, 0);
    if (training) {
      if (rng == nullptr) throw NumericError("forward: training mode requires an rng");
      features = g.dropout(features, config.dropout_p, true, *rng);
    }
    return g.add(g.matvec(g.parameter(fc_weight), features), g.parameter(fc_bias));
  }

  PredictedDistribution predict(std::span<const int> indices) const {
    nn::Graph<T> g;
    auto& self = const_cast<CnnNet&>(*this);
    auto probs = g.softmax(self.forward_logits(g, indices, /*training=*/false, nullptr), 0);
    return detail::distribution_from(g.value(probs));
  }
};

// ---- the deployable unit: net + vocabulary + training metadata ----

inline constexpr std::string_view kArchBiLstm = "bilstm";
inline constexpr std::string_view kArchCnn = "cnn";

struct TrainingMeta {
  std::uint64_t seed = 0;
  int epochs_trained = 0;
  int selected_epoch = 0;
  double validation_eq1_f1 = 0.0;

  bool operator==(const TrainingMeta&) const = default;
};

struct Model {
  text::Vocabulary vocab;
  std::variant<BiLstmNet<float>, CnnNet<float>> net;
  TrainingMeta meta;

  std::string_view architecture() const {
    return std::holds_alternative<BiLstmNet<float>>(net) ? kArchBiLstm : kArchCnn;
  }

  std::vector<nn::Parameter<float>*> parameters();

  PredictedDistribution predict_indices(std::span<const int> indices) const;
  PredictedDistribution predict_text(const std::string& raw_text) const;
  corpus::SentimentLabel classify_text(const std::string& raw_text) const;
};

Model make_bilstm_model(const BiLstmConfig& config, text::Vocabulary vocab,
                        const text::EmbeddingMatrix& embeddings, std::uint64_t seed);
Model make_cnn_model(const CnnConfig& config, text::Vocabulary vocab,
                     const text::EmbeddingMatrix& embeddings, std::uint64_t seed);

// ---- checkpoint persistence ----
// Binary layout: magic "RSCP", u32 version, u64 header length, JSON header
// (architecture, config, metadata, parameter names/shapes, vocabulary),
// raw little-endian float32 parameter data, u64 FNV-1a checksum of all
// preceding bytes. Save -> load -> save is byte-identical.

enum class CheckpointErrorKind { io, corrupt, version_mismatch, architecture_mismatch,
                                 shape_mismatch };

class CheckpointError : public DataError {
public:
  CheckpointError(CheckpointErrorKind kind, const std::string& msg)
      : DataError(msg), kind_(kind) {}
  CheckpointErrorKind kind() const { return kind_; }

private:
  CheckpointErrorKind kind_;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

// Typed loader; throws architecture_mismatch when the file holds a
// different architecture than requested.
Model load_checkpoint_as(const std::filesystem::path& path, std::string_view architecture);

}  // namespace replysent::models
