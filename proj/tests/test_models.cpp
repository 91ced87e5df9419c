#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "replysent/models.hpp"

using namespace replysent;
using corpus::SentimentLabel;
namespace fs = std::filesystem;

namespace {

text::Vocabulary small_vocab() {
  return text::build_vocabulary(
      {{"alpha", "beta", "gamma", "delta", "epsilon", "zeta", "eta", "theta"}}, 10);
}

models::Model small_bilstm(std::uint64_t seed = 7) {
  models::BiLstmConfig config;
  config.embed_dim = 8;
  config.hidden_size = 6;
  config.dropout_p = 0.5;
  text::Vocabulary vocab = small_vocab();
  const auto embeddings = text::random_embeddings(config.embed_dim, vocab, seed + 1);
  return models::make_bilstm_model(config, std::move(vocab), embeddings, seed);
}

models::Model small_cnn(std::uint64_t seed = 7) {
  models::CnnConfig config;
  config.embed_dim = 8;
  config.maps_per_width = 5;
  config.dropout_p = 0.5;
  text::Vocabulary vocab = small_vocab();
  const auto embeddings = text::random_embeddings(config.embed_dim, vocab, seed + 1);
  return models::make_cnn_model(config, std::move(vocab), embeddings, seed);
}

bool is_valid_distribution(const models::PredictedDistribution& p) {
  double sum = 0.0;
  for (double v : p.probabilities) {
    if (v < 0.0) return false;
    sum += v;
  }
  return std::abs(sum - 1.0) < 1e-6;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("predict_label argmax and tie rules") {
  CHECK(models::predict_label({{0.1, 0.2, 0.7}}) == SentimentLabel::positive);
  CHECK(models::predict_label({{0.4, 0.4, 0.2}}) == SentimentLabel::negative);
  CHECK(models::predict_label({{1.0 / 3, 1.0 / 3, 1.0 / 3}}) == SentimentLabel::negative);
  CHECK(models::predict_label({{0.2, 0.5, 0.3}}) == SentimentLabel::neutral);
}

TEST_CASE("ensemble_predict") {
  const models::PredictedDistribution p{{0.6, 0.3, 0.1}};
  const models::PredictedDistribution q{{0.2, 0.5, 0.3}};
  const auto mean = models::ensemble_predict(p, q);
  CHECK(mean.probabilities[0] == doctest::Approx(0.4));
  CHECK(mean.probabilities[1] == doctest::Approx(0.4));
  CHECK(mean.probabilities[2] == doctest::Approx(0.2));
  CHECK(is_valid_distribution(mean));

  SUBCASE("idempotent on equal inputs") {
    const auto same = models::ensemble_predict(p, p);
    for (int c = 0; c < 3; ++c) {
      CHECK(same.probabilities[c] == doctest::Approx(p.probabilities[c]));
    }
  }
  SUBCASE("symmetric") {
    const auto ab = models::ensemble_predict(p, q);
    const auto ba = models::ensemble_predict(q, p);
    for (int c = 0; c < 3; ++c) CHECK(ab.probabilities[c] == ba.probabilities[c]);
  }
}

TEST_CASE("bilstm forward contracts") {
  const models::Model model = small_bilstm();
  const std::vector<int> indices = {2, 5, 3, 7};

  SUBCASE("outputs a valid distribution") {
    CHECK(is_valid_distribution(model.predict_indices(indices)));
  }
  SUBCASE("inference is deterministic") {
    const auto a = model.predict_indices(indices);
    const auto b = model.predict_indices(indices);
    CHECK(a.probabilities == b.probabilities);
  }
  SUBCASE("single-token input works") {
    CHECK(is_valid_distribution(model.predict_indices(std::vector<int>{4})));
  }
  SUBCASE("empty input is an error") {
    CHECK_THROWS_AS(model.predict_indices(std::vector<int>{}), DataError);
    CHECK_THROWS_AS(model.predict_indices(std::vector<int>{0, 0}), DataError);
  }
  SUBCASE("trailing pads beyond the minimum do not change the output") {
    auto padded = indices;
    padded.insert(padded.end(), 5, text::Vocabulary::kPadIndex);
    const auto a = model.predict_indices(indices);
    const auto b = model.predict_indices(padded);
    CHECK(a.probabilities == b.probabilities);
  }
  SUBCASE("batch order never affects per-item outputs") {
    const std::vector<std::vector<int>> batch = {{2, 3}, {4, 5, 6}, {7}, {2, 2, 2, 2}};
    std::vector<models::PredictedDistribution> forward_order, reverse_order(batch.size());
    for (const auto& item : batch) forward_order.push_back(model.predict_indices(item));
    for (std::size_t i = batch.size(); i-- > 0;) {
      reverse_order[i] = model.predict_indices(batch[i]);
    }
    for (std::size_t i = 0; i < batch.size(); ++i) {
      CHECK(forward_order[i].probabilities == reverse_order[i].probabilities);
    }
  }
}

TEST_CASE("cnn forward contracts") {
  const models::Model model = small_cnn();

  SUBCASE("length >= widest filter") {
    CHECK(is_valid_distribution(model.predict_indices(std::vector<int>{2, 3, 4, 5, 6})));
  }
  SUBCASE("short inputs are right-padded to the widest filter") {
    CHECK(is_valid_distribution(model.predict_indices(std::vector<int>{2, 3})));
  }
  SUBCASE("inference determinism") {
    const std::vector<int> indices = {2, 3, 4};
    CHECK(model.predict_indices(indices).probabilities ==
          model.predict_indices(indices).probabilities);
  }
  SUBCASE("empty input is an error") {
    CHECK_THROWS_AS(model.predict_indices(std::vector<int>{}), DataError);
  }
  SUBCASE("trailing pads beyond the minimum do not change the output") {
    const std::vector<int> indices = {2, 3};
    std::vector<int> padded = {2, 3, 0, 0, 0, 0, 0, 0, 0};
    CHECK(model.predict_indices(indices).probabilities ==
          model.predict_indices(padded).probabilities);
  }
}

TEST_CASE("gradient reaches every declared parameter") {
  // Ten random trials per architecture; no parameter may have an all-zero
  // gradient in every trial (catches disconnected wiring).
  auto run_trials = [](auto make_model) {
    for (std::uint64_t trial = 1; trial <= 10; ++trial) {
      models::Model model = make_model(trial);
      nn::RngStream input_rng(trial * 31 + 1);
      std::vector<int> indices;
      for (int t = 0; t < 6; ++t) {
        indices.push_back(2 + static_cast<int>(input_rng.below(7)));
      }
      std::visit(
          [&](auto& net) {
            nn::Graph<float> g;
            auto logits = net.forward_logits(g, indices, false, nullptr);
            auto loss = g.weighted_cross_entropy(
                g.stack_rows({logits}), {static_cast<int>(trial % 3)}, {1.0, 1.0, 1.0});
            g.backward(loss);
          },
          model.net);
      for (nn::Parameter<float>* p : model.parameters()) {
        bool any_nonzero = false;
        for (std::size_t i = 0; i < p->grad.size(); ++i) {
          if (p->grad[i] != 0.0f) {
            any_nonzero = true;
            break;
          }
        }
        CAPTURE(p->name);
        CHECK(any_nonzero);
      }
    }
  };
  run_trials([](std::uint64_t seed) { return small_bilstm(seed); });
  run_trials([](std::uint64_t seed) { return small_cnn(seed); });
}

TEST_CASE("checkpoint round-trip") {
  const fs::path dir = fs::temp_directory_path() / "replysent_ckpt_test";
  fs::create_directories(dir);

  SUBCASE("save -> load -> save is byte-identical, tensors bitwise equal") {
    models::Model model = small_bilstm(11);
    model.meta.epochs_trained = 5;
    model.meta.selected_epoch = 3;
    model.meta.validation_eq1_f1 = 0.8125;
    const fs::path first = dir / "a.ckpt";
    const fs::path second = dir / "b.ckpt";
    models::save_checkpoint(model, first);
    models::Model loaded = models::load_checkpoint(first);
    models::save_checkpoint(loaded, second);
    CHECK(slurp(first) == slurp(second));
    CHECK(loaded.meta == model.meta);
    CHECK(loaded.vocab.tokens() == model.vocab.tokens());

    auto original = model.parameters();
    auto restored = loaded.parameters();
    REQUIRE(original.size() == restored.size());
    for (std::size_t k = 0; k < original.size(); ++k) {
      CHECK(original[k]->name == restored[k]->name);
      REQUIRE(original[k]->value.size() == restored[k]->value.size());
      for (std::size_t i = 0; i < original[k]->value.size(); ++i) {
        CHECK(original[k]->value[i] == restored[k]->value[i]);
      }
    }
  }
  SUBCASE("cnn checkpoints round-trip too") {
    models::Model model = small_cnn(13);
    const fs::path path = dir / "cnn.ckpt";
    models::save_checkpoint(model, path);
    const models::Model loaded = models::load_checkpoint(path);
    CHECK(loaded.architecture() == models::kArchCnn);
    const std::vector<int> probe = {2, 3, 4, 5, 6};
    CHECK(loaded.predict_indices(probe).probabilities ==
          model.predict_indices(probe).probabilities);
  }
  SUBCASE("truncated file is a corrupt-file error") {
    const fs::path path = dir / "trunc.ckpt";
    models::save_checkpoint(small_bilstm(3), path);
    const std::string bytes = slurp(path);
    {
      std::ofstream out(path, std::ios::binary);
      out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    }
    try {
      models::load_checkpoint(path);
      FAIL("expected CheckpointError");
    } catch (const models::CheckpointError& e) {
      CHECK(e.kind() == models::CheckpointErrorKind::corrupt);
    }
  }
  SUBCASE("flipped payload byte is caught by the checksum") {
    const fs::path path = dir / "flip.ckpt";
    models::save_checkpoint(small_bilstm(3), path);
    std::string bytes = slurp(path);
    bytes[bytes.size() / 2] = static_cast<char>(bytes[bytes.size() / 2] ^ 0x40);
    {
      std::ofstream out(path, std::ios::binary);
      out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    try {
      models::load_checkpoint(path);
      FAIL("expected CheckpointError");
    } catch (const models::CheckpointError& e) {
      CHECK(e.kind() == models::CheckpointErrorKind::corrupt);
    }
  }
  SUBCASE("version bump is a version-mismatch error") {
    const fs::path path = dir / "ver.ckpt";
    models::save_checkpoint(small_bilstm(3), path);
    std::string bytes = slurp(path);
    bytes[4] = 9;  // version field, little-endian u32 at offset 4
    {
      std::ofstream out(path, std::ios::binary);
      out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    try {
      models::load_checkpoint(path);
      FAIL("expected CheckpointError");
    } catch (const models::CheckpointError& e) {
      CHECK(e.kind() == models::CheckpointErrorKind::version_mismatch);
    }
  }
  SUBCASE("loading a cnn checkpoint as bilstm is an architecture mismatch") {
    const fs::path path = dir / "arch.ckpt";
    models::save_checkpoint(small_cnn(3), path);
    try {
      models::load_checkpoint_as(path, models::kArchBiLstm);
      FAIL("expected CheckpointError");
    } catch (const models::CheckpointError& e) {
      CHECK(e.kind() == models::CheckpointErrorKind::architecture_mismatch);
    }
    CHECK_NOTHROW(models::load_checkpoint_as(path, models::kArchCnn));
  }
  SUBCASE("missing file is an io error") {
    CHECK_THROWS_AS(models::load_checkpoint(dir / "missing.ckpt"), models::CheckpointError);
  }
}

TEST_CASE("predict_text runs the full tokenize-encode-predict path") {
  const models::Model model = small_bilstm();
  const auto p = model.predict_text("Alpha BETA gamma!");
  CHECK(is_valid_distribution(p));
  // Unknown words encode to unk and still classify.
  CHECK(is_valid_distribution(model.predict_text("completely unseen words")));
}
