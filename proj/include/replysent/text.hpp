#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "replysent/errors.hpp"

namespace replysent::text {

inline constexpr const char* kPadToken = "<pad>";
inline constexpr const char* kUnkToken = "<unk>";

// Deterministic rule tokenizer: lowercase; URLs -> "<url>", @-mentions ->
// "<user>"; #hashtags kept whole; a fixed emoticon list kept whole;
// punctuation runs split off as single tokens; apostrophes stay inside
// words; bytes >= 0x80 count as word characters so UTF-8 sequences survive.
std::vector<std::string> tokenize(std::string_view text);

// Token -> index mapping with pad = 0 and unk = 1 always present. Indices
// are contiguous and the stored-token mapping is a bijection.
class Vocabulary {
public:
  static constexpr int kPadIndex = 0;
  static constexpr int kUnkIndex = 1;

  Vocabulary();

  int size() const { return static_cast<int>(index_to_token_.size()); }

  // In-vocabulary tokens map to their index; anything else (including the
  // pad literal) maps to unk, so encoding never yields the pad index for a
  // real token.
  int lookup(const std::string& token) const;

  const std::string& token(int index) const { return index_to_token_.at(index); }
  const std::vector<std::string>& tokens() const { return index_to_token_; }

  // Rebuilds a vocabulary from a stored token list (checkpoint loading).
  static Vocabulary from_tokens(const std::vector<std::string>& tokens);

private:
  friend Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>&, std::size_t);
  void append(std::string token);

  std::vector<std::string> index_to_token_;
  std::unordered_map<std::string, int> token_to_index_;
};

// Keeps the (max_size - 2) most frequent tokens; frequency ties break
// lexicographically ascending. Independent of corpus iteration order.
Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& corpus,
                            std::size_t max_size);

std::vector<int> encode(const std::vector<std::string>& tokens, const Vocabulary& vocab);

struct EmbeddingMatrix {
  std::size_t rows = 0;
  std::size_t dim = 0;
  std::vector<float> values;  // row-major (rows x dim)

  float* row(std::size_t r) { return values.data() + r * dim; }
  const float* row(std::size_t r) const { return values.data() + r * dim; }
};

// Loads the pretrained text format "word v1 v2 ... v_dim" (single-space
// separated). Vocabulary words found in the file get their file vector; the
// pad row is zero; unk and missing words are seeded uniformly in
// [-0.05, 0.05], depending only on (seed, row index).
EmbeddingMatrix load_embeddings(const std::filesystem::path& path, std::size_t dim,
                                const Vocabulary& vocab, std::uint64_t seed);

// The no-pretrained-file variant: pad row zero, everything else uniform in
// [-0.05, 0.05].
EmbeddingMatrix random_embeddings(std::size_t dim, const Vocabulary& vocab, std::uint64_t seed);

}  // namespace replysent::text
