#include "replysent/text.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>

#include "replysent/rng.hpp"

namespace replysent::text {

namespace {

bool is_word_char(unsigned char c) {
  return std::isalnum(c) != 0 || c == '_' || c >= 0x80;
}

bool is_space_char(unsigned char c) { return std::isspace(c) != 0; }

// Post-lowercase emoticon forms; matched longest-first at token boundaries.
constexpr std::array<std::string_view, 19> kEmoticons = {
    ":-)", ":-(", ":-d", ":-p", ":')", ":'(", ";-)", ":)", ":(", ":d",
    ":p",  ":o",  ":/",  ":|",  ";)",  "(:",  "):",  "=)", "<3"};

std::size_t match_url(const std::string& s, std::size_t i) {
  const auto starts = [&](std::string_view prefix) {
    return s.compare(i, prefix.size(), prefix) == 0;
  };
  std::size_t start = 0;
  if (starts("https://") || starts("http://")) {
    start = s.find("//", i) + 2;
  } else if (starts("www.") && i + 4 < s.size() && !is_space_char(s[i + 4])) {
    start = i + 4;
  } else {
    return 0;
  }
  std::size_t end = start;
  while (end < s.size() && !is_space_char(s[end])) ++end;
  return end - i;
}

std::size_t match_emoticon(const std::string& s, std::size_t i) {
  for (std::string_view emo : kEmoticons) {
    if (s.compare(i, emo.size(), emo) != 0) continue;
    const std::size_t end = i + emo.size();
    // Letter-final emoticons (":d", ":p", ":o") need a boundary so ":dog"
    // is not cut in half.
    if (std::isalnum(static_cast<unsigned char>(emo.back())) && end < s.size() &&
        is_word_char(s[end])) {
      continue;
    }
    return emo.size();
  }
  return 0;
}

std::size_t word_run_length(const std::string& s, std::size_t i) {
  std::size_t end = i;
  while (end < s.size()) {
    if (is_word_char(s[end])) {
      ++end;
    } else if (s[end] == '\'' && end > i && end + 1 < s.size() && is_word_char(s[end + 1])) {
      ++end;  // apostrophe between word characters stays inside the word
    } else {
      break;
    }
  }
  return end - i;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::string s(text);
  for (char& c : s) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c + ('a' - 'A'));
  }

  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < s.size()) {
    const unsigned char c = static_cast<unsigned char>(s[i]);
    if (is_space_char(c)) {
      ++i;
      continue;
    }
    if (const std::size_t n = match_url(s, i); n > 0) {
      tokens.emplace_back("<url>");
      i += n;
      continue;
    }
    if (c == '@' && i + 1 < s.size() && is_word_char(static_cast<unsigned char>(s[i + 1]))) {
      i += 1 + word_run_length(s, i + 1);
      tokens.emplace_back("<user>");
      continue;
    }
    if (c == '#' && i + 1 < s.size() && is_word_char(static_cast<unsigned char>(s[i + 1]))) {
      const std::size_t n = word_run_length(s, i + 1);
      tokens.push_back(s.substr(i, n + 1));
      i += n + 1;
      continue;
    }
    if (const std::size_t n = match_emoticon(s, i); n > 0) {
      tokens.push_back(s.substr(i, n));
      i += n;
      continue;
    }
    if (is_word_char(c)) {
      const std::size_t n = word_run_length(s, i);
      tokens.push_back(s.substr(i, n));
      i += n;
      continue;
    }
    // Punctuation run: extend until whitespace, a word character, or the
    // start of something the rules above would claim.
    std::size_t end = i + 1;
    while (end < s.size()) {
      const unsigned char ec = static_cast<unsigned char>(s[end]);
      if (is_space_char(ec) || is_word_char(ec)) break;
      if (match_emoticon(s, end) > 0 || match_url(s, end) > 0) break;
      ++end;
    }
    tokens.push_back(s.substr(i, end - i));
    i = end;
  }
  return tokens;
}

Vocabulary::Vocabulary() {
  append(kPadToken);
  append(kUnkToken);
}

void Vocabulary::append(std::string token) {
  token_to_index_.emplace(token, static_cast<int>(index_to_token_.size()));
  index_to_token_.push_back(std::move(token));
}

int Vocabulary::lookup(const std::string& token) const {
  auto it = token_to_index_.find(token);
  if (it == token_to_index_.end() || it->second == kPadIndex) return kUnkIndex;
  return it->second;
}

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& tokens) {
  if (tokens.size() < 2 || tokens[0] != kPadToken || tokens[1] != kUnkToken) {
    throw DataError("Vocabulary: token list must start with pad and unk");
  }
  Vocabulary vocab;
  for (std::size_t i = 2; i < tokens.size(); ++i) {
    if (vocab.token_to_index_.count(tokens[i]) > 0) {
      throw DataError("Vocabulary: duplicate token '" + tokens[i] + "'");
    }
    vocab.append(tokens[i]);
  }
  return vocab;
}

Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& corpus,
                            std::size_t max_size) {
  if (max_size < 2) {
    throw ConfigError("build_vocabulary: max_size must leave room for pad and unk");
  }
  // std::map keeps candidates in lexicographic order, which settles
  // frequency ties without a second pass.
  std::map<std::string, long long> counts;
  for (const auto& tokens : corpus) {
    for (const std::string& token : tokens) {
      if (token == kPadToken || token == kUnkToken) continue;
      counts[token] += 1;
    }
  }
  std::vector<std::pair<std::string_view, long long>> ranked;
  ranked.reserve(counts.size());
  for (const auto& [token, count] : counts) ranked.emplace_back(token, count);
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });

  Vocabulary vocab;
  const std::size_t capacity = max_size - 2;
  for (std::size_t i = 0; i < ranked.size() && i < capacity; ++i) {
    vocab.append(std::string(ranked[i].first));
  }
  return vocab;
}

std::vector<int> encode(const std::vector<std::string>& tokens, const Vocabulary& vocab) {
  std::vector<int> indices;
  indices.reserve(tokens.size());
  for (const std::string& token : tokens) indices.push_back(vocab.lookup(token));
  return indices;
}

namespace {

// Pad row zero; every other row drawn uniformly from [-0.05, 0.05] in index
// order, so row i depends only on (seed, i).
EmbeddingMatrix seeded_embeddings(std::size_t dim, const Vocabulary& vocab, std::uint64_t seed) {
  EmbeddingMatrix m;
  m.rows = static_cast<std::size_t>(vocab.size());
  m.dim = dim;
  m.values.assign(m.rows * dim, 0.0f);
  nn::RngStream rng(seed);
  for (std::size_t r = 1; r < m.rows; ++r) {
    float* row = m.row(r);
    for (std::size_t c = 0; c < dim; ++c) {
      row[c] = static_cast<float>(rng.uniform(-0.05, 0.05));
    }
  }
  return m;
}

}  // namespace

EmbeddingMatrix random_embeddings(std::size_t dim, const Vocabulary& vocab,
                                  std::uint64_t seed) {
  return seeded_embeddings(dim, vocab, seed);
}

EmbeddingMatrix load_embeddings(const std::filesystem::path& path, std::size_t dim,
                                const Vocabulary& vocab, std::uint64_t seed) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open embeddings file " + path.string());

  EmbeddingMatrix m = seeded_embeddings(dim, vocab, seed);
  std::vector<bool> filled(m.rows, false);

  std::string line;
  std::size_t line_no = 0;
  std::vector<float> parsed(dim);
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::size_t word_end = line.find(' ');
    if (word_end == std::string::npos) {
      throw DataError(path.string() + ":" + std::to_string(line_no) +
                      ": expected word followed by " + std::to_string(dim) + " values");
    }
    const std::string word = line.substr(0, word_end);

    std::size_t pos = word_end;
    std::size_t count = 0;
    const char* end = line.data() + line.size();
    while (pos < line.size()) {
      ++pos;  // skip the single separating space
      if (pos >= line.size()) break;
      float value = 0.0f;
      auto [next, ec] = std::from_chars(line.data() + pos, end, value);
      if (ec != std::errc()) {
        throw DataError(path.string() + ":" + std::to_string(line_no) + ": bad number");
      }
      if (!std::isfinite(value)) {
        throw DataError(path.string() + ":" + std::to_string(line_no) + ": non-finite value");
      }
      if (count < dim) parsed[count] = value;
      ++count;
      pos = static_cast<std::size_t>(next - line.data());
    }
    if (count != dim) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                      std::to_string(dim) + " values, found " + std::to_string(count));
    }

    const int index = vocab.lookup(word);
    if (index == Vocabulary::kUnkIndex) continue;  // missing words keep their seeded row
    if (filled[index]) continue;                   // first occurrence wins
    filled[index] = true;
    std::copy(parsed.begin(), parsed.end(), m.row(static_cast<std::size_t>(index)));
  }
  return m;
}

}  // namespace replysent::text
