#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "replysent/text.hpp"

using namespace replysent;
namespace fs = std::filesystem;

TEST_CASE("tokenize rules") {
  using V = std::vector<std::string>;
  CHECK(text::tokenize("Happy birthday @john! https://t.co/x") ==
        V{"happy", "birthday", "<user>", "!", "<url>"});
  CHECK(text::tokenize("") == V{});
  CHECK(text::tokenize("#Peace :)") == V{"#peace", ":)"});
  CHECK(text::tokenize("WOW!!! so cool") == V{"wow", "!!!", "so", "cool"});
  CHECK(text::tokenize("don't stop") == V{"don't", "stop"});
  CHECK(text::tokenize("boys' night") == V{"boys", "'", "night"});
  CHECK(text::tokenize("check www.example.com now") == V{"check", "<url>", "now"});
  CHECK(text::tokenize("@a@b") == V{"<user>", "<user>"});
  CHECK(text::tokenize("sad :( but fine") == V{"sad", ":(", "but", "fine"});
  CHECK(text::tokenize("love <3you") == V{"love", "<", "3you"});  // alnum-final emoticon needs a boundary
  CHECK(text::tokenize("love <3") == V{"love", "<3"});
  CHECK(text::tokenize("# lonely hash") == V{"#", "lonely", "hash"});
  CHECK(text::tokenize(":D") == V{":d"});
  CHECK(text::tokenize(":dog") == V{":", "dog"});  // letter-final emoticon needs a boundary
  CHECK(text::tokenize("a,b") == V{"a", ",", "b"});
  CHECK(text::tokenize("!!:)") == V{"!!", ":)"});
  CHECK(text::tokenize("caf\xC3\xA9 time") == V{"caf\xC3\xA9", "time"});  // UTF-8 survives
}

TEST_CASE("tokenize is deterministic and never yields interior whitespace") {
  const std::vector<std::string> inputs = {
      "Mixed CASE @User #Tag https://x.io/a?b=c :) end",
      "   leading and trailing   ",
      "tabs\tand\nnewlines",
      "a#b @ # nothing",
      "12:30 o'clock!!!",
  };
  for (const std::string& input : inputs) {
    const auto a = text::tokenize(input);
    const auto b = text::tokenize(input);
    CHECK(a == b);
    for (const std::string& token : a) {
      CHECK_FALSE(token.empty());
      for (char c : token) {
        CHECK_FALSE(std::isspace(static_cast<unsigned char>(c)));
      }
    }
  }
}

TEST_CASE("build_vocabulary") {
  SUBCASE("frequency order with lexicographic tie-break") {
    const std::vector<std::vector<std::string>> corpus = {
        {"b", "a", "c"}, {"a", "b"}, {"b", "a"}};  // a:3, b:3, c:1
    const auto vocab = text::build_vocabulary(corpus, 4);
    CHECK(vocab.size() == 4);
    CHECK(vocab.token(0) == "<pad>");
    CHECK(vocab.token(1) == "<unk>");
    CHECK(vocab.token(2) == "a");
    CHECK(vocab.token(3) == "b");
  }
  SUBCASE("max_size 2 leaves just pad and unk") {
    const auto vocab = text::build_vocabulary({{"a", "b"}}, 2);
    CHECK(vocab.size() == 2);
  }
  SUBCASE("size never exceeds max_size") {
    std::vector<std::vector<std::string>> corpus;
    for (int i = 0; i < 50; ++i) corpus.push_back({"tok" + std::to_string(i)});
    CHECK(text::build_vocabulary(corpus, 10).size() == 10);
    CHECK(text::build_vocabulary(corpus, 500).size() == 52);
  }
  SUBCASE("iteration order does not matter") {
    const std::vector<std::vector<std::string>> one = {{"x", "y"}, {"y", "z"}, {"y"}};
    const std::vector<std::vector<std::string>> other = {{"y"}, {"y", "z"}, {"x", "y"}};
    const auto a = text::build_vocabulary(one, 5);
    const auto b = text::build_vocabulary(other, 5);
    CHECK(a.tokens() == b.tokens());
  }
  SUBCASE("reserved literals are not counted") {
    const auto vocab = text::build_vocabulary({{"<pad>", "<unk>", "word"}}, 10);
    CHECK(vocab.size() == 3);
    CHECK(vocab.token(2) == "word");
  }
  SUBCASE("max_size below 2 rejected") {
    CHECK_THROWS_AS(text::build_vocabulary({}, 1), ConfigError);
  }
}

TEST_CASE("encode") {
  const auto vocab = text::build_vocabulary({{"a", "a", "b"}}, 10);
  SUBCASE("unknown tokens map to unk") {
    const auto indices = text::encode({"a", "zzz"}, vocab);
    CHECK(indices == std::vector<int>{vocab.lookup("a"), text::Vocabulary::kUnkIndex});
  }
  SUBCASE("empty stays empty") { CHECK(text::encode({}, vocab).empty()); }
  SUBCASE("pad literal never encodes to the pad index") {
    const auto indices = text::encode({"<pad>", "a"}, vocab);
    CHECK(indices[0] == text::Vocabulary::kUnkIndex);
    for (int ix : indices) CHECK(ix != text::Vocabulary::kPadIndex);
  }
  SUBCASE("encode of tokenize is reproducible") {
    const std::string s = "a b zzz a";
    CHECK(text::encode(text::tokenize(s), vocab) == text::encode(text::tokenize(s), vocab));
  }
}

TEST_CASE("load_embeddings") {
  const auto vocab = text::build_vocabulary({{"good", "bad", "rare"}}, 10);
  const fs::path path = fs::temp_directory_path() / "replysent_embed.txt";
  {
    std::ofstream out(path);
    out << "good 0.1 0.2\n";
    out << "unrelated 9.0 9.0\n";
    out << "bad -0.3 0.4\n";
  }

  SUBCASE("file vectors are copied for vocabulary words") {
    const auto m = text::load_embeddings(path, 2, vocab, 5);
    const float* good = m.row(static_cast<std::size_t>(vocab.lookup("good")));
    CHECK(good[0] == doctest::Approx(0.1f));
    CHECK(good[1] == doctest::Approx(0.2f));
    const float* bad = m.row(static_cast<std::size_t>(vocab.lookup("bad")));
    CHECK(bad[0] == doctest::Approx(-0.3f));
  }
  SUBCASE("pad row is exactly zero") {
    const auto m = text::load_embeddings(path, 2, vocab, 5);
    CHECK(m.row(0)[0] == 0.0f);
    CHECK(m.row(0)[1] == 0.0f);
  }
  SUBCASE("missing words stay in range and are seed-stable") {
    const auto a = text::load_embeddings(path, 2, vocab, 5);
    const auto b = text::load_embeddings(path, 2, vocab, 5);
    const auto rare = static_cast<std::size_t>(vocab.lookup("rare"));
    for (std::size_t c = 0; c < 2; ++c) {
      CHECK(a.row(rare)[c] >= -0.05f);
      CHECK(a.row(rare)[c] <= 0.05f);
      CHECK(a.row(rare)[c] == b.row(rare)[c]);
    }
    const auto other = text::load_embeddings(path, 2, vocab, 6);
    CHECK(a.row(rare)[0] != other.row(rare)[0]);
  }
  SUBCASE("every entry is finite") {
    const auto m = text::load_embeddings(path, 2, vocab, 5);
    for (float v : m.values) CHECK(std::isfinite(v));
  }
  SUBCASE("dimension mismatch names the line") {
    const fs::path bad_path = fs::temp_directory_path() / "replysent_embed_bad.txt";
    {
      std::ofstream out(bad_path);
      out << "good 0.1 0.2\n";
      out << "bad 0.3\n";
    }
    CHECK_THROWS_WITH_AS(text::load_embeddings(bad_path, 2, vocab, 5), doctest::Contains(":2"),
                         DataError);
  }
  SUBCASE("unreadable file is an error") {
    CHECK_THROWS_AS(text::load_embeddings("/nonexistent/vectors.txt", 2, vocab, 5), DataError);
  }
  SUBCASE("random_embeddings matches the seeded-row convention") {
    const auto m = text::random_embeddings(4, vocab, 11);
    CHECK(m.rows == static_cast<std::size_t>(vocab.size()));
    CHECK(m.row(0)[3] == 0.0f);
    for (float v : m.values) {
      CHECK(v >= -0.05f);
      CHECK(v <= 0.05f);
    }
  }
}
