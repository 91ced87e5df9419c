#include "replysent/metrics.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "replysent/errors.hpp"

namespace replysent::pipeline {

using nlohmann::json;

long long ConfusionMatrix::total() const {
  long long n = 0;
  for (const auto& row : counts) {
    for (long long c : row) n += c;
  }
  return n;
}

long long ConfusionMatrix::gold_count(int c) const {
  return counts[c][0] + counts[c][1] + counts[c][2];
}

long long ConfusionMatrix::predicted_count(int c) const {
  return counts[0][c] + counts[1][c] + counts[2][c];
}

double eq1(double score_pos, double score_neg) { return (score_pos + score_neg) / 2.0; }

namespace {

double ratio(long long num, long long den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

double harmonic_f1(double precision, double recall) {
  const double sum = precision + recall;
  return sum == 0.0 ? 0.0 : 2.0 * precision * recall / sum;
}

}  // namespace

Metrics metrics_from_confusion(const ConfusionMatrix& cm) {
  Metrics m;
  long long correct = 0;
  for (int c = 0; c < 3; ++c) {
    correct += cm.counts[c][c];
    m.precision[c] = ratio(cm.counts[c][c], cm.predicted_count(c));
    m.recall[c] = ratio(cm.counts[c][c], cm.gold_count(c));
    m.f1[c] = harmonic_f1(m.precision[c], m.recall[c]);
  }
  m.accuracy = ratio(correct, cm.total());

  constexpr int kNeg = static_cast<int>(corpus::SentimentLabel::negative);
  constexpr int kPos = static_cast<int>(corpus::SentimentLabel::positive);
  m.eq1_precision = eq1(m.precision[kPos], m.precision[kNeg]);
  m.eq1_recall = eq1(m.recall[kPos], m.recall[kNeg]);
  m.eq1_f1 = eq1(m.f1[kPos], m.f1[kNeg]);
  return m;
}

ConfusionMatrix confusion_from_pairs(
    std::span<const std::pair<corpus::SentimentLabel, corpus::SentimentLabel>> gold_predicted) {
  ConfusionMatrix cm;
  for (const auto& [gold, predicted] : gold_predicted) cm.add(gold, predicted);
  return cm;
}

void render_confusion(const ConfusionMatrix& cm, const std::filesystem::path& base_path) {
  {
    std::ofstream out(base_path.string() + ".txt");
    if (!out) throw DataError("cannot write " + base_path.string() + ".txt");
    out << std::left << std::setw(16) << "gold \\ predicted";
    for (corpus::SentimentLabel label : corpus::kAllLabels) {
      out << std::right << std::setw(10) << corpus::label_name(label);
    }
    out << '\n';
    for (int r = 0; r < 3; ++r) {
      out << std::left << std::setw(16)
          << corpus::label_name(static_cast<corpus::SentimentLabel>(r));
      for (int c = 0; c < 3; ++c) {
        out << std::right << std::setw(10) << cm.counts[r][c];
      }
      out << '\n';
    }
  }
  {
    json doc;
    doc["axes"] = {"negative", "neutral", "positive"};
    doc["rows"] = "gold";
    doc["counts"] = cm.counts;
    std::ofstream out(base_path.string() + ".json");
    if (!out) throw DataError("cannot write " + base_path.string() + ".json");
    out << doc.dump(2) << '\n';
  }
  {
    // Minimal heatmap: darker cell, larger count.
    long long peak = 1;
    for (const auto& row : cm.counts) {
      for (long long c : row) peak = std::max(peak, c);
    }
    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"320\" height=\"320\">\n";
    const char* names[3] = {"neg", "neu", "pos"};
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) {
        const double intensity = static_cast<double>(cm.counts[r][c]) / static_cast<double>(peak);
        const int shade = 255 - static_cast<int>(intensity * 200.0);
        svg << "  <rect x=\"" << 60 + c * 80 << "\" y=\"" << 60 + r * 80
            << "\" width=\"78\" height=\"78\" fill=\"rgb(" << shade << ',' << shade
            << ",255)\"/>\n";
        svg << "  <text x=\"" << 60 + c * 80 + 39 << "\" y=\"" << 60 + r * 80 + 44
            << "\" text-anchor=\"middle\" font-size=\"14\">" << cm.counts[r][c] << "</text>\n";
      }
      svg << "  <text x=\"30\" y=\"" << 60 + r * 80 + 44
          << "\" text-anchor=\"middle\" font-size=\"12\">" << names[r] << "</text>\n";
      svg << "  <text x=\"" << 60 + r * 80 + 39
          << "\" y=\"40\" text-anchor=\"middle\" font-size=\"12\">" << names[r] << "</text>\n";
    }
    svg << "</svg>\n";
    std::ofstream out(base_path.string() + ".svg");
    if (!out) throw DataError("cannot write " + base_path.string() + ".svg");
    out << svg.str();
  }
}

ConfusionMatrix load_confusion_counts(const std::filesystem::path& json_path) {
  std::ifstream in(json_path);
  if (!in) throw DataError("cannot open " + json_path.string());
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded() || !doc.contains("counts")) {
    throw DataError("malformed confusion counts file " + json_path.string());
  }
  ConfusionMatrix cm;
  cm.counts = doc.at("counts").get<std::array<std::array<long long, 3>, 3>>();
  return cm;
}

}  // namespace replysent::pipeline
