#include "purex/evaluation.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <istream>

namespace purex {

using nlohmann::json;

namespace {

bool ranks_before(const ScoredTuple& a, const ScoredTuple& b) {
  if (a.score != b.score) return a.score > b.score;
  return std::tie(a.head, a.tail, a.relation) < std::tie(b.head, b.tail, b.relation);
}

}  // namespace

void sort_predictions(PredictionList& preds) { std::sort(preds.begin(), preds.end(), ranks_before); }

void GoldSet::add(const std::string& head, const std::string& tail, int relation) {
  if (relation == 0) throw DataError("gold set cannot hold NA tuples");
  tuples_.insert({head, tail, relation});
}

GoldSet gold_from_bags(const std::vector<Bag>& bags) {
  GoldSet gold;
  for (const Bag& bag : bags) {
    if (bag.distant_label != 0) gold.add(bag.key.head, bag.key.tail, bag.distant_label);
  }
  return gold;
}

PrCurve pr_curve(const PredictionList& preds, const GoldSet& gold) {
  if (gold.size() == 0) throw DataError("pr_curve: gold set is empty, recall is undefined");
  PrCurve curve;
  curve.points.reserve(preds.size());
  std::size_t hits = 0;
  double prev_recall = 0.0;
  double prev_precision = 0.0;
  for (std::size_t k = 0; k < preds.size(); ++k) {
    if (gold.contains(preds[k])) ++hits;
    const PrPoint p{static_cast<double>(hits) / static_cast<double>(gold.size()),
                    static_cast<double>(hits) / static_cast<double>(k + 1)};
    if (k == 0) prev_precision = p.precision;
    curve.auc += (p.recall - prev_recall) * 0.5 * (p.precision + prev_precision);
    prev_recall = p.recall;
    prev_precision = p.precision;
    curve.points.push_back(p);
  }
  return curve;
}

double precision_at_n(const PredictionList& preds, const GoldSet& gold, std::size_t n) {
  if (n == 0) throw ConfigError("precision_at_n: N must be >= 1");
  const std::size_t cut = std::min(n, preds.size());
  if (cut == 0) return 0.0;
  std::size_t hits = 0;
  for (std::size_t k = 0; k < cut; ++k) hits += gold.contains(preds[k]) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(cut);
}

void write_pr_csv(const PrCurve& curve, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "recall,precision\n" << std::setprecision(17);
  for (const auto& p : curve.points) out << p.recall << ',' << p.precision << '\n';
}

HeldOutMetrics held_out_metrics(const PredictionList& preds, const GoldSet& gold) {
  HeldOutMetrics m;
  m.curve = pr_curve(preds, gold);
  m.p_at_100 = precision_at_n(preds, gold, 100);
  m.p_at_200 = precision_at_n(preds, gold, 200);
  m.p_at_300 = precision_at_n(preds, gold, 300);
  m.n_predictions = preds.size();
  m.n_gold = gold.size();
  return m;
}

json to_json(const HeldOutMetrics& m, const std::string& name) {
  json doc{
      {"auc", m.curve.auc},
      {"p_at_100", m.p_at_100},
      {"p_at_200", m.p_at_200},
      {"p_at_300", m.p_at_300},
      {"n_predictions", m.n_predictions},
      {"n_gold", m.n_gold},
  };
  if (!name.empty()) doc["config"] = name;
  return doc;
}

PredictionList tuple_predictions(const std::vector<BagPrediction>& bags) {
  std::map<std::tuple<std::string, std::string, int>, double> best;
  for (const auto& bag : bags) {
    for (std::size_t k = 1; k < bag.scores.size(); ++k) {
      const auto key = std::make_tuple(bag.key.head, bag.key.tail, static_cast<int>(k));
      auto [it, inserted] = best.emplace(key, bag.scores[k]);
      if (!inserted) it->second = std::max(it->second, bag.scores[k]);
    }
  }
  PredictionList out;
  out.reserve(best.size());
  for (const auto& [key, score] : best) out.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key), score});
  sort_predictions(out);
  return out;
}

std::vector<json> prediction_dump(const std::vector<BagPrediction>& bags, const RelationInventory& relations) {
  struct Row {
    const BagPrediction* bag;
    int relation;
  };
  std::vector<Row> rows;
  for (const auto& bag : bags) {
    for (std::size_t k = 1; k < bag.scores.size(); ++k) rows.push_back({&bag, static_cast<int>(k)});
  }
  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    const double sa = a.bag->scores[static_cast<std::size_t>(a.relation)];
    const double sb = b.bag->scores[static_cast<std::size_t>(b.relation)];
    if (sa != sb) return sa > sb;
    return std::tie(a.bag->key, a.bag->label, a.relation) < std::tie(b.bag->key, b.bag->label, b.relation);
  });
  std::vector<json> out;
  out.reserve(rows.size());
  for (const Row& r : rows) {
    out.push_back(json{
        {"bag_key",
         {{"head", r.bag->key.head}, {"tail", r.bag->key.tail}, {"label", relations.name(r.bag->label)}}},
        {"relation", relations.name(r.relation)},
        {"score", r.bag->scores[static_cast<std::size_t>(r.relation)]},
    });
  }
  return out;
}

PredictionList read_prediction_dump(std::istream& in, const RelationInventory& relations) {
  std::map<std::tuple<std::string, std::string, int>, double> best;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const json doc = json::parse(line, nullptr, false);
    auto fail = [&](const std::string& why) {
      throw DataError("prediction dump line " + std::to_string(line_no) + ": " + why);
    };
    if (!doc.is_object() || !doc.contains("bag_key") || !doc.contains("relation") || !doc.contains("score")) {
      fail("expected {bag_key, relation, score}");
    }
    const json& key = doc["bag_key"];
    if (!key.is_object() || !key.contains("head") || !key.contains("tail") || !doc["score"].is_number() ||
        !doc["relation"].is_string()) {
      fail("malformed entry");
    }
    const auto rel = relations.id(doc["relation"].get<std::string>());
    if (!rel) fail("unknown relation " + doc["relation"].get<std::string>());
    if (*rel == 0) continue;
    const auto k = std::make_tuple(key["head"].get<std::string>(), key["tail"].get<std::string>(), *rel);
    const double score = doc["score"].get<double>();
    auto [it, inserted] = best.emplace(k, score);
    if (!inserted) it->second = std::max(it->second, score);
  }
  PredictionList out;
  for (const auto& [key, score] : best) out.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key), score});
  sort_predictions(out);
  return out;
}

SelectionStats selector_accuracy(const std::vector<Bag>& bags, const std::vector<SelectionResult>& splits,
                                 const std::vector<bool>& sidecar) {
  if (bags.size() != splits.size()) throw DataError("selector_accuracy: one split per bag is required");
  SelectionStats s;
  for (std::size_t b = 0; b < bags.size(); ++b) {
    const Bag& bag = bags[b];
    std::vector<bool> chosen(bag.instances.size(), false);
    for (int i : splits[b].positive) chosen.at(static_cast<std::size_t>(i)) = true;
    for (std::size_t i = 0; i < bag.instances.size(); ++i) {
      const std::size_t line = i < bag.corpus_index.size() ? bag.corpus_index[i] : sidecar.size();
      if (line >= sidecar.size()) {
        throw DataError("selector_accuracy: sidecar has no entry for corpus line " + std::to_string(line + 1));
      }
      const bool gold = sidecar[line];
      ++s.total;
      s.gold += gold ? 1 : 0;
      s.selected += chosen[i] ? 1 : 0;
      s.true_positive += (gold && chosen[i]) ? 1 : 0;
    }
  }
  s.precision = s.selected > 0 ? static_cast<double>(s.true_positive) / static_cast<double>(s.selected) : 0.0;
  s.recall = s.gold > 0 ? static_cast<double>(s.true_positive) / static_cast<double>(s.gold) : 0.0;
  s.f1 = s.precision + s.recall > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

json ablation_table(const std::vector<AblationRun>& rows) {
  json table = json::array();
  for (const auto& r : rows) table.push_back(to_json(r.metrics, r.name));
  return table;
}

}  // namespace purex
