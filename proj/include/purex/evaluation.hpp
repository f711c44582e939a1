#pragma once

// Held-out evaluation: tuple rankings, PR curves, P@N, selector accuracy
// against synthetic ground truth, and the ablation comparison.

#include <map>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"
#include "purex/corpus.hpp"
#include "purex/trainer.hpp"

namespace purex {

struct ScoredTuple {
  std::string head;
  std::string tail;
  int relation = 0;
  double score = 0.0;
};

/// Descending by score; equal scores ordered by (head, tail, relation).
using PredictionList = std::vector<ScoredTuple>;

void sort_predictions(PredictionList& preds);

class GoldSet {
 public:
  void add(const std::string& head, const std::string& tail, int relation);
  bool contains(const ScoredTuple& t) const { return tuples_.count({t.head, t.tail, t.relation}) != 0; }
  std::size_t size() const { return tuples_.size(); }

 private:
  std::set<std::tuple<std::string, std::string, int>> tuples_;
};

/// Facts of the non-NA bags.
GoldSet gold_from_bags(const std::vector<Bag>& bags);

struct PrPoint {
  double recall = 0.0;
  double precision = 0.0;
};

struct PrCurve {
  std::vector<PrPoint> points;  // one per cutoff
  double auc = 0.0;
};

/// Prefix sweep over sorted predictions. The area integrates precision over
/// recall with the trapezoid rule, holding the first precision back to recall 0.
PrCurve pr_curve(const PredictionList& preds, const GoldSet& gold);
double precision_at_n(const PredictionList& preds, const GoldSet& gold, std::size_t n);

void write_pr_csv(const PrCurve& curve, const std::string& path);

struct HeldOutMetrics {
  PrCurve curve;
  double p_at_100 = 0.0;
  double p_at_200 = 0.0;
  double p_at_300 = 0.0;
  std::size_t n_predictions = 0;
  std::size_t n_gold = 0;
};

HeldOutMetrics held_out_metrics(const PredictionList& preds, const GoldSet& gold);
nlohmann::json to_json(const HeldOutMetrics& m, const std::string& name = {});

struct BagPrediction {
  BagKey key;
  int label = 0;
  std::vector<double> scores;  // per relation
};

template <typename Scalar>
std::vector<BagPrediction> predict_bags(const Model<Scalar>& model, const std::vector<Bag>& bags) {
  std::vector<BagPrediction> out;
  out.reserve(bags.size());
  for (const Bag& bag : bags) out.push_back({bag.key, bag.distant_label, model.predict(bag).scores});
  return out;
}

/// Entity-relation tuples without NA; a tuple scores the maximum over its bags.
PredictionList tuple_predictions(const std::vector<BagPrediction>& bags);

/// JSON lines {bag_key, relation, score}, descending by score, NA left out.
std::vector<nlohmann::json> prediction_dump(const std::vector<BagPrediction>& bags,
                                            const RelationInventory& relations);
/// Tuples from a prediction dump.
PredictionList read_prediction_dump(std::istream& in, const RelationInventory& relations);

struct SelectionStats {
  long long selected = 0;       // sentences the agent put in B+
  long long true_positive = 0;  // selected and marked true in the sidecar
  long long gold = 0;           // sentences marked true
  long long total = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Positive-action precision/recall with the sidecar's is_true_positive as
/// gold. `sidecar` is indexed like Bag::corpus_index.
SelectionStats selector_accuracy(const std::vector<Bag>& bags, const std::vector<SelectionResult>& splits,
                                 const std::vector<bool>& sidecar);

template <typename Scalar>
std::vector<SelectionResult> greedy_splits(const Model<Scalar>& model, const std::vector<Bag>& bags) {
  std::vector<SelectionResult> out;
  out.reserve(bags.size());
  for (const Bag& bag : bags) out.push_back(model.split(model.encode_bag(bag), bag.distant_label));
  return out;
}

struct AblationRun {
  std::string name;
  HeldOutMetrics metrics;
  std::vector<EpochLog> history;
};

template <typename Scalar>
struct TrainedRun {
  AblationRun run;
  Model<Scalar> model;  // best-epoch snapshot
};

/// Trains one configuration from scratch and scores it on `test`.
template <typename Scalar>
TrainedRun<Scalar> train_and_evaluate(const TrainConfig& cfg, const std::vector<Bag>& train,
                                      const std::vector<Bag>& test, const Vocabulary& vocab,
                                      int n_relations) {
  Trainer<Scalar> trainer(cfg, build_model<Scalar>(cfg, vocab, n_relations), train);
  trainer.train();
  const Model<Scalar>& best = trainer.best_model();
  AblationRun run;
  run.name = to_string(cfg.ablation);
  run.metrics = held_out_metrics(tuple_predictions(predict_bags(best, test)), gold_from_bags(test));
  run.history = trainer.history();
  return {std::move(run), best};
}

/// Every config under its own seed field; writes `<name>.pr.csv` per config
/// into `out_dir` when it is non-empty.
template <typename Scalar>
std::vector<AblationRun> run_ablation_suite(const std::vector<TrainConfig>& configs,
                                            const std::vector<Bag>& train, const std::vector<Bag>& test,
                                            const Vocabulary& vocab, int n_relations,
                                            const std::string& out_dir = {}) {
  std::vector<AblationRun> rows;
  for (const TrainConfig& cfg : configs) {
    rows.push_back(train_and_evaluate<Scalar>(cfg, train, test, vocab, n_relations).run);
    if (!out_dir.empty()) write_pr_csv(rows.back().metrics.curve, out_dir + "/" + rows.back().name + ".pr.csv");
  }
  return rows;
}

nlohmann::json ablation_table(const std::vector<AblationRun>& rows);

}  // namespace purex
