#pragma once

#include <cstdint>
#include <string>

#include "json.hpp"
#include "purex/encoder.hpp"
#include "purex/extractor.hpp"
#include "purex/selector.hpp"

namespace purex {

enum class Ablation { PU, PU_COMB, PU_COMB_UNL, BaselineAVE, BaselineSR };

const char* to_string(Ablation a);
Ablation parse_ablation(const std::string& name);

struct TrainConfig {
  int epochs = 30;  // total budget, warm-start epochs included
  int warm_start_epochs = 1;
  int batch_size = 50;
  double lr = 0.001;
  double alpha = 0.7;
  double beta = 0.1;
  std::uint64_t seed = 1;
  Ablation ablation = Ablation::PU;
  EncoderConfig encoder;  // dropout (0.5) lives here
  SelectorConfig selector;
  double epsilon_start = 0.5;
  double epsilon_end = 0.05;
  double validation_fraction = 0.1;
  bool exclude_na_rival = false;
  // Score the bag term's rival relation on the split selected under its own
  // query instead of the label's split.
  bool rival_per_query = true;

  bool uses_selector() const { return ablation != Ablation::BaselineAVE; }
  bool uses_unlabeled_head() const {
    return ablation == Ablation::PU || ablation == Ablation::PU_COMB || ablation == Ablation::BaselineSR;
  }
  ScoreHead score_head() const { return uses_unlabeled_head() ? ScoreHead::Combined : ScoreHead::PositiveOnly; }
  LossConfig loss_config() const;
  SelectorConfig effective_selector() const;
  AdamConfig adam() const { return AdamConfig{lr, 0.9, 0.999, 1e-8}; }

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& cfg);

/// Missing keys keep their defaults; unknown keys are rejected.
TrainConfig train_config_from_json(const nlohmann::json& doc);

}  // namespace purex
