#pragma once

// The full model: encoder, extractor heads and (optionally) the selector,
// plus the glue that runs them over one bag.

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "purex/checkpoint.hpp"
#include "purex/config.hpp"
#include "purex/corpus.hpp"
#include "purex/encoder.hpp"
#include "purex/extractor.hpp"
#include "purex/selector.hpp"

namespace purex {

template <typename Scalar>
struct Model {
  TrainConfig config;
  EncoderParams<Scalar> encoder;
  ExtractorParams<Scalar> extractor;
  std::optional<Selector<Scalar>> selector;  // absent for Baseline-AVE

  int n_relations() const { return extractor.n_relations(); }

  /// Eval-mode (no dropout) sentence embeddings.
  std::vector<Vector<Scalar>> encode_bag(const Bag& bag, EncoderDiagnostics* diag = nullptr) const {
    std::vector<Vector<Scalar>> out;
    out.reserve(bag.instances.size());
    for (const auto& inst : bag.instances) {
      out.push_back(encode_sentence<Scalar>(inst, encoder, config.encoder, false, nullptr, nullptr, diag));
    }
    return out;
  }

  /// Greedy split under `relation`; without a selector every sentence is positive.
  SelectionResult split(const std::vector<Vector<Scalar>>& sentences, int relation) const {
    if (!selector) {
      SelectionResult all;
      for (std::size_t i = 0; i < sentences.size(); ++i) all.positive.push_back(static_cast<int>(i));
      return all;
    }
    return select_bag(sentences, relation, *selector, ActMode::greedy()).split;
  }

  Prediction predict(const std::vector<Vector<Scalar>>& sentences) const {
    return purex::predict<Scalar>(
        sentences, [&](int k) { return split(sentences, k); }, extractor, config.alpha,
        config.score_head());
  }

  Prediction predict(const Bag& bag) const { return predict(encode_bag(bag)); }
};

template <typename Scalar>
Model<Scalar> init_model(const TrainConfig& cfg, EmbeddingTable<Scalar> table, int n_relations, Rng& rng) {
  cfg.validate();
  if (n_relations < 1) throw ConfigError("relation inventory is empty");
  Model<Scalar> m;
  m.config = cfg;
  m.encoder = init_encoder(cfg.encoder, std::move(table), rng);
  const Index enc_dim = cfg.encoder.output_dim();
  m.extractor = init_extractor<Scalar>(n_relations, enc_dim, cfg.uses_unlabeled_head(), rng);
  if (cfg.uses_selector()) {
    m.selector = init_selector<Scalar>(cfg.effective_selector(), n_relations, enc_dim, rng);
  }
  return m;
}

template <typename Scalar>
using ParameterList = std::vector<std::pair<std::string, Parameter<Scalar>*>>;

/// Every allocated parameter under a stable, unique name.
template <typename Scalar>
ParameterList<Scalar> named_parameters(Model<Scalar>& m) {
  ParameterList<Scalar> out = {
      {"encoder/word", &m.encoder.table.word},
      {"encoder/pos_head", &m.encoder.table.pos_head},
      {"encoder/pos_tail", &m.encoder.table.pos_tail},
      {"encoder/filters", &m.encoder.filters},
      {"extractor/W", &m.extractor.W},
      {"extractor/b", &m.extractor.b},
  };
  if (m.extractor.W_unl) {
    out.emplace_back("extractor/W_unl", &*m.extractor.W_unl);
    out.emplace_back("extractor/b_unl", &*m.extractor.b_unl);
  }
  if (m.selector) {
    out.emplace_back("selector/relation", &m.selector->relation);
    out.emplace_back("selector/W1", &m.selector->net.W1);
    out.emplace_back("selector/b1", &m.selector->net.b1);
    out.emplace_back("selector/W2", &m.selector->net.W2);
    out.emplace_back("selector/b2", &m.selector->net.b2);
  }
  return out;
}

template <typename Scalar>
std::vector<std::pair<std::string, const Parameter<Scalar>*>> named_parameters(const Model<Scalar>& m) {
  std::vector<std::pair<std::string, const Parameter<Scalar>*>> out;
  for (auto& [name, p] : named_parameters(const_cast<Model<Scalar>&>(m))) out.emplace_back(name, p);
  return out;
}

/// Writes parameter values under `prefix`; with `optimizer`, Adam moments too.
template <typename Scalar>
void put_model(Checkpoint& ckpt, const Model<Scalar>& m, const std::string& prefix, bool optimizer,
               nlohmann::json* step_counts = nullptr) {
  for (const auto& [name, p] : named_parameters(m)) {
    ckpt.put(prefix + name, p->value);
    if (optimizer) {
      ckpt.put("adam_m/" + name, p->adam_m);
      ckpt.put("adam_v/" + name, p->adam_v);
      if (step_counts) (*step_counts)[name] = p->step_count;
    }
  }
}

/// Rebuilds a model whose shapes come from the stored tensors.
template <typename Scalar>
Model<Scalar> get_model(const Checkpoint& ckpt, const TrainConfig& cfg, const std::string& prefix,
                        bool optimizer, const nlohmann::json* step_counts = nullptr) {
  Model<Scalar> m;
  m.config = cfg;
  m.encoder.table.pos_clip = cfg.encoder.pos_clip;
  if (cfg.uses_unlabeled_head()) {
    m.extractor.W_unl.emplace();
    m.extractor.b_unl.emplace();
  }
  if (cfg.uses_selector()) {
    m.selector.emplace();
    m.selector->config = cfg.effective_selector();
    m.selector->enc_dim = cfg.encoder.output_dim();
  }
  for (auto& [name, p] : named_parameters(m)) {
    *p = Parameter<Scalar>(ckpt.get<Scalar>(prefix + name));
    if (optimizer) {
      p->adam_m = ckpt.get<Scalar>("adam_m/" + name);
      p->adam_v = ckpt.get<Scalar>("adam_v/" + name);
      if (step_counts && step_counts->contains(name)) p->step_count = step_counts->at(name).template get<std::int64_t>();
    }
  }
  if (m.encoder.table.word.cols() != cfg.encoder.d_word ||
      m.encoder.filters.cols() != static_cast<Index>(cfg.encoder.window) * cfg.encoder.input_dim() ||
      m.extractor.W.cols() != cfg.encoder.output_dim()) {
    throw DataError("checkpoint tensors do not match the stored configuration");
  }
  return m;
}

}  // namespace purex
