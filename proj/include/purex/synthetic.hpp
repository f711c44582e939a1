#pragma once

// Synthetic distant-supervision corpora with planted label noise. Every
// sentence is generated from the template family of one relation (or NA)
// and remembers whether that family matches its bag's distant label.

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "purex/corpus.hpp"

namespace purex {

struct SyntheticSpec {
  int n_relations = 5;  // excluding NA
  int n_entity_pairs = 2000;
  int bag_size_min = 3;
  int bag_size_max = 8;
  double noise_rate = 0.3;
  int vocab_size = 400;  // filler words
  int n_entities = 800;
  int templates_per_relation = 4;
  int triggers_per_relation = 6;
  double na_bag_fraction = 0.3;
  // Share of noise sentences in relation bags taken from another relation's
  // templates; the rest come from NA templates. NA bags always draw noise from
  // relation templates.
  double noise_relation_share = 0.2;
  // Probability that a filler slot carries a trigger word of a random family.
  double distractor_rate = 0.05;
  // Probability that an NA-template sentence opens with a relation trigger
  // placed before both entities.
  double hard_negative_rate = 0.0;
  double test_fraction = 0.2;
  std::uint64_t seed = 1;
};

/// Reads a spec; unknown or ill-typed keys and out-of-range values raise
/// ConfigError naming the field.
SyntheticSpec parse_synthetic_spec(const nlohmann::json& doc);
nlohmann::json to_json(const SyntheticSpec& spec);

struct SyntheticRecord {
  std::string head;
  std::string tail;
  std::string relation;  // distant label of the bag
  std::string family;    // relation whose template generated the sentence
  std::vector<std::string> tokens;
  int head_pos = 0;
  int tail_pos = 0;
  bool is_true_positive = false;
  int bag = 0;
  bool test = false;
};

struct SyntheticCorpus {
  std::vector<std::string> relations;  // index 0 is NA
  std::vector<SyntheticRecord> records;
  int n_bags = 0;
};

SyntheticCorpus gen_synthetic(const SyntheticSpec& spec);

nlohmann::json corpus_line(const SyntheticRecord& record);
nlohmann::json sidecar_line(const SyntheticRecord& record);

struct SyntheticFiles {
  std::string train;
  std::string train_sidecar;
  std::string test;
  std::string test_sidecar;
  std::string relations;
  std::size_t train_lines = 0;
  std::size_t test_lines = 0;
};

/// Writes train/test corpora, their sidecars and relations.json into `dir`.
SyntheticFiles write_synthetic(const SyntheticCorpus& corpus, const std::string& dir);

std::vector<bool> load_sidecar(const std::string& path);

struct SyntheticSplit {
  std::vector<SentenceInstance> instances;
  std::vector<bool> sidecar;  // parallel to instances
};

/// One side (train or test) of the corpus as loaded instances, without the
/// round trip through files. Tokens are added to `vocab`.
SyntheticSplit synthetic_split(const SyntheticCorpus& corpus, bool test, Vocabulary& vocab);

}  // namespace purex
