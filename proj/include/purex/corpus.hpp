#pragma once

// Corpus ingestion: JSON-lines sentences, relation inventory, vocabulary,
// bag grouping and word/position embedding tables.

#include <compare>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "purex/kernel.hpp"

namespace purex {

struct SentenceInstance {
  std::string head;  // entity names; together they form the bag key
  std::string tail;
  std::vector<int> tokens;
  int head_pos = 0;
  int tail_pos = 0;
  int relation_id = 0;
};

struct BagKey {
  std::string head;
  std::string tail;
  auto operator<=>(const BagKey&) const = default;
};

struct Bag {
  BagKey key;
  int distant_label = 0;
  std::vector<SentenceInstance> instances;
  std::vector<std::size_t> corpus_index;  // position of each instance in the build_bags input
};

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;

  Vocabulary();
  static Vocabulary from_tokens(const std::vector<std::string>& tokens);

  int add(const std::string& token);
  int id(const std::string& token) const;  // kUnk when absent
  bool contains(const std::string& token) const { return index_.count(token) != 0; }
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  int size() const { return static_cast<int>(tokens_.size()); }
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

class RelationInventory {
 public:
  RelationInventory() = default;
  explicit RelationInventory(std::vector<std::string> names);
  static RelationInventory load(const std::string& path);

  std::optional<int> id(const std::string& name) const;
  const std::string& name(int id) const { return names_.at(static_cast<std::size_t>(id)); }
  int size() const { return static_cast<int>(names_.size()); }
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::vector<std::string> names_;
  std::map<std::string, int> index_;
};

enum class CorpusFormat { JsonLines };

struct LoadOptions {
  bool strict_relations = false;   // unknown relation name is an error instead of NA
  bool grow_vocabulary = true;     // false: unseen tokens map to UNK
};

struct LoadReport {
  std::size_t lines = 0;
  std::size_t loaded = 0;
  std::size_t skipped = 0;
  std::size_t unknown_relations = 0;
  std::vector<std::string> problems;  // one entry per skipped line
};

struct Corpus {
  std::vector<SentenceInstance> instances;
  LoadReport report;
};

Corpus load_corpus(const std::string& path, CorpusFormat format,
                   const RelationInventory& relations, Vocabulary& vocab,
                   const LoadOptions& options = {});
Corpus parse_corpus(std::istream& in, const RelationInventory& relations, Vocabulary& vocab,
                    const LoadOptions& options = {});

/// Groups by (head, tail, relation); bags appear in order of first occurrence.
std::vector<Bag> build_bags(const std::vector<SentenceInstance>& instances);

struct RelativePositions {
  std::vector<int> head;
  std::vector<int> tail;
};

/// Clipped token-to-entity distances shifted into [0, 2*pos_clip]. `length`
/// may exceed the sentence (padding rows); 0 means the token count.
RelativePositions relative_positions(const SentenceInstance& instance, int pos_clip,
                                     std::size_t length = 0);

inline int position_index(int token, int entity, int pos_clip) {
  return std::clamp(token - entity, -pos_clip, pos_clip) + pos_clip;
}

// ---------------------------------------------------------------------------
// embeddings

template <typename Scalar>
struct EmbeddingTable {
  Parameter<Scalar> word;      // V x d_word, PAD row fixed at zero
  Parameter<Scalar> pos_head;  // (2*pos_clip + 2) x d_pos
  Parameter<Scalar> pos_tail;
  int pos_clip = 30;

  int d_word() const { return static_cast<int>(word.cols()); }
  int d_pos() const { return static_cast<int>(pos_head.cols()); }
};

inline constexpr double kEmbeddingInitBound = 0.25;

struct EmbeddingLoadReport {
  int from_file = 0;
  int random = 0;
};

template <typename Scalar>
EmbeddingTable<Scalar> random_embeddings(int vocab_size, int d_word, int d_pos, int pos_clip,
                                         Rng& rng) {
  EmbeddingTable<Scalar> table;
  table.pos_clip = pos_clip;
  Matrix<Scalar> words = uniform_matrix<Scalar>(vocab_size, d_word, kEmbeddingInitBound, rng);
  words.row(Vocabulary::kPad).setZero();
  table.word = Parameter<Scalar>(std::move(words));
  const Index pos_rows = 2 * pos_clip + 2;
  table.pos_head = Parameter<Scalar>(uniform_matrix<Scalar>(pos_rows, d_pos, kEmbeddingInitBound, rng));
  table.pos_tail = Parameter<Scalar>(uniform_matrix<Scalar>(pos_rows, d_pos, kEmbeddingInitBound, rng));
  return table;
}

struct WordVectors {
  int dim = 0;
  std::unordered_map<std::string, std::vector<double>> vectors;
};

// Text format `word v1 ... vd`; an optional word2vec "count dim" header line
// is recognised and skipped.
WordVectors read_word_vectors(const std::string& path);

/// Random table (see random_embeddings) with file vectors copied over the
/// rows of vocabulary words present in the file.
template <typename Scalar>
EmbeddingTable<Scalar> load_embeddings(const std::string& path, const Vocabulary& vocab,
                                       int d_word, int d_pos, int pos_clip, Rng& rng,
                                       EmbeddingLoadReport* report = nullptr) {
  const WordVectors file = read_word_vectors(path);
  if (!file.vectors.empty() && file.dim != d_word) {
    throw ConfigError("embedding file dimension " + std::to_string(file.dim) +
                      " does not match configured d_word " + std::to_string(d_word));
  }
  EmbeddingTable<Scalar> table = random_embeddings<Scalar>(vocab.size(), d_word, d_pos, pos_clip, rng);
  EmbeddingLoadReport counts;
  for (int id = 0; id < vocab.size(); ++id) {
    if (id == Vocabulary::kPad) continue;
    const auto it = file.vectors.find(vocab.token(id));
    if (it == file.vectors.end()) {
      if (id != Vocabulary::kUnk) ++counts.random;
      continue;
    }
    ++counts.from_file;
    for (int c = 0; c < d_word; ++c) {
      table.word.value(id, c) = static_cast<Scalar>(it->second[static_cast<std::size_t>(c)]);
    }
  }
  if (report) *report = counts;
  return table;
}

}  // namespace purex
