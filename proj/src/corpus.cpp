#include "purex/corpus.hpp"

#include <fstream>
#include <tuple>
#include <sstream>

#include "json.hpp"

namespace purex {

using nlohmann::json;

Vocabulary::Vocabulary() {
  add("<pad>");
  add("<unk>");
}

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& tokens) {
  if (tokens.size() < 2 || tokens[0] != "<pad>" || tokens[1] != "<unk>") {
    throw DataError("vocabulary must start with <pad>, <unk>");
  }
  Vocabulary vocab;
  for (std::size_t i = 2; i < tokens.size(); ++i) {
    if (vocab.contains(tokens[i])) throw DataError("duplicate vocabulary entry: " + tokens[i]);
    vocab.add(tokens[i]);
  }
  return vocab;
}

int Vocabulary::add(const std::string& token) {
  const auto [it, inserted] = index_.emplace(token, size());
  if (inserted) tokens_.push_back(token);
  return it->second;
}

int Vocabulary::id(const std::string& token) const {
  const auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

RelationInventory::RelationInventory(std::vector<std::string> names) : names_(std::move(names)) {
  if (names_.empty() || names_[0] != "NA") {
    throw DataError("relation inventory must be non-empty with \"NA\" at index 0");
  }
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (!index_.emplace(names_[i], static_cast<int>(i)).second) {
      throw DataError("duplicate relation name: " + names_[i]);
    }
  }
}

RelationInventory RelationInventory::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open relation inventory " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw DataError("relation inventory " + path + ": " + e.what());
  }
  if (!doc.is_array()) throw DataError("relation inventory " + path + " must be a JSON array");
  std::vector<std::string> names;
  for (const auto& item : doc) {
    if (!item.is_string()) throw DataError("relation inventory " + path + ": non-string entry");
    names.push_back(item.get<std::string>());
  }
  return RelationInventory(std::move(names));
}

std::optional<int> RelationInventory::id(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

namespace {

// Returns an empty string on success, otherwise why the line was rejected.
std::string parse_instance(const std::string& line, const RelationInventory& relations,
                           Vocabulary& vocab, const LoadOptions& options,
                           SentenceInstance& out, bool& unknown_relation) {
  json obj = json::parse(line, nullptr, /*allow_exceptions=*/false);
  if (obj.is_discarded()) return "invalid JSON";
  if (!obj.is_object()) return "not a JSON object";
  for (const char* field : {"head", "tail", "relation", "tokens", "head_pos", "tail_pos"}) {
    if (!obj.contains(field)) return std::string("missing field ") + field;
  }
  if (!obj["head"].is_string() || !obj["tail"].is_string() || !obj["relation"].is_string()) {
    return "head, tail and relation must be strings";
  }
  if (!obj["tokens"].is_array()) return "tokens must be an array";
  if (!obj["head_pos"].is_number_integer() || !obj["tail_pos"].is_number_integer()) {
    return "head_pos and tail_pos must be integers";
  }
  std::vector<std::string> tokens;
  for (const auto& t : obj["tokens"]) {
    if (!t.is_string()) return "tokens must be strings";
    tokens.push_back(t.get<std::string>());
  }
  const auto head_pos = obj["head_pos"].get<long long>();
  const auto tail_pos = obj["tail_pos"].get<long long>();
  const auto n = static_cast<long long>(tokens.size());
  if (head_pos < 0 || head_pos >= n || tail_pos < 0 || tail_pos >= n) {
    return "entity position out of range";
  }
  if (head_pos == tail_pos) return "head_pos equals tail_pos";
  out.head = obj["head"].get<std::string>();
  out.tail = obj["tail"].get<std::string>();
  if (tokens[static_cast<std::size_t>(head_pos)] != out.head) return "head entity token not found";
  if (tokens[static_cast<std::size_t>(tail_pos)] != out.tail) return "tail entity token not found";

  const std::string relation = obj["relation"].get<std::string>();
  const auto rel = relations.id(relation);
  unknown_relation = !rel.has_value();
  if (!rel && options.strict_relations) {
    throw DataError("relation \"" + relation + "\" is not in the relation inventory");
  }
  out.relation_id = rel.value_or(0);
  out.head_pos = static_cast<int>(head_pos);
  out.tail_pos = static_cast<int>(tail_pos);
  out.tokens.clear();
  out.tokens.reserve(tokens.size());
  for (const auto& t : tokens) {
    out.tokens.push_back(options.grow_vocabulary ? vocab.add(t) : vocab.id(t));
  }
  return {};
}

}  // namespace

Corpus parse_corpus(std::istream& in, const RelationInventory& relations, Vocabulary& vocab,
                    const LoadOptions& options) {
  Corpus corpus;
  std::string line;
  while (std::getline(in, line)) {
    ++corpus.report.lines;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    SentenceInstance instance;
    bool unknown = false;
    const std::string problem = parse_instance(line, relations, vocab, options, instance, unknown);
    if (!problem.empty()) {
      ++corpus.report.skipped;
      corpus.report.problems.push_back("line " + std::to_string(corpus.report.lines) + ": " +
                                       problem);
      continue;
    }
    if (unknown) ++corpus.report.unknown_relations;
    corpus.instances.push_back(std::move(instance));
    ++corpus.report.loaded;
  }
  return corpus;
}

Corpus load_corpus(const std::string& path, CorpusFormat format,
                   const RelationInventory& relations, Vocabulary& vocab,
                   const LoadOptions& options) {
  if (format != CorpusFormat::JsonLines) throw ConfigError("unsupported corpus format");
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus " + path);
  return parse_corpus(in, relations, vocab, options);
}

std::vector<Bag> build_bags(const std::vector<SentenceInstance>& instances) {
  std::vector<Bag> bags;
  std::map<std::tuple<std::string, std::string, int>, std::size_t> slot;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const auto& inst = instances[i];
    const auto key = std::make_tuple(inst.head, inst.tail, inst.relation_id);
    auto [it, inserted] = slot.emplace(key, bags.size());
    if (inserted) {
      Bag bag;
      bag.key = {inst.head, inst.tail};
      bag.distant_label = inst.relation_id;
      bags.push_back(std::move(bag));
    }
    bags[it->second].instances.push_back(inst);
    bags[it->second].corpus_index.push_back(i);
  }
  return bags;
}

RelativePositions relative_positions(const SentenceInstance& instance, int pos_clip,
                                     std::size_t length) {
  if (length == 0) length = instance.tokens.size();
  RelativePositions out;
  out.head.resize(length);
  out.tail.resize(length);
  for (std::size_t i = 0; i < length; ++i) {
    const int token = static_cast<int>(i);
    out.head[i] = position_index(token, instance.head_pos, pos_clip);
    out.tail[i] = position_index(token, instance.tail_pos, pos_clip);
  }
  return out;
}

WordVectors read_word_vectors(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open embedding file " + path);
  WordVectors out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    std::string word;
    if (!(fields >> word)) continue;
    std::vector<double> values;
    double v = 0.0;
    while (fields >> v) values.push_back(v);
    if (!fields.eof()) throw DataError(path + ":" + std::to_string(line_no) + ": bad number");
    if (line_no == 1 && values.size() == 1 &&
        word.find_first_not_of("0123456789") == std::string::npos) {
      continue;  // word2vec header "count dim"
    }
    if (values.empty()) throw DataError(path + ":" + std::to_string(line_no) + ": no values");
    if (out.dim == 0) out.dim = static_cast<int>(values.size());
    if (static_cast<int>(values.size()) != out.dim) {
      throw ConfigError(path + ":" + std::to_string(line_no) + ": vector has " +
                        std::to_string(values.size()) + " values, expected " +
                        std::to_string(out.dim));
    }
    out.vectors.emplace(word, std::move(values));
  }
  return out;
}

}  // namespace purex
