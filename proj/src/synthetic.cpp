#include "purex/synthetic.hpp"

#include <filesystem>
#include <fstream>
#include <set>

#include "purex/errors.hpp"
#include "purex/rng.hpp"

namespace purex {

using nlohmann::json;

namespace {

template <typename T>
void read_field(const json& doc, const char* name, T& out) {
  if (!doc.contains(name)) return;
  const json& v = doc.at(name);
  if constexpr (std::is_same_v<T, double>) {
    if (!v.is_number()) throw ConfigError(std::string("synthetic spec: ") + name + " must be a number");
  } else {
    if (!v.is_number_integer()) {
      throw ConfigError(std::string("synthetic spec: ") + name + " must be an integer");
    }
  }
  out = v.get<T>();
}

void require(bool ok, const char* field, const std::string& why) {
  if (!ok) throw ConfigError(std::string("synthetic spec: ") + field + " " + why);
}

enum class Slot { Head, Tail, Trigger, Filler };

struct Template {
  std::vector<Slot> slots;
};

// NA templates carry no trigger slot; relation templates carry one, usually
// between the entities.
Template make_template(bool relation_family, Rng& rng) {
  Template t;
  const bool head_first = rng.bernoulli(0.75);
  const bool trigger_outside = relation_family && rng.bernoulli(0.25);
  const std::size_t pre = rng.index(3);
  const std::size_t mid = 1 + rng.index(4);
  const std::size_t post = rng.index(4);
  for (std::size_t i = 0; i < pre; ++i) t.slots.push_back(Slot::Filler);
  t.slots.push_back(head_first ? Slot::Head : Slot::Tail);
  const std::size_t trigger_at = rng.index(mid);
  for (std::size_t i = 0; i < mid; ++i) {
    const bool trig = relation_family && !trigger_outside && i == trigger_at;
    t.slots.push_back(trig ? Slot::Trigger : Slot::Filler);
  }
  t.slots.push_back(head_first ? Slot::Tail : Slot::Head);
  if (trigger_outside) t.slots.push_back(Slot::Trigger);
  for (std::size_t i = 0; i < post; ++i) t.slots.push_back(Slot::Filler);
  return t;
}

std::string trigger_word(int family, std::size_t k) {
  return "r" + std::to_string(family) + "_t" + std::to_string(k);
}

}  // namespace

SyntheticSpec parse_synthetic_spec(const json& doc) {
  if (!doc.is_object()) throw ConfigError("synthetic spec must be a JSON object");
  static const std::set<std::string> known = {
      "n_relations",      "n_entity_pairs", "bag_size_min",         "bag_size_max",
      "noise_rate",       "vocab_size",     "n_entities",           "templates_per_relation",
      "triggers_per_relation", "na_bag_fraction", "noise_relation_share", "distractor_rate", "hard_negative_rate",
      "test_fraction",    "seed"};
  for (const auto& item : doc.items()) {
    if (!known.count(item.key())) throw ConfigError("synthetic spec: unknown field " + item.key());
  }
  SyntheticSpec spec;
  read_field(doc, "n_relations", spec.n_relations);
  read_field(doc, "n_entity_pairs", spec.n_entity_pairs);
  read_field(doc, "bag_size_min", spec.bag_size_min);
  read_field(doc, "bag_size_max", spec.bag_size_max);
  read_field(doc, "noise_rate", spec.noise_rate);
  read_field(doc, "vocab_size", spec.vocab_size);
  read_field(doc, "n_entities", spec.n_entities);
  read_field(doc, "templates_per_relation", spec.templates_per_relation);
  read_field(doc, "triggers_per_relation", spec.triggers_per_relation);
  read_field(doc, "na_bag_fraction", spec.na_bag_fraction);
  read_field(doc, "noise_relation_share", spec.noise_relation_share);
  read_field(doc, "distractor_rate", spec.distractor_rate);
  read_field(doc, "hard_negative_rate", spec.hard_negative_rate);
  read_field(doc, "test_fraction", spec.test_fraction);
  if (doc.contains("seed")) {
    if (!doc["seed"].is_number_integer()) throw ConfigError("synthetic spec: seed must be an integer");
    spec.seed = doc["seed"].get<std::uint64_t>();
  }

  require(spec.n_relations >= 1, "n_relations", "must be >= 1");
  require(spec.n_entity_pairs >= 1, "n_entity_pairs", "must be >= 1");
  require(spec.bag_size_min >= 1 && spec.bag_size_max >= spec.bag_size_min, "bag_size_min",
          "must satisfy 1 <= bag_size_min <= bag_size_max");
  require(spec.noise_rate >= 0.0 && spec.noise_rate < 1.0, "noise_rate", "must lie in [0, 1)");
  require(spec.vocab_size >= 1, "vocab_size", "must be >= 1");
  require(spec.n_entities >= 2, "n_entities", "must be >= 2");
  require(static_cast<double>(spec.n_entities) * (spec.n_entities - 1) >= spec.n_entity_pairs,
          "n_entities", "too small for the requested number of distinct pairs");
  require(spec.templates_per_relation >= 1, "templates_per_relation", "must be >= 1");
  require(spec.triggers_per_relation >= 1, "triggers_per_relation", "must be >= 1");
  require(spec.na_bag_fraction >= 0.0 && spec.na_bag_fraction <= 1.0, "na_bag_fraction",
          "must lie in [0, 1]");
  require(spec.noise_relation_share >= 0.0 && spec.noise_relation_share <= 1.0,
          "noise_relation_share", "must lie in [0, 1]");
  require(spec.distractor_rate >= 0.0 && spec.distractor_rate < 1.0, "distractor_rate",
          "must lie in [0, 1)");
  require(spec.hard_negative_rate >= 0.0 && spec.hard_negative_rate <= 1.0, "hard_negative_rate",
          "must lie in [0, 1]");
  require(spec.test_fraction >= 0.0 && spec.test_fraction < 1.0, "test_fraction",
          "must lie in [0, 1)");
  return spec;
}

json to_json(const SyntheticSpec& spec) {
  return json{{"n_relations", spec.n_relations},
              {"n_entity_pairs", spec.n_entity_pairs},
              {"bag_size_min", spec.bag_size_min},
              {"bag_size_max", spec.bag_size_max},
              {"noise_rate", spec.noise_rate},
              {"vocab_size", spec.vocab_size},
              {"n_entities", spec.n_entities},
              {"templates_per_relation", spec.templates_per_relation},
              {"triggers_per_relation", spec.triggers_per_relation},
              {"na_bag_fraction", spec.na_bag_fraction},
              {"noise_relation_share", spec.noise_relation_share},
              {"distractor_rate", spec.distractor_rate},
              {"hard_negative_rate", spec.hard_negative_rate},
              {"test_fraction", spec.test_fraction},
              {"seed", spec.seed}};
}

SyntheticCorpus gen_synthetic(const SyntheticSpec& spec) {
  const Rng root(spec.seed);
  Rng layout = root.split(~0ULL);

  const int families = spec.n_relations + 1;
  std::vector<std::vector<Template>> templates(static_cast<std::size_t>(families));
  for (int f = 0; f < families; ++f) {
    for (int k = 0; k < spec.templates_per_relation; ++k) {
      templates[static_cast<std::size_t>(f)].push_back(make_template(f != 0, layout));
    }
  }

  std::vector<std::pair<int, int>> pairs;
  std::set<std::pair<int, int>> seen;
  while (static_cast<int>(pairs.size()) < spec.n_entity_pairs) {
    const int h = static_cast<int>(layout.index(static_cast<std::size_t>(spec.n_entities)));
    const int t = static_cast<int>(layout.index(static_cast<std::size_t>(spec.n_entities)));
    if (h == t || !seen.emplace(h, t).second) continue;
    pairs.emplace_back(h, t);
  }

  std::vector<int> order(static_cast<std::size_t>(spec.n_entity_pairs));
  for (int i = 0; i < spec.n_entity_pairs; ++i) order[static_cast<std::size_t>(i)] = i;
  layout.shuffle(order);
  const auto n_test = static_cast<std::size_t>(spec.test_fraction * spec.n_entity_pairs + 0.5);
  std::vector<bool> is_test(order.size(), false);
  for (std::size_t i = 0; i < n_test; ++i) is_test[static_cast<std::size_t>(order[i])] = true;

  SyntheticCorpus out;
  out.n_bags = spec.n_entity_pairs;
  out.relations.push_back("NA");
  for (int r = 1; r <= spec.n_relations; ++r) out.relations.push_back("rel_" + std::to_string(r));

  for (int b = 0; b < spec.n_entity_pairs; ++b) {
    Rng rng = root.split(static_cast<std::uint64_t>(b));
    const std::string head = "ent_" + std::to_string(pairs[static_cast<std::size_t>(b)].first);
    const std::string tail = "ent_" + std::to_string(pairs[static_cast<std::size_t>(b)].second);
    const int label = rng.bernoulli(spec.na_bag_fraction)
                          ? 0
                          : 1 + static_cast<int>(rng.index(static_cast<std::size_t>(spec.n_relations)));
    const int size = spec.bag_size_min +
                     static_cast<int>(rng.index(static_cast<std::size_t>(
                         spec.bag_size_max - spec.bag_size_min + 1)));
    for (int s = 0; s < size; ++s) {
      int family = label;
      if (rng.bernoulli(spec.noise_rate)) {
        const bool other_relation =
            label == 0 || (spec.n_relations > 1 && rng.bernoulli(spec.noise_relation_share));
        if (!other_relation) {
          family = 0;
        } else if (label == 0) {
          family = 1 + static_cast<int>(rng.index(static_cast<std::size_t>(spec.n_relations)));
        } else {
          family = 1 + static_cast<int>(rng.index(static_cast<std::size_t>(spec.n_relations - 1)));
          if (family >= label) ++family;
        }
      }
      const auto& family_templates = templates[static_cast<std::size_t>(family)];
      const Template& tpl = family_templates[rng.index(family_templates.size())];

      SyntheticRecord rec;
      rec.head = head;
      rec.tail = tail;
      rec.relation = out.relations[static_cast<std::size_t>(label)];
      rec.family = out.relations[static_cast<std::size_t>(family)];
      rec.is_true_positive = family == label;
      rec.bag = b;
      rec.test = is_test[static_cast<std::size_t>(b)];
      for (const Slot slot : tpl.slots) {
        switch (slot) {
          case Slot::Head:
            rec.head_pos = static_cast<int>(rec.tokens.size());
            rec.tokens.push_back(head);
            break;
          case Slot::Tail:
            rec.tail_pos = static_cast<int>(rec.tokens.size());
            rec.tokens.push_back(tail);
            break;
          case Slot::Trigger:
            rec.tokens.push_back(trigger_word(
                family, rng.index(static_cast<std::size_t>(spec.triggers_per_relation))));
            break;
          case Slot::Filler:
            if (rng.bernoulli(spec.distractor_rate)) {
              const int any = 1 + static_cast<int>(rng.index(static_cast<std::size_t>(spec.n_relations)));
              rec.tokens.push_back(trigger_word(
                  any, rng.index(static_cast<std::size_t>(spec.triggers_per_relation))));
            } else {
              rec.tokens.push_back(
                  "w" + std::to_string(rng.index(static_cast<std::size_t>(spec.vocab_size))));
            }
            break;
        }
      }
      if (family == 0 && rng.bernoulli(spec.hard_negative_rate)) {
        const int any = 1 + static_cast<int>(rng.index(static_cast<std::size_t>(spec.n_relations)));
        rec.tokens.insert(rec.tokens.begin(),
                          trigger_word(any, rng.index(static_cast<std::size_t>(spec.triggers_per_relation))));
        ++rec.head_pos;
        ++rec.tail_pos;
      }
      out.records.push_back(std::move(rec));
    }
  }
  return out;
}

json corpus_line(const SyntheticRecord& record) {
  return json{{"head", record.head},         {"tail", record.tail},
              {"relation", record.relation}, {"tokens", record.tokens},
              {"head_pos", record.head_pos}, {"tail_pos", record.tail_pos}};
}

json sidecar_line(const SyntheticRecord& record) {
  return json{{"is_true_positive", record.is_true_positive}, {"family", record.family}};
}

SyntheticFiles write_synthetic(const SyntheticCorpus& corpus, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  SyntheticFiles files;
  files.train = (fs::path(dir) / "train.jsonl").string();
  files.train_sidecar = (fs::path(dir) / "train.sidecar.jsonl").string();
  files.test = (fs::path(dir) / "test.jsonl").string();
  files.test_sidecar = (fs::path(dir) / "test.sidecar.jsonl").string();
  files.relations = (fs::path(dir) / "relations.json").string();

  std::ofstream train(files.train, std::ios::binary), train_side(files.train_sidecar, std::ios::binary);
  std::ofstream test(files.test, std::ios::binary), test_side(files.test_sidecar, std::ios::binary);
  std::ofstream rel(files.relations, std::ios::binary);
  if (!train || !train_side || !test || !test_side || !rel) {
    throw DataError("cannot write synthetic corpus into " + dir);
  }
  for (const auto& record : corpus.records) {
    auto& lines = record.test ? test : train;
    auto& side = record.test ? test_side : train_side;
    lines << corpus_line(record).dump() << '\n';
    side << sidecar_line(record).dump() << '\n';
    ++(record.test ? files.test_lines : files.train_lines);
  }
  rel << json(corpus.relations).dump() << '\n';
  return files;
}

std::vector<bool> load_sidecar(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open sidecar " + path);
  std::vector<bool> flags;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const json obj = json::parse(line, nullptr, false);
    if (obj.is_discarded() || !obj.is_object() || !obj.contains("is_true_positive") ||
        !obj["is_true_positive"].is_boolean()) {
      throw DataError(path + ":" + std::to_string(line_no) + ": expected {\"is_true_positive\": bool}");
    }
    flags.push_back(obj["is_true_positive"].get<bool>());
  }
  return flags;
}

SyntheticSplit synthetic_split(const SyntheticCorpus& corpus, bool test, Vocabulary& vocab) {
  const RelationInventory relations(corpus.relations);
  SyntheticSplit out;
  for (const auto& record : corpus.records) {
    if (record.test != test) continue;
    SentenceInstance inst;
    inst.head = record.head;
    inst.tail = record.tail;
    inst.head_pos = record.head_pos;
    inst.tail_pos = record.tail_pos;
    inst.relation_id = relations.id(record.relation).value();
    for (const auto& t : record.tokens) inst.tokens.push_back(vocab.add(t));
    out.instances.push_back(std::move(inst));
    out.sidecar.push_back(record.is_true_positive);
  }
  return out;
}

}  // namespace purex
