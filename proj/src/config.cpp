#include "purex/config.hpp"

#include <set>

namespace purex {

using nlohmann::json;

const char* to_string(Ablation a) {
  switch (a) {
    case Ablation::PU: return "PU";
    case Ablation::PU_COMB: return "PU-COMB";
    case Ablation::PU_COMB_UNL: return "PU-COMB-UNL";
    case Ablation::BaselineAVE: return "Baseline-AVE";
    case Ablation::BaselineSR: return "Baseline-SR";
  }
  return "?";
}

Ablation parse_ablation(const std::string& name) {
  for (Ablation a : {Ablation::PU, Ablation::PU_COMB, Ablation::PU_COMB_UNL, Ablation::BaselineAVE,
                     Ablation::BaselineSR}) {
    if (name == to_string(a)) return a;
  }
  throw ConfigError("unknown ablation \"" + name +
                    "\" (expected PU, PU-COMB, PU-COMB-UNL, Baseline-AVE or Baseline-SR)");
}

LossConfig TrainConfig::loss_config() const {
  LossConfig cfg;
  cfg.beta = beta;
  cfg.exclude_na_rival = exclude_na_rival;
  cfg.use_unlabeled = uses_unlabeled_head();
  cfg.use_bag = ablation == Ablation::PU || ablation == Ablation::BaselineSR;
  return cfg;
}

SelectorConfig TrainConfig::effective_selector() const {
  SelectorConfig s = selector;
  if (ablation == Ablation::BaselineSR) s.use_relation_embedding = false;
  return s;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ConfigError("config: " + field + " " + why);
  };
  if (epochs < 0) fail("epochs", "must be >= 0");
  if (warm_start_epochs < 0) fail("warm_start_epochs", "must be >= 0");
  if (batch_size < 1) fail("batch_size", "must be >= 1");
  if (!(lr > 0.0)) fail("lr", "must be positive");
  if (!(alpha > 0.0 && alpha < 1.0)) fail("alpha", "must lie in (0, 1)");
  if (!(beta >= 0.0)) fail("beta", "must be >= 0");
  if (!(encoder.dropout >= 0.0 && encoder.dropout < 1.0)) fail("dropout", "must lie in [0, 1)");
  if (encoder.d_word < 1 || encoder.d_pos < 1 || encoder.n_filters < 1 || encoder.window < 1) {
    fail("encoder", "dimensions must be positive");
  }
  if (encoder.max_len < encoder.window) fail("encoder.max_len", "must be >= window");
  if (encoder.pos_clip < 1) fail("encoder.pos_clip", "must be >= 1");
  if (selector.hidden < 1) fail("selector.hidden", "must be >= 1");
  if (selector.d_rel < 0) fail("selector.d_rel", "must be >= 0");
  if (selector.replay_capacity < 1) fail("selector.replay_capacity", "must be >= 1");
  if (selector.minibatch < 1) fail("selector.minibatch", "must be >= 1");
  if (!(selector.lr > 0.0)) fail("selector.lr", "must be positive");
  if (!(epsilon_start >= 0.0 && epsilon_start <= 1.0)) fail("epsilon_start", "must lie in [0, 1]");
  if (!(epsilon_end >= 0.0 && epsilon_end <= 1.0)) fail("epsilon_end", "must lie in [0, 1]");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    fail("validation_fraction", "must lie in [0, 1)");
  }
}

json to_json(const TrainConfig& cfg) {
  return json{
      {"epochs", cfg.epochs},
      {"warm_start_epochs", cfg.warm_start_epochs},
      {"batch_size", cfg.batch_size},
      {"lr", cfg.lr},
      {"alpha", cfg.alpha},
      {"beta", cfg.beta},
      {"dropout", cfg.encoder.dropout},
      {"seed", cfg.seed},
      {"ablation", to_string(cfg.ablation)},
      {"encoder",
       {{"variant", to_string(cfg.encoder.variant)},
        {"d_word", cfg.encoder.d_word},
        {"d_pos", cfg.encoder.d_pos},
        {"n_filters", cfg.encoder.n_filters},
        {"window", cfg.encoder.window},
        {"max_len", cfg.encoder.max_len},
        {"pos_clip", cfg.encoder.pos_clip}}},
      {"selector",
       {{"hidden", cfg.selector.hidden},
        {"d_rel", cfg.selector.d_rel},
        {"replay_capacity", cfg.selector.replay_capacity},
        {"minibatch", cfg.selector.minibatch},
        {"lr", cfg.selector.lr},
        {"shuffle_within_bag", cfg.selector.shuffle_within_bag}}},
      {"epsilon_start", cfg.epsilon_start},
      {"epsilon_end", cfg.epsilon_end},
      {"validation_fraction", cfg.validation_fraction},
      {"exclude_na_rival", cfg.exclude_na_rival},
      {"rival_per_query", cfg.rival_per_query},
  };
}

namespace {

void check_keys(const json& obj, const std::set<std::string>& known, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& item : obj.items()) {
    if (!known.count(item.key())) throw ConfigError(where + ": unknown key \"" + item.key() + "\"");
  }
}

template <typename T>
void get(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  const json& v = obj.at(key);
  bool ok = false;
  if constexpr (std::is_same_v<T, bool>) {
    ok = v.is_boolean();
  } else if constexpr (std::is_same_v<T, std::string>) {
    ok = v.is_string();
  } else if constexpr (std::is_floating_point_v<T>) {
    ok = v.is_number();
  } else if constexpr (std::is_unsigned_v<T>) {
    ok = v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0);
  } else {
    ok = v.is_number_integer();
  }
  if (!ok) throw ConfigError(where + ": key \"" + key + "\" has the wrong type");
  out = v.get<T>();
}

}  // namespace

TrainConfig train_config_from_json(const json& doc) {
  check_keys(doc,
             {"epochs", "warm_start_epochs", "batch_size", "lr", "alpha", "beta", "dropout", "seed",
              "ablation", "encoder", "selector", "epsilon_start", "epsilon_end",
              "validation_fraction", "exclude_na_rival", "rival_per_query"},
             "config");
  TrainConfig cfg;
  get(doc, "epochs", cfg.epochs, "config");
  get(doc, "warm_start_epochs", cfg.warm_start_epochs, "config");
  get(doc, "batch_size", cfg.batch_size, "config");
  get(doc, "lr", cfg.lr, "config");
  get(doc, "alpha", cfg.alpha, "config");
  get(doc, "beta", cfg.beta, "config");
  get(doc, "dropout", cfg.encoder.dropout, "config");
  get(doc, "seed", cfg.seed, "config");
  std::string ablation = to_string(cfg.ablation);
  get(doc, "ablation", ablation, "config");
  cfg.ablation = parse_ablation(ablation);
  get(doc, "epsilon_start", cfg.epsilon_start, "config");
  get(doc, "epsilon_end", cfg.epsilon_end, "config");
  get(doc, "validation_fraction", cfg.validation_fraction, "config");
  get(doc, "exclude_na_rival", cfg.exclude_na_rival, "config");
  get(doc, "rival_per_query", cfg.rival_per_query, "config");
  if (doc.contains("encoder")) {
    const json& e = doc["encoder"];
    check_keys(e, {"variant", "d_word", "d_pos", "n_filters", "window", "max_len", "pos_clip"},
               "config.encoder");
    std::string variant = to_string(cfg.encoder.variant);
    get(e, "variant", variant, "config.encoder");
    if (variant == "CNN") {
      cfg.encoder.variant = EncoderVariant::CNN;
    } else if (variant == "PCNN") {
      cfg.encoder.variant = EncoderVariant::PCNN;
    } else {
      throw ConfigError("config.encoder: variant must be CNN or PCNN");
    }
    get(e, "d_word", cfg.encoder.d_word, "config.encoder");
    get(e, "d_pos", cfg.encoder.d_pos, "config.encoder");
    get(e, "n_filters", cfg.encoder.n_filters, "config.encoder");
    get(e, "window", cfg.encoder.window, "config.encoder");
    get(e, "max_len", cfg.encoder.max_len, "config.encoder");
    get(e, "pos_clip", cfg.encoder.pos_clip, "config.encoder");
  }
  if (doc.contains("selector")) {
    const json& s = doc["selector"];
    check_keys(s, {"hidden", "d_rel", "replay_capacity", "minibatch", "lr", "shuffle_within_bag"},
               "config.selector");
    get(s, "hidden", cfg.selector.hidden, "config.selector");
    get(s, "d_rel", cfg.selector.d_rel, "config.selector");
    get(s, "replay_capacity", cfg.selector.replay_capacity, "config.selector");
    get(s, "minibatch", cfg.selector.minibatch, "config.selector");
    get(s, "lr", cfg.selector.lr, "config.selector");
    get(s, "shuffle_within_bag", cfg.selector.shuffle_within_bag, "config.selector");
  }
  cfg.validate();
  return cfg;
}

}  // namespace purex
