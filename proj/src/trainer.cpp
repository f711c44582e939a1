#include "purex/trainer.hpp"

namespace purex {

using nlohmann::json;

json to_json(const EpochLog& log) {
  return json{
      {"epoch", log.epoch},
      {"phase", log.phase},
      {"l_pos", log.l_pos},
      {"l_unl", log.l_unl},
      {"l_bag", log.l_bag},
      {"total", log.total},
      {"mean_reward", log.mean_reward},
      {"mean_q_loss", log.mean_q_loss},
      {"q_updates", log.q_updates},
      {"epsilon", log.epsilon},
      {"val_loss", log.val_loss},
      {"best", log.best},
      {"empty_segments", log.empty_segments},
  };
}

EpochLog epoch_log_from_json(const json& doc) {
  EpochLog log;
  log.epoch = doc.at("epoch").get<int>();
  log.phase = doc.at("phase").get<std::string>();
  log.l_pos = doc.at("l_pos").get<double>();
  log.l_unl = doc.at("l_unl").get<double>();
  log.l_bag = doc.at("l_bag").get<double>();
  log.total = doc.at("total").get<double>();
  log.mean_reward = doc.at("mean_reward").get<double>();
  log.mean_q_loss = doc.at("mean_q_loss").get<double>();
  log.q_updates = doc.at("q_updates").get<long long>();
  log.epsilon = doc.at("epsilon").get<double>();
  log.val_loss = doc.at("val_loss").get<double>();
  log.best = doc.at("best").get<bool>();
  log.empty_segments = doc.at("empty_segments").get<long long>();
  return log;
}

Vocabulary checkpoint_vocabulary(const Checkpoint& ckpt) {
  if (!ckpt.header.contains("vocabulary")) throw DataError("checkpoint header has no vocabulary");
  return Vocabulary::from_tokens(ckpt.header.at("vocabulary").get<std::vector<std::string>>());
}

RelationInventory checkpoint_relations(const Checkpoint& ckpt) {
  if (!ckpt.header.contains("relations")) throw DataError("checkpoint header has no relation inventory");
  return RelationInventory(ckpt.header.at("relations").get<std::vector<std::string>>());
}

TrainConfig checkpoint_config(const Checkpoint& ckpt) {
  if (!ckpt.header.contains("config")) throw DataError("checkpoint header has no config");
  return train_config_from_json(ckpt.header.at("config"));
}

}  // namespace purex
