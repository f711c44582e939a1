#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "purex/config.hpp"

namespace purex {

/// A run config file: TrainConfig keys plus input and output paths.
struct RunConfig {
  TrainConfig train;
  std::string corpus;
  std::string relations;
  std::string embeddings;  // empty: random initialization
  std::string output_dir;
};

RunConfig run_config_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const RunConfig& cfg);

/// Exit codes: 0 success, 2 usage or config error, 3 data error, 4 numeric divergence.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace purex
