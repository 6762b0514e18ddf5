#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "qnls/dynamics.hpp"
#include "qnls/experiments.hpp"
#include "qnls/params.hpp"
#include "qnls/randomfield.hpp"

namespace qnls {

// Everything a CLI run needs. Sections: model, flow, sampler, mc, chaos,
// audit, energy, plus input/output/threads/budget.
struct RunConfig {
  ModelParams model;
  FlowConfig flow;
  SamplerSpec sampler;
  std::size_t sample_count = 1;
  MCConfig mc;
  ChaosSpec chaos;
  nlohmann::json audit = nlohmann::json::object();
  bool energy_direct = true;
  double fd_h = 1e-3;
  std::string input;
  std::string output = "out";
  int threads = 1;
  unsigned long long budget = 1'000'000'000ull;

  // Re-checks model admissibility and section invariants.
  void validate() const;
  nlohmann::json to_json() const;
};

// Applies "a.b.c=value" to a JSON document. The value is parsed as JSON when
// possible and kept as a string otherwise.
void apply_override(nlohmann::json& doc, const std::string& assignment);

// Parses a config document; errors carry the field path, and syntax errors
// carry line and column.
RunConfig parse_config(const std::string& text, const std::vector<std::string>& overrides = {});
RunConfig config_from_json(const nlohmann::json& doc);
RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {});

}  // namespace qnls
