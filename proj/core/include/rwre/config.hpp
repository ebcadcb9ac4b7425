#pragma once

// Model and experiment-plan files (TOML).
//
// Model table:
//
//   [model]
//   parameterization = "two_state_chain"  # iid_two_values | two_state_chain |
//                                         # dna_unzipping | row_weights
//   support = [0.4, 0.8]                  # not used by dna_unzipping
//   epsilon = 0.05                        # optional, default 0.05
//   lower = [0.01, 0.01]                  # iid_two_values, two_state_chain
//   upper = [0.99, 0.99]
//   weight_lower = 0.05                   # dna_unzipping, row_weights
//   weight_upper = 20.0
//   beta = 1.0                            # dna_unzipping
//   g1 = 3.0                              # dna_unzipping
//   pattern = [[1, 1], [1, 1]]            # row_weights, optional (default: all allowed)
//
// For iid_two_values the parameter p is the weight of the first listed
// support value.
//
// Errors carry the file path and the line of the offending node.

#include "rwre/env.hpp"
#include "rwre/estimate.hpp"

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace rwre {

struct ModelConfig {
  std::string parameterization;
  std::vector<double> support;
  double epsilon = kDefaultEpsilon;
  std::vector<double> lower;
  std::vector<double> upper;
  double weight_lower = 0.05;
  double weight_upper = 20.0;
  double beta = 1.0;
  double g1 = 3.0;
  std::vector<std::vector<double>> pattern;

  ParamSpace build() const;
};

// Built-in models: "two-state" (S = {0.4, 0.8}, box [0.01, 0.99]^2),
// "iid-two-values" (S = {0.7, 0.8}, p in [0.01, 0.99]) and "dna-unzipping"
// (beta = 1, g1 = 3).
ModelConfig preset_model_config(std::string_view name);
std::vector<std::string> preset_model_names();

ModelConfig parse_model_config(std::string_view text, const std::string& source_path = "<string>");
ModelConfig load_model_config(const std::filesystem::path& path);

struct ExperimentPlan;
ExperimentPlan parse_plan(std::string_view text, const std::string& source_path = "<string>",
                          const std::filesystem::path& base_dir = ".");
ExperimentPlan load_plan(const std::filesystem::path& path);

}  // namespace rwre
