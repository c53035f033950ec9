#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lexpol/agent.hpp"
#include "lexpol/envs.hpp"

namespace lexpol {

/// Flat key=value run description. Every key has a default; a config file
/// only states deviations. suite, mode, and out are required.
struct RunConfig {
  AgentConfig agent;  // agent.seed is filled per worker from `seeds`
  SacConfig sac;

  std::string suite_name;
  SuiteParams suite_params;
  int task_index = -1;  // single_task: which task to train (-1 = only valid
                        // when the suite has exactly one task)

  std::vector<std::uint64_t> seeds = {0};
  std::int64_t budget_steps = 500000;
  std::int64_t eval_interval = 10000;
  int eval_trials = 5;
  std::int64_t log_interval = 1000;
  std::int64_t ckpt_interval = 0;
  std::string out_dir;

  static RunConfig parse_file(const std::filesystem::path& path);
  static RunConfig parse_string(const std::string& text,
                                const std::string& source_name = "<string>");

  void validate() const;  // throws ConfigError naming the offending field

  /// Full resolved dump, defaults included; parseable by parse_string.
  std::string serialized() const;

  /// Resolved suite with params applied; single_task restricted to
  /// task_index (metadata variant indices preserved).
  TaskSuite build_suite() const;

  /// out_dir, made absolute under $LEXPOL_OUT_ROOT when that is set and
  /// out_dir is relative.
  std::filesystem::path resolved_out_dir() const;
};

}  // namespace lexpol
