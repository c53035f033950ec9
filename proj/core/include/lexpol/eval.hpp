#pragma once

#include <cstdint>
#include <vector>

#include "lexpol/agent.hpp"
#include "lexpol/envs.hpp"

namespace lexpol {

struct EvalSnapshot {
  std::int64_t step = 0;
  std::vector<double> per_task_success;  // mean over trials, one per task
  double mean_success = 0.0;             // arithmetic mean of per-task values
};

/// Runs `trials` deterministic (mean-action) episodes per task. Trial start
/// states depend only on (seed, task, trial), so snapshots taken at
/// different training steps see the same test episodes.
EvalSnapshot evaluate(const Actor& actor, const TaskSuite& suite, int trials,
                      std::uint64_t seed, std::int64_t step = 0);

/// Cross-seed aggregation: pointwise mean over seeds, headline number is the
/// max of that series ("best mean"), stderr taken across seeds at the argmax
/// interval. final_* report the last interval for less optimistic reading.
struct EvalReport {
  std::vector<std::vector<EvalSnapshot>> per_seed;
  std::vector<std::int64_t> steps;
  std::vector<double> seed_mean;
  double best_mean = 0.0;
  std::int64_t best_step = 0;
  double stderr_at_best = 0.0;
  double final_mean = 0.0;
  double stderr_at_final = 0.0;
  int num_seeds = 0;
};

EvalReport aggregate(const std::vector<std::vector<EvalSnapshot>>& per_seed);

}  // namespace lexpol
