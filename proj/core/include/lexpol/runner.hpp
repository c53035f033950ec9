#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "lexpol/eval.hpp"
#include "lexpol/runcfg.hpp"
#include "lexpol/stats.hpp"
#include "lexpol/trainer.hpp"

namespace lexpol {

struct RunAllResult {
  std::vector<RunSummary> summaries;
  EvalReport report;      // filled when complete
  bool complete = false;  // false when a halt stopped the run early
  std::filesystem::path out_dir;
};

/// Trains every seed sequentially and writes the full output layout:
/// config.copy, suite.txt, logs/seed_<i>.log, ckpt/seed_<i>/step_<n>/,
/// report/. halt_after stops each seed at that step (crash simulation);
/// resume=true picks each seed up from its latest checkpoint.
RunAllResult run_config(const RunConfig& cfg, std::int64_t halt_after = 0,
                        bool resume = false);

/// Highest-step checkpoint directory for a seed, empty string if none.
std::string latest_checkpoint(const std::filesystem::path& out_dir,
                              std::uint64_t seed);

/// Deterministic evaluation of a stored checkpoint (the CLI eval verb).
EvalSnapshot eval_checkpoint(const std::string& ckpt_dir, const TaskSuite& suite,
                             int trials, std::uint64_t seed);

struct DominanceCell {
  double x = 0.0, y = 0.0;
  int argmax_idx = 0;
  double max_alpha = 0.0;
};

/// Fig-2 style map: gate weights under one phase's metadata, evaluated on a
/// grid restricted to the T region. The gate only sees context, so within a
/// phase every cell carries the same weights; the map records the argmax
/// sub-policy and its weight per cell.
void emit_dominance_map(const std::string& ckpt_dir, const TaskSuite& suite,
                        int grid_res, const std::string& phase,
                        const std::filesystem::path& out_csv);
std::vector<DominanceCell> read_dominance_map(const std::filesystem::path& csv);

/// Per-seed eval series parsed back from report/seed_<i>_eval.csv.
std::vector<std::vector<EvalSnapshot>> load_eval_series(
    const std::filesystem::path& run_dir);

struct CompareRow {
  std::string name;
  double best_mean = 0.0;
  double stderr_best = 0.0;
  int num_seeds = 0;
  std::vector<double> per_seed_best;
  bool upper_bound = false;  // single_task comparator, kept out of the tests
  SignificanceResult sig;    // vs the top-ranked row
  bool tested = false;
};

std::vector<CompareRow> compare_runs(const std::vector<std::string>& run_dirs);
void write_compare_table(const std::vector<CompareRow>& rows, std::ostream& out);

struct GradSuiteResult {
  int instances = 0;
  double max_rel_err = 0.0;
  bool pass = false;
  std::string worst_case;
};

/// Finite-difference audit of every gradient path: actor loss through the
/// composite actor and critics, critic regression loss, gate+context path,
/// and the encoder mixture. seeds_per_case fresh instances of each.
GradSuiteResult run_gradcheck_suite(int seeds_per_case, double tol,
                                    std::ostream* log);

}  // namespace lexpol
