#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "lexpol/agent.hpp"
#include "lexpol/eval.hpp"

namespace lexpol {

struct TrainOptions {
  std::int64_t budget_steps = 500000;  // total env steps summed over tasks
  std::int64_t eval_interval = 10000;
  int eval_trials = 5;
  std::int64_t log_interval = 1000;
  std::int64_t ckpt_interval = 0;  // 0 = checkpoint only at halt and at the end
  std::int64_t halt_after = 0;     // stop at the first tick boundary past this
  std::string resume_from;         // checkpoint directory to continue from
  std::filesystem::path out_dir;   // empty = keep everything in memory
};

struct RunSummary {
  std::int64_t steps = 0;
  std::int64_t grad_updates = 0;
  bool warmup_only = false;
  double final_mean_success = 0.0;
  std::vector<EvalSnapshot> history;
  std::string final_ckpt;
};

/// Algorithm loop: strict round-robin, one env step per task per tick, then
/// one SAC gradient step on a batch mixing batch_per_task transitions from
/// every task. Budgets and intervals count total env steps and trigger at
/// tick boundaries, which keeps interrupted-and-resumed runs bit-identical
/// to uninterrupted ones.
class Trainer {
 public:
  Trainer(const AgentConfig& acfg, const SacConfig& scfg, TaskSuite suite,
          TrainOptions opt);

  RunSummary run();

  Actor& actor() { return *actor_; }
  const Actor& actor() const { return *actor_; }
  SacLearner& learner() { return learner_; }
  const TaskSuite& suite() const { return suite_; }
  const std::vector<EvalSnapshot>& history() const { return history_; }
  std::int64_t global_step() const { return global_step_; }
  std::int64_t grad_updates() const { return grad_updates_; }
  const SacLosses& last_losses() const { return last_losses_; }

  /// Writes a full checkpoint (model + optimizer + replay + RNG + env
  /// states) under out_dir and returns its directory.
  std::string checkpoint_now();

 private:
  void tick();
  void env_step(int t);
  int stratum_of(int task, int meta) const;
  void maybe_log_train();
  void maybe_eval(bool force);
  void maybe_ckpt();
  std::string write_checkpoint();
  void load_checkpoint(const std::filesystem::path& dir);
  void open_log(bool fresh);
  void log_line(const std::string& s);
  std::filesystem::path seed_tag(const char* root) const;

  AgentConfig acfg_;
  SacConfig scfg_;
  TaskSuite suite_;
  TrainOptions opt_;

  std::unique_ptr<Actor> actor_;
  SacLearner learner_;
  // One replay stratum per (task, metadata variant) pair: a composite task
  // emits two contexts, and sampling balances them the same way it balances
  // tasks. For single-context tasks this is exactly per-task stratification.
  std::vector<std::vector<std::pair<int, int>>> strata_;  // task -> (meta, ring)
  ReplayBuffer replay_;

  std::vector<std::unique_ptr<Env>> envs_;
  std::vector<VectorXd> states_;
  std::vector<char> need_reset_;
  std::vector<double> ep_return_;
  std::vector<int> ep_len_;

  std::vector<Rng> env_rngs_;
  Rng warmup_rng_, rollout_noise_, train_noise_, replay_rng_;

  std::int64_t global_step_ = 0;
  std::int64_t grad_updates_ = 0;
  std::int64_t last_eval_ = 0;
  std::int64_t last_log_ = 0;
  std::int64_t last_ckpt_ = 0;
  bool halted_ = false;
  SacLosses last_losses_;
  std::vector<EvalSnapshot> history_;

  std::ofstream log_;
  std::filesystem::path log_path_;
};

}  // namespace lexpol
