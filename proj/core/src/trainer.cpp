#include "lexpol/trainer.hpp"

#include <cstdio>
#include <limits>

#include "lexpol/errors.hpp"

namespace lexpol {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_i64(std::ostream& os, std::int64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::int64_t read_i64(std::istream& is) {
  std::int64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!is) throw IoError("truncated trainer state");
  return v;
}

void write_f64(std::ostream& os, double v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

double read_f64(std::istream& is) {
  double v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!is) throw IoError("truncated trainer state");
  return v;
}

// rng dumps are whitespace-delimited text; eat the trailing newline so the
// next binary field starts clean
void load_rng_line(std::istream& is, Rng& rng) {
  load_rng(is, rng);
  is.ignore(std::numeric_limits<std::streamsize>::max(), '\n');
}

// Enumerate the replay strata: one ring per metadata variant a task can
// emit. Composite tasks under phase metadata alternate between their red
// and blue contexts; everything else sticks to its static one.
std::vector<std::vector<std::pair<int, int>>> build_strata(const TaskSuite& suite) {
  std::vector<std::vector<std::pair<int, int>>> strata;
  int next = 0;
  for (const auto& task : suite.tasks) {
    std::vector<std::pair<int, int>> rows;
    if (task.kind == TaskKind::kTmazeComposite && suite.params.phase_metadata) {
      rows.emplace_back(task.meta_red, next++);
      rows.emplace_back(task.meta_blue, next++);
    } else {
      rows.emplace_back(task.meta, next++);
    }
    strata.push_back(std::move(rows));
  }
  return strata;
}

int count_strata(const std::vector<std::vector<std::pair<int, int>>>& strata) {
  int n = 0;
  for (const auto& rows : strata) n += static_cast<int>(rows.size());
  return n;
}

}  // namespace

Trainer::Trainer(const AgentConfig& acfg, const SacConfig& scfg, TaskSuite suite,
                 TrainOptions opt)
    : acfg_(acfg),
      scfg_(scfg),
      suite_(std::move(suite)),
      opt_(std::move(opt)),
      learner_(suite_.state_dim, suite_.action_dim, acfg.critic_hidden, scfg,
               acfg.seed),
      strata_(build_strata(suite_)),
      replay_(scfg.replay_capacity, count_strata(strata_)) {
  if (suite_.num_tasks() < 1) throw ConfigError("suite has no tasks");
  if (opt_.budget_steps < 0) throw ConfigError("budget_steps must be >= 0");
  if (opt_.eval_interval < 1) throw ConfigError("eval_interval must be >= 1");
  if (opt_.eval_trials < 1) throw ConfigError("eval_trials must be >= 1");

  actor_ = make_actor(acfg_, scfg_, suite_,
                      /*load_experts=*/opt_.resume_from.empty());

  const int T = suite_.num_tasks();
  envs_.reserve(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) {
    envs_.push_back(suite_.make_env(t));
    env_rngs_.push_back(
        make_stream(acfg_.seed, "env-task", static_cast<std::uint64_t>(t)));
  }
  states_.assign(static_cast<std::size_t>(T), VectorXd());
  need_reset_.assign(static_cast<std::size_t>(T), 1);
  ep_return_.assign(static_cast<std::size_t>(T), 0.0);
  ep_len_.assign(static_cast<std::size_t>(T), 0);

  warmup_rng_ = make_stream(acfg_.seed, "warmup");
  rollout_noise_ = make_stream(acfg_.seed, "noise");
  train_noise_ = make_stream(acfg_.seed, "train-noise");
  replay_rng_ = make_stream(acfg_.seed, "replay");

  if (!opt_.resume_from.empty()) {
    load_checkpoint(opt_.resume_from);
  } else {
    open_log(/*fresh=*/true);
  }
}

std::filesystem::path Trainer::seed_tag(const char* root) const {
  return opt_.out_dir / root / ("seed_" + std::to_string(acfg_.seed));
}

int Trainer::stratum_of(int task, int meta) const {
  for (const auto& [m, ring] : strata_[static_cast<std::size_t>(task)])
    if (m == meta) return ring;
  // phase machines only emit the metas enumerated at construction
  throw StateError("no replay stratum for task " + std::to_string(task) +
                   " meta " + std::to_string(meta));
}

void Trainer::open_log(bool fresh) {
  if (opt_.out_dir.empty()) return;
  log_path_ = opt_.out_dir / "logs" /
              ("seed_" + std::to_string(acfg_.seed) + ".log");
  std::filesystem::create_directories(log_path_.parent_path());
  log_.open(log_path_, fresh ? std::ios::trunc : std::ios::app);
  if (!log_) throw IoError("cannot open log file " + log_path_.string());
}

void Trainer::log_line(const std::string& s) {
  if (!log_.is_open()) return;
  log_ << s << '\n';
  if (!log_) throw IoError("write failed on " + log_path_.string());
}

void Trainer::env_step(int t) {
  Env& env = *envs_[static_cast<std::size_t>(t)];
  if (need_reset_[static_cast<std::size_t>(t)]) {
    states_[static_cast<std::size_t>(t)] =
        env.reset(env_rngs_[static_cast<std::size_t>(t)]);
    need_reset_[static_cast<std::size_t>(t)] = 0;
    ep_return_[static_cast<std::size_t>(t)] = 0.0;
    ep_len_[static_cast<std::size_t>(t)] = 0;
  }
  const int meta = env.meta_id();
  VectorXd a;
  if (global_step_ < scfg_.warmup_steps) {
    a.resize(suite_.action_dim);
    for (int i = 0; i < suite_.action_dim; ++i)
      a(i) = uniform_range(warmup_rng_, -1.0, 1.0);
  } else {
    a = actor_->act(states_[static_cast<std::size_t>(t)], meta, rollout_noise_).a;
  }
  const StepResult r = env.step(a);

  Transition tr;
  tr.task = stratum_of(t, meta);
  tr.meta = meta;
  tr.meta_next = env.meta_id();
  tr.s = states_[static_cast<std::size_t>(t)];
  tr.a = a;
  tr.s_next = r.state;
  tr.r = r.reward;
  tr.done = r.terminal;  // timeouts bootstrap, real termination does not
  replay_.push(tr);

  states_[static_cast<std::size_t>(t)] = r.state;
  ep_return_[static_cast<std::size_t>(t)] += r.reward;
  ep_len_[static_cast<std::size_t>(t)] += 1;
  ++global_step_;

  if (r.episode_over) {
    log_line("episode " + std::to_string(global_step_) + " task " +
             suite_.tasks[static_cast<std::size_t>(t)].task_id + " return " +
             fmt(ep_return_[static_cast<std::size_t>(t)]) + " len " +
             std::to_string(ep_len_[static_cast<std::size_t>(t)]) +
             " success " + (r.success ? "1" : "0"));
    need_reset_[static_cast<std::size_t>(t)] = 1;
  }
}

void Trainer::maybe_log_train() {
  if (opt_.log_interval <= 0) return;
  if (global_step_ - last_log_ < opt_.log_interval) return;
  last_log_ = global_step_;
  if (grad_updates_ == 0) return;
  log_line("train " + std::to_string(global_step_) + " closs " +
           fmt(last_losses_.critic) + " aloss " + fmt(last_losses_.actor) +
           " alphaloss " + fmt(last_losses_.alpha_loss) + " alpha " +
           fmt(last_losses_.alpha) + " q " + fmt(last_losses_.mean_q) +
           " logp " + fmt(last_losses_.mean_logp));
}

void Trainer::maybe_eval(bool force) {
  bool due = global_step_ - last_eval_ >= opt_.eval_interval;
  if (force)
    due = history_.empty() || history_.back().step != global_step_;
  if (!due) return;

  const EvalSnapshot snap =
      evaluate(*actor_, suite_, opt_.eval_trials, acfg_.seed, global_step_);
  last_eval_ = global_step_;
  history_.push_back(snap);

  std::string line = "eval " + std::to_string(global_step_) + " mean " +
                     fmt(snap.mean_success) + " per_task";
  for (double v : snap.per_task_success) line += " " + fmt(v);
  log_line(line);
  for (const auto& task : suite_.tasks) {
    auto gate_line = [&](int meta, const std::string& label) {
      const VectorXd alpha = actor_->gate_weights(meta);
      std::string g =
          "gate " + std::to_string(global_step_) + " task " + label + " alpha";
      for (Eigen::Index i = 0; i < alpha.size(); ++i) g += " " + fmt(alpha(i));
      log_line(g);
    };
    gate_line(task.meta, task.task_id);
    // the composite task acts under its per-phase metadata, so log those too
    if (task.kind == TaskKind::kTmazeComposite && suite_.params.phase_metadata) {
      gate_line(task.meta_red, task.task_id + ":red");
      gate_line(task.meta_blue, task.task_id + ":blue");
    }
  }
  if (log_.is_open()) log_.flush();
}

void Trainer::maybe_ckpt() {
  if (opt_.ckpt_interval <= 0 || opt_.out_dir.empty()) return;
  if (global_step_ - last_ckpt_ < opt_.ckpt_interval) return;
  write_checkpoint();
}

void Trainer::tick() {
  const int T = suite_.num_tasks();
  for (int t = 0; t < T; ++t) env_step(t);

  if (global_step_ >= scfg_.warmup_steps && replay_.size() > 0) {
    const Batch b = replay_.sample(scfg_.batch_per_task, replay_rng_);
    try {
      last_losses_ = learner_.update(*actor_, b, train_noise_);
    } catch (const NumericError& e) {
      if (!opt_.out_dir.empty()) {
        std::filesystem::create_directories(opt_.out_dir / "logs");
        std::ofstream dump(opt_.out_dir / "logs" /
                           ("seed_" + std::to_string(acfg_.seed) + ".dump"));
        dump << "numeric abort at step " << global_step_ << ": " << e.what()
             << "\nlast critic loss " << fmt(last_losses_.critic)
             << "\nlast actor loss " << fmt(last_losses_.actor)
             << "\nalpha " << fmt(last_losses_.alpha) << "\n";
        for (const auto& [name, hash] : actor_->param_group_hashes())
          dump << "param_hash " << name << " " << std::hex << hash << std::dec
               << "\n";
      }
      throw;
    }
    ++grad_updates_;
  }

  maybe_log_train();
  if (opt_.halt_after > 0 && global_step_ >= opt_.halt_after && !halted_) {
    maybe_eval(false);
    write_checkpoint();
    halted_ = true;
    return;
  }
  maybe_eval(false);
  maybe_ckpt();
}

RunSummary Trainer::run() {
  std::string final_ckpt;
  while (!halted_ && global_step_ < opt_.budget_steps) tick();

  if (halted_) {
    final_ckpt = seed_tag("ckpt")
                     .append("step_" + std::to_string(global_step_))
                     .string();
  } else {
    maybe_eval(/*force=*/true);
    log_line("done " + std::to_string(global_step_) + " updates " +
             std::to_string(grad_updates_) + " warmup_only " +
             (grad_updates_ == 0 ? "1" : "0"));
    if (!opt_.out_dir.empty()) {
      if (last_ckpt_ == global_step_ && global_step_ > 0) {
        final_ckpt = seed_tag("ckpt")
                         .append("step_" + std::to_string(global_step_))
                         .string();
      } else {
        final_ckpt = write_checkpoint();
      }
      // per-seed evaluation series, one row per snapshot
      const auto rep_dir = opt_.out_dir / "report";
      std::filesystem::create_directories(rep_dir);
      const auto csv_path =
          rep_dir / ("seed_" + std::to_string(acfg_.seed) + "_eval.csv");
      std::ofstream csv(csv_path);
      if (!csv) throw IoError("cannot write " + csv_path.string());
      csv << "step,mean_success";
      for (const auto& task : suite_.tasks) csv << "," << task.task_id;
      csv << "\n";
      for (const auto& snap : history_) {
        csv << snap.step << "," << fmt(snap.mean_success);
        for (double v : snap.per_task_success) csv << "," << fmt(v);
        csv << "\n";
      }
    }
  }
  if (log_.is_open()) log_.flush();

  RunSummary s;
  s.steps = global_step_;
  s.grad_updates = grad_updates_;
  s.warmup_only = grad_updates_ == 0;
  s.history = history_;
  s.final_mean_success = history_.empty() ? 0.0 : history_.back().mean_success;
  s.final_ckpt = final_ckpt;
  return s;
}

std::string Trainer::checkpoint_now() { return write_checkpoint(); }

std::string Trainer::write_checkpoint() {
  if (opt_.out_dir.empty())
    throw ConfigError("checkpointing needs an output directory");
  const auto dir =
      seed_tag("ckpt") / ("step_" + std::to_string(global_step_));
  std::filesystem::create_directories(dir);

  CheckpointWriter w;
  actor_->add_to_checkpoint(w);
  learner_.add_to_checkpoint(w);
  w.write(dir);
  save_agent_hyper(dir / "hyper.txt", acfg_, scfg_);

  if (log_.is_open()) log_.flush();
  std::int64_t log_offset = 0;
  if (!log_path_.empty() && std::filesystem::exists(log_path_))
    log_offset = static_cast<std::int64_t>(std::filesystem::file_size(log_path_));

  std::ofstream ts(dir / "trainer_state.bin", std::ios::binary);
  if (!ts) throw IoError("cannot write trainer state in " + dir.string());
  ts << "lexpol-trainer v1\n";
  write_i64(ts, global_step_);
  write_i64(ts, grad_updates_);
  write_i64(ts, last_eval_);
  write_i64(ts, last_log_);
  write_i64(ts, log_offset);
  actor_->save_opt_state(ts);
  learner_.save_opt_state(ts);
  replay_.save(ts);
  save_rng(ts, warmup_rng_);
  save_rng(ts, rollout_noise_);
  save_rng(ts, train_noise_);
  save_rng(ts, replay_rng_);
  const int T = suite_.num_tasks();
  for (int t = 0; t < T; ++t) save_rng(ts, env_rngs_[static_cast<std::size_t>(t)]);
  for (int t = 0; t < T; ++t) {
    const auto u = static_cast<std::size_t>(t);
    ts.put(need_reset_[u] ? 1 : 0);
    write_f64(ts, ep_return_[u]);
    write_i64(ts, ep_len_[u]);
    envs_[u]->save(ts);
  }
  write_i64(ts, static_cast<std::int64_t>(history_.size()));
  for (const auto& snap : history_) {
    write_i64(ts, snap.step);
    write_i64(ts, static_cast<std::int64_t>(snap.per_task_success.size()));
    for (double v : snap.per_task_success) write_f64(ts, v);
    write_f64(ts, snap.mean_success);
  }
  // Exact parameter image: the interchange blob is float32, and resuming
  // from rounded weights would drift off the uninterrupted trajectory.
  actor_->save_params64(ts);
  learner_.save_params64(ts);
  if (!ts) throw IoError("write failed on trainer state in " + dir.string());
  last_ckpt_ = global_step_;
  return dir.string();
}

void Trainer::load_checkpoint(const std::filesystem::path& dir) {
  const auto [ha, hs] = load_agent_hyper(dir / "hyper.txt");
  if (ha.mode != acfg_.mode || ha.k != acfg_.k || ha.n != acfg_.n ||
      ha.actor_hidden != acfg_.actor_hidden ||
      ha.critic_hidden != acfg_.critic_hidden || ha.seed != acfg_.seed)
    throw ConfigError("resume config does not match checkpoint hyperparameters");

  const Checkpoint ck = Checkpoint::load(dir);
  actor_->read_from_checkpoint(ck);
  learner_.read_from_checkpoint(ck);

  std::ifstream ts(dir / "trainer_state.bin", std::ios::binary);
  if (!ts) throw IoError("cannot open trainer state in " + dir.string());
  std::string magic;
  std::getline(ts, magic);
  if (magic != "lexpol-trainer v1")
    throw IoError("bad trainer state header in " + dir.string());
  global_step_ = read_i64(ts);
  grad_updates_ = read_i64(ts);
  last_eval_ = read_i64(ts);
  last_log_ = read_i64(ts);
  const std::int64_t log_offset = read_i64(ts);
  last_ckpt_ = global_step_;
  actor_->load_opt_state(ts);
  learner_.load_opt_state(ts);
  replay_.load(ts);
  load_rng_line(ts, warmup_rng_);
  load_rng_line(ts, rollout_noise_);
  load_rng_line(ts, train_noise_);
  load_rng_line(ts, replay_rng_);
  const int T = suite_.num_tasks();
  for (int t = 0; t < T; ++t)
    load_rng_line(ts, env_rngs_[static_cast<std::size_t>(t)]);
  for (int t = 0; t < T; ++t) {
    const auto u = static_cast<std::size_t>(t);
    need_reset_[u] = static_cast<char>(ts.get());
    ep_return_[u] = read_f64(ts);
    ep_len_[u] = static_cast<int>(read_i64(ts));
    envs_[u]->load(ts);
    states_[u] = envs_[u]->state();
  }
  history_.clear();
  const std::int64_t n = read_i64(ts);
  for (std::int64_t i = 0; i < n; ++i) {
    EvalSnapshot snap;
    snap.step = read_i64(ts);
    const std::int64_t m = read_i64(ts);
    snap.per_task_success.resize(static_cast<std::size_t>(m));
    for (auto& v : snap.per_task_success) v = read_f64(ts);
    snap.mean_success = read_f64(ts);
    history_.push_back(std::move(snap));
  }
  actor_->load_params64(ts);
  learner_.load_params64(ts);
  if (!ts) throw IoError("truncated trainer state in " + dir.string());

  if (!opt_.out_dir.empty()) {
    log_path_ = opt_.out_dir / "logs" /
                ("seed_" + std::to_string(acfg_.seed) + ".log");
    if (std::filesystem::exists(log_path_)) {
      std::filesystem::resize_file(
          log_path_, static_cast<std::uintmax_t>(log_offset));
      open_log(/*fresh=*/false);
    } else {
      open_log(/*fresh=*/true);
    }
  }
}

}  // namespace lexpol
