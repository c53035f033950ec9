#include "lexpol/eval.hpp"

#include <cmath>

#include "lexpol/errors.hpp"
#include "lexpol/stats.hpp"

namespace lexpol {

EvalSnapshot evaluate(const Actor& actor, const TaskSuite& suite, int trials,
                      std::uint64_t seed, std::int64_t step) {
  if (suite.state_dim != actor.state_dim() ||
      suite.action_dim != actor.action_dim())
    throw ConfigError("agent and suite dimensions disagree");
  if (trials < 1) throw ConfigError("eval trials must be at least 1");

  EvalSnapshot snap;
  snap.step = step;
  snap.per_task_success.resize(suite.tasks.size(), 0.0);
  for (std::size_t t = 0; t < suite.tasks.size(); ++t) {
    int hits = 0;
    for (int j = 0; j < trials; ++j) {
      auto env = suite.make_env(static_cast<int>(t));
      Rng er = make_stream(seed, "eval-task",
                           static_cast<std::uint64_t>(t) * 1000003u +
                               static_cast<std::uint64_t>(j));
      VectorXd s = env->reset(er);
      bool ok = false;
      while (true) {
        const ActResult act = actor.act_mean(s, env->meta_id());
        const StepResult sr = env->step(act.a);
        ok = ok || sr.success;
        s = sr.state;
        if (sr.episode_over) break;
      }
      hits += ok ? 1 : 0;
    }
    snap.per_task_success[t] = static_cast<double>(hits) / trials;
  }
  snap.mean_success = mean(snap.per_task_success);
  return snap;
}

EvalReport aggregate(const std::vector<std::vector<EvalSnapshot>>& per_seed) {
  if (per_seed.empty()) throw ShapeError("aggregate needs at least one seed");
  const std::size_t n = per_seed.front().size();
  if (n == 0) throw ShapeError("aggregate needs at least one snapshot");
  for (const auto& series : per_seed) {
    if (series.size() != n)
      throw ShapeError("seed series have different lengths");
    for (std::size_t i = 0; i < n; ++i)
      if (series[i].step != per_seed.front()[i].step)
        throw ShapeError("seed series have misaligned evaluation steps");
  }

  EvalReport rep;
  rep.per_seed = per_seed;
  rep.num_seeds = static_cast<int>(per_seed.size());
  rep.steps.resize(n);
  rep.seed_mean.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    rep.steps[i] = per_seed.front()[i].step;
    double s = 0.0;
    for (const auto& series : per_seed) s += series[i].mean_success;
    rep.seed_mean[i] = s / rep.num_seeds;
  }

  std::size_t best = 0;
  for (std::size_t i = 1; i < n; ++i)
    if (rep.seed_mean[i] > rep.seed_mean[best]) best = i;

  auto stderr_at = [&](std::size_t i) {
    if (rep.num_seeds < 2) return 0.0;
    std::vector<double> vals;
    vals.reserve(per_seed.size());
    for (const auto& series : per_seed) vals.push_back(series[i].mean_success);
    return std::sqrt(sample_variance(vals) / rep.num_seeds);
  };

  rep.best_mean = rep.seed_mean[best];
  rep.best_step = rep.steps[best];
  rep.stderr_at_best = stderr_at(best);
  rep.final_mean = rep.seed_mean[n - 1];
  rep.stderr_at_final = stderr_at(n - 1);
  return rep;
}

}  // namespace lexpol
