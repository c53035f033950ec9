#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "lexpol/errors.hpp"
#include "lexpol/runner.hpp"

using namespace lexpol;

namespace {

int dispatch(int argc, char** argv) {
  CLI::App app{"Context-gated mixture-of-policies trainer"};
  app.require_subcommand(1);

  std::string train_config;
  bool dry_run = false, resume = false;
  std::int64_t halt_after = 0;
  CLI::App* train = app.add_subcommand("train", "Train a config across its seeds");
  train->add_option("config", train_config, "run config file (key=value lines)")
      ->required();
  train->add_flag("--dry-run", dry_run,
                  "print the fully resolved config and exit");
  train->add_flag("--resume", resume,
                  "continue each seed from its latest checkpoint");
  train->add_option("--halt-after-steps", halt_after,
                    "stop at the first tick boundary at or past this step");

  std::string eval_ckpt, eval_suite;
  int eval_trials = 5;
  std::uint64_t eval_seed = 0;
  CLI::App* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a suite");
  ev->add_option("ckpt", eval_ckpt, "checkpoint directory")->required();
  ev->add_option("suite", eval_suite, "builtin suite name or suite file")
      ->required();
  ev->add_option("--trials", eval_trials, "deterministic episodes per task");
  ev->add_option("--seed", eval_seed, "eval start-state stream seed");

  std::string map_ckpt, map_suite, map_phase, map_out = "dominance.csv";
  int map_res = 64;
  CLI::App* mp = app.add_subcommand(
      "map", "Write the sub-policy dominance map over the T region");
  mp->add_option("ckpt", map_ckpt, "checkpoint directory")->required();
  mp->add_option("suite", map_suite, "suite with a composite T-maze task")
      ->required();
  mp->add_option("--phase", map_phase, "seek_red or seek_blue")->required();
  mp->add_option("--res", map_res, "grid cells across the bar width");
  mp->add_option("--out", map_out, "output csv path");

  std::vector<std::string> cmp_dirs;
  CLI::App* cmp =
      app.add_subcommand("compare", "Rank finished runs with Welch t tests");
  cmp->add_option("runs", cmp_dirs, "run output directories")
      ->required()
      ->expected(-1);

  int gc_instances = 6;
  double gc_tol = 1e-4;
  CLI::App* gc = app.add_subcommand(
      "gradcheck", "Finite-difference audit of every gradient path");
  gc->add_option("--instances", gc_instances, "fresh instances per loss case");
  gc->add_option("--tol", gc_tol, "max relative error allowed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  if (*train) {
    RunConfig cfg = RunConfig::parse_file(train_config);
    cfg.validate();
    if (dry_run) {
      std::cout << cfg.serialized();
      return 0;
    }
    RunAllResult r = run_config(cfg, halt_after, resume);
    if (!r.complete) {
      std::printf("halted mid-run; continue with: train %s --resume\n",
                  train_config.c_str());
      return 0;
    }
    std::printf("best_mean %.6f +- %.6f at step %lld\n", r.report.best_mean,
                r.report.stderr_at_best,
                static_cast<long long>(r.report.best_step));
    std::printf("final_mean %.6f +- %.6f\n", r.report.final_mean,
                r.report.stderr_at_final);
    std::printf("outputs in %s\n", r.out_dir.c_str());
    return 0;
  }

  if (*ev) {
    TaskSuite suite = resolve_suite(eval_suite);
    EvalSnapshot snap = eval_checkpoint(eval_ckpt, suite, eval_trials, eval_seed);
    std::printf("mean_success %.17g\n", snap.mean_success);
    for (std::size_t i = 0; i < snap.per_task_success.size(); ++i)
      std::printf("%s %.17g\n", suite.tasks[i].task_id.c_str(),
                  snap.per_task_success[i]);
    return 0;
  }

  if (*mp) {
    TaskSuite suite = resolve_suite(map_suite);
    emit_dominance_map(map_ckpt, suite, map_res, map_phase, map_out);
    std::printf("wrote %s\n", map_out.c_str());
    return 0;
  }

  if (*cmp) {
    auto rows = compare_runs(cmp_dirs);
    write_compare_table(rows, std::cout);
    return 0;
  }

  if (*gc) {
    GradSuiteResult r = run_gradcheck_suite(gc_instances, gc_tol, &std::cout);
    std::printf("instances %d max_rel_err %.3g %s\n", r.instances,
                r.max_rel_err, r.pass ? "pass" : "FAIL");
    if (!r.pass) {
      std::printf("worst: %s\n", r.worst_case.c_str());
      return 3;
    }
    return 0;
  }

  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return dispatch(argc, argv);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const ShapeError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return 3;
  } catch (const IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
