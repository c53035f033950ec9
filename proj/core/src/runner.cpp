#include "lexpol/runner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "lexpol/checkpoint.hpp"
#include "lexpol/errors.hpp"
#include "lexpol/gradcheck.hpp"
#include "lexpol/mixture.hpp"

namespace fs = std::filesystem;

namespace lexpol {

namespace {

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

MatrixXd randn_mat(Eigen::Index r, Eigen::Index c, Rng& g) {
  MatrixXd m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = normal01(g);
  return m;
}

}  // namespace

RunAllResult run_config(const RunConfig& cfg, std::int64_t halt_after,
                        bool resume) {
  cfg.validate();
  TaskSuite suite = cfg.build_suite();

  RunAllResult res;
  res.out_dir = cfg.resolved_out_dir();
  fs::create_directories(res.out_dir);
  {
    std::ofstream c(res.out_dir / "config.copy");
    if (!c) throw IoError("cannot write " + (res.out_dir / "config.copy").string());
    c << cfg.serialized();
  }
  suite.save(res.out_dir / "suite.txt");

  std::vector<std::vector<EvalSnapshot>> series;
  bool halted = false;
  for (std::uint64_t seed : cfg.seeds) {
    AgentConfig acfg = cfg.agent;
    acfg.seed = seed;
    TrainOptions opt;
    opt.budget_steps = cfg.budget_steps;
    opt.eval_interval = cfg.eval_interval;
    opt.eval_trials = cfg.eval_trials;
    opt.log_interval = cfg.log_interval;
    opt.ckpt_interval = cfg.ckpt_interval;
    opt.halt_after = halt_after;
    opt.out_dir = res.out_dir;
    if (resume) opt.resume_from = latest_checkpoint(res.out_dir, seed);
    Trainer tr(acfg, cfg.sac, suite, opt);
    RunSummary s = tr.run();
    if (s.steps < cfg.budget_steps) halted = true;
    series.push_back(s.history);
    res.summaries.push_back(std::move(s));
  }
  if (halted) return res;  // partial run, report deferred to the resume

  res.report = aggregate(series);
  res.complete = true;
  fs::create_directories(res.out_dir / "report");
  {
    std::ofstream s(res.out_dir / "report" / "summary.txt");
    if (!s) throw IoError("cannot write run summary");
    s << "suite " << suite.name << "\n";
    s << "mode " << to_string(cfg.agent.mode) << "\n";
    s << "seeds " << cfg.seeds.size() << "\n";
    s << "budget_steps " << cfg.budget_steps << "\n";
    s << "best_mean " << fmt17(res.report.best_mean) << "\n";
    s << "best_step " << res.report.best_step << "\n";
    s << "stderr_at_best " << fmt17(res.report.stderr_at_best) << "\n";
    s << "final_mean " << fmt17(res.report.final_mean) << "\n";
    s << "stderr_at_final " << fmt17(res.report.stderr_at_final) << "\n";
  }
  {
    std::ofstream csv(res.out_dir / "report" / "aggregate_eval.csv");
    if (!csv) throw IoError("cannot write aggregate eval csv");
    csv << "step,seed_mean\n";
    for (std::size_t i = 0; i < res.report.steps.size(); ++i)
      csv << res.report.steps[i] << ',' << fmt17(res.report.seed_mean[i]) << "\n";
  }
  return res;
}

std::string latest_checkpoint(const fs::path& out_dir, std::uint64_t seed) {
  fs::path root = out_dir / "ckpt" / ("seed_" + std::to_string(seed));
  if (!fs::is_directory(root)) return {};
  std::int64_t best = -1;
  fs::path best_path;
  for (const auto& e : fs::directory_iterator(root)) {
    if (!e.is_directory()) continue;
    std::string nm = e.path().filename().string();
    if (nm.rfind("step_", 0) != 0) continue;
    char* end = nullptr;
    long long v = std::strtoll(nm.c_str() + 5, &end, 10);
    if (end == nm.c_str() + 5 || *end != '\0') continue;
    if (v > best) {
      best = v;
      best_path = e.path();
    }
  }
  return best < 0 ? std::string{} : best_path.string();
}

EvalSnapshot eval_checkpoint(const std::string& ckpt_dir, const TaskSuite& suite,
                             int trials, std::uint64_t seed) {
  auto [acfg, scfg] = load_agent_hyper(fs::path(ckpt_dir) / "hyper.txt");
  auto actor = make_actor(acfg, scfg, suite, /*load_experts=*/false);
  actor->read_from_checkpoint(Checkpoint::load(ckpt_dir));
  return evaluate(*actor, suite, trials, seed);
}

void emit_dominance_map(const std::string& ckpt_dir, const TaskSuite& suite,
                        int grid_res, const std::string& phase,
                        const fs::path& out_csv) {
  if (grid_res < 2) throw ConfigError("map resolution must be at least 2");
  auto [acfg, scfg] = load_agent_hyper(fs::path(ckpt_dir) / "hyper.txt");
  auto actor = make_actor(acfg, scfg, suite, /*load_experts=*/false);
  actor->read_from_checkpoint(Checkpoint::load(ckpt_dir));
  if (actor->num_subpolicies() < 2)
    throw ConfigError(
        "dominance map needs a mixture with at least two sub-policies");

  const TaskSpec* comp = nullptr;
  for (const auto& t : suite.tasks)
    if (t.kind == TaskKind::kTmazeComposite) {
      comp = &t;
      break;
    }
  if (!comp)
    throw ConfigError("suite has no composite T-maze task to map");

  int meta = 0;
  if (phase == "seek_red")
    meta = comp->meta_red;
  else if (phase == "seek_blue")
    meta = comp->meta_blue;
  else
    throw ConfigError("phase must be seek_red or seek_blue, got '" + phase + "'");

  VectorXd alpha = actor->gate_weights(meta);
  Eigen::Index arg = 0;
  double amax = alpha.maxCoeff(&arg);

  TMazeGeometry geo;
  const double cell = (geo.bar_x1 - geo.bar_x0) / grid_res;
  const int nx = grid_res;
  const int ny = static_cast<int>(std::lround((geo.bar_y1 - geo.stem_y0) / cell));

  std::ofstream csv(out_csv);
  if (!csv) throw IoError("cannot write " + out_csv.string());
  csv << "x,y,argmax_idx,max_alpha\n";
  char buf[160];
  for (int iy = 0; iy < ny; ++iy) {
    double y = geo.stem_y0 + (iy + 0.5) * cell;
    for (int ix = 0; ix < nx; ++ix) {
      double x = geo.bar_x0 + (ix + 0.5) * cell;
      if (!geo.inside(x, y)) continue;
      std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%d,%.10f\n", x, y,
                    static_cast<int>(arg), amax);
      csv << buf;
    }
  }
}

std::vector<DominanceCell> read_dominance_map(const fs::path& csv) {
  std::ifstream in(csv);
  if (!in) throw IoError("cannot open " + csv.string());
  std::string line;
  if (!std::getline(in, line) || line != "x,y,argmax_idx,max_alpha")
    throw IoError(csv.string() + ": bad dominance map header");
  std::vector<DominanceCell> cells;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    DominanceCell c;
    if (!(ls >> c.x >> c.y >> c.argmax_idx >> c.max_alpha))
      throw IoError(csv.string() + ": bad dominance map row: " + line);
    cells.push_back(c);
  }
  return cells;
}

std::vector<std::vector<EvalSnapshot>> load_eval_series(const fs::path& run_dir) {
  RunConfig rc = RunConfig::parse_file(run_dir / "config.copy");
  std::vector<std::vector<EvalSnapshot>> out;
  for (std::uint64_t seed : rc.seeds) {
    fs::path csv =
        run_dir / "report" / ("seed_" + std::to_string(seed) + "_eval.csv");
    std::ifstream in(csv);
    if (!in) throw IoError("missing eval series " + csv.string());
    std::string line;
    if (!std::getline(in, line))
      throw IoError(csv.string() + ": empty eval series");
    std::vector<EvalSnapshot> series;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::replace(line.begin(), line.end(), ',', ' ');
      std::istringstream ls(line);
      EvalSnapshot s;
      if (!(ls >> s.step >> s.mean_success))
        throw IoError(csv.string() + ": bad eval row: " + line);
      double v;
      while (ls >> v) s.per_task_success.push_back(v);
      series.push_back(std::move(s));
    }
    if (series.empty()) throw IoError(csv.string() + ": no eval rows");
    out.push_back(std::move(series));
  }
  return out;
}

std::vector<CompareRow> compare_runs(const std::vector<std::string>& run_dirs) {
  if (run_dirs.empty())
    throw ConfigError("compare needs at least one run directory");
  std::vector<CompareRow> rows;
  for (const std::string& d : run_dirs) {
    fs::path dir(d);
    RunConfig rc = RunConfig::parse_file(dir / "config.copy");
    auto series = load_eval_series(dir);
    EvalReport rep = aggregate(series);

    CompareRow row;
    row.name = dir.filename().string();
    if (row.name.empty()) row.name = dir.parent_path().filename().string();
    row.best_mean = rep.best_mean;
    row.stderr_best = rep.stderr_at_best;
    row.num_seeds = rep.num_seeds;
    for (const auto& s : series) {
      double best = s.front().mean_success;
      for (const auto& snap : s) best = std::max(best, snap.mean_success);
      row.per_seed_best.push_back(best);
    }
    row.upper_bound = rc.agent.mode == Mode::kSingleTask;
    rows.push_back(std::move(row));
  }

  std::stable_sort(rows.begin(), rows.end(),
                   [](const CompareRow& a, const CompareRow& b) {
                     if (a.upper_bound != b.upper_bound) return !a.upper_bound;
                     return a.best_mean > b.best_mean;
                   });

  // Welch test of the top-ranked method against every other non-upper-bound
  // row; Bonferroni over the family of tests actually run.
  std::vector<std::size_t> tested;
  for (std::size_t i = 0; i < rows.size(); ++i)
    if (!rows[i].upper_bound) tested.push_back(i);
  if (tested.size() >= 2) {
    const CompareRow& top = rows[tested[0]];
    int family = 0;
    for (std::size_t j = 1; j < tested.size(); ++j)
      if (top.per_seed_best.size() >= 2 &&
          rows[tested[j]].per_seed_best.size() >= 2)
        ++family;
    for (std::size_t j = 1; j < tested.size(); ++j) {
      CompareRow& r = rows[tested[j]];
      if (top.per_seed_best.size() < 2 || r.per_seed_best.size() < 2) continue;
      r.sig =
          welch_bonferroni(top.per_seed_best, r.per_seed_best, std::max(1, family));
      r.tested = true;
    }
  }
  return rows;
}

void write_compare_table(const std::vector<CompareRow>& rows, std::ostream& out) {
  std::size_t w = 4;
  for (const auto& r : rows) w = std::max(w, r.name.size());
  auto pad = [](std::string s, std::size_t n) {
    if (s.size() < n) s.resize(n, ' ');
    return s;
  };
  out << pad("run", w) << "  best mean +- stderr  seeds\n";
  std::string rule(w + 29, '-');
  out << rule << "\n";
  bool saw_upper = false;
  bool any_tested = false;
  for (const auto& r : rows) {
    if (r.upper_bound && !saw_upper) {
      out << rule << "\n";
      saw_upper = true;
    }
    char num[96];
    std::snprintf(num, sizeof(num), "%.3f +- %.3f", r.best_mean, r.stderr_best);
    out << pad(r.name, w) << "  " << num
        << (r.tested && r.sig.significant ? " *" : "  ");
    char tail[64];
    std::snprintf(tail, sizeof(tail), "  %d", r.num_seeds);
    out << tail;
    if (r.upper_bound) {
      out << "  (upper bound)";
    } else if (r.tested) {
      char p[64];
      std::snprintf(p, sizeof(p), "  p_adj=%.3g", r.sig.p_adjusted);
      out << p;
      any_tested = true;
    }
    out << "\n";
  }
  if (any_tested)
    out << "* differs from the top row (Welch t test, Bonferroni-adjusted "
           "p < 0.05)\n";
}

namespace {

// One finite-difference audit instance per (case, seed). Each builds small
// fresh modules, wires the same backward calls the learner uses, and lets
// grad_check compare tape gradients against central differences.

GradCheckReport check_actor_loss(std::uint64_t seed, double tol) {
  const int ds = 3, m = 2, B = 4, k = 2;
  AgentConfig a;
  a.mode = Mode::kLexpol;
  a.k = k;
  a.n = 6;
  a.stopgrad_context = false;  // so the context head is part of the audit
  a.actor_hidden = {8};
  a.critic_hidden = {10};
  a.gate_hidden = {5};
  a.seed = seed;
  a.context_seed = seed + 17;
  SacConfig sc;
  std::vector<TaskMetadata> variants = {{"left", "go to the blue goal"},
                                        {"right", "go to the red goal"}};
  CompositeActor actor(a, sc, ds, m, variants, make_provider(a));
  Rng rq1 = make_stream(seed, "gc-q1");
  Rng rq2 = make_stream(seed, "gc-q2");
  TwinCritics critics(ds, m, a.critic_hidden, 0.005, rq1, rq2);

  Rng data = make_stream(seed, "gc-data");
  MatrixXd S = randn_mat(ds, B, data);
  const std::vector<int> meta = {0, 1, 0, 1};
  const double temp = 0.2;

  // Margins the checker cannot watch itself: critic relu kinks and the
  // q1/q2 argmin switch both sit outside the registered nets.
  auto clean = [&]() {
    Rng noise = make_stream(seed, "gc-noise");
    PolicySample cur = actor.sample_nograd(S, meta, noise);
    MatrixXd sa(ds + m, B);
    sa << S, cur.a;
    RowVectorXd v1 = critics.q1_forward(sa);
    RowVectorXd v2 = critics.q2_forward(sa);
    double gap = (v1 - v2).cwiseAbs().minCoeff();
    return std::min(gap, std::min(critics.q1().min_abs_relu_preact(),
                                  critics.q2().min_abs_relu_preact()));
  };
  auto resample = [&]() {
    for (int tries = 0; tries < 256; ++tries) {
      S = randn_mat(ds, B, data);
      if (clean() > 1e-3) return;
    }
  };
  if (clean() <= 1e-3) resample();

  LossFn loss = [&](bool with_grad) {
    Rng noise = make_stream(seed, "gc-noise");
    if (!with_grad) {
      PolicySample cur = actor.sample_nograd(S, meta, noise);
      MatrixXd sa(ds + m, B);
      sa << S, cur.a;
      RowVectorXd v1 = critics.q1().forward_nograd(sa).row(0);
      RowVectorXd v2 = critics.q2().forward_nograd(sa).row(0);
      RowVectorXd q = v1.cwiseMin(v2);
      return (temp * cur.log_prob - q).mean();
    }
    actor.zero_grads();
    critics.zero_grads();
    PolicySample cur = actor.sample(S, meta, noise);
    MatrixXd sa(ds + m, B);
    sa << S, cur.a;
    RowVectorXd q = critics.online_min(sa);
    double L = (temp * cur.log_prob - q).mean();
    MatrixXd g_sa =
        critics.online_min_backward(RowVectorXd::Constant(B, -1.0 / B), false);
    actor.backward(g_sa.bottomRows(m), RowVectorXd::Constant(B, temp / B));
    return L;
  };

  std::vector<DenseNet*> nets;
  for (int i = 0; i < k; ++i) {
    nets.push_back(&actor.sub_policy(i).trunk());
    nets.push_back(&actor.sub_policy(i).mean_layer());
    nets.push_back(&actor.sub_policy(i).logstd_layer());
  }
  nets.push_back(&actor.gate_net());
  nets.push_back(&actor.context_head().net());

  GradCheckOptions opt;
  opt.tol = tol;
  return grad_check(nets, loss, opt, resample);
}

GradCheckReport check_critic_loss(std::uint64_t seed, double tol) {
  const int ds = 4, m = 2, B = 6;
  Rng rq1 = make_stream(seed, "gc-q1");
  Rng rq2 = make_stream(seed, "gc-q2");
  TwinCritics critics(ds, m, {12}, 0.005, rq1, rq2);
  Rng data = make_stream(seed, "gc-data");
  MatrixXd SA = randn_mat(ds + m, B, data);
  RowVectorXd y = randn_mat(1, B, data).row(0);

  LossFn loss = [&](bool with_grad) {
    if (!with_grad) {
      RowVectorXd d1 = critics.q1().forward_nograd(SA).row(0) - y;
      RowVectorXd d2 = critics.q2().forward_nograd(SA).row(0) - y;
      return (d1.squaredNorm() + d2.squaredNorm()) / B;
    }
    critics.zero_grads();
    RowVectorXd d1 = critics.q1_forward(SA) - y;
    RowVectorXd d2 = critics.q2_forward(SA) - y;
    critics.backward_online(2.0 / B * d1, 2.0 / B * d2);
    return (d1.squaredNorm() + d2.squaredNorm()) / B;
  };
  auto resample = [&]() {
    SA = randn_mat(ds + m, B, data);
    y = randn_mat(1, B, data).row(0);
  };
  std::vector<DenseNet*> nets = {&critics.q1(), &critics.q2()};
  GradCheckOptions opt;
  opt.tol = tol;
  return grad_check(nets, loss, opt, resample);
}

GradCheckReport check_gate_path(std::uint64_t seed, double tol) {
  const int d_raw = 6, n = 5, k = 3, B = 4;
  Rng init = make_stream(seed, "gc-gate-init");
  DenseNet gate_net = DenseNet::make_mlp(n, {7}, k, Activation::kRelu,
                                         Activation::kIdentity);
  gate_net.init_uniform_fanin(init);
  Rng cinit = make_stream(seed, "gc-ctx-init");
  ContextHead head = ContextHead::make_default(d_raw, n, cinit, false);
  Rng data = make_stream(seed, "gc-data");
  MatrixXd Z = randn_mat(d_raw, B, data);
  MatrixXd C = randn_mat(k, B, data);

  LossFn loss = [&](bool with_grad) {
    if (!with_grad) {
      MatrixXd zc = head.net().forward_nograd(Z);
      MatrixXd alpha = softmax_cols(gate_net.forward_nograd(zc));
      return (C.array() * alpha.array()).sum() / B;
    }
    gate_net.zero_grads();
    head.net().zero_grads();
    MatrixXd zc = head.apply_cols(Z);
    MatrixXd alpha = softmax_cols(gate_net.forward(zc));
    MatrixXd g_z = gate_backward(gate_net, alpha, C / double(B), true);
    head.backward(g_z);
    return (C.array() * alpha.array()).sum() / B;
  };
  auto resample = [&]() {
    Z = randn_mat(d_raw, B, data);
    C = randn_mat(k, B, data);
  };
  std::vector<DenseNet*> nets = {&gate_net, &head.net()};
  GradCheckOptions opt;
  opt.tol = tol;
  return grad_check(nets, loss, opt, resample);
}

GradCheckReport check_encoder_mixture(std::uint64_t seed, double tol) {
  const int ds = 3, repr = 3, d_raw = 5, n = 4, B = 4, k_enc = 2;
  EncoderMixture enc =
      EncoderMixture::make(k_enc, ds, repr, {6}, {4}, d_raw, n, false, seed);
  Rng data = make_stream(seed, "gc-data");
  MatrixXd S = randn_mat(ds, B, data);
  MatrixXd Z = randn_mat(d_raw, B, data);
  MatrixXd W = randn_mat(repr, B, data);

  LossFn loss = [&](bool with_grad) {
    if (!with_grad) {
      MatrixXd R = enc.blend_nograd(S, Z);
      return (W.array() * R.array()).sum() / B;
    }
    enc.zero_grads();
    MatrixXd R = enc.blend(S, Z);
    enc.backward(W / double(B));
    return (W.array() * R.array()).sum() / B;
  };
  auto resample = [&]() {
    S = randn_mat(ds, B, data);
    Z = randn_mat(d_raw, B, data);
  };
  std::vector<DenseNet*> nets;
  for (auto& e : enc.encoders()) nets.push_back(&e);
  nets.push_back(&enc.gate_net());
  nets.push_back(&enc.head().net());
  GradCheckOptions opt;
  opt.tol = tol;
  return grad_check(nets, loss, opt, resample);
}

void fold(GradSuiteResult& acc, const std::string& label,
          const GradCheckReport& rep, std::ostream* log) {
  ++acc.instances;
  if (rep.max_rel_err > acc.max_rel_err) {
    acc.max_rel_err = rep.max_rel_err;
    acc.worst_case = label + " (" + rep.worst + ")";
  }
  if (!rep.pass) acc.pass = false;
  if (log)
    *log << label << " max_rel_err " << rep.max_rel_err
         << (rep.pass ? " ok" : " FAIL") << " resamples " << rep.resamples
         << "\n";
}

}  // namespace

GradSuiteResult run_gradcheck_suite(int seeds_per_case, double tol,
                                    std::ostream* log) {
  if (seeds_per_case < 1)
    throw ConfigError("gradcheck needs at least one instance per case");
  GradSuiteResult res;
  res.pass = true;
  for (int s = 0; s < seeds_per_case; ++s) {
    std::uint64_t seed = 1000 + static_cast<std::uint64_t>(s);
    fold(res, "actor-loss seed " + std::to_string(s),
         check_actor_loss(seed, tol), log);
    fold(res, "critic-loss seed " + std::to_string(s),
         check_critic_loss(seed, tol), log);
    fold(res, "gate-path seed " + std::to_string(s), check_gate_path(seed, tol),
         log);
    fold(res, "encoder-mix seed " + std::to_string(s),
         check_encoder_mixture(seed, tol), log);
  }
  return res;
}

}  // namespace lexpol
