#include "lexpol/envs.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "lexpol/errors.hpp"

namespace lexpol {

namespace {

const char* kBlueText = "go to the blue goal";
const char* kRedText = "go to the red goal";
const char* kCompositeText = "go to the red goal, then the blue goal";

void write_pod(std::ostream& os, const void* p, std::size_t n) {
  os.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void read_pod(std::istream& is, void* p, std::size_t n) {
  is.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n));
  if (!is) throw IoError("truncated environment state");
}

}  // namespace

TaskKind task_kind_from_string(const std::string& s) {
  if (s == "tmaze_blue") return TaskKind::kTmazeBlue;
  if (s == "tmaze_red") return TaskKind::kTmazeRed;
  if (s == "tmaze_composite") return TaskKind::kTmazeComposite;
  if (s == "nav") return TaskKind::kNav;
  throw ConfigError("unknown task kind: " + s);
}

std::string to_string(TaskKind k) {
  switch (k) {
    case TaskKind::kTmazeBlue: return "tmaze_blue";
    case TaskKind::kTmazeRed: return "tmaze_red";
    case TaskKind::kTmazeComposite: return "tmaze_composite";
    case TaskKind::kNav: return "nav";
  }
  return "nav";
}

bool TMazeGeometry::inside(double x, double y) const {
  const bool in_bar = x >= bar_x0 && x <= bar_x1 && y >= bar_y0 && y <= bar_y1;
  const bool in_stem =
      x >= stem_x0 && x <= stem_x1 && y >= stem_y0 && y <= stem_y1;
  return in_bar || in_stem;
}

void TMazeGeometry::clip(double& x, double& y) const {
  if (inside(x, y)) return;
  const double bx = std::clamp(x, bar_x0, bar_x1);
  const double by = std::clamp(y, bar_y0, bar_y1);
  const double sx = std::clamp(x, stem_x0, stem_x1);
  const double sy = std::clamp(y, stem_y0, stem_y1);
  const double db = (bx - x) * (bx - x) + (by - y) * (by - y);
  const double ds = (sx - x) * (sx - x) + (sy - y) * (sy - y);
  if (db <= ds) {
    x = bx;
    y = by;
  } else {
    x = sx;
    y = sy;
  }
}

double TMazeGeometry::area() const {
  return (bar_x1 - bar_x0) * (bar_y1 - bar_y0) +
         (stem_x1 - stem_x0) * (stem_y1 - stem_y0);
}

TMazeEnv::TMazeEnv(const TaskSpec& spec, const SuiteParams& params)
    : spec_(spec), p_(params), state_(VectorXd::Zero(3)) {}

VectorXd TMazeEnv::reset(Rng& rng) {
  const double bar_area = (geo_.bar_x1 - geo_.bar_x0) * (geo_.bar_y1 - geo_.bar_y0);
  const double pick = uniform01(rng) * geo_.area();
  if (pick < bar_area) {
    x_ = uniform_range(rng, geo_.bar_x0, geo_.bar_x1);
    y_ = uniform_range(rng, geo_.bar_y0, geo_.bar_y1);
  } else {
    x_ = uniform_range(rng, geo_.stem_x0, geo_.stem_x1);
    y_ = uniform_range(rng, geo_.stem_y0, geo_.stem_y1);
  }
  steps_ = 0;
  phase_ = Phase::kSeekRed;
  aux_bit_ = composite() ? 0.0 : (uniform01(rng) < 0.5 ? 0.0 : 1.0);
  double gx, gy;
  goal_for_phase(gx, gy);
  prev_goal_dist_ = std::hypot(x_ - gx, y_ - gy);
  refresh_state();
  return state_;
}

void TMazeEnv::goal_for_phase(double& gx, double& gy) const {
  const bool red = composite() ? (phase_ == Phase::kSeekRed)
                               : (spec_.kind == TaskKind::kTmazeRed);
  gx = red ? geo_.red_x : geo_.blue_x;
  gy = red ? geo_.red_y : geo_.blue_y;
}

void TMazeEnv::refresh_state() {
  state_(0) = x_;
  state_(1) = y_;
  state_(2) = p_.phase_bit ? aux_bit_ : 0.0;
}

StepResult TMazeEnv::step(const VectorXd& a) {
  if (a.size() != 2) throw ShapeError("T-maze actions are 2-dimensional");
  if (!a.allFinite()) throw NumericError("non-finite action");
  ++steps_;
  x_ += p_.step_delta * std::clamp(a(0), -1.0, 1.0);
  y_ += p_.step_delta * std::clamp(a(1), -1.0, 1.0);
  geo_.clip(x_, y_);

  StepResult r;
  double gx, gy;
  goal_for_phase(gx, gy);
  const double dist = std::hypot(x_ - gx, y_ - gy);
  // Atomic tasks use plain negative-distance shaping. The composite uses
  // the potential difference instead, which telescopes over the episode:
  // cutting an episode short never avoids shaping cost, so the wrong-order
  // exit cannot outscore actually finishing both legs.
  if (composite())
    r.reward = p_.sparse ? 0.0 : p_.shaping * (prev_goal_dist_ - dist);
  else
    r.reward = p_.sparse ? 0.0 : -p_.shaping * dist;
  prev_goal_dist_ = dist;

  const double dred = std::hypot(x_ - geo_.red_x, y_ - geo_.red_y);
  const double dblue = std::hypot(x_ - geo_.blue_x, y_ - geo_.blue_y);

  if (!composite()) {
    if (dist <= p_.goal_radius) {
      r.reward += p_.goal_bonus;
      r.success = true;
      r.terminal = true;
      r.episode_over = true;
    }
  } else {
    if (phase_ == Phase::kSeekRed) {
      if (dblue <= p_.goal_radius) {
        r.reward += p_.wrong_order_penalty;
        phase_ = Phase::kDoneFail;
        r.terminal = true;
        r.episode_over = true;
      } else if (dred <= p_.goal_radius) {
        r.reward += p_.goal_bonus;
        phase_ = Phase::kSeekBlue;
        aux_bit_ = 1.0;
        prev_goal_dist_ = dblue;  // re-anchor the potential on the new goal
      }
    } else if (phase_ == Phase::kSeekBlue) {
      if (dblue <= p_.goal_radius) {
        r.reward += p_.goal_bonus;
        phase_ = Phase::kDoneOk;
        r.success = true;
        r.terminal = true;
        r.episode_over = true;
      }
    }
  }

  if (!r.episode_over && steps_ >= p_.horizon) {
    r.episode_over = true;
    if (composite()) r.reward += p_.timeout_penalty;
  }
  refresh_state();
  r.state = state_;
  return r;
}

int TMazeEnv::meta_id() const {
  if (composite() && p_.phase_metadata)
    return phase_ == Phase::kSeekRed ? spec_.meta_red : spec_.meta_blue;
  return spec_.meta;
}

void TMazeEnv::save(std::ostream& os) const {
  write_pod(os, &x_, sizeof(x_));
  write_pod(os, &y_, sizeof(y_));
  write_pod(os, &aux_bit_, sizeof(aux_bit_));
  write_pod(os, &prev_goal_dist_, sizeof(prev_goal_dist_));
  const std::int32_t ph = static_cast<std::int32_t>(phase_);
  write_pod(os, &ph, sizeof(ph));
  const std::int32_t st = steps_;
  write_pod(os, &st, sizeof(st));
}

void TMazeEnv::load(std::istream& is) {
  read_pod(is, &x_, sizeof(x_));
  read_pod(is, &y_, sizeof(y_));
  read_pod(is, &aux_bit_, sizeof(aux_bit_));
  read_pod(is, &prev_goal_dist_, sizeof(prev_goal_dist_));
  std::int32_t ph = 0, st = 0;
  read_pod(is, &ph, sizeof(ph));
  read_pod(is, &st, sizeof(st));
  phase_ = static_cast<Phase>(ph);
  steps_ = st;
  refresh_state();
}

PointNavEnv::PointNavEnv(const TaskSpec& spec, const SuiteParams& params)
    : spec_(spec), p_(params), state_(VectorXd::Zero(4)) {}

VectorXd PointNavEnv::reset(Rng& rng) {
  px_ = uniform_range(rng, -1.0, 1.0);
  py_ = uniform_range(rng, -1.0, 1.0);
  gx_ = uniform_range(rng, -0.8, 0.8);
  gy_ = uniform_range(rng, -0.8, 0.8);
  dx_ = uniform_range(rng, -0.8, 0.8);
  dy_ = uniform_range(rng, -0.8, 0.8);
  steps_ = 0;
  refresh_state();
  return state_;
}

void PointNavEnv::refresh_state() {
  const double s = static_cast<double>(spec_.nav_sign);
  const int info = spec_.nav_pair == 0 ? 0 : 2;
  const int decoy = spec_.nav_pair == 0 ? 2 : 0;
  state_(info) = s * (gx_ - px_);
  state_(info + 1) = s * (gy_ - py_);
  state_(decoy) = dx_ - px_;
  state_(decoy + 1) = dy_ - py_;
}

StepResult PointNavEnv::step(const VectorXd& a) {
  if (a.size() != 2) throw ShapeError("nav actions are 2-dimensional");
  if (!a.allFinite()) throw NumericError("non-finite action");
  ++steps_;
  px_ = std::clamp(px_ + p_.step_delta * std::clamp(a(0), -1.0, 1.0), -1.0, 1.0);
  py_ = std::clamp(py_ + p_.step_delta * std::clamp(a(1), -1.0, 1.0), -1.0, 1.0);

  StepResult r;
  const double dist = std::hypot(px_ - gx_, py_ - gy_);
  r.reward = p_.sparse ? 0.0 : -p_.shaping * dist;
  if (dist <= p_.goal_radius) {
    r.reward += p_.goal_bonus;
    r.success = true;
    r.terminal = true;
    r.episode_over = true;
  } else if (steps_ >= p_.horizon) {
    r.episode_over = true;
  }
  refresh_state();
  r.state = state_;
  return r;
}

void PointNavEnv::save(std::ostream& os) const {
  const double vals[6] = {px_, py_, gx_, gy_, dx_, dy_};
  write_pod(os, vals, sizeof(vals));
  const std::int32_t st = steps_;
  write_pod(os, &st, sizeof(st));
}

void PointNavEnv::load(std::istream& is) {
  double vals[6];
  read_pod(is, vals, sizeof(vals));
  px_ = vals[0];
  py_ = vals[1];
  gx_ = vals[2];
  gy_ = vals[3];
  dx_ = vals[4];
  dy_ = vals[5];
  std::int32_t st = 0;
  read_pod(is, &st, sizeof(st));
  steps_ = st;
  refresh_state();
}

const TaskMetadata& TaskSuite::variant(int meta) const {
  if (meta < 0 || meta >= static_cast<int>(meta_variants.size()))
    throw ShapeError("metadata variant index out of range");
  return meta_variants[static_cast<std::size_t>(meta)];
}

std::unique_ptr<Env> TaskSuite::make_env(int task_index) const {
  const TaskSpec& spec = tasks.at(static_cast<std::size_t>(task_index));
  switch (spec.kind) {
    case TaskKind::kTmazeBlue:
    case TaskKind::kTmazeRed:
    case TaskKind::kTmazeComposite:
      return std::make_unique<TMazeEnv>(spec, params);
    case TaskKind::kNav:
      return std::make_unique<PointNavEnv>(spec, params);
  }
  throw ConfigError("unhandled task kind");
}

TaskSuite make_suite(const std::string& name, const SuiteParams& params) {
  TaskSuite suite;
  suite.name = name;
  suite.params = params;

  if (name == "tmaze_pair") {
    suite.state_dim = 3;
    suite.action_dim = 2;
    suite.meta_variants = {{"blue", kBlueText}, {"red", kRedText}};
    TaskSpec blue;
    blue.task_id = "blue";
    blue.kind = TaskKind::kTmazeBlue;
    blue.meta = 0;
    TaskSpec red;
    red.task_id = "red";
    red.kind = TaskKind::kTmazeRed;
    red.meta = 1;
    suite.tasks = {blue, red};
    return suite;
  }

  if (name == "tmaze_composite") {
    suite.state_dim = 3;
    suite.action_dim = 2;
    suite.meta_variants = {{"red_then_blue", kCompositeText},
                          {"red_then_blue", kRedText},
                          {"red_then_blue", kBlueText}};
    TaskSpec t;
    t.task_id = "red_then_blue";
    t.kind = TaskKind::kTmazeComposite;
    t.meta = 0;
    t.meta_red = 1;
    t.meta_blue = 2;
    suite.tasks = {t};
    return suite;
  }

  if (name == "nav_k_tasks" || name == "nav_k_tasks_identical") {
    SuiteParams p = params;
    if (name == "nav_k_tasks_identical") p.identical_semantics = true;
    suite.params = p;
    const int k = p.nav_tasks;
    if (k < 2) throw ConfigError("nav_k_tasks needs at least 2 tasks");
    suite.state_dim = 4;
    suite.action_dim = 2;
    const char* texts[4] = {"go to the goal following beacon one",
                            "go to the goal following beacon two",
                            "go to the goal against beacon one",
                            "go to the goal against beacon two"};
    std::set<std::pair<int, int>> semantics;
    for (int i = 0; i < k; ++i) {
      TaskSpec t;
      t.task_id = "nav" + std::to_string(i);
      t.kind = TaskKind::kNav;
      t.meta = i;
      if (p.identical_semantics) {
        t.nav_pair = 0;
        t.nav_sign = 1;
        suite.meta_variants.push_back({t.task_id, texts[0]});
      } else {
        const int variant = i % 4;
        t.nav_pair = variant % 2;
        t.nav_sign = variant < 2 ? 1 : -1;
        suite.meta_variants.push_back({t.task_id, texts[variant]});
      }
      semantics.insert({t.nav_pair, t.nav_sign});
      suite.tasks.push_back(t);
    }
    if (!p.identical_semantics && semantics.size() < 2)
      throw ConfigError(
          "nav_k_tasks requires at least two distinct reward semantics");
    return suite;
  }

  throw ConfigError("unknown suite: " + name);
}

void TaskSuite::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write suite file " + path.string());
  out.precision(17);
  out << "lexpol-suite v1\n";
  out << "name " << name << '\n';
  out << "state_dim " << state_dim << '\n';
  out << "action_dim " << action_dim << '\n';
  out << "horizon " << params.horizon << '\n';
  out << "shaping " << params.shaping << '\n';
  out << "sparse " << (params.sparse ? 1 : 0) << '\n';
  out << "step_delta " << params.step_delta << '\n';
  out << "goal_radius " << params.goal_radius << '\n';
  out << "phase_bit " << (params.phase_bit ? 1 : 0) << '\n';
  out << "phase_metadata " << (params.phase_metadata ? 1 : 0) << '\n';
  out << "goal_bonus " << params.goal_bonus << '\n';
  out << "wrong_order_penalty " << params.wrong_order_penalty << '\n';
  out << "timeout_penalty " << params.timeout_penalty << '\n';
  out << "nav_tasks " << params.nav_tasks << '\n';
  out << "identical_semantics " << (params.identical_semantics ? 1 : 0) << '\n';
  out << "variants " << meta_variants.size() << '\n';
  for (std::size_t i = 0; i < meta_variants.size(); ++i)
    out << "variant " << i << ' ' << meta_variants[i].task_id << ' '
        << meta_variants[i].text << '\n';
  out << "tasks " << tasks.size() << '\n';
  for (const auto& t : tasks)
    out << "task " << t.task_id << " kind " << to_string(t.kind) << " meta "
        << t.meta << " meta_red " << t.meta_red << " meta_blue " << t.meta_blue
        << " pair " << t.nav_pair << " sign " << t.nav_sign << '\n';
  out << "end\n";
  if (!out) throw IoError("write failed on " + path.string());
}

TaskSuite TaskSuite::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open suite file " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "lexpol-suite v1")
    throw IoError("bad suite file header in " + path.string());

  TaskSuite suite;
  auto fail = [&path](const std::string& what) -> IoError {
    return IoError("suite file " + path.string() + ": " + what);
  };
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "end") break;
    if (key == "name") ls >> suite.name;
    else if (key == "state_dim") ls >> suite.state_dim;
    else if (key == "action_dim") ls >> suite.action_dim;
    else if (key == "horizon") ls >> suite.params.horizon;
    else if (key == "shaping") ls >> suite.params.shaping;
    else if (key == "sparse") { int v; ls >> v; suite.params.sparse = v != 0; }
    else if (key == "step_delta") ls >> suite.params.step_delta;
    else if (key == "goal_radius") ls >> suite.params.goal_radius;
    else if (key == "phase_bit") { int v; ls >> v; suite.params.phase_bit = v != 0; }
    else if (key == "phase_metadata") { int v; ls >> v; suite.params.phase_metadata = v != 0; }
    else if (key == "goal_bonus") ls >> suite.params.goal_bonus;
    else if (key == "wrong_order_penalty") ls >> suite.params.wrong_order_penalty;
    else if (key == "timeout_penalty") ls >> suite.params.timeout_penalty;
    else if (key == "nav_tasks") ls >> suite.params.nav_tasks;
    else if (key == "identical_semantics") { int v; ls >> v; suite.params.identical_semantics = v != 0; }
    else if (key == "variants") {
      std::size_t n;
      ls >> n;
      suite.meta_variants.resize(n);
    } else if (key == "variant") {
      std::size_t idx;
      std::string id;
      ls >> idx >> id;
      if (idx >= suite.meta_variants.size()) throw fail("variant index out of range");
      std::string text;
      std::getline(ls, text);
      if (!text.empty() && text.front() == ' ') text.erase(0, 1);
      if (text.empty()) throw fail("variant with empty text");
      suite.meta_variants[idx] = {id, text};
    } else if (key == "tasks") {
      // count only; task lines follow
    } else if (key == "task") {
      TaskSpec t;
      std::string tok, kind;
      ls >> t.task_id;
      while (ls >> tok) {
        if (tok == "kind") { ls >> kind; t.kind = task_kind_from_string(kind); }
        else if (tok == "meta") ls >> t.meta;
        else if (tok == "meta_red") ls >> t.meta_red;
        else if (tok == "meta_blue") ls >> t.meta_blue;
        else if (tok == "pair") ls >> t.nav_pair;
        else if (tok == "sign") ls >> t.nav_sign;
        else throw fail("unknown task attribute " + tok);
      }
      suite.tasks.push_back(t);
    } else {
      throw fail("unknown key " + key);
    }
    if (ls.fail() && !ls.eof()) throw fail("malformed line: " + line);
  }
  if (suite.tasks.empty()) throw fail("no tasks");
  if (suite.state_dim < 1 || suite.action_dim < 1) throw fail("bad dims");
  for (const auto& t : suite.tasks) {
    if (t.meta < 0 || t.meta >= static_cast<int>(suite.meta_variants.size()))
      throw fail("task metadata index out of range");
  }
  return suite;
}

TaskSuite resolve_suite(const std::string& name_or_path) {
  if (name_or_path == "tmaze_pair" || name_or_path == "tmaze_composite" ||
      name_or_path == "nav_k_tasks" || name_or_path == "nav_k_tasks_identical")
    return make_suite(name_or_path);
  if (std::filesystem::exists(name_or_path)) return TaskSuite::load(name_or_path);
  throw ConfigError("unknown suite or missing suite file: " + name_or_path);
}

}  // namespace lexpol
