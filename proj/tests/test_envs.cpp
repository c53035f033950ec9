#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <filesystem>
#include <limits>
#include <sstream>

#include "doctest.h"
#include "lexpol/envs.hpp"
#include "lexpol/errors.hpp"

using namespace lexpol;

namespace {

std::unique_ptr<Env> atomic_env(const char* which, SuiteParams p = {}) {
  TaskSuite suite = make_suite("tmaze_pair", p);
  return suite.make_env(which == std::string("blue") ? 0 : 1);
}

std::unique_ptr<Env> composite_env(SuiteParams p = {}) {
  TaskSuite suite = make_suite("tmaze_composite", p);
  return suite.make_env(0);
}

// walk straight toward a target, one saturated step at a time
VectorXd toward(const VectorXd& s, double tx, double ty) {
  VectorXd a(2);
  const double dx = tx - s(0), dy = ty - s(1);
  const double n = std::max(std::abs(dx), std::abs(dy));
  if (n < 1e-12) return VectorXd::Zero(2);
  a << dx / n, dy / n;
  return a;
}

}  // namespace

TEST_CASE("reset is a pure function of the rng stream") {
  auto env = atomic_env("blue");
  Rng a = make_stream(7, "reset");
  Rng b = make_stream(7, "reset");
  VectorXd s1 = env->reset(a);
  VectorXd s2 = env->reset(b);
  CHECK((s1.array() == s2.array()).all());
  Rng c = make_stream(8, "reset");
  VectorXd s3 = env->reset(c);
  CHECK((s1.array() != s3.array()).any());
}

TEST_CASE("ten thousand resets stay inside the T region") {
  TMazeGeometry geo;
  auto env = composite_env();
  Rng rng = make_stream(9, "reset");
  for (int i = 0; i < 10000; ++i) {
    VectorXd s = env->reset(rng);
    CHECK(geo.inside(s(0), s(1)));
  }
}

TEST_CASE("start positions are uniform over the region area") {
  // chi-squared over an area-weighted partition: 8 bar cells + 4 stem cells
  TMazeGeometry geo;
  auto env = composite_env();
  Rng rng = make_stream(10, "reset");
  const int N = 20000;
  const int kBar = 8, kStem = 4;
  std::vector<double> counts(kBar + kStem, 0.0);
  for (int i = 0; i < N; ++i) {
    VectorXd s = env->reset(rng);
    const double x = s(0), y = s(1);
    if (y >= geo.bar_y0) {
      int c = std::min(kBar - 1, static_cast<int>((x - geo.bar_x0) / 2.0 * kBar));
      counts[static_cast<std::size_t>(c)] += 1.0;
    } else {
      int c = std::min(kStem - 1,
                       static_cast<int>((y - geo.stem_y0) / 1.0 * kStem));
      counts[static_cast<std::size_t>(kBar + c)] += 1.0;
    }
  }
  const double bar_cell = (2.0 * 0.4) / kBar;   // each bar cell 0.25x0.4
  const double stem_cell = (0.4 * 1.0) / kStem; // each stem cell 0.4x0.25
  double chi2 = 0.0;
  for (int c = 0; c < kBar + kStem; ++c) {
    const double cell = c < kBar ? bar_cell : stem_cell;
    const double expect = N * cell / geo.area();
    const double d = counts[static_cast<std::size_t>(c)] - expect;
    chi2 += d * d / expect;
  }
  boost::math::chi_squared dist(kBar + kStem - 1);
  const double p = boost::math::cdf(boost::math::complement(dist, chi2));
  CHECK(p > 0.01);
}

TEST_CASE("steps move by delta, clip to walls, and respect the horizon") {
  auto env = atomic_env("red");
  Rng rng = make_stream(11, "reset");
  env->reset(rng);
  const VectorXd before = env->state();
  VectorXd up(2);
  up << 0.0, 1.0;
  StepResult r = env->step(up);
  TMazeGeometry geo;
  CHECK(geo.inside(r.state(0), r.state(1)));
  CHECK(r.state(0) == before(0));
  const double moved = r.state(1) - before(1);
  CHECK(moved <= 0.05 + 1e-15);
  CHECK(moved >= 0.0);  // clipped at a wall or the full delta
  CHECK(env->steps_taken() == 1);

  // push left forever: x pins at the wall, never leaves the region
  VectorXd left(2);
  left << -1.0, 0.0;
  for (int i = 0; i < 400 && env->steps_taken() < 149; ++i) {
    r = env->step(left);
    CHECK(geo.inside(r.state(0), r.state(1)));
    if (r.episode_over) break;
  }
}

TEST_CASE("no episode outlives the horizon") {
  SuiteParams p;
  auto env = composite_env(p);
  Rng rng = make_stream(12, "reset");
  env->reset(rng);
  int steps = 0;
  StepResult r;
  VectorXd still = VectorXd::Zero(2);
  do {
    r = env->step(still);
    ++steps;
    CHECK(steps <= p.horizon);
  } while (!r.episode_over);
  CHECK(steps == p.horizon);  // a motionless agent only ends by timeout
  CHECK_FALSE(r.terminal);    // timeouts bootstrap
  CHECK_FALSE(r.success);
}

TEST_CASE("atomic reward is the shaped distance plus the goal bonus") {
  SuiteParams p;
  auto env = atomic_env("red", p);
  Rng rng = make_stream(13, "reset");
  VectorXd s = env->reset(rng);
  TMazeGeometry geo;

  // hand-computed three-step script: clamp, move, clip, then measure
  double x = s(0), y = s(1);
  VectorXd moves[3];
  moves[0] = (VectorXd(2) << 0.5, -1.0).finished();
  moves[1] = (VectorXd(2) << -0.25, 0.75).finished();
  moves[2] = (VectorXd(2) << 1.0, 1.0).finished();
  for (int i = 0; i < 3; ++i) {
    StepResult r = env->step(moves[i]);
    x += p.step_delta * std::clamp(moves[i](0), -1.0, 1.0);
    y += p.step_delta * std::clamp(moves[i](1), -1.0, 1.0);
    geo.clip(x, y);
    double want = -p.shaping * std::hypot(x - geo.red_x, y - geo.red_y);
    if (std::hypot(x - geo.red_x, y - geo.red_y) <= p.goal_radius)
      want += p.goal_bonus;
    CHECK(r.reward == doctest::Approx(want).epsilon(1e-14));
    CHECK(r.state(0) == doctest::Approx(x).epsilon(1e-14));
    CHECK(r.state(1) == doctest::Approx(y).epsilon(1e-14));
  }
}

TEST_CASE("walking into the atomic goal pays the bonus and succeeds") {
  auto env = atomic_env("blue");
  Rng rng = make_stream(14, "reset");
  env->reset(rng);
  TMazeGeometry geo;
  StepResult r;
  for (int i = 0; i < 200; ++i) {
    r = env->step(toward(env->state(), geo.blue_x, geo.blue_y));
    if (r.episode_over) break;
  }
  CHECK(r.success);
  CHECK(r.terminal);
  CHECK(r.reward > 0.0);  // bonus dominates the last shaping term
}

TEST_CASE("composite phase machine: red first, then blue, never backwards") {
  auto env = composite_env();
  Rng rng = make_stream(15, "reset");
  env->reset(rng);
  auto* tm = dynamic_cast<TMazeEnv*>(env.get());
  REQUIRE(tm != nullptr);
  TMazeGeometry geo;
  CHECK(tm->phase() == TMazeEnv::Phase::kSeekRed);
  const int meta_before = env->meta_id();

  StepResult r;
  int flips = 0;
  bool saw_red_bonus = false;
  for (int i = 0; i < 400; ++i) {
    const bool was_red = tm->phase() == TMazeEnv::Phase::kSeekRed;
    const double tx = was_red ? geo.red_x : geo.blue_x;
    const double ty = was_red ? geo.red_y : geo.blue_y;
    r = env->step(toward(env->state(), tx, ty));
    if (was_red && tm->phase() == TMazeEnv::Phase::kSeekBlue) {
      ++flips;
      saw_red_bonus = r.reward > 0.5;  // +1 bonus plus small shaping
      CHECK(env->meta_id() != meta_before);  // metadata flipped with phase
      CHECK(env->state()(2) == 1.0);         // phase bit raised
    }
    if (r.episode_over) break;
  }
  CHECK(flips == 1);
  CHECK(saw_red_bonus);
  CHECK(r.success);
  CHECK(tm->phase() == TMazeEnv::Phase::kDoneOk);
}

TEST_CASE("touching blue during seek_red fails the episode with a penalty") {
  SuiteParams p;
  auto env = composite_env(p);
  Rng rng = make_stream(16, "reset");
  // redraw until the start is away from blue (so the walk is nontrivial) and
  // left of red (so heading to blue cannot graze red and flip the phase)
  for (int tries = 0; tries < 100; ++tries) {
    VectorXd s = env->reset(rng);
    TMazeGeometry geo;
    if (std::hypot(s(0) - geo.blue_x, s(1) - geo.blue_y) > 0.4 && s(0) < geo.red_x - 0.3) break;
  }
  auto* tm = dynamic_cast<TMazeEnv*>(env.get());
  TMazeGeometry geo;
  StepResult r;
  for (int i = 0; i < 400; ++i) {
    r = env->step(toward(env->state(), geo.blue_x, geo.blue_y));
    if (r.episode_over) break;
  }
  CHECK_FALSE(r.success);
  CHECK(r.terminal);
  CHECK(tm->phase() == TMazeEnv::Phase::kDoneFail);
  // final step carries the wrong-order penalty on top of potential shaping
  CHECK(r.reward <= p.wrong_order_penalty + 0.2);
}

TEST_CASE("composite shaping is the potential difference, hand-checked") {
  SuiteParams p;
  auto env = composite_env(p);
  Rng rng = make_stream(17, "reset");
  VectorXd s = env->reset(rng);
  TMazeGeometry geo;

  double x = s(0), y = s(1);
  double prev = std::hypot(x - geo.red_x, y - geo.red_y);
  VectorXd moves[3];
  moves[0] = (VectorXd(2) << 1.0, 0.25).finished();
  moves[1] = (VectorXd(2) << -0.5, -0.5).finished();
  moves[2] = (VectorXd(2) << 0.0, 1.0).finished();
  for (int i = 0; i < 3; ++i) {
    StepResult r = env->step(moves[i]);
    x += p.step_delta * std::clamp(moves[i](0), -1.0, 1.0);
    y += p.step_delta * std::clamp(moves[i](1), -1.0, 1.0);
    geo.clip(x, y);
    const double d = std::hypot(x - geo.red_x, y - geo.red_y);
    double want = p.shaping * (prev - d);
    prev = d;
    if (d <= p.goal_radius) want += p.goal_bonus;  // not hit in 3 steps here
    CHECK(r.reward == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("non-finite actions raise a numeric error") {
  auto env = atomic_env("blue");
  Rng rng = make_stream(18, "reset");
  env->reset(rng);
  VectorXd bad(2);
  bad << 0.0, std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(env->step(bad), NumericError);
  VectorXd wrong_dim = VectorXd::Zero(3);
  CHECK_THROWS_AS(env->step(wrong_dim), ShapeError);
}

TEST_CASE("tmaze_pair carries the exact quoted task strings") {
  TaskSuite suite = make_suite("tmaze_pair");
  REQUIRE(suite.num_tasks() == 2);
  REQUIRE(suite.meta_variants.size() == 2);
  CHECK(suite.meta_variants[0].text == "go to the blue goal");
  CHECK(suite.meta_variants[1].text == "go to the red goal");
  CHECK(suite.tasks[0].task_id == "blue");
  CHECK(suite.tasks[1].task_id == "red");
}

TEST_CASE("composite metadata follows the phase unless the flag says static") {
  SuiteParams p;
  p.phase_metadata = false;
  auto env = composite_env(p);
  Rng rng = make_stream(19, "reset");
  env->reset(rng);
  const int static_meta = env->meta_id();
  TMazeGeometry geo;
  auto* tm = dynamic_cast<TMazeEnv*>(env.get());
  for (int i = 0; i < 400; ++i) {
    StepResult r = env->step(toward(env->state(), geo.red_x, geo.red_y));
    CHECK(env->meta_id() == static_meta);  // never changes in static mode
    if (tm->phase() == TMazeEnv::Phase::kSeekBlue || r.episode_over) break;
  }
  CHECK(tm->phase() == TMazeEnv::Phase::kSeekBlue);

  // with phase metadata on, the variant changes exactly once per phase flip
  auto env2 = composite_env();
  Rng rng2 = make_stream(19, "reset2");
  env2->reset(rng2);
  TaskSuite suite = make_suite("tmaze_composite");
  CHECK(env2->meta_id() == suite.tasks[0].meta_red);
  int changes = 0;
  int last = env2->meta_id();
  auto* tm2 = dynamic_cast<TMazeEnv*>(env2.get());
  for (int i = 0; i < 400; ++i) {
    const bool red = tm2->phase() == TMazeEnv::Phase::kSeekRed;
    StepResult r = env2->step(toward(env2->state(),
                                     red ? geo.red_x : geo.blue_x,
                                     red ? geo.red_y : geo.blue_y));
    if (env2->meta_id() != last) {
      ++changes;
      last = env2->meta_id();
    }
    if (r.episode_over) break;
  }
  CHECK(changes == 1);
  CHECK(last == suite.tasks[0].meta_blue);
}

TEST_CASE("every builtin suite reports one shared state and action shape") {
  for (const char* name :
       {"tmaze_pair", "tmaze_composite", "nav_k_tasks", "nav_k_tasks_identical"}) {
    TaskSuite suite = make_suite(name);
    CHECK(suite.state_dim > 0);
    CHECK(suite.action_dim == 2);
    for (int t = 0; t < suite.num_tasks(); ++t) {
      auto env = suite.make_env(t);
      Rng rng = make_stream(20, "reset", static_cast<std::uint64_t>(t));
      VectorXd s = env->reset(rng);
      CHECK(s.size() == suite.state_dim);
    }
  }
}

TEST_CASE("nav tasks permute which state slots carry the goal") {
  TaskSuite suite = make_suite("nav_k_tasks");
  REQUIRE(suite.num_tasks() == 4);
  // variants cycle (pair, sign): (0,+) (1,+) (0,-) (1,-)
  CHECK(suite.tasks[0].nav_pair == 0);
  CHECK(suite.tasks[1].nav_pair == 1);
  CHECK(suite.tasks[0].nav_sign == 1);
  CHECK(suite.tasks[2].nav_sign == -1);

  // metadata strings are distinct across semantics
  CHECK(suite.meta_variants[0].text != suite.meta_variants[1].text);
  CHECK(suite.meta_variants[0].text != suite.meta_variants[2].text);

  // the identical-semantics control collapses all tasks onto one semantic
  TaskSuite control = make_suite("nav_k_tasks_identical");
  for (const auto& t : control.tasks) {
    CHECK(t.nav_pair == 0);
    CHECK(t.nav_sign == 1);
  }
  CHECK(control.meta_variants[0].text == control.meta_variants[1].text);
}

TEST_CASE("nav reward is shaped distance to the true goal, decoy ignored") {
  TaskSuite suite = make_suite("nav_k_tasks");
  auto env = suite.make_env(2);  // pair 0, sign -1
  Rng rng = make_stream(21, "reset");
  VectorXd s = env->reset(rng);
  // with sign -1 the informative slots hold -(goal - pos): walking along
  // +slot direction moves away from the goal, so the signed readout matters
  const double d0 = std::hypot(s(0), s(1));
  VectorXd a(2);
  a << (s(0) > 0 ? -1.0 : 1.0), 0.0;  // move along x toward the goal
  StepResult r = env->step(a);
  const double d1 = std::hypot(r.state(0), r.state(1));
  CHECK(d1 <= d0 + 1e-12);  // informative slots shrink toward zero
  CHECK(r.reward == doctest::Approx(-suite.params.shaping * d1).epsilon(1e-9));
}

TEST_CASE("unknown suite names and bad nav parameters are rejected") {
  CHECK_THROWS_AS(make_suite("no_such_suite"), ConfigError);
  SuiteParams p;
  p.nav_tasks = 1;
  CHECK_THROWS_AS(make_suite("nav_k_tasks", p), ConfigError);
}

TEST_CASE("suite files round-trip through save and load") {
  SuiteParams p;
  p.shaping = 0.75;
  p.goal_radius = 0.12;
  p.phase_metadata = false;
  TaskSuite suite = make_suite("tmaze_composite", p);
  const auto path = std::filesystem::temp_directory_path() / "lexpol_suite.txt";
  suite.save(path);
  TaskSuite back = TaskSuite::load(path);
  CHECK(back.name == suite.name);
  CHECK(back.state_dim == suite.state_dim);
  CHECK(back.action_dim == suite.action_dim);
  CHECK(back.params.shaping == suite.params.shaping);
  CHECK(back.params.goal_radius == suite.params.goal_radius);
  CHECK(back.params.phase_metadata == suite.params.phase_metadata);
  REQUIRE(back.num_tasks() == suite.num_tasks());
  CHECK(back.tasks[0].task_id == suite.tasks[0].task_id);
  CHECK(back.tasks[0].meta_blue == suite.tasks[0].meta_blue);
  REQUIRE(back.meta_variants.size() == suite.meta_variants.size());
  CHECK(back.meta_variants[2].text == suite.meta_variants[2].text);
  std::filesystem::remove(path);
}

TEST_CASE("environment state save/load resumes mid-episode exactly") {
  auto env = composite_env();
  Rng rng = make_stream(22, "reset");
  env->reset(rng);
  VectorXd a(2);
  a << 0.3, -0.6;
  for (int i = 0; i < 7; ++i) env->step(a);

  std::stringstream ss;
  env->save(ss);
  auto env2 = composite_env();
  env2->load(ss);
  CHECK((env2->state().array() == env->state().array()).all());
  CHECK(env2->steps_taken() == env->steps_taken());
  CHECK(env2->meta_id() == env->meta_id());

  StepResult r1 = env->step(a);
  StepResult r2 = env2->step(a);
  CHECK(r1.reward == r2.reward);
  CHECK((r1.state.array() == r2.state.array()).all());
}
