#pragma once

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "lexpol/context.hpp"
#include "lexpol/net.hpp"
#include "lexpol/rng.hpp"

namespace lexpol {

struct StepResult {
  VectorXd state;
  double reward = 0.0;
  bool episode_over = false;  // success, failure, or horizon
  bool terminal = false;      // true only on success/failure; timeouts
                              // bootstrap as non-terminal
  bool success = false;
};

/// Minimal environment surface. Adapters for external benchmark suites plug
/// in here; everything above this interface is simulator-agnostic.
class Env {
 public:
  virtual ~Env() = default;
  virtual VectorXd reset(Rng& rng) = 0;
  virtual StepResult step(const VectorXd& a) = 0;
  /// Metadata variant currently active (composite tasks switch it when the
  /// phase flips).
  virtual int meta_id() const = 0;
  virtual int steps_taken() const = 0;
  virtual const VectorXd& state() const = 0;
  virtual void save(std::ostream& os) const = 0;
  virtual void load(std::istream& is) = 0;
};

enum class TaskKind { kTmazeBlue, kTmazeRed, kTmazeComposite, kNav };

TaskKind task_kind_from_string(const std::string& s);
std::string to_string(TaskKind k);

struct TaskSpec {
  std::string task_id;
  TaskKind kind = TaskKind::kNav;
  int meta = 0;       // base metadata variant
  int meta_red = 0;   // composite only: variant during seek_red
  int meta_blue = 0;  // composite only: variant during seek_blue
  int nav_pair = 0;   // nav only: 0 -> slots {0,1}, 1 -> slots {2,3}
  int nav_sign = 1;   // nav only: informative slots hold sign*(goal-pos)
};

struct SuiteParams {
  int horizon = 150;
  double shaping = 1.0;
  bool sparse = false;
  double step_delta = 0.05;
  double goal_radius = 0.1;
  bool phase_bit = true;       // composite exposes its phase in the state
  bool phase_metadata = true;  // composite metadata follows the phase
  double goal_bonus = 1.0;
  double wrong_order_penalty = -1.0;
  double timeout_penalty = -0.5;
  int nav_tasks = 4;
  bool identical_semantics = false;  // nav negative control
};

class TaskSuite {
 public:
  std::string name;
  int state_dim = 0;
  int action_dim = 0;
  SuiteParams params;
  std::vector<TaskSpec> tasks;
  std::vector<TaskMetadata> meta_variants;

  int num_tasks() const { return static_cast<int>(tasks.size()); }
  const TaskMetadata& variant(int meta) const;
  std::unique_ptr<Env> make_env(int task_index) const;

  void save(const std::filesystem::path& path) const;
  static TaskSuite load(const std::filesystem::path& path);
};

/// Builtin suites: tmaze_pair (the two atomic goal tasks), tmaze_composite
/// (red then blue), nav_k_tasks (K point-goal tasks whose informative state
/// slots permute per task so context is required).
TaskSuite make_suite(const std::string& name, const SuiteParams& params = {});

/// Resolves either a builtin suite name or a path to a saved suite file.
TaskSuite resolve_suite(const std::string& name_or_path);

/// T geometry shared by env and dominance-map code: crossbar 2.0 x 0.4 on
/// top of a 0.4 x 1.0 stem.
struct TMazeGeometry {
  double bar_x0 = -1.0, bar_x1 = 1.0, bar_y0 = 0.6, bar_y1 = 1.0;
  double stem_x0 = -0.2, stem_x1 = 0.2, stem_y0 = -0.4, stem_y1 = 0.6;
  double blue_x = -0.9, blue_y = 0.8;  // left goal
  double red_x = 0.9, red_y = 0.8;     // right goal

  bool inside(double x, double y) const;
  /// Closest point of the T region to (x, y).
  void clip(double& x, double& y) const;
  double area() const;
};

class TMazeEnv : public Env {
 public:
  enum class Phase { kSeekRed, kSeekBlue, kDoneOk, kDoneFail };

  TMazeEnv(const TaskSpec& spec, const SuiteParams& params);

  VectorXd reset(Rng& rng) override;
  StepResult step(const VectorXd& a) override;
  int meta_id() const override;
  int steps_taken() const override { return steps_; }
  const VectorXd& state() const override { return state_; }
  void save(std::ostream& os) const override;
  void load(std::istream& is) override;

  Phase phase() const { return phase_; }
  const TMazeGeometry& geometry() const { return geo_; }

 private:
  TaskSpec spec_;
  SuiteParams p_;
  TMazeGeometry geo_;
  double x_ = 0.0, y_ = 0.0;
  double aux_bit_ = 0.0;  // atomic: reset-time distractor; composite: phase
  double prev_goal_dist_ = 0.0;  // potential for the composite shaping
  Phase phase_ = Phase::kSeekRed;
  int steps_ = 0;
  VectorXd state_;

  bool composite() const { return spec_.kind == TaskKind::kTmazeComposite; }
  void goal_for_phase(double& gx, double& gy) const;
  void refresh_state();
};

class PointNavEnv : public Env {
 public:
  PointNavEnv(const TaskSpec& spec, const SuiteParams& params);

  VectorXd reset(Rng& rng) override;
  StepResult step(const VectorXd& a) override;
  int meta_id() const override { return spec_.meta; }
  int steps_taken() const override { return steps_; }
  const VectorXd& state() const override { return state_; }
  void save(std::ostream& os) const override;
  void load(std::istream& is) override;

 private:
  TaskSpec spec_;
  SuiteParams p_;
  double px_ = 0.0, py_ = 0.0;
  double gx_ = 0.0, gy_ = 0.0;    // true goal
  double dx_ = 0.0, dy_ = 0.0;    // decoy goal driving the uninformative slots
  int steps_ = 0;
  VectorXd state_;

  void refresh_state();
};

}  // namespace lexpol
