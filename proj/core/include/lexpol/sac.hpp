#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "lexpol/checkpoint.hpp"
#include "lexpol/net.hpp"
#include "lexpol/optim.hpp"
#include "lexpol/rng.hpp"

namespace lexpol {

struct SacConfig {
  double gamma = 0.99;
  double tau = 0.005;
  double lr = 3e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  int batch_per_task = 128;
  std::size_t replay_capacity = 1000000;
  long warmup_steps = 1500;
  double reward_scale = 1.0;
  bool auto_alpha = true;
  double fixed_alpha = 0.2;
  double target_entropy = 0.0;  // 0 means "use -action_dim"
  double logstd_min = -20.0;
  double logstd_max = 2.0;

  AdamConfig adam() const { return {lr, adam_beta1, adam_beta2, 1e-8}; }
  double resolved_target_entropy(int action_dim) const {
    return target_entropy != 0.0 ? target_entropy
                                 : -static_cast<double>(action_dim);
  }
};

struct PolicySample {
  MatrixXd a;            // action_dim x B, tanh-squashed
  RowVectorXd log_prob;  // 1 x B
};

/// Squashed-Gaussian policy head: relu trunk feeding separate mean and
/// log-std linear layers; log-std hard-clamped. The tanh change-of-variables
/// term uses log(1-tanh^2 u) = 2(log 2 - u - softplus(-2u)), which is exact,
/// so sampled log-probs agree with a direct density computation to high
/// precision.
class GaussianPolicyHead {
 public:
  GaussianPolicyHead() = default;
  GaussianPolicyHead(int state_dim, const std::vector<int>& hidden, int action_dim,
                     double logstd_min = -20.0, double logstd_max = 2.0);

  /// Fan-in uniform init; the mean and log-std output layers are scaled
  /// down so initial actions are near zero with sigma near 1.
  void init(Rng& rng);

  /// Reparameterized draw; caches everything backward() needs. Noise is
  /// consumed column-major (per batch column, then per action row).
  PolicySample sample(const MatrixXd& states, Rng& noise);
  PolicySample sample_with_eps(const MatrixXd& states, const MatrixXd& eps);

  /// Same math without touching the gradient caches (critic targets).
  PolicySample sample_nograd(const MatrixXd& states, Rng& noise) const;
  PolicySample sample_with_eps_nograd(const MatrixXd& states,
                                      const MatrixXd& eps) const;

  MatrixXd mean_actions(const MatrixXd& states) const;  // tanh(mu), no noise

  /// Backward through action and log-prob jointly. grad_a is dL/da
  /// (action_dim x B), grad_logp dL/dlogp (1 x B). Returns dL/dstates;
  /// parameter gradients accumulate unless accumulate=false.
  MatrixXd backward(const MatrixXd& grad_a, const RowVectorXd& grad_logp,
                    bool accumulate = true);

  int state_dim() const { return trunk_.input_dim(); }
  int action_dim() const { return mean_.output_dim(); }

  DenseNet& trunk() { return trunk_; }
  DenseNet& mean_layer() { return mean_; }
  DenseNet& logstd_layer() { return logstd_; }
  const DenseNet& trunk() const { return trunk_; }
  const DenseNet& mean_layer() const { return mean_; }
  const DenseNet& logstd_layer() const { return logstd_; }

  template <class F>
  void for_each_net(F&& f) {
    f(std::string("trunk"), trunk_);
    f(std::string("mean"), mean_);
    f(std::string("logstd"), logstd_);
  }

  void zero_grads();
  std::uint64_t param_hash() const;

  /// Distance of the raw log-std outputs from the clamp bounds in the last
  /// cached forward (finite-difference checks avoid points on the clamp).
  double clamp_margin() const;

  void add_to_checkpoint(CheckpointWriter& w, const std::string& prefix) const;
  void read_from_checkpoint(const Checkpoint& ck, const std::string& prefix);

 private:
  DenseNet trunk_, mean_, logstd_;
  double lo_ = -20.0, hi_ = 2.0;

  // caches from the last grad-tracked sample
  MatrixXd a_, sigma_, eps_, clamp_mask_;
  bool cached_ = false;

  PolicySample run(const MatrixXd& states, const MatrixXd& eps, bool keep);
  PolicySample run_nograd(const MatrixXd& states, const MatrixXd& eps) const;
};

/// Draws an eps matrix column-major from the stream (two engine draws per
/// entry), shared by everything that samples policy noise.
MatrixXd draw_eps(int rows, int cols, Rng& noise);

/// Twin Q networks plus polyak-averaged target copies. Critics score
/// concatenated (state, action) columns.
class TwinCritics {
 public:
  TwinCritics() = default;
  TwinCritics(int state_dim, int action_dim, const std::vector<int>& hidden,
              double tau, Rng& rng_q1, Rng& rng_q2);

  RowVectorXd q1_forward(const MatrixXd& sa);  // cached
  RowVectorXd q2_forward(const MatrixXd& sa);  // cached
  void backward_online(const RowVectorXd& grad_q1, const RowVectorXd& grad_q2);

  /// min(t1, t2) under the target nets; never tracked for gradients.
  RowVectorXd target_min(const MatrixXd& sa) const;

  /// min(q1, q2) under the online nets, cached with the per-column argmin
  /// so the backward can route the gradient through the smaller critic.
  RowVectorXd online_min(const MatrixXd& sa);
  MatrixXd online_min_backward(const RowVectorXd& grad, bool accumulate);

  void polyak();

  int input_dim() const { return q1_.input_dim(); }
  double tau() const { return tau_; }
  DenseNet& q1() { return q1_; }
  DenseNet& q2() { return q2_; }
  DenseNet& target1() { return t1_; }
  DenseNet& target2() { return t2_; }
  const DenseNet& q1() const { return q1_; }
  const DenseNet& q2() const { return q2_; }
  const DenseNet& target1() const { return t1_; }
  const DenseNet& target2() const { return t2_; }

  void zero_grads();
  std::uint64_t param_hash() const;
  std::uint64_t target_hash() const;

  void add_to_checkpoint(CheckpointWriter& w) const;
  void read_from_checkpoint(const Checkpoint& ck);

 private:
  DenseNet q1_, q2_, t1_, t2_;
  double tau_ = 0.005;
  RowVectorXd min_mask1_;  // 1 where q1 <= q2 in the last online_min
  bool min_cached_ = false;
};

struct Transition {
  int task = 0;
  int meta = 0;       // metadata variant active at s
  int meta_next = 0;  // metadata variant active at s_next
  VectorXd s;
  VectorXd a;
  VectorXd s_next;
  double r = 0.0;
  bool done = false;
};

struct Batch {
  MatrixXd s, a, s_next;
  RowVectorXd r;
  RowVectorXd not_done;
  std::vector<int> meta, meta_next, task;

  Eigen::Index size() const { return s.cols(); }
};

/// Per-task ring buffers; sampling draws batch_per_task uniform transitions
/// from every task that has data, so each batch covers the whole suite.
class ReplayBuffer {
 public:
  ReplayBuffer() = default;
  ReplayBuffer(std::size_t capacity, int num_tasks);

  void push(const Transition& t);
  std::size_t size() const;
  std::size_t task_size(int task) const;
  int num_tasks() const { return static_cast<int>(rings_.size()); }

  Batch sample(int batch_per_task, Rng& rng) const;

  void save(std::ostream& os) const;
  void load(std::istream& is);

 private:
  std::vector<std::vector<Transition>> rings_;
  std::vector<std::size_t> heads_;
  std::size_t per_task_capacity_ = 0;
};

/// Entropy temperature alpha = exp(log_alpha), optionally auto-tuned toward
/// a target entropy by gradient steps on log_alpha.
class EntropyTemp {
 public:
  EntropyTemp() = default;
  EntropyTemp(double target_entropy, bool auto_tune, double init_alpha = 1.0);

  double alpha() const;
  double log_alpha() const { return log_alpha_; }
  void set_log_alpha(double v) { log_alpha_ = v; }
  double target_entropy() const { return target_entropy_; }
  bool auto_tuned() const { return auto_tune_; }

  /// Returns the pair (loss, gradient applied); no-op on log_alpha when
  /// auto-tuning is off.
  double update(const RowVectorXd& log_probs, const AdamConfig& cfg);

  void save(std::ostream& os) const;
  void load(std::istream& is);

 private:
  double log_alpha_ = 0.0;
  double target_entropy_ = -1.0;
  bool auto_tune_ = true;
  AdamScalar opt_;
};

/// What the SAC update rules need from an actor. Both the plain single
/// network actor and the gated composite actor implement this, so the
/// update code exists once and mode-reduction equalities are meaningful.
class ActorModel {
 public:
  virtual ~ActorModel() = default;

  virtual int state_dim() const = 0;
  virtual int action_dim() const = 0;

  /// meta[b] selects the metadata variant for column b (ignored by actors
  /// that do not condition on context).
  virtual PolicySample sample(const MatrixXd& states, const std::vector<int>& meta,
                              Rng& noise) = 0;
  virtual PolicySample sample_nograd(const MatrixXd& states,
                                     const std::vector<int>& meta,
                                     Rng& noise) const = 0;
  virtual MatrixXd mean_actions(const MatrixXd& states,
                                const std::vector<int>& meta) const = 0;

  virtual void backward(const MatrixXd& grad_a, const RowVectorXd& grad_logp) = 0;
  virtual void zero_grads() = 0;
  virtual void optimizer_step(const AdamConfig& cfg) = 0;
};

/// y = scale*r + gamma*(1-done)*(min target Q(s',a') - alpha*logp'). Split
/// out so tests can drive it with hand-chosen next actions.
RowVectorXd critic_target(const TwinCritics& critics, const MatrixXd& s_next,
                          const PolicySample& next, const RowVectorXd& r,
                          const RowVectorXd& not_done, double alpha, double gamma,
                          double reward_scale);

struct SacLosses {
  double critic = 0.0;
  double actor = 0.0;
  double alpha_loss = 0.0;
  double alpha = 0.0;
  double mean_q = 0.0;
  double mean_logp = 0.0;
};

/// Owns critics, their optimizers, and the temperature; drives one full SAC
/// gradient step (critic, actor, temperature, polyak) over a mixed batch.
class SacLearner {
 public:
  SacLearner() = default;
  SacLearner(int state_dim, int action_dim, const std::vector<int>& critic_hidden,
             const SacConfig& cfg, std::uint64_t seed);

  SacLosses update(ActorModel& actor, const Batch& batch, Rng& noise);

  TwinCritics& critics() { return critics_; }
  const TwinCritics& critics() const { return critics_; }
  EntropyTemp& temp() { return temp_; }
  const EntropyTemp& temp() const { return temp_; }
  const SacConfig& config() const { return cfg_; }

  void add_to_checkpoint(CheckpointWriter& w) const;
  void read_from_checkpoint(const Checkpoint& ck);
  void save_opt_state(std::ostream& os) const;
  void load_opt_state(std::istream& is);
  void save_params64(std::ostream& os) const;
  void load_params64(std::istream& is);

 private:
  SacConfig cfg_;
  TwinCritics critics_;
  EntropyTemp temp_;
  AdamState opt_q1_, opt_q2_;
};

}  // namespace lexpol
