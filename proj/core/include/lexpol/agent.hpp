#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "lexpol/context.hpp"
#include "lexpol/envs.hpp"
#include "lexpol/mixture.hpp"
#include "lexpol/sac.hpp"

namespace lexpol {

enum class Mode {
  kLexpol,        // end-to-end: sub-policies + gate (+ context head when trainable)
  kLexpolFrozen,  // pre-trained sub-policies frozen, gate-only training
  kLexpolCare,    // lexpol plus a gated mixture of state encoders
  kMtsacFlat,     // one shared SAC actor, no task context at all
  kSingleTask,    // plain SAC on one task (upper-bound comparator)
};

Mode mode_from_string(const std::string& s);
std::string to_string(Mode m);

struct AgentConfig {
  Mode mode = Mode::kLexpol;
  int k = 4;  // number of sub-policies
  int n = 50; // context embedding dim
  bool stopgrad_context = true;
  std::vector<int> actor_hidden = {400, 400, 400};
  std::vector<int> critic_hidden = {400, 400, 400};
  std::vector<int> gate_hidden = {};  // empty = linear gate on z_context
  std::uint64_t seed = 0;
  std::uint64_t context_seed = 0;  // hashed-embedding stream; run-seed independent
                                   // so metadata vectors play the role of fixed
                                   // language-model outputs
  bool context_table = false;      // use a CSV table instead of hashing
  std::string context_table_path;

  // lexpol_care extras
  int care_k_enc = 2;
  int care_repr_dim = 0;  // 0 = same as state dim
  std::vector<int> care_enc_hidden = {};
  std::vector<int> care_gate_hidden = {};

  // lexpol_frozen: either one checkpoint holding actor0..actor{k-1}, or k
  // checkpoints each holding actor0
  std::vector<std::string> expert_paths;

  void validate() const;  // mode-specific field checks, throws ConfigError
};

struct ActResult {
  VectorXd a;
  double log_prob = 0.0;
  VectorXd alpha;  // empty for actors without a gate
};

/// Everything the trainer needs beyond the bare SAC update hooks: single
/// state rollout entry points, gate introspection for the dominance maps,
/// persistence, and freeze auditing.
class Actor : public ActorModel {
 public:
  virtual ActResult act(const VectorXd& s, int meta, Rng& noise) const = 0;
  virtual ActResult act_mean(const VectorXd& s, int meta) const = 0;

  /// alpha over sub-policies for one metadata variant (the gate only sees
  /// context, so this is state-free). Size 1 for plain actors.
  virtual VectorXd gate_weights(int meta) const = 0;

  virtual int num_subpolicies() const = 0;

  virtual void add_to_checkpoint(CheckpointWriter& w) const = 0;
  virtual void read_from_checkpoint(const Checkpoint& ck) = 0;
  virtual void save_opt_state(std::ostream& os) const = 0;
  virtual void load_opt_state(std::istream& is) = 0;

  /// Exact float64 parameter image for resume state; the interchange blob
  /// is 32-bit and would perturb a continued run.
  virtual void save_params64(std::ostream& os) const = 0;
  virtual void load_params64(std::istream& is) = 0;

  /// Parameter-group name -> fnv hash, for freeze/stopgrad invariant checks.
  virtual std::map<std::string, std::uint64_t> param_group_hashes() const = 0;
};

/// Single squashed-Gaussian actor; backs both mtsac_flat and single_task.
/// Ignores metadata entirely (that being the point of the flat baseline).
class PlainActor : public Actor {
 public:
  PlainActor(int state_dim, int action_dim, const std::vector<int>& hidden,
             const SacConfig& scfg, std::uint64_t seed);

  int state_dim() const override { return head_.state_dim(); }
  int action_dim() const override { return head_.action_dim(); }

  PolicySample sample(const MatrixXd& states, const std::vector<int>& meta,
                      Rng& noise) override;
  PolicySample sample_nograd(const MatrixXd& states, const std::vector<int>& meta,
                             Rng& noise) const override;
  MatrixXd mean_actions(const MatrixXd& states,
                        const std::vector<int>& meta) const override;
  void backward(const MatrixXd& grad_a, const RowVectorXd& grad_logp) override;
  void zero_grads() override;
  void optimizer_step(const AdamConfig& cfg) override;

  ActResult act(const VectorXd& s, int meta, Rng& noise) const override;
  ActResult act_mean(const VectorXd& s, int meta) const override;
  VectorXd gate_weights(int meta) const override;
  int num_subpolicies() const override { return 1; }

  void add_to_checkpoint(CheckpointWriter& w) const override;
  void read_from_checkpoint(const Checkpoint& ck) override;
  void save_opt_state(std::ostream& os) const override;
  void load_opt_state(std::istream& is) override;
  void save_params64(std::ostream& os) const override;
  void load_params64(std::istream& is) override;
  std::map<std::string, std::uint64_t> param_group_hashes() const override;

  GaussianPolicyHead& head() { return head_; }

 private:
  GaussianPolicyHead head_;
  AdamState opt_trunk_, opt_mean_, opt_logstd_;
};

/// k sub-policies sharing one input state, blended by a context-driven
/// softmax gate. Optionally the input state is itself a gated mixture of
/// learned encodings (care mode). Frozen mode pins the sub-policy heads.
class CompositeActor : public Actor {
 public:
  CompositeActor(const AgentConfig& acfg, const SacConfig& scfg, int state_dim,
                 int action_dim, std::vector<TaskMetadata> variants,
                 ContextProvider provider);

  int state_dim() const override { return state_dim_; }
  int action_dim() const override { return heads_.at(0).action_dim(); }
  int num_subpolicies() const override { return static_cast<int>(heads_.size()); }

  PolicySample sample(const MatrixXd& states, const std::vector<int>& meta,
                      Rng& noise) override;
  PolicySample sample_nograd(const MatrixXd& states, const std::vector<int>& meta,
                             Rng& noise) const override;
  MatrixXd mean_actions(const MatrixXd& states,
                        const std::vector<int>& meta) const override;
  void backward(const MatrixXd& grad_a, const RowVectorXd& grad_logp) override;
  void zero_grads() override;
  void optimizer_step(const AdamConfig& cfg) override;

  ActResult act(const VectorXd& s, int meta, Rng& noise) const override;
  ActResult act_mean(const VectorXd& s, int meta) const override;
  VectorXd gate_weights(int meta) const override;

  /// Load pre-trained sub-policies and pin them. One path: a checkpoint
  /// holding actor0..actor{k-1}. k paths: one actor0 fragment each (the
  /// layout single_task runs produce).
  void load_experts(const std::vector<std::string>& paths);
  bool frozen() const { return frozen_; }

  void add_to_checkpoint(CheckpointWriter& w) const override;
  void read_from_checkpoint(const Checkpoint& ck) override;
  void save_opt_state(std::ostream& os) const override;
  void load_opt_state(std::istream& is) override;
  void save_params64(std::ostream& os) const override;
  void load_params64(std::istream& is) override;
  std::map<std::string, std::uint64_t> param_group_hashes() const override;

  GaussianPolicyHead& sub_policy(int i) { return heads_.at(static_cast<std::size_t>(i)); }
  DenseNet& gate_net() { return gate_net_; }
  ContextHead& context_head() { return ctx_head_; }
  EncoderMixture* encoder_mixture() { return enc_ ? enc_.get() : nullptr; }
  const MatrixXd& last_alpha() const { return alpha_; }

  /// Raw provider embedding for one variant (cached at construction).
  VectorXd raw_embedding(int meta) const;

 private:
  MatrixXd gather_embeds(const std::vector<int>& meta) const;
  MatrixXd policy_states(const MatrixXd& states, const MatrixXd& z_raw);
  MatrixXd policy_states_nograd(const MatrixXd& states, const MatrixXd& z_raw) const;

  int state_dim_ = 0;
  bool stopgrad_ = true;
  bool frozen_ = false;

  std::vector<GaussianPolicyHead> heads_;
  DenseNet gate_net_;
  ContextHead ctx_head_;
  std::unique_ptr<EncoderMixture> enc_;

  ContextProvider provider_;
  std::vector<TaskMetadata> variants_;
  MatrixXd raw_embeds_;  // d_raw x num_variants, column per variant

  std::vector<AdamState> head_opts_;  // 3 per head: trunk, mean, logstd
  AdamState opt_gate_, opt_ctx_;
  std::vector<AdamState> enc_opts_;   // care: k_enc encoders, gate, ctx head

  // caches from the last grad-tracked sample
  MatrixXd alpha_;
  std::vector<MatrixXd> sub_a_;
  std::vector<RowVectorXd> sub_lp_;
  bool cached_ = false;
};

/// Build the per-variant context provider a config asks for.
ContextProvider make_provider(const AgentConfig& acfg);

/// Mode dispatch. The suite supplies dims and metadata variants. Pass
/// load_experts=false when checkpointed parameters will overwrite the
/// actor anyway (so stale expert paths cannot fail the load).
std::unique_ptr<Actor> make_actor(const AgentConfig& acfg, const SacConfig& scfg,
                                  const TaskSuite& suite,
                                  bool load_experts = true);

/// Key=value hyperparameter sidecar written next to every checkpoint, with
/// enough to rebuild the actor and learner shapes.
void save_agent_hyper(const std::filesystem::path& file, const AgentConfig& acfg,
                      const SacConfig& scfg);
std::pair<AgentConfig, SacConfig> load_agent_hyper(
    const std::filesystem::path& file);

std::vector<int> parse_int_list(const std::string& s);   // "64,64" -> {64,64}
std::string format_int_list(const std::vector<int>& v);

}  // namespace lexpol
