#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lexpol/checkpoint.hpp"
#include "lexpol/context.hpp"
#include "lexpol/net.hpp"

namespace lexpol {

/// alpha = softmax(G(z)). The logits stay cached inside G so
/// gate_backward can run.
VectorXd gate(DenseNet& G, const VectorXd& z);
MatrixXd gate_cols(DenseNet& G, const MatrixXd& z_cols);
VectorXd gate_nograd(const DenseNet& G, const VectorXd& z);

/// Pulls dL/dalpha back through the softmax and the gate net; accumulates
/// into G's tape and returns dL/dz for the context head.
MatrixXd gate_backward(DenseNet& G, const MatrixXd& alpha,
                       const MatrixXd& grad_alpha, bool accumulate = true);

/// acts is k x m, row i the action of sub-policy i; returns the
/// alpha-weighted sum (the executed action).
VectorXd blend_actions(const MatrixXd& acts, const VectorXd& alpha);

struct BlendActionsGrad {
  MatrixXd d_acts;   // k x m
  VectorXd d_alpha;  // k
};
BlendActionsGrad blend_actions_backward(const MatrixXd& acts, const VectorXd& alpha,
                                        const VectorXd& grad_a);

/// Surrogate composite log-probability: alpha-weighted sum of the
/// sub-policies' own log-probs. Feeds the actor and temperature losses.
double blend_log_prob(const VectorXd& per_policy_log_probs, const VectorXd& alpha);

struct BlendLogProbGrad {
  VectorXd d_log_probs;
  VectorXd d_alpha;
};
BlendLogProbGrad blend_log_prob_backward(const VectorXd& per_policy_log_probs,
                                         const VectorXd& alpha, double grad);

/// Gated mixture of state encoders (the CARE-style hybrid): k_enc nets map
/// the raw state to a shared representation, combined with weights from the
/// mixture's own gate over its own context head.
class EncoderMixture {
 public:
  EncoderMixture() = default;
  EncoderMixture(std::vector<DenseNet> encoders, DenseNet gate_net,
                 ContextHead head);

  static EncoderMixture make(int k_enc, int state_dim, int repr_dim,
                             const std::vector<int>& enc_hidden,
                             const std::vector<int>& gate_hidden, int ctx_raw_dim,
                             int n, bool stopgrad, std::uint64_t seed);

  int k() const { return static_cast<int>(encoders_.size()); }
  int in_dim() const { return encoders_.at(0).input_dim(); }
  int out_dim() const { return encoders_.at(0).output_dim(); }

  /// repr(:,b) = sum_j beta(j,b) * E_j(s_raw(:,b)); beta from this
  /// mixture's gate on its head's view of z_raw(:,b). Cached for backward.
  MatrixXd blend(const MatrixXd& s_raw, const MatrixXd& z_raw);
  MatrixXd blend_nograd(const MatrixXd& s_raw, const MatrixXd& z_raw) const;

  /// Returns dL/ds_raw; deposits gradients into encoders, gate, and (when
  /// not stop-gradded) the context head.
  MatrixXd backward(const MatrixXd& grad_repr);

  const MatrixXd& last_beta() const { return beta_; }

  std::vector<DenseNet>& encoders() { return encoders_; }
  const std::vector<DenseNet>& encoders() const { return encoders_; }
  DenseNet& gate_net() { return gate_net_; }
  const DenseNet& gate_net() const { return gate_net_; }
  ContextHead& head() { return head_; }
  const ContextHead& head() const { return head_; }

  void zero_grads();
  std::uint64_t param_hash() const;
  void add_to_checkpoint(CheckpointWriter& w) const;
  void read_from_checkpoint(const Checkpoint& ck);

 private:
  std::vector<DenseNet> encoders_;
  DenseNet gate_net_;
  ContextHead head_;

  std::vector<MatrixXd> enc_out_;
  MatrixXd beta_;
  bool cached_ = false;
};

}  // namespace lexpol
