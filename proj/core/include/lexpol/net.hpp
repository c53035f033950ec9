#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "lexpol/rng.hpp"

namespace lexpol {

using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;

enum class Activation { kRelu, kTanh, kIdentity };

Activation activation_from_string(const std::string& s);
std::string to_string(Activation a);

/// Per-parameter gradient buffers mirroring a DenseNet's layer shapes.
/// Gradients accumulate additively across backward calls until zero()
/// so multi-head losses can share an upstream path.
struct GradTape {
  std::vector<MatrixXd> dW;
  std::vector<VectorXd> db;
  bool accumulating = true;

  void zero();
  bool shapes_match(const std::vector<MatrixXd>& W, const std::vector<VectorXd>& b) const;
};

/// Plain feedforward network over column-major batches: forward takes an
/// (in x B) matrix and returns (out x B). Caches per-layer inputs and
/// pre-activations so backward can run; forward_nograd skips the cache.
class DenseNet {
 public:
  DenseNet() = default;

  /// dims = {in, h1, ..., out}; acts has dims.size()-1 entries.
  DenseNet(const std::vector<int>& dims, const std::vector<Activation>& acts);

  static DenseNet make_mlp(int in, const std::vector<int>& hidden, int out,
                           Activation hidden_act,
                           Activation out_act = Activation::kIdentity);

  /// Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weights, zero bias. The final
  /// layer is additionally scaled by final_scale.
  void init_uniform_fanin(Rng& rng, double final_scale = 1.0);

  /// Square single-layer identity map (used by degenerate encoder tests).
  static DenseNet identity(int dim);

  const MatrixXd& forward(const MatrixXd& x);
  MatrixXd forward_nograd(const MatrixXd& x) const;
  VectorXd forward_vec(const VectorXd& x);

  /// Chain-rule pass over the cached forward. Accumulates parameter
  /// gradients into the tape when accumulate is true and always returns
  /// the gradient w.r.t. the input, for chaining across modules.
  MatrixXd backward(const MatrixXd& grad_out, bool accumulate = true);

  bool has_cache() const { return has_cache_; }
  void drop_cache();

  int input_dim() const;
  int output_dim() const;
  std::size_t num_layers() const { return layers_.size(); }
  long param_count() const;

  MatrixXd& weight(std::size_t i) { return layers_[i].W; }
  const MatrixXd& weight(std::size_t i) const { return layers_[i].W; }
  VectorXd& bias(std::size_t i) { return layers_[i].b; }
  const VectorXd& bias(std::size_t i) const { return layers_[i].b; }
  Activation activation(std::size_t i) const { return layers_[i].act; }

  GradTape& grads() { return tape_; }
  const GradTape& grads() const { return tape_; }
  void zero_grads() { tape_.zero(); }

  /// Smallest |pre-activation| seen by any relu layer in the last cached
  /// forward; finite-difference checks resample when this is tiny.
  double min_abs_relu_preact() const;

  void check_finite(const std::string& what) const;
  std::uint64_t param_hash() const;

  void flatten_params(std::vector<double>& out) const;
  void unflatten_params(const std::vector<double>& in);
  double* param_ptr(long flat_index);
  double grad_at(long flat_index) const;

 private:
  struct Layer {
    MatrixXd W;  // out x in
    VectorXd b;  // out
    Activation act = Activation::kIdentity;
  };
  std::vector<Layer> layers_;
  GradTape tape_;
  std::vector<MatrixXd> input_cache_;   // per-layer input
  std::vector<MatrixXd> preact_cache_;  // per-layer W x + b
  MatrixXd out_cache_;
  bool has_cache_ = false;

  void ensure_tape();
};

/// Numerically stable softmax (max-subtracted). Throws ShapeError on empty
/// input; output is on the probability simplex.
VectorXd softmax(const VectorXd& v);
MatrixXd softmax_cols(const MatrixXd& logits);

/// Jacobian-vector product of softmax: d logits = a .* (g - <a, g>).
VectorXd softmax_backward(const VectorXd& alpha, const VectorXd& grad_alpha);
MatrixXd softmax_backward_cols(const MatrixXd& alpha, const MatrixXd& grad_alpha);

/// Exact float64 parameter dump (count header + raw doubles). Resume state
/// uses this so continuing a run does not go through the 32-bit
/// interchange blob and stays bit-identical to an uninterrupted run.
void save_params64(std::ostream& os, const DenseNet& net);
void load_params64(std::istream& is, DenseNet& net);

}  // namespace lexpol
