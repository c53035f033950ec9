#include "lexpol/mixture.hpp"

#include "lexpol/errors.hpp"

namespace lexpol {

VectorXd gate(DenseNet& G, const VectorXd& z) {
  return softmax(G.forward(MatrixXd(z)).col(0));
}

MatrixXd gate_cols(DenseNet& G, const MatrixXd& z_cols) {
  return softmax_cols(G.forward(z_cols));
}

VectorXd gate_nograd(const DenseNet& G, const VectorXd& z) {
  return softmax(G.forward_nograd(MatrixXd(z)).col(0));
}

MatrixXd gate_backward(DenseNet& G, const MatrixXd& alpha,
                       const MatrixXd& grad_alpha, bool accumulate) {
  return G.backward(softmax_backward_cols(alpha, grad_alpha), accumulate);
}

VectorXd blend_actions(const MatrixXd& acts, const VectorXd& alpha) {
  if (acts.rows() != alpha.size())
    throw ShapeError("blend_actions: need one weight per sub-policy row");
  return acts.transpose() * alpha;
}

BlendActionsGrad blend_actions_backward(const MatrixXd& acts,
                                        const VectorXd& alpha,
                                        const VectorXd& grad_a) {
  if (acts.rows() != alpha.size() || acts.cols() != grad_a.size())
    throw ShapeError("blend_actions_backward: shape mismatch");
  BlendActionsGrad g;
  g.d_acts = alpha * grad_a.transpose();  // d a / d acts[i][:] = alpha_i
  g.d_alpha = acts * grad_a;              // d a / d alpha_i = acts row i
  return g;
}

double blend_log_prob(const VectorXd& per_policy_log_probs, const VectorXd& alpha) {
  if (per_policy_log_probs.size() != alpha.size())
    throw ShapeError("blend_log_prob: length mismatch");
  return per_policy_log_probs.dot(alpha);
}

BlendLogProbGrad blend_log_prob_backward(const VectorXd& per_policy_log_probs,
                                         const VectorXd& alpha, double grad) {
  if (per_policy_log_probs.size() != alpha.size())
    throw ShapeError("blend_log_prob_backward: length mismatch");
  BlendLogProbGrad g;
  g.d_log_probs = grad * alpha;
  g.d_alpha = grad * per_policy_log_probs;
  return g;
}

EncoderMixture::EncoderMixture(std::vector<DenseNet> encoders, DenseNet gate_net,
                               ContextHead head)
    : encoders_(std::move(encoders)),
      gate_net_(std::move(gate_net)),
      head_(std::move(head)) {
  if (encoders_.empty()) throw ConfigError("encoder mixture needs >= 1 encoder");
  const int out = encoders_[0].output_dim();
  for (const auto& e : encoders_)
    if (e.output_dim() != out || e.input_dim() != encoders_[0].input_dim())
      throw ShapeError("encoders must share input and output dims");
  if (gate_net_.output_dim() != static_cast<int>(encoders_.size()))
    throw ShapeError("encoder gate width must equal the number of encoders");
  if (gate_net_.input_dim() != head_.out_dim())
    throw ShapeError("encoder gate input must match the context head output");
}

EncoderMixture EncoderMixture::make(int k_enc, int state_dim, int repr_dim,
                                    const std::vector<int>& enc_hidden,
                                    const std::vector<int>& gate_hidden,
                                    int ctx_raw_dim, int n, bool stopgrad,
                                    std::uint64_t seed) {
  if (k_enc < 1) throw ConfigError("encoder mixture needs k_enc >= 1");
  std::vector<DenseNet> encoders;
  for (int j = 0; j < k_enc; ++j) {
    DenseNet e = DenseNet::make_mlp(state_dim, enc_hidden, repr_dim,
                                    Activation::kRelu);
    Rng rng = make_stream(seed, "enc-init", static_cast<std::uint64_t>(j));
    e.init_uniform_fanin(rng);
    encoders.push_back(std::move(e));
  }
  DenseNet gate_net = DenseNet::make_mlp(n, gate_hidden, k_enc, Activation::kRelu);
  Rng grng = make_stream(seed, "enc-gate-init");
  gate_net.init_uniform_fanin(grng);
  Rng hrng = make_stream(seed, "enc-ctx-init");
  ContextHead head = ContextHead::make_default(ctx_raw_dim, n, hrng, stopgrad);
  return EncoderMixture(std::move(encoders), std::move(gate_net), std::move(head));
}

MatrixXd EncoderMixture::blend(const MatrixXd& s_raw, const MatrixXd& z_raw) {
  const auto B = s_raw.cols();
  if (z_raw.cols() != B) throw ShapeError("blend: state/context batch mismatch");
  MatrixXd zc = head_.apply_cols(z_raw);
  beta_ = softmax_cols(gate_net_.forward(zc));
  enc_out_.resize(encoders_.size());
  MatrixXd repr = MatrixXd::Zero(out_dim(), B);
  for (std::size_t j = 0; j < encoders_.size(); ++j) {
    enc_out_[j] = encoders_[j].forward(s_raw);
    repr += enc_out_[j] * beta_.row(static_cast<Eigen::Index>(j)).asDiagonal();
  }
  cached_ = true;
  return repr;
}

MatrixXd EncoderMixture::blend_nograd(const MatrixXd& s_raw,
                                      const MatrixXd& z_raw) const {
  const auto B = s_raw.cols();
  if (z_raw.cols() != B) throw ShapeError("blend: state/context batch mismatch");
  MatrixXd zc = head_.net().forward_nograd(z_raw);
  MatrixXd beta = softmax_cols(gate_net_.forward_nograd(zc));
  MatrixXd repr = MatrixXd::Zero(out_dim(), B);
  for (std::size_t j = 0; j < encoders_.size(); ++j) {
    repr += encoders_[j].forward_nograd(s_raw) *
            beta.row(static_cast<Eigen::Index>(j)).asDiagonal();
  }
  return repr;
}

MatrixXd EncoderMixture::backward(const MatrixXd& grad_repr) {
  if (!cached_) throw StateError("EncoderMixture backward without blend");
  const auto B = grad_repr.cols();
  MatrixXd g_beta(encoders_.size(), B);
  MatrixXd g_s = MatrixXd::Zero(in_dim(), B);
  for (std::size_t j = 0; j < encoders_.size(); ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    // d repr / d enc_j output scales each column by beta(j, b).
    MatrixXd g_ej = grad_repr * beta_.row(jj).asDiagonal();
    g_s += encoders_[j].backward(g_ej, true);
    g_beta.row(jj) = enc_out_[j].cwiseProduct(grad_repr).colwise().sum();
  }
  MatrixXd g_z = gate_backward(gate_net_, beta_, g_beta, true);
  head_.backward(g_z);
  return g_s;
}

void EncoderMixture::zero_grads() {
  for (auto& e : encoders_) e.zero_grads();
  gate_net_.zero_grads();
  head_.net().zero_grads();
}

std::uint64_t EncoderMixture::param_hash() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& e : encoders_) h = fnv1a64_mix(h, e.param_hash());
  h = fnv1a64_mix(h, gate_net_.param_hash());
  h = fnv1a64_mix(h, head_.net().param_hash());
  return h;
}

void EncoderMixture::add_to_checkpoint(CheckpointWriter& w) const {
  for (std::size_t j = 0; j < encoders_.size(); ++j)
    w.add_net("enc" + std::to_string(j), encoders_[j]);
  w.add_net("enc_gate", gate_net_);
  w.add_net("enc_ctx_head", head_.net());
}

void EncoderMixture::read_from_checkpoint(const Checkpoint& ck) {
  for (std::size_t j = 0; j < encoders_.size(); ++j)
    ck.read_net_into("enc" + std::to_string(j), encoders_[j]);
  ck.read_net_into("enc_gate", gate_net_);
  ck.read_net_into("enc_ctx_head", head_.net());
}

}  // namespace lexpol
