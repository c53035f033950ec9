#include "lexpol/sac.hpp"

#include <cmath>
#include <istream>
#include <limits>
#include <ostream>

#include "lexpol/errors.hpp"

namespace lexpol {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;
constexpr double kLog2 = 0.6931471805599453094;

inline double softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

void write_pod(std::ostream& os, const void* p, std::size_t n) {
  os.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void read_pod(std::istream& is, void* p, std::size_t n) {
  is.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n));
  if (!is) throw IoError("truncated replay/learner state");
}

}  // namespace

MatrixXd draw_eps(int rows, int cols, Rng& noise) {
  MatrixXd eps(rows, cols);
  for (int c = 0; c < cols; ++c)
    for (int r = 0; r < rows; ++r) eps(r, c) = normal01(noise);
  return eps;
}

GaussianPolicyHead::GaussianPolicyHead(int state_dim, const std::vector<int>& hidden,
                                       int action_dim, double logstd_min,
                                       double logstd_max)
    : lo_(logstd_min), hi_(logstd_max) {
  if (hidden.empty())
    throw ShapeError("policy head needs at least one hidden layer");
  std::vector<int> trunk_hidden(hidden.begin(), hidden.end() - 1);
  trunk_ = DenseNet::make_mlp(state_dim, trunk_hidden, hidden.back(),
                              Activation::kRelu, Activation::kRelu);
  mean_ = DenseNet::make_mlp(hidden.back(), {}, action_dim, Activation::kRelu);
  logstd_ = DenseNet::make_mlp(hidden.back(), {}, action_dim, Activation::kRelu);
}

void GaussianPolicyHead::init(Rng& rng) {
  trunk_.init_uniform_fanin(rng);
  mean_.init_uniform_fanin(rng, 0.01);
  logstd_.init_uniform_fanin(rng, 0.01);
}

PolicySample GaussianPolicyHead::run(const MatrixXd& states, const MatrixXd& eps,
                                     bool keep) {
  const MatrixXd& h = trunk_.forward(states);
  const MatrixXd mu = mean_.forward(h);
  const MatrixXd lraw = logstd_.forward(h);
  MatrixXd l = lraw.cwiseMax(lo_).cwiseMin(hi_);
  MatrixXd sigma = l.array().exp().matrix();
  MatrixXd u = mu + sigma.cwiseProduct(eps);
  MatrixXd a = u.array().tanh().matrix();

  PolicySample out;
  out.log_prob = RowVectorXd::Zero(states.cols());
  for (Eigen::Index c = 0; c < u.cols(); ++c) {
    double lp = 0.0;
    for (Eigen::Index r = 0; r < u.rows(); ++r) {
      lp += -0.5 * kLog2Pi - l(r, c) - 0.5 * eps(r, c) * eps(r, c)
            - 2.0 * (kLog2 - u(r, c) - softplus(-2.0 * u(r, c)));
    }
    out.log_prob(c) = lp;
  }
  out.a = a;

  if (keep) {
    a_ = a;
    sigma_ = sigma;
    eps_ = eps;
    clamp_mask_ = ((lraw.array() > lo_) && (lraw.array() < hi_))
                      .cast<double>()
                      .matrix();
    cached_ = true;
  }
  return out;
}

PolicySample GaussianPolicyHead::run_nograd(const MatrixXd& states,
                                            const MatrixXd& eps) const {
  MatrixXd h = trunk_.forward_nograd(states);
  MatrixXd mu = mean_.forward_nograd(h);
  MatrixXd l = logstd_.forward_nograd(h).cwiseMax(lo_).cwiseMin(hi_);
  MatrixXd sigma = l.array().exp().matrix();
  MatrixXd u = mu + sigma.cwiseProduct(eps);

  PolicySample out;
  out.a = u.array().tanh().matrix();
  out.log_prob = RowVectorXd::Zero(states.cols());
  for (Eigen::Index c = 0; c < u.cols(); ++c) {
    double lp = 0.0;
    for (Eigen::Index r = 0; r < u.rows(); ++r) {
      lp += -0.5 * kLog2Pi - l(r, c) - 0.5 * eps(r, c) * eps(r, c)
            - 2.0 * (kLog2 - u(r, c) - softplus(-2.0 * u(r, c)));
    }
    out.log_prob(c) = lp;
  }
  return out;
}

PolicySample GaussianPolicyHead::sample(const MatrixXd& states, Rng& noise) {
  return run(states, draw_eps(action_dim(), static_cast<int>(states.cols()), noise),
             true);
}

PolicySample GaussianPolicyHead::sample_with_eps(const MatrixXd& states,
                                                 const MatrixXd& eps) {
  return run(states, eps, true);
}

PolicySample GaussianPolicyHead::sample_nograd(const MatrixXd& states,
                                               Rng& noise) const {
  return run_nograd(
      states, draw_eps(action_dim(), static_cast<int>(states.cols()), noise));
}

PolicySample GaussianPolicyHead::sample_with_eps_nograd(const MatrixXd& states,
                                                        const MatrixXd& eps) const {
  return run_nograd(states, eps);
}

MatrixXd GaussianPolicyHead::mean_actions(const MatrixXd& states) const {
  return mean_.forward_nograd(trunk_.forward_nograd(states)).array().tanh().matrix();
}

MatrixXd GaussianPolicyHead::backward(const MatrixXd& grad_a,
                                      const RowVectorXd& grad_logp,
                                      bool accumulate) {
  if (!cached_) throw StateError("policy backward without a cached sample");
  if (grad_a.rows() != a_.rows() || grad_a.cols() != a_.cols() ||
      grad_logp.size() != a_.cols())
    throw ShapeError("policy backward: gradient shape mismatch");

  // u = mu + sigma*eps, a = tanh(u); dlogp/du = 2a, dlogp/dlogstd = -1
  // (direct), da/du = 1-a^2, du/dlogstd = sigma*eps.
  MatrixXd one_m_a2 = (1.0 - a_.array().square()).matrix();
  MatrixXd g_u = grad_a.cwiseProduct(one_m_a2) + 2.0 * (a_ * grad_logp.asDiagonal());
  MatrixXd sig_eps = sigma_.cwiseProduct(eps_);
  MatrixXd g_mu = g_u;
  MatrixXd g_l = g_u.cwiseProduct(sig_eps);
  g_l.rowwise() -= grad_logp;
  g_l = g_l.cwiseProduct(clamp_mask_);

  MatrixXd g_h = mean_.backward(g_mu, accumulate);
  g_h += logstd_.backward(g_l, accumulate);
  return trunk_.backward(g_h, accumulate);
}

void GaussianPolicyHead::zero_grads() {
  trunk_.zero_grads();
  mean_.zero_grads();
  logstd_.zero_grads();
}

std::uint64_t GaussianPolicyHead::param_hash() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  h = fnv1a64_mix(h, trunk_.param_hash());
  h = fnv1a64_mix(h, mean_.param_hash());
  h = fnv1a64_mix(h, logstd_.param_hash());
  return h;
}

double GaussianPolicyHead::clamp_margin() const {
  if (!cached_) return std::numeric_limits<double>::infinity();
  // sigma was exp(clamp(lraw)); recover the margin from the mask: elements
  // on the clamp have mask 0, so margin is zero if any were clamped.
  if ((clamp_mask_.array() == 0.0).any()) return 0.0;
  double m = std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < sigma_.cols(); ++c)
    for (Eigen::Index r = 0; r < sigma_.rows(); ++r) {
      const double l = std::log(sigma_(r, c));
      m = std::min(m, std::min(l - lo_, hi_ - l));
    }
  return m;
}

void GaussianPolicyHead::add_to_checkpoint(CheckpointWriter& w,
                                           const std::string& prefix) const {
  w.add_net(prefix + "_trunk", trunk_);
  w.add_net(prefix + "_mean", mean_);
  w.add_net(prefix + "_logstd", logstd_);
}

void GaussianPolicyHead::read_from_checkpoint(const Checkpoint& ck,
                                              const std::string& prefix) {
  ck.read_net_into(prefix + "_trunk", trunk_);
  ck.read_net_into(prefix + "_mean", mean_);
  ck.read_net_into(prefix + "_logstd", logstd_);
}

TwinCritics::TwinCritics(int state_dim, int action_dim,
                         const std::vector<int>& hidden, double tau, Rng& rng_q1,
                         Rng& rng_q2)
    : tau_(tau) {
  const int in = state_dim + action_dim;
  q1_ = DenseNet::make_mlp(in, hidden, 1, Activation::kRelu);
  q2_ = DenseNet::make_mlp(in, hidden, 1, Activation::kRelu);
  q1_.init_uniform_fanin(rng_q1);
  q2_.init_uniform_fanin(rng_q2);
  t1_ = q1_;
  t2_ = q2_;
  t1_.drop_cache();
  t2_.drop_cache();
}

RowVectorXd TwinCritics::q1_forward(const MatrixXd& sa) {
  return q1_.forward(sa).row(0);
}

RowVectorXd TwinCritics::q2_forward(const MatrixXd& sa) {
  return q2_.forward(sa).row(0);
}

void TwinCritics::backward_online(const RowVectorXd& grad_q1,
                                  const RowVectorXd& grad_q2) {
  q1_.backward(MatrixXd(grad_q1), true);
  q2_.backward(MatrixXd(grad_q2), true);
}

RowVectorXd TwinCritics::target_min(const MatrixXd& sa) const {
  RowVectorXd v1 = t1_.forward_nograd(sa).row(0);
  RowVectorXd v2 = t2_.forward_nograd(sa).row(0);
  return v1.cwiseMin(v2);
}

RowVectorXd TwinCritics::online_min(const MatrixXd& sa) {
  RowVectorXd v1 = q1_.forward(sa).row(0);
  RowVectorXd v2 = q2_.forward(sa).row(0);
  min_mask1_ = (v1.array() <= v2.array()).cast<double>();
  min_cached_ = true;
  return v1.cwiseMin(v2);
}

MatrixXd TwinCritics::online_min_backward(const RowVectorXd& grad,
                                          bool accumulate) {
  if (!min_cached_) throw StateError("online_min_backward without online_min");
  RowVectorXd g1 = grad.cwiseProduct(min_mask1_);
  RowVectorXd g2 = grad - g1;
  MatrixXd gin = q1_.backward(MatrixXd(g1), accumulate);
  gin += q2_.backward(MatrixXd(g2), accumulate);
  return gin;
}

void TwinCritics::polyak() {
  auto blend = [this](DenseNet& target, const DenseNet& online) {
    for (std::size_t l = 0; l < target.num_layers(); ++l) {
      target.weight(l) = (1.0 - tau_) * target.weight(l) + tau_ * online.weight(l);
      target.bias(l) = (1.0 - tau_) * target.bias(l) + tau_ * online.bias(l);
    }
  };
  blend(t1_, q1_);
  blend(t2_, q2_);
}

void TwinCritics::zero_grads() {
  q1_.zero_grads();
  q2_.zero_grads();
}

std::uint64_t TwinCritics::param_hash() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  h = fnv1a64_mix(h, q1_.param_hash());
  h = fnv1a64_mix(h, q2_.param_hash());
  return h;
}

std::uint64_t TwinCritics::target_hash() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  h = fnv1a64_mix(h, t1_.param_hash());
  h = fnv1a64_mix(h, t2_.param_hash());
  return h;
}

void TwinCritics::add_to_checkpoint(CheckpointWriter& w) const {
  w.add_net("q1", q1_);
  w.add_net("q2", q2_);
  w.add_net("target1", t1_);
  w.add_net("target2", t2_);
}

void TwinCritics::read_from_checkpoint(const Checkpoint& ck) {
  ck.read_net_into("q1", q1_);
  ck.read_net_into("q2", q2_);
  ck.read_net_into("target1", t1_);
  ck.read_net_into("target2", t2_);
}

ReplayBuffer::ReplayBuffer(std::size_t capacity, int num_tasks) {
  if (num_tasks < 1) throw ConfigError("replay buffer needs >= 1 task");
  per_task_capacity_ = std::max<std::size_t>(1, capacity / num_tasks);
  rings_.resize(num_tasks);
  heads_.assign(num_tasks, 0);
}

void ReplayBuffer::push(const Transition& t) {
  if (t.task < 0 || t.task >= num_tasks())
    throw ShapeError("replay push: task index out of range");
  auto& ring = rings_[t.task];
  if (ring.size() < per_task_capacity_) {
    ring.push_back(t);
  } else {
    ring[heads_[t.task]] = t;
    heads_[t.task] = (heads_[t.task] + 1) % per_task_capacity_;
  }
}

std::size_t ReplayBuffer::size() const {
  std::size_t n = 0;
  for (const auto& r : rings_) n += r.size();
  return n;
}

std::size_t ReplayBuffer::task_size(int task) const {
  return rings_.at(static_cast<std::size_t>(task)).size();
}

Batch ReplayBuffer::sample(int batch_per_task, Rng& rng) const {
  if (batch_per_task < 1) throw ShapeError("batch_per_task must be >= 1");
  std::vector<const Transition*> picks;
  for (const auto& ring : rings_) {
    if (ring.empty()) continue;
    for (int i = 0; i < batch_per_task; ++i)
      picks.push_back(&ring[uniform_index(rng, ring.size())]);
  }
  if (picks.empty()) throw StateError("sampling from an empty replay buffer");

  const auto ds = picks[0]->s.size();
  const auto m = picks[0]->a.size();
  const auto B = static_cast<Eigen::Index>(picks.size());
  Batch batch;
  batch.s.resize(ds, B);
  batch.a.resize(m, B);
  batch.s_next.resize(ds, B);
  batch.r.resize(B);
  batch.not_done.resize(B);
  batch.meta.resize(picks.size());
  batch.meta_next.resize(picks.size());
  batch.task.resize(picks.size());
  for (Eigen::Index c = 0; c < B; ++c) {
    const Transition& t = *picks[static_cast<std::size_t>(c)];
    batch.s.col(c) = t.s;
    batch.a.col(c) = t.a;
    batch.s_next.col(c) = t.s_next;
    batch.r(c) = t.r;
    batch.not_done(c) = t.done ? 0.0 : 1.0;
    batch.meta[static_cast<std::size_t>(c)] = t.meta;
    batch.meta_next[static_cast<std::size_t>(c)] = t.meta_next;
    batch.task[static_cast<std::size_t>(c)] = t.task;
  }
  return batch;
}

void ReplayBuffer::save(std::ostream& os) const {
  const std::uint64_t ntasks = rings_.size();
  write_pod(os, &ntasks, sizeof(ntasks));
  write_pod(os, &per_task_capacity_, sizeof(per_task_capacity_));
  for (std::size_t t = 0; t < rings_.size(); ++t) {
    const std::uint64_t n = rings_[t].size();
    const std::uint64_t head = heads_[t];
    write_pod(os, &n, sizeof(n));
    write_pod(os, &head, sizeof(head));
    for (const auto& tr : rings_[t]) {
      const std::int64_t ints[3] = {tr.task, tr.meta, tr.meta_next};
      write_pod(os, ints, sizeof(ints));
      const std::uint64_t ds = tr.s.size(), m = tr.a.size();
      write_pod(os, &ds, sizeof(ds));
      write_pod(os, &m, sizeof(m));
      write_pod(os, tr.s.data(), sizeof(double) * ds);
      write_pod(os, tr.a.data(), sizeof(double) * m);
      write_pod(os, tr.s_next.data(), sizeof(double) * ds);
      write_pod(os, &tr.r, sizeof(tr.r));
      const std::uint8_t done = tr.done ? 1 : 0;
      write_pod(os, &done, sizeof(done));
    }
  }
}

void ReplayBuffer::load(std::istream& is) {
  std::uint64_t ntasks = 0;
  read_pod(is, &ntasks, sizeof(ntasks));
  read_pod(is, &per_task_capacity_, sizeof(per_task_capacity_));
  rings_.assign(ntasks, {});
  heads_.assign(ntasks, 0);
  for (std::size_t t = 0; t < ntasks; ++t) {
    std::uint64_t n = 0, head = 0;
    read_pod(is, &n, sizeof(n));
    read_pod(is, &head, sizeof(head));
    heads_[t] = head;
    rings_[t].resize(n);
    for (auto& tr : rings_[t]) {
      std::int64_t ints[3];
      read_pod(is, ints, sizeof(ints));
      tr.task = static_cast<int>(ints[0]);
      tr.meta = static_cast<int>(ints[1]);
      tr.meta_next = static_cast<int>(ints[2]);
      std::uint64_t ds = 0, m = 0;
      read_pod(is, &ds, sizeof(ds));
      read_pod(is, &m, sizeof(m));
      tr.s.resize(static_cast<Eigen::Index>(ds));
      tr.a.resize(static_cast<Eigen::Index>(m));
      tr.s_next.resize(static_cast<Eigen::Index>(ds));
      read_pod(is, tr.s.data(), sizeof(double) * ds);
      read_pod(is, tr.a.data(), sizeof(double) * m);
      read_pod(is, tr.s_next.data(), sizeof(double) * ds);
      read_pod(is, &tr.r, sizeof(tr.r));
      std::uint8_t done = 0;
      read_pod(is, &done, sizeof(done));
      tr.done = done != 0;
    }
  }
}

EntropyTemp::EntropyTemp(double target_entropy, bool auto_tune, double init_alpha)
    : target_entropy_(target_entropy), auto_tune_(auto_tune) {
  if (init_alpha <= 0.0) throw ConfigError("alpha must be positive");
  log_alpha_ = std::log(init_alpha);
}

double EntropyTemp::alpha() const { return std::exp(log_alpha_); }

double EntropyTemp::update(const RowVectorXd& log_probs, const AdamConfig& cfg) {
  // L = -log_alpha * mean(logp + target); fixed point at implied entropy
  // -mean(logp) equal to the target.
  const double excess = log_probs.mean() + target_entropy_;
  const double loss = -log_alpha_ * excess;
  if (auto_tune_) opt_.step(log_alpha_, -excess, cfg);
  return loss;
}

void EntropyTemp::save(std::ostream& os) const {
  write_pod(os, &log_alpha_, sizeof(log_alpha_));
  write_pod(os, &target_entropy_, sizeof(target_entropy_));
  const std::uint8_t a = auto_tune_ ? 1 : 0;
  write_pod(os, &a, sizeof(a));
  opt_.save(os);
}

void EntropyTemp::load(std::istream& is) {
  read_pod(is, &log_alpha_, sizeof(log_alpha_));
  read_pod(is, &target_entropy_, sizeof(target_entropy_));
  std::uint8_t a = 0;
  read_pod(is, &a, sizeof(a));
  auto_tune_ = a != 0;
  opt_.load(is);
}

RowVectorXd critic_target(const TwinCritics& critics, const MatrixXd& s_next,
                          const PolicySample& next, const RowVectorXd& r,
                          const RowVectorXd& not_done, double alpha, double gamma,
                          double reward_scale) {
  if (s_next.cols() != next.a.cols() || r.size() != s_next.cols() ||
      not_done.size() != s_next.cols())
    throw ShapeError("critic_target: batch size mismatch");
  MatrixXd sa(s_next.rows() + next.a.rows(), s_next.cols());
  sa << s_next, next.a;
  RowVectorXd qt = critics.target_min(sa);
  RowVectorXd soft = qt - alpha * next.log_prob;
  return reward_scale * r + gamma * not_done.cwiseProduct(soft);
}

SacLearner::SacLearner(int state_dim, int action_dim,
                       const std::vector<int>& critic_hidden, const SacConfig& cfg,
                       std::uint64_t seed)
    : cfg_(cfg) {
  Rng r1 = make_stream(seed, "q1-init");
  Rng r2 = make_stream(seed, "q2-init");
  critics_ = TwinCritics(state_dim, action_dim, critic_hidden, cfg.tau, r1, r2);
  temp_ = EntropyTemp(cfg.resolved_target_entropy(action_dim), cfg.auto_alpha,
                      cfg.auto_alpha ? 1.0 : cfg.fixed_alpha);
  opt_q1_ = AdamState::for_net(critics_.q1());
  opt_q2_ = AdamState::for_net(critics_.q2());
}

SacLosses SacLearner::update(ActorModel& actor, const Batch& batch, Rng& noise) {
  if (batch.size() == 0) throw ShapeError("SAC update on an empty batch");
  const auto B = batch.size();
  const int m = actor.action_dim();
  const double alpha = temp_.alpha();
  const AdamConfig adam = cfg_.adam();

  // Critic regression toward the soft bootstrap target.
  PolicySample nxt = actor.sample_nograd(batch.s_next, batch.meta_next, noise);
  RowVectorXd y = critic_target(critics_, batch.s_next, nxt, batch.r,
                                batch.not_done, alpha, cfg_.gamma,
                                cfg_.reward_scale);
  MatrixXd sa(batch.s.rows() + batch.a.rows(), B);
  sa << batch.s, batch.a;
  critics_.zero_grads();
  RowVectorXd d1 = critics_.q1_forward(sa) - y;
  RowVectorXd d2 = critics_.q2_forward(sa) - y;
  const double closs = (d1.squaredNorm() + d2.squaredNorm()) / static_cast<double>(B);
  const double scale = 2.0 / static_cast<double>(B);
  critics_.backward_online(scale * d1, scale * d2);
  opt_q1_.step(critics_.q1(), adam);
  opt_q2_.step(critics_.q2(), adam);

  // Actor: minimize alpha*logp - min Q along the reparameterized action.
  actor.zero_grads();
  PolicySample cur = actor.sample(batch.s, batch.meta, noise);
  MatrixXd sa_pi(batch.s.rows() + cur.a.rows(), B);
  sa_pi << batch.s, cur.a;
  RowVectorXd qmin = critics_.online_min(sa_pi);
  const double aloss = (alpha * cur.log_prob - qmin).mean();
  RowVectorXd g_q = RowVectorXd::Constant(B, -1.0 / static_cast<double>(B));
  MatrixXd g_sa = critics_.online_min_backward(g_q, false);
  MatrixXd g_a = g_sa.bottomRows(m);
  RowVectorXd g_lp = RowVectorXd::Constant(B, alpha / static_cast<double>(B));
  actor.backward(g_a, g_lp);
  actor.optimizer_step(adam);

  const double tloss = temp_.update(cur.log_prob, adam);
  critics_.polyak();

  if (!std::isfinite(closs) || !std::isfinite(aloss))
    throw NumericError("non-finite SAC loss (critic=" + std::to_string(closs) +
                       ", actor=" + std::to_string(aloss) + ")");

  SacLosses out;
  out.critic = closs;
  out.actor = aloss;
  out.alpha_loss = tloss;
  out.alpha = temp_.alpha();
  out.mean_q = qmin.mean();
  out.mean_logp = cur.log_prob.mean();
  return out;
}

void SacLearner::add_to_checkpoint(CheckpointWriter& w) const {
  critics_.add_to_checkpoint(w);
  w.add_scalar("log_alpha", temp_.log_alpha());
}

void SacLearner::read_from_checkpoint(const Checkpoint& ck) {
  critics_.read_from_checkpoint(ck);
  temp_.set_log_alpha(ck.read_scalar("log_alpha"));
}

void SacLearner::save_opt_state(std::ostream& os) const {
  opt_q1_.save(os);
  opt_q2_.save(os);
  temp_.save(os);
}

void SacLearner::load_opt_state(std::istream& is) {
  opt_q1_.load(is, critics_.q1());
  opt_q2_.load(is, critics_.q2());
  temp_.load(is);
}

void SacLearner::save_params64(std::ostream& os) const {
  lexpol::save_params64(os, critics_.q1());
  lexpol::save_params64(os, critics_.q2());
  lexpol::save_params64(os, critics_.target1());
  lexpol::save_params64(os, critics_.target2());
}

void SacLearner::load_params64(std::istream& is) {
  lexpol::load_params64(is, critics_.q1());
  lexpol::load_params64(is, critics_.q2());
  lexpol::load_params64(is, critics_.target1());
  lexpol::load_params64(is, critics_.target2());
}

}  // namespace lexpol
