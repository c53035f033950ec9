#include "lexpol/agent.hpp"

#include <cctype>
#include <fstream>
#include <utility>

#include "lexpol/errors.hpp"

namespace lexpol {

Mode mode_from_string(const std::string& s) {
  if (s == "lexpol") return Mode::kLexpol;
  if (s == "lexpol_frozen") return Mode::kLexpolFrozen;
  if (s == "lexpol_care") return Mode::kLexpolCare;
  if (s == "mtsac_flat") return Mode::kMtsacFlat;
  if (s == "single_task") return Mode::kSingleTask;
  throw ConfigError("unknown mode: " + s);
}

std::string to_string(Mode m) {
  switch (m) {
    case Mode::kLexpol: return "lexpol";
    case Mode::kLexpolFrozen: return "lexpol_frozen";
    case Mode::kLexpolCare: return "lexpol_care";
    case Mode::kMtsacFlat: return "mtsac_flat";
    case Mode::kSingleTask: return "single_task";
  }
  return "lexpol";
}

void AgentConfig::validate() const {
  if (k < 1) throw ConfigError("k must be at least 1");
  if (n < 1) throw ConfigError("context dim n must be at least 1");
  if (actor_hidden.empty()) throw ConfigError("actor_hidden must not be empty");
  for (int h : actor_hidden)
    if (h < 1) throw ConfigError("actor_hidden entries must be positive");
  if (mode == Mode::kLexpolFrozen && expert_paths.empty())
    throw ConfigError("lexpol_frozen requires expert_paths");
  if (mode == Mode::kLexpolCare && care_k_enc < 1)
    throw ConfigError("care_k_enc must be at least 1");
  if (context_table && context_table_path.empty())
    throw ConfigError("context_table requires context_table_path");
}

// ---------------------------------------------------------------- PlainActor

PlainActor::PlainActor(int state_dim, int action_dim,
                       const std::vector<int>& hidden, const SacConfig& scfg,
                       std::uint64_t seed)
    : head_(state_dim, hidden, action_dim, scfg.logstd_min, scfg.logstd_max) {
  Rng r = make_stream(seed, "actor-init", 0);
  head_.init(r);
  head_.for_each_net([this](const std::string& name, DenseNet& net) {
    if (name == "trunk") opt_trunk_ = AdamState::for_net(net);
    else if (name == "mean") opt_mean_ = AdamState::for_net(net);
    else opt_logstd_ = AdamState::for_net(net);
  });
}

PolicySample PlainActor::sample(const MatrixXd& states,
                                const std::vector<int>& meta, Rng& noise) {
  (void)meta;
  const MatrixXd eps = draw_eps(action_dim(), static_cast<int>(states.cols()), noise);
  return head_.sample_with_eps(states, eps);
}

PolicySample PlainActor::sample_nograd(const MatrixXd& states,
                                       const std::vector<int>& meta,
                                       Rng& noise) const {
  (void)meta;
  const MatrixXd eps = draw_eps(action_dim(), static_cast<int>(states.cols()), noise);
  return head_.sample_with_eps_nograd(states, eps);
}

MatrixXd PlainActor::mean_actions(const MatrixXd& states,
                                  const std::vector<int>& meta) const {
  (void)meta;
  return head_.mean_actions(states);
}

void PlainActor::backward(const MatrixXd& grad_a, const RowVectorXd& grad_logp) {
  head_.backward(grad_a, grad_logp, true);
}

void PlainActor::zero_grads() { head_.zero_grads(); }

void PlainActor::optimizer_step(const AdamConfig& cfg) {
  opt_trunk_.step(head_.trunk(), cfg);
  opt_mean_.step(head_.mean_layer(), cfg);
  opt_logstd_.step(head_.logstd_layer(), cfg);
}

ActResult PlainActor::act(const VectorXd& s, int meta, Rng& noise) const {
  (void)meta;
  const MatrixXd eps = draw_eps(action_dim(), 1, noise);
  const PolicySample p = head_.sample_with_eps_nograd(s, eps);
  return {p.a.col(0), p.log_prob(0), VectorXd()};
}

ActResult PlainActor::act_mean(const VectorXd& s, int meta) const {
  (void)meta;
  return {head_.mean_actions(s).col(0), 0.0, VectorXd()};
}

VectorXd PlainActor::gate_weights(int meta) const {
  (void)meta;
  return VectorXd::Ones(1);
}

void PlainActor::add_to_checkpoint(CheckpointWriter& w) const {
  head_.add_to_checkpoint(w, "actor0");
}

void PlainActor::read_from_checkpoint(const Checkpoint& ck) {
  head_.read_from_checkpoint(ck, "actor0");
}

void PlainActor::save_opt_state(std::ostream& os) const {
  opt_trunk_.save(os);
  opt_mean_.save(os);
  opt_logstd_.save(os);
}

void PlainActor::load_opt_state(std::istream& is) {
  opt_trunk_.load(is, head_.trunk());
  opt_mean_.load(is, head_.mean_layer());
  opt_logstd_.load(is, head_.logstd_layer());
}

void PlainActor::save_params64(std::ostream& os) const {
  lexpol::save_params64(os, head_.trunk());
  lexpol::save_params64(os, head_.mean_layer());
  lexpol::save_params64(os, head_.logstd_layer());
}

void PlainActor::load_params64(std::istream& is) {
  lexpol::load_params64(is, head_.trunk());
  lexpol::load_params64(is, head_.mean_layer());
  lexpol::load_params64(is, head_.logstd_layer());
}

std::map<std::string, std::uint64_t> PlainActor::param_group_hashes() const {
  return {{"actor0", head_.param_hash()}};
}

// ------------------------------------------------------------ CompositeActor

CompositeActor::CompositeActor(const AgentConfig& acfg, const SacConfig& scfg,
                               int state_dim, int action_dim,
                               std::vector<TaskMetadata> variants,
                               ContextProvider provider)
    : state_dim_(state_dim),
      stopgrad_(acfg.stopgrad_context),
      frozen_(acfg.mode == Mode::kLexpolFrozen),
      provider_(std::move(provider)),
      variants_(std::move(variants)) {
  if (variants_.empty()) throw ConfigError("composite actor needs metadata variants");

  raw_embeds_.resize(provider_.dim(), static_cast<Eigen::Index>(variants_.size()));
  for (std::size_t v = 0; v < variants_.size(); ++v)
    raw_embeds_.col(static_cast<Eigen::Index>(v)) = provider_.embed(variants_[v]).vector;

  const bool care = acfg.mode == Mode::kLexpolCare;
  int policy_in = state_dim;
  if (care) {
    const int repr = acfg.care_repr_dim > 0 ? acfg.care_repr_dim : state_dim;
    enc_ = std::make_unique<EncoderMixture>(EncoderMixture::make(
        acfg.care_k_enc, state_dim, repr, acfg.care_enc_hidden,
        acfg.care_gate_hidden, provider_.dim(), acfg.n, acfg.stopgrad_context,
        acfg.seed));
    policy_in = repr;
  }

  heads_.reserve(static_cast<std::size_t>(acfg.k));
  for (int i = 0; i < acfg.k; ++i) {
    heads_.emplace_back(policy_in, acfg.actor_hidden, action_dim,
                        scfg.logstd_min, scfg.logstd_max);
    Rng r = make_stream(acfg.seed, "actor-init", static_cast<std::uint64_t>(i));
    heads_.back().init(r);
  }

  gate_net_ = DenseNet::make_mlp(acfg.n, acfg.gate_hidden, acfg.k, Activation::kRelu,
                       Activation::kIdentity);
  {
    Rng r = make_stream(acfg.seed, "gate-init");
    gate_net_.init_uniform_fanin(r);
  }
  {
    Rng r = make_stream(acfg.seed, "ctx-init");
    ctx_head_ = ContextHead::make_default(provider_.dim(), acfg.n, r,
                                          acfg.stopgrad_context);
  }

  for (auto& h : heads_)
    h.for_each_net([this](const std::string&, DenseNet& net) {
      head_opts_.push_back(AdamState::for_net(net));
    });
  opt_gate_ = AdamState::for_net(gate_net_);
  opt_ctx_ = AdamState::for_net(ctx_head_.net());
  if (enc_) {
    for (auto& e : enc_->encoders()) enc_opts_.push_back(AdamState::for_net(e));
    enc_opts_.push_back(AdamState::for_net(enc_->gate_net()));
    enc_opts_.push_back(AdamState::for_net(enc_->head().net()));
  }
}

MatrixXd CompositeActor::gather_embeds(const std::vector<int>& meta) const {
  MatrixXd z(raw_embeds_.rows(), static_cast<Eigen::Index>(meta.size()));
  for (std::size_t b = 0; b < meta.size(); ++b) {
    if (meta[b] < 0 || meta[b] >= static_cast<int>(variants_.size()))
      throw ShapeError("metadata variant index out of range");
    z.col(static_cast<Eigen::Index>(b)) = raw_embeds_.col(meta[b]);
  }
  return z;
}

VectorXd CompositeActor::raw_embedding(int meta) const {
  if (meta < 0 || meta >= static_cast<int>(variants_.size()))
    throw ShapeError("metadata variant index out of range");
  return raw_embeds_.col(meta);
}

MatrixXd CompositeActor::policy_states(const MatrixXd& states,
                                       const MatrixXd& z_raw) {
  return enc_ ? enc_->blend(states, z_raw) : states;
}

MatrixXd CompositeActor::policy_states_nograd(const MatrixXd& states,
                                              const MatrixXd& z_raw) const {
  return enc_ ? enc_->blend_nograd(states, z_raw) : states;
}

PolicySample CompositeActor::sample(const MatrixXd& states,
                                    const std::vector<int>& meta, Rng& noise) {
  if (states.cols() != static_cast<Eigen::Index>(meta.size()))
    throw ShapeError("one metadata index per state column required");
  const MatrixXd z_raw = gather_embeds(meta);
  const MatrixXd zc = ctx_head_.apply_cols(z_raw);
  alpha_ = softmax_cols(gate_net_.forward(zc));
  const MatrixXd s_pol = policy_states(states, z_raw);

  const std::size_t k = heads_.size();
  sub_a_.resize(k);
  sub_lp_.resize(k);
  PolicySample out;
  for (std::size_t i = 0; i < k; ++i) {
    const MatrixXd eps =
        draw_eps(action_dim(), static_cast<int>(states.cols()), noise);
    PolicySample p = heads_[i].sample_with_eps(s_pol, eps);
    if (i == 0) {
      out.a = p.a * alpha_.row(0).asDiagonal();
      out.log_prob = alpha_.row(0).array() * p.log_prob.array();
    } else {
      out.a += p.a * alpha_.row(static_cast<Eigen::Index>(i)).asDiagonal();
      out.log_prob.array() +=
          alpha_.row(static_cast<Eigen::Index>(i)).array() * p.log_prob.array();
    }
    sub_a_[i] = std::move(p.a);
    sub_lp_[i] = std::move(p.log_prob);
  }
  cached_ = true;
  return out;
}

PolicySample CompositeActor::sample_nograd(const MatrixXd& states,
                                           const std::vector<int>& meta,
                                           Rng& noise) const {
  if (states.cols() != static_cast<Eigen::Index>(meta.size()))
    throw ShapeError("one metadata index per state column required");
  const MatrixXd z_raw = gather_embeds(meta);
  const MatrixXd zc = ctx_head_.net().forward_nograd(z_raw);
  const MatrixXd alpha = softmax_cols(gate_net_.forward_nograd(zc));
  const MatrixXd s_pol = policy_states_nograd(states, z_raw);

  PolicySample out;
  for (std::size_t i = 0; i < heads_.size(); ++i) {
    const MatrixXd eps =
        draw_eps(action_dim(), static_cast<int>(states.cols()), noise);
    const PolicySample p = heads_[i].sample_with_eps_nograd(s_pol, eps);
    if (i == 0) {
      out.a = p.a * alpha.row(0).asDiagonal();
      out.log_prob = alpha.row(0).array() * p.log_prob.array();
    } else {
      out.a += p.a * alpha.row(static_cast<Eigen::Index>(i)).asDiagonal();
      out.log_prob.array() +=
          alpha.row(static_cast<Eigen::Index>(i)).array() * p.log_prob.array();
    }
  }
  return out;
}

MatrixXd CompositeActor::mean_actions(const MatrixXd& states,
                                      const std::vector<int>& meta) const {
  if (states.cols() != static_cast<Eigen::Index>(meta.size()))
    throw ShapeError("one metadata index per state column required");
  const MatrixXd z_raw = gather_embeds(meta);
  const MatrixXd zc = ctx_head_.net().forward_nograd(z_raw);
  const MatrixXd alpha = softmax_cols(gate_net_.forward_nograd(zc));
  const MatrixXd s_pol = policy_states_nograd(states, z_raw);

  MatrixXd out;
  for (std::size_t i = 0; i < heads_.size(); ++i) {
    const MatrixXd a = heads_[i].mean_actions(s_pol);
    if (i == 0)
      out = a * alpha.row(0).asDiagonal();
    else
      out += a * alpha.row(static_cast<Eigen::Index>(i)).asDiagonal();
  }
  return out;
}

void CompositeActor::backward(const MatrixXd& grad_a,
                              const RowVectorXd& grad_logp) {
  if (!cached_) throw StateError("backward without a grad-tracked sample");
  const Eigen::Index B = grad_a.cols();
  const std::size_t k = heads_.size();
  MatrixXd g_alpha(static_cast<Eigen::Index>(k), B);
  MatrixXd g_s = MatrixXd::Zero(heads_[0].state_dim(), B);
  for (std::size_t i = 0; i < k; ++i) {
    const Eigen::Index r = static_cast<Eigen::Index>(i);
    const MatrixXd g_ai = grad_a * alpha_.row(r).asDiagonal();
    const RowVectorXd g_lpi = alpha_.row(r).array() * grad_logp.array();
    g_s += heads_[i].backward(g_ai, g_lpi, !frozen_);
    g_alpha.row(r) = (sub_a_[i].array() * grad_a.array()).colwise().sum();
    g_alpha.row(r).array() += grad_logp.array() * sub_lp_[i].array();
  }
  const MatrixXd g_z = gate_backward(gate_net_, alpha_, g_alpha, true);
  ctx_head_.backward(g_z);
  if (enc_) enc_->backward(g_s);  // raw-state gradient not needed further
  cached_ = false;
}

void CompositeActor::zero_grads() {
  for (auto& h : heads_) h.zero_grads();
  gate_net_.zero_grads();
  ctx_head_.net().zero_grads();
  if (enc_) enc_->zero_grads();
}

void CompositeActor::optimizer_step(const AdamConfig& cfg) {
  if (!frozen_) {
    std::size_t j = 0;
    for (auto& h : heads_) {
      h.for_each_net([&](const std::string&, DenseNet& net) {
        head_opts_[j++].step(net, cfg);
      });
    }
  } else {
    for (auto& h : heads_) h.zero_grads();
  }
  opt_gate_.step(gate_net_, cfg);
  if (!stopgrad_)
    opt_ctx_.step(ctx_head_.net(), cfg);
  else
    ctx_head_.net().zero_grads();
  if (enc_) {
    for (std::size_t j = 0; j < enc_->encoders().size(); ++j)
      enc_opts_[j].step(enc_->encoders()[j], cfg);
    enc_opts_[enc_->encoders().size()].step(enc_->gate_net(), cfg);
    if (!stopgrad_)
      enc_opts_[enc_->encoders().size() + 1].step(enc_->head().net(), cfg);
    else
      enc_->head().net().zero_grads();
  }
}

ActResult CompositeActor::act(const VectorXd& s, int meta, Rng& noise) const {
  const PolicySample p = sample_nograd(s, {meta}, noise);
  return {p.a.col(0), p.log_prob(0), gate_weights(meta)};
}

ActResult CompositeActor::act_mean(const VectorXd& s, int meta) const {
  const MatrixXd a = mean_actions(s, {meta});
  return {a.col(0), 0.0, gate_weights(meta)};
}

VectorXd CompositeActor::gate_weights(int meta) const {
  const VectorXd z_raw = raw_embedding(meta);
  const VectorXd zc = ctx_head_.net().forward_nograd(z_raw);
  return gate_nograd(gate_net_, zc);
}

void CompositeActor::load_experts(const std::vector<std::string>& paths) {
  const std::size_t k = heads_.size();
  if (paths.size() == 1 && k > 1) {
    const Checkpoint ck = Checkpoint::load(paths[0]);
    for (std::size_t i = 0; i < k; ++i)
      heads_[i].read_from_checkpoint(ck, "actor" + std::to_string(i));
  } else if (paths.size() == k) {
    for (std::size_t i = 0; i < k; ++i) {
      const Checkpoint ck = Checkpoint::load(paths[i]);
      heads_[i].read_from_checkpoint(ck, "actor0");
    }
  } else {
    throw ConfigError("expert_paths must list one checkpoint per sub-policy, "
                      "or a single checkpoint holding all of them");
  }
  frozen_ = true;
}

void CompositeActor::add_to_checkpoint(CheckpointWriter& w) const {
  for (std::size_t i = 0; i < heads_.size(); ++i)
    heads_[i].add_to_checkpoint(w, "actor" + std::to_string(i));
  w.add_net("gate", gate_net_);
  w.add_net("ctx_head", ctx_head_.net());
  if (enc_) enc_->add_to_checkpoint(w);
}

void CompositeActor::read_from_checkpoint(const Checkpoint& ck) {
  for (std::size_t i = 0; i < heads_.size(); ++i)
    heads_[i].read_from_checkpoint(ck, "actor" + std::to_string(i));
  ck.read_net_into("gate", gate_net_);
  ck.read_net_into("ctx_head", ctx_head_.net());
  if (enc_) enc_->read_from_checkpoint(ck);
}

void CompositeActor::save_opt_state(std::ostream& os) const {
  for (const auto& o : head_opts_) o.save(os);
  opt_gate_.save(os);
  opt_ctx_.save(os);
  for (const auto& o : enc_opts_) o.save(os);
}

void CompositeActor::load_opt_state(std::istream& is) {
  std::size_t j = 0;
  for (auto& h : heads_)
    h.for_each_net([&](const std::string&, DenseNet& net) {
      head_opts_[j++].load(is, net);
    });
  opt_gate_.load(is, gate_net_);
  opt_ctx_.load(is, ctx_head_.net());
  if (enc_) {
    for (std::size_t e = 0; e < enc_->encoders().size(); ++e)
      enc_opts_[e].load(is, enc_->encoders()[e]);
    enc_opts_[enc_->encoders().size()].load(is, enc_->gate_net());
    enc_opts_[enc_->encoders().size() + 1].load(is, enc_->head().net());
  }
}

void CompositeActor::save_params64(std::ostream& os) const {
  for (const auto& h : heads_) {
    lexpol::save_params64(os, h.trunk());
    lexpol::save_params64(os, h.mean_layer());
    lexpol::save_params64(os, h.logstd_layer());
  }
  lexpol::save_params64(os, gate_net_);
  lexpol::save_params64(os, ctx_head_.net());
  if (enc_) {
    for (const auto& e : enc_->encoders()) lexpol::save_params64(os, e);
    lexpol::save_params64(os, enc_->gate_net());
    lexpol::save_params64(os, enc_->head().net());
  }
}

void CompositeActor::load_params64(std::istream& is) {
  for (auto& h : heads_) {
    lexpol::load_params64(is, h.trunk());
    lexpol::load_params64(is, h.mean_layer());
    lexpol::load_params64(is, h.logstd_layer());
  }
  lexpol::load_params64(is, gate_net_);
  lexpol::load_params64(is, ctx_head_.net());
  if (enc_) {
    for (auto& e : enc_->encoders()) lexpol::load_params64(is, e);
    lexpol::load_params64(is, enc_->gate_net());
    lexpol::load_params64(is, enc_->head().net());
  }
}

std::map<std::string, std::uint64_t> CompositeActor::param_group_hashes() const {
  std::map<std::string, std::uint64_t> h;
  for (std::size_t i = 0; i < heads_.size(); ++i)
    h["actor" + std::to_string(i)] = heads_[i].param_hash();
  h["gate"] = gate_net_.param_hash();
  h["ctx_head"] = ctx_head_.net().param_hash();
  if (enc_) {
    const auto& encs = const_cast<EncoderMixture*>(enc_.get())->encoders();
    for (std::size_t j = 0; j < encs.size(); ++j)
      h["enc" + std::to_string(j)] = encs[j].param_hash();
    h["enc_gate"] = const_cast<EncoderMixture*>(enc_.get())->gate_net().param_hash();
    h["enc_ctx_head"] = enc_->head().net().param_hash();
  }
  return h;
}

// ------------------------------------------------------------------ factory

ContextProvider make_provider(const AgentConfig& acfg) {
  if (acfg.context_table)
    return ContextProvider::table(EmbeddingTable::load_csv(acfg.context_table_path));
  return ContextProvider::hashed(acfg.n, acfg.context_seed);
}

std::unique_ptr<Actor> make_actor(const AgentConfig& acfg, const SacConfig& scfg,
                                  const TaskSuite& suite, bool load_experts) {
  acfg.validate();
  switch (acfg.mode) {
    case Mode::kMtsacFlat:
    case Mode::kSingleTask:
      return std::make_unique<PlainActor>(suite.state_dim, suite.action_dim,
                                          acfg.actor_hidden, scfg, acfg.seed);
    case Mode::kLexpol:
    case Mode::kLexpolFrozen:
    case Mode::kLexpolCare: {
      auto actor = std::make_unique<CompositeActor>(
          acfg, scfg, suite.state_dim, suite.action_dim, suite.meta_variants,
          make_provider(acfg));
      if (acfg.mode == Mode::kLexpolFrozen && load_experts)
        actor->load_experts(acfg.expert_paths);
      return actor;
    }
  }
  throw ConfigError("unhandled mode");
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::string cur;
  for (char c : s + ",") {
    if (c == ',') {
      if (!cur.empty()) out.push_back(std::stoi(cur));
      cur.clear();
    } else if (!std::isspace(static_cast<unsigned char>(c))) {
      cur.push_back(c);
    }
  }
  return out;
}

std::string format_int_list(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s.push_back(',');
    s += std::to_string(v[i]);
  }
  return s;
}

void save_agent_hyper(const std::filesystem::path& file, const AgentConfig& acfg,
                      const SacConfig& scfg) {
  std::ofstream out(file);
  if (!out) throw IoError("cannot write " + file.string());
  out.precision(17);
  out << "mode=" << to_string(acfg.mode) << '\n'
      << "k=" << acfg.k << '\n'
      << "n=" << acfg.n << '\n'
      << "stopgrad_context=" << (acfg.stopgrad_context ? 1 : 0) << '\n'
      << "actor_hidden=" << format_int_list(acfg.actor_hidden) << '\n'
      << "critic_hidden=" << format_int_list(acfg.critic_hidden) << '\n'
      << "gate_hidden=" << format_int_list(acfg.gate_hidden) << '\n'
      << "seed=" << acfg.seed << '\n'
      << "context_seed=" << acfg.context_seed << '\n'
      << "context_table=" << (acfg.context_table ? 1 : 0) << '\n'
      << "context_table_path=" << acfg.context_table_path << '\n'
      << "care_k_enc=" << acfg.care_k_enc << '\n'
      << "care_repr_dim=" << acfg.care_repr_dim << '\n'
      << "care_enc_hidden=" << format_int_list(acfg.care_enc_hidden) << '\n'
      << "care_gate_hidden=" << format_int_list(acfg.care_gate_hidden) << '\n'
      << "gamma=" << scfg.gamma << '\n'
      << "tau=" << scfg.tau << '\n'
      << "lr=" << scfg.lr << '\n'
      << "batch_per_task=" << scfg.batch_per_task << '\n'
      << "replay_capacity=" << scfg.replay_capacity << '\n'
      << "warmup_steps=" << scfg.warmup_steps << '\n'
      << "reward_scale=" << scfg.reward_scale << '\n'
      << "auto_alpha=" << (scfg.auto_alpha ? 1 : 0) << '\n'
      << "fixed_alpha=" << scfg.fixed_alpha << '\n'
      << "target_entropy=" << scfg.target_entropy << '\n'
      << "logstd_min=" << scfg.logstd_min << '\n'
      << "logstd_max=" << scfg.logstd_max << '\n';
  std::size_t i = 0;
  for (const auto& p : acfg.expert_paths)
    out << "expert_path_" << i++ << "=" << p << '\n';
  if (!out) throw IoError("write failed on " + file.string());
}

std::pair<AgentConfig, SacConfig> load_agent_hyper(
    const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open " + file.string());
  AgentConfig a;
  SacConfig s;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw IoError(file.string() + ": malformed line: " + line);
    const std::string key = line.substr(0, eq);
    const std::string val = line.substr(eq + 1);
    if (key == "mode") a.mode = mode_from_string(val);
    else if (key == "k") a.k = std::stoi(val);
    else if (key == "n") a.n = std::stoi(val);
    else if (key == "stopgrad_context") a.stopgrad_context = std::stoi(val) != 0;
    else if (key == "actor_hidden") a.actor_hidden = parse_int_list(val);
    else if (key == "critic_hidden") a.critic_hidden = parse_int_list(val);
    else if (key == "gate_hidden") a.gate_hidden = parse_int_list(val);
    else if (key == "seed") a.seed = std::stoull(val);
    else if (key == "context_seed") a.context_seed = std::stoull(val);
    else if (key == "context_table") a.context_table = std::stoi(val) != 0;
    else if (key == "context_table_path") a.context_table_path = val;
    else if (key == "care_k_enc") a.care_k_enc = std::stoi(val);
    else if (key == "care_repr_dim") a.care_repr_dim = std::stoi(val);
    else if (key == "care_enc_hidden") a.care_enc_hidden = parse_int_list(val);
    else if (key == "care_gate_hidden") a.care_gate_hidden = parse_int_list(val);
    else if (key == "gamma") s.gamma = std::stod(val);
    else if (key == "tau") s.tau = std::stod(val);
    else if (key == "lr") s.lr = std::stod(val);
    else if (key == "batch_per_task") s.batch_per_task = std::stoi(val);
    else if (key == "replay_capacity") s.replay_capacity = std::stoll(val);
    else if (key == "warmup_steps") s.warmup_steps = std::stoll(val);
    else if (key == "reward_scale") s.reward_scale = std::stod(val);
    else if (key == "auto_alpha") s.auto_alpha = std::stoi(val) != 0;
    else if (key == "fixed_alpha") s.fixed_alpha = std::stod(val);
    else if (key == "target_entropy") s.target_entropy = std::stod(val);
    else if (key == "logstd_min") s.logstd_min = std::stod(val);
    else if (key == "logstd_max") s.logstd_max = std::stod(val);
    else if (key.rfind("expert_path_", 0) == 0) a.expert_paths.push_back(val);
    else throw IoError(file.string() + ": unknown key " + key);
  }
  return {a, s};
}

}  // namespace lexpol
