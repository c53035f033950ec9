#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <sstream>

#include "doctest.h"
#include "lexpol/errors.hpp"
#include "lexpol/sac.hpp"

using namespace lexpol;

namespace {

GaussianPolicyHead seeded_head(std::uint64_t seed, int ds = 3, int m = 2) {
  GaussianPolicyHead head(ds, {8, 8}, m);
  Rng rng = make_stream(seed, "head-init");
  head.init(rng);
  return head;
}

MatrixXd randn_mat(int r, int c, Rng& g) {
  MatrixXd m(r, c);
  for (int j = 0; j < c; ++j)
    for (int i = 0; i < r; ++i) m(i, j) = normal01(g);
  return m;
}

}  // namespace

TEST_CASE("mean actions are deterministic and repeatable") {
  GaussianPolicyHead head = seeded_head(1);
  Rng data = make_stream(1, "test-data");
  MatrixXd s = randn_mat(3, 4, data);
  MatrixXd a1 = head.mean_actions(s);
  MatrixXd a2 = head.mean_actions(s);
  CHECK((a1.array() == a2.array()).all());
  CHECK((a1.array().abs() <= 1.0).all());
}

TEST_CASE("sampled actions stay inside the squash box over many draws") {
  GaussianPolicyHead head = seeded_head(2);
  Rng noise = make_stream(2, "test-noise");
  Rng data = make_stream(2, "test-data");
  for (int rep = 0; rep < 100; ++rep) {
    MatrixXd s = randn_mat(3, 100, data);
    MatrixXd eps = draw_eps(2, 100, noise);
    PolicySample p = head.sample_with_eps_nograd(s, eps);
    CHECK((p.a.array().abs() <= 1.0).all());
    CHECK(p.a.allFinite());
    CHECK(p.log_prob.allFinite());
  }
}

TEST_CASE("log-prob matches a direct density computation") {
  GaussianPolicyHead head = seeded_head(3);
  Rng noise = make_stream(3, "test-noise");
  Rng data = make_stream(3, "test-data");
  MatrixXd s = randn_mat(3, 6, data);
  MatrixXd eps = draw_eps(2, 6, noise);
  PolicySample p = head.sample_with_eps_nograd(s, eps);

  // Independent oracle: run the trunk by hand, then Gaussian log-density of
  // the pre-squash draw minus the tanh volume correction.
  MatrixXd h = head.trunk().forward_nograd(s);
  MatrixXd mu = head.mean_layer().forward_nograd(h);
  MatrixXd ls = head.logstd_layer().forward_nograd(h);
  for (int b = 0; b < 6; ++b) {
    long double lp = 0.0L;
    for (int i = 0; i < 2; ++i) {
      long double lsv = std::clamp<long double>(ls(i, b), -20.0L, 2.0L);
      long double sigma = expl(lsv);
      long double u = static_cast<long double>(mu(i, b)) + sigma * eps(i, b);
      long double z = (u - mu(i, b)) / sigma;
      lp += -0.5L * z * z - lsv - 0.5L * logl(2.0L * 3.14159265358979323846L);
      long double t = tanhl(u);
      lp -= log1pl(-t * t);
      CHECK(p.a(i, b) == doctest::Approx(static_cast<double>(tanhl(u)))
                             .epsilon(1e-12));
    }
    CHECK(p.log_prob(b) ==
          doctest::Approx(static_cast<double>(lp)).epsilon(1e-8));
  }
}

TEST_CASE("log-std honors the clamp bounds under extreme inputs") {
  GaussianPolicyHead head(2, {4}, 1, -3.0, -1.0);
  Rng rng = make_stream(4, "head-init");
  head.init(rng);
  // Blow up the logstd output layer so the raw value exceeds both bounds.
  head.logstd_layer().weight(0).setConstant(50.0);
  head.logstd_layer().bias(0).setConstant(100.0);
  Rng noise = make_stream(4, "test-noise");
  MatrixXd s(2, 2);
  s << 1.0, -1.0, 0.5, -0.5;
  MatrixXd eps = draw_eps(1, 2, noise);
  PolicySample p = head.sample_with_eps_nograd(s, eps);
  // sigma <= exp(-1): |u - mu| <= |eps| * exp(-1)
  MatrixXd h = head.trunk().forward_nograd(s);
  MatrixXd mu = head.mean_layer().forward_nograd(h);
  for (int b = 0; b < 2; ++b) {
    double u = std::atanh(std::clamp(p.a(0, b), -0.999999999999, 0.999999999999));
    CHECK(std::abs(u - mu(0, b)) <=
          std::abs(eps(0, b)) * std::exp(-1.0) + 1e-9);
  }
}

TEST_CASE("draw_eps fills column-major and is stream-stable") {
  Rng a = make_stream(5, "noise");
  Rng b = make_stream(5, "noise");
  MatrixXd m = draw_eps(2, 3, a);
  CHECK(m(0, 0) == normal01(b));
  CHECK(m(1, 0) == normal01(b));
  CHECK(m(0, 1) == normal01(b));
}

TEST_CASE("terminal transitions regress to the bare reward") {
  Rng r1 = make_stream(6, "q1");
  Rng r2 = make_stream(6, "q2");
  TwinCritics critics(3, 2, {8}, 0.005, r1, r2);
  Rng data = make_stream(6, "test-data");
  MatrixXd s_next = randn_mat(3, 4, data);
  GaussianPolicyHead head = seeded_head(6);
  Rng noise = make_stream(6, "test-noise");
  PolicySample next = head.sample_with_eps_nograd(s_next, draw_eps(2, 4, noise));
  RowVectorXd r(4);
  r << 1.0, -2.0, 0.5, 3.0;

  RowVectorXd done_y = critic_target(critics, s_next, next,
                                     r, RowVectorXd::Zero(4), 0.3, 0.99, 1.0);
  CHECK((done_y.array() == r.array()).all());

  RowVectorXd myopic_y = critic_target(critics, s_next, next,
                                       r, RowVectorXd::Ones(4), 0.3, 0.0, 1.0);
  CHECK((myopic_y.array() == r.array()).all());
}

TEST_CASE("critic target matches hand arithmetic on one transition") {
  Rng r1 = make_stream(7, "q1");
  Rng r2 = make_stream(7, "q2");
  TwinCritics critics(2, 1, {4}, 0.005, r1, r2);
  Rng data = make_stream(7, "test-data");
  MatrixXd s_next = randn_mat(2, 1, data);
  GaussianPolicyHead head = seeded_head(7, 2, 1);
  Rng noise = make_stream(7, "test-noise");
  PolicySample next = head.sample_with_eps_nograd(s_next, draw_eps(1, 1, noise));

  MatrixXd sa(3, 1);
  sa << s_next, next.a;
  double t1 = critics.target1().forward_nograd(sa)(0, 0);
  double t2 = critics.target2().forward_nograd(sa)(0, 0);
  const double alpha = 0.17, gamma = 0.99, scale = 2.0, rew = -1.3;
  double want = scale * rew + gamma * (std::min(t1, t2) - alpha * next.log_prob(0));

  RowVectorXd rv(1);
  rv << rew;
  RowVectorXd y = critic_target(critics, s_next, next, rv, RowVectorXd::Ones(1),
                                alpha, gamma, scale);
  CHECK(y(0) == doctest::Approx(want).epsilon(1e-14));
}

TEST_CASE("zero temperature and constant critics give the actor zero gradient") {
  GaussianPolicyHead head = seeded_head(8);
  Rng r1 = make_stream(8, "q1");
  Rng r2 = make_stream(8, "q2");
  TwinCritics critics(3, 2, {6}, 0.005, r1, r2);
  // Constant Q: zero every weight, bias fixes the output.
  for (std::size_t l = 0; l < critics.q1().num_layers(); ++l) {
    critics.q1().weight(l).setZero();
    critics.q2().weight(l).setZero();
  }
  critics.q1().bias(critics.q1().num_layers() - 1).setConstant(3.7);
  critics.q2().bias(critics.q2().num_layers() - 1).setConstant(3.7);

  Rng data = make_stream(8, "test-data");
  Rng noise = make_stream(8, "test-noise");
  MatrixXd s = randn_mat(3, 5, data);
  PolicySample cur = head.sample_with_eps(s, draw_eps(2, 5, noise));
  MatrixXd sa(5, 5);
  sa << s, cur.a;
  critics.online_min(sa);
  MatrixXd g_sa = critics.online_min_backward(
      RowVectorXd::Constant(5, -1.0 / 5), false);
  head.zero_grads();
  head.backward(g_sa.bottomRows(2), RowVectorXd::Zero(5));
  double total = 0.0;
  head.for_each_net([&](const std::string&, DenseNet& net) {
    for (const auto& g : net.grads().dW) total += g.cwiseAbs().sum();
    for (const auto& g : net.grads().db) total += g.cwiseAbs().sum();
  });
  CHECK(total == 0.0);
}

TEST_CASE("entropy-only objective raises the log-std between updates") {
  GaussianPolicyHead head = seeded_head(9);
  // Start clearly over-deterministic. The entropy of a tanh-squashed
  // Gaussian peaks near sigma ~ 0.87 (wider policies saturate at the box
  // walls), so the "entropy bonus widens the policy" sign only holds below
  // that peak; sigma ~ exp(-2) is safely inside the monotone regime.
  head.logstd_layer().bias(0).setConstant(-2.0);
  Rng data = make_stream(9, "test-data");
  MatrixXd s = randn_mat(3, 16, data);
  auto mean_logstd = [&]() {
    MatrixXd h = head.trunk().forward_nograd(s);
    return head.logstd_layer().forward_nograd(h).mean();
  };
  double before = mean_logstd();
  REQUIRE(before < -1.0);

  AdamState ot = AdamState::for_net(head.trunk());
  AdamState om = AdamState::for_net(head.mean_layer());
  AdamState ol = AdamState::for_net(head.logstd_layer());
  AdamConfig cfg;
  cfg.lr = 1e-2;
  Rng noise = make_stream(9, "test-noise");
  for (int it = 0; it < 2; ++it) {
    head.zero_grads();
    head.sample_with_eps(s, draw_eps(2, 16, noise));
    // zeroed critics contribute nothing through the action, so the loss
    // reduces to alpha * mean(logp); minimizing pushes entropy up
    head.backward(MatrixXd::Zero(2, 16), RowVectorXd::Constant(16, 0.2 / 16));
    ot.step(head.trunk(), cfg);
    om.step(head.mean_layer(), cfg);
    ol.step(head.logstd_layer(), cfg);
  }
  CHECK(mean_logstd() > before);
}

TEST_CASE("temperature sits still at the target and moves with entropy error") {
  AdamConfig cfg;
  cfg.lr = 1e-2;

  EntropyTemp at_target(-2.0, true, 0.7);
  at_target.update(RowVectorXd::Constant(4, 2.0), cfg);  // entropy == target
  CHECK(at_target.alpha() == doctest::Approx(0.7).epsilon(1e-12));

  // entropy below target (policy too deterministic) -> more entropy bonus
  EntropyTemp low(-2.0, true, 0.7);
  low.update(RowVectorXd::Constant(4, 5.0), cfg);
  CHECK(low.alpha() > 0.7);

  // entropy above target -> cool down
  EntropyTemp high(-2.0, true, 0.7);
  high.update(RowVectorXd::Constant(4, -9.0), cfg);
  CHECK(high.alpha() < 0.7);

  EntropyTemp fixed(-2.0, false, 0.4);
  double la_before = fixed.log_alpha();
  double loss = fixed.update(RowVectorXd::Constant(4, 5.0), cfg);
  CHECK(fixed.log_alpha() == la_before);
  CHECK(fixed.alpha() == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(std::isfinite(loss));
}

TEST_CASE("polyak with tau=1 copies and online stays untouched") {
  Rng r1 = make_stream(10, "q1");
  Rng r2 = make_stream(10, "q2");
  TwinCritics critics(2, 1, {4}, 1.0, r1, r2);
  critics.q1().weight(0)(0, 0) += 0.5;  // make online differ from target
  std::uint64_t online_before = critics.param_hash();
  critics.polyak();
  CHECK(critics.param_hash() == online_before);
  CHECK(critics.target_hash() == online_before);
}

TEST_CASE("two polyak steps match the closed-form blend") {
  Rng r1 = make_stream(11, "q1");
  Rng r2 = make_stream(11, "q2");
  TwinCritics critics(2, 1, {3}, 0.005, r1, r2);
  double w0 = critics.q1().weight(0)(0, 0);
  double t0 = critics.target1().weight(0)(0, 0);
  CHECK(w0 == t0);  // targets start as copies
  critics.q1().weight(0)(0, 0) = w0 + 1.0;
  critics.polyak();
  critics.polyak();
  // t <- (1-tau)^2 t0 + (1-(1-tau)^2) w
  double want = std::pow(0.995, 2) * t0 + (1.0 - std::pow(0.995, 2)) * (w0 + 1.0);
  CHECK(critics.target1().weight(0)(0, 0) ==
        doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("replay keeps per-task rings and samples evenly") {
  ReplayBuffer buf(8, 2);  // tiny capacity split across two tasks
  Rng noise = make_stream(12, "replay");
  for (int i = 0; i < 20; ++i) {
    Transition t;
    t.task = i % 2;
    t.meta = t.task;
    t.meta_next = t.task;
    t.s = VectorXd::Constant(2, i);
    t.a = VectorXd::Constant(1, 0.1);
    t.s_next = VectorXd::Constant(2, i + 1);
    t.r = i;
    t.done = false;
    buf.push(t);
  }
  CHECK(buf.size() <= 8);
  CHECK(buf.task_size(0) == 4);
  CHECK(buf.task_size(1) == 4);

  Batch b = buf.sample(3, noise);
  CHECK(b.size() == 6);
  int per_task[2] = {0, 0};
  for (int t : b.task) ++per_task[t];
  CHECK(per_task[0] == 3);
  CHECK(per_task[1] == 3);
  // eviction kept only the newest entries per task
  for (Eigen::Index c = 0; c < b.size(); ++c) CHECK(b.s(0, c) >= 12.0);
}

TEST_CASE("replay sampling is a pure function of the rng state") {
  ReplayBuffer buf(100, 1);
  for (int i = 0; i < 50; ++i) {
    Transition t;
    t.s = VectorXd::Constant(1, i);
    t.a = VectorXd::Constant(1, 0.0);
    t.s_next = VectorXd::Constant(1, i);
    t.r = i;
    buf.push(t);
  }
  Rng a = make_stream(13, "replay");
  Rng b = make_stream(13, "replay");
  Batch ba = buf.sample(5, a);
  Batch bb = buf.sample(5, b);
  CHECK((ba.s.array() == bb.s.array()).all());
  CHECK((ba.r.array() == bb.r.array()).all());
}

TEST_CASE("replay round-trips through its stream format") {
  ReplayBuffer buf(16, 2);
  for (int i = 0; i < 10; ++i) {
    Transition t;
    t.task = i % 2;
    t.meta = i % 3;
    t.meta_next = (i + 1) % 3;
    t.s = VectorXd::Constant(3, 0.5 * i);
    t.a = VectorXd::Constant(2, -0.25 * i);
    t.s_next = VectorXd::Constant(3, 0.5 * i + 0.1);
    t.r = 1.5 * i;
    t.done = (i % 4 == 0);
    buf.push(t);
  }
  std::stringstream ss;
  buf.save(ss);
  ReplayBuffer back;
  back.load(ss);
  REQUIRE(back.size() == buf.size());
  REQUIRE(back.num_tasks() == 2);
  Rng ra = make_stream(14, "replay");
  Rng rb = make_stream(14, "replay");
  Batch ba = buf.sample(4, ra);
  Batch bb = back.sample(4, rb);
  CHECK((ba.s.array() == bb.s.array()).all());
  CHECK((ba.a.array() == bb.a.array()).all());
  CHECK((ba.not_done.array() == bb.not_done.array()).all());
  CHECK(ba.meta == bb.meta);
}

TEST_CASE("replay skips empty tasks and rejects a fully empty buffer") {
  ReplayBuffer buf(8, 2);
  Rng rng = make_stream(15, "replay");
  CHECK_THROWS_AS(buf.sample(2, rng), StateError);

  Transition t;
  t.task = 0;
  t.s = VectorXd::Zero(1);
  t.a = VectorXd::Zero(1);
  t.s_next = VectorXd::Zero(1);
  buf.push(t);
  Batch b = buf.sample(3, rng);  // task 1 has no data yet
  CHECK(b.size() == 3);
  for (int task : b.task) CHECK(task == 0);
}

TEST_CASE("learner updates move critics, actor and temperature together") {
  const int ds = 3, m = 2, T = 2;
  SacConfig cfg;
  cfg.batch_per_task = 8;
  SacLearner learner(ds, m, {8, 8}, cfg, 21);

  ReplayBuffer buf(1000, T);
  Rng env_rng = make_stream(21, "fill");
  for (int i = 0; i < 200; ++i) {
    Transition t;
    t.task = i % T;
    t.meta = t.task;
    t.meta_next = t.task;
    t.s = VectorXd::NullaryExpr(ds, [&](Eigen::Index) { return normal01(env_rng); });
    t.a = VectorXd::NullaryExpr(m, [&](Eigen::Index) { return uniform_range(env_rng, -1, 1); });
    t.s_next = t.s + 0.1 * VectorXd::Ones(ds);
    t.r = uniform_range(env_rng, -1, 1);
    t.done = (i % 17 == 0);
    buf.push(t);
  }

  // Minimal actor on top of one head, enough to drive the learner.
  GaussianPolicyHead head = seeded_head(21, ds, m);
  struct OneHead : ActorModel {
    GaussianPolicyHead* h;
    AdamState ot, om, ol;
    explicit OneHead(GaussianPolicyHead* hh) : h(hh) {
      ot = AdamState::for_net(h->trunk());
      om = AdamState::for_net(h->mean_layer());
      ol = AdamState::for_net(h->logstd_layer());
    }
    int state_dim() const override { return h->state_dim(); }
    int action_dim() const override { return h->action_dim(); }
    PolicySample sample(const MatrixXd& s, const std::vector<int>&, Rng& n) override {
      return h->sample_with_eps(s, draw_eps(h->action_dim(), static_cast<int>(s.cols()), n));
    }
    PolicySample sample_nograd(const MatrixXd& s, const std::vector<int>&,
                               Rng& n) const override {
      return h->sample_with_eps_nograd(
          s, draw_eps(h->action_dim(), static_cast<int>(s.cols()), n));
    }
    MatrixXd mean_actions(const MatrixXd& s, const std::vector<int>&) const override {
      return h->mean_actions(s);
    }
    void backward(const MatrixXd& ga, const RowVectorXd& gl) override {
      h->backward(ga, gl);
    }
    void zero_grads() override { h->zero_grads(); }
    void optimizer_step(const AdamConfig& c) override {
      ot.step(h->trunk(), c);
      om.step(h->mean_layer(), c);
      ol.step(h->logstd_layer(), c);
    }
  } actor(&head);

  std::uint64_t critic_hash_0 = learner.critics().param_hash();
  std::uint64_t target_hash_0 = learner.critics().target_hash();
  std::uint64_t actor_hash_0 = head.param_hash();
  double alpha_0 = learner.temp().alpha();

  Rng sample_rng = make_stream(21, "replay");
  Rng noise = make_stream(21, "noise");
  SacLosses losses{};
  for (int it = 0; it < 5; ++it)
    losses = learner.update(actor, buf.sample(cfg.batch_per_task, sample_rng), noise);

  CHECK(learner.critics().param_hash() != critic_hash_0);
  CHECK(learner.critics().target_hash() != target_hash_0);
  CHECK(head.param_hash() != actor_hash_0);
  CHECK(learner.temp().alpha() != alpha_0);
  CHECK(std::isfinite(losses.critic));
  CHECK(std::isfinite(losses.actor));
  CHECK(losses.alpha > 0.0);
  CHECK(losses.mean_logp < 0.0);
}

TEST_CASE("learner checkpoint fragments and optimizer state round-trip") {
  SacConfig cfg;
  SacLearner a(2, 1, {4}, cfg, 30);
  std::stringstream opt_state, params;
  a.save_opt_state(opt_state);
  a.save_params64(params);

  SacLearner b(2, 1, {4}, cfg, 31);
  CHECK(b.critics().param_hash() != a.critics().param_hash());
  b.load_opt_state(opt_state);
  b.load_params64(params);
  CHECK(b.critics().param_hash() == a.critics().param_hash());
  CHECK(b.critics().target_hash() == a.critics().target_hash());
}
