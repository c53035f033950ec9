#include <benchmark/benchmark.h>

#include "lexpol/agent.hpp"
#include "lexpol/envs.hpp"
#include "lexpol/net.hpp"
#include "lexpol/sac.hpp"

using namespace lexpol;

namespace {

void BM_NetForward(benchmark::State& state) {
  const int B = static_cast<int>(state.range(0));
  Rng rng = make_stream(7, "bench-init");
  DenseNet net = DenseNet::make_mlp(39, {400, 400, 400}, 1, Activation::kRelu,
                                    Activation::kIdentity);
  net.init_uniform_fanin(rng);
  Rng data = make_stream(7, "bench-data");
  MatrixXd x(39, B);
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    for (Eigen::Index i = 0; i < x.rows(); ++i) x(i, j) = normal01(data);
  for (auto _ : state) {
    benchmark::DoNotOptimize(net.forward_nograd(x));
  }
  state.SetItemsProcessed(state.iterations() * B);
}
BENCHMARK(BM_NetForward)->Arg(1)->Arg(128)->Arg(512);

void BM_NetForwardBackward(benchmark::State& state) {
  const int B = static_cast<int>(state.range(0));
  Rng rng = make_stream(7, "bench-init");
  DenseNet net = DenseNet::make_mlp(39, {400, 400, 400}, 1, Activation::kRelu,
                                    Activation::kIdentity);
  net.init_uniform_fanin(rng);
  Rng data = make_stream(7, "bench-data");
  MatrixXd x(39, B);
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    for (Eigen::Index i = 0; i < x.rows(); ++i) x(i, j) = normal01(data);
  MatrixXd g = MatrixXd::Ones(1, B);
  for (auto _ : state) {
    net.forward(x);
    benchmark::DoNotOptimize(net.backward(g));
    net.zero_grads();
  }
  state.SetItemsProcessed(state.iterations() * B);
}
BENCHMARK(BM_NetForwardBackward)->Arg(128);

std::unique_ptr<Actor> bench_actor(const TaskSuite& suite) {
  AgentConfig a;
  a.mode = Mode::kLexpol;
  a.k = 4;
  a.n = 50;
  a.actor_hidden = {64, 64};
  a.critic_hidden = {64, 64};
  a.seed = 11;
  SacConfig sc;
  return make_actor(a, sc, suite);
}

void BM_CompositeAct(benchmark::State& state) {
  TaskSuite suite = make_suite("tmaze_composite");
  auto actor = bench_actor(suite);
  Rng noise = make_stream(11, "bench-noise");
  VectorXd s = VectorXd::Zero(suite.state_dim);
  for (auto _ : state) {
    benchmark::DoNotOptimize(actor->act(s, 0, noise));
  }
}
BENCHMARK(BM_CompositeAct);

void BM_EnvStep(benchmark::State& state) {
  TaskSuite suite = make_suite("tmaze_composite");
  auto env = suite.make_env(0);
  Rng rng = make_stream(3, "bench-env");
  env->reset(rng);
  VectorXd a(2);
  a << 0.3, -0.2;
  for (auto _ : state) {
    StepResult r = env->step(a);
    benchmark::DoNotOptimize(r.reward);
    if (r.episode_over) env->reset(rng);
  }
}
BENCHMARK(BM_EnvStep);

void BM_ReplaySample(benchmark::State& state) {
  const int T = 4, ds = 4, m = 2;
  ReplayBuffer buf(100000, T);
  Rng rng = make_stream(5, "bench-replay");
  for (int i = 0; i < 20000; ++i) {
    Transition tr;
    tr.task = i % T;
    tr.meta = tr.task;
    tr.meta_next = tr.task;
    tr.s = VectorXd::Zero(ds);
    tr.a = VectorXd::Zero(m);
    tr.s_next = VectorXd::Zero(ds);
    tr.r = 0.1;
    tr.done = false;
    buf.push(tr);
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(buf.sample(128, rng));
  }
}
BENCHMARK(BM_ReplaySample);

void BM_SoftmaxCols(benchmark::State& state) {
  Rng data = make_stream(9, "bench-data");
  MatrixXd z(8, 512);
  for (Eigen::Index j = 0; j < z.cols(); ++j)
    for (Eigen::Index i = 0; i < z.rows(); ++i) z(i, j) = normal01(data);
  for (auto _ : state) {
    benchmark::DoNotOptimize(softmax_cols(z));
  }
}
BENCHMARK(BM_SoftmaxCols);

}  // namespace

BENCHMARK_MAIN();
