#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "lexpol/checkpoint.hpp"
#include "lexpol/errors.hpp"
#include "lexpol/gradcheck.hpp"
#include "lexpol/net.hpp"
#include "lexpol/optim.hpp"

using namespace lexpol;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
  fs::path p = fs::temp_directory_path() / ("lexpol_test_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("identity-activation net with identity weights passes input through") {
  DenseNet net({2, 2}, {Activation::kIdentity});
  net.weight(0) = MatrixXd::Identity(2, 2);
  net.bias(0).setZero();
  VectorXd x(2);
  x << 1.0, 2.0;
  VectorXd y = net.forward_nograd(x);
  CHECK(y(0) == 1.0);
  CHECK(y(1) == 2.0);
}

TEST_CASE("relu clips a negative pre-activation to zero") {
  DenseNet net({2, 1}, {Activation::kRelu});
  net.weight(0) << 1.0, -1.0;
  net.bias(0) << 0.0;
  VectorXd x(2);
  x << 2.0, 3.0;  // pre-act = -1
  CHECK(net.forward_nograd(x)(0) == 0.0);
}

TEST_CASE("seeded two-layer forward matches a hand-rolled loop") {
  Rng rng = make_stream(42, "test-init");
  DenseNet net = DenseNet::make_mlp(3, {4}, 2, Activation::kRelu,
                                    Activation::kTanh);
  net.init_uniform_fanin(rng);
  MatrixXd x(3, 5);
  Rng data = make_stream(42, "test-data");
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    for (Eigen::Index i = 0; i < x.rows(); ++i) x(i, j) = normal01(data);

  MatrixXd got = net.forward_nograd(x);

  // Straight-line re-implementation with plain loops.
  for (int b = 0; b < 5; ++b) {
    double h[4];
    for (int i = 0; i < 4; ++i) {
      double acc = net.bias(0)(i);
      for (int j = 0; j < 3; ++j) acc += net.weight(0)(i, j) * x(j, b);
      h[i] = acc > 0.0 ? acc : 0.0;
    }
    for (int o = 0; o < 2; ++o) {
      double acc = net.bias(1)(o);
      for (int i = 0; i < 4; ++i) acc += net.weight(1)(o, i) * h[i];
      CHECK(got(o, b) == doctest::Approx(std::tanh(acc)).epsilon(1e-14));
    }
  }
}

TEST_CASE("constructor rejects non-chaining dims and bad activation count") {
  CHECK_THROWS_AS(DenseNet({3}, {}), ShapeError);
  CHECK_THROWS_AS(DenseNet({3, 4}, {Activation::kRelu, Activation::kRelu}),
                  ShapeError);
}

TEST_CASE("scalar chain rule on a 1x1 linear net") {
  DenseNet net({1, 1}, {Activation::kIdentity});
  net.weight(0) << 1.7;
  net.bias(0) << 0.0;
  MatrixXd x(1, 1);
  x << 2.0;
  net.forward(x);
  MatrixXd dx = net.backward(MatrixXd::Ones(1, 1));
  CHECK(net.grads().dW[0](0, 0) == 2.0);  // dL/dw = upstream * x
  CHECK(net.grads().db[0](0) == 1.0);
  CHECK(dx(0, 0) == 1.7);  // dL/dx = w
}

TEST_CASE("zero upstream gradient produces exactly zero everywhere") {
  Rng rng = make_stream(3, "test-init");
  DenseNet net = DenseNet::make_mlp(4, {6}, 3, Activation::kRelu);
  net.init_uniform_fanin(rng);
  MatrixXd x = MatrixXd::Random(4, 7);
  net.forward(x);
  MatrixXd dx = net.backward(MatrixXd::Zero(3, 7));
  CHECK(dx.isZero(0.0));
  for (const auto& g : net.grads().dW) CHECK(g.isZero(0.0));
  for (const auto& g : net.grads().db) CHECK(g.isZero(0.0));
}

TEST_CASE("tape shapes mirror parameter shapes and zero between steps") {
  Rng rng = make_stream(4, "test-init");
  DenseNet net = DenseNet::make_mlp(2, {3}, 1, Activation::kTanh);
  net.init_uniform_fanin(rng);
  MatrixXd x = MatrixXd::Random(2, 4);
  net.forward(x);
  net.backward(MatrixXd::Ones(1, 4));
  REQUIRE(net.grads().dW.size() == net.num_layers());
  for (std::size_t i = 0; i < net.num_layers(); ++i) {
    CHECK(net.grads().dW[i].rows() == net.weight(i).rows());
    CHECK(net.grads().dW[i].cols() == net.weight(i).cols());
    CHECK(net.grads().db[i].size() == net.bias(i).size());
  }
  AdamState opt = AdamState::for_net(net);
  opt.step(net, AdamConfig{});
  for (const auto& g : net.grads().dW) CHECK(g.isZero(0.0));
}

TEST_CASE("gradients match central finite differences on a seeded net") {
  Rng rng = make_stream(5, "test-init");
  DenseNet net = DenseNet::make_mlp(3, {5, 5}, 2, Activation::kRelu,
                                    Activation::kTanh);
  net.init_uniform_fanin(rng);
  Rng data = make_stream(5, "test-data");
  MatrixXd x(3, 4);
  for (Eigen::Index j = 0; j < 4; ++j)
    for (Eigen::Index i = 0; i < 3; ++i) x(i, j) = normal01(data);

  LossFn loss = [&](bool with_grad) {
    if (!with_grad) return 0.5 * net.forward_nograd(x).squaredNorm();
    net.zero_grads();
    const MatrixXd& y = net.forward(x);
    net.backward(y);
    return 0.5 * y.squaredNorm();
  };
  auto resample = [&]() {
    for (Eigen::Index j = 0; j < 4; ++j)
      for (Eigen::Index i = 0; i < 3; ++i) x(i, j) = normal01(data);
  };
  GradCheckReport rep = grad_check({&net}, loss, GradCheckOptions{}, resample);
  INFO(rep.worst);
  CHECK(rep.pass);
  CHECK(rep.max_rel_err <= 1e-4);
}

TEST_CASE("quadratic loss on a linear net checks below 1e-6") {
  Rng rng = make_stream(6, "test-init");
  DenseNet net({2, 2}, {Activation::kIdentity});
  net.init_uniform_fanin(rng);
  MatrixXd x = MatrixXd::Random(2, 3);
  LossFn loss = [&](bool with_grad) {
    if (!with_grad) return 0.5 * net.forward_nograd(x).squaredNorm();
    net.zero_grads();
    const MatrixXd& y = net.forward(x);
    net.backward(y);
    return 0.5 * y.squaredNorm();
  };
  GradCheckOptions opt;
  opt.tol = 1e-6;
  GradCheckReport rep = grad_check({&net}, loss, opt);
  CHECK(rep.pass);
  CHECK(rep.max_rel_err < 1e-6);
}

TEST_CASE("deliberately corrupted gradient fails the check") {
  Rng rng = make_stream(7, "test-init");
  DenseNet net = DenseNet::make_mlp(2, {4}, 1, Activation::kRelu);
  net.init_uniform_fanin(rng);
  MatrixXd x = MatrixXd::Random(2, 3);
  LossFn loss = [&](bool with_grad) {
    if (!with_grad) return net.forward_nograd(x).sum();
    net.zero_grads();
    const MatrixXd& y = net.forward(x);
    net.backward(MatrixXd::Ones(1, 3));
    net.grads().dW[0](0, 0) *= 2.0;  // injected fault
    return y.sum();
  };
  GradCheckReport rep = grad_check({&net}, loss);
  CHECK_FALSE(rep.pass);
}

TEST_CASE("adam leaves parameters alone on zero gradients but counts the step") {
  Rng rng = make_stream(8, "test-init");
  DenseNet net = DenseNet::make_mlp(2, {3}, 1, Activation::kRelu);
  net.init_uniform_fanin(rng);
  MatrixXd before = net.weight(0);
  net.forward(MatrixXd::Random(2, 2));
  net.backward(MatrixXd::Zero(1, 2));  // zero deposit
  AdamState opt = AdamState::for_net(net);
  opt.step(net, AdamConfig{});
  CHECK(opt.step_count() == 1);
  CHECK((net.weight(0).array() == before.array()).all());
}

TEST_CASE("first adam step on unit gradient moves by about lr") {
  double p = 1.0;
  AdamScalar opt;
  AdamConfig cfg;  // lr 3e-4
  opt.step(p, 1.0, cfg);
  // bias-corrected first step: lr * m_hat / (sqrt(v_hat) + eps) = lr/(1+eps)
  CHECK(p == doctest::Approx(1.0 - cfg.lr).epsilon(1e-6));
  CHECK(p < 1.0);
}

TEST_CASE("adam against a hand-iterated recurrence") {
  const double grads[5] = {1.0, -0.5, 0.25, 2.0, -1.0};
  double p = 0.3;
  AdamScalar opt;
  AdamConfig cfg;
  cfg.lr = 1e-2;
  for (double g : grads) opt.step(p, g, cfg);

  double ref = 0.3, m = 0.0, v = 0.0;
  for (int t = 1; t <= 5; ++t) {
    double g = grads[t - 1];
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    double mh = m / (1.0 - std::pow(0.9, t));
    double vh = v / (1.0 - std::pow(0.999, t));
    ref -= cfg.lr * mh / (std::sqrt(vh) + cfg.eps);
  }
  CHECK(p == doctest::Approx(ref).epsilon(1e-14));
}

TEST_CASE("identical nets with identical gradients update identically") {
  Rng rng1 = make_stream(9, "test-init");
  Rng rng2 = make_stream(9, "test-init");
  DenseNet a = DenseNet::make_mlp(3, {4}, 2, Activation::kTanh);
  DenseNet b = DenseNet::make_mlp(3, {4}, 2, Activation::kTanh);
  a.init_uniform_fanin(rng1);
  b.init_uniform_fanin(rng2);
  REQUIRE(a.param_hash() == b.param_hash());

  MatrixXd x = MatrixXd::Random(3, 5);
  MatrixXd g = MatrixXd::Random(2, 5);
  a.forward(x);
  a.backward(g);
  b.forward(x);
  b.backward(g);
  AdamState oa = AdamState::for_net(a);
  AdamState ob = AdamState::for_net(b);
  oa.step(a, AdamConfig{});
  ob.step(b, AdamConfig{});
  CHECK(a.param_hash() == b.param_hash());
}

TEST_CASE("parameters stay finite after updates and check_finite catches NaN") {
  Rng rng = make_stream(10, "test-init");
  DenseNet net = DenseNet::make_mlp(2, {4}, 2, Activation::kRelu);
  net.init_uniform_fanin(rng);
  AdamState opt = AdamState::for_net(net);
  for (int it = 0; it < 20; ++it) {
    net.forward(MatrixXd::Random(2, 6));
    net.backward(MatrixXd::Random(2, 6));
    opt.step(net, AdamConfig{});
  }
  CHECK_NOTHROW(net.check_finite("net"));
  net.weight(0)(0, 0) = std::nan("");
  CHECK_THROWS_AS(net.check_finite("net"), NumericError);
}

TEST_CASE("softmax of zeros is uniform") {
  VectorXd v = VectorXd::Zero(3);
  VectorXd s = softmax(v);
  for (int i = 0; i < 3; ++i) CHECK(s(i) == doctest::Approx(1.0 / 3).epsilon(1e-15));
}

TEST_CASE("softmax survives huge logits without overflow") {
  VectorXd v(2);
  v << 1000.0, 0.0;
  VectorXd s = softmax(v);
  CHECK(s(0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(s(1) >= 0.0);
  CHECK(std::isfinite(s(0)));
  CHECK(std::isfinite(s(1)));
}

TEST_CASE("softmax matches extended-precision exp-normalize") {
  VectorXd v(3);
  v << 1.0, 2.0, 3.0;
  VectorXd s = softmax(v);
  long double e1 = expl(1.0L), e2 = expl(2.0L), e3 = expl(3.0L);
  long double z = e1 + e2 + e3;
  CHECK(s(0) == doctest::Approx(static_cast<double>(e1 / z)).epsilon(1e-14));
  CHECK(s(1) == doctest::Approx(static_cast<double>(e2 / z)).epsilon(1e-14));
  CHECK(s(2) == doctest::Approx(static_cast<double>(e3 / z)).epsilon(1e-14));
  CHECK_THROWS_AS(softmax(VectorXd()), ShapeError);
}

TEST_CASE("softmax backward matches finite differences") {
  Rng rng = make_stream(11, "test-data");
  VectorXd z(4), g(4);
  for (int i = 0; i < 4; ++i) {
    z(i) = normal01(rng);
    g(i) = normal01(rng);
  }
  VectorXd alpha = softmax(z);
  VectorXd dz = softmax_backward(alpha, g);
  const double h = 1e-6;
  for (int i = 0; i < 4; ++i) {
    VectorXd zp = z, zm = z;
    zp(i) += h;
    zm(i) -= h;
    double fp = softmax(zp).dot(g);
    double fm = softmax(zm).dot(g);
    CHECK(dz(i) == doctest::Approx((fp - fm) / (2 * h)).epsilon(1e-5));
  }
}

TEST_CASE("init streams are reproducible and tag-sensitive") {
  Rng a = make_stream(21, "actor-init", 0);
  Rng b = make_stream(21, "actor-init", 0);
  Rng c = make_stream(21, "actor-init", 1);
  DenseNet n1 = DenseNet::make_mlp(3, {4}, 2, Activation::kRelu);
  DenseNet n2 = DenseNet::make_mlp(3, {4}, 2, Activation::kRelu);
  DenseNet n3 = DenseNet::make_mlp(3, {4}, 2, Activation::kRelu);
  n1.init_uniform_fanin(a);
  n2.init_uniform_fanin(b);
  n3.init_uniform_fanin(c);
  CHECK(n1.param_hash() == n2.param_hash());
  CHECK(n1.param_hash() != n3.param_hash());
}

TEST_CASE("float64 parameter dump round-trips bit-exactly") {
  Rng rng = make_stream(12, "test-init");
  DenseNet a = DenseNet::make_mlp(3, {5}, 2, Activation::kTanh);
  a.init_uniform_fanin(rng);
  std::stringstream buf;
  save_params64(buf, a);

  DenseNet b = DenseNet::make_mlp(3, {5}, 2, Activation::kTanh);
  load_params64(buf, b);
  CHECK(a.param_hash() == b.param_hash());

  DenseNet wrong = DenseNet::make_mlp(3, {6}, 2, Activation::kTanh);
  std::stringstream buf2;
  save_params64(buf2, a);
  CHECK_THROWS_AS(load_params64(buf2, wrong), IoError);
}

TEST_CASE("checkpoint fragments round-trip through the float32 blob") {
  fs::path dir = temp_dir("ckpt_roundtrip");
  Rng rng = make_stream(13, "test-init");
  DenseNet net = DenseNet::make_mlp(3, {4}, 2, Activation::kRelu,
                                    Activation::kTanh);
  net.init_uniform_fanin(rng);

  CheckpointWriter w;
  w.add_net("actor0_trunk", net);
  w.add_scalar("log_alpha", -0.73);
  w.write(dir);

  Checkpoint ck = Checkpoint::load(dir);
  REQUIRE(ck.has("actor0_trunk"));
  CHECK(ck.read_scalar("log_alpha") ==
        static_cast<double>(static_cast<float>(-0.73)));

  DenseNet back = ck.read_net("actor0_trunk");
  REQUIRE(back.num_layers() == net.num_layers());
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    CHECK(back.activation(l) == net.activation(l));
    for (Eigen::Index i = 0; i < net.weight(l).size(); ++i)
      CHECK(back.weight(l).data()[i] ==
            static_cast<double>(static_cast<float>(net.weight(l).data()[i])));
  }

  // load then immediately save again: byte-identical blob and manifest
  fs::path dir2 = temp_dir("ckpt_roundtrip2");
  CheckpointWriter w2;
  w2.add_net("actor0_trunk", back);
  w2.add_scalar("log_alpha", ck.read_scalar("log_alpha"));
  w2.write(dir2);
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  CHECK(slurp(dir / "params.blob") == slurp(dir2 / "params.blob"));
  CHECK(slurp(dir / "manifest.txt") == slurp(dir2 / "manifest.txt"));
}

TEST_CASE("checkpoint read errors are typed") {
  fs::path dir = temp_dir("ckpt_errors");
  Rng rng = make_stream(14, "test-init");
  DenseNet net = DenseNet::make_mlp(2, {3}, 1, Activation::kRelu);
  net.init_uniform_fanin(rng);
  CheckpointWriter w;
  w.add_net("gate", net);
  w.write(dir);

  Checkpoint ck = Checkpoint::load(dir);
  CHECK_THROWS_AS(ck.read_net("missing"), ConfigError);
  DenseNet mismatched = DenseNet::make_mlp(2, {4}, 1, Activation::kRelu);
  CHECK_THROWS_AS(ck.read_net_into("gate", mismatched), ConfigError);
  CHECK_THROWS_AS(Checkpoint::load(dir / "nowhere"), IoError);
}
