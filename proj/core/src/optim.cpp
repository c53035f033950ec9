#include "lexpol/optim.hpp"

#include <cmath>
#include <istream>
#include <ostream>

#include "lexpol/errors.hpp"

namespace lexpol {

namespace {

void write_block(std::ostream& os, const double* p, long n) {
  os.write(reinterpret_cast<const char*>(p), n * static_cast<long>(sizeof(double)));
}

void read_block(std::istream& is, double* p, long n) {
  is.read(reinterpret_cast<char*>(p), n * static_cast<long>(sizeof(double)));
  if (!is) throw IoError("truncated optimizer state");
}

}  // namespace

AdamState AdamState::for_net(const DenseNet& net) {
  AdamState st;
  st.mW_.resize(net.num_layers());
  st.vW_.resize(net.num_layers());
  st.mb_.resize(net.num_layers());
  st.vb_.resize(net.num_layers());
  for (std::size_t i = 0; i < net.num_layers(); ++i) {
    st.mW_[i] = MatrixXd::Zero(net.weight(i).rows(), net.weight(i).cols());
    st.vW_[i] = st.mW_[i];
    st.mb_[i] = VectorXd::Zero(net.bias(i).size());
    st.vb_[i] = st.mb_[i];
  }
  return st;
}

void AdamState::step(DenseNet& net, const AdamConfig& cfg) {
  if (mW_.size() != net.num_layers())
    throw StateError("AdamState does not match this net");
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t_));
  const GradTape& tape = net.grads();
  for (std::size_t i = 0; i < net.num_layers(); ++i) {
    auto update = [&](auto& param, auto& m, auto& v, const auto& g) {
      m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
      v.array() = cfg.beta2 * v.array() + (1.0 - cfg.beta2) * g.array().square();
      param.array() -=
          cfg.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg.eps);
    };
    update(net.weight(i), mW_[i], vW_[i], tape.dW[i]);
    update(net.bias(i), mb_[i], vb_[i], tape.db[i]);
  }
  net.zero_grads();
}

void AdamState::save(std::ostream& os) const {
  os.write(reinterpret_cast<const char*>(&t_), sizeof(t_));
  for (std::size_t i = 0; i < mW_.size(); ++i) {
    write_block(os, mW_[i].data(), mW_[i].size());
    write_block(os, vW_[i].data(), vW_[i].size());
    write_block(os, mb_[i].data(), mb_[i].size());
    write_block(os, vb_[i].data(), vb_[i].size());
  }
}

void AdamState::load(std::istream& is, const DenseNet& net) {
  *this = for_net(net);
  is.read(reinterpret_cast<char*>(&t_), sizeof(t_));
  if (!is) throw IoError("truncated optimizer state");
  for (std::size_t i = 0; i < mW_.size(); ++i) {
    read_block(is, mW_[i].data(), mW_[i].size());
    read_block(is, vW_[i].data(), vW_[i].size());
    read_block(is, mb_[i].data(), mb_[i].size());
    read_block(is, vb_[i].data(), vb_[i].size());
  }
}

void AdamScalar::step(double& param, double grad, const AdamConfig& cfg) {
  ++t_;
  m_ = cfg.beta1 * m_ + (1.0 - cfg.beta1) * grad;
  v_ = cfg.beta2 * v_ + (1.0 - cfg.beta2) * grad * grad;
  const double mhat = m_ / (1.0 - std::pow(cfg.beta1, static_cast<double>(t_)));
  const double vhat = v_ / (1.0 - std::pow(cfg.beta2, static_cast<double>(t_)));
  param -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
}

void AdamScalar::save(std::ostream& os) const {
  os.write(reinterpret_cast<const char*>(&m_), sizeof(m_));
  os.write(reinterpret_cast<const char*>(&v_), sizeof(v_));
  os.write(reinterpret_cast<const char*>(&t_), sizeof(t_));
}

void AdamScalar::load(std::istream& is) {
  is.read(reinterpret_cast<char*>(&m_), sizeof(m_));
  is.read(reinterpret_cast<char*>(&v_), sizeof(v_));
  is.read(reinterpret_cast<char*>(&t_), sizeof(t_));
  if (!is) throw IoError("truncated optimizer state");
}

}  // namespace lexpol
