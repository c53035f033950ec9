#include "lexpol/net.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <istream>
#include <limits>
#include <ostream>

#include "lexpol/errors.hpp"

namespace lexpol {

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::kRelu;
  if (s == "tanh") return Activation::kTanh;
  if (s == "identity") return Activation::kIdentity;
  throw ConfigError("unknown activation: " + s);
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::kRelu: return "relu";
    case Activation::kTanh: return "tanh";
    case Activation::kIdentity: return "identity";
  }
  return "identity";
}

void GradTape::zero() {
  for (auto& g : dW) g.setZero();
  for (auto& g : db) g.setZero();
}

bool GradTape::shapes_match(const std::vector<MatrixXd>& W,
                            const std::vector<VectorXd>& b) const {
  if (dW.size() != W.size() || db.size() != b.size()) return false;
  for (std::size_t i = 0; i < W.size(); ++i) {
    if (dW[i].rows() != W[i].rows() || dW[i].cols() != W[i].cols()) return false;
    if (db[i].size() != b[i].size()) return false;
  }
  return true;
}

DenseNet::DenseNet(const std::vector<int>& dims, const std::vector<Activation>& acts) {
  if (dims.size() < 2) throw ShapeError("DenseNet needs at least one layer");
  if (acts.size() != dims.size() - 1)
    throw ShapeError("DenseNet: activation count must equal layer count");
  for (int d : dims)
    if (d < 1) throw ShapeError("DenseNet: nonpositive layer dim");
  layers_.resize(dims.size() - 1);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    layers_[i].W = MatrixXd::Zero(dims[i + 1], dims[i]);
    layers_[i].b = VectorXd::Zero(dims[i + 1]);
    layers_[i].act = acts[i];
  }
  ensure_tape();
}

DenseNet DenseNet::make_mlp(int in, const std::vector<int>& hidden, int out,
                            Activation hidden_act, Activation out_act) {
  std::vector<int> dims;
  dims.push_back(in);
  for (int h : hidden) dims.push_back(h);
  dims.push_back(out);
  std::vector<Activation> acts(hidden.size(), hidden_act);
  acts.push_back(out_act);
  return DenseNet(dims, acts);
}

void DenseNet::init_uniform_fanin(Rng& rng, double final_scale) {
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    auto& W = layers_[l].W;
    const double bound = 1.0 / std::sqrt(static_cast<double>(W.cols()));
    for (Eigen::Index j = 0; j < W.cols(); ++j)
      for (Eigen::Index i = 0; i < W.rows(); ++i)
        W(i, j) = uniform_range(rng, -bound, bound);
    layers_[l].b.setZero();
    if (l + 1 == layers_.size() && final_scale != 1.0) W *= final_scale;
  }
}

DenseNet DenseNet::identity(int dim) {
  DenseNet net({dim, dim}, {Activation::kIdentity});
  net.layers_[0].W = MatrixXd::Identity(dim, dim);
  return net;
}

void DenseNet::ensure_tape() {
  tape_.dW.resize(layers_.size());
  tape_.db.resize(layers_.size());
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    tape_.dW[i] = MatrixXd::Zero(layers_[i].W.rows(), layers_[i].W.cols());
    tape_.db[i] = VectorXd::Zero(layers_[i].b.size());
  }
}

namespace {

inline void apply_activation(Activation act, const MatrixXd& z, MatrixXd& y) {
  switch (act) {
    case Activation::kRelu: y = z.cwiseMax(0.0); break;
    case Activation::kTanh: y = z.array().tanh().matrix(); break;
    case Activation::kIdentity: y = z; break;
  }
}

// dy/dz as a factor applied to the upstream gradient.
inline MatrixXd activation_grad(Activation act, const MatrixXd& z, const MatrixXd& gy) {
  switch (act) {
    case Activation::kRelu:
      return (z.array() > 0.0).select(gy, MatrixXd::Zero(gy.rows(), gy.cols()));
    case Activation::kTanh: {
      MatrixXd t = z.array().tanh().matrix();
      return (gy.array() * (1.0 - t.array().square())).matrix();
    }
    case Activation::kIdentity: return gy;
  }
  return gy;
}

}  // namespace

const MatrixXd& DenseNet::forward(const MatrixXd& x) {
  if (layers_.empty()) throw StateError("forward on empty DenseNet");
  if (x.rows() != input_dim())
    throw ShapeError("forward: input dim " + std::to_string(x.rows()) +
                     " != " + std::to_string(input_dim()));
  input_cache_.resize(layers_.size());
  preact_cache_.resize(layers_.size());
  MatrixXd cur = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    input_cache_[l] = cur;
    MatrixXd z = (layers_[l].W * cur).colwise() + layers_[l].b;
    preact_cache_[l] = z;
    apply_activation(layers_[l].act, z, cur);
  }
  out_cache_ = cur;
  has_cache_ = true;
  return out_cache_;
}

MatrixXd DenseNet::forward_nograd(const MatrixXd& x) const {
  if (layers_.empty()) throw StateError("forward on empty DenseNet");
  if (x.rows() != input_dim())
    throw ShapeError("forward: input dim " + std::to_string(x.rows()) +
                     " != " + std::to_string(input_dim()));
  MatrixXd cur = x;
  MatrixXd next;
  for (const auto& layer : layers_) {
    MatrixXd z = (layer.W * cur).colwise() + layer.b;
    apply_activation(layer.act, z, next);
    cur = std::move(next);
  }
  return cur;
}

VectorXd DenseNet::forward_vec(const VectorXd& x) {
  return forward(MatrixXd(x)).col(0);
}

MatrixXd DenseNet::backward(const MatrixXd& grad_out, bool accumulate) {
  if (!has_cache_) throw StateError("backward called without a cached forward");
  if (grad_out.rows() != output_dim() || grad_out.cols() != input_cache_[0].cols())
    throw ShapeError("backward: upstream gradient shape mismatch");
  MatrixXd g = grad_out;
  for (std::size_t li = layers_.size(); li-- > 0;) {
    MatrixXd gz = activation_grad(layers_[li].act, preact_cache_[li], g);
    if (accumulate && tape_.accumulating) {
      tape_.dW[li].noalias() += gz * input_cache_[li].transpose();
      tape_.db[li] += gz.rowwise().sum();
    }
    g.noalias() = layers_[li].W.transpose() * gz;
  }
  return g;
}

void DenseNet::drop_cache() {
  input_cache_.clear();
  preact_cache_.clear();
  out_cache_.resize(0, 0);
  has_cache_ = false;
}

int DenseNet::input_dim() const {
  if (layers_.empty()) throw StateError("empty DenseNet");
  return static_cast<int>(layers_.front().W.cols());
}

int DenseNet::output_dim() const {
  if (layers_.empty()) throw StateError("empty DenseNet");
  return static_cast<int>(layers_.back().W.rows());
}

long DenseNet::param_count() const {
  long n = 0;
  for (const auto& l : layers_) n += l.W.size() + l.b.size();
  return n;
}

double DenseNet::min_abs_relu_preact() const {
  double m = std::numeric_limits<double>::infinity();
  if (!has_cache_) return m;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    if (layers_[l].act != Activation::kRelu) continue;
    m = std::min(m, preact_cache_[l].array().abs().minCoeff());
  }
  return m;
}

void DenseNet::check_finite(const std::string& what) const {
  for (const auto& l : layers_) {
    if (!l.W.allFinite() || !l.b.allFinite())
      throw NumericError("non-finite parameters in " + what);
  }
}

std::uint64_t DenseNet::param_hash() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&h](const double* p, long n) {
    for (long i = 0; i < n; ++i) {
      std::uint64_t bits;
      static_assert(sizeof(bits) == sizeof(double));
      std::memcpy(&bits, &p[i], sizeof(bits));
      h = fnv1a64_mix(h, bits);
    }
  };
  for (const auto& l : layers_) {
    mix(l.W.data(), l.W.size());
    mix(l.b.data(), l.b.size());
  }
  return h;
}

void DenseNet::flatten_params(std::vector<double>& out) const {
  out.clear();
  out.reserve(static_cast<std::size_t>(param_count()));
  for (const auto& l : layers_) {
    out.insert(out.end(), l.W.data(), l.W.data() + l.W.size());
    out.insert(out.end(), l.b.data(), l.b.data() + l.b.size());
  }
}

void DenseNet::unflatten_params(const std::vector<double>& in) {
  if (static_cast<long>(in.size()) != param_count())
    throw ShapeError("unflatten_params: size mismatch");
  std::size_t off = 0;
  for (auto& l : layers_) {
    std::copy(in.begin() + off, in.begin() + off + l.W.size(), l.W.data());
    off += l.W.size();
    std::copy(in.begin() + off, in.begin() + off + l.b.size(), l.b.data());
    off += l.b.size();
  }
}

double* DenseNet::param_ptr(long flat_index) {
  long off = flat_index;
  for (auto& l : layers_) {
    if (off < l.W.size()) return l.W.data() + off;
    off -= l.W.size();
    if (off < l.b.size()) return l.b.data() + off;
    off -= l.b.size();
  }
  throw ShapeError("param_ptr: index out of range");
}

double DenseNet::grad_at(long flat_index) const {
  long off = flat_index;
  for (std::size_t li = 0; li < layers_.size(); ++li) {
    if (off < tape_.dW[li].size()) return tape_.dW[li].data()[off];
    off -= tape_.dW[li].size();
    if (off < tape_.db[li].size()) return tape_.db[li].data()[off];
    off -= tape_.db[li].size();
  }
  throw ShapeError("grad_at: index out of range");
}

VectorXd softmax(const VectorXd& v) {
  if (v.size() == 0) throw ShapeError("softmax on empty input");
  const double m = v.maxCoeff();
  VectorXd e = (v.array() - m).exp();
  return e / e.sum();
}

MatrixXd softmax_cols(const MatrixXd& logits) {
  if (logits.rows() == 0 || logits.cols() == 0)
    throw ShapeError("softmax on empty input");
  MatrixXd out(logits.rows(), logits.cols());
  for (Eigen::Index c = 0; c < logits.cols(); ++c) out.col(c) = softmax(logits.col(c));
  return out;
}

VectorXd softmax_backward(const VectorXd& alpha, const VectorXd& grad_alpha) {
  if (alpha.size() != grad_alpha.size())
    throw ShapeError("softmax_backward: size mismatch");
  const double inner = alpha.dot(grad_alpha);
  return (alpha.array() * (grad_alpha.array() - inner)).matrix();
}

MatrixXd softmax_backward_cols(const MatrixXd& alpha, const MatrixXd& grad_alpha) {
  if (alpha.rows() != grad_alpha.rows() || alpha.cols() != grad_alpha.cols())
    throw ShapeError("softmax_backward: shape mismatch");
  MatrixXd out(alpha.rows(), alpha.cols());
  for (Eigen::Index c = 0; c < alpha.cols(); ++c)
    out.col(c) = softmax_backward(alpha.col(c), grad_alpha.col(c));
  return out;
}

void save_params64(std::ostream& os, const DenseNet& net) {
  std::vector<double> v;
  net.flatten_params(v);
  const std::uint64_t n = v.size();
  os.write(reinterpret_cast<const char*>(&n), sizeof(n));
  os.write(reinterpret_cast<const char*>(v.data()),
           static_cast<std::streamsize>(sizeof(double) * v.size()));
}

void load_params64(std::istream& is, DenseNet& net) {
  std::uint64_t n = 0;
  is.read(reinterpret_cast<char*>(&n), sizeof(n));
  if (!is || n != static_cast<std::uint64_t>(net.param_count()))
    throw IoError("float64 parameter dump does not match the network shape");
  std::vector<double> v(n);
  is.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(sizeof(double) * v.size()));
  if (!is) throw IoError("truncated float64 parameter dump");
  net.unflatten_params(v);
}

}  // namespace lexpol
