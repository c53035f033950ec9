#pragma once

#include <iosfwd>
#include <vector>

#include "lexpol/net.hpp"

namespace lexpol {

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Per-network Adam moments. One AdamState per DenseNet; step count is
/// tracked here so bias correction survives checkpointing.
class AdamState {
 public:
  AdamState() = default;
  static AdamState for_net(const DenseNet& net);

  /// Applies one bias-corrected Adam update from the net's gradient tape,
  /// then zeroes the tape.
  void step(DenseNet& net, const AdamConfig& cfg);

  long step_count() const { return t_; }

  void save(std::ostream& os) const;
  void load(std::istream& is, const DenseNet& net);

 private:
  std::vector<MatrixXd> mW_, vW_;
  std::vector<VectorXd> mb_, vb_;
  long t_ = 0;
};

/// Adam on a single scalar (the log entropy temperature).
class AdamScalar {
 public:
  void step(double& param, double grad, const AdamConfig& cfg);

  long step_count() const { return t_; }

  void save(std::ostream& os) const;
  void load(std::istream& is);

 private:
  double m_ = 0.0;
  double v_ = 0.0;
  long t_ = 0;
};

}  // namespace lexpol
