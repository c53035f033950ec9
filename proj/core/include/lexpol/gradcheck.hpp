#pragma once

#include <functional>
#include <string>
#include <vector>

#include "lexpol/net.hpp"

namespace lexpol {

struct GradCheckReport {
  double max_rel_err = 0.0;
  bool pass = false;
  std::string worst;  // which net / flat parameter index was worst
  int resamples = 0;
};

/// Loss callback. with_grad=true must run cached forwards and backwards so
/// every net's tape holds the analytic gradient; with_grad=false must only
/// return the loss value at the current parameters.
using LossFn = std::function<double(bool with_grad)>;

struct GradCheckOptions {
  double tol = 1e-4;
  double h = 1e-5;
  /// Check at most this many parameters per net (deterministic stride over
  /// the flat index space); 0 means every parameter.
  long max_checks_per_net = 0;
  /// Smallest |relu pre-activation| the evaluation point may have. Central
  /// differences straddling a kink are invalid, so points closer than this
  /// are resampled (not failed).
  double kink_margin = 1e-3;
  int max_resamples = 64;
};

/// Central finite differences against the analytic tapes of every net in
/// `nets` under a shared loss. `resample` (optional) redraws the evaluation
/// point when a relu pre-activation sits inside the kink margin.
GradCheckReport grad_check(const std::vector<DenseNet*>& nets, const LossFn& loss,
                           const GradCheckOptions& opt = {},
                           const std::function<void()>& resample = {});

/// Convenience wrapper for the single-net case.
GradCheckReport grad_check(DenseNet& net, const LossFn& loss, double tol,
                           double h = 1e-5);

}  // namespace lexpol
