#include "lexpol/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "lexpol/errors.hpp"

namespace lexpol {

namespace {

double checked_loss(const LossFn& loss, bool with_grad) {
  const double value = loss(with_grad);
  if (!std::isfinite(value)) throw NumericError("grad_check: non-finite loss");
  return value;
}

double rel_err(double analytic, double fd) {
  const double denom = std::max({1e-6, std::abs(analytic), std::abs(fd)});
  return std::abs(analytic - fd) / denom;
}

}  // namespace

GradCheckReport grad_check(const std::vector<DenseNet*>& nets, const LossFn& loss,
                           const GradCheckOptions& opt,
                           const std::function<void()>& resample) {
  GradCheckReport report;

  // Evaluate once with gradients so the caches are warm, then steer the
  // evaluation point away from relu kinks if the caller can redraw it.
  for (auto* n : nets) n->zero_grads();
  checked_loss(loss, true);
  if (resample) {
    auto margin = [&nets] {
      double m = std::numeric_limits<double>::infinity();
      for (const auto* n : nets) m = std::min(m, n->min_abs_relu_preact());
      return m;
    };
    while (margin() < opt.kink_margin && report.resamples < opt.max_resamples) {
      resample();
      ++report.resamples;
      for (auto* n : nets) n->zero_grads();
      checked_loss(loss, true);
    }
  }

  // Analytic gradients at the final evaluation point.
  for (auto* n : nets) n->zero_grads();
  checked_loss(loss, true);
  std::vector<std::vector<double>> analytic(nets.size());
  for (std::size_t ni = 0; ni < nets.size(); ++ni) {
    analytic[ni].resize(static_cast<std::size_t>(nets[ni]->param_count()));
    for (long i = 0; i < nets[ni]->param_count(); ++i)
      analytic[ni][static_cast<std::size_t>(i)] = nets[ni]->grad_at(i);
  }

  report.max_rel_err = 0.0;
  for (std::size_t ni = 0; ni < nets.size(); ++ni) {
    DenseNet& net = *nets[ni];
    const long count = net.param_count();
    long stride = 1;
    if (opt.max_checks_per_net > 0 && count > opt.max_checks_per_net)
      stride = (count + opt.max_checks_per_net - 1) / opt.max_checks_per_net;
    for (long i = 0; i < count; i += stride) {
      double* p = net.param_ptr(i);
      const double orig = *p;
      *p = orig + opt.h;
      const double lp = checked_loss(loss, false);
      *p = orig - opt.h;
      const double lm = checked_loss(loss, false);
      *p = orig;
      const double fd = (lp - lm) / (2.0 * opt.h);
      const double err = rel_err(analytic[ni][static_cast<std::size_t>(i)], fd);
      if (err > report.max_rel_err) {
        report.max_rel_err = err;
        report.worst =
            "net " + std::to_string(ni) + " param " + std::to_string(i);
      }
    }
  }
  report.pass = report.max_rel_err <= opt.tol;
  return report;
}

GradCheckReport grad_check(DenseNet& net, const LossFn& loss, double tol,
                           double h) {
  GradCheckOptions opt;
  opt.tol = tol;
  opt.h = h;
  return grad_check(std::vector<DenseNet*>{&net}, loss, opt);
}

}  // namespace lexpol
