#include "lexpol/stats.hpp"

#include <cmath>
#include <limits>

#include "lexpol/errors.hpp"

namespace lexpol {

double mean(const std::vector<double>& xs) {
  if (xs.empty()) throw ShapeError("mean of empty sample");
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

double sample_variance(const std::vector<double>& xs) {
  if (xs.size() < 2) throw ShapeError("sample variance needs n >= 2");
  const double m = mean(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return s / static_cast<double>(xs.size() - 1);
}

namespace {

// modified Lentz continued fraction for the incomplete beta
double betacf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 3e-16;
  constexpr double kFpmin = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kFpmin) d = kFpmin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kFpmin) d = kFpmin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kFpmin) c = kFpmin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kFpmin) d = kFpmin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kFpmin) c = kFpmin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace

double reg_inc_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0))
    throw NumericError("incomplete beta needs positive shape parameters");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double bt = std::exp(std::lgamma(a + b) - std::lgamma(a) -
                             std::lgamma(b) + a * std::log(x) +
                             b * std::log1p(-x));
  if (x < (a + 1.0) / (a + b + 2.0)) return bt * betacf(a, b, x) / a;
  return 1.0 - bt * betacf(b, a, 1.0 - x) / b;
}

double student_t_two_sided_p(double t, double dof) {
  if (!(dof > 0.0)) throw NumericError("t-distribution needs dof > 0");
  if (std::isinf(t)) return 0.0;
  return reg_inc_beta(0.5 * dof, 0.5, dof / (dof + t * t));
}

SignificanceResult welch_bonferroni(const std::vector<double>& a,
                                    const std::vector<double>& b,
                                    int num_comparisons, double alpha) {
  if (a.size() < 2 || b.size() < 2)
    throw ShapeError("welch test needs at least two samples per side");
  if (num_comparisons < 1)
    throw ShapeError("num_comparisons must be at least 1");
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  const double ma = mean(a), mb = mean(b);
  const double sa = sample_variance(a) / na;
  const double sb = sample_variance(b) / nb;
  const double se2 = sa + sb;

  SignificanceResult r;
  if (se2 <= 0.0) {
    r.dof = na + nb - 2.0;
    if (ma == mb) {
      r.t_stat = 0.0;
      r.p_raw = 1.0;
    } else {
      r.t_stat = ma > mb ? std::numeric_limits<double>::infinity()
                         : -std::numeric_limits<double>::infinity();
      r.p_raw = 0.0;
    }
  } else {
    r.t_stat = (ma - mb) / std::sqrt(se2);
    r.dof = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    r.p_raw = student_t_two_sided_p(r.t_stat, r.dof);
  }
  r.p_adjusted = std::min(1.0, r.p_raw * num_comparisons);
  r.significant = r.p_adjusted < alpha;
  return r;
}

}  // namespace lexpol
