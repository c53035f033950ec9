#pragma once

#include <vector>

namespace lexpol {

double mean(const std::vector<double>& xs);
double sample_variance(const std::vector<double>& xs);  // unbiased (n-1)

/// Regularized incomplete beta I_x(a,b), continued-fraction evaluation.
/// Good to ~1e-14 over the parameter range t-tests produce.
double reg_inc_beta(double a, double b, double x);

/// P(|T| >= |t|) for Student's t with `dof` degrees of freedom.
double student_t_two_sided_p(double t, double dof);

struct SignificanceResult {
  double t_stat = 0.0;
  double dof = 0.0;
  double p_raw = 1.0;
  double p_adjusted = 1.0;
  bool significant = false;
};

/// Two-sided Welch t-test with Welch-Satterthwaite degrees of freedom and
/// Bonferroni correction (p_adj = min(1, p * num_comparisons)). Both-zero
/// variance with equal means gives p=1 by convention.
SignificanceResult welch_bonferroni(const std::vector<double>& a,
                                    const std::vector<double>& b,
                                    int num_comparisons, double alpha = 0.05);

}  // namespace lexpol
