#pragma once

#include <stdexcept>
#include <vector>

namespace procuresim {

class MetricsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Fractional (average) ranks with tie handling, 1-based.
std::vector<double> average_ranks(const std::vector<double>& v);

struct SpearmanResult {
  double rho = 0.0;
  double p_value = 1.0;
  bool defined = false;  // false when either vector is constant
};

// Rank correlation with average-rank ties; two-sided p via the
// t-approximation with n-2 degrees of freedom. Requires n >= 3.
SpearmanResult spearman(const std::vector<double>& pred,
                        const std::vector<double>& actual);

// Plain coefficient of determination, 1 - SS_res/SS_tot. Callers working on
// prices apply the log transform before calling. Requires n >= 2 and a
// non-constant actual vector.
double r_squared(const std::vector<double>& pred,
                 const std::vector<double>& actual);

// Fraction of the x winner slots shared between the clearing of pred_prices
// and the given actual winner index set (which must have exactly x entries).
double winner_alignment(const std::vector<double>& pred_prices,
                        const std::vector<int>& actual_winners, int x);

std::vector<double> bid_ceiling_ratio(const std::vector<double>& prices,
                                      double p_max);

// Regularized incomplete beta I_x(a, b), continued-fraction evaluation.
double regularized_incomplete_beta(double a, double b, double x);

// Two-sided Student-t tail probability P(|T_df| > t).
double student_t_two_sided_p(double t, int df);

// Linear-interpolation quantile of an unsorted sample, q in [0, 1].
double quantile(std::vector<double> xs, double q);

struct ProfitSummary {
  double mean = 0.0;
  double q25 = 0.0;
  double q50 = 0.0;
  double q75 = 0.0;
};

ProfitSummary summarize_profits(const std::vector<double>& profits);

// 95% confidence half-width of the sample mean: t-interval below 10 samples,
// normal approximation from 10 up.
double ci95_halfwidth(const std::vector<double>& xs);

}  // namespace procuresim
