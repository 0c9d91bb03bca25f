#include "procuresim/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "procuresim/market_env.hpp"

namespace procuresim {

std::vector<double> average_ranks(const std::vector<double>& v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    // tied block [i, j] shares the average of its 1-based positions
    double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

namespace {

double pearson(const std::vector<double>& a, const std::vector<double>& b,
               bool* defined) {
  const std::size_t n = a.size();
  double mean_a = 0.0, mean_b = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mean_a += a[i];
    mean_b += b[i];
  }
  mean_a /= static_cast<double>(n);
  mean_b /= static_cast<double>(n);
  double cov = 0.0, var_a = 0.0, var_b = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double da = a[i] - mean_a;
    double db = b[i] - mean_b;
    cov += da * db;
    var_a += da * da;
    var_b += db * db;
  }
  if (var_a <= 0.0 || var_b <= 0.0) {
    *defined = false;
    return 0.0;
  }
  *defined = true;
  return cov / std::sqrt(var_a * var_b);
}

// continued fraction for the incomplete beta (Lentz's method)
double beta_cf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 3e-16;
  constexpr double kTiny = 1e-300;
  double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  double ln_bt = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                 a * std::log(x) + b * std::log(1.0 - x);
  double bt = std::exp(ln_bt);
  if (x < (a + 1.0) / (a + b + 2.0)) return bt * beta_cf(a, b, x) / a;
  return 1.0 - bt * beta_cf(b, a, 1.0 - x) / b;
}

double student_t_two_sided_p(double t, int df) {
  if (df < 1) throw MetricsError("student t requires df >= 1");
  if (!std::isfinite(t)) return 0.0;
  double d = static_cast<double>(df);
  return regularized_incomplete_beta(d / 2.0, 0.5, d / (d + t * t));
}

SpearmanResult spearman(const std::vector<double>& pred,
                        const std::vector<double>& actual) {
  if (pred.size() != actual.size())
    throw MetricsError("spearman: length mismatch");
  if (pred.size() < 3) throw MetricsError("spearman: needs at least 3 pairs");
  SpearmanResult res;
  std::vector<double> ra = average_ranks(pred);
  std::vector<double> rb = average_ranks(actual);
  bool defined = false;
  double rho = pearson(ra, rb, &defined);
  if (!defined) return res;  // constant input, rho undefined
  res.defined = true;
  res.rho = rho;
  const int df = static_cast<int>(pred.size()) - 2;
  if (std::abs(rho) >= 1.0) {
    res.p_value = 0.0;
  } else {
    double t = rho * std::sqrt(df / (1.0 - rho * rho));
    res.p_value = student_t_two_sided_p(t, df);
  }
  return res;
}

double r_squared(const std::vector<double>& pred,
                 const std::vector<double>& actual) {
  if (pred.size() != actual.size())
    throw MetricsError("r_squared: length mismatch");
  if (pred.size() < 2) throw MetricsError("r_squared: needs at least 2 pairs");
  double mean = 0.0;
  for (double a : actual) mean += a;
  mean /= static_cast<double>(actual.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    ss_res += (actual[i] - pred[i]) * (actual[i] - pred[i]);
    ss_tot += (actual[i] - mean) * (actual[i] - mean);
  }
  if (ss_tot <= 0.0) throw MetricsError("r_squared: constant actual vector");
  return 1.0 - ss_res / ss_tot;
}

double winner_alignment(const std::vector<double>& pred_prices,
                        const std::vector<int>& actual_winners, int x) {
  if (static_cast<int>(actual_winners.size()) != x)
    throw MetricsError("winner_alignment: actual winner set must have x entries");
  if (x < 1 || x > static_cast<int>(pred_prices.size()))
    throw MetricsError("winner_alignment: x out of range");
  ClearingResult clearing = clear_market(pred_prices, x);
  int matched = 0;
  for (int w : actual_winners) {
    if (w < 0 || w >= static_cast<int>(pred_prices.size()))
      throw MetricsError("winner_alignment: winner index out of range");
    if (clearing.winners[w] != 0) ++matched;
  }
  return static_cast<double>(matched) / static_cast<double>(x);
}

std::vector<double> bid_ceiling_ratio(const std::vector<double>& prices,
                                      double p_max) {
  if (!(p_max > 0.0)) throw MetricsError("bid_ceiling_ratio: p_max must be > 0");
  std::vector<double> out;
  out.reserve(prices.size());
  for (double p : prices) out.push_back(p / p_max);
  return out;
}

double quantile(std::vector<double> xs, double q) {
  if (xs.empty()) throw MetricsError("quantile of empty sample");
  q = std::clamp(q, 0.0, 1.0);
  std::sort(xs.begin(), xs.end());
  double pos = q * static_cast<double>(xs.size() - 1);
  std::size_t lo = static_cast<std::size_t>(pos);
  if (lo + 1 >= xs.size()) return xs.back();
  double frac = pos - static_cast<double>(lo);
  return xs[lo] * (1.0 - frac) + xs[lo + 1] * frac;
}

ProfitSummary summarize_profits(const std::vector<double>& profits) {
  if (profits.empty()) throw MetricsError("profit summary of empty sample");
  ProfitSummary s;
  for (double p : profits) s.mean += p;
  s.mean /= static_cast<double>(profits.size());
  s.q25 = quantile(profits, 0.25);
  s.q50 = quantile(profits, 0.50);
  s.q75 = quantile(profits, 0.75);
  return s;
}

double ci95_halfwidth(const std::vector<double>& xs) {
  // two-sided 97.5% t quantiles for df 1..9
  static constexpr double kT975[] = {12.706, 4.303, 3.182, 2.776, 2.571,
                                     2.447,  2.365, 2.306, 2.262};
  const std::size_t n = xs.size();
  if (n < 2) throw MetricsError("ci95 needs at least 2 samples");
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  double sd = std::sqrt(var / static_cast<double>(n - 1));
  double crit = n < 10 ? kT975[n - 2] : 1.96;
  return crit * sd / std::sqrt(static_cast<double>(n));
}

}  // namespace procuresim
