// Independent reference implementations used only to check the production
// code. Everything here is deliberately written the slow, obvious way and
// shares no code with the library paths it verifies.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"

namespace testoracle {

// y = W x + b via plain nested loops
inline std::vector<double> naive_affine(const std::vector<double>& w,
                                        const std::vector<double>& b,
                                        const std::vector<double>& x, int rows,
                                        int cols) {
  std::vector<double> y(rows, 0.0);
  for (int r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (int c = 0; c < cols; ++c) acc += w[r * cols + c] * x[c];
    y[r] = acc + b[r];
  }
  return y;
}

// exhaustive choose-x minimizer of summed winning prices; ties between
// subsets resolved by comparing their sorted (price, cost, index) key lists
inline std::vector<int> brute_force_winners(const std::vector<double>& prices,
                                            const std::vector<double>& costs,
                                            int x) {
  const int n = static_cast<int>(prices.size());
  auto key = [&](int i) {
    return std::tuple<double, double, int>(prices[i],
                                           costs.empty() ? 0.0 : costs[i], i);
  };
  std::vector<int> best;
  double best_sum = 0.0;
  std::vector<int> subset;
  // summing in ascending price order makes equal multisets produce bitwise
  // equal sums, so genuine ties are detected exactly
  auto subset_sum = [&](const std::vector<int>& ids) {
    std::vector<double> ps;
    for (int i : ids) ps.push_back(prices[i]);
    std::sort(ps.begin(), ps.end());
    double sum = 0.0;
    for (double p : ps) sum += p;
    return sum;
  };
  std::function<void(int)> recurse = [&](int start) {
    if (static_cast<int>(subset.size()) == x) {
      double sum = subset_sum(subset);
      bool better = false;
      if (best.empty() || sum < best_sum) {
        better = true;
      } else if (sum == best_sum) {
        std::vector<std::tuple<double, double, int>> ka, kb;
        for (int i : subset) ka.push_back(key(i));
        for (int i : best) kb.push_back(key(i));
        std::sort(ka.begin(), ka.end());
        std::sort(kb.begin(), kb.end());
        if (ka < kb) better = true;
      }
      if (better) {
        best = subset;
        best_sum = sum;
      }
      return;
    }
    for (int i = start; i < n; ++i) {
      subset.push_back(i);
      recurse(i + 1);
      subset.pop_back();
    }
  };
  recurse(0);
  std::sort(best.begin(), best.end());
  return best;
}

// direct transcription of the winning/losing profit formulas
inline double naive_profit(double price, double cost, double omega, double beta,
                           double rho, int x, double q0, double qe, bool won) {
  double linkage = (price * (1.0 + omega) - cost) * (qe - rho * q0) * beta;
  if (!won) return linkage;
  return (price - cost) * rho / static_cast<double>(x) * q0 + linkage;
}

// O(T^2) advantage sums: A_t = sum_l (gamma*lambda)^l * delta_{t+l}
inline void naive_gae(const std::vector<double>& rewards,
                      const std::vector<double>& values, double bootstrap,
                      double gamma, double lambda, std::vector<double>& adv,
                      std::vector<double>& ret) {
  const int t_max = static_cast<int>(rewards.size());
  adv.assign(t_max, 0.0);
  ret.assign(t_max, 0.0);
  for (int t = 0; t < t_max; ++t) {
    double acc = 0.0;
    double w = 1.0;
    for (int l = t; l < t_max; ++l) {
      double next_v = (l + 1 < t_max) ? values[l + 1] : bootstrap;
      double delta = rewards[l] + gamma * next_v - values[l];
      acc += w * delta;
      w *= gamma * lambda;
    }
    adv[t] = acc;
    ret[t] = acc + values[t];
  }
}

// fractional ranks via the count-based formula: 1 + #smaller + (#equal-1)/2
inline std::vector<double> naive_ranks(const std::vector<double>& v) {
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    int smaller = 0, equal = 0;
    for (std::size_t j = 0; j < v.size(); ++j) {
      if (v[j] < v[i]) ++smaller;
      if (v[j] == v[i]) ++equal;
    }
    out[i] = 1.0 + smaller + 0.5 * (equal - 1);
  }
  return out;
}

inline double naive_pearson(const std::vector<double>& a,
                            const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double sa = 0, sb = 0, sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sa += a[i];
    sb += b[i];
    sab += a[i] * b[i];
    saa += a[i] * a[i];
    sbb += b[i] * b[i];
  }
  return (n * sab - sa * sb) /
         std::sqrt((n * saa - sa * sa) * (n * sbb - sb * sb));
}

inline double naive_spearman(const std::vector<double>& a,
                             const std::vector<double>& b) {
  return naive_pearson(naive_ranks(a), naive_ranks(b));
}

inline double naive_r_squared(const std::vector<double>& pred,
                              const std::vector<double>& actual) {
  double mean = 0.0;
  for (double v : actual) mean += v;
  mean /= static_cast<double>(actual.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    ss_res += (actual[i] - pred[i]) * (actual[i] - pred[i]);
    ss_tot += (actual[i] - mean) * (actual[i] - mean);
  }
  return 1.0 - ss_res / ss_tot;
}

// central finite differences of a scalar function of a parameter vector
inline std::vector<double> fd_gradient(
    const std::function<double()>& loss, std::vector<double*> params,
    double h = 1e-5) {
  std::vector<double> grad(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    double saved = *params[i];
    *params[i] = saved + h;
    double up = loss();
    *params[i] = saved - h;
    double down = loss();
    *params[i] = saved;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

// brute-force JSON object extraction: try to parse every substring
inline bool oracle_extract_bid(const std::string& text, double* bid_out) {
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '{') continue;
    for (std::size_t j = i + 1; j <= text.size(); ++j) {
      auto candidate =
          nlohmann::json::parse(text.substr(i, j - i), nullptr, false);
      if (candidate.is_discarded() || !candidate.is_object()) continue;
      if (candidate.contains("reasoning") && candidate.contains("bid_price") &&
          candidate["bid_price"].is_number()) {
        *bid_out = candidate["bid_price"].get<double>();
        return true;
      }
      break;  // first balanced parse at this start position decides it
    }
  }
  return false;
}

}  // namespace testoracle
