#include "procuresim/market_env.hpp"

#include <algorithm>
#include <cmath>

namespace procuresim {

double decode_action(double a, double cost, double p_max) {
  a = std::clamp(a, -1.0, 1.0);
  // two-coefficient form so a=-1 returns cost and a=+1 returns p_max exactly
  double u = (a + 1.0) * 0.5;
  return cost * (1.0 - u) + p_max * u;
}

double encode_price(double price, double cost, double p_max) {
  double span = p_max - cost;
  if (!(span > 0.0)) return -1.0;
  double u = (price - cost) / span;
  return std::clamp(2.0 * u - 1.0, -1.0, 1.0);
}

ClearingResult clear_market(const std::vector<double>& prices, int x,
                            const std::vector<double>& costs) {
  const int n = static_cast<int>(prices.size());
  if (x < 0 || x > n) throw EnvError("clear_market: x out of range");
  if (!costs.empty() && static_cast<int>(costs.size()) != n)
    throw EnvError("clear_market: costs length mismatch");

  ClearingResult res;
  res.ranks.resize(n);
  for (int i = 0; i < n; ++i) res.ranks[i] = i;
  auto cost_of = [&](int i) { return costs.empty() ? 0.0 : costs[i]; };
  std::sort(res.ranks.begin(), res.ranks.end(), [&](int a, int b) {
    if (prices[a] != prices[b]) return prices[a] < prices[b];
    if (cost_of(a) != cost_of(b)) return cost_of(a) < cost_of(b);
    return a < b;
  });
  res.winners.assign(n, 0);
  res.winning_prices.reserve(x);
  for (int k = 0; k < x; ++k) {
    res.winners[res.ranks[k]] = 1;
    res.winning_prices.push_back(prices[res.ranks[k]]);
  }
  return res;
}

double profit(double price, const FirmConfig& firm, const DrugScenario& scenario,
              bool won) {
  const double cost = firm.cost.value();
  const double residual = scenario.qe - scenario.rho * scenario.q0;
  const double linkage = (price * (1.0 + firm.omega) - cost) * residual * firm.beta;
  if (!won) return linkage;
  const double guaranteed =
      (price - cost) * (scenario.rho / scenario.x) * scenario.q0;
  return guaranteed + linkage;
}

double profit_magnitude_bound(const DrugScenario& scenario) {
  double omega_max = 0.0;
  double beta_max = 0.0;
  double cost_min = scenario.p_max;
  for (const auto& f : scenario.firms) {
    omega_max = std::max(omega_max, f.omega);
    beta_max = std::max(beta_max, f.beta);
    cost_min = std::min(cost_min, f.cost.value_or(0.0));
  }
  const double residual = std::abs(scenario.qe - scenario.rho * scenario.q0);
  double bound = (scenario.p_max - cost_min) * (scenario.rho / scenario.x) *
                     scenario.q0 +
                 scenario.p_max * (1.0 + omega_max) * residual * beta_max;
  return bound > 0.0 ? bound : 1.0;
}

MarketEnv::MarketEnv(DrugScenario scenario, int horizon)
    : scenario_(std::move(scenario)), horizon_(horizon) {
  if (horizon_ < 1) throw EnvError("horizon must be at least 1");
  scenario_.validate();
  if (!scenario_.costs_resolved())
    throw EnvError("scenario '" + scenario_.drug_id +
                   "' has unresolved firm costs");
  costs_.reserve(scenario_.firms.size());
  for (const auto& f : scenario_.firms) costs_.push_back(f.cost.value());
  fix_normalization();
}

void MarketEnv::fix_normalization() {
  const int n = num_firms();
  double omega_max = 1.0;
  for (const auto& f : scenario_.firms) omega_max = std::max(omega_max, f.omega);
  const double vol_max = std::max(scenario_.q0, scenario_.qe);
  const double profit_mag = profit_magnitude_bound(scenario_);

  norm_lo_ = {0, 0, 0, 0, 0, 0, 0, 0, -profit_mag, 0};
  norm_hi_ = {scenario_.p_max,
              1.0,
              static_cast<double>(n),
              omega_max,
              vol_max,
              vol_max,
              scenario_.p_max,
              scenario_.p_max,
              profit_mag,
              1.0};
}

Obs MarketEnv::observation_raw(int firm) const {
  const auto& f = scenario_.firms[firm];
  return Obs{scenario_.p_max,
             scenario_.rho,
             static_cast<double>(scenario_.x),
             f.omega,
             scenario_.q0,
             scenario_.qe,
             costs_[firm],
             prev_price_[firm],
             prev_profit_[firm],
             static_cast<double>(t_) / horizon_};
}

Obs MarketEnv::normalize(const Obs& raw) const {
  Obs out;
  for (int k = 0; k < kObsDim; ++k) {
    double span = norm_hi_[k] - norm_lo_[k];
    out[k] = span > 0.0 ? (raw[k] - norm_lo_[k]) / span : 0.0;
  }
  return out;
}

MarketEnv::Observations MarketEnv::reset() {
  t_ = 0;
  started_ = true;
  done_ = false;
  prev_price_ = costs_;
  prev_profit_.assign(costs_.size(), 0.0);
  Observations obs;
  const int n = num_firms();
  obs.raw.reserve(n);
  obs.norm.reserve(n);
  for (int i = 0; i < n; ++i) {
    obs.raw.push_back(observation_raw(i));
    obs.norm.push_back(normalize(obs.raw.back()));
  }
  return obs;
}

StepOutcome MarketEnv::step(const std::vector<double>& actions) {
  if (!started_) throw EnvError("step before reset");
  if (done_) throw EnvError("step on a finished episode");
  const int n = num_firms();
  if (static_cast<int>(actions.size()) != n)
    throw EnvError("expected one action per firm");

  StepOutcome out;
  out.prices.resize(n);
  for (int i = 0; i < n; ++i)
    out.prices[i] = decode_action(actions[i], costs_[i], scenario_.p_max);

  ClearingResult clearing = clear_market(out.prices, scenario_.x, costs_);
  out.winners = clearing.winners;
  out.price_rank.assign(n, 0);
  for (int pos = 0; pos < n; ++pos) out.price_rank[clearing.ranks[pos]] = pos + 1;

  out.profits.resize(n);
  for (int i = 0; i < n; ++i)
    out.profits[i] =
        profit(out.prices[i], scenario_.firms[i], scenario_, out.winners[i] != 0);
  out.rewards = out.profits;

  prev_price_ = out.prices;
  prev_profit_ = out.profits;
  ++t_;
  done_ = (t_ == horizon_);
  out.t = t_;
  out.done = done_;

  out.next_obs_raw.reserve(n);
  out.next_obs_norm.reserve(n);
  for (int i = 0; i < n; ++i) {
    out.next_obs_raw.push_back(observation_raw(i));
    out.next_obs_norm.push_back(normalize(out.next_obs_raw.back()));
  }
  return out;
}

}  // namespace procuresim
