#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "procuresim/scenario.hpp"

namespace procuresim {

class EnvError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Per-firm observation layout:
//   [p_max, rho, x, omega_i, q0, qe, cost_i, prev_price_i, prev_profit_i, t/T]
inline constexpr int kObsDim = 10;
using Obs = std::array<double, kObsDim>;

// Maps a normalized decision in [-1, 1] onto [cost, p_max]. Out-of-range
// inputs are clamped; the endpoints map to cost and p_max exactly.
double decode_action(double a, double cost, double p_max);

// Inverse of decode_action for a feasible price.
double encode_price(double price, double cost, double p_max);

struct ClearingResult {
  // firm indices in ascending clearing order (price, then cost, then index)
  std::vector<int> ranks;
  std::vector<std::uint8_t> winners;   // exactly x entries set
  std::vector<double> winning_prices;  // the x winning prices, ascending
};

// Top-x lowest-price selection. `costs` feeds the deterministic tie-break;
// pass an empty vector when costs are unknown (ties then break by index).
ClearingResult clear_market(const std::vector<double>& prices, int x,
                            const std::vector<double>& costs = {});

// Profit in 1e4 CNY. Winners earn the guaranteed tranche plus the residual
// price-linkage term; losers earn the linkage term only.
double profit(double price, const FirmConfig& firm, const DrugScenario& scenario,
              bool won);

// Upper bound on |profit| reachable in a scenario; normalizes the profit
// observation slot and the learners' internal reward units.
double profit_magnitude_bound(const DrugScenario& scenario);

struct StepOutcome {
  int t = 0;  // 1-based index of the step just taken
  std::vector<double> prices;
  std::vector<std::uint8_t> winners;
  std::vector<double> profits;
  std::vector<double> rewards;  // == profits
  std::vector<int> price_rank;  // 1-based ascending price rank per firm
  std::vector<Obs> next_obs_raw;
  std::vector<Obs> next_obs_norm;
  bool done = false;
};

// Single-episode bidding game over a resolved scenario. Policy and volume
// parameters stay fixed within an episode; only the per-firm history slots
// (prev price, prev profit) and the time encoding evolve.
class MarketEnv {
 public:
  struct Observations {
    std::vector<Obs> raw;
    std::vector<Obs> norm;
  };

  MarketEnv(DrugScenario scenario, int horizon);

  // Starts a fresh episode: t=0, prev_price=cost, prev_profit=0.
  Observations reset();
  StepOutcome step(const std::vector<double>& actions);

  int num_firms() const { return static_cast<int>(scenario_.firms.size()); }
  int horizon() const { return horizon_; }
  int t() const { return t_; }
  bool done() const { return done_; }
  const DrugScenario& scenario() const { return scenario_; }

  Obs observation_raw(int firm) const;
  Obs normalize(const Obs& raw) const;

 private:
  DrugScenario scenario_;
  int horizon_ = 0;
  int t_ = 0;
  bool started_ = false;
  bool done_ = false;
  std::vector<double> costs_;
  std::vector<double> prev_price_;
  std::vector<double> prev_profit_;
  // min-max constants per feature, fixed at reset from scenario bounds
  Obs norm_lo_{};
  Obs norm_hi_{};

  void fix_normalization();
};

}  // namespace procuresim
