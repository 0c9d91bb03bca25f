#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <set>

#include "oracles.hpp"
#include "procuresim/market_env.hpp"
#include "procuresim/rng.hpp"
#include "procuresim/scenario.hpp"

using namespace procuresim;

namespace {
const std::string kExamples =
    std::string(PROCURESIM_DATA_DIR) + "/scenarios_nvbp_examples.json";

DrugScenario adefovir() {
  for (auto& s : load_scenarios(kExamples))
    if (s.drug_id == "Adefovir Dipivoxil Tablets") return s;
  REQUIRE(false);
  return {};
}
}  // namespace

TEST_CASE("decode_action endpoint identities are exact") {
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    double p_max = rng.uniform(0.01, 100.0);
    double cost = p_max * rng.uniform(0.01, 0.99);
    CHECK(decode_action(-1.0, cost, p_max) == cost);
    CHECK(decode_action(1.0, cost, p_max) == p_max);
  }
}

TEST_CASE("decode_action midpoint and clamping") {
  CHECK(decode_action(0.0, 0.098, 1.08) == doctest::Approx(0.589).epsilon(1e-12));
  CHECK(decode_action(-5.0, 0.2, 1.0) == 0.2);
  CHECK(decode_action(7.0, 0.2, 1.0) == 1.0);
  Rng rng(4);
  for (int i = 0; i < 2000; ++i) {
    double p_max = rng.uniform(0.01, 10.0);
    double cost = p_max * rng.uniform(0.01, 0.99);
    double a = rng.uniform(-3.0, 3.0);
    double p = decode_action(a, cost, p_max);
    CHECK(p >= cost);
    CHECK(p <= p_max);
  }
}

TEST_CASE("encode_price inverts decode_action") {
  Rng rng(5);
  for (int i = 0; i < 1000; ++i) {
    double p_max = rng.uniform(0.01, 10.0);
    double cost = p_max * rng.uniform(0.01, 0.99);
    double price = rng.uniform(cost, p_max);
    double back = decode_action(encode_price(price, cost, p_max), cost, p_max);
    CHECK(back == doctest::Approx(price).epsilon(1e-12));
  }
}

TEST_CASE("clear_market basics") {
  SUBCASE("direct sort") {
    auto r = clear_market({0.5, 0.3, 0.9}, 2);
    CHECK(r.winners == std::vector<std::uint8_t>{1, 1, 0});
    CHECK(r.ranks == std::vector<int>{1, 0, 2});
    CHECK(r.winning_prices == std::vector<double>{0.3, 0.5});
  }
  SUBCASE("all-equal prices break by index without costs") {
    auto r = clear_market({0.4, 0.4, 0.4}, 1);
    CHECK(r.winners == std::vector<std::uint8_t>{1, 0, 0});
  }
  SUBCASE("equal prices break by cost before index") {
    auto r = clear_market({0.4, 0.4, 0.4}, 1, {0.3, 0.1, 0.2});
    CHECK(r.winners == std::vector<std::uint8_t>{0, 1, 0});
  }
  SUBCASE("x bounds") {
    CHECK_THROWS_AS(clear_market({0.4}, 2), EnvError);
    auto all = clear_market({0.4, 0.5}, 2);
    CHECK(all.winners == std::vector<std::uint8_t>{1, 1});
  }
}

TEST_CASE("clear_market matches the brute-force subset oracle") {
  Rng rng(17);
  for (int trial = 0; trial < 1000; ++trial) {
    int n = 1 + static_cast<int>(rng.next_u64() % 10);
    int x = 1 + static_cast<int>(rng.next_u64() % n);
    std::vector<double> prices(n), costs(n);
    for (int i = 0; i < n; ++i) {
      // coarse grid so ties actually happen
      prices[i] = std::floor(rng.uniform(0.0, 8.0)) / 8.0 + 0.1;
      costs[i] = std::floor(rng.uniform(0.0, 4.0)) / 16.0 + 0.01;
    }
    auto got = clear_market(prices, x, costs);
    auto expected = testoracle::brute_force_winners(prices, costs, x);
    std::vector<int> winners;
    for (int i = 0; i < n; ++i)
      if (got.winners[i]) winners.push_back(i);
    CHECK(winners == expected);
  }
}

TEST_CASE("profit matches the worked case and the oracle") {
  DrugScenario s = adefovir();
  const FirmConfig& f2 = s.firms[1];

  double won = profit(0.5, f2, s, true);
  double lost = profit(0.5, f2, s, false);
  // independently recomputed from the worked inputs (beta = 1/3)
  double oracle_won = testoracle::naive_profit(0.5, 0.098, 2.0, 1.0 / 3.0, 0.6,
                                               2, 2893.17, 3471.80, true);
  double oracle_lost = testoracle::naive_profit(0.5, 0.098, 2.0, 1.0 / 3.0, 0.6,
                                                2, 2893.17, 3471.80, false);
  CHECK(won == doctest::Approx(oracle_won).epsilon(1e-12));
  CHECK(lost == doctest::Approx(oracle_lost).epsilon(1e-12));
  CHECK(std::round(won * 1000.0) / 1000.0 == doctest::Approx(1160.159));
  CHECK(std::round(lost * 1000.0) / 1000.0 == doctest::Approx(811.243));

  SUBCASE("zero-margin zero-linkage case") {
    FirmConfig f = f2;
    f.omega = 0.0;
    CHECK(profit(f.cost.value(), f, s, false) == doctest::Approx(0.0));
  }
  SUBCASE("profit decomposition identity") {
    Rng rng(31);
    for (int i = 0; i < 500; ++i) {
      double price = rng.uniform(f2.cost.value(), s.p_max);
      double diff = profit(price, f2, s, true) - profit(price, f2, s, false);
      double guaranteed = (price - f2.cost.value()) * (s.rho / s.x) * s.q0;
      CHECK(diff == doctest::Approx(guaranteed).epsilon(1e-12));
    }
  }
}

TEST_CASE("reset produces the documented observation layout") {
  MarketEnv env(adefovir(), 50);
  auto obs = env.reset();
  REQUIRE(obs.raw.size() == 3);
  for (const auto& o : obs.raw) CHECK(o.size() == kObsDim);

  const Obs expected{1.08, 0.6, 2.0, 2.0, 2893.17, 3471.80, 0.098, 0.098, 0.0, 0.0};
  for (int k = 0; k < kObsDim; ++k)
    CHECK(obs.raw[1][k] == doctest::Approx(expected[k]).epsilon(1e-14));

  // normalized variant stays inside [0, 1] at reset
  for (const auto& o : obs.norm)
    for (double v : o) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }

  auto obs2 = env.reset();
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < kObsDim; ++k) {
      CHECK(obs.raw[i][k] == obs2.raw[i][k]);
      CHECK(obs.norm[i][k] == obs2.norm[i][k]);
    }
}

TEST_CASE("unresolved costs are rejected at construction") {
  DrugScenario s = adefovir();
  s.firms[2].cost.reset();
  CHECK_THROWS_AS(MarketEnv(s, 10), EnvError);
}

TEST_CASE("step composes decoding, clearing and profits") {
  DrugScenario s = adefovir();
  MarketEnv env(s, 3);
  env.reset();

  std::vector<double> target_prices{0.2, 0.5, 0.9};
  std::vector<double> actions(3);
  for (int i = 0; i < 3; ++i)
    actions[i] = encode_price(target_prices[i], s.firms[i].cost.value(), s.p_max);

  StepOutcome out = env.step(actions);
  CHECK(out.t == 1);
  CHECK_FALSE(out.done);
  for (int i = 0; i < 3; ++i)
    CHECK(out.prices[i] == doctest::Approx(target_prices[i]).epsilon(1e-12));
  CHECK(out.winners == std::vector<std::uint8_t>{1, 1, 0});
  CHECK(out.price_rank == std::vector<int>{1, 2, 3});
  for (int i = 0; i < 3; ++i) {
    double expected = testoracle::naive_profit(
        out.prices[i], s.firms[i].cost.value(), s.firms[i].omega,
        s.firms[i].beta, s.rho, s.x, s.q0, s.qe, out.winners[i] != 0);
    CHECK(out.profits[i] == doctest::Approx(expected).epsilon(1e-12));
    CHECK(out.rewards[i] == out.profits[i]);  // reward identity
  }

  SUBCASE("transition only touches the history and time slots") {
    auto before = env.observation_raw(1);
    StepOutcome second = env.step(actions);
    for (int k = 0; k < 7; ++k)
      CHECK(second.next_obs_raw[1][k] == before[k]);
    CHECK(second.next_obs_raw[1][7] == doctest::Approx(0.5));
    CHECK(second.next_obs_raw[1][9] == doctest::Approx(2.0 / 3.0));
  }
}

TEST_CASE("horizon contract: done at t == T and stepping past throws") {
  MarketEnv env(adefovir(), 2);
  env.reset();
  std::vector<double> actions{0.0, 0.0, 0.0};
  CHECK_FALSE(env.step(actions).done);
  StepOutcome last = env.step(actions);
  CHECK(last.done);
  CHECK(env.done());
  CHECK_THROWS_AS(env.step(actions), EnvError);
  CHECK_NOTHROW(env.reset());
  CHECK_NOTHROW(env.step(actions));
}

TEST_CASE("step rejects wrong action counts and pre-reset use") {
  MarketEnv env(adefovir(), 2);
  CHECK_THROWS_AS(env.step({0.0, 0.0, 0.0}), EnvError);
  env.reset();
  CHECK_THROWS_AS(env.step({0.0}), EnvError);
}

TEST_CASE("winner dominance and price feasibility over random play") {
  DrugScenario s = adefovir();
  MarketEnv env(s, 50);
  env.reset();
  Rng rng(77);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> actions(3);
    for (auto& a : actions) a = rng.uniform(-1.5, 1.5);  // includes out-of-range
    StepOutcome out = env.step(actions);
    double max_win = -1e300, min_lose = 1e300;
    for (int i = 0; i < 3; ++i) {
      CHECK(out.prices[i] >= s.firms[i].cost.value());
      CHECK(out.prices[i] <= s.p_max);
      if (out.winners[i]) max_win = std::max(max_win, out.prices[i]);
      else min_lose = std::min(min_lose, out.prices[i]);
    }
    CHECK(max_win <= min_lose + 1e-15);
  }
}

TEST_CASE("identical action sequences give identical trajectories") {
  DrugScenario s = adefovir();
  Rng rng(123);
  std::vector<std::vector<double>> script;
  for (int t = 0; t < 10; ++t)
    script.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});

  auto play = [&](std::vector<StepOutcome>& sink) {
    MarketEnv env(s, 10);
    env.reset();
    for (const auto& a : script) sink.push_back(env.step(a));
  };
  std::vector<StepOutcome> run1, run2;
  play(run1);
  play(run2);
  for (std::size_t t = 0; t < run1.size(); ++t) {
    CHECK(run1[t].prices == run2[t].prices);
    CHECK(run1[t].profits == run2[t].profits);
    CHECK(run1[t].winners == run2[t].winners);
  }
}
