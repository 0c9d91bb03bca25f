#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <string>

#include "procuresim/rng.hpp"
#include "procuresim/scenario.hpp"

using namespace procuresim;

namespace {
const std::string kDataDir = PROCURESIM_DATA_DIR;
const std::string kExamples = kDataDir + "/scenarios_nvbp_examples.json";

const DrugScenario& find_scenario(const std::vector<DrugScenario>& all,
                                  const std::string& id) {
  for (const auto& s : all)
    if (s.drug_id == id) return s;
  REQUIRE(false);
  return all.front();
}
}  // namespace

TEST_CASE("worked scenario file loads with the published values") {
  std::vector<std::string> warnings;
  auto scenarios = load_scenarios(kExamples, &warnings);
  CHECK(scenarios.size() == 5);
  CHECK(warnings.empty());

  const auto& adefovir = find_scenario(scenarios, "Adefovir Dipivoxil Tablets");
  CHECK(adefovir.p_max == doctest::Approx(1.08).epsilon(1e-14));
  CHECK(adefovir.x == 2);
  CHECK(adefovir.rho == doctest::Approx(0.6).epsilon(1e-14));
  CHECK(adefovir.q0 == doctest::Approx(2893.17).epsilon(1e-14));
  CHECK(adefovir.qe == doctest::Approx(3471.80).epsilon(1e-14));
  REQUIRE(adefovir.firms.size() == 3);
  const auto& f2 = adefovir.firms[1];
  CHECK(f2.firm_id == "F2");
  CHECK(f2.omega == doctest::Approx(2.0));
  CHECK(f2.firm_type == FirmType::A);
  CHECK(f2.has_raw_material);
  CHECK(f2.cost.value() == doctest::Approx(0.0980).epsilon(1e-14));
  // beta defaults to 1/N when the file omits it
  for (const auto& f : adefovir.firms)
    CHECK(f.beta == doctest::Approx(1.0 / 3.0).epsilon(1e-14));

  const auto& amoxicillin = find_scenario(scenarios, "Amoxicillin Capsules");
  CHECK(amoxicillin.x == 6);
  CHECK(amoxicillin.rho == doctest::Approx(0.8));
  CHECK(amoxicillin.firms.size() == 12);
  for (const auto& f : amoxicillin.firms) CHECK(f.cost.value() <= 0.0270);
}

TEST_CASE("x exceeding the firm count is rejected") {
  std::string text = R"({"scenarios":[{
    "drug_id":"toy","p_max":1.0,"rho":0.5,"x":4,"q0":10,"qe":12,
    "firms":[
      {"firm_id":"a","omega":0.5,"type":"A","raw_material":false},
      {"firm_id":"b","omega":0.5,"type":"B","raw_material":false},
      {"firm_id":"c","omega":0.5,"type":"C","raw_material":false}
    ]}]})";
  CHECK_THROWS_WITH_AS(parse_scenarios(text),
                       doctest::Contains("x exceeds firm count"), ScenarioError);
}

TEST_CASE("field-level diagnostics name the scenario and firm") {
  std::string bad_type = R"({"scenarios":[{
    "drug_id":"toy","p_max":1.0,"rho":0.5,"x":1,"q0":10,"qe":12,
    "firms":[{"firm_id":"a","omega":0.5,"type":"E","raw_material":false}]}]})";
  CHECK_THROWS_WITH_AS(parse_scenarios(bad_type),
                       doctest::Contains("unknown firm type"), ScenarioError);

  std::string cost_high = R"({"scenarios":[{
    "drug_id":"toy","p_max":1.0,"rho":0.5,"x":1,"q0":10,"qe":12,
    "firms":[{"firm_id":"a","omega":0.5,"type":"A","raw_material":false,"cost":1.5}]}]})";
  CHECK_THROWS_WITH_AS(parse_scenarios(cost_high),
                       doctest::Contains("cost must be below p_max"),
                       ScenarioError);

  CHECK_THROWS_AS(parse_scenarios("{not json"), ScenarioError);
  CHECK_THROWS_AS(load_scenarios("/nonexistent/file.json"), std::runtime_error);
}

TEST_CASE("beta bookkeeping: sum warnings and errors") {
  auto make = [](const std::string& b) {
    return std::string(R"({"scenarios":[{
      "drug_id":"toy","p_max":1.0,"rho":0.5,"x":1,"q0":10,"qe":12,
      "firms":[
        {"firm_id":"a","omega":0.5,"type":"A","raw_material":false,"beta":)") +
           b + R"(},
        {"firm_id":"b","omega":0.5,"type":"B","raw_material":false,"beta":)" +
           b + R"(}]}]})";
  };
  std::vector<std::string> warnings;
  CHECK_NOTHROW(parse_scenarios(make("0.5"), &warnings));
  CHECK(warnings.empty());

  warnings.clear();
  CHECK_NOTHROW(parse_scenarios(make("0.5000001"), &warnings));  // sum 1 + 2e-7
  CHECK(warnings.size() == 1);

  CHECK_THROWS_WITH_AS(parse_scenarios(make("0.75")),
                       doctest::Contains("beta sum"), ScenarioError);
}

TEST_CASE("negative residual volume warns but does not error") {
  std::string text = R"({"scenarios":[{
    "drug_id":"toy","p_max":1.0,"rho":0.9,"x":1,"q0":100,"qe":50,
    "firms":[{"firm_id":"a","omega":0.5,"type":"A","raw_material":false}]}]})";
  std::vector<std::string> warnings;
  CHECK_NOTHROW(parse_scenarios(text, &warnings));
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0].find("below rho*q0") != std::string::npos);
}

TEST_CASE("cost sampling respects the per-type intervals") {
  FirmConfig firm;
  firm.firm_id = "s";

  SUBCASE("type A with raw material at the worked p_max") {
    firm.firm_type = FirmType::A;
    firm.has_raw_material = true;
    Rng rng(7);
    for (int i = 0; i < 1000; ++i) {
      double c = sample_cost(firm, 1.08, rng);
      CHECK(c >= 0.90 * 0.05 * 1.08);
      CHECK(c < 0.95 * 0.115 * 1.08);
    }
  }
  SUBCASE("type D without raw material") {
    firm.firm_type = FirmType::D;
    firm.has_raw_material = false;
    Rng rng(8);
    for (int i = 0; i < 1000; ++i) {
      double c = sample_cost(firm, 1.0, rng);
      CHECK(c >= 0.115);
      CHECK(c < 0.30);
    }
  }
  SUBCASE("type B empirical mean matches the uniform closed form") {
    firm.firm_type = FirmType::B;
    firm.has_raw_material = false;
    Rng rng(9);
    double sum = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) sum += sample_cost(firm, 1.0, rng);
    double mean = sum / n;
    CHECK(std::abs(mean - 0.1575) / 0.1575 < 0.01);
  }
}

TEST_CASE("cost sampling interval property over random draws") {
  Rng rng(99);
  Rng meta(100);
  for (int i = 0; i < 1000000; ++i) {
    FirmConfig firm;
    firm.firm_type = static_cast<FirmType>(meta.next_u64() % 4);
    firm.has_raw_material = (meta.next_u64() & 1) != 0;
    double p_max = meta.uniform(0.01, 100.0);
    double c = sample_cost(firm, p_max, rng);
    double lo = firm.firm_type == FirmType::A ? 0.05 : 0.115;
    double hi = firm.firm_type == FirmType::A   ? 0.115
                : firm.firm_type == FirmType::B ? 0.20
                                                : 0.30;
    double lo_eff = lo * p_max * (firm.has_raw_material ? 0.90 : 1.0);
    double hi_eff = hi * p_max * (firm.has_raw_material ? 0.95 : 1.0);
    if (!(c >= lo_eff && c < hi_eff)) {
      CHECK(c >= lo_eff);
      CHECK(c < hi_eff);
      break;
    }
  }
}

TEST_CASE("resolve_costs is deterministic and keeps given costs") {
  auto scenarios = load_scenarios(kExamples);
  DrugScenario s = find_scenario(scenarios, "Adefovir Dipivoxil Tablets");
  s.firms[0].cost.reset();  // force one sample
  CHECK_FALSE(s.costs_resolved());

  DrugScenario a = resolve_costs(s, 1234);
  DrugScenario b = resolve_costs(s, 1234);
  DrugScenario c = resolve_costs(s, 1235);
  CHECK(a.costs_resolved());
  CHECK(a.firms[0].cost.value() == b.firms[0].cost.value());
  CHECK(a.firms[0].cost.value() != c.firms[0].cost.value());
  CHECK(a.firms[1].cost.value() == doctest::Approx(0.0980));  // untouched
  CHECK(s.firms[0].cost.has_value() == false);  // source unmodified
}

TEST_CASE("apply_overrides") {
  auto scenarios = load_scenarios(kExamples);
  const DrugScenario& adefovir =
      find_scenario(scenarios, "Adefovir Dipivoxil Tablets");

  SUBCASE("empty list is the identity") {
    DrugScenario out = apply_overrides(adefovir, {});
    CHECK(out.p_max == adefovir.p_max);
    CHECK(out.rho == adefovir.rho);
    CHECK(out.q0 == adefovir.q0);
    CHECK(out.qe == adefovir.qe);
  }
  SUBCASE("p_max multiplier changes only p_max") {
    DrugScenario out = apply_overrides(adefovir, {{OverrideTarget::PMax, 1.2}});
    CHECK(out.p_max == doctest::Approx(1.296).epsilon(1e-14));
    CHECK(out.rho == adefovir.rho);
    CHECK(out.q0 == adefovir.q0);
    CHECK(out.firms[1].cost.value() == adefovir.firms[1].cost.value());
    CHECK(adefovir.p_max == doctest::Approx(1.08));  // source untouched
  }
  SUBCASE("rho above 1 clamps with a warning") {
    std::vector<std::string> warnings;
    DrugScenario out =
        apply_overrides(adefovir, {{OverrideTarget::Rho, 2.0}}, &warnings);
    CHECK(out.rho == 1.0);
    REQUIRE(warnings.size() >= 1);
    CHECK(warnings[0].find("clamped") != std::string::npos);
  }
  SUBCASE("cost override scales every resolved cost") {
    DrugScenario out = apply_overrides(adefovir, {{OverrideTarget::Cost, 0.5}});
    for (std::size_t i = 0; i < out.firms.size(); ++i)
      CHECK(out.firms[i].cost.value() ==
            doctest::Approx(0.5 * adefovir.firms[i].cost.value()));
  }
  SUBCASE("cost override on unresolved costs is an error") {
    DrugScenario s = adefovir;
    s.firms[0].cost.reset();
    CHECK_THROWS_WITH_AS(apply_overrides(s, {{OverrideTarget::Cost, 0.5}}),
                         doctest::Contains("no resolved cost"), ScenarioError);
  }
  SUBCASE("violations name the offending override") {
    CHECK_THROWS_WITH_AS(apply_overrides(adefovir, {{OverrideTarget::Cost, 20.0}}),
                         doctest::Contains("after override cost x20"),
                         ScenarioError);
  }
  SUBCASE("multiplicative composition") {
    Rng rng(5);
    for (int trial = 0; trial < 200; ++trial) {
      double a = rng.uniform(0.5, 1.5);
      double b = rng.uniform(0.5, 1.5);
      OverrideTarget target =
          static_cast<OverrideTarget>(rng.next_u64() % 5);
      if (target == OverrideTarget::Rho) continue;  // clamping breaks products
      DrugScenario two = apply_overrides(
          apply_overrides(adefovir, {{target, a}}), {{target, b}});
      DrugScenario one = apply_overrides(adefovir, {{target, a * b}});
      auto value_of = [&](const DrugScenario& s) {
        switch (target) {
          case OverrideTarget::PMax: return s.p_max;
          case OverrideTarget::Q0: return s.q0;
          case OverrideTarget::Qe: return s.qe;
          case OverrideTarget::Cost: return s.firms[0].cost.value();
          default: return s.rho;
        }
      };
      CHECK(value_of(two) == doctest::Approx(value_of(one)).epsilon(1e-12));
    }
  }
}

TEST_CASE("serialize/load round trip is structurally equal") {
  auto scenarios = load_scenarios(kExamples);
  std::string text = serialize_scenarios(scenarios);
  auto reloaded = parse_scenarios(text);
  REQUIRE(reloaded.size() == scenarios.size());
  for (std::size_t i = 0; i < scenarios.size(); ++i) {
    const auto& a = scenarios[i];
    const auto& b = reloaded[i];
    CHECK(a.drug_id == b.drug_id);
    CHECK(a.p_max == b.p_max);
    CHECK(a.rho == b.rho);
    CHECK(a.x == b.x);
    CHECK(a.q0 == b.q0);
    CHECK(a.qe == b.qe);
    REQUIRE(a.firms.size() == b.firms.size());
    for (std::size_t j = 0; j < a.firms.size(); ++j) {
      CHECK(a.firms[j].firm_id == b.firms[j].firm_id);
      CHECK(a.firms[j].omega == b.firms[j].omega);
      CHECK(a.firms[j].firm_type == b.firms[j].firm_type);
      CHECK(a.firms[j].has_raw_material == b.firms[j].has_raw_material);
      CHECK(a.firms[j].beta == b.firms[j].beta);
      CHECK(a.firms[j].cost == b.firms[j].cost);
    }
  }
}

TEST_CASE("task spec validation") {
  TaskSpec task;
  task.batch_id = "b";
  task.scenario_ref = "toy";
  task.episodes = 0;
  task.timesteps = 50;
  CHECK_THROWS_AS(task.validate(), ScenarioError);
  task.episodes = 1;
  CHECK_NOTHROW(task.validate());
  task.timesteps = 0;
  CHECK_THROWS_AS(task.validate(), ScenarioError);
  task.timesteps = 1;
  task.overrides.push_back({OverrideTarget::PMax, -1.0});
  CHECK_THROWS_AS(task.validate(), ScenarioError);
}
