#include "procuresim/scenario.hpp"

#include <cmath>
#include <sstream>

#include "json.hpp"
#include "procuresim/util.hpp"

namespace procuresim {

using nlohmann::json;

FirmType firm_type_from_string(const std::string& token) {
  if (token == "A") return FirmType::A;
  if (token == "B") return FirmType::B;
  if (token == "C") return FirmType::C;
  if (token == "D") return FirmType::D;
  throw ScenarioError("unknown firm type '" + token + "' (expected A|B|C|D)");
}

const char* to_string(FirmType t) {
  switch (t) {
    case FirmType::A: return "A";
    case FirmType::B: return "B";
    case FirmType::C: return "C";
    case FirmType::D: return "D";
  }
  return "?";
}

OverrideTarget override_target_from_string(const std::string& token) {
  if (token == "rho") return OverrideTarget::Rho;
  if (token == "p_max") return OverrideTarget::PMax;
  if (token == "q0") return OverrideTarget::Q0;
  if (token == "qe") return OverrideTarget::Qe;
  if (token == "cost") return OverrideTarget::Cost;
  throw ScenarioError("unknown override target '" + token +
                      "' (expected rho|p_max|q0|qe|cost)");
}

const char* to_string(OverrideTarget t) {
  switch (t) {
    case OverrideTarget::Rho: return "rho";
    case OverrideTarget::PMax: return "p_max";
    case OverrideTarget::Q0: return "q0";
    case OverrideTarget::Qe: return "qe";
    case OverrideTarget::Cost: return "cost";
  }
  return "?";
}

Algorithm algorithm_from_string(const std::string& token) {
  if (token == "rule") return Algorithm::Rule;
  if (token == "ippo") return Algorithm::Ippo;
  if (token == "mappo") return Algorithm::Mappo;
  if (token == "llm") return Algorithm::Llm;
  throw ScenarioError("unknown algorithm '" + token +
                      "' (expected rule|ippo|mappo|llm)");
}

const char* to_string(Algorithm a) {
  switch (a) {
    case Algorithm::Rule: return "rule";
    case Algorithm::Ippo: return "ippo";
    case Algorithm::Mappo: return "mappo";
    case Algorithm::Llm: return "llm";
  }
  return "?";
}

bool DrugScenario::costs_resolved() const {
  for (const auto& f : firms)
    if (!f.cost.has_value()) return false;
  return true;
}

void DrugScenario::validate(std::vector<std::string>* warnings) const {
  auto fail = [this](const std::string& what) {
    throw ScenarioError("scenario '" + drug_id + "': " + what);
  };
  const int n = static_cast<int>(firms.size());
  if (n < 1) fail("needs at least one firm");
  if (!(p_max > 0.0)) fail("p_max must be positive");
  if (!(rho > 0.0 && rho <= 1.0)) fail("rho must lie in (0, 1]");
  if (x < 1) fail("x must be at least 1");
  if (x > n) fail("x exceeds firm count");
  if (!(q0 > 0.0)) fail("q0 must be positive");
  if (!(qe > 0.0)) fail("qe must be positive");

  double beta_sum = 0.0;
  for (const auto& f : firms) {
    auto ffail = [&](const std::string& what) {
      fail("firm '" + f.firm_id + "': " + what);
    };
    if (f.omega < 0.0) ffail("omega must be nonnegative");
    if (f.beta < 0.0 || f.beta > 1.0) ffail("beta must lie in [0, 1]");
    if (f.cost.has_value()) {
      if (!(*f.cost > 0.0)) ffail("cost must be positive");
      if (!(*f.cost < p_max)) ffail("cost must be below p_max");
    }
    beta_sum += f.beta;
  }
  if (beta_sum > 1.0 + 1e-6) {
    std::ostringstream os;
    os << "beta sum " << beta_sum << " exceeds 1";
    fail(os.str());
  }
  if (warnings != nullptr) {
    if (beta_sum > 1.0 + 1e-9) {
      std::ostringstream os;
      os << "scenario '" << drug_id << "': beta sum " << beta_sum
         << " slightly above 1";
      warnings->push_back(os.str());
    }
    if (qe < rho * q0) {
      std::ostringstream os;
      os << "scenario '" << drug_id << "': qe " << qe << " below rho*q0 "
         << rho * q0 << "; residual volume is negative";
      warnings->push_back(os.str());
    }
  }
}

void TaskSpec::validate() const {
  if (episodes < 1)
    throw ScenarioError("task '" + batch_id + "/" + scenario_ref +
                        "': episodes must be at least 1");
  if (timesteps < 1)
    throw ScenarioError("task '" + batch_id + "/" + scenario_ref +
                        "': timesteps must be at least 1");
  for (const auto& ov : overrides)
    if (!(ov.multiplier > 0.0))
      throw ScenarioError("task '" + batch_id + "/" + scenario_ref +
                          "': override multiplier must be positive");
}

namespace {

double require_number(const json& j, const std::string& key,
                      const std::string& ctx) {
  if (!j.contains(key))
    throw ScenarioError(ctx + ": missing field '" + key + "'");
  if (!j[key].is_number())
    throw ScenarioError(ctx + ": field '" + key + "' must be a number");
  return j[key].get<double>();
}

DrugScenario parse_one(const json& js, std::size_t index,
                       std::vector<std::string>* warnings) {
  std::string ctx = "scenario #" + std::to_string(index);
  DrugScenario s;
  if (!js.contains("drug_id") || !js["drug_id"].is_string())
    throw ScenarioError(ctx + ": missing string field 'drug_id'");
  s.drug_id = js["drug_id"].get<std::string>();
  ctx = "scenario '" + s.drug_id + "'";

  s.p_max = require_number(js, "p_max", ctx);
  s.rho = require_number(js, "rho", ctx);
  double xv = require_number(js, "x", ctx);
  if (xv != std::floor(xv))
    throw ScenarioError(ctx + ": field 'x' must be an integer");
  s.x = static_cast<int>(xv);
  s.q0 = require_number(js, "q0", ctx);
  s.qe = require_number(js, "qe", ctx);

  if (!js.contains("firms") || !js["firms"].is_array() || js["firms"].empty())
    throw ScenarioError(ctx + ": 'firms' must be a non-empty array");
  const auto& firms = js["firms"];
  const double default_beta = 1.0 / static_cast<double>(firms.size());
  for (std::size_t i = 0; i < firms.size(); ++i) {
    const auto& jf = firms[i];
    std::string fctx = ctx + " firm #" + std::to_string(i);
    FirmConfig f;
    if (!jf.contains("firm_id") || !jf["firm_id"].is_string())
      throw ScenarioError(fctx + ": missing string field 'firm_id'");
    f.firm_id = jf["firm_id"].get<std::string>();
    fctx = ctx + " firm '" + f.firm_id + "'";
    f.omega = require_number(jf, "omega", fctx);
    if (!jf.contains("type") || !jf["type"].is_string())
      throw ScenarioError(fctx + ": missing string field 'type'");
    try {
      f.firm_type = firm_type_from_string(jf["type"].get<std::string>());
    } catch (const ScenarioError& e) {
      throw ScenarioError(fctx + ": " + e.what());
    }
    if (!jf.contains("raw_material") || !jf["raw_material"].is_boolean())
      throw ScenarioError(fctx + ": missing boolean field 'raw_material'");
    f.has_raw_material = jf["raw_material"].get<bool>();
    f.beta = jf.contains("beta") ? require_number(jf, "beta", fctx) : default_beta;
    if (jf.contains("cost")) f.cost = require_number(jf, "cost", fctx);
    s.firms.push_back(std::move(f));
  }
  s.validate(warnings);
  return s;
}

}  // namespace

std::vector<DrugScenario> parse_scenarios(const std::string& text,
                                          std::vector<std::string>* warnings) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ScenarioError(std::string("scenario file parse error: ") + e.what());
  }
  if (!root.contains("scenarios") || !root["scenarios"].is_array())
    throw ScenarioError("scenario file: top-level 'scenarios' array missing");
  std::vector<DrugScenario> out;
  std::size_t i = 0;
  for (const auto& js : root["scenarios"]) out.push_back(parse_one(js, i++, warnings));
  return out;
}

std::vector<DrugScenario> load_scenarios(const std::string& path,
                                         std::vector<std::string>* warnings) {
  return parse_scenarios(read_text_file(path), warnings);
}

std::string serialize_scenarios(const std::vector<DrugScenario>& scenarios) {
  json root;
  root["scenarios"] = json::array();
  for (const auto& s : scenarios) {
    json js;
    js["drug_id"] = s.drug_id;
    js["p_max"] = s.p_max;
    js["rho"] = s.rho;
    js["x"] = s.x;
    js["q0"] = s.q0;
    js["qe"] = s.qe;
    js["firms"] = json::array();
    for (const auto& f : s.firms) {
      json jf;
      jf["firm_id"] = f.firm_id;
      jf["omega"] = f.omega;
      jf["type"] = to_string(f.firm_type);
      jf["raw_material"] = f.has_raw_material;
      jf["beta"] = f.beta;
      if (f.cost.has_value()) jf["cost"] = *f.cost;
      js["firms"].push_back(std::move(jf));
    }
    root["scenarios"].push_back(std::move(js));
  }
  return root.dump(2) + "\n";
}

double sample_cost(const FirmConfig& firm, double p_max, Rng& rng) {
  if (firm.cost.has_value())
    throw ScenarioError("firm '" + firm.firm_id + "' already has a cost");
  if (!(p_max > 0.0)) throw ScenarioError("sample_cost requires p_max > 0");
  double lo = 0.115, hi = 0.30;
  switch (firm.firm_type) {
    case FirmType::A: lo = 0.05; hi = 0.115; break;
    case FirmType::B: lo = 0.115; hi = 0.20; break;
    case FirmType::C:
    case FirmType::D: lo = 0.115; hi = 0.30; break;
  }
  double cost = rng.uniform(lo * p_max, hi * p_max);
  if (firm.has_raw_material) cost *= rng.uniform(0.90, 0.95);
  return cost;
}

DrugScenario resolve_costs(const DrugScenario& scenario, std::uint64_t seed) {
  DrugScenario out = scenario;
  Rng rng(seed);
  for (auto& f : out.firms) {
    if (!f.cost.has_value()) f.cost = sample_cost(f, out.p_max, rng);
  }
  return out;
}

DrugScenario apply_overrides(const DrugScenario& scenario,
                             const std::vector<SensitivityOverride>& overrides,
                             std::vector<std::string>* warnings) {
  DrugScenario out = scenario;
  for (const auto& ov : overrides) {
    std::ostringstream label;
    label << to_string(ov.target) << " x" << ov.multiplier;
    if (!(ov.multiplier > 0.0))
      throw ScenarioError("override " + label.str() +
                          ": multiplier must be positive");
    switch (ov.target) {
      case OverrideTarget::Rho:
        out.rho *= ov.multiplier;
        if (out.rho > 1.0) {
          if (warnings != nullptr)
            warnings->push_back("override " + label.str() +
                                ": rho clamped to 1.0");
          out.rho = 1.0;
        }
        break;
      case OverrideTarget::PMax:
        out.p_max *= ov.multiplier;
        break;
      case OverrideTarget::Q0:
        out.q0 *= ov.multiplier;
        break;
      case OverrideTarget::Qe:
        out.qe *= ov.multiplier;
        break;
      case OverrideTarget::Cost:
        for (auto& f : out.firms) {
          if (!f.cost.has_value())
            throw ScenarioError("override " + label.str() + ": firm '" +
                                f.firm_id + "' has no resolved cost");
          *f.cost *= ov.multiplier;
        }
        break;
    }
    try {
      out.validate(warnings);
    } catch (const ScenarioError& e) {
      throw ScenarioError(std::string(e.what()) + " (after override " +
                          label.str() + ")");
    }
  }
  return out;
}

}  // namespace procuresim
