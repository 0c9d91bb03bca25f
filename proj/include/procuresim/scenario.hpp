#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "procuresim/rng.hpp"

namespace procuresim {

class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A=originator, B=large generic, C=medium generic, D=small generic
enum class FirmType { A, B, C, D };

FirmType firm_type_from_string(const std::string& token);
const char* to_string(FirmType t);

struct FirmConfig {
  std::string firm_id;
  double omega = 0.0;        // price-linkage coefficient, dimensionless
  FirmType firm_type = FirmType::D;
  bool has_raw_material = false;
  double beta = 0.0;         // residual-market share, resolved at load
  std::optional<double> cost;  // unit cost, CNY; absent until sampled
};

// One procurement lot. Volumes q0/qe are in 1e4 dosage units, prices in
// CNY per unit, matching the scenario file schema.
struct DrugScenario {
  std::string drug_id;
  double p_max = 0.0;
  double rho = 0.0;  // agreed procurement ratio, (0, 1]
  int x = 0;         // number of winning bidders
  double q0 = 0.0;
  double qe = 0.0;
  std::vector<FirmConfig> firms;

  bool costs_resolved() const;
  // Throws ScenarioError on invariant violations; appends soft findings to
  // warnings when given (qe below rho*q0, beta sum slightly above 1, ...).
  void validate(std::vector<std::string>* warnings = nullptr) const;
};

enum class OverrideTarget { Rho, PMax, Q0, Qe, Cost };

OverrideTarget override_target_from_string(const std::string& token);
const char* to_string(OverrideTarget t);

struct SensitivityOverride {
  OverrideTarget target = OverrideTarget::PMax;
  double multiplier = 1.0;
};

enum class Algorithm { Rule, Ippo, Mappo, Llm };

Algorithm algorithm_from_string(const std::string& token);
const char* to_string(Algorithm a);

struct TaskSpec {
  std::string batch_id;
  std::string scenario_ref;  // drug_id
  Algorithm algorithm = Algorithm::Rule;
  std::vector<SensitivityOverride> overrides;
  int episodes = 1;
  int timesteps = 1;
  std::uint64_t seed = 0;

  void validate() const;  // throws ScenarioError
};

// Loads and validates a scenario file (see README for the schema). Firm
// order is preserved; betas default to 1/N when omitted.
std::vector<DrugScenario> load_scenarios(const std::string& path,
                                         std::vector<std::string>* warnings = nullptr);
std::vector<DrugScenario> parse_scenarios(const std::string& text,
                                          std::vector<std::string>* warnings = nullptr);
std::string serialize_scenarios(const std::vector<DrugScenario>& scenarios);

// Baseline cost draw by firm type, scaled by p_max:
//   A in [0.05, 0.115) * p_max, B in [0.115, 0.20) * p_max,
//   C/D in [0.115, 0.30) * p_max; raw-material firms get a further factor
//   drawn from [0.90, 0.95).
double sample_cost(const FirmConfig& firm, double p_max, Rng& rng);

// Copy with every absent cost sampled from `seed`; present costs are kept
// as-is so file-provided worked examples stay reproducible.
DrugScenario resolve_costs(const DrugScenario& scenario, std::uint64_t seed);

// Returns a modified copy; the source is untouched. A rho result above 1 is
// clamped to 1.0 with a warning. The cost target requires resolved costs.
// Invariants are re-checked after each override and violations name it.
DrugScenario apply_overrides(const DrugScenario& scenario,
                             const std::vector<SensitivityOverride>& overrides,
                             std::vector<std::string>* warnings = nullptr);

}  // namespace procuresim
