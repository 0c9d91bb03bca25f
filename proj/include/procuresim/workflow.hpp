#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "procuresim/agents.hpp"
#include "procuresim/llm.hpp"
#include "procuresim/market_env.hpp"
#include "procuresim/nn.hpp"
#include "procuresim/scenario.hpp"

namespace procuresim {

struct TrainingStat {
  int episode = 0;
  double mean_reward = 0.0;  // mean over firms of summed per-step rewards
  bool has_update = false;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double entropy_coef = 0.0;
  double mean_epochs = 0.0;
};

struct EpisodeRecord {
  int episode = 0;
  double mean_total_reward = 0.0;
  std::vector<double> final_prices;
  std::vector<std::uint8_t> final_winners;
  std::vector<double> final_profits;
};

struct TrajectoryRow {
  int episode = 0;
  int t = 0;
  std::string firm_id;
  double action = 0.0;
  double price = 0.0;
  int won = 0;
  double profit = 0.0;
  double reward = 0.0;
};

struct FinalStrategyRow {
  std::string firm_id;
  double price = 0.0;  // mean of evaluation-episode final-step prices
  int won = 0;
  double profit = 0.0;
  std::vector<double> eval_prices;  // per-evaluation-episode detail
};

struct RunResult {
  TaskSpec task;
  std::string setting;  // label derived from the overrides, "base" if none
  DrugScenario scenario;  // resolved costs and applied overrides
  std::vector<TrainingStat> training_stats;
  std::vector<EpisodeRecord> eval_records;
  std::vector<FinalStrategyRow> final_strategy;
  std::vector<TrajectoryRow> trajectory;  // only when recording is enabled
  std::vector<llm::DialogueRecord> transcripts;
  std::string checkpoints;  // JSON blob, empty unless requested and learnable
  double wall_seconds = 0.0;
  std::uint64_t cost_seed = 0;
  std::string kernel_backend;
};

struct RunOptions {
  nn::PpoConfig ppo;
  llm::TransportConfig transport;
  bool record_trajectory = false;
  bool stochastic_eval = false;
  int eval_episodes = 5;
  std::uint64_t cost_seed = 0;
  bool write_checkpoints = false;
};

// One full pass of the per-task loop: resolve the scenario, train over
// episodes x timesteps with post-episode agent updates, then run the
// evaluation episodes and aggregate the final strategy.
RunResult run_task(const TaskSpec& task, const DrugScenario& base_scenario,
                   const RunOptions& options);

// T simultaneous-move steps with per-step outcome delivery to the team.
EpisodeRecord run_episode(MarketEnv& env, AgentTeam& team, int episode,
                          bool training, bool explore,
                          std::vector<TrajectoryRow>* trajectory_sink);

struct RunConfig {
  std::string scenario_path;
  std::string out_dir = "out";
  std::string batch_id = "batch";
  std::vector<std::string> drugs;  // empty = every scenario in the file
  std::vector<Algorithm> algorithms;
  std::vector<std::vector<SensitivityOverride>> settings;  // empty = base only
  int episodes = 1000;
  int llm_episodes = 1;
  int timesteps = 50;
  std::uint64_t base_seed = 42;
  int workers = 1;
  RunOptions options;
};

// Deterministic task seed from the task coordinates.
std::uint64_t derive_task_seed(std::uint64_t base_seed,
                               const std::string& batch_id,
                               const std::string& drug_id, Algorithm algorithm,
                               const std::string& setting_label);

// Cost draws are scenario data: the seed depends only on (base, batch, drug)
// so every algorithm and sensitivity setting faces the same sampled firms.
std::uint64_t derive_cost_seed(std::uint64_t base_seed,
                               const std::string& batch_id,
                               const std::string& drug_id);

std::string setting_label(const std::vector<SensitivityOverride>& overrides);

// Cartesian product of scenarios x algorithms x settings with derived seeds.
std::vector<TaskSpec> build_task_set(const RunConfig& config,
                                     const std::vector<DrugScenario>& scenarios);

// out/<batch>/<drug>/<algorithm>/<setting>
std::string task_output_dir(const std::string& out_root, const TaskSpec& task,
                            const std::string& setting);

// Writes training_stats.csv, final_strategy.csv, run_meta.json and, when
// present, trajectory.csv and transcripts.json.
void export_run(const RunResult& result, const std::string& out_root);

// --- sensitivity sweeps ---

struct SweepPoint {
  double multiplier = 1.0;
  double mean_price = 0.0;
  double price_ci_lo = 0.0;
  double price_ci_hi = 0.0;
  double mean_profit = 0.0;
  double profit_ci_lo = 0.0;
  double profit_ci_hi = 0.0;
};

// One run_task per (multiplier, seed); per-point mean and 95% CI across
// seeds of the firm-averaged final price and profit. Multipliers must be
// sorted ascending and num_seeds must be at least 2.
std::vector<SweepPoint> sweep(const DrugScenario& base_scenario,
                              Algorithm algorithm, OverrideTarget target,
                              const std::vector<double>& multipliers,
                              int num_seeds, const TaskSpec& template_task,
                              const RunOptions& options);

std::string sweep_to_csv(const std::vector<SweepPoint>& points);

}  // namespace procuresim
