#include "procuresim/workflow.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <sstream>

#include "json.hpp"
#include "procuresim/kernels.hpp"
#include "procuresim/metrics.hpp"
#include "procuresim/util.hpp"

namespace procuresim {

using nlohmann::json;

std::uint64_t derive_task_seed(std::uint64_t base_seed,
                               const std::string& batch_id,
                               const std::string& drug_id, Algorithm algorithm,
                               const std::string& setting) {
  std::uint64_t h = mix_hash(base_seed, batch_id);
  h = mix_hash(h, drug_id);
  h = mix_hash(h, to_string(algorithm));
  h = mix_hash(h, setting);
  return h;
}

std::uint64_t derive_cost_seed(std::uint64_t base_seed,
                               const std::string& batch_id,
                               const std::string& drug_id) {
  std::uint64_t h = mix_hash(base_seed, std::string("costs"));
  h = mix_hash(h, batch_id);
  h = mix_hash(h, drug_id);
  return h;
}

std::string setting_label(const std::vector<SensitivityOverride>& overrides) {
  if (overrides.empty()) return "base";
  std::ostringstream os;
  for (std::size_t i = 0; i < overrides.size(); ++i) {
    if (i > 0) os << "_";
    os << to_string(overrides[i].target) << "_x" << fmt_num(overrides[i].multiplier);
  }
  return os.str();
}

std::vector<TaskSpec> build_task_set(const RunConfig& config,
                                     const std::vector<DrugScenario>& scenarios) {
  std::vector<const DrugScenario*> selected;
  if (config.drugs.empty()) {
    for (const auto& s : scenarios) selected.push_back(&s);
  } else {
    for (const auto& name : config.drugs) {
      const DrugScenario* found = nullptr;
      for (const auto& s : scenarios)
        if (s.drug_id == name) found = &s;
      if (found == nullptr)
        throw ScenarioError("unknown scenario reference '" + name + "'");
      selected.push_back(found);
    }
  }
  if (config.algorithms.empty())
    throw ScenarioError("task set: no algorithms requested");

  std::vector<std::vector<SensitivityOverride>> settings = config.settings;
  if (settings.empty()) settings.push_back({});

  std::vector<TaskSpec> tasks;
  for (const DrugScenario* s : selected) {
    for (Algorithm algo : config.algorithms) {
      for (const auto& overrides : settings) {
        TaskSpec task;
        task.batch_id = config.batch_id;
        task.scenario_ref = s->drug_id;
        task.algorithm = algo;
        task.overrides = overrides;
        task.episodes =
            algo == Algorithm::Llm ? config.llm_episodes : config.episodes;
        task.timesteps = config.timesteps;
        task.seed = derive_task_seed(config.base_seed, config.batch_id,
                                     s->drug_id, algo, setting_label(overrides));
        task.validate();
        tasks.push_back(std::move(task));
      }
    }
  }
  return tasks;
}

EpisodeRecord run_episode(MarketEnv& env, AgentTeam& team, int episode,
                          bool training, bool explore,
                          std::vector<TrajectoryRow>* trajectory_sink) {
  MarketEnv::Observations obs = env.reset();
  team.begin_episode(episode, training);
  const int n = env.num_firms();
  std::vector<double> totals(n, 0.0);

  EpisodeRecord rec;
  rec.episode = episode;
  while (!env.done()) {
    std::vector<double> actions = team.act(obs, explore);
    StepOutcome outcome = env.step(actions);
    team.observe(outcome, actions);
    for (int i = 0; i < n; ++i) totals[i] += outcome.rewards[i];
    if (trajectory_sink != nullptr) {
      for (int i = 0; i < n; ++i) {
        trajectory_sink->push_back(TrajectoryRow{
            episode, outcome.t, env.scenario().firms[i].firm_id, actions[i],
            outcome.prices[i], outcome.winners[i] != 0 ? 1 : 0,
            outcome.profits[i], outcome.rewards[i]});
      }
    }
    if (outcome.done) {
      rec.final_prices = outcome.prices;
      rec.final_winners = outcome.winners;
      rec.final_profits = outcome.profits;
    }
    obs.raw = outcome.next_obs_raw;
    obs.norm = outcome.next_obs_norm;
  }
  double sum = 0.0;
  for (double v : totals) sum += v;
  rec.mean_total_reward = sum / static_cast<double>(n);
  return rec;
}

RunResult run_task(const TaskSpec& task, const DrugScenario& base_scenario,
                   const RunOptions& options) {
  auto start = std::chrono::steady_clock::now();
  task.validate();

  // Override order: structural targets first, then cost draws (bounds follow
  // any p_max change), then cost multipliers over the resolved values.
  std::vector<SensitivityOverride> structural, cost_overrides;
  for (const auto& ov : task.overrides) {
    (ov.target == OverrideTarget::Cost ? cost_overrides : structural).push_back(ov);
  }
  std::vector<std::string> warnings;
  DrugScenario scenario = apply_overrides(base_scenario, structural, &warnings);
  scenario = resolve_costs(scenario, options.cost_seed);
  scenario = apply_overrides(scenario, cost_overrides, &warnings);
  scenario.validate(&warnings);

  RunResult result;
  result.task = task;
  result.setting = setting_label(task.overrides);
  result.scenario = scenario;
  result.cost_seed = options.cost_seed;
  result.kernel_backend = kernels::backend_name();

  MarketEnv env(scenario, task.timesteps);
  std::mutex transcript_mu;
  std::unique_ptr<llm::ChatTransport> transport;
  if (task.algorithm == Algorithm::Llm)
    transport = llm::make_transport(options.transport);
  std::unique_ptr<AgentTeam> team =
      make_team(task.algorithm, scenario, task, options.ppo, transport.get(),
                options.transport, &result.transcripts, &transcript_mu);

  std::vector<TrajectoryRow>* sink =
      options.record_trajectory ? &result.trajectory : nullptr;

  for (int e = 1; e <= task.episodes; ++e) {
    EpisodeRecord rec = run_episode(env, *team, e, /*training=*/true,
                                    /*explore=*/true, sink);
    double progress = task.episodes > 1
                          ? static_cast<double>(e - 1) /
                                static_cast<double>(task.episodes - 1)
                          : 0.0;
    std::vector<nn::UpdateStats> stats = team->end_episode_update(progress);

    TrainingStat row;
    row.episode = e;
    row.mean_reward = rec.mean_total_reward;
    if (!stats.empty()) {
      row.has_update = true;
      for (const auto& s : stats) {
        row.policy_loss += s.policy_loss;
        row.value_loss += s.value_loss;
        row.entropy += s.entropy;
        row.approx_kl += s.approx_kl;
        row.entropy_coef = s.entropy_coef;
        row.mean_epochs += s.epochs_run;
      }
      double inv = 1.0 / static_cast<double>(stats.size());
      row.policy_loss *= inv;
      row.value_loss *= inv;
      row.entropy *= inv;
      row.approx_kl *= inv;
      row.mean_epochs *= inv;
    }
    result.training_stats.push_back(row);
  }

  // evaluation episodes never mutate agent parameters
  const int n = env.num_firms();
  std::vector<double> price_sums(n, 0.0);
  for (int k = 1; k <= options.eval_episodes; ++k) {
    EpisodeRecord rec =
        run_episode(env, *team, k, /*training=*/false,
                    /*explore=*/options.stochastic_eval, nullptr);
    for (int i = 0; i < n; ++i) price_sums[i] += rec.final_prices[i];
    result.eval_records.push_back(std::move(rec));
  }

  std::vector<double> mean_prices(n);
  std::vector<double> costs(n);
  for (int i = 0; i < n; ++i) {
    mean_prices[i] = price_sums[i] / static_cast<double>(options.eval_episodes);
    costs[i] = scenario.firms[i].cost.value();
  }
  ClearingResult clearing = clear_market(mean_prices, scenario.x, costs);
  for (int i = 0; i < n; ++i) {
    FinalStrategyRow row;
    row.firm_id = scenario.firms[i].firm_id;
    row.price = mean_prices[i];
    row.won = clearing.winners[i] != 0 ? 1 : 0;
    row.profit =
        profit(mean_prices[i], scenario.firms[i], scenario, row.won != 0);
    for (const auto& rec : result.eval_records)
      row.eval_prices.push_back(rec.final_prices[i]);
    result.final_strategy.push_back(std::move(row));
  }

  if (options.write_checkpoints) {
    std::vector<std::string> firm_ids;
    for (const auto& f : scenario.firms) firm_ids.push_back(f.firm_id);
    result.checkpoints = team->checkpoint_json(firm_ids);
  }

  // stable transcript order regardless of per-step completion order
  std::sort(result.transcripts.begin(), result.transcripts.end(),
            [](const llm::DialogueRecord& a, const llm::DialogueRecord& b) {
              if (a.episode != b.episode) return a.episode < b.episode;
              if (a.step != b.step) return a.step < b.step;
              if (a.firm_id != b.firm_id) return a.firm_id < b.firm_id;
              return a.attempt < b.attempt;
            });

  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  return result;
}

std::string task_output_dir(const std::string& out_root, const TaskSpec& task,
                            const std::string& setting) {
  std::filesystem::path p(out_root);
  p /= sanitize_path_component(task.batch_id);
  p /= sanitize_path_component(task.scenario_ref);
  p /= to_string(task.algorithm);
  p /= sanitize_path_component(setting);
  return p.string();
}

namespace {

std::string training_stats_csv(const RunResult& r) {
  std::ostringstream os;
  os << "episode,mean_reward,policy_loss,value_loss,entropy,approx_kl,"
        "entropy_coef,epochs\n";
  for (const auto& row : r.training_stats) {
    os << row.episode << "," << fmt_num(row.mean_reward) << ",";
    if (row.has_update) {
      os << fmt_num(row.policy_loss) << "," << fmt_num(row.value_loss) << ","
         << fmt_num(row.entropy) << "," << fmt_num(row.approx_kl) << ","
         << fmt_num(row.entropy_coef) << "," << fmt_num(row.mean_epochs);
    } else {
      os << ",,,,,";
    }
    os << "\n";
  }
  return os.str();
}

std::string final_strategy_csv(const RunResult& r) {
  std::ostringstream os;
  os << "firm_id,price,won,profit";
  if (!r.final_strategy.empty()) {
    for (std::size_t k = 0; k < r.final_strategy[0].eval_prices.size(); ++k)
      os << ",eval_price_" << (k + 1);
  }
  os << "\n";
  for (const auto& row : r.final_strategy) {
    os << csv_escape(row.firm_id) << "," << fmt_num(row.price) << "," << row.won
       << "," << fmt_num(row.profit);
    for (double p : row.eval_prices) os << "," << fmt_num(p);
    os << "\n";
  }
  return os.str();
}

std::string trajectory_csv(const RunResult& r) {
  std::ostringstream os;
  os << "episode,t,firm_id,action,price,won,profit,reward\n";
  for (const auto& row : r.trajectory) {
    os << row.episode << "," << row.t << "," << csv_escape(row.firm_id) << ","
       << fmt_num(row.action) << "," << fmt_num(row.price) << "," << row.won
       << "," << fmt_num(row.profit) << "," << fmt_num(row.reward) << "\n";
  }
  return os.str();
}

std::string run_meta_json(const RunResult& r) {
  json j;
  j["engine_version"] = "0.1.0";
  j["batch_id"] = r.task.batch_id;
  j["drug_id"] = r.task.scenario_ref;
  j["algorithm"] = to_string(r.task.algorithm);
  j["setting"] = r.setting;
  j["episodes"] = r.task.episodes;
  j["timesteps"] = r.task.timesteps;
  j["seed"] = r.task.seed;
  j["cost_seed"] = r.cost_seed;
  j["kernel_backend"] = r.kernel_backend;
  j["wall_seconds"] = r.wall_seconds;
  j["overrides"] = json::array();
  for (const auto& ov : r.task.overrides)
    j["overrides"].push_back(
        json{{"target", to_string(ov.target)}, {"multiplier", ov.multiplier}});
  j["resolved_costs"] = json::object();
  for (const auto& f : r.scenario.firms)
    j["resolved_costs"][f.firm_id] = f.cost.value();
  return j.dump(2) + "\n";
}

}  // namespace

void export_run(const RunResult& result, const std::string& out_root) {
  std::string dir = task_output_dir(out_root, result.task, result.setting);
  std::filesystem::create_directories(dir);
  write_text_file(dir + "/training_stats.csv", training_stats_csv(result));
  write_text_file(dir + "/final_strategy.csv", final_strategy_csv(result));
  write_text_file(dir + "/run_meta.json", run_meta_json(result));
  if (!result.trajectory.empty())
    write_text_file(dir + "/trajectory.csv", trajectory_csv(result));
  if (result.task.algorithm == Algorithm::Llm)
    write_text_file(dir + "/transcripts.json",
                    llm::transcripts_to_json(result.transcripts));
  if (!result.checkpoints.empty())
    write_text_file(dir + "/checkpoints.json", result.checkpoints);
}

std::vector<SweepPoint> sweep(const DrugScenario& base_scenario,
                              Algorithm algorithm, OverrideTarget target,
                              const std::vector<double>& multipliers,
                              int num_seeds, const TaskSpec& template_task,
                              const RunOptions& options) {
  if (multipliers.empty()) throw ScenarioError("sweep: no multipliers given");
  if (!std::is_sorted(multipliers.begin(), multipliers.end()))
    throw ScenarioError("sweep: multipliers must be sorted ascending");
  if (num_seeds < 2) throw ScenarioError("sweep: needs at least 2 seeds for CIs");

  std::vector<SweepPoint> points;
  for (double mult : multipliers) {
    std::vector<double> prices, profits;
    for (int k = 0; k < num_seeds; ++k) {
      TaskSpec task = template_task;
      task.algorithm = algorithm;
      task.scenario_ref = base_scenario.drug_id;
      task.overrides.push_back({target, mult});
      task.seed = mix_hash(template_task.seed, static_cast<std::uint64_t>(k));
      RunResult r = run_task(task, base_scenario, options);
      double price_sum = 0.0, profit_sum = 0.0;
      for (const auto& row : r.final_strategy) {
        price_sum += row.price;
        profit_sum += row.profit;
      }
      prices.push_back(price_sum / static_cast<double>(r.final_strategy.size()));
      profits.push_back(profit_sum / static_cast<double>(r.final_strategy.size()));
    }
    SweepPoint p;
    p.multiplier = mult;
    for (double v : prices) p.mean_price += v;
    p.mean_price /= static_cast<double>(prices.size());
    for (double v : profits) p.mean_profit += v;
    p.mean_profit /= static_cast<double>(profits.size());
    double price_hw = ci95_halfwidth(prices);
    double profit_hw = ci95_halfwidth(profits);
    p.price_ci_lo = p.mean_price - price_hw;
    p.price_ci_hi = p.mean_price + price_hw;
    p.profit_ci_lo = p.mean_profit - profit_hw;
    p.profit_ci_hi = p.mean_profit + profit_hw;
    points.push_back(p);
  }
  return points;
}

std::string sweep_to_csv(const std::vector<SweepPoint>& points) {
  std::ostringstream os;
  os << "multiplier,mean_price,price_ci_lo,price_ci_hi,mean_profit,"
        "profit_ci_lo,profit_ci_hi\n";
  for (const auto& p : points) {
    os << fmt_num(p.multiplier) << "," << fmt_num(p.mean_price) << ","
       << fmt_num(p.price_ci_lo) << "," << fmt_num(p.price_ci_hi) << ","
       << fmt_num(p.mean_profit) << "," << fmt_num(p.profit_ci_lo) << ","
       << fmt_num(p.profit_ci_hi) << "\n";
  }
  return os.str();
}

}  // namespace procuresim
