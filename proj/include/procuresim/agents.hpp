#pragma once

#include <memory>
#include <mutex>
#include <optional>
#include <vector>

#include "procuresim/llm.hpp"
#include "procuresim/market_env.hpp"
#include "procuresim/nn.hpp"
#include "procuresim/scenario.hpp"

namespace procuresim {

// Per-firm view of a StepOutcome, delivered to each agent after clearing.
struct StepSlice {
  int t = 0;
  double action = 0.0;
  double price = 0.0;
  bool won = false;
  double profit = 0.0;
  double reward = 0.0;
  int rank = 0;  // 1-based ascending price rank
  int n_firms = 0;
};

// One bidding agent for one firm. act() must return a NaN-free value in
// [-1, 1] and be deterministic when explore is false.
class AgentPolicy {
 public:
  virtual ~AgentPolicy() = default;
  virtual void begin_episode(int episode, bool training) = 0;
  virtual double act(const Obs& raw, const Obs& norm, bool explore) = 0;
  virtual void observe_outcome(const StepSlice& slice) = 0;
  // Called once per training episode; progress in [0, 1] drives schedules.
  virtual std::optional<nn::UpdateStats> end_episode_update(double progress) = 0;
  virtual std::string checkpoint_json() const { return ""; }
};

struct RuleAgentState {
  double base_margin = 0.086;
  double current_margin = 0.086;
  double adjustment_step = 0.02;
};

// Target-margin heuristic: price at cost*(1+margin), easing the margin down
// after losses and partially back up after wins.
class RuleAgent : public AgentPolicy {
 public:
  explicit RuleAgent(FirmType type);

  static double base_margin_for(FirmType type);

  void begin_episode(int episode, bool training) override;
  double act(const Obs& raw, const Obs& norm, bool explore) override;
  void observe_outcome(const StepSlice& slice) override;
  std::optional<nn::UpdateStats> end_episode_update(double progress) override;

  const RuleAgentState& state() const { return state_; }

 private:
  RuleAgentState state_;
  bool training_ = true;
};

// Independent PPO: each firm owns its actor, critic and optimizers and
// learns from its local trajectory only.
class IppoAgent : public AgentPolicy {
 public:
  // reward_scale converts env rewards into the learner's internal units
  // (profits in raw 1e4 CNY are numerically hostile at the pinned lr)
  IppoAgent(const nn::PpoConfig& config, std::uint64_t seed,
            double reward_scale = 1.0);

  void begin_episode(int episode, bool training) override;
  double act(const Obs& raw, const Obs& norm, bool explore) override;
  void observe_outcome(const StepSlice& slice) override;
  std::optional<nn::UpdateStats> end_episode_update(double progress) override;
  std::string checkpoint_json() const override;

  nn::GaussianPolicy& policy() { return policy_; }
  const nn::GaussianPolicy& policy() const { return policy_; }
  nn::Mlp& critic() { return critic_; }
  nn::Trajectory& trajectory() { return traj_; }

 private:
  nn::PpoConfig config_;
  nn::GaussianPolicy policy_;
  nn::Mlp critic_;
  nn::PolicyOptimizer policy_opt_;
  nn::Adam critic_opt_;
  nn::Trajectory traj_;
  Rng rng_;
  double inv_reward_scale_ = 1.0;
  bool training_ = true;
};

// LLM-driven bidder: perception/memory/decision/reflection loop over a chat
// transport, with clamped bids and raw bids retained for constraint stats.
class LlmAgent : public AgentPolicy {
 public:
  LlmAgent(FirmConfig firm, DrugScenario scenario, int horizon,
           llm::ChatTransport* transport, const llm::TransportConfig& config,
           std::vector<llm::DialogueRecord>* transcript, std::mutex* transcript_mu);

  void begin_episode(int episode, bool training) override;
  double act(const Obs& raw, const Obs& norm, bool explore) override;
  void observe_outcome(const StepSlice& slice) override;
  std::optional<nn::UpdateStats> end_episode_update(double progress) override;

  const llm::LlmMemory& memory() const { return memory_; }

 private:
  FirmConfig firm_;
  DrugScenario scenario_;
  int horizon_;
  llm::ChatTransport* transport_;
  llm::TransportConfig config_;
  std::vector<llm::DialogueRecord>* transcript_;
  std::mutex* transcript_mu_;

  llm::LlmMemory memory_;
  int episode_ = 1;
  int step_ = 0;
  double cumulative_profit_ = 0.0;
  int wins_ = 0;
  bool training_ = true;
  std::optional<double> prev_bid_;
  std::string last_reflection_;

  void append_record(llm::DialogueRecord record);
};

// Joint controller for one task: acts for all firms each step and runs the
// end-of-episode updates.
class AgentTeam {
 public:
  virtual ~AgentTeam() = default;
  virtual int num_firms() const = 0;
  virtual void begin_episode(int episode, bool training) = 0;
  virtual std::vector<double> act(const MarketEnv::Observations& obs,
                                  bool explore) = 0;
  virtual void observe(const StepOutcome& outcome,
                       const std::vector<double>& actions) = 0;
  virtual std::vector<nn::UpdateStats> end_episode_update(double progress) = 0;
  // JSON checkpoint of the learned parameters; empty for parameter-free teams
  virtual std::string checkpoint_json(const std::vector<std::string>&) const {
    return "";
  }
};

// Independent per-firm agents (rule, IPPO, LLM). When parallel_act is set,
// per-firm act() calls are dispatched concurrently and joined barrier-style
// before the step clears, preserving the simultaneous-move game.
class IndependentTeam : public AgentTeam {
 public:
  IndependentTeam(std::vector<std::unique_ptr<AgentPolicy>> agents,
                  bool parallel_act = false);

  int num_firms() const override { return static_cast<int>(agents_.size()); }
  void begin_episode(int episode, bool training) override;
  std::vector<double> act(const MarketEnv::Observations& obs,
                          bool explore) override;
  void observe(const StepOutcome& outcome,
               const std::vector<double>& actions) override;
  std::vector<nn::UpdateStats> end_episode_update(double progress) override;
  std::string checkpoint_json(const std::vector<std::string>& firm_ids) const override;

  AgentPolicy& agent(int i) { return *agents_[i]; }

 private:
  std::vector<std::unique_ptr<AgentPolicy>> agents_;
  bool parallel_act_;
};

// MAPPO: decentralized actors with a centralized critic. Actors see only
// their local observation; the critic consumes the fixed-firm-order
// concatenation of all observations and emits one value head per firm.
class MappoTeam : public AgentTeam {
 public:
  MappoTeam(int num_firms, const nn::PpoConfig& config, std::uint64_t seed,
            double reward_scale = 1.0);

  int num_firms() const override { return static_cast<int>(actors_.size()); }
  void begin_episode(int episode, bool training) override;
  std::vector<double> act(const MarketEnv::Observations& obs,
                          bool explore) override;
  void observe(const StepOutcome& outcome,
               const std::vector<double>& actions) override;
  std::vector<nn::UpdateStats> end_episode_update(double progress) override;
  std::string checkpoint_json(const std::vector<std::string>& firm_ids) const override;

  nn::GaussianPolicy& actor(int i) { return actors_[i]; }
  nn::Mlp& critic() { return critic_; }
  int critic_input_dim() const { return critic_.input_dim(); }
  nn::Trajectory& trajectory(int i) { return trajectories_[i]; }
  std::vector<std::vector<double>>& global_observations() { return global_obs_; }

 private:
  nn::PpoConfig config_;
  std::vector<nn::GaussianPolicy> actors_;
  std::vector<nn::PolicyOptimizer> actor_opts_;
  nn::Mlp critic_;
  nn::Adam critic_opt_;
  std::vector<nn::Trajectory> trajectories_;       // local obs per firm
  std::vector<std::vector<double>> global_obs_;    // one 10N vector per step
  Rng rng_;
  double inv_reward_scale_ = 1.0;
  bool training_ = true;

  static std::vector<double> concat(const std::vector<Obs>& obs);
};

std::unique_ptr<AgentTeam> make_team(
    Algorithm algorithm, const DrugScenario& resolved_scenario,
    const TaskSpec& task, const nn::PpoConfig& config,
    llm::ChatTransport* transport, const llm::TransportConfig& transport_config,
    std::vector<llm::DialogueRecord>* transcript, std::mutex* transcript_mu);

}  // namespace procuresim
