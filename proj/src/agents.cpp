#include "procuresim/agents.hpp"

#include <algorithm>
#include <cmath>
#include <future>

#include "json.hpp"

namespace procuresim {

namespace {
constexpr double kHiddenGain = 1.4142135623730951;  // sqrt(2)
constexpr double kPolicyHeadGain = 0.01;
constexpr double kValueHeadGain = 1.0;
}  // namespace

// ---------------------------------------------------------------- RuleAgent

double RuleAgent::base_margin_for(FirmType type) {
  switch (type) {
    case FirmType::A: return 0.20;
    case FirmType::B: return 0.14;
    case FirmType::C:
    case FirmType::D: return 0.086;
  }
  return 0.086;
}

RuleAgent::RuleAgent(FirmType type) {
  state_.base_margin = base_margin_for(type);
  state_.current_margin = state_.base_margin;
}

void RuleAgent::begin_episode(int, bool training) { training_ = training; }

double RuleAgent::act(const Obs& raw, const Obs&, bool) {
  const double p_max = raw[0];
  const double cost = raw[6];
  double target = cost * (1.0 + state_.current_margin);
  target = std::clamp(target, cost, p_max);
  return encode_price(target, cost, p_max);
}

void RuleAgent::observe_outcome(const StepSlice& slice) {
  if (!training_) return;
  if (slice.won) {
    state_.current_margin = std::min(
        state_.base_margin, state_.current_margin + 0.5 * state_.adjustment_step);
  } else {
    state_.current_margin =
        std::max(0.0, state_.current_margin - state_.adjustment_step);
  }
}

std::optional<nn::UpdateStats> RuleAgent::end_episode_update(double) {
  return std::nullopt;
}

// ---------------------------------------------------------------- IppoAgent

namespace {

nn::GaussianPolicy make_actor(int input_dim, const nn::PpoConfig& cfg, Rng& rng) {
  nn::Mlp net(input_dim, cfg.hidden, cfg.hidden, 1);
  net.init_orthogonal(rng, kHiddenGain, kPolicyHeadGain);
  return nn::GaussianPolicy(std::move(net));
}

nn::Mlp make_critic(int input_dim, int output_dim, const nn::PpoConfig& cfg,
                    Rng& rng) {
  nn::Mlp net(input_dim, cfg.hidden, cfg.hidden, output_dim);
  net.init_orthogonal(rng, kHiddenGain, kValueHeadGain);
  return net;
}

}  // namespace

IppoAgent::IppoAgent(const nn::PpoConfig& config, std::uint64_t seed,
                     double reward_scale)
    : config_(config),
      policy_([&] {
        Rng init_rng(seed);
        return make_actor(kObsDim, config, init_rng);
      }()),
      critic_([&] {
        Rng init_rng(mix_hash(seed, 0x63726974ULL));  // distinct critic stream
        return make_critic(kObsDim, 1, config, init_rng);
      }()),
      policy_opt_(policy_, config.lr),
      critic_opt_(critic_.param_count(), config.lr),
      rng_(mix_hash(seed, 0x616374ULL)),
      inv_reward_scale_(1.0 / reward_scale) {
  config_.validate();
}

void IppoAgent::begin_episode(int, bool training) {
  training_ = training;
  traj_.clear();
}

double IppoAgent::act(const Obs&, const Obs& norm, bool explore) {
  double mu = policy_.mean(norm.data());
  double action = explore ? mu + policy_.stddev() * rng_.normal() : mu;
  if (std::isnan(action)) throw nn::NnError("ippo actor produced NaN action");
  if (training_) {
    std::vector<double> obs_vec(norm.begin(), norm.end());
    double value = critic_.forward(obs_vec)[0];
    traj_.observations.push_back(std::move(obs_vec));
    traj_.actions.push_back(action);  // raw sample, pre-clamp
    traj_.log_probs.push_back(policy_.log_prob(mu, action));
    traj_.values.push_back(value);
  }
  return std::clamp(action, -1.0, 1.0);
}

void IppoAgent::observe_outcome(const StepSlice& slice) {
  if (training_) traj_.rewards.push_back(slice.reward * inv_reward_scale_);
}

std::optional<nn::UpdateStats> IppoAgent::end_episode_update(double progress) {
  if (!training_ || traj_.size() == 0) return std::nullopt;
  traj_.bootstrap_value = 0.0;  // fixed-horizon episode ends terminally
  double coef = nn::anneal_entropy(progress, config_);
  nn::UpdateStats stats =
      nn::ppo_update(policy_, critic_, policy_opt_, critic_opt_, traj_, config_, coef);
  traj_.clear();
  return stats;
}

std::string IppoAgent::checkpoint_json() const {
  return std::string("{\"actor\":") + policy_.to_json_string() +
         ",\"critic\":" + critic_.to_json_string() + "}";
}

// ----------------------------------------------------------------- LlmAgent

LlmAgent::LlmAgent(FirmConfig firm, DrugScenario scenario, int horizon,
                   llm::ChatTransport* transport,
                   const llm::TransportConfig& config,
                   std::vector<llm::DialogueRecord>* transcript,
                   std::mutex* transcript_mu)
    : firm_(std::move(firm)),
      scenario_(std::move(scenario)),
      horizon_(horizon),
      transport_(transport),
      config_(config),
      transcript_(transcript),
      transcript_mu_(transcript_mu) {}

void LlmAgent::begin_episode(int episode, bool training) {
  training_ = training;
  if (!training) return;  // evaluation replays the final bid, no new dialogue
  episode_ = episode;
  step_ = 0;
  cumulative_profit_ = 0.0;
  wins_ = 0;
  memory_.clear();
  prev_bid_.reset();
  last_reflection_.clear();
}

void LlmAgent::append_record(llm::DialogueRecord record) {
  if (transcript_ == nullptr) return;
  if (transcript_mu_ != nullptr) {
    std::lock_guard<std::mutex> lock(*transcript_mu_);
    transcript_->push_back(std::move(record));
  } else {
    transcript_->push_back(std::move(record));
  }
}

double LlmAgent::act(const Obs& raw, const Obs&, bool) {
  const double cost = raw[6];
  const double p_max = raw[0];
  if (!training_) {
    double bid = std::clamp(prev_bid_.value_or(cost * 1.1), cost, p_max);
    return encode_price(bid, cost, p_max);
  }
  ++step_;

  llm::PromptContext ctx;
  ctx.firm = &firm_;
  ctx.scenario = &scenario_;
  ctx.step = step_;
  ctx.horizon = horizon_;
  ctx.memory = &memory_;
  ctx.cumulative_profit = cumulative_profit_;
  ctx.wins = wins_;
  ctx.last_reflection = last_reflection_;
  auto [system_prompt, user_prompt] = llm::build_prompt(ctx);

  std::optional<llm::ParsedResponse> parsed;
  // one retry through the transport on unparseable output, then fall back
  for (int attempt = 1; attempt <= 2 && !parsed.has_value(); ++attempt) {
    llm::CallContext call{firm_.firm_id, step_, attempt};
    std::string response = transport_->complete(
        system_prompt, user_prompt, config_.temperature, config_.max_tokens, call);
    parsed = llm::extract_bid_json(response);

    llm::DialogueRecord record;
    record.episode = episode_;
    record.step = step_;
    record.firm_id = firm_.firm_id;
    record.attempt = attempt;
    record.system_prompt = system_prompt;
    record.user_prompt = user_prompt;
    record.response = std::move(response);
    record.parsed = parsed.has_value();
    if (parsed.has_value()) {
      double raw_bid = parsed->bid_price;
      record.raw_bid = raw_bid;
      record.below_cost = raw_bid < cost;
      record.above_pmax = raw_bid > p_max;
      record.bid_price = std::clamp(raw_bid, cost, p_max);
    } else if (attempt == 2) {
      record.fallback = true;
      record.bid_price = std::clamp(prev_bid_.value_or(cost * 1.1), cost, p_max);
    }
    append_record(std::move(record));
  }

  double bid;
  if (parsed.has_value()) {
    bid = std::clamp(parsed->bid_price, cost, p_max);
    if (llm::is_reflection_step(step_)) last_reflection_ = parsed->reasoning;
  } else {
    bid = std::clamp(prev_bid_.value_or(cost * 1.1), cost, p_max);
  }
  prev_bid_ = bid;
  return encode_price(bid, cost, p_max);
}

void LlmAgent::observe_outcome(const StepSlice& slice) {
  if (!training_) return;
  memory_.record({slice.t, slice.price, slice.profit, slice.rank, slice.won});
  cumulative_profit_ += slice.profit;
  if (slice.won) ++wins_;
}

std::optional<nn::UpdateStats> LlmAgent::end_episode_update(double) {
  return std::nullopt;
}

// ----------------------------------------------------------- IndependentTeam

IndependentTeam::IndependentTeam(std::vector<std::unique_ptr<AgentPolicy>> agents,
                                 bool parallel_act)
    : agents_(std::move(agents)), parallel_act_(parallel_act) {}

void IndependentTeam::begin_episode(int episode, bool training) {
  for (auto& a : agents_) a->begin_episode(episode, training);
}

std::vector<double> IndependentTeam::act(const MarketEnv::Observations& obs,
                                         bool explore) {
  const int n = num_firms();
  std::vector<double> actions(n);
  if (parallel_act_ && n > 1) {
    std::vector<std::future<double>> futures;
    futures.reserve(n);
    for (int i = 0; i < n; ++i) {
      futures.push_back(std::async(std::launch::async, [&, i] {
        return agents_[i]->act(obs.raw[i], obs.norm[i], explore);
      }));
    }
    for (int i = 0; i < n; ++i) actions[i] = futures[i].get();
  } else {
    for (int i = 0; i < n; ++i)
      actions[i] = agents_[i]->act(obs.raw[i], obs.norm[i], explore);
  }
  return actions;
}

void IndependentTeam::observe(const StepOutcome& outcome,
                              const std::vector<double>& actions) {
  for (int i = 0; i < num_firms(); ++i) {
    StepSlice slice{outcome.t,          actions[i],
                    outcome.prices[i],  outcome.winners[i] != 0,
                    outcome.profits[i], outcome.rewards[i],
                    outcome.price_rank[i], num_firms()};
    agents_[i]->observe_outcome(slice);
  }
}

std::vector<nn::UpdateStats> IndependentTeam::end_episode_update(double progress) {
  std::vector<nn::UpdateStats> stats;
  for (auto& a : agents_) {
    auto s = a->end_episode_update(progress);
    if (s.has_value()) stats.push_back(*s);
  }
  return stats;
}

std::string IndependentTeam::checkpoint_json(
    const std::vector<std::string>& firm_ids) const {
  nlohmann::json firms = nlohmann::json::object();
  for (std::size_t i = 0; i < agents_.size(); ++i) {
    std::string blob = agents_[i]->checkpoint_json();
    if (blob.empty()) continue;
    firms[firm_ids[i]] = nlohmann::json::parse(blob);
  }
  if (firms.empty()) return "";
  nlohmann::json out;
  out["firms"] = std::move(firms);
  return out.dump(2) + "\n";
}

// ----------------------------------------------------------------- MappoTeam

MappoTeam::MappoTeam(int num_firms, const nn::PpoConfig& config,
                     std::uint64_t seed, double reward_scale)
    : config_(config),
      critic_([&] {
        Rng init_rng(mix_hash(seed, 0x676c6f62ULL));
        return make_critic(kObsDim * num_firms, num_firms, config, init_rng);
      }()),
      critic_opt_(critic_.param_count(), config.lr),
      rng_(mix_hash(seed, 0x616374ULL)),
      inv_reward_scale_(1.0 / reward_scale) {
  config_.validate();
  actors_.reserve(num_firms);
  actor_opts_.reserve(num_firms);
  for (int i = 0; i < num_firms; ++i) {
    Rng init_rng(mix_hash(seed, static_cast<std::uint64_t>(i)));
    actors_.push_back(make_actor(kObsDim, config, init_rng));
    actor_opts_.emplace_back(actors_.back(), config.lr);
  }
  trajectories_.resize(num_firms);
}

std::vector<double> MappoTeam::concat(const std::vector<Obs>& obs) {
  std::vector<double> global;
  global.reserve(obs.size() * kObsDim);
  for (const auto& o : obs) global.insert(global.end(), o.begin(), o.end());
  return global;
}

void MappoTeam::begin_episode(int, bool training) {
  training_ = training;
  for (auto& t : trajectories_) t.clear();
  global_obs_.clear();
}

std::vector<double> MappoTeam::act(const MarketEnv::Observations& obs,
                                   bool explore) {
  const int n = num_firms();
  if (static_cast<int>(obs.norm.size()) != n)
    throw nn::NnError("mappo team: firm count mismatch");
  std::vector<double> actions(n);
  std::vector<double> global;
  std::vector<double> values;
  if (training_) {
    global = concat(obs.norm);
    if (static_cast<int>(global.size()) != critic_.input_dim())
      throw nn::NnError("mappo critic: global state width mismatch");
    values = critic_.forward(global);
  }
  for (int i = 0; i < n; ++i) {
    double mu = actors_[i].mean(obs.norm[i].data());
    double action = explore ? mu + actors_[i].stddev() * rng_.normal() : mu;
    if (std::isnan(action)) throw nn::NnError("mappo actor produced NaN action");
    if (training_) {
      trajectories_[i].observations.emplace_back(obs.norm[i].begin(),
                                                 obs.norm[i].end());
      trajectories_[i].actions.push_back(action);
      trajectories_[i].log_probs.push_back(actors_[i].log_prob(mu, action));
      trajectories_[i].values.push_back(values[i]);
    }
    actions[i] = std::clamp(action, -1.0, 1.0);
  }
  if (training_) global_obs_.push_back(std::move(global));
  return actions;
}

void MappoTeam::observe(const StepOutcome& outcome, const std::vector<double>&) {
  if (!training_) return;
  for (int i = 0; i < num_firms(); ++i)
    trajectories_[i].rewards.push_back(outcome.rewards[i] * inv_reward_scale_);
}

std::vector<nn::UpdateStats> MappoTeam::end_episode_update(double progress) {
  if (!training_ || global_obs_.empty()) return {};
  const int n = num_firms();
  const int t_max = static_cast<int>(global_obs_.size());
  const double coef = nn::anneal_entropy(progress, config_);

  // per-firm GAE from the centralized value estimates
  std::vector<std::vector<double>> advantages(n), returns(n);
  for (int i = 0; i < n; ++i) {
    trajectories_[i].check_consistent();
    nn::gae(trajectories_[i].rewards, trajectories_[i].values, 0.0,
            config_.gamma, config_.lambda, advantages[i], returns[i]);
    nn::standardize(advantages[i]);
  }

  std::vector<nn::UpdateStats> all_stats(n);
  for (int i = 0; i < n; ++i) {
    nn::UpdateStats stats;
    stats.entropy_coef = coef;
    std::vector<double> grads(actors_[i].mean_net.param_count());
    for (int epoch = 0; epoch < config_.epochs; ++epoch) {
      std::fill(grads.begin(), grads.end(), 0.0);
      double log_std_grad = 0.0;
      nn::PolicyLossStats ps = nn::policy_loss_and_grad(
          actors_[i], trajectories_[i].observations, trajectories_[i].actions,
          trajectories_[i].log_probs, advantages[i], config_.clip, coef, &grads,
          &log_std_grad);
      if (!std::isfinite(ps.policy_loss) || !std::isfinite(ps.approx_kl))
        throw nn::NnError("mappo update: non-finite statistics, update aborted");
      actor_opts_[i].step(actors_[i], grads, log_std_grad);
      stats.policy_loss = ps.policy_loss;
      stats.entropy = ps.entropy;
      stats.approx_kl = ps.approx_kl;
      stats.epochs_run = epoch + 1;
      if (ps.approx_kl > config_.kl_stop) {
        stats.stopped_early = true;
        break;
      }
    }
    all_stats[i] = stats;
  }

  // centralized critic: flatten (step, firm) samples against per-agent heads
  std::vector<std::vector<double>> critic_obs;
  std::vector<int> heads;
  std::vector<double> critic_returns, critic_old_values;
  critic_obs.reserve(static_cast<std::size_t>(t_max) * n);
  for (int t = 0; t < t_max; ++t) {
    for (int i = 0; i < n; ++i) {
      critic_obs.push_back(global_obs_[t]);
      heads.push_back(i);
      critic_returns.push_back(returns[i][t]);
      critic_old_values.push_back(trajectories_[i].values[t]);
    }
  }
  std::vector<double> critic_grads(critic_.param_count());
  double vloss = 0.0;
  for (int epoch = 0; epoch < config_.epochs; ++epoch) {
    std::fill(critic_grads.begin(), critic_grads.end(), 0.0);
    vloss = nn::value_loss_and_grad(critic_, critic_obs, heads, critic_returns,
                                    critic_old_values, config_.clip,
                                    config_.clip_value_loss, config_.value_coef,
                                    &critic_grads);
    if (!std::isfinite(vloss))
      throw nn::NnError("mappo critic update: non-finite loss");
    critic_opt_.step(critic_.params().data(), critic_grads.data());
  }
  for (auto& s : all_stats) s.value_loss = vloss;

  for (auto& t : trajectories_) t.clear();
  global_obs_.clear();
  return all_stats;
}

std::string MappoTeam::checkpoint_json(
    const std::vector<std::string>& firm_ids) const {
  nlohmann::json out;
  out["firms"] = nlohmann::json::object();
  for (std::size_t i = 0; i < actors_.size(); ++i)
    out["firms"][firm_ids[i]] =
        nlohmann::json{{"actor", nlohmann::json::parse(actors_[i].to_json_string())}};
  out["central_critic"] = nlohmann::json::parse(critic_.to_json_string());
  return out.dump(2) + "\n";
}

// -------------------------------------------------------------------- factory

std::unique_ptr<AgentTeam> make_team(
    Algorithm algorithm, const DrugScenario& resolved_scenario,
    const TaskSpec& task, const nn::PpoConfig& config,
    llm::ChatTransport* transport, const llm::TransportConfig& transport_config,
    std::vector<llm::DialogueRecord>* transcript, std::mutex* transcript_mu) {
  const int n = static_cast<int>(resolved_scenario.firms.size());
  switch (algorithm) {
    case Algorithm::Rule: {
      std::vector<std::unique_ptr<AgentPolicy>> agents;
      for (const auto& f : resolved_scenario.firms)
        agents.push_back(std::make_unique<RuleAgent>(f.firm_type));
      return std::make_unique<IndependentTeam>(std::move(agents));
    }
    case Algorithm::Ippo: {
      const double scale = profit_magnitude_bound(resolved_scenario);
      std::vector<std::unique_ptr<AgentPolicy>> agents;
      for (int i = 0; i < n; ++i)
        agents.push_back(std::make_unique<IppoAgent>(
            config, mix_hash(task.seed, static_cast<std::uint64_t>(i)), scale));
      return std::make_unique<IndependentTeam>(std::move(agents));
    }
    case Algorithm::Mappo:
      return std::make_unique<MappoTeam>(n, config, task.seed,
                                         profit_magnitude_bound(resolved_scenario));
    case Algorithm::Llm: {
      if (transport == nullptr)
        throw llm::TransportError("llm task requires a transport");
      std::vector<std::unique_ptr<AgentPolicy>> agents;
      for (const auto& f : resolved_scenario.firms)
        agents.push_back(std::make_unique<LlmAgent>(
            f, resolved_scenario, task.timesteps, transport, transport_config,
            transcript, transcript_mu));
      return std::make_unique<IndependentTeam>(std::move(agents),
                                               /*parallel_act=*/true);
    }
  }
  throw ScenarioError("unknown algorithm");
}

}  // namespace procuresim
