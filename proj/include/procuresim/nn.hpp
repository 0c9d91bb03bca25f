#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "procuresim/rng.hpp"

namespace procuresim::nn {

class NnError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Fixed-depth MLP: input -> h1 -> h2 -> output, tanh on the hidden layers,
// identity on the output. Parameters live in one flat vector laid out as
// [w1|b1|w2|b2|w3|b3] so the optimizer and checkpoints can treat them as a
// single array.
class Mlp {
 public:
  Mlp(int in, int h1, int h2, int out);

  struct Cache {
    std::vector<double> x, a1, a2, y;
  };

  void forward(const double* x, double* y, Cache* cache = nullptr) const;
  std::vector<double> forward(const std::vector<double>& x) const;

  // Accumulates d(loss)/d(params) into `grads` (same layout as params) given
  // dy = d(loss)/d(output); optionally emits d(loss)/d(input) into dx.
  void backward(const Cache& cache, const double* dy, std::vector<double>& grads,
                double* dx = nullptr) const;

  int input_dim() const { return in_; }
  int output_dim() const { return out_; }
  int hidden1() const { return h1_; }
  int hidden2() const { return h2_; }
  int param_count() const { return static_cast<int>(params_.size()); }
  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }

  // Orthogonal rows/columns scaled by gain, biases zero.
  void init_orthogonal(Rng& rng, double hidden_gain, double out_gain);

  std::string to_json_string() const;
  static Mlp from_json_string(const std::string& text);

 private:
  int in_, h1_, h2_, out_;
  std::size_t o_w1_, o_b1_, o_w2_, o_b2_, o_w3_, o_b3_;
  std::vector<double> params_;

  const double* w1() const { return params_.data() + o_w1_; }
  const double* b1() const { return params_.data() + o_b1_; }
  const double* w2() const { return params_.data() + o_w2_; }
  const double* b2() const { return params_.data() + o_b2_; }
  const double* w3() const { return params_.data() + o_w3_; }
  const double* b3() const { return params_.data() + o_b3_; }
  double* w1() { return params_.data() + o_w1_; }
  friend class MlpLayout;
};

// Gaussian policy head: MLP mean (output dim 1) plus one learnable
// log-standard-deviation shared across states.
struct GaussianPolicy {
  Mlp mean_net;
  double log_std = 0.0;

  static constexpr double kLogStdMin = -5.0;
  static constexpr double kLogStdMax = 1.0;

  explicit GaussianPolicy(Mlp net) : mean_net(std::move(net)) {
    if (mean_net.output_dim() != 1)
      throw NnError("policy mean net must have output dim 1");
  }

  double stddev() const;
  double mean(const double* obs, Mlp::Cache* cache = nullptr) const;
  // Draws an action and reports its log-density.
  double sample(const double* obs, Rng& rng, double* log_prob_out) const;
  double log_prob(double mean, double action) const;
  double entropy() const;  // 0.5*(1 + log(2*pi)) + log_std
  void clamp_log_std();

  std::string to_json_string() const;
  static GaussianPolicy from_json_string(const std::string& text);
};

// Adam over a contiguous parameter block.
class Adam {
 public:
  Adam(std::size_t n, double lr);
  void step(double* params, const double* grads);
  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }
  long steps_taken() const { return t_; }

 private:
  std::vector<double> m_, v_;
  double lr_;
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  long t_ = 0;
};

// Optimizer pair for a Gaussian policy (mean net block + log_std scalar).
class PolicyOptimizer {
 public:
  PolicyOptimizer(const GaussianPolicy& policy, double lr);
  void step(GaussianPolicy& policy, const std::vector<double>& net_grads,
            double log_std_grad);

 private:
  Adam net_opt_;
  Adam log_std_opt_;
};

struct PpoConfig {
  double lr = 5e-5;
  double gamma = 0.99;
  double lambda = 0.95;
  double clip = 0.2;
  double entropy_coef_start = 0.005;
  double entropy_coef_end = 0.001;
  double kl_stop = 0.01;
  int epochs = 4;
  int minibatch = 0;  // 0 = full batch
  bool clip_value_loss = true;
  double value_coef = 0.5;
  int hidden = 128;

  void validate() const;
};

// Per-agent rollout buffer for one episode.
struct Trajectory {
  std::vector<std::vector<double>> observations;  // normalized
  std::vector<double> actions;     // raw pre-clamp samples
  std::vector<double> log_probs;   // behavior-policy densities
  std::vector<double> rewards;
  std::vector<double> values;
  double bootstrap_value = 0.0;

  std::size_t size() const { return observations.size(); }
  void clear();
  void check_consistent() const;  // throws NnError on ragged lengths
};

// Backward GAE recursion; returns_out = advantages + values.
void gae(const std::vector<double>& rewards, const std::vector<double>& values,
         double bootstrap, double gamma, double lambda,
         std::vector<double>& advantages_out, std::vector<double>& returns_out);

// Zero-mean unit-variance per batch (sample std, eps-guarded).
void standardize(std::vector<double>& xs);

// Linear schedule from entropy_coef_start at progress 0 to entropy_coef_end
// at progress 1.
double anneal_entropy(double progress, const PpoConfig& config);

struct PolicyLossStats {
  double policy_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;  // mean(old_logp - new_logp)
};

// Clipped-surrogate loss plus entropy bonus over a batch; accumulates mean-net
// gradients and the log_std gradient when outputs are non-null.
PolicyLossStats policy_loss_and_grad(
    const GaussianPolicy& policy, const std::vector<std::vector<double>>& obs,
    const std::vector<double>& actions, const std::vector<double>& old_log_probs,
    const std::vector<double>& advantages, double clip, double entropy_coef,
    std::vector<double>* net_grads, double* log_std_grad);

// (Optionally clipped) value regression loss; heads[i] selects the critic
// output used for sample i, letting one net serve per-agent heads.
double value_loss_and_grad(const Mlp& critic,
                           const std::vector<std::vector<double>>& obs,
                           const std::vector<int>& heads,
                           const std::vector<double>& returns,
                           const std::vector<double>& old_values, double clip,
                           bool clip_loss, double value_coef,
                           std::vector<double>* grads);

struct UpdateStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double entropy_coef = 0.0;
  int epochs_run = 0;
  bool stopped_early = false;
};

// One end-of-episode PPO update for an actor-critic pair: GAE, advantage
// standardization, clipped ascent epochs with KL-based early stopping.
UpdateStats ppo_update(GaussianPolicy& policy, Mlp& critic,
                       PolicyOptimizer& policy_opt, Adam& critic_opt,
                       const Trajectory& traj, const PpoConfig& config,
                       double entropy_coef);

}  // namespace procuresim::nn
