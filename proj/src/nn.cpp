#include "procuresim/nn.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"
#include "procuresim/kernels.hpp"

namespace procuresim::nn {

using nlohmann::json;

namespace {
constexpr double kHalfLog2Pi = 0.9189385332046727;  // 0.5 * log(2*pi)
}

Mlp::Mlp(int in, int h1, int h2, int out) : in_(in), h1_(h1), h2_(h2), out_(out) {
  if (in < 1 || h1 < 1 || h2 < 1 || out < 1)
    throw NnError("mlp dimensions must be positive");
  o_w1_ = 0;
  o_b1_ = o_w1_ + static_cast<std::size_t>(h1) * in;
  o_w2_ = o_b1_ + h1;
  o_b2_ = o_w2_ + static_cast<std::size_t>(h2) * h1;
  o_w3_ = o_b2_ + h2;
  o_b3_ = o_w3_ + static_cast<std::size_t>(out) * h2;
  params_.assign(o_b3_ + out, 0.0);
}

void Mlp::forward(const double* x, double* y, Cache* cache) const {
  static thread_local std::vector<double> ta1, ta2;
  std::vector<double>* a1;
  std::vector<double>* a2;
  if (cache != nullptr) {
    cache->x.assign(x, x + in_);
    a1 = &cache->a1;
    a2 = &cache->a2;
  } else {
    a1 = &ta1;
    a2 = &ta2;
  }
  a1->resize(h1_);
  a2->resize(h2_);
  kernels::affine(w1(), b1(), x, a1->data(), h1_, in_);
  for (double& v : *a1) v = std::tanh(v);
  kernels::affine(w2(), b2(), a1->data(), a2->data(), h2_, h1_);
  for (double& v : *a2) v = std::tanh(v);
  kernels::affine(w3(), b3(), a2->data(), y, out_, h2_);
  if (cache != nullptr) cache->y.assign(y, y + out_);
}

std::vector<double> Mlp::forward(const std::vector<double>& x) const {
  if (static_cast<int>(x.size()) != in_)
    throw NnError("mlp forward: input dimension mismatch");
  std::vector<double> y(out_);
  forward(x.data(), y.data());
  return y;
}

void Mlp::backward(const Cache& cache, const double* dy,
                   std::vector<double>& grads, double* dx) const {
  if (grads.size() != params_.size())
    throw NnError("mlp backward: gradient buffer size mismatch");
  static thread_local std::vector<double> dz2, dz1;
  dz2.resize(h2_);
  dz1.resize(h1_);

  // output layer
  kernels::outer_accum(grads.data() + o_w3_, dy, cache.a2.data(), out_, h2_);
  for (int r = 0; r < out_; ++r) grads[o_b3_ + r] += dy[r];

  // through tanh of layer 2
  kernels::matvec_t(w3(), dy, dz2.data(), out_, h2_);
  for (int i = 0; i < h2_; ++i) dz2[i] *= 1.0 - cache.a2[i] * cache.a2[i];
  kernels::outer_accum(grads.data() + o_w2_, dz2.data(), cache.a1.data(), h2_, h1_);
  for (int r = 0; r < h2_; ++r) grads[o_b2_ + r] += dz2[r];

  // through tanh of layer 1
  kernels::matvec_t(w2(), dz2.data(), dz1.data(), h2_, h1_);
  for (int i = 0; i < h1_; ++i) dz1[i] *= 1.0 - cache.a1[i] * cache.a1[i];
  kernels::outer_accum(grads.data() + o_w1_, dz1.data(), cache.x.data(), h1_, in_);
  for (int r = 0; r < h1_; ++r) grads[o_b1_ + r] += dz1[r];

  if (dx != nullptr) kernels::matvec_t(w1(), dz1.data(), dx, h1_, in_);
}

namespace {

// Modified Gram-Schmidt over the shorter dimension of a rows x cols matrix.
void orthogonalize(double* w, int rows, int cols, double gain, Rng& rng) {
  const bool by_rows = rows <= cols;
  const int vecs = by_rows ? rows : cols;
  const int dim = by_rows ? cols : rows;
  auto at = [&](int v, int d) -> double& {
    return by_rows ? w[v * cols + d] : w[d * cols + v];
  };
  for (int v = 0; v < vecs; ++v) {
    for (int d = 0; d < dim; ++d) at(v, d) = rng.normal();
    for (int p = 0; p < v; ++p) {
      double proj = 0.0;
      for (int d = 0; d < dim; ++d) proj += at(v, d) * at(p, d);
      for (int d = 0; d < dim; ++d) at(v, d) -= proj * at(p, d);
    }
    double norm = 0.0;
    for (int d = 0; d < dim; ++d) norm += at(v, d) * at(v, d);
    norm = std::sqrt(norm);
    if (norm < 1e-12) norm = 1.0;
    for (int d = 0; d < dim; ++d) at(v, d) /= norm;
  }
  for (int i = 0; i < rows * cols; ++i) w[i] *= gain;
}

}  // namespace

void Mlp::init_orthogonal(Rng& rng, double hidden_gain, double out_gain) {
  orthogonalize(params_.data() + o_w1_, h1_, in_, hidden_gain, rng);
  orthogonalize(params_.data() + o_w2_, h2_, h1_, hidden_gain, rng);
  orthogonalize(params_.data() + o_w3_, out_, h2_, out_gain, rng);
  std::fill(params_.begin() + o_b1_, params_.begin() + o_w2_, 0.0);
  std::fill(params_.begin() + o_b2_, params_.begin() + o_w3_, 0.0);
  std::fill(params_.begin() + o_b3_, params_.end(), 0.0);
}

std::string Mlp::to_json_string() const {
  json j;
  j["sizes"] = {in_, h1_, h2_, out_};
  j["params"] = params_;
  return j.dump();
}

Mlp Mlp::from_json_string(const std::string& text) {
  json j = json::parse(text);
  auto sizes = j.at("sizes").get<std::vector<int>>();
  if (sizes.size() != 4) throw NnError("mlp checkpoint: bad sizes header");
  Mlp net(sizes[0], sizes[1], sizes[2], sizes[3]);
  auto params = j.at("params").get<std::vector<double>>();
  if (params.size() != net.params_.size())
    throw NnError("mlp checkpoint: parameter count mismatch");
  net.params_ = std::move(params);
  return net;
}

double GaussianPolicy::stddev() const { return std::exp(log_std); }

double GaussianPolicy::mean(const double* obs, Mlp::Cache* cache) const {
  double y = 0.0;
  mean_net.forward(obs, &y, cache);
  return y;
}

double GaussianPolicy::sample(const double* obs, Rng& rng,
                              double* log_prob_out) const {
  double mu = mean(obs);
  double action = mu + stddev() * rng.normal();
  if (log_prob_out != nullptr) *log_prob_out = log_prob(mu, action);
  return action;
}

double GaussianPolicy::log_prob(double mu, double action) const {
  double z = (action - mu) / stddev();
  return -0.5 * z * z - log_std - kHalfLog2Pi;
}

double GaussianPolicy::entropy() const { return 0.5 + kHalfLog2Pi + log_std; }

void GaussianPolicy::clamp_log_std() {
  log_std = std::clamp(log_std, kLogStdMin, kLogStdMax);
}

std::string GaussianPolicy::to_json_string() const {
  json j;
  j["mean_net"] = json::parse(mean_net.to_json_string());
  j["log_std"] = log_std;
  return j.dump();
}

GaussianPolicy GaussianPolicy::from_json_string(const std::string& text) {
  json j = json::parse(text);
  GaussianPolicy p(Mlp::from_json_string(j.at("mean_net").dump()));
  p.log_std = j.at("log_std").get<double>();
  return p;
}

Adam::Adam(std::size_t n, double lr) : m_(n, 0.0), v_(n, 0.0), lr_(lr) {}

void Adam::step(double* params, const double* grads) {
  ++t_;
  double bias1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  double bias2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  kernels::adam_step(params, grads, m_.data(), v_.data(), m_.size(), lr_, beta1_,
                     beta2_, eps_, bias1, bias2);
}

PolicyOptimizer::PolicyOptimizer(const GaussianPolicy& policy, double lr)
    : net_opt_(policy.mean_net.param_count(), lr), log_std_opt_(1, lr) {}

void PolicyOptimizer::step(GaussianPolicy& policy,
                           const std::vector<double>& net_grads,
                           double log_std_grad) {
  net_opt_.step(policy.mean_net.params().data(), net_grads.data());
  log_std_opt_.step(&policy.log_std, &log_std_grad);
  policy.clamp_log_std();
}

void PpoConfig::validate() const {
  if (!(lr > 0.0)) throw NnError("lr must be positive");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw NnError("gamma must lie in (0, 1]");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw NnError("lambda must lie in [0, 1]");
  if (!(clip > 0.0 && clip < 1.0)) throw NnError("clip must lie in (0, 1)");
  if (!(entropy_coef_start > 0.0) || !(entropy_coef_end > 0.0))
    throw NnError("entropy coefficients must be positive");
  if (!(kl_stop > 0.0)) throw NnError("kl_stop must be positive");
  if (epochs < 1) throw NnError("epochs must be at least 1");
  if (hidden < 1) throw NnError("hidden width must be positive");
}

void Trajectory::clear() {
  observations.clear();
  actions.clear();
  log_probs.clear();
  rewards.clear();
  values.clear();
  bootstrap_value = 0.0;
}

void Trajectory::check_consistent() const {
  std::size_t n = observations.size();
  if (actions.size() != n || log_probs.size() != n || rewards.size() != n ||
      values.size() != n)
    throw NnError("trajectory: ragged sequence lengths");
}

void gae(const std::vector<double>& rewards, const std::vector<double>& values,
         double bootstrap, double gamma, double lambda,
         std::vector<double>& advantages_out, std::vector<double>& returns_out) {
  if (rewards.size() != values.size())
    throw NnError("gae: rewards/values length mismatch");
  const int t_max = static_cast<int>(rewards.size());
  advantages_out.assign(t_max, 0.0);
  returns_out.assign(t_max, 0.0);
  double carry = 0.0;
  for (int t = t_max - 1; t >= 0; --t) {
    double next_value = (t == t_max - 1) ? bootstrap : values[t + 1];
    double delta = rewards[t] + gamma * next_value - values[t];
    carry = delta + gamma * lambda * carry;
    advantages_out[t] = carry;
    returns_out[t] = carry + values[t];
  }
}

void standardize(std::vector<double>& xs) {
  const std::size_t n = xs.size();
  if (n == 0) return;
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  double std_dev = n > 1 ? std::sqrt(var / static_cast<double>(n - 1)) : 0.0;
  for (double& x : xs) x = (x - mean) / (std_dev + 1e-8);
}

double anneal_entropy(double progress, const PpoConfig& config) {
  progress = std::clamp(progress, 0.0, 1.0);
  return config.entropy_coef_start +
         (config.entropy_coef_end - config.entropy_coef_start) * progress;
}

PolicyLossStats policy_loss_and_grad(
    const GaussianPolicy& policy, const std::vector<std::vector<double>>& obs,
    const std::vector<double>& actions, const std::vector<double>& old_log_probs,
    const std::vector<double>& advantages, double clip, double entropy_coef,
    std::vector<double>* net_grads, double* log_std_grad) {
  const std::size_t n = obs.size();
  if (n == 0) throw NnError("policy update: empty batch");
  if (actions.size() != n || old_log_probs.size() != n || advantages.size() != n)
    throw NnError("policy update: batch length mismatch");

  const double sigma = policy.stddev();
  const double inv_n = 1.0 / static_cast<double>(n);
  double loss = 0.0;
  double kl = 0.0;
  double d_log_std = 0.0;
  Mlp::Cache cache;

  for (std::size_t i = 0; i < n; ++i) {
    double mu = policy.mean(obs[i].data(), net_grads != nullptr ? &cache : nullptr);
    double lp = policy.log_prob(mu, actions[i]);
    double ratio = std::exp(lp - old_log_probs[i]);
    double adv = advantages[i];
    double surr1 = ratio * adv;
    double surr2 = std::clamp(ratio, 1.0 - clip, 1.0 + clip) * adv;
    bool unclipped_active = surr1 <= surr2;
    loss += -std::min(surr1, surr2) * inv_n;
    kl += (old_log_probs[i] - lp) * inv_n;

    if (net_grads != nullptr) {
      // d(loss)/d(lp) is -A*ratio when the unclipped branch is active, else 0
      double g_lp = unclipped_active ? -adv * ratio * inv_n : 0.0;
      double z = (actions[i] - mu) / sigma;
      double dmu = g_lp * z / sigma;
      policy.mean_net.backward(cache, &dmu, *net_grads);
      d_log_std += g_lp * (z * z - 1.0);
    }
  }
  // entropy bonus: H is state-independent, gradient only reaches log_std
  if (log_std_grad != nullptr) *log_std_grad += d_log_std - entropy_coef;

  PolicyLossStats stats;
  stats.policy_loss = loss;
  stats.entropy = policy.entropy();
  stats.approx_kl = kl;
  return stats;
}

double value_loss_and_grad(const Mlp& critic,
                           const std::vector<std::vector<double>>& obs,
                           const std::vector<int>& heads,
                           const std::vector<double>& returns,
                           const std::vector<double>& old_values, double clip,
                           bool clip_loss, double value_coef,
                           std::vector<double>* grads) {
  const std::size_t n = obs.size();
  if (n == 0) throw NnError("value update: empty batch");
  if (heads.size() != n || returns.size() != n || old_values.size() != n)
    throw NnError("value update: batch length mismatch");

  const double inv_n = 1.0 / static_cast<double>(n);
  const int out_dim = critic.output_dim();
  double loss = 0.0;
  Mlp::Cache cache;
  std::vector<double> y(out_dim);
  std::vector<double> dy(out_dim);

  for (std::size_t i = 0; i < n; ++i) {
    critic.forward(obs[i].data(), y.data(), grads != nullptr ? &cache : nullptr);
    int head = heads[i];
    if (head < 0 || head >= out_dim)
      throw NnError("value update: head index out of range");
    double v = y[head];
    double err = v - returns[i];
    double sq_unclipped = err * err;
    double dv;
    if (clip_loss) {
      double delta = std::clamp(v - old_values[i], -clip, clip);
      double v_clipped = old_values[i] + delta;
      double err_c = v_clipped - returns[i];
      double sq_clipped = err_c * err_c;
      if (sq_unclipped >= sq_clipped) {
        loss += 0.5 * sq_unclipped * inv_n;
        dv = err * inv_n;
      } else {
        loss += 0.5 * sq_clipped * inv_n;
        bool inside = std::abs(v - old_values[i]) < clip;
        dv = inside ? err_c * inv_n : 0.0;
      }
    } else {
      loss += 0.5 * sq_unclipped * inv_n;
      dv = err * inv_n;
    }
    if (grads != nullptr) {
      std::fill(dy.begin(), dy.end(), 0.0);
      dy[head] = value_coef * dv;
      critic.backward(cache, dy.data(), *grads);
    }
  }
  return value_coef * loss;
}

UpdateStats ppo_update(GaussianPolicy& policy, Mlp& critic,
                       PolicyOptimizer& policy_opt, Adam& critic_opt,
                       const Trajectory& traj, const PpoConfig& config,
                       double entropy_coef) {
  traj.check_consistent();
  if (traj.size() == 0) throw NnError("ppo_update: empty trajectory");

  std::vector<double> advantages, returns;
  gae(traj.rewards, traj.values, traj.bootstrap_value, config.gamma,
      config.lambda, advantages, returns);
  standardize(advantages);

  std::vector<int> heads(traj.size(), 0);
  std::vector<double> net_grads(policy.mean_net.param_count());
  std::vector<double> critic_grads(critic.param_count());

  UpdateStats stats;
  stats.entropy_coef = entropy_coef;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::fill(net_grads.begin(), net_grads.end(), 0.0);
    std::fill(critic_grads.begin(), critic_grads.end(), 0.0);
    double log_std_grad = 0.0;

    PolicyLossStats ps = policy_loss_and_grad(
        policy, traj.observations, traj.actions, traj.log_probs, advantages,
        config.clip, entropy_coef, &net_grads, &log_std_grad);
    double vloss = value_loss_and_grad(critic, traj.observations, heads, returns,
                                       traj.values, config.clip,
                                       config.clip_value_loss, config.value_coef,
                                       &critic_grads);
    if (!std::isfinite(ps.policy_loss) || !std::isfinite(vloss) ||
        !std::isfinite(ps.approx_kl))
      throw NnError("ppo_update: non-finite statistics, update aborted");

    policy_opt.step(policy, net_grads, log_std_grad);
    critic_opt.step(critic.params().data(), critic_grads.data());

    stats.policy_loss = ps.policy_loss;
    stats.value_loss = vloss;
    stats.entropy = ps.entropy;
    stats.approx_kl = ps.approx_kl;
    stats.epochs_run = epoch + 1;
    if (ps.approx_kl > config.kl_stop) {
      stats.stopped_early = true;
      break;
    }
  }
  return stats;
}

}  // namespace procuresim::nn
