#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "battbench/battery_env.hpp"
#include "battbench/nn.hpp"
#include "battbench/rng.hpp"

namespace battbench::ppo {

using Net = nn::Mlp<double>;

inline constexpr int kStateDim = 6;
inline constexpr int kActionCount = 3;
/// Action index -> multiple of a_max.
inline constexpr std::array<int, kActionCount> kActionMoves = {-1, 0, +1};
inline constexpr int kIdleAction = 1;

/// Train-split statistics used to normalize price and demand.
struct NormStats {
  double price_mean = 0.0;
  double price_sd = 1.0;
  double demand_mean = 0.0;
  double demand_sd = 1.0;

  static NormStats from(const ExogenousSeries& train);
};

using StateVector = Eigen::Matrix<double, kStateDim, 1>;

/// [soc, price_norm, demand_norm, sin(2 pi h / 24), cos(2 pi h / 24), weekend]
StateVector encode_state(const EnvState& state, const NormStats& norm);

struct PpoConfig {
  double clip_eps = 0.2;
  double gae_lambda = 0.95;
  double gamma = 1.0;
  double lr = 3e-4;
  int rollout_steps = 2048;
  int minibatch = 64;
  int epochs_per_update = 10;
  long total_env_steps = 3'000'000;
  double entropy_coef = 0.01;
  double value_coef = 0.5;
  double max_grad_norm = 0.5;
  int episode_length = 168;
  // Learn on the battery's share of the reward, -price * effective_a * E. The
  // dropped -price * demand term does not depend on the actions.
  bool arbitrage_reward = true;
  // Decay lr linearly to zero over total_env_steps.
  bool anneal_lr = true;
  std::vector<int> hidden = {64, 64};
  std::uint64_t seed = 0;

  void validate() const;
};

/// Flat storage of collected transitions. Transitions are laid out episode by
/// episode; episode_end[i] marks the last step of an episode.
struct RolloutBatch {
  Eigen::MatrixXd states;  // kStateDim x n
  std::vector<int> actions;
  Eigen::VectorXd rewards;
  Eigen::VectorXd log_probs_old;
  Eigen::VectorXd values;
  std::vector<bool> episode_end;
  // Filled by compute_returns_and_advantages.
  Eigen::VectorXd returns;        // undiscounted reward-to-go within the episode
  Eigen::VectorXd value_targets;  // lambda-returns, A_t + V(s_t) before standardization
  Eigen::VectorXd advantages;

  std::size_t size() const { return actions.size(); }
};

/// GAE over the batch. Episode ends are terminal (no bootstrap). With
/// lambda = 1 the raw advantages equal returns - values exactly.
void compute_advantages(RolloutBatch& batch, double gamma, double lambda, bool standardize);

/// Evaluates V on the batch states, then runs compute_advantages with the
/// configured gamma and lambda and per-batch standardization.
void compute_returns_and_advantages(RolloutBatch& batch, const Net& value_net, const PpoConfig& config);

/// min(r A, clip(r, 1 - eps, 1 + eps) A)
double clipped_surrogate(double ratio, double advantage, double clip_eps);

/// d(surrogate)/d(ratio): A where the unclipped term is the active minimum,
/// zero where the clipped term is.
double clipped_surrogate_slope(double ratio, double advantage, double clip_eps);

/// One-step TD regression target r + gamma * V(s').
inline double td_target(double reward, double gamma, double next_value) { return reward + gamma * next_value; }

struct UpdateStats {
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
};

/// Optimizer state of both networks, kept across updates.
struct Optimizers {
  nn::Adam<double> policy;
  nn::Adam<double> value;
};

/// Clipped-surrogate loss (minus the entropy bonus) over batch samples
/// `indices` under the current policy, with its gradient.
struct PolicyLoss {
  double loss = 0.0;
  double entropy = 0.0;        // mean over the samples
  double approx_kl = 0.0;      // mean of (r - 1) - log r
  double clip_fraction = 0.0;  // share of samples with |r - 1| > clip_eps
  nn::MlpParams<double> grads;
};

PolicyLoss policy_loss(const Net& policy, const RolloutBatch& batch, std::span<const std::size_t> indices,
                       const PpoConfig& config);

UpdateStats ppo_update(Net& policy, Net& value, Optimizers& optim, const RolloutBatch& batch,
                       const PpoConfig& config, Rng& rng);

struct CurvePoint {
  long iteration = 0;
  long env_steps = 0;
  double mean_episode_cost = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
};

struct Agent {
  Net policy;
  Net value;
  NormStats norm;
};

struct TrainResult {
  Agent agent;
  std::vector<CurvePoint> curve;
  long env_steps = 0;
};

Net make_policy_net(const PpoConfig& config, Rng& rng);
Net make_value_net(const PpoConfig& config, Rng& rng);

/// Collects whole episodes from random start offsets (and random lattice
/// start SOC) until at least rollout_steps transitions are gathered.
RolloutBatch collect_rollouts(const Net& policy, const Net& value, const ExogenousSeries& train,
                              const BatteryParams& params, const NormStats& norm, const PpoConfig& config,
                              Rng& rng, std::vector<double>* episode_costs = nullptr);

/// Alternates rollout collection and clipped-surrogate updates until
/// total_env_steps are consumed. Deterministic per config.seed.
TrainResult train(const ExogenousSeries& train_series, const BatteryParams& params, const PpoConfig& config);

/// Highest-probability action; ties go idle, then discharge, then charge.
int greedy_index(const Eigen::Ref<const Eigen::VectorXd>& probs);
Action act_greedy(const Agent& agent, const EnvState& state, const BatteryParams& params);
Action act_sample(const Agent& agent, const EnvState& state, const BatteryParams& params, Rng& rng);

/// Greedy policy as an environment callback.
Policy greedy_policy(const Agent& agent, const BatteryParams& params);

void write_curve_csv(const std::vector<CurvePoint>& curve, std::ostream& out);

/// Agent checkpoint: normalization statistics followed by both networks.
void save_agent(const Agent& agent, std::ostream& out);
Agent load_agent(std::istream& in);
void save_agent(const Agent& agent, const std::filesystem::path& path);
Agent load_agent(const std::filesystem::path& path);

}  // namespace battbench::ppo
