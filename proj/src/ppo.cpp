#include "battbench/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include "battbench/errors.hpp"
#include "battbench/nn_io.hpp"
#include "battbench/text_io.hpp"

namespace battbench::ppo {

namespace {

constexpr char kAgentTag[] = "battbench-agent";
constexpr int kAgentVersion = 1;

double sample_sd(const Eigen::VectorXd& x, double mean) {
  return std::sqrt((x.array() - mean).square().mean());
}

Eigen::VectorXd policy_probs(const Agent& agent, const EnvState& state) {
  const nn::Matrix<double> input = encode_state(state, agent.norm);
  return agent.policy.forward(input).col(0);
}

Action to_action(int index, const BatteryParams& params) {
  return Action{kActionMoves[index] * params.a_max};
}

}  // namespace

NormStats NormStats::from(const ExogenousSeries& train) {
  if (train.size() == 0) throw Error(ErrorKind::Size, "normalization needs a non-empty training series");
  NormStats s;
  s.price_mean = train.prices.mean();
  s.price_sd = sample_sd(train.prices, s.price_mean);
  s.demand_mean = train.demands.mean();
  s.demand_sd = sample_sd(train.demands, s.demand_mean);
  // A flat channel carries no information; keep it at zero after centering.
  if (!(s.price_sd > 0.0)) s.price_sd = 1.0;
  if (!(s.demand_sd > 0.0)) s.demand_sd = 1.0;
  return s;
}

StateVector encode_state(const EnvState& state, const NormStats& norm) {
  if (!(norm.price_sd > 0.0) || !(norm.demand_sd > 0.0)) {
    throw Error(ErrorKind::InvalidInput, "state encoding needs positive price and demand sd");
  }
  const double angle = 2.0 * std::numbers::pi * state.hour / 24.0;
  StateVector x;
  x << state.soc, (state.price - norm.price_mean) / norm.price_sd, (state.demand - norm.demand_mean) / norm.demand_sd,
      std::sin(angle), std::cos(angle), state.is_weekend ? 1.0 : 0.0;
  if (!x.allFinite()) throw Error(ErrorKind::InvalidInput, "non-finite state encoding");
  return x;
}

void PpoConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorKind::Validation, "ppo: " + m); };
  if (!(clip_eps > 0.0 && clip_eps < 1.0)) fail("clip_eps must lie in (0, 1)");
  if (gamma != 1.0) fail("gamma is fixed at 1");
  if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) fail("gae_lambda must lie in [0, 1]");
  if (!(lr >= 0.0)) fail("lr must be >= 0");
  if (rollout_steps < 1 || minibatch < 1 || epochs_per_update < 1) fail("batch sizes must be positive");
  if (episode_length < 1) fail("episode_length must be positive");
  if (total_env_steps < 0) fail("total_env_steps must be >= 0");
  if (entropy_coef < 0.0 || value_coef <= 0.0 || max_grad_norm <= 0.0) fail("bad loss coefficients");
  for (int h : hidden) {
    if (h < 1) fail("hidden widths must be positive");
  }
}

void compute_advantages(RolloutBatch& batch, double gamma, double lambda, bool standardize) {
  const std::size_t n = batch.size();
  if (static_cast<std::size_t>(batch.rewards.size()) != n || static_cast<std::size_t>(batch.values.size()) != n ||
      batch.episode_end.size() != n) {
    throw Error(ErrorKind::Shape, "rollout batch fields have unequal lengths");
  }
  if (n > 0 && !batch.episode_end.back()) {
    throw Error(ErrorKind::InvalidInput, "rollout batch must end on an episode boundary");
  }
  batch.returns.resize(n);
  batch.advantages.resize(n);
  double g = 0.0, gae = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    const bool end = batch.episode_end[i];
    const double next_value = end ? 0.0 : batch.values[i + 1];
    g = batch.rewards[i] + gamma * (end ? 0.0 : g);
    const double delta = batch.rewards[i] + gamma * next_value - batch.values[i];
    gae = delta + gamma * lambda * (end ? 0.0 : gae);
    batch.returns[i] = g;
    batch.advantages[i] = gae;
  }
  if (lambda == 1.0 && gamma == 1.0) {
    // Same quantity as the telescoped GAE sum, without its rounding.
    batch.advantages = batch.returns - batch.values;
  }
  batch.value_targets = batch.advantages + batch.values;
  if (standardize && n > 1) {
    const double mean = batch.advantages.mean();
    const double sd = sample_sd(batch.advantages, mean);
    batch.advantages.array() -= mean;
    if (sd > 1e-12) batch.advantages /= sd;
  }
  if (!batch.advantages.allFinite()) throw Error(ErrorKind::Numeric, "non-finite advantages");
}

void compute_returns_and_advantages(RolloutBatch& batch, const Net& value_net, const PpoConfig& config) {
  batch.values = value_net.forward(batch.states).row(0).transpose();
  compute_advantages(batch, config.gamma, config.gae_lambda, true);
}

double clipped_surrogate(double ratio, double advantage, double clip_eps) {
  const double clipped = std::clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps);
  return std::min(ratio * advantage, clipped * advantage);
}

double clipped_surrogate_slope(double ratio, double advantage, double clip_eps) {
  const double clipped = std::clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps);
  return ratio * advantage <= clipped * advantage ? advantage : 0.0;
}

PolicyLoss policy_loss(const Net& policy, const RolloutBatch& batch, std::span<const std::size_t> indices,
                       const PpoConfig& config) {
  const std::size_t m = indices.size();
  nn::Matrix<double> states(kStateDim, m);
  for (std::size_t j = 0; j < m; ++j) states.col(j) = batch.states.col(indices[j]);

  nn::Tape<double> tape;
  const nn::Matrix<double> probs = policy.forward(states, &tape);
  const nn::Matrix<double> logp_all = nn::log_softmax(tape.logits());
  nn::Matrix<double> d_logits(kActionCount, m);
  PolicyLoss out;
  for (std::size_t j = 0; j < m; ++j) {
    const std::size_t idx = indices[j];
    const int a = batch.actions[idx];
    const double adv = batch.advantages[idx];
    const double log_ratio = logp_all(a, j) - batch.log_probs_old[idx];
    const double ratio = std::exp(log_ratio);
    out.loss -= clipped_surrogate(ratio, adv, config.clip_eps);
    const double d_logp = -clipped_surrogate_slope(ratio, adv, config.clip_eps) * ratio / m;
    const double h = -(probs.col(j).array() * logp_all.col(j).array()).sum();
    out.entropy += h;
    for (int k = 0; k < kActionCount; ++k) {
      const double onehot = k == a ? 1.0 : 0.0;
      d_logits(k, j) = d_logp * (onehot - probs(k, j)) + config.entropy_coef / m * probs(k, j) * (logp_all(k, j) + h);
    }
    out.approx_kl += (ratio - 1.0) - log_ratio;
    out.clip_fraction += std::abs(ratio - 1.0) > config.clip_eps ? 1.0 : 0.0;
  }
  const double md = static_cast<double>(m);
  out.entropy /= md;
  out.approx_kl /= md;
  out.clip_fraction /= md;
  out.loss = out.loss / md - config.entropy_coef * out.entropy;
  out.grads = policy.backward_logits(tape, d_logits);
  return out;
}

UpdateStats ppo_update(Net& policy, Net& value, Optimizers& optim, const RolloutBatch& batch,
                       const PpoConfig& config, Rng& rng) {
  const std::size_t n = batch.size();
  if (n == 0) return {};
  if (!batch.states.allFinite() || !batch.advantages.allFinite() || !batch.value_targets.allFinite()) {
    throw Error(ErrorKind::Numeric, "non-finite rollout batch");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  UpdateStats stats;
  std::size_t samples = 0;
  for (int epoch = 0; epoch < config.epochs_per_update; ++epoch) {
    for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
    for (std::size_t begin = 0; begin < n; begin += config.minibatch) {
      const std::size_t m = std::min<std::size_t>(config.minibatch, n - begin);
      nn::Matrix<double> states(kStateDim, m);
      for (std::size_t j = 0; j < m; ++j) states.col(j) = batch.states.col(order[begin + j]);

      PolicyLoss pl =
          policy_loss(policy, batch, std::span<const std::size_t>(order.data() + begin, m), config);

      nn::Tape<double> vtape;
      const nn::Matrix<double> v = value.forward(states, &vtape);
      nn::Matrix<double> dv(1, m);
      double value_loss = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        const double err = v(0, j) - batch.value_targets[order[begin + j]];
        value_loss += err * err;
        dv(0, j) = config.value_coef * 2.0 * err / m;
      }
      value_loss = config.value_coef * value_loss / m;
      if (!std::isfinite(pl.loss) || !std::isfinite(value_loss)) {
        std::ostringstream msg;
        msg << "non-finite loss in PPO update (epoch " << epoch << ", policy " << pl.loss << ", value "
            << value_loss << ")";
        throw Error(ErrorKind::Numeric, msg.str());
      }

      auto vgrad = value.backward_logits(vtape, dv);
      nn::clip_grad_norm(pl.grads, config.max_grad_norm);
      nn::clip_grad_norm(vgrad, config.max_grad_norm);
      optim.policy.step(policy, pl.grads, config.lr);
      optim.value.step(value, vgrad, config.lr);

      stats.policy_loss += pl.loss * m;
      stats.value_loss += value_loss * m;
      stats.entropy += pl.entropy * m;
      stats.approx_kl += pl.approx_kl * m;
      stats.clip_fraction += pl.clip_fraction * m;
      samples += m;
    }
  }
  const double total = static_cast<double>(samples);
  stats.approx_kl /= total;
  stats.clip_fraction /= total;
  stats.policy_loss /= total;
  stats.value_loss /= total;
  stats.entropy /= total;
  return stats;
}

Net make_policy_net(const PpoConfig& config, Rng& rng) {
  std::vector<int> widths{kStateDim};
  widths.insert(widths.end(), config.hidden.begin(), config.hidden.end());
  widths.push_back(kActionCount);
  return Net::xavier(widths, nn::Head::Softmax, rng);
}

Net make_value_net(const PpoConfig& config, Rng& rng) {
  std::vector<int> widths{kStateDim};
  widths.insert(widths.end(), config.hidden.begin(), config.hidden.end());
  widths.push_back(1);
  return Net::xavier(widths, nn::Head::Linear, rng);
}

namespace {

RolloutBatch collect_episodes(const Net& policy, const Net& value, const ExogenousSeries& train,
                              const BatteryParams& params, const NormStats& norm, const PpoConfig& config,
                              long episodes, Rng& rng, std::vector<double>* episode_costs) {
  const auto len = static_cast<std::size_t>(config.episode_length);
  if (train.size() < len) {
    throw Error(ErrorKind::Size, "training series shorter than one episode (" + std::to_string(len) + " steps)");
  }
  const std::size_t n = static_cast<std::size_t>(episodes) * len;
  RolloutBatch batch;
  batch.states.resize(kStateDim, n);
  batch.actions.resize(n);
  batch.rewards.resize(n);
  batch.log_probs_old.resize(n);
  batch.values.resize(n);
  batch.episode_end.assign(n, false);

  std::size_t i = 0;
  for (long e = 0; e < episodes; ++e) {
    const std::size_t start = rng.below(train.size() - len + 1);
    const int level = static_cast<int>(rng.below(static_cast<std::uint64_t>(params.lattice_levels())));
    EnvState state = observe(train, start, params.disabled() ? params.default_soc0() : params.lattice_soc(level));
    double cost = 0.0;
    for (std::size_t k = 0; k < len; ++k, ++i) {
      const nn::Matrix<double> x = encode_state(state, norm);
      const Eigen::VectorXd probs = policy.forward(x).col(0);
      const int a = rng.categorical(std::span<const double>(probs.data(), probs.size()));
      const StepOutcome out = step(state, to_action(a, params), params, train);
      batch.states.col(i) = x;
      batch.actions[i] = a;
      batch.rewards[i] = config.arbitrage_reward ? out.reward + state.price * state.demand : out.reward;
      batch.log_probs_old[i] = std::log(probs[a]);
      batch.values[i] = value.forward(x)(0, 0);
      cost -= out.reward;
      state = out.next_state;
    }
    batch.episode_end[i - 1] = true;
    if (episode_costs) episode_costs->push_back(cost);
  }
  return batch;
}

}  // namespace

RolloutBatch collect_rollouts(const Net& policy, const Net& value, const ExogenousSeries& train,
                              const BatteryParams& params, const NormStats& norm, const PpoConfig& config,
                              Rng& rng, std::vector<double>* episode_costs) {
  const long episodes = (config.rollout_steps + config.episode_length - 1) / config.episode_length;
  return collect_episodes(policy, value, train, params, norm, config, episodes, rng, episode_costs);
}

TrainResult train(const ExogenousSeries& train_series, const BatteryParams& params, const PpoConfig& config) {
  config.validate();
  params.validate();
  Rng rng(config.seed);
  TrainResult result{Agent{make_policy_net(config, rng), make_value_net(config, rng), NormStats::from(train_series)},
                     {},
                     0};
  Agent& agent = result.agent;
  Optimizers optim{nn::Adam<double>(agent.policy), nn::Adam<double>(agent.value)};

  const long per_iteration = (config.rollout_steps + config.episode_length - 1) / config.episode_length;
  long iteration = 0;
  while (true) {
    const long budget_episodes = (config.total_env_steps - result.env_steps) / config.episode_length;
    const long episodes = std::min(per_iteration, budget_episodes);
    if (episodes <= 0) break;
    std::vector<double> costs;
    RolloutBatch batch =
        collect_episodes(agent.policy, agent.value, train_series, params, agent.norm, config, episodes, rng, &costs);
    result.env_steps += static_cast<long>(batch.size());
    compute_returns_and_advantages(batch, agent.value, config);
    PpoConfig step_config = config;
    if (config.anneal_lr) {
      step_config.lr = config.lr * (1.0 - static_cast<double>(result.env_steps - static_cast<long>(batch.size())) /
                                              static_cast<double>(config.total_env_steps));
    }
    const UpdateStats stats = ppo_update(agent.policy, agent.value, optim, batch, step_config, rng);
    result.curve.push_back(CurvePoint{iteration++, result.env_steps,
                                      std::accumulate(costs.begin(), costs.end(), 0.0) / costs.size(),
                                      stats.approx_kl, stats.clip_fraction});
  }
  return result;
}

int greedy_index(const Eigen::Ref<const Eigen::VectorXd>& probs) {
  // Preference order for ties.
  constexpr int order[kActionCount] = {kIdleAction, 0, 2};
  int best = order[0];
  for (int k : order) {
    if (probs[k] > probs[best]) best = k;
  }
  return best;
}

Action act_greedy(const Agent& agent, const EnvState& state, const BatteryParams& params) {
  return to_action(greedy_index(policy_probs(agent, state)), params);
}

Action act_sample(const Agent& agent, const EnvState& state, const BatteryParams& params, Rng& rng) {
  const Eigen::VectorXd probs = policy_probs(agent, state);
  return to_action(rng.categorical(std::span<const double>(probs.data(), probs.size())), params);
}

Policy greedy_policy(const Agent& agent, const BatteryParams& params) {
  return [&agent, params](const EnvState& state) { return act_greedy(agent, state, params); };
}

void write_curve_csv(const std::vector<CurvePoint>& curve, std::ostream& out) {
  using text_io::format_double;
  out << "iter,env_steps,mean_episode_cost,approx_kl,clip_frac\n";
  for (const auto& p : curve) {
    out << p.iteration << ',' << p.env_steps << ',' << format_double(p.mean_episode_cost) << ','
        << format_double(p.approx_kl) << ',' << format_double(p.clip_fraction) << '\n';
  }
}

void save_agent(const Agent& agent, std::ostream& out) {
  using text_io::format_double;
  out << kAgentTag << ' ' << kAgentVersion << '\n';
  out << "norm " << format_double(agent.norm.price_mean) << ' ' << format_double(agent.norm.price_sd) << ' '
      << format_double(agent.norm.demand_mean) << ' ' << format_double(agent.norm.demand_sd) << '\n';
  nn::save_mlp(agent.policy, out);
  nn::save_mlp(agent.value, out);
}

Agent load_agent(std::istream& in) {
  using namespace text_io;
  expect_token(in, kAgentTag);
  if (read_int(in, "agent version") != kAgentVersion) throw Error(ErrorKind::Parse, "unsupported agent version");
  expect_token(in, "norm");
  NormStats norm;
  norm.price_mean = read_double(in, "price_mean");
  norm.price_sd = read_double(in, "price_sd");
  norm.demand_mean = read_double(in, "demand_mean");
  norm.demand_sd = read_double(in, "demand_sd");
  Net policy = nn::load_mlp(in);
  Net value = nn::load_mlp(in);
  if (policy.input_dim() != kStateDim || policy.output_dim() != kActionCount || policy.head() != nn::Head::Softmax ||
      value.input_dim() != kStateDim || value.output_dim() != 1) {
    throw Error(ErrorKind::Shape, "agent checkpoint has unexpected network shapes");
  }
  return Agent{std::move(policy), std::move(value), norm};
}

void save_agent(const Agent& agent, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  save_agent(agent, out);
}

Agent load_agent(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  return load_agent(in);
}

}  // namespace battbench::ppo
