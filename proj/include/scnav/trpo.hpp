#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "scnav/episode.hpp"
#include "scnav/gae.hpp"
#include "scnav/nn/gaussian.hpp"
#include "scnav/nn/networks.hpp"

namespace scnav {

struct TrpoConfig {
  double gamma = 0.995;
  double lambda = 0.96;
  /// Trust-region radius rule: epsilon = epsilon_scale / sigma.
  double epsilon_scale = 0.01;
  /// Average-displacement bound of the value regression constraint.
  double epsilon1 = 0.1;
  int cg_iters = 10;
  double cg_damping = 0.1;
  double cg_tol = 1e-10;
  int line_search_backtracks = 10;
  int value_passes = 5;
  bool normalize_advantages = true;
};

/// Per-step advantages and value-regression targets, aligned with the batch.
struct AdvantageSet {
  std::vector<std::vector<double>> advantages;
  std::vector<std::vector<double>> returns;
};

/// Advantages via GAE and empirical discounted-return targets for every
/// episode. Terminal episodes end with V(s_T) = 0; truncated ones bootstrap
/// from the value estimate of the final state.
inline AdvantageSet compute_gae(const EpisodeBatch& batch, const nn::ValueNet& value_net,
                                double gamma, double lambda) {
  AdvantageSet out;
  out.advantages.reserve(batch.episodes.size());
  out.returns.reserve(batch.episodes.size());
  for (const Episode& ep : batch.episodes) {
    std::vector<double> rewards(ep.steps.size());
    std::vector<double> values(ep.steps.size() + 1);
    for (std::size_t i = 0; i < ep.steps.size(); ++i) {
      rewards[i] = ep.steps[i].reward;
      values[i] = value_net.value(ep.steps[i].state_input);
    }
    values.back() = ep.truncated ? value_net.value(ep.final_state_input) : 0.0;
    out.advantages.push_back(gae_advantages(rewards, values, gamma, lambda));
    out.returns.push_back(
        discounted_returns(rewards, gamma, ep.truncated ? values.back() : 0.0));
  }
  return out;
}

/// Rescales advantages to zero mean, unit variance over the whole batch.
inline void normalize_advantages(AdvantageSet& adv) {
  double sum = 0.0;
  long n = 0;
  for (const auto& ep : adv.advantages) {
    for (double a : ep) {
      sum += a;
      ++n;
    }
  }
  if (n == 0) return;
  const double mean = sum / static_cast<double>(n);
  double var = 0.0;
  for (const auto& ep : adv.advantages) {
    for (double a : ep) var += (a - mean) * (a - mean);
  }
  const double stddev = std::sqrt(var / static_cast<double>(n)) + 1e-8;
  for (auto& ep : adv.advantages) {
    for (double& a : ep) a = (a - mean) / stddev;
  }
}

/// Conjugate gradient for Ax = b with A given as a matrix-vector product.
/// A must be symmetric positive definite.
struct CgResult {
  Eigen::VectorXd x;
  int iterations = 0;
  double rel_residual = 0.0;
};

inline CgResult conjugate_gradient(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& apply_a,
    const Eigen::VectorXd& b, int max_iters, double tol) {
  CgResult res;
  res.x = Eigen::VectorXd::Zero(b.size());
  Eigen::VectorXd r = b;
  Eigen::VectorXd p = b;
  double rs = r.squaredNorm();
  const double b_norm = std::max(b.norm(), 1e-300);
  res.rel_residual = std::sqrt(rs) / b_norm;
  for (int k = 0; k < max_iters && res.rel_residual > tol; ++k) {
    const Eigen::VectorXd ap = apply_a(p);
    const double p_ap = p.dot(ap);
    if (!std::isfinite(p_ap) || p_ap <= 0.0) {
      throw std::runtime_error("conjugate_gradient: operator is not positive definite (p.Ap=" +
                               std::to_string(p_ap) + ")");
    }
    const double alpha = rs / p_ap;
    res.x += alpha * p;
    r -= alpha * ap;
    const double rs_new = r.squaredNorm();
    if (!std::isfinite(rs_new)) {
      throw std::runtime_error("conjugate_gradient: non-finite residual");
    }
    p = r + (rs_new / rs) * p;
    rs = rs_new;
    res.iterations = k + 1;
    res.rel_residual = std::sqrt(rs) / b_norm;
  }
  return res;
}

namespace detail {

constexpr double kLogRatioClamp = 20.0;

}  // namespace detail

/// Sample-average surrogate: mean over steps of the importance ratio times
/// the advantage. Recurrent states are recomputed by re-running the policy
/// over each episode's observation sequence.
inline double surrogate_loss(const nn::GaussianPolicy& policy, const EpisodeBatch& batch,
                             const AdvantageSet& adv, double sigma) {
  double total = 0.0;
  long n = 0;
  for (std::size_t e = 0; e < batch.episodes.size(); ++e) {
    const Episode& ep = batch.episodes[e];
    std::vector<Eigen::VectorXd> inputs(ep.steps.size());
    for (std::size_t i = 0; i < ep.steps.size(); ++i) inputs[i] = ep.steps[i].obs_input;
    const auto mu = policy.forward_mu(inputs);
    for (std::size_t i = 0; i < ep.steps.size(); ++i) {
      const double logr = std::clamp(
          nn::log_prob(mu[i], sigma, ep.steps[i].action_raw) - ep.steps[i].log_prob,
          -detail::kLogRatioClamp, detail::kLogRatioClamp);
      total += std::exp(logr) * adv.advantages[e][i];
      ++n;
    }
  }
  return total / static_cast<double>(n);
}

/// Surrogate value and its exact gradient at the current parameters; also
/// hands back the per-episode traces for Fisher-vector products.
inline std::pair<double, Eigen::VectorXd> surrogate_with_grad(
    const nn::GaussianPolicy& policy, const EpisodeBatch& batch, const AdvantageSet& adv,
    double sigma, std::vector<std::vector<nn::StepTrace>>* traces_out = nullptr) {
  const double inv_var = 1.0 / (sigma * sigma);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(policy.param_count());
  double total = 0.0;
  long n = 0;
  for (const auto& ep : batch.episodes) n += static_cast<long>(ep.steps.size());
  const double inv_n = 1.0 / static_cast<double>(n);

  if (traces_out) traces_out->clear();
  for (std::size_t e = 0; e < batch.episodes.size(); ++e) {
    const Episode& ep = batch.episodes[e];
    std::vector<Eigen::VectorXd> inputs(ep.steps.size());
    for (std::size_t i = 0; i < ep.steps.size(); ++i) inputs[i] = ep.steps[i].obs_input;
    auto trace = policy.forward_trace(inputs);
    std::vector<Eigen::Vector2d> dmu(ep.steps.size());
    for (std::size_t i = 0; i < ep.steps.size(); ++i) {
      const double logr_raw =
          nn::log_prob(trace[i].mu, sigma, ep.steps[i].action_raw) - ep.steps[i].log_prob;
      const bool clamped = std::abs(logr_raw) > detail::kLogRatioClamp;
      const double ratio =
          std::exp(std::clamp(logr_raw, -detail::kLogRatioClamp, detail::kLogRatioClamp));
      total += ratio * adv.advantages[e][i];
      // d(ratio)/d(mu) = ratio * (a - mu)/sigma^2; zero in the clamped regime
      dmu[i] = clamped ? Eigen::Vector2d::Zero().eval()
                       : (inv_n * adv.advantages[e][i] * ratio * inv_var *
                          (ep.steps[i].action_raw - trace[i].mu))
                             .eval();
    }
    policy.backward(trace, dmu, grad);
    if (traces_out) traces_out->push_back(std::move(trace));
  }
  if (!grad.allFinite()) {
    throw std::runtime_error("surrogate_with_grad: non-finite gradient");
  }
  return {total * inv_n, grad};
}

/// Mean KL divergence between the rollout policy (cached means) and the
/// current parameters, both with shared sigma.
inline double mean_kl(const nn::GaussianPolicy& policy, const EpisodeBatch& batch, double sigma) {
  double total = 0.0;
  long n = 0;
  for (const Episode& ep : batch.episodes) {
    std::vector<Eigen::VectorXd> inputs(ep.steps.size());
    for (std::size_t i = 0; i < ep.steps.size(); ++i) inputs[i] = ep.steps[i].obs_input;
    const auto mu = policy.forward_mu(inputs);
    for (std::size_t i = 0; i < ep.steps.size(); ++i) {
      total += nn::kl_diag_gauss(ep.steps[i].mu, sigma, mu[i], sigma);
      ++n;
    }
  }
  return total / static_cast<double>(n);
}

/// Gradient of mean_kl with respect to the current parameters.
inline Eigen::VectorXd mean_kl_grad(const nn::GaussianPolicy& policy, const EpisodeBatch& batch,
                                    double sigma) {
  const double inv_var = 1.0 / (sigma * sigma);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(policy.param_count());
  long n = 0;
  for (const auto& ep : batch.episodes) n += static_cast<long>(ep.steps.size());
  const double inv_n = 1.0 / static_cast<double>(n);
  for (const Episode& ep : batch.episodes) {
    std::vector<Eigen::VectorXd> inputs(ep.steps.size());
    for (std::size_t i = 0; i < ep.steps.size(); ++i) inputs[i] = ep.steps[i].obs_input;
    const auto trace = policy.forward_trace(inputs);
    std::vector<Eigen::Vector2d> dmu(ep.steps.size());
    for (std::size_t i = 0; i < ep.steps.size(); ++i) {
      dmu[i] = inv_n * inv_var * (trace[i].mu - ep.steps[i].mu);
    }
    policy.backward(trace, dmu, grad);
  }
  return grad;
}

/// Damped Fisher-vector product (H + damping I) v, with H the Hessian of the
/// mean KL at the rollout parameters in Gauss-Newton form: for a Gaussian
/// with fixed sigma the curvature is J^T J / sigma^2 averaged over steps,
/// which is exact at theta = theta_old.
inline Eigen::VectorXd fisher_vector_product(
    const nn::GaussianPolicy& policy, const std::vector<std::vector<nn::StepTrace>>& traces,
    const Eigen::VectorXd& v, double sigma, double damping) {
  const double inv_var = 1.0 / (sigma * sigma);
  long n = 0;
  for (const auto& t : traces) n += static_cast<long>(t.size());
  const double scale = inv_var / static_cast<double>(n);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(policy.param_count());
  for (const auto& trace : traces) {
    auto mudot = policy.jvp(trace, v);
    for (auto& m : mudot) m *= scale;
    policy.backward(trace, mudot, out);
  }
  out += damping * v;
  return out;
}

struct UpdateReport {
  bool accepted = false;
  bool degenerate = false;  // vanishing gradient; parameters untouched
  double epsilon = 0.0;
  double kl = 0.0;
  double surrogate_before = 0.0;
  double surrogate_after = 0.0;
  double grad_norm = 0.0;
  int backtracks = 0;
};

/// One natural-gradient trust-region step: CG-solve the damped Fisher system
/// for the step direction, scale it so the quadratic KL model meets the
/// radius, then backtrack until the measured KL fits and the surrogate
/// improves. Failure leaves the parameters bit-identical.
inline UpdateReport trpo_update(nn::GaussianPolicy& policy, const EpisodeBatch& batch,
                                const AdvantageSet& adv, const TrpoConfig& cfg, double sigma) {
  UpdateReport rep;
  rep.epsilon = cfg.epsilon_scale / sigma;

  std::vector<std::vector<nn::StepTrace>> traces;
  auto [j0, grad] = surrogate_with_grad(policy, batch, adv, sigma, &traces);
  rep.surrogate_before = j0;
  rep.surrogate_after = j0;
  rep.grad_norm = grad.norm();
  if (rep.grad_norm < 1e-12) {
    rep.degenerate = true;
    return rep;
  }

  auto fvp = [&](const Eigen::VectorXd& x) {
    return fisher_vector_product(policy, traces, x, sigma, cfg.cg_damping);
  };
  const CgResult cg = conjugate_gradient(fvp, grad, cfg.cg_iters, cfg.cg_tol);
  const Eigen::VectorXd& dir = cg.x;
  const double d_ad = dir.dot(fvp(dir));
  if (!(d_ad > 0.0) || !std::isfinite(d_ad)) {
    rep.degenerate = true;
    return rep;
  }
  const double beta = std::sqrt(2.0 * rep.epsilon / d_ad);

  const Eigen::VectorXd theta0 = policy.flat();
  double step = beta;
  for (int k = 0; k <= cfg.line_search_backtracks; ++k, step *= 0.5) {
    policy.flat() = theta0 + step * dir;
    const double kl = mean_kl(policy, batch, sigma);
    const double j = surrogate_loss(policy, batch, adv, sigma);
    if (std::isfinite(kl) && std::isfinite(j) && kl <= rep.epsilon && j > j0) {
      rep.accepted = true;
      rep.kl = kl;
      rep.surrogate_after = j;
      rep.backtracks = k;
      return rep;
    }
  }
  policy.flat() = theta0;
  rep.backtracks = cfg.line_search_backtracks + 1;
  return rep;
}

struct ValueFitReport {
  double loss_before = 0.0;
  double loss_after = 0.0;
  int accepted_passes = 0;
  bool aborted = false;
};

namespace detail {

inline double value_loss(const nn::ValueNet& net,
                         const std::vector<const Eigen::VectorXd*>& inputs,
                         const std::vector<double>& targets) {
  double j = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const double r = net.value(*inputs[i]) - targets[i];
    j += r * r;
  }
  return j;
}

}  // namespace detail

/// Constrained value regression: full-batch gradient passes with backtracked
/// step sizes; a pass is accepted only if the squared-error loss decreases
/// and the average parameter-induced displacement from the pre-update
/// predictions, normalized by twice the initial loss, stays within epsilon1.
inline ValueFitReport fit_value(nn::ValueNet& net, const EpisodeBatch& batch,
                                const AdvantageSet& adv, double epsilon1, int passes) {
  std::vector<const Eigen::VectorXd*> inputs;
  std::vector<double> targets;
  for (std::size_t e = 0; e < batch.episodes.size(); ++e) {
    const Episode& ep = batch.episodes[e];
    for (std::size_t i = 0; i < ep.steps.size(); ++i) {
      inputs.push_back(&ep.steps[i].state_input);
      targets.push_back(adv.returns[e][i]);
    }
  }

  ValueFitReport rep;
  const Eigen::VectorXd zeta_start = net.flat();
  std::vector<double> v_start(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) v_start[i] = net.value(*inputs[i]);
  const double j_start = detail::value_loss(net, inputs, targets);
  rep.loss_before = j_start;
  rep.loss_after = j_start;
  if (!std::isfinite(j_start)) {
    net.flat() = zeta_start;
    rep.aborted = true;
    return rep;
  }

  auto constraint_ok = [&]() {
    if (j_start <= 0.0) return true;
    double disp = 0.0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      disp += std::abs(net.value(*inputs[i]) - v_start[i]);
    }
    return disp / (2.0 * j_start) <= epsilon1;
  };

  double j_cur = j_start;
  for (int pass = 0; pass < passes; ++pass) {
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(net.param_count());
    nn::ValueNet::Trace trace;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      const double v = net.forward(*inputs[i], &trace);
      net.backward(trace, 2.0 * (v - targets[i]), grad);
    }
    if (!grad.allFinite()) {
      net.flat() = zeta_start;
      rep.aborted = true;
      rep.loss_after = j_start;
      return rep;
    }
    const double g2 = grad.squaredNorm();
    if (g2 <= 0.0) break;

    const Eigen::VectorXd zeta_cur = net.flat();
    double alpha = j_cur / g2;  // Cauchy-scale first trial
    bool accepted = false;
    for (int k = 0; k < 30; ++k, alpha *= 0.5) {
      net.flat() = zeta_cur - alpha * grad;
      const double j_new = detail::value_loss(net, inputs, targets);
      if (std::isfinite(j_new) && j_new < j_cur && constraint_ok()) {
        j_cur = j_new;
        accepted = true;
        ++rep.accepted_passes;
        break;
      }
    }
    if (!accepted) {
      net.flat() = zeta_cur;
      break;
    }
  }
  rep.loss_after = j_cur;
  return rep;
}

struct TrainSettings {
  long batch_size = 50000;
  int iterations = 1200;
  std::uint64_t seed = 0;
  int workers = 1;
  int checkpoint_every = 10;
};

/// One metrics-log line per training iteration.
struct IterationMetrics {
  int iter = 0;
  double sigma = 0.0;
  double epsilon = 0.0;
  double mean_return = 0.0;
  double mean_discounted_return = 0.0;
  double mean_episode_len = 0.0;
  double rate_rg = 0.0;
  double rate_hc = 0.0;
  double rate_hp = 0.0;
  double rate_ho = 0.0;
  double rate_lc = 0.0;
  double mean_kl = 0.0;
  double surrogate_improvement = 0.0;

  static std::string csv_header() {
    return "iter,sigma,epsilon,mean_return,mean_discounted_return,mean_episode_len,"
           "rate_RG,rate_HC,rate_HP,rate_HO,rate_LC,mean_kl,surrogate_improvement";
  }

  std::string csv_row() const {
    char buf[512];
    std::snprintf(buf, sizeof(buf),
                  "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g",
                  iter, sigma, epsilon, mean_return, mean_discounted_return, mean_episode_len,
                  rate_rg, rate_hc, rate_hp, rate_ho, rate_lc, mean_kl, surrogate_improvement);
    return buf;
  }
};

/// Full training iteration cycle: collect a batch under the scheduled sigma,
/// estimate advantages, take the trust-region policy step, then refit the
/// value function. Reports one metrics row per iteration and invokes the
/// checkpoint callback on the configured cadence and at the end.
template <typename CheckpointFn>
std::vector<IterationMetrics> train_loop(const std::vector<EnvironmentSpec>& envs,
                                         nn::GaussianPolicy& policy, nn::ValueNet& value_net,
                                         const nn::SigmaSchedule& schedule,
                                         const EpisodeParams& ep_params, const TrpoConfig& trpo,
                                         const TrainSettings& settings, int start_iter,
                                         std::ostream* metrics_out, CheckpointFn&& checkpoint) {
  std::vector<IterationMetrics> rows;
  for (int iter = start_iter; iter < settings.iterations; ++iter) {
    const double sigma = schedule.at(iter);
    EpisodeBatch batch =
        collect_batch(envs, policy, sigma, ep_params, settings.seed,
                      static_cast<std::uint64_t>(iter), settings.batch_size, settings.workers);

    AdvantageSet adv = compute_gae(batch, value_net, trpo.gamma, trpo.lambda);
    if (trpo.normalize_advantages) normalize_advantages(adv);

    const UpdateReport update = trpo_update(policy, batch, adv, trpo, sigma);
    fit_value(value_net, batch, adv, trpo.epsilon1, trpo.value_passes);

    IterationMetrics m;
    m.iter = iter;
    m.sigma = sigma;
    m.epsilon = update.epsilon;
    const double n_eps = static_cast<double>(batch.episodes.size());
    for (const Episode& e : batch.episodes) {
      m.mean_return += e.total_reward() / n_eps;
      m.mean_discounted_return += e.discounted_return(trpo.gamma) / n_eps;
      m.mean_episode_len += static_cast<double>(e.steps.size()) / n_eps;
      switch (e.cause) {
        case TerminationCause::GoalReached: m.rate_rg += 100.0 / n_eps; break;
        case TerminationCause::HitCompanion: m.rate_hc += 100.0 / n_eps; break;
        case TerminationCause::HitPedestrian: m.rate_hp += 100.0 / n_eps; break;
        case TerminationCause::HitObstacle: m.rate_ho += 100.0 / n_eps; break;
        case TerminationCause::Stray: m.rate_lc += 100.0 / n_eps; break;
        case TerminationCause::None: break;
      }
    }
    m.mean_kl = update.kl;
    m.surrogate_improvement = update.surrogate_after - update.surrogate_before;
    rows.push_back(m);
    if (metrics_out) {
      (*metrics_out) << m.csv_row() << '\n';
      metrics_out->flush();
    }
    if (settings.checkpoint_every > 0 && (iter + 1) % settings.checkpoint_every == 0) {
      checkpoint(iter + 1);
    }
  }
  checkpoint(settings.iterations);
  return rows;
}

}  // namespace scnav
