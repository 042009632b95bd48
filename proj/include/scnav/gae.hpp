#pragma once

#include <stdexcept>
#include <vector>

namespace scnav {

/// Generalized advantage estimation over one episode by the backward
/// recursion A_i = delta_i + gamma*lambda*A_{i+1}, with
/// delta_i = r_i + gamma*V(s_{i+1}) - V(s_i). `values` holds V(s_0..s_T);
/// the caller sets V(s_T) to zero for terminal episodes or to the bootstrap
/// estimate for truncated ones.
inline std::vector<double> gae_advantages(const std::vector<double>& rewards,
                                          const std::vector<double>& values, double gamma,
                                          double lambda) {
  if (values.size() != rewards.size() + 1) {
    throw std::invalid_argument("gae_advantages: need V(s_0..s_T), one more than rewards");
  }
  std::vector<double> adv(rewards.size());
  double acc = 0.0;
  for (int i = static_cast<int>(rewards.size()) - 1; i >= 0; --i) {
    const auto u = static_cast<std::size_t>(i);
    const double delta = rewards[u] + gamma * values[u + 1] - values[u];
    acc = delta + gamma * lambda * acc;
    adv[u] = acc;
  }
  return adv;
}

/// Empirical discounted return from every step; a truncated episode adds the
/// discounted bootstrap value of the final state.
inline std::vector<double> discounted_returns(const std::vector<double>& rewards, double gamma,
                                              double bootstrap = 0.0) {
  std::vector<double> ret(rewards.size());
  double acc = bootstrap;
  for (int i = static_cast<int>(rewards.size()) - 1; i >= 0; --i) {
    const auto u = static_cast<std::size_t>(i);
    acc = rewards[u] + gamma * acc;
    ret[u] = acc;
  }
  return ret;
}

}  // namespace scnav
