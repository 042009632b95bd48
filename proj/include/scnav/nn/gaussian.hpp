#pragma once

#include <Eigen/Core>
#include <cmath>
#include <stdexcept>

#include "scnav/random.hpp"

namespace scnav::nn {

constexpr double kLog2Pi = 1.8378770664093453;  // ln(2*pi)

/// Draws a = mu + sigma * z with z two independent standard normals.
inline Eigen::Vector2d sample_action(const Eigen::Vector2d& mu, double sigma, RngStream& rng) {
  if (!(sigma > 0.0)) throw std::invalid_argument("sample_action: sigma must be positive");
  return mu + sigma * Eigen::Vector2d(rng.gaussian(), rng.gaussian());
}

/// Log-density of the 2-D isotropic Gaussian N(mu, sigma^2 I) at a.
inline double log_prob(const Eigen::Vector2d& mu, double sigma, const Eigen::Vector2d& a) {
  if (!(sigma > 0.0)) throw std::invalid_argument("log_prob: sigma must be positive");
  return -(a - mu).squaredNorm() / (2.0 * sigma * sigma) - 2.0 * std::log(sigma) - kLog2Pi;
}

/// KL(N(mu1, s1^2 I) || N(mu2, s2^2 I)) for 2-D isotropic Gaussians.
inline double kl_diag_gauss(const Eigen::Vector2d& mu1, double sigma1,
                            const Eigen::Vector2d& mu2, double sigma2) {
  if (!(sigma1 > 0.0) || !(sigma2 > 0.0)) {
    throw std::invalid_argument("kl_diag_gauss: sigmas must be positive");
  }
  const double s1sq = sigma1 * sigma1;
  const double s2sq = sigma2 * sigma2;
  return 2.0 * std::log(sigma2 / sigma1) +
         (2.0 * s1sq + (mu1 - mu2).squaredNorm()) / (2.0 * s2sq) - 1.0;
}

/// Exploration schedule: sigma decays linearly from `start` to `end` over
/// `decay_iters` training iterations and is held constant afterwards (and
/// throughout evaluation).
struct SigmaSchedule {
  double start = 0.5;
  double end = 0.05;
  int decay_iters = 100;

  double at(int iter) const {
    if (iter >= decay_iters) return end;
    if (iter <= 0) return start;
    return start + (end - start) * static_cast<double>(iter) / decay_iters;
  }
};

}  // namespace scnav::nn
