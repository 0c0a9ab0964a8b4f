#pragma once

#include <Eigen/Dense>
#include <vector>

#include "coadapt/image.hpp"
#include "coadapt/prompt.hpp"

namespace coadapt {

/// Cosine of image and prompt embeddings; the toy stand-in for a CLIP score.
double clip_score(const ToyImage& img, const Prompt& prompt);

/// Sample covariance (divisor N - 1) of row samples; throws InsufficientSamples for N < 2.
Eigen::MatrixXd covariance(const Eigen::MatrixXd& samples);
Eigen::MatrixXd covariance(const std::vector<Eigen::VectorXd>& samples);

struct CovarianceEstimate {
  Eigen::MatrixXd sigma_x;
  Eigen::MatrixXd sigma_y;
  Eigen::MatrixXd sigma_z;  // joint covariance of [x; y]
  std::size_t samples = 0;
  double ridge = 0.0;       // added to every diagonal before the determinants
};

inline constexpr double kDefaultRidge = 1e-6;

/// 0.5 * log(det(Sx) det(Sy) / det(Sz)) in nats, via Cholesky log-determinants.
double gaussian_mi(const CovarianceEstimate& est);

CovarianceEstimate estimate_covariances(const Eigen::MatrixXd& xs, const Eigen::MatrixXd& ys,
                                        double ridge = kDefaultRidge);

/// Gaussian mutual information of paired samples (rows of xs and ys).
double empirical_mi(const Eigen::MatrixXd& xs, const Eigen::MatrixXd& ys,
                    double ridge = kDefaultRidge);
double empirical_mi(const std::vector<Eigen::VectorXd>& xs, const std::vector<Eigen::VectorXd>& ys,
                    double ridge = kDefaultRidge);

}  // namespace coadapt
