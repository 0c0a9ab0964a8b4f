#include "coadapt/reward.hpp"

#include <algorithm>
#include <cmath>

#include "coadapt/error.hpp"
#include "coadapt/generator.hpp"

namespace coadapt {

double clip_score(const ToyImage& img, const Prompt& prompt) {
  const Eigen::VectorXd p = prompt_embedding(prompt);
  const Eigen::VectorXd v = image_embedding(img, static_cast<int>(p.size()));
  return std::clamp(v.dot(p), -1.0, 1.0);
}

Eigen::MatrixXd covariance(const Eigen::MatrixXd& samples) {
  if (samples.rows() < 2) fail(ErrorCode::InsufficientSamples, "covariance needs N >= 2");
  const Eigen::MatrixXd centered = samples.rowwise() - samples.colwise().mean();
  Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(samples.rows() - 1);
  return 0.5 * (cov + cov.transpose());
}

namespace {

Eigen::MatrixXd to_rows(const std::vector<Eigen::VectorXd>& samples) {
  if (samples.empty()) return {};
  Eigen::MatrixXd m(static_cast<Eigen::Index>(samples.size()), samples.front().size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].size() != m.cols()) fail(ErrorCode::DimError, "samples differ in dimension");
    m.row(static_cast<Eigen::Index>(i)) = samples[i].transpose();
  }
  return m;
}

double log_det(const Eigen::MatrixXd& m, double ridge) {
  const Eigen::MatrixXd reg = m + ridge * Eigen::MatrixXd::Identity(m.rows(), m.cols());
  if ((reg - reg.transpose()).cwiseAbs().maxCoeff() > 1e-9) {
    fail(ErrorCode::SingularCovariance, "covariance is not symmetric");
  }
  const Eigen::LLT<Eigen::MatrixXd> llt(reg);
  if (llt.info() != Eigen::Success) {
    fail(ErrorCode::SingularCovariance, "covariance is not positive definite after ridge");
  }
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

// A marginal with no spread at all carries no distribution for the ridge to
// regularize.
void require_spread(const Eigen::MatrixXd& cov, const Eigen::MatrixXd& samples, const char* name) {
  const double scale = 1.0 + samples.colwise().mean().squaredNorm();
  if (cov.trace() <= 1e-20 * scale) {
    fail(ErrorCode::SingularCovariance, std::string(name) + " samples have zero variance");
  }
}

}  // namespace

Eigen::MatrixXd covariance(const std::vector<Eigen::VectorXd>& samples) {
  return covariance(to_rows(samples));
}

double gaussian_mi(const CovarianceEstimate& est) {
  if (est.sigma_z.rows() != est.sigma_x.rows() + est.sigma_y.rows()) {
    fail(ErrorCode::DimError, "joint covariance dimension mismatch");
  }
  return 0.5 * (log_det(est.sigma_x, est.ridge) + log_det(est.sigma_y, est.ridge) -
                log_det(est.sigma_z, est.ridge));
}

CovarianceEstimate estimate_covariances(const Eigen::MatrixXd& xs, const Eigen::MatrixXd& ys,
                                        double ridge) {
  if (xs.rows() != ys.rows()) fail(ErrorCode::DimError, "paired sample counts differ");
  const Eigen::Index needed = std::max(xs.cols(), ys.cols()) + 2;
  if (xs.rows() < needed) {
    fail(ErrorCode::InsufficientSamples,
         "need at least " + std::to_string(needed) + " paired samples, got " + std::to_string(xs.rows()));
  }
  CovarianceEstimate est;
  est.sigma_x = covariance(xs);
  est.sigma_y = covariance(ys);
  require_spread(est.sigma_x, xs, "x");
  require_spread(est.sigma_y, ys, "y");
  Eigen::MatrixXd joint(xs.rows(), xs.cols() + ys.cols());
  joint << xs, ys;
  est.sigma_z = covariance(joint);
  est.samples = static_cast<std::size_t>(xs.rows());
  est.ridge = ridge;
  return est;
}

double empirical_mi(const Eigen::MatrixXd& xs, const Eigen::MatrixXd& ys, double ridge) {
  return gaussian_mi(estimate_covariances(xs, ys, ridge));
}

double empirical_mi(const std::vector<Eigen::VectorXd>& xs, const std::vector<Eigen::VectorXd>& ys,
                    double ridge) {
  if (xs.size() != ys.size()) fail(ErrorCode::DimError, "paired sample counts differ");
  if (xs.empty()) fail(ErrorCode::InsufficientSamples, "no samples");
  return empirical_mi(to_rows(xs), to_rows(ys), ridge);
}

}  // namespace coadapt
