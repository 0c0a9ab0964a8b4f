#include <cmath>
#include <random>

#include "coadapt/error.hpp"
#include "coadapt/generator.hpp"
#include "coadapt/reward.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace coadapt;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::NotFound;
}

}  // namespace

TEST_SUITE("reward") {
  TEST_CASE("clip score is a cosine in [-1, 1]") {
    const Vocabulary vocab(7);
    const GeneratorConfig cfg;
    for (const char* text : {"a tranquil garden", "red", "a misty forest with a tiny owl"}) {
      const Prompt p = tokenize(text, vocab);
      const Generation g = generate(p, cfg);
      const double s = clip_score(g.image, p);
      CHECK(s >= -1.0);
      CHECK(s <= 1.0);
      CHECK(s == doctest::Approx(image_embedding(g.image).dot(prompt_embedding(p))).epsilon(1e-12));
    }
  }

  TEST_CASE("clip score prefers the prompt that made the image") {
    const Vocabulary vocab(7);
    const GeneratorConfig cfg;
    const Prompt a = tokenize("a serene blue lake", vocab);
    const Prompt b = tokenize("crimson desert under fiery sunset", vocab);
    CHECK(clip_score(generate(a, cfg).image, a) > clip_score(generate(a, cfg).image, b));
    CHECK(clip_score(generate(b, cfg).image, b) > clip_score(generate(b, cfg).image, a));
  }

  TEST_CASE("covariance by hand") {
    Eigen::MatrixXd s(2, 2);
    s << 0, 0, 1, 1;
    const Eigen::MatrixXd cov = covariance(s);
    CHECK(cov.isApprox(Eigen::MatrixXd::Constant(2, 2, 0.5), 1e-15));
    CHECK(covariance(Eigen::MatrixXd::Constant(5, 3, 2.0)).isZero(0.0));
  }

  TEST_CASE("gaussian mi from known covariances") {
    CovarianceEstimate est;
    est.sigma_x = Eigen::MatrixXd::Identity(1, 1);
    est.sigma_y = Eigen::MatrixXd::Identity(1, 1);
    est.sigma_z = Eigen::MatrixXd::Identity(2, 2);
    CHECK(std::abs(gaussian_mi(est)) < 1e-15);
    for (double rho : {0.5, 0.9}) {
      est.sigma_z << 1, rho, rho, 1;
      CHECK(gaussian_mi(est) == doctest::Approx(oracle::gaussian_mi_1d(rho)).epsilon(1e-12));
    }
    est.sigma_z << 1, 0.5, 0.5, 1;
    CHECK(gaussian_mi(est) == doctest::Approx(0.14384).epsilon(1e-4));
    est.sigma_z << 1, 0.9, 0.9, 1;
    CHECK(gaussian_mi(est) == doctest::Approx(0.83037).epsilon(1e-4));
  }

  TEST_CASE("clip score is informative over random prompt pairs") {
    const Vocabulary vocab(7);
    const GeneratorConfig cfg;
    const auto& words = Vocabulary::builtin_words();
    std::mt19937_64 gen(17);
    const auto random_prompt = [&] {
      std::string text;
      const int n = 2 + static_cast<int>(gen() % 3);
      for (int i = 0; i < n; ++i) text += (i ? " " : "") + words[gen() % words.size()];
      return tokenize(text, vocab);
    };
    double own = 0, other = 0;
    int pairs = 0;
    while (pairs < 100) {
      const Prompt p = random_prompt();
      const Prompt q = random_prompt();
      if (p.text() == q.text()) continue;
      const ToyImage img = generate(p, cfg).image;
      own += clip_score(img, p);
      other += clip_score(img, q);
      ++pairs;
    }
    CHECK(own / pairs > other / pairs);
  }

  TEST_CASE("covariance matches a direct sum") {
    std::mt19937_64 gen(3);
    std::normal_distribution<double> z;
    Eigen::MatrixXd s(40, 3);
    for (Eigen::Index i = 0; i < s.size(); ++i) s.data()[i] = z(gen);
    const Eigen::MatrixXd cov = covariance(s);
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) {
        double ma = 0, mb = 0;
        for (int i = 0; i < 40; ++i) {
          ma += s(i, a);
          mb += s(i, b);
        }
        ma /= 40;
        mb /= 40;
        double acc = 0;
        for (int i = 0; i < 40; ++i) acc += (s(i, a) - ma) * (s(i, b) - mb);
        CHECK(cov(a, b) == doctest::Approx(acc / 39).epsilon(1e-12));
      }
    }
  }

  TEST_CASE("mutual information of correlated normals") {
    for (double rho : {0.0, 0.3, 0.5, 0.8}) {
      const auto p = oracle::correlated_normals(rho, 20000, 11);
      CHECK(std::abs(empirical_mi(p.x, p.y) - oracle::gaussian_mi_1d(rho)) < 0.02);
    }
  }

  TEST_CASE("property: mi is non-negative and invariant to affine maps") {
    const auto p = oracle::correlated_normals(0.6, 2000, 5);
    const double base = empirical_mi(p.x, p.y, 0.0);
    CHECK(base >= 0.0);
    const Eigen::MatrixXd x2 = (3.0 * p.x).array() + 7.0;
    const Eigen::MatrixXd y2 = (-0.5 * p.y).array() - 1.0;
    CHECK(empirical_mi(x2, y2, 0.0) == doctest::Approx(base).epsilon(1e-9));
    CHECK(empirical_mi(p.y, p.x, 0.0) == doctest::Approx(base).epsilon(1e-12));
  }

  TEST_CASE("independent and identical samples") {
    std::mt19937_64 gen(23);
    std::normal_distribution<double> z;
    Eigen::MatrixXd x(10000, 1), y(10000, 1);
    for (int i = 0; i < 10000; ++i) {
      x(i, 0) = z(gen);
      y(i, 0) = z(gen);
    }
    CHECK(std::abs(empirical_mi(x, y)) <= 0.01);
    // only the ridge keeps the joint determinant away from zero
    CHECK(empirical_mi(x, x, 1e-6) >= 3.0);
  }

  TEST_CASE("shuffled pairing destroys the dependence") {
    auto p = oracle::correlated_normals(0.8, 5000, 8);
    std::mt19937_64 gen(9);
    std::vector<int> perm(5000);
    for (int i = 0; i < 5000; ++i) perm[i] = i;
    std::shuffle(perm.begin(), perm.end(), gen);
    Eigen::MatrixXd ys(5000, 1);
    for (int i = 0; i < 5000; ++i) ys(i, 0) = p.y(perm[i], 0);
    CHECK(empirical_mi(p.x, p.y) > 0.4);
    CHECK(empirical_mi(p.x, ys) < 0.01);
  }

  TEST_CASE("multivariate closed form") {
    // Independent coordinate pairs add their information.
    std::mt19937_64 gen(12);
    std::normal_distribution<double> z;
    const int n = 20000;
    Eigen::MatrixXd x(n, 2), y(n, 2);
    const double r1 = 0.5, r2 = 0.7;
    for (int i = 0; i < n; ++i) {
      const double a = z(gen), b = z(gen), c = z(gen), d = z(gen);
      x(i, 0) = a;
      x(i, 1) = c;
      y(i, 0) = r1 * a + std::sqrt(1 - r1 * r1) * b;
      y(i, 1) = r2 * c + std::sqrt(1 - r2 * r2) * d;
    }
    CHECK(std::abs(empirical_mi(x, y) - oracle::gaussian_mi_1d(r1) - oracle::gaussian_mi_1d(r2)) < 0.03);
  }

  TEST_CASE("sample size and degeneracy errors") {
    const auto p = oracle::correlated_normals(0.5, 2, 1);
    CHECK(code_of([&] { empirical_mi(p.x, p.y); }) == ErrorCode::InsufficientSamples);
    const auto q = oracle::correlated_normals(0.5, 10, 1);
    CHECK(code_of([&] { empirical_mi(q.x, Eigen::MatrixXd(q.y.topRows(9))); }) == ErrorCode::DimError);
    const Eigen::MatrixXd constant = Eigen::MatrixXd::Constant(10, 1, 3.0);
    CHECK(code_of([&] { empirical_mi(q.x, constant); }) == ErrorCode::SingularCovariance);
    Eigen::MatrixXd one_x(10, 2), one_y(10, 2);
    one_x.rowwise() = Eigen::RowVector2d(0.3, -0.2);
    one_y.rowwise() = Eigen::RowVector2d(0.7, 0.1);
    CHECK(code_of([&] { empirical_mi(one_x, one_y); }) == ErrorCode::SingularCovariance);
    Eigen::MatrixXd dup(10, 2);
    dup << q.x, q.x;
    CHECK(std::isfinite(empirical_mi(dup, q.y)));
    CovarianceEstimate indefinite;
    indefinite.sigma_x = -Eigen::MatrixXd::Identity(1, 1);
    indefinite.sigma_y = Eigen::MatrixXd::Identity(1, 1);
    indefinite.sigma_z = Eigen::MatrixXd::Identity(2, 2);
    CHECK(code_of([&] { gaussian_mi(indefinite); }) == ErrorCode::SingularCovariance);
    indefinite.sigma_z = Eigen::MatrixXd::Identity(3, 3);
    CHECK(code_of([&] { gaussian_mi(indefinite); }) == ErrorCode::DimError);
    CHECK(code_of([] { empirical_mi(std::vector<Eigen::VectorXd>{}, std::vector<Eigen::VectorXd>{}); }) ==
          ErrorCode::InsufficientSamples);
  }
}
