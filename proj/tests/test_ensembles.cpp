#include <doctest.h>

#include <cmath>

#include "selab/ensembles.hpp"
#include "selab/errors.hpp"
#include "selab/rng.hpp"

using namespace selab;

TEST_CASE("sample_data: shape contract and aspect ratio") {
  GaussianData data = sample_data(4, 2, 7);
  CHECK(data.X.rows == 4);
  CHECK(data.X.cols == 2);
  CHECK(data.aspect == doctest::Approx(2.0));
  CHECK_THROWS_AS(sample_data(0, 2, 7), Error);
  CHECK_THROWS_AS(sample_data(2, 0, 7), Error);
}

TEST_CASE("sample_data: iid N(0, 1/d) law at fixed seed") {
  const std::size_t n = 2000, d = 1000;
  GaussianData data = sample_data(n, d, 1);
  double s = 0.0, s2 = 0.0;
  for (double x : data.X.a) {
    s += x;
    s2 += x * x;
  }
  const double N = static_cast<double>(n * d);
  // mean of all entries within 3 (nd)^{-1/2} d^{-1/2} of zero
  CHECK(std::abs(s / N) <= 3.0 / (std::sqrt(N) * std::sqrt(static_cast<double>(d))));
  // mean of squared entries within 2% of 1/d
  CHECK(std::abs(s2 / N - 1.0 / d) <= 0.02 / d);
}

TEST_CASE("sample_data: deterministic in the seed") {
  GaussianData a = sample_data(50, 20, 9);
  GaussianData b = sample_data(50, 20, 9);
  GaussianData c = sample_data(50, 20, 10);
  CHECK(a.X.a == b.X.a);
  CHECK(a.X.a != c.X.a);
}

TEST_CASE("lower_factor: identity, rank-1, and reconstruction") {
  Matrix I2(2, 2);
  I2(0, 0) = I2(1, 1) = 1.0;
  Matrix L = lower_factor(I2, 0.0);
  CHECK(L(0, 0) == doctest::Approx(1.0));
  CHECK(L(1, 1) == doctest::Approx(1.0));
  CHECK(L(1, 0) == doctest::Approx(0.0));

  Matrix ones(2, 2);
  ones(0, 0) = ones(0, 1) = ones(1, 0) = ones(1, 1) = 1.0;
  L = lower_factor(ones, 0.0);
  CHECK(L(0, 0) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(L(1, 0) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(L(1, 1) == doctest::Approx(0.0).scale(1.0).epsilon(1e-4));

  Matrix K(2, 2);
  K(0, 0) = K(1, 1) = 2.0;
  K(0, 1) = K(1, 0) = 1.0;
  L = lower_factor(K, 0.0);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      double s = 0;
      for (std::size_t l = 0; l < 2; ++l) s += L(i, l) * L(j, l);
      CHECK(std::abs(s - K(i, j)) <= 1e-12);
    }
}

TEST_CASE("covariance: spectrum below the repair budget is degenerate") {
  Matrix K(2, 2);
  K(0, 0) = 1.0;
  K(1, 1) = -1.0;
  try {
    CovarianceMatrix::from(K);
    FAIL("expected DegenerateCovariance");
  } catch (const DegenerateCovariance& e) {
    REQUIRE(e.spectrum.size() == 2);
    CHECK(e.spectrum.front() == doctest::Approx(-1.0));
  }
}

TEST_CASE("covariance: mild indefiniteness is clipped to PSD") {
  Matrix K(2, 2);
  K(0, 0) = K(1, 1) = 1.0;
  K(0, 1) = K(1, 0) = 1.0 + 1e-6;  // min eigenvalue -1e-6
  CovarianceMatrix cov = CovarianceMatrix::from(K);
  CHECK(cov.min_eigenvalue == doctest::Approx(-1e-6).epsilon(1e-3));
  CHECK(min_eigen(cov.entries) >= -1e-15);
}

TEST_CASE("min_eigen of the identity") {
  Matrix I3(3, 3);
  for (int i = 0; i < 3; ++i) I3(i, i) = 1.0;
  CHECK(min_eigen(I3) == doctest::Approx(1.0));
}

TEST_CASE("project_orthogonal: conventions and orthogonality property") {
  const std::size_t m = 50;
  Matrix M(m, 1);
  M(0, 0) = 1.0;  // e1 column
  Vec v(m, 0.0);
  v[0] = 1.0;
  Vec out = project_orthogonal(M, v);
  CHECK(nrm2(out) <= 1e-12);

  Matrix empty;
  CHECK(project_orthogonal(empty, v) == v);

  Rng rng(23);
  Matrix M3(m, 3);
  for (auto& x : M3.a) x = rng.normal();
  Vec w(m);
  for (auto& x : w) x = rng.normal();
  Vec pw = project_orthogonal(M3, w);
  for (std::size_t j = 0; j < 3; ++j) {
    double ip = 0;
    for (std::size_t i = 0; i < m; ++i) ip += pw[i] * M3(i, j);
    CHECK(std::abs(ip) <= 1e-8 * nrm2(w) * nrm2(M3.row(0)) * 10);
  }

  // duplicate columns exercise the pseudo-inverse fallback
  Matrix Mdup(m, 2);
  for (std::size_t i = 0; i < m; ++i) Mdup(i, 0) = Mdup(i, 1) = M3(i, 0);
  Vec pd = project_orthogonal(Mdup, w);
  double ip = 0;
  for (std::size_t i = 0; i < m; ++i) ip += pd[i] * Mdup(i, 0);
  CHECK(std::abs(ip) <= 1e-8 * nrm2(w));
}

TEST_CASE("innovation bank: reproducible and independent across steps") {
  InnovationBank bank(200, 100, 4, 77, 1);
  CHECK(bank.innovation(3, 2) == bank.innovation(3, 2));
  CHECK(bank.innovation(3, 2) != bank.innovation(3, 3));
  CHECK_THROWS_AS(bank.innovation(0, 5), Error);

  // empirical Gram of innovations approaches the identity
  for (std::size_t a = 1; a <= 3; ++a) {
    for (std::size_t b = a; b <= 3; ++b) {
      double acc = 0;
      for (std::size_t r = 0; r < bank.replicates; ++r)
        acc += dot(bank.innovation(r, a), bank.innovation(r, b));
      acc /= static_cast<double>(bank.replicates);
      const double expected = a == b ? 1.0 : 0.0;
      const double se = std::sqrt(2.0 / (100.0 * 200.0)) + 1.0 / std::sqrt(100.0 * 200.0);
      CHECK(std::abs(acc - expected) <= 4 * se);
    }
  }
}

TEST_CASE("mix: basis vector, zero, and Monte Carlo Gram oracle") {
  InnovationBank bank(2000, 400, 2, 5, 0);
  Vec e1 = {1.0, 0.0};
  CHECK(mix_one(bank, 7, e1) == bank.innovation(7, 1));
  Vec zero = {0.0, 0.0};
  CHECK(nrm2(mix_one(bank, 7, zero)) == 0.0);
  CHECK_THROWS_AS(mix_one(bank, 0, Vec{1.0, 0.0, 0.0}), Error);

  Matrix K(2, 2);
  K(0, 0) = K(1, 1) = 2.0;
  K(0, 1) = K(1, 0) = 1.0;
  Matrix L = lower_factor(K, 0.0);
  Vec row0 = {L(0, 0), 0.0}, row1 = {L(1, 0), L(1, 1)};
  auto x0 = mix(bank, row0);
  auto x1 = mix(bank, row1);
  const double R = static_cast<double>(bank.replicates);
  const double m = static_cast<double>(bank.m);
  auto gram = [&](const std::vector<Vec>& a, const std::vector<Vec>& b) {
    double acc = 0;
    for (std::size_t r = 0; r < bank.replicates; ++r) acc += dot(a[r], b[r]);
    return acc / R;
  };
  auto se_of = [&](double kii, double kjj, double kij) {
    return std::sqrt((kii * kjj + kij * kij) / (m * R));
  };
  CHECK(std::abs(gram(x0, x0) - 2.0) <= 3 * se_of(2, 2, 2));
  CHECK(std::abs(gram(x1, x1) - 2.0) <= 3 * se_of(2, 2, 2));
  CHECK(std::abs(gram(x0, x1) - 1.0) <= 3 * se_of(2, 2, 1));
}

TEST_CASE("gram consistency property for random PSD matrices up to order 6") {
  Rng rng(31);
  for (std::size_t k = 2; k <= 6; k += 2) {
    Matrix B(k, k), K(k, k);
    for (auto& v : B.a) v = rng.normal();
    double kmax = 0.0;
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j) {
        double s = 0;
        for (std::size_t l = 0; l < k; ++l) s += B(i, l) * B(j, l) / k;
        K(i, j) = s;
        kmax = std::max(kmax, std::abs(s));
      }
    Matrix L = lower_factor(K, 0.0);
    InnovationBank bank(2000, 400, k, 1000 + k, 0);
    std::vector<std::vector<Vec>> cols(k);
    for (std::size_t i = 0; i < k; ++i) {
      Vec row(k, 0.0);
      for (std::size_t j = 0; j <= i; ++j) row[j] = L(i, j);
      cols[i] = mix(bank, row);
    }
    const double bound = 4.0 / std::sqrt(2000.0) * kmax;
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j) {
        double acc = 0;
        for (std::size_t r = 0; r < bank.replicates; ++r) acc += dot(cols[i][r], cols[j][r]);
        acc /= 2000.0;
        CHECK(std::abs(acc - K(i, j)) <= bound);
      }
  }
}
