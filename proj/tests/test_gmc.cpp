#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "soyo/gmc.hpp"

using namespace soyo;
using namespace soyo::gmc;

namespace {

constexpr long double kPiL = std::numbers::pi_v<long double>;

FeatureMatrix gaussian_blob(RngStream& rng, std::size_t n, std::span<const double> mean,
                            double sigma) {
  const std::size_t d = mean.size();
  std::vector<double> data(n * d);
  const std::vector<double> z = rng.normals(n * d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) data[i * d + j] = mean[j] + sigma * z[i * d + j];
  return FeatureMatrix(n, d, std::move(data));
}

// independent two-pass moments for the K=1 oracle
void two_pass_moments(const FeatureMatrix& x, std::vector<double>& mean,
                      std::vector<double>& var) {
  mean.assign(x.dim(), 0.0);
  var.assign(x.dim(), 0.0);
  for (std::size_t i = 0; i < x.n_rows(); ++i)
    for (std::size_t j = 0; j < x.dim(); ++j) mean[j] += x.at(i, j);
  for (double& v : mean) v /= static_cast<double>(x.n_rows());
  for (std::size_t i = 0; i < x.n_rows(); ++i)
    for (std::size_t j = 0; j < x.dim(); ++j) {
      const double d = x.at(i, j) - mean[j];
      var[j] += d * d;
    }
  for (double& v : var) v /= static_cast<double>(x.n_rows());
}

GmmModel one_component_model(double mean, double variance) {
  GmmModel m;
  m.k = 1;
  m.dim = 1;
  m.cov_kind = CovKind::Diagonal;
  m.weights.values = {1.0};
  m.means = {{mean}};
  m.covariances = {Covariance::diagonal({variance})};
  return m;
}

}  // namespace

TEST_CASE("gaussian_logpdf matches closed-form values") {
  // standard normal at its mean
  CHECK(gaussian_logpdf(std::vector<double>{0.0}, std::vector<double>{0.0},
                        Covariance::diagonal({1.0})) ==
        doctest::Approx(-0.5 * std::log(2.0 * std::numbers::pi)).epsilon(1e-14));

  // 2-d identity covariance at the mean
  CHECK(gaussian_logpdf(std::vector<double>{0.0, 0.0}, std::vector<double>{0.0, 0.0},
                        Covariance::diagonal({1.0, 1.0})) ==
        doctest::Approx(-std::log(2.0 * std::numbers::pi)).epsilon(1e-14));

  // extended-precision oracle for mu=1, sigma^2=4, x=3
  const long double oracle =
      -0.5L * ((3.0L - 1.0L) * (3.0L - 1.0L) / 4.0L) - 0.5L * std::log(2.0L * kPiL * 4.0L);
  CHECK(gaussian_logpdf(std::vector<double>{3.0}, std::vector<double>{1.0},
                        Covariance::diagonal({4.0})) ==
        doctest::Approx(static_cast<double>(oracle)).epsilon(1e-14));
  CHECK(static_cast<double>(oracle) == doctest::Approx(-2.1120857).epsilon(1e-7));
}

TEST_CASE("gaussian_logpdf full covariance agrees with diagonal") {
  const std::vector<double> x{0.3, -1.2, 0.7};
  const std::vector<double> mu{0.1, 0.2, -0.3};
  const std::vector<double> variances{0.5, 2.0, 1.5};
  std::vector<double> full(9, 0.0);
  for (int j = 0; j < 3; ++j) full[j * 3 + j] = variances[j];
  CHECK(gaussian_logpdf(x, mu, Covariance::diagonal(variances)) ==
        doctest::Approx(gaussian_logpdf(x, mu, Covariance::full(3, full))).epsilon(1e-13));
}

TEST_CASE("gaussian_logpdf rejects bad inputs") {
  CHECK_THROWS_AS(gaussian_logpdf(std::vector<double>{0.0, 1.0}, std::vector<double>{0.0},
                                  Covariance::diagonal({1.0})),
                  DimMismatch);
  // not positive definite
  CHECK_THROWS_AS(gaussian_logpdf(std::vector<double>{0.0, 0.0}, std::vector<double>{0.0, 0.0},
                                  Covariance::full(2, {1.0, 2.0, 2.0, 1.0})),
                  SingularCovariance);
}

TEST_CASE("mixture_logpdf degenerate and symmetric cases") {
  const GmmModel single = one_component_model(0.5, 2.0);
  CHECK(mixture_logpdf(std::vector<double>{1.0}, single) ==
        doctest::Approx(gaussian_logpdf(std::vector<double>{1.0}, std::vector<double>{0.5},
                                        Covariance::diagonal({2.0})))
            .epsilon(1e-14));

  GmmModel twin = single;
  twin.k = 2;
  twin.weights.values = {0.5, 0.5};
  twin.means = {{0.5}, {0.5}};
  twin.covariances = {Covariance::diagonal({2.0}), Covariance::diagonal({2.0})};
  CHECK(mixture_logpdf(std::vector<double>{1.0}, twin) ==
        doctest::Approx(mixture_logpdf(std::vector<double>{1.0}, single)).epsilon(1e-13));
}

TEST_CASE("mixture_logpdf two-term sum oracle") {
  GmmModel m;
  m.k = 2;
  m.dim = 1;
  m.cov_kind = CovKind::Diagonal;
  m.weights.values = {0.5, 0.5};
  m.means = {{-1.0}, {1.0}};
  m.covariances = {Covariance::diagonal({1.0}), Covariance::diagonal({1.0})};
  // both components evaluate to phi(1) at x=0
  const long double phi1 = std::exp(-0.5L) / std::sqrt(2.0L * kPiL);
  const long double oracle = std::log(0.5L * phi1 + 0.5L * phi1);
  CHECK(mixture_logpdf(std::vector<double>{0.0}, m) ==
        doctest::Approx(static_cast<double>(oracle)).epsilon(1e-14));
  CHECK(static_cast<double>(oracle) == doctest::Approx(-1.4189385).epsilon(1e-7));

  CHECK_THROWS_AS(mixture_logpdf(std::vector<double>{0.0, 0.0}, m), DimMismatch);
}

TEST_CASE("fit_gmm K=1 equals the closed-form MLE") {
  EmConfig cfg;
  const FeatureMatrix tiny(2, 1, {-1.0, 1.0});
  const FitResult fit = fit_gmm(tiny, 1, cfg);
  CHECK(fit.model.weights[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(fit.model.means[0][0] == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(fit.model.covariances[0].values[0] == doctest::Approx(1.0).epsilon(1e-15));

  // random instances, closed-form oracle, arbitrary seeds
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    RngStream rng(seed, 100);
    const std::size_t n = 50 + static_cast<std::size_t>(rng.uniform_below(500));
    const std::size_t d = 1 + static_cast<std::size_t>(rng.uniform_below(8));
    std::vector<double> center(d, 0.0);
    const FeatureMatrix x = gaussian_blob(rng, n, center, 2.5);

    EmConfig a;
    a.seed = RngStream(seed, 1);
    EmConfig b;
    b.seed = RngStream(seed + 17, 2);
    b.n_restarts = 5;
    const GmmModel ma = fit_gmm(x, 1, a).model;
    const GmmModel mb = fit_gmm(x, 1, b).model;

    std::vector<double> mean, var;
    two_pass_moments(x, mean, var);
    for (std::size_t j = 0; j < d; ++j) {
      CHECK(ma.means[0][j] == doctest::Approx(mean[j]).epsilon(1e-10));
      CHECK(ma.covariances[0].values[j] == doctest::Approx(var[j]).epsilon(1e-10));
      CHECK(mb.means[0][j] == doctest::Approx(mean[j]).epsilon(1e-10));
    }
  }
}

TEST_CASE("fit_gmm recovers two separated 1-d components") {
  RngStream rng(7, 0);
  std::vector<double> data;
  for (double v : rng.normals(100)) data.push_back(-5.0 + v);
  for (double v : rng.normals(100)) data.push_back(5.0 + v);
  const FeatureMatrix x(200, 1, std::move(data));

  EmConfig cfg;
  cfg.seed = RngStream(3, 0);
  const FitResult fit = fit_gmm(x, 2, cfg);
  std::size_t lo = fit.model.means[0][0] < fit.model.means[1][0] ? 0 : 1;
  CHECK(fit.model.means[lo][0] == doctest::Approx(-5.0).epsilon(0.1));
  CHECK(fit.model.means[1 - lo][0] == doctest::Approx(5.0).epsilon(0.1));
  CHECK(std::abs(fit.model.weights[0] - 0.5) < 0.1);
  CHECK(std::abs(fit.model.weights[1] - 0.5) < 0.1);
}

TEST_CASE("fit_gmm preconditions and degenerate data") {
  EmConfig cfg;
  CHECK_THROWS_AS(fit_gmm(FeatureMatrix(1, 1, {0.0}), 2, cfg), InsufficientSamples);

  // identical rows with full covariance: handled by the variance floor
  cfg.cov_kind = CovKind::Full;
  const FeatureMatrix flat(5, 2, std::vector<double>(10, 3.0));
  const FitResult fit = fit_gmm(flat, 1, cfg);
  CHECK(fit.model.covariances[0].values[0] == doctest::Approx(cfg.var_floor).epsilon(1e-12));
}

TEST_CASE("EM log-likelihood trace is monotone") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    RngStream rng(seed, 55);
    const std::size_t d = 1 + static_cast<std::size_t>(rng.uniform_below(4));
    std::vector<double> c1(d, 0.0), c2(d, 4.0);
    std::vector<double> data;
    const FeatureMatrix a = gaussian_blob(rng, 150, c1, 1.0);
    const FeatureMatrix b = gaussian_blob(rng, 150, c2, 1.5);
    data.insert(data.end(), a.data().begin(), a.data().end());
    data.insert(data.end(), b.data().begin(), b.data().end());
    const FeatureMatrix x(300, d, std::move(data));

    EmConfig cfg;
    cfg.seed = RngStream(seed, 9);
    const FitResult fit = fit_gmm(x, 3, cfg);
    REQUIRE(fit.ll_trace.size() >= 2);
    for (std::size_t i = 1; i < fit.ll_trace.size(); ++i)
      CHECK(fit.ll_trace[i] >= fit.ll_trace[i - 1] - 1e-8);
  }
}

TEST_CASE("E-step responsibilities sum to one per row") {
  RngStream rng(11, 0);
  std::vector<double> center(3, 0.0);
  const FeatureMatrix x = gaussian_blob(rng, 120, center, 2.0);
  EmConfig cfg;
  cfg.seed = RngStream(1, 1);
  EmDebug debug;
  fit_gmm(x, 4, cfg, &debug);
  REQUIRE(debug.n_rows == 120);
  REQUIRE(debug.k == 4);
  for (std::size_t i = 0; i < debug.n_rows; ++i) {
    double sum = 0.0;
    for (std::size_t c = 0; c < debug.k; ++c) sum += debug.responsibilities[i * debug.k + c];
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("fit_gmm is deterministic and restart-parallelism does not change results") {
  RngStream rng(2, 3);
  std::vector<double> center(4, 1.0);
  const FeatureMatrix x = gaussian_blob(rng, 200, center, 1.0);
  EmConfig cfg;
  cfg.seed = RngStream(5, 5);
  const FitResult serial = fit_gmm(x, 2, cfg);
  EmConfig parallel_cfg = cfg;
  parallel_cfg.threads = 4;
  const FitResult parallel = fit_gmm(x, 2, parallel_cfg);
  CHECK(serial.model.means == parallel.model.means);
  CHECK(serial.model.weights.values == parallel.model.weights.values);
  CHECK(serial.ll_trace == parallel.ll_trace);
}

TEST_CASE("bic formula and parsimony direction") {
  // formula instance: p = 2, n = 100, L-hat = -150
  CHECK(2.0 * std::log(100.0) + 300.0 == doctest::Approx(309.2103404).epsilon(1e-9));

  RngStream rng(4, 0);
  std::vector<double> center{0.0};
  const FeatureMatrix x = gaussian_blob(rng, 100, center, 1.0);
  const GmmModel single = one_component_model(0.2, 1.3);

  double ll = 0.0;
  for (std::size_t i = 0; i < x.n_rows(); ++i) ll += mixture_logpdf(x.row(i), single);
  CHECK(bic(single, x) ==
        doctest::Approx(2.0 * std::log(100.0) - 2.0 * ll).epsilon(1e-12));

  // duplicating a component keeps L-hat fixed and raises p, so BIC rises
  GmmModel twin = single;
  twin.k = 2;
  twin.weights.values = {0.5, 0.5};
  twin.means = {{0.2}, {0.2}};
  twin.covariances = {Covariance::diagonal({1.3}), Covariance::diagonal({1.3})};
  CHECK(bic(twin, x) > bic(single, x));

  CHECK_THROWS_AS(bic(single, FeatureMatrix::empty(1)), EmptyInput);
}

TEST_CASE("select_k basics") {
  EmConfig cfg;
  cfg.seed = RngStream(6, 0);

  RngStream rng(8, 0);
  std::vector<double> center{0.0, 0.0};
  const FeatureMatrix tight = gaussian_blob(rng, 300, center, 0.5);
  CHECK(select_k(tight, 1, 5, cfg).best_k == 1);

  CHECK(select_k(tight, 3, 3, cfg).best_k == 3);
  CHECK_THROWS_AS(select_k(tight, 0, 3, cfg), InvalidArgument);
  CHECK_THROWS_AS(select_k(tight, 2, 1, cfg), InvalidArgument);

  // a K beyond the sample count propagates the fit error
  const FeatureMatrix three(3, 1, {0.0, 1.0, 2.0});
  CHECK_THROWS_AS(select_k(three, 1, 5, cfg), InsufficientSamples);
}

TEST_CASE("select_k recovers three well-separated clusters") {
  RngStream rng(12, 0);
  std::vector<double> m1{0.0, 0.0}, m2{10.0, 0.0}, m3{0.0, 10.0};
  std::vector<double> data;
  for (const auto& m : {m1, m2, m3}) {
    const FeatureMatrix blob = gaussian_blob(rng, 334, m, 1.0);
    data.insert(data.end(), blob.data().begin(), blob.data().end());
  }
  const FeatureMatrix x(1002, 2, std::move(data));
  EmConfig cfg;
  cfg.seed = RngStream(13, 0);
  const SelectKResult result = select_k(x, 1, 6, cfg);
  CHECK(result.best_k == 3);
  CHECK(result.scores.size() == 6);
}

TEST_CASE("fit_meanstd") {
  const FeatureMatrix x(2, 2, {0.0, 0.0, 2.0, 2.0});
  const MeanStdModel m = fit_meanstd(x);
  CHECK(m.mean == std::vector<double>{1.0, 1.0});
  CHECK(m.std == std::vector<double>{1.0, 1.0});

  const MeanStdModel single = fit_meanstd(FeatureMatrix(1, 3, {4.0, 5.0, 6.0}));
  CHECK(single.std == std::vector<double>{0.0, 0.0, 0.0});

  CHECK_THROWS_AS(fit_meanstd(FeatureMatrix::empty(2)), EmptyInput);

  RngStream rng(14, 0);
  std::vector<double> center{1.0, -2.0, 0.5, 3.0};
  const FeatureMatrix big = gaussian_blob(rng, 1000, center, 1.7);
  const MeanStdModel fitted = fit_meanstd(big);
  std::vector<double> mean, var;
  two_pass_moments(big, mean, var);
  for (std::size_t j = 0; j < 4; ++j) {
    CHECK(fitted.mean[j] == doctest::Approx(mean[j]).epsilon(1e-12));
    CHECK(fitted.std[j] == doctest::Approx(std::sqrt(var[j])).epsilon(1e-12));
  }
}

TEST_CASE("fit_pca rank-1 line data") {
  // rows t * (1, 2) for t in {-2,...,2}; the first axis is the line direction
  std::vector<double> data;
  for (double t : {-2.0, -1.0, 0.0, 1.0, 2.0}) {
    data.push_back(t * 1.0);
    data.push_back(t * 2.0);
  }
  const FeatureMatrix x(5, 2, std::move(data));
  const PcaModel m = fit_pca(x, 2);
  const double inv_norm = 1.0 / std::sqrt(5.0);
  CHECK(m.components[0] == doctest::Approx(1.0 * inv_norm).epsilon(1e-12));
  CHECK(m.components[1] == doctest::Approx(2.0 * inv_norm).epsilon(1e-12));
  CHECK(m.component_variances[1] == doctest::Approx(0.0).epsilon(1e-12));

  CHECK_THROWS_AS(fit_pca(x, 0), BadComponentCount);
  CHECK_THROWS_AS(fit_pca(x, 3), BadComponentCount);
}

TEST_CASE("fit_pca reconstructs the sample covariance at N = dim") {
  RngStream rng(15, 0);
  const std::size_t n = 400, d = 4;
  // anisotropic data: scale each coordinate differently and mix
  std::vector<double> data(n * d);
  const std::vector<double> z = rng.normals(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    data[i * d + 0] = 3.0 * z[i * d + 0] + 0.5 * z[i * d + 1];
    data[i * d + 1] = 1.5 * z[i * d + 1];
    data[i * d + 2] = 0.7 * z[i * d + 2] - 0.2 * z[i * d + 0];
    data[i * d + 3] = 0.1 * z[i * d + 3] + z[i * d + 2];
  }
  const FeatureMatrix x(n, d, std::move(data));
  const PcaModel m = fit_pca(x, d);

  // orthonormal axes, non-increasing variances
  for (std::size_t a = 0; a < d; ++a) {
    for (std::size_t b = 0; b < d; ++b) {
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j) dot += m.axis(a)[j] * m.axis(b)[j];
      CHECK(dot == doctest::Approx(a == b ? 1.0 : 0.0).epsilon(1e-6));
    }
    if (a > 0) CHECK(m.component_variances[a] <= m.component_variances[a - 1] + 1e-12);
  }

  // independent population covariance
  std::vector<double> mean, var;
  two_pass_moments(x, mean, var);
  std::vector<double> cov(d * d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = 0; b < d; ++b)
        cov[a * d + b] += (x.at(i, a) - mean[a]) * (x.at(i, b) - mean[b]);
  for (double& v : cov) v /= static_cast<double>(n);

  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = 0; b < d; ++b) {
      double rebuilt = 0.0;
      for (std::size_t k = 0; k < d; ++k)
        rebuilt += m.component_variances[k] * m.axis(k)[a] * m.axis(k)[b];
      CHECK(rebuilt == doctest::Approx(cov[a * d + b]).epsilon(1e-8));
    }
}

TEST_CASE("config validation") {
  EmConfig em;
  em.max_iter = 0;
  CHECK_THROWS_AS(em.validate(), InvalidArgument);
  em = EmConfig{};
  em.rel_tol = 0.0;
  CHECK_THROWS_AS(em.validate(), InvalidArgument);
  em = EmConfig{};
  em.var_floor = -1.0;
  CHECK_THROWS_AS(em.validate(), InvalidArgument);
  em = EmConfig{};
  em.n_restarts = 0;
  CHECK_THROWS_AS(em.validate(), InvalidArgument);
}

TEST_CASE("fit_pca single-dimension data") {
  const FeatureMatrix x(4, 1, {0.0, 1.0, 2.0, 3.0});
  const PcaModel m = fit_pca(x, 1);
  CHECK(m.components[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(m.component_variances[0] == doctest::Approx(1.25).epsilon(1e-12));  // population var
}

TEST_CASE("random-points initialization also fits") {
  RngStream rng(31, 0);
  std::vector<double> center{0.0, 0.0};
  const FeatureMatrix x = gaussian_blob(rng, 200, center, 1.0);
  EmConfig cfg;
  cfg.init = GmmInit::RandomPoints;
  cfg.seed = RngStream(32, 0);
  const FitResult fit = fit_gmm(x, 2, cfg);
  CHECK(fit.model.k == 2);
  for (std::size_t i = 1; i < fit.ll_trace.size(); ++i)
    CHECK(fit.ll_trace[i] >= fit.ll_trace[i - 1] - 1e-8);
}

TEST_CASE("param_count formulas") {
  GmmModel diag;
  diag.k = 1;
  diag.dim = 4;
  diag.cov_kind = CovKind::Diagonal;
  CHECK(param_count(diag) == 8);

  GmmModel full;
  full.k = 2;
  full.dim = 3;
  full.cov_kind = CovKind::Full;
  CHECK(param_count(full) == 19);

  MeanStdModel ms;
  ms.mean.assign(768, 0.0);
  ms.std.assign(768, 1.0);
  CHECK(param_count(ms) == 1536);

  PcaModel pca;
  pca.mean.assign(32, 0.0);
  pca.n_components = 10;
  CHECK(param_count(pca) == 32 + 10 * 32 + 10);
}
