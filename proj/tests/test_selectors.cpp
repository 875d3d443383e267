#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "soyo/selectors.hpp"

using namespace soyo;
using namespace soyo::selectors;

namespace {

FeatureMatrix blob(RngStream& rng, std::size_t n, std::vector<double> center, double sigma) {
  const std::size_t d = center.size();
  std::vector<double> data(n * d);
  const std::vector<double> z = rng.normals(n * d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) data[i * d + j] = center[j] + sigma * z[i * d + j];
  return FeatureMatrix(n, d, std::move(data));
}

}  // namespace

TEST_CASE("nmc_fit computes per-domain means") {
  const FeatureMatrix d0(2, 2, {0.0, 0.0, 2.0, 2.0});
  const FeatureMatrix d1(3, 2, {4.0, 0.0, 6.0, 0.0, 5.0, 3.0});
  const NmcModel model = nmc_fit({d0, d1});
  REQUIRE(model.n_domains() == 2);
  CHECK(model.centroids[0] == std::vector<double>{1.0, 1.0});
  CHECK(model.centroids[1] == std::vector<double>{5.0, 1.0});

  CHECK_THROWS_AS(nmc_fit({}), EmptyInput);
  CHECK_THROWS_AS(nmc_fit({FeatureMatrix::empty(2)}), EmptyInput);

  // two-pass oracle on random data
  RngStream rng(1, 0);
  const FeatureMatrix big = blob(rng, 500, {0.3, -1.0, 2.0}, 1.5);
  const NmcModel fitted = nmc_fit({big});
  for (std::size_t j = 0; j < 3; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < big.n_rows(); ++i) mean += big.at(i, j);
    mean /= static_cast<double>(big.n_rows());
    CHECK(fitted.centroids[0][j] == doctest::Approx(mean).epsilon(1e-12));
  }
}

TEST_CASE("nmc_predict nearest centroid with tie to the lowest domain") {
  NmcModel model;
  model.dim = 1;
  model.centroids = {{0.0}, {10.0}};
  CHECK(nmc_predict(model, std::vector<double>{2.0}).index == 0);
  CHECK(nmc_predict(model, std::vector<double>{9.0}).index == 1);
  CHECK(nmc_predict(model, std::vector<double>{5.0}).index == 0);  // equidistant

  CHECK_THROWS_AS(nmc_predict(model, std::vector<double>{0.0, 0.0}), DimMismatch);

  // brute-force distance scan oracle in 2-d
  NmcModel m2;
  m2.dim = 2;
  RngStream rng(2, 0);
  for (int c = 0; c < 5; ++c) m2.centroids.push_back(rng.normals(2));
  for (int trial = 0; trial < 200; ++trial) {
    const std::vector<double> x = rng.normals(2);
    std::size_t best = 0;
    double best_d = 1e300;
    for (std::size_t c = 0; c < m2.centroids.size(); ++c) {
      double dist = 0.0;
      for (int j = 0; j < 2; ++j)
        dist += (x[j] - m2.centroids[c][j]) * (x[j] - m2.centroids[c][j]);
      if (dist < best_d) {
        best_d = dist;
        best = c;
      }
    }
    CHECK(nmc_predict(m2, x).index == static_cast<int>(best));
  }
}

TEST_CASE("kmeans_fit M=1 reduces to the domain mean") {
  RngStream rng(3, 0);
  const FeatureMatrix x = blob(rng, 200, {1.0, -1.0}, 2.0);
  const KmeansKnnModel km = kmeans_fit({x}, 1, RngStream(9, 0));
  const NmcModel nmc = nmc_fit({x});
  REQUIRE(km.centers.size() == 1);
  CHECK(km.centers[0] == nmc.centroids[0]);
}

TEST_CASE("kmeans_fit recovers two separated blobs") {
  RngStream rng(4, 0);
  std::vector<double> data;
  const FeatureMatrix a = blob(rng, 150, {-4.0, 0.0}, 0.8);
  const FeatureMatrix b = blob(rng, 150, {4.0, 0.0}, 0.8);
  data.insert(data.end(), a.data().begin(), a.data().end());
  data.insert(data.end(), b.data().begin(), b.data().end());
  const FeatureMatrix x(300, 2, std::move(data));

  const KmeansKnnModel km = kmeans_fit({x}, 2, RngStream(5, 0));
  REQUIRE(km.centers.size() == 2);
  std::size_t lo = km.centers[0][0] < km.centers[1][0] ? 0 : 1;
  CHECK(km.centers[lo][0] == doctest::Approx(-4.0).epsilon(0.15));
  CHECK(km.centers[1 - lo][0] == doctest::Approx(4.0).epsilon(0.15));

  // determinism
  const KmeansKnnModel again = kmeans_fit({x}, 2, RngStream(5, 0));
  CHECK(km.centers == again.centers);

  CHECK_THROWS_AS(kmeans_fit({FeatureMatrix(1, 2, {0.0, 0.0})}, 2, RngStream(1, 0)),
                  InsufficientSamples);
}

TEST_CASE("knn_predict nearest center across domains") {
  KmeansKnnModel model;
  model.dim = 1;
  model.centers_per_domain = 2;
  model.centers = {{0.0}, {1.0}, {10.0}, {11.0}};  // domain 0: {0,1}, domain 1: {10,11}

  CHECK(knn_predict(model, std::vector<double>{0.4}).index == 0);
  CHECK(knn_predict(model, std::vector<double>{10.6}).index == 1);
  CHECK(knn_predict(model, std::vector<double>{5.5}).index == 0);  // 1 and 10 equidistant

  KmeansKnnModel single;
  single.dim = 1;
  single.centers_per_domain = 3;
  single.centers = {{0.0}, {5.0}, {9.0}};
  for (double v : {-3.0, 4.0, 100.0})
    CHECK(knn_predict(single, std::vector<double>{v}).index == 0);

  CHECK_THROWS_AS(knn_predict(model, std::vector<double>{0.0, 0.0}), DimMismatch);
}

TEST_CASE("M=1 kmeans+knn predicts identically to nmc everywhere") {
  RngStream rng(6, 0);
  std::vector<FeatureMatrix> domains;
  domains.push_back(blob(rng, 120, {0.0, 0.0, 0.0}, 1.5));
  domains.push_back(blob(rng, 80, {2.0, -1.0, 1.0}, 1.5));
  domains.push_back(blob(rng, 100, {-1.0, 3.0, 0.5}, 1.5));

  const NmcModel nmc = nmc_fit(domains);
  const KmeansKnnModel km = kmeans_fit(domains, 1, RngStream(7, 0));
  for (int trial = 0; trial < 500; ++trial) {
    const std::vector<double> x = rng.normals(3);
    CHECK(nmc_predict(nmc, x) == knn_predict(km, x));
  }
}

TEST_CASE("knn predictions are invariant to center order within a domain") {
  KmeansKnnModel model;
  model.dim = 2;
  model.centers_per_domain = 2;
  model.centers = {{0.0, 0.0}, {1.0, 1.0}, {5.0, 5.0}, {6.0, 6.0}};

  KmeansKnnModel permuted = model;
  std::swap(permuted.centers[0], permuted.centers[1]);
  std::swap(permuted.centers[2], permuted.centers[3]);

  RngStream rng(8, 0);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<double> x = rng.normals(2);
    for (double& v : x) v = 3.0 * v + 2.0;
    CHECK(knn_predict(model, x) == knn_predict(permuted, x));
  }
}
