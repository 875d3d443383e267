#pragma once

#include <vector>

#include "soyo/core.hpp"

namespace soyo::selectors {

/// One centroid per seen domain, in domain order.
struct NmcModel {
  std::size_t dim = 0;
  std::vector<std::vector<double>> centroids;

  std::size_t n_domains() const { return centroids.size(); }
};

/// M cluster centers per domain.
struct KmeansKnnModel {
  std::size_t dim = 0;
  std::size_t centers_per_domain = 0;
  std::vector<std::vector<double>> centers;  // domain-major: domain * M + m, each of dim

  std::size_t n_domains() const {
    return centers_per_domain == 0 ? 0 : centers.size() / centers_per_domain;
  }
};

NmcModel nmc_fit(const std::vector<FeatureMatrix>& per_domain_features);

/// Nearest centroid by squared Euclidean distance, ties toward the lowest
/// domain index.
DomainId nmc_predict(const NmcModel& model, std::span<const double> x);

/// Lloyd's algorithm with k-means++ initialization per domain; iteration cap
/// 100, stop when no center moves more than 1e-6.
KmeansKnnModel kmeans_fit(const std::vector<FeatureMatrix>& per_domain_features,
                          std::size_t centers_per_domain, RngStream seed);

/// 1-NN over all stored centers; ties toward the lowest domain, then the
/// lowest center index.
DomainId knn_predict(const KmeansKnnModel& model, std::span<const double> x);

}  // namespace soyo::selectors
