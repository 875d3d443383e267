#include "soyo/selectors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace soyo::selectors {

namespace {

double sq_dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double delta = a[j] - b[j];
    s += delta * delta;
  }
  return s;
}

std::vector<double> column_mean(const FeatureMatrix& x) {
  std::vector<double> mean(x.dim(), 0.0);
  for (std::size_t i = 0; i < x.n_rows(); ++i) {
    auto row = x.row(i);
    for (std::size_t j = 0; j < x.dim(); ++j) mean[j] += row[j];
  }
  for (double& v : mean) v /= static_cast<double>(x.n_rows());
  return mean;
}

// Lloyd's algorithm over one domain's features.
std::vector<std::vector<double>> lloyd(const FeatureMatrix& x, std::size_t m, RngStream& rng) {
  const std::size_t n = x.n_rows(), d = x.dim();

  // k-means++ seeding.
  std::vector<std::vector<double>> centers;
  centers.reserve(m);
  {
    const std::size_t first = static_cast<std::size_t>(rng.uniform_below(n));
    auto row = x.row(first);
    centers.emplace_back(row.begin(), row.end());
  }
  std::vector<double> dist2(n);
  for (std::size_t i = 0; i < n; ++i) dist2[i] = sq_dist(x.row(i), centers[0]);
  while (centers.size() < m) {
    const double total = std::accumulate(dist2.begin(), dist2.end(), 0.0);
    std::size_t pick;
    if (total <= 0.0) {
      pick = static_cast<std::size_t>(rng.uniform_below(n));
    } else {
      const double u = rng.uniform01() * total;
      double acc = 0.0;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        acc += dist2[i];
        if (u < acc) {
          pick = i;
          break;
        }
      }
    }
    auto row = x.row(pick);
    centers.emplace_back(row.begin(), row.end());
    for (std::size_t i = 0; i < n; ++i)
      dist2[i] = std::min(dist2[i], sq_dist(x.row(i), centers.back()));
  }

  std::vector<std::size_t> assign(n, 0);
  const int max_iter = 100;
  const double tol = 1e-6;
  for (int iter = 0; iter < max_iter; ++iter) {
    for (std::size_t i = 0; i < n; ++i) {
      auto row = x.row(i);
      std::size_t best = 0;
      double best_d = sq_dist(row, centers[0]);
      for (std::size_t c = 1; c < m; ++c) {
        const double dist = sq_dist(row, centers[c]);
        if (dist < best_d) {
          best_d = dist;
          best = c;
        }
      }
      assign[i] = best;
    }

    std::vector<std::vector<double>> next(m, std::vector<double>(d, 0.0));
    std::vector<std::size_t> count(m, 0);
    for (std::size_t i = 0; i < n; ++i) {
      auto row = x.row(i);
      auto& acc = next[assign[i]];
      for (std::size_t j = 0; j < d; ++j) acc[j] += row[j];
      ++count[assign[i]];
    }
    for (std::size_t c = 0; c < m; ++c) {
      if (count[c] == 0) {
        // Re-seed an emptied center at the point farthest from its center.
        std::size_t worst = 0;
        double worst_d = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double dist = sq_dist(x.row(i), centers[assign[i]]);
          if (dist > worst_d) {
            worst_d = dist;
            worst = i;
          }
        }
        auto row = x.row(worst);
        next[c].assign(row.begin(), row.end());
        assign[worst] = c;
      } else {
        for (std::size_t j = 0; j < d; ++j) next[c][j] /= static_cast<double>(count[c]);
      }
    }

    double max_move = 0.0;
    for (std::size_t c = 0; c < m; ++c)
      max_move = std::max(max_move, std::sqrt(sq_dist(next[c], centers[c])));
    centers = std::move(next);
    if (max_move <= tol) break;
  }
  return centers;
}

}  // namespace

NmcModel nmc_fit(const std::vector<FeatureMatrix>& per_domain_features) {
  if (per_domain_features.empty()) throw EmptyInput("nmc_fit: no domains");
  NmcModel model;
  model.dim = per_domain_features.front().dim();
  for (const FeatureMatrix& x : per_domain_features) {
    if (x.n_rows() == 0) throw EmptyInput("nmc_fit: empty domain");
    if (x.dim() != model.dim) throw DimMismatch("nmc_fit: domain dims differ");
    model.centroids.push_back(column_mean(x));
  }
  return model;
}

DomainId nmc_predict(const NmcModel& model, std::span<const double> x) {
  if (x.size() != model.dim) throw DimMismatch("nmc_predict: dimension mismatch");
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < model.centroids.size(); ++c) {
    const double dist = sq_dist(x, model.centroids[c]);
    if (dist < best_d) {
      best_d = dist;
      best = c;
    }
  }
  return DomainId{static_cast<int>(best)};
}

KmeansKnnModel kmeans_fit(const std::vector<FeatureMatrix>& per_domain_features,
                          std::size_t centers_per_domain, RngStream seed) {
  if (per_domain_features.empty()) throw EmptyInput("kmeans_fit: no domains");
  if (centers_per_domain < 1) throw InvalidArgument("kmeans_fit: need at least one center");
  KmeansKnnModel model;
  model.dim = per_domain_features.front().dim();
  model.centers_per_domain = centers_per_domain;
  for (std::size_t domain = 0; domain < per_domain_features.size(); ++domain) {
    const FeatureMatrix& x = per_domain_features[domain];
    if (x.dim() != model.dim) throw DimMismatch("kmeans_fit: domain dims differ");
    if (x.n_rows() < centers_per_domain)
      throw InsufficientSamples("kmeans_fit: domain " + std::to_string(domain) + " has " +
                                std::to_string(x.n_rows()) + " rows < M = " +
                                std::to_string(centers_per_domain));
    RngStream rng = seed.substream(domain);
    auto centers = lloyd(x, centers_per_domain, rng);
    for (auto& c : centers) model.centers.push_back(std::move(c));
  }
  return model;
}

DomainId knn_predict(const KmeansKnnModel& model, std::span<const double> x) {
  if (x.size() != model.dim) throw DimMismatch("knn_predict: dimension mismatch");
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < model.centers.size(); ++c) {
    const double dist = sq_dist(x, model.centers[c]);
    if (dist < best_d) {
      best_d = dist;
      best = c;
    }
  }
  return DomainId{static_cast<int>(best / model.centers_per_domain)};
}

}  // namespace soyo::selectors
