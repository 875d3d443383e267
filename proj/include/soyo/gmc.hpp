#pragma once

#include <cstddef>
#include <vector>

#include "soyo/core.hpp"

namespace soyo::gmc {

enum class CovKind { Diagonal, Full };

/// One component covariance: d variances (Diagonal) or a d x d symmetric
/// positive-definite matrix, row-major (Full).
struct Covariance {
  CovKind kind = CovKind::Diagonal;
  std::size_t dim = 0;
  std::vector<double> values;

  static Covariance diagonal(std::vector<double> variances);
  static Covariance full(std::size_t dim, std::vector<double> matrix);

  double diag_entry(std::size_t j) const {
    return kind == CovKind::Diagonal ? values[j] : values[j * dim + j];
  }
};

/// Gaussian mixture compressor output: weights, means and covariances of K
/// components over d-dimensional features.
struct GmmModel {
  std::size_t k = 0;
  std::size_t dim = 0;
  CovKind cov_kind = CovKind::Diagonal;
  ProbVector weights;
  std::vector<std::vector<double>> means;
  std::vector<Covariance> covariances;

  void validate() const;
};

/// Per-dimension mean and population standard deviation.
struct MeanStdModel {
  std::vector<double> mean;
  std::vector<double> std;

  std::size_t dim() const { return mean.size(); }
};

/// Top-N principal axes of centered data, descending variance order. Axes
/// are orthonormal and sign-normalized (first nonzero coordinate positive).
struct PcaModel {
  std::vector<double> mean;
  std::size_t n_components = 0;
  std::vector<double> components;           // N x d row-major
  std::vector<double> component_variances;  // N, non-increasing

  std::size_t dim() const { return mean.size(); }
  std::span<const double> axis(std::size_t j) const {
    return std::span<const double>(components.data() + j * mean.size(), mean.size());
  }
};

enum class GmmInit { KMeansPlusPlus, RandomPoints };

struct EmConfig {
  std::size_t max_iter = 200;
  double rel_tol = 1e-6;
  double var_floor = 1e-6;
  std::size_t n_restarts = 3;
  GmmInit init = GmmInit::KMeansPlusPlus;
  CovKind cov_kind = CovKind::Diagonal;
  RngStream seed;
  std::size_t threads = 1;  // restart-level parallelism; results are merged
                            // deterministically so the count never changes output

  void validate() const;
};

/// Final-iteration E-step state of the winning restart, for inspection.
struct EmDebug {
  std::size_t n_rows = 0;
  std::size_t k = 0;
  std::vector<double> responsibilities;  // n x K row-major
};

struct FitResult {
  GmmModel model;
  std::vector<double> ll_trace;  // total log-likelihood per EM iteration
};

struct KScore {
  std::size_t k = 0;
  double bic = 0.0;
};

struct SelectKResult {
  std::size_t best_k = 0;
  std::vector<KScore> scores;
};

/// ln N(x | mean, cov). Log-space evaluation: per-dimension for diagonal
/// covariances, Cholesky log-determinant plus quadratic form for full ones.
double gaussian_logpdf(std::span<const double> x, std::span<const double> mean,
                       const Covariance& cov);

/// ln sum_k w_k N(x | mu_k, Sigma_k) via log_sum_exp.
double mixture_logpdf(std::span<const double> x, const GmmModel& model);

/// EM fit of a K-component mixture. Runs cfg.n_restarts independent
/// initializations (sub-stream per restart) and returns the restart with the
/// best final log-likelihood, lowest index on ties. The trace holds the
/// per-iteration total log-likelihood of the winner and is non-decreasing up
/// to round-off.
FitResult fit_gmm(const FeatureMatrix& X, std::size_t K, const EmConfig& cfg,
                  EmDebug* debug = nullptr);

/// p ln(n) - 2 L-hat; lower is better.
double bic(const GmmModel& model, const FeatureMatrix& X);

/// Fits every K in [k_min, k_max] and returns the argmin-BIC K, ties broken
/// toward smaller K.
SelectKResult select_k(const FeatureMatrix& X, std::size_t k_min, std::size_t k_max,
                       const EmConfig& cfg);

MeanStdModel fit_meanstd(const FeatureMatrix& X);

PcaModel fit_pca(const FeatureMatrix& X, std::size_t n_components);

/// Stored-parameter counts used by the memory report.
std::size_t param_count(const GmmModel& model);
std::size_t param_count(const MeanStdModel& model);
std::size_t param_count(const PcaModel& model);

}  // namespace soyo::gmc
