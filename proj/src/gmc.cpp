#include "soyo/gmc.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <numeric>

#include "soyo/linalg.hpp"

namespace soyo::gmc {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

// Per-component evaluator with the factorization done once.
struct PreparedComponent {
  CovKind kind;
  std::size_t d;
  std::span<const double> mean;
  std::vector<double> inv_var;  // diagonal
  std::vector<double> chol;     // full
  double log_det = 0.0;

  double logpdf(std::span<const double> x) const {
    if (kind == CovKind::Diagonal) {
      double quad = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double delta = x[j] - mean[j];
        quad += delta * delta * inv_var[j];
      }
      return -0.5 * (quad + log_det + static_cast<double>(d) * kLog2Pi);
    }
    std::vector<double> delta(d);
    for (std::size_t j = 0; j < d; ++j) delta[j] = x[j] - mean[j];
    const std::vector<double> y = linalg::solve_lower(d, chol, delta);
    double quad = 0.0;
    for (double v : y) quad += v * v;
    return -0.5 * (quad + log_det + static_cast<double>(d) * kLog2Pi);
  }
};

PreparedComponent prepare(std::span<const double> mean, const Covariance& cov) {
  PreparedComponent p;
  p.kind = cov.kind;
  p.d = cov.dim;
  p.mean = mean;
  if (cov.kind == CovKind::Diagonal) {
    p.inv_var.resize(p.d);
    for (std::size_t j = 0; j < p.d; ++j) {
      const double v = cov.values[j];
      if (!(v > 0.0)) throw SingularCovariance("non-positive diagonal variance");
      p.inv_var[j] = 1.0 / v;
      p.log_det += std::log(v);
    }
  } else {
    if (!linalg::cholesky(p.d, cov.values, p.chol))
      throw SingularCovariance("full covariance is not positive definite");
    for (std::size_t j = 0; j < p.d; ++j) p.log_det += 2.0 * std::log(p.chol[j * p.d + j]);
  }
  return p;
}

std::vector<PreparedComponent> prepare_all(const GmmModel& model) {
  std::vector<PreparedComponent> prepared;
  prepared.reserve(model.k);
  for (std::size_t c = 0; c < model.k; ++c)
    prepared.push_back(prepare(model.means[c], model.covariances[c]));
  return prepared;
}

// Per-dimension population mean and variance of X.
void global_moments(const FeatureMatrix& X, std::vector<double>& mean, std::vector<double>& var) {
  const std::size_t n = X.n_rows(), d = X.dim();
  mean.assign(d, 0.0);
  var.assign(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = X.row(i);
    for (std::size_t j = 0; j < d; ++j) mean[j] += row[j];
  }
  for (std::size_t j = 0; j < d; ++j) mean[j] /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = X.row(i);
    for (std::size_t j = 0; j < d; ++j) {
      const double delta = row[j] - mean[j];
      var[j] += delta * delta;
    }
  }
  for (std::size_t j = 0; j < d; ++j) var[j] /= static_cast<double>(n);
}

double sq_dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double delta = a[j] - b[j];
    s += delta * delta;
  }
  return s;
}

// k-means++ seeding: D^2-weighted draws of data rows.
std::vector<std::size_t> kmeanspp_rows(const FeatureMatrix& X, std::size_t K, RngStream& rng) {
  const std::size_t n = X.n_rows();
  std::vector<std::size_t> chosen;
  chosen.reserve(K);
  chosen.push_back(static_cast<std::size_t>(rng.uniform_below(n)));
  std::vector<double> dist2(n);
  for (std::size_t i = 0; i < n; ++i) dist2[i] = sq_dist(X.row(i), X.row(chosen[0]));
  while (chosen.size() < K) {
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
    chosen.push_back(pick);
    for (std::size_t i = 0; i < n; ++i)
      dist2[i] = std::min(dist2[i], sq_dist(X.row(i), X.row(pick)));
  }
  return chosen;
}

std::vector<std::size_t> random_distinct_rows(std::size_t n, std::size_t K, RngStream& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t c = 0; c < K; ++c) {
    const std::size_t j = c + static_cast<std::size_t>(rng.uniform_below(n - c));
    std::swap(idx[c], idx[j]);
  }
  idx.resize(K);
  return idx;
}

Covariance make_init_cov(CovKind kind, const std::vector<double>& floored_var) {
  const std::size_t d = floored_var.size();
  if (kind == CovKind::Diagonal) return Covariance::diagonal(floored_var);
  std::vector<double> m(d * d, 0.0);
  for (std::size_t j = 0; j < d; ++j) m[j * d + j] = floored_var[j];
  return Covariance::full(d, m);
}

struct RestartResult {
  GmmModel model;
  std::vector<double> ll_trace;
  double final_ll = -std::numeric_limits<double>::infinity();
};

RestartResult run_em(const FeatureMatrix& X, std::size_t K, const EmConfig& cfg, RngStream rng,
                     const std::vector<double>& floored_var) {
  const std::size_t n = X.n_rows(), d = X.dim();

  GmmModel model;
  model.k = K;
  model.dim = d;
  model.cov_kind = cfg.cov_kind;
  model.weights.values.assign(K, 1.0 / static_cast<double>(K));
  const std::vector<std::size_t> seeds = cfg.init == GmmInit::KMeansPlusPlus
                                             ? kmeanspp_rows(X, K, rng)
                                             : random_distinct_rows(n, K, rng);
  for (std::size_t c = 0; c < K; ++c) {
    auto row = X.row(seeds[c]);
    model.means.emplace_back(row.begin(), row.end());
    model.covariances.push_back(make_init_cov(cfg.cov_kind, floored_var));
  }

  RestartResult result;
  std::vector<double> resp(n * K);
  std::vector<double> point_ll(n);
  std::vector<double> logw(K);

  for (std::size_t iter = 0; iter < cfg.max_iter; ++iter) {
    // E-step: responsibilities and total log-likelihood under current params.
    const std::vector<PreparedComponent> prepared = prepare_all(model);
    for (std::size_t c = 0; c < K; ++c) logw[c] = std::log(model.weights[c]);
    double ll = 0.0;
    std::vector<double> lp(K);
    for (std::size_t i = 0; i < n; ++i) {
      auto row = X.row(i);
      for (std::size_t c = 0; c < K; ++c) lp[c] = logw[c] + prepared[c].logpdf(row);
      const double lse = log_sum_exp(lp);
      point_ll[i] = lse;
      ll += lse;
      for (std::size_t c = 0; c < K; ++c) resp[i * K + c] = std::exp(lp[c] - lse);
    }
    result.ll_trace.push_back(ll);
    result.final_ll = ll;
    if (iter > 0) {
      const double prev = result.ll_trace[result.ll_trace.size() - 2];
      if (std::abs(ll - prev) <= cfg.rel_tol * (std::abs(prev) + 1.0)) break;
    }

    // M-step: weighted MLE updates with variance flooring.
    std::vector<double> nk(K, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < K; ++c) nk[c] += resp[i * K + c];

    std::vector<bool> rescued(K, false);
    for (std::size_t c = 0; c < K; ++c) {
      if (nk[c] < 1e-8 * static_cast<double>(n)) rescued[c] = true;
    }

    for (std::size_t c = 0; c < K; ++c) {
      if (rescued[c]) {
        // Empty component: reseed at the point the mixture explains worst,
        // with the global diagonal covariance and one pseudo-count.
        const std::size_t worst = static_cast<std::size_t>(
            std::min_element(point_ll.begin(), point_ll.end()) - point_ll.begin());
        auto row = X.row(worst);
        model.means[c].assign(row.begin(), row.end());
        model.covariances[c] = make_init_cov(cfg.cov_kind, floored_var);
        nk[c] = 1.0;
        continue;
      }
      std::vector<double>& mu = model.means[c];
      std::fill(mu.begin(), mu.end(), 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        const double r = resp[i * K + c];
        auto row = X.row(i);
        for (std::size_t j = 0; j < d; ++j) mu[j] += r * row[j];
      }
      for (std::size_t j = 0; j < d; ++j) mu[j] /= nk[c];

      if (cfg.cov_kind == CovKind::Diagonal) {
        std::vector<double> var(d, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
          const double r = resp[i * K + c];
          auto row = X.row(i);
          for (std::size_t j = 0; j < d; ++j) {
            const double delta = row[j] - mu[j];
            var[j] += r * delta * delta;
          }
        }
        for (std::size_t j = 0; j < d; ++j) var[j] = std::max(var[j] / nk[c], cfg.var_floor);
        model.covariances[c] = Covariance::diagonal(std::move(var));
      } else {
        std::vector<double> cov(d * d, 0.0);
        std::vector<double> delta(d);
        for (std::size_t i = 0; i < n; ++i) {
          const double r = resp[i * K + c];
          auto row = X.row(i);
          for (std::size_t j = 0; j < d; ++j) delta[j] = row[j] - mu[j];
          for (std::size_t a = 0; a < d; ++a)
            for (std::size_t b = a; b < d; ++b) cov[a * d + b] += r * delta[a] * delta[b];
        }
        for (std::size_t a = 0; a < d; ++a)
          for (std::size_t b = a; b < d; ++b) {
            cov[a * d + b] /= nk[c];
            cov[b * d + a] = cov[a * d + b];
          }
        for (std::size_t j = 0; j < d; ++j)
          cov[j * d + j] = std::max(cov[j * d + j], cfg.var_floor);
        model.covariances[c] = Covariance::full(d, std::move(cov));
      }
    }

    const double total_nk = std::accumulate(nk.begin(), nk.end(), 0.0);
    for (std::size_t c = 0; c < K; ++c) model.weights.values[c] = nk[c] / total_nk;
  }

  result.model = std::move(model);
  return result;
}

}  // namespace

Covariance Covariance::diagonal(std::vector<double> variances) {
  Covariance c;
  c.kind = CovKind::Diagonal;
  c.dim = variances.size();
  c.values = std::move(variances);
  return c;
}

Covariance Covariance::full(std::size_t dim, std::vector<double> matrix) {
  if (matrix.size() != dim * dim)
    throw LengthMismatch("Covariance::full: matrix size != dim*dim");
  Covariance c;
  c.kind = CovKind::Full;
  c.dim = dim;
  c.values = std::move(matrix);
  return c;
}

void GmmModel::validate() const {
  if (k < 1 || dim < 1) throw InvalidArgument("GmmModel: k and dim must be >= 1");
  if (weights.size() != k || means.size() != k || covariances.size() != k)
    throw LengthMismatch("GmmModel: component count mismatch");
  weights.validate();
  for (std::size_t c = 0; c < k; ++c) {
    if (means[c].size() != dim) throw DimMismatch("GmmModel: mean dim mismatch");
    if (covariances[c].dim != dim) throw DimMismatch("GmmModel: covariance dim mismatch");
  }
}

void EmConfig::validate() const {
  if (max_iter < 1) throw InvalidArgument("EmConfig: max_iter must be >= 1");
  if (!(rel_tol > 0.0)) throw InvalidArgument("EmConfig: rel_tol must be positive");
  if (!(var_floor > 0.0)) throw InvalidArgument("EmConfig: var_floor must be positive");
  if (n_restarts < 1) throw InvalidArgument("EmConfig: n_restarts must be >= 1");
}

double gaussian_logpdf(std::span<const double> x, std::span<const double> mean,
                       const Covariance& cov) {
  if (x.size() != mean.size() || x.size() != cov.dim)
    throw DimMismatch("gaussian_logpdf: dimension mismatch");
  return prepare(mean, cov).logpdf(x);
}

double mixture_logpdf(std::span<const double> x, const GmmModel& model) {
  if (x.size() != model.dim) throw DimMismatch("mixture_logpdf: dimension mismatch");
  const std::vector<PreparedComponent> prepared = prepare_all(model);
  std::vector<double> lp(model.k);
  for (std::size_t c = 0; c < model.k; ++c)
    lp[c] = std::log(model.weights[c]) + prepared[c].logpdf(x);
  return log_sum_exp(lp);
}

FitResult fit_gmm(const FeatureMatrix& X, std::size_t K, const EmConfig& cfg, EmDebug* debug) {
  cfg.validate();
  if (K < 1) throw InvalidArgument("fit_gmm: K must be >= 1");
  if (X.n_rows() < K)
    throw InsufficientSamples("fit_gmm: " + std::to_string(X.n_rows()) + " rows < K = " +
                              std::to_string(K));

  std::vector<double> global_mean, global_var;
  global_moments(X, global_mean, global_var);
  std::vector<double> floored_var = global_var;
  for (double& v : floored_var) v = std::max(v, cfg.var_floor);

  std::vector<RestartResult> restarts(cfg.n_restarts);
  auto run_one = [&](std::size_t r) {
    return run_em(X, K, cfg, cfg.seed.substream(r), floored_var);
  };
  if (cfg.threads > 1 && cfg.n_restarts > 1) {
    std::vector<std::future<RestartResult>> futures;
    futures.reserve(cfg.n_restarts);
    for (std::size_t r = 0; r < cfg.n_restarts; ++r)
      futures.push_back(std::async(std::launch::async, run_one, r));
    for (std::size_t r = 0; r < cfg.n_restarts; ++r) restarts[r] = futures[r].get();
  } else {
    for (std::size_t r = 0; r < cfg.n_restarts; ++r) restarts[r] = run_one(r);
  }

  // Best final log-likelihood wins; the lowest restart index breaks ties, so
  // the result does not depend on scheduling.
  std::size_t best = 0;
  for (std::size_t r = 1; r < cfg.n_restarts; ++r)
    if (restarts[r].final_ll > restarts[best].final_ll) best = r;

  FitResult out;
  out.model = std::move(restarts[best].model);
  out.ll_trace = std::move(restarts[best].ll_trace);

  if (debug != nullptr) {
    const std::size_t n = X.n_rows();
    debug->n_rows = n;
    debug->k = K;
    debug->responsibilities.assign(n * K, 0.0);
    const std::vector<PreparedComponent> prepared = prepare_all(out.model);
    std::vector<double> lp(K);
    for (std::size_t i = 0; i < n; ++i) {
      auto row = X.row(i);
      for (std::size_t c = 0; c < K; ++c)
        lp[c] = std::log(out.model.weights[c]) + prepared[c].logpdf(row);
      const double lse = log_sum_exp(lp);
      for (std::size_t c = 0; c < K; ++c)
        debug->responsibilities[i * K + c] = std::exp(lp[c] - lse);
    }
  }
  return out;
}

double bic(const GmmModel& model, const FeatureMatrix& X) {
  if (X.n_rows() == 0) throw EmptyInput("bic: empty feature matrix");
  if (X.dim() != model.dim) throw DimMismatch("bic: dimension mismatch");
  const std::vector<PreparedComponent> prepared = prepare_all(model);
  std::vector<double> lp(model.k);
  double ll = 0.0;
  for (std::size_t i = 0; i < X.n_rows(); ++i) {
    auto row = X.row(i);
    for (std::size_t c = 0; c < model.k; ++c)
      lp[c] = std::log(model.weights[c]) + prepared[c].logpdf(row);
    ll += log_sum_exp(lp);
  }
  const double p = static_cast<double>(param_count(model));
  return p * std::log(static_cast<double>(X.n_rows())) - 2.0 * ll;
}

SelectKResult select_k(const FeatureMatrix& X, std::size_t k_min, std::size_t k_max,
                       const EmConfig& cfg) {
  if (k_min < 1 || k_min > k_max) throw InvalidArgument("select_k: bad K range");
  SelectKResult result;
  double best_bic = std::numeric_limits<double>::infinity();
  for (std::size_t k = k_min; k <= k_max; ++k) {
    EmConfig local = cfg;
    local.seed = cfg.seed.substream(k);
    const FitResult fit = fit_gmm(X, k, local);
    const double score = bic(fit.model, X);
    result.scores.push_back({k, score});
    if (score < best_bic) {
      best_bic = score;
      result.best_k = k;
    }
  }
  return result;
}

MeanStdModel fit_meanstd(const FeatureMatrix& X) {
  if (X.n_rows() == 0) throw EmptyInput("fit_meanstd: empty feature matrix");
  MeanStdModel m;
  std::vector<double> var;
  global_moments(X, m.mean, var);
  m.std.resize(var.size());
  for (std::size_t j = 0; j < var.size(); ++j) m.std[j] = std::sqrt(var[j]);
  return m;
}

PcaModel fit_pca(const FeatureMatrix& X, std::size_t n_components) {
  const std::size_t n = X.n_rows(), d = X.dim();
  if (n_components < 1 || n_components > std::min(n, d))
    throw BadComponentCount("fit_pca: N must be in [1, min(n_rows, dim)]");

  std::vector<double> mean, var;
  global_moments(X, mean, var);

  // Population covariance of the centered data.
  std::vector<double> cov(d * d, 0.0);
  std::vector<double> delta(d);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = X.row(i);
    for (std::size_t j = 0; j < d; ++j) delta[j] = row[j] - mean[j];
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = a; b < d; ++b) cov[a * d + b] += delta[a] * delta[b];
  }
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = a; b < d; ++b) {
      cov[a * d + b] /= static_cast<double>(n);
      cov[b * d + a] = cov[a * d + b];
    }

  std::vector<double> eigenvalues, eigenvectors;
  linalg::symmetric_eigen(d, cov, eigenvalues, eigenvectors);

  PcaModel model;
  model.mean = std::move(mean);
  model.n_components = n_components;
  model.components.resize(n_components * d);
  model.component_variances.resize(n_components);
  for (std::size_t k = 0; k < n_components; ++k) {
    double sign = 1.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double v = eigenvectors[k * d + j];
      if (std::abs(v) > 1e-12) {
        sign = v < 0.0 ? -1.0 : 1.0;
        break;
      }
    }
    for (std::size_t j = 0; j < d; ++j)
      model.components[k * d + j] = sign * eigenvectors[k * d + j];
    model.component_variances[k] = std::max(eigenvalues[k], 0.0);
  }
  return model;
}

std::size_t param_count(const GmmModel& model) {
  const std::size_t k = model.k, d = model.dim;
  const std::size_t per_cov =
      model.cov_kind == CovKind::Diagonal ? d : d * (d + 1) / 2;
  return (k - 1) + k * d + k * per_cov;
}

std::size_t param_count(const MeanStdModel& model) { return 2 * model.dim(); }

std::size_t param_count(const PcaModel& model) {
  const std::size_t d = model.dim(), n_comp = model.n_components;
  return d + n_comp * d + n_comp;
}

}  // namespace soyo::gmc
