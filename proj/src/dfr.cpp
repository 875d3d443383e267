#include "soyo/dfr.hpp"

#include <algorithm>
#include <cmath>

#include "soyo/linalg.hpp"

namespace soyo::dfr {

namespace {

struct ParamCountVisitor {
  std::size_t operator()(const gmc::GmmModel& m) const { return gmc::param_count(m); }
  std::size_t operator()(const gmc::MeanStdModel& m) const { return gmc::param_count(m); }
  std::size_t operator()(const gmc::PcaModel& m) const { return gmc::param_count(m); }
};

struct DimVisitor {
  std::size_t operator()(const gmc::GmmModel& m) const { return m.dim; }
  std::size_t operator()(const gmc::MeanStdModel& m) const { return m.dim(); }
  std::size_t operator()(const gmc::PcaModel& m) const { return m.dim(); }
};

}  // namespace

std::size_t compressed_param_count(const CompressedModel& model) {
  return std::visit(ParamCountVisitor{}, model);
}

std::size_t compressed_dim(const CompressedModel& model) {
  return std::visit(DimVisitor{}, model);
}

std::size_t DomainStore::total_param_count() const {
  std::size_t total = 0;
  for (const auto& record : domains)
    for (const auto& [level, model] : record.levels) total += compressed_param_count(model);
  return total;
}

const CompressedModel& DomainStore::model(DomainId domain, LevelId level) const {
  if (domain.index < 0 || static_cast<std::size_t>(domain.index) >= domains.size())
    throw IncompleteStore("DomainStore: unknown domain " + std::to_string(domain.index));
  const auto& record = domains[static_cast<std::size_t>(domain.index)];
  auto it = record.levels.find(level);
  if (it == record.levels.end())
    throw IncompleteStore("DomainStore: domain " + std::to_string(domain.index) +
                          " missing level " + to_string(level));
  return it->second;
}

std::vector<std::size_t> sample_components(const ProbVector& weights, std::size_t n,
                                           RngStream& rng) {
  weights.validate();
  std::vector<double> cdf(weights.size());
  double acc = 0.0;
  for (std::size_t c = 0; c < weights.size(); ++c) {
    acc += weights[c];
    cdf[c] = acc;
  }
  cdf.back() = 1.0;

  std::vector<std::size_t> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = rng.uniform01();
    out[i] = static_cast<std::size_t>(
        std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
  }
  return out;
}

FeatureMatrix sample_gmm(const gmc::GmmModel& model, std::size_t n, RngStream& rng) {
  const std::size_t d = model.dim;
  const std::vector<std::size_t> comps = sample_components(model.weights, n, rng);

  // Factor each covariance once.
  std::vector<std::vector<double>> factors(model.k);
  for (std::size_t c = 0; c < model.k; ++c) {
    const gmc::Covariance& cov = model.covariances[c];
    if (cov.kind == gmc::CovKind::Diagonal) {
      factors[c].resize(d);
      for (std::size_t j = 0; j < d; ++j) factors[c][j] = std::sqrt(cov.values[j]);
    } else {
      if (!linalg::cholesky(d, cov.values, factors[c]))
        throw SingularCovariance("sample_gmm: component covariance not positive definite");
    }
  }

  std::vector<double> data(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = comps[i];
    const std::vector<double> z = rng.normals(d);
    double* out = data.data() + i * d;
    const std::vector<double>& mu = model.means[c];
    if (model.covariances[c].kind == gmc::CovKind::Diagonal) {
      for (std::size_t j = 0; j < d; ++j) out[j] = mu[j] + factors[c][j] * z[j];
    } else {
      for (std::size_t a = 0; a < d; ++a) {
        double s = mu[a];
        for (std::size_t b = 0; b <= a; ++b) s += factors[c][a * d + b] * z[b];
        out[a] = s;
      }
    }
  }
  return FeatureMatrix(n, d, std::move(data));
}

FeatureMatrix sample_meanstd(const gmc::MeanStdModel& model, std::size_t n, RngStream& rng) {
  const std::size_t d = model.dim();
  std::vector<double> data(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    const std::vector<double> z = rng.normals(d);
    for (std::size_t j = 0; j < d; ++j)
      data[i * d + j] = model.mean[j] + model.std[j] * z[j];
  }
  return FeatureMatrix(n, d, std::move(data));
}

FeatureMatrix sample_pca(const gmc::PcaModel& model, std::size_t n, RngStream& rng) {
  const std::size_t d = model.dim(), n_comp = model.n_components;
  std::vector<double> scale(n_comp);
  for (std::size_t j = 0; j < n_comp; ++j) scale[j] = std::sqrt(model.component_variances[j]);

  std::vector<double> data(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    const std::vector<double> z = rng.normals(n_comp);
    double* out = data.data() + i * d;
    std::copy(model.mean.begin(), model.mean.end(), out);
    for (std::size_t j = 0; j < n_comp; ++j) {
      const double coeff = scale[j] * z[j];
      auto axis = model.axis(j);
      for (std::size_t a = 0; a < d; ++a) out[a] += coeff * axis[a];
    }
  }
  return FeatureMatrix(n, d, std::move(data));
}

FeatureMatrix sample_compressed(const CompressedModel& model, std::size_t n, RngStream& rng) {
  return std::visit(
      [&](const auto& m) -> FeatureMatrix {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, gmc::GmmModel>)
          return sample_gmm(m, n, rng);
        else if constexpr (std::is_same_v<T, gmc::MeanStdModel>)
          return sample_meanstd(m, n, rng);
        else
          return sample_pca(m, n, rng);
      },
      model);
}

LabeledBatch build_balanced_batch(const DomainStore& store,
                                  const std::map<LevelId, FeatureMatrix>& current,
                                  std::size_t n_current, RngStream& rng,
                                  std::size_t n_pseudo) {
  if (current.empty()) throw EmptyInput("build_balanced_batch: no current-domain levels");
  for (const auto& [level, mat] : current) {
    if (mat.n_rows() != n_current)
      throw LengthMismatch("build_balanced_batch: current level " + to_string(level) +
                           " has " + std::to_string(mat.n_rows()) + " rows, expected " +
                           std::to_string(n_current));
  }
  if (n_pseudo == 0) n_pseudo = n_current;

  const std::size_t t = store.n_domains() + 1;
  const std::size_t total = store.n_domains() * n_pseudo + n_current;

  // Pseudo-features per prior domain and level; every (domain, level) pair
  // owns its own sub-stream so concatenation order never depends on
  // sampling order.
  std::map<LevelId, std::vector<double>> concat;
  for (const auto& [level, mat] : current) concat[level].reserve(total * mat.dim());

  for (std::size_t tau = 0; tau < store.n_domains(); ++tau) {
    for (const auto& [level, current_mat] : current) {
      const CompressedModel& model =
          store.model(DomainId{static_cast<int>(tau)}, level);
      if (compressed_dim(model) != current_mat.dim())
        throw DimMismatch("build_balanced_batch: stored model dim mismatch at level " +
                          to_string(level));
      RngStream sub = rng.substream(tau * 64 + static_cast<std::size_t>(level.index));
      const FeatureMatrix pseudo = sample_compressed(model, n_pseudo, sub);
      auto& dst = concat[level];
      dst.insert(dst.end(), pseudo.data().begin(), pseudo.data().end());
    }
  }
  for (const auto& [level, mat] : current) {
    auto& dst = concat[level];
    dst.insert(dst.end(), mat.data().begin(), mat.data().end());
  }

  std::vector<DomainId> labels;
  labels.reserve(total);
  for (std::size_t tau = 0; tau + 1 < t; ++tau)
    labels.insert(labels.end(), n_pseudo, DomainId{static_cast<int>(tau)});
  labels.insert(labels.end(), n_current, DomainId{static_cast<int>(t - 1)});

  // One permutation shared by the labels and every level keeps rows aligned.
  RngStream shuffle_rng = rng.substream(0xBA7C4);
  const std::vector<std::size_t> perm = shuffle_rng.permutation(total);

  LabeledBatch batch;
  batch.labels.resize(total);
  for (std::size_t i = 0; i < total; ++i) batch.labels[i] = labels[perm[i]];
  for (auto& [level, flat] : concat) {
    const std::size_t d = current.at(level).dim();
    std::vector<double> shuffled(total * d);
    for (std::size_t i = 0; i < total; ++i)
      std::copy_n(flat.data() + perm[i] * d, d, shuffled.data() + i * d);
    batch.levels.emplace(level, FeatureMatrix(total, d, std::move(shuffled)));
  }
  batch.validate();
  return batch;
}

}  // namespace soyo::dfr
