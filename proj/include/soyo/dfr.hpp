#pragma once

#include <map>
#include <optional>
#include <variant>
#include <vector>

#include "soyo/core.hpp"
#include "soyo/gmc.hpp"

namespace soyo::dfr {

using CompressedModel = std::variant<gmc::GmmModel, gmc::MeanStdModel, gmc::PcaModel>;

std::size_t compressed_param_count(const CompressedModel& model);
std::size_t compressed_dim(const CompressedModel& model);

/// Per-domain, per-level compressed records plus bookkeeping. Only model
/// parameters are kept; raw features from past domains are never stored.
struct DomainStore {
  struct DomainRecord {
    std::map<LevelId, CompressedModel> levels;
    std::size_t n_train = 0;
  };

  std::vector<DomainRecord> domains;

  std::size_t n_domains() const { return domains.size(); }
  std::size_t total_param_count() const;
  const CompressedModel& model(DomainId domain, LevelId level) const;
};

/// Pseudo-features reconstructed for one (domain, level).
struct PseudoFeatureSet {
  DomainId domain;
  LevelId level;
  FeatureMatrix features;
};

/// n categorical draws from the component weights.
std::vector<std::size_t> sample_components(const ProbVector& weights, std::size_t n,
                                           RngStream& rng);

/// n draws from the mixture: component indices by weight, then
/// x = mu + A z with z ~ N(0, I) and A the Cholesky factor (full) or
/// per-dimension standard deviation (diagonal).
FeatureMatrix sample_gmm(const gmc::GmmModel& model, std::size_t n, RngStream& rng);

/// Single axis-aligned Gaussian draw with the stored mean and std.
FeatureMatrix sample_meanstd(const gmc::MeanStdModel& model, std::size_t n, RngStream& rng);

/// x = mean + sum_j sqrt(var_j) z_j axis_j with z ~ N(0, I_N).
FeatureMatrix sample_pca(const gmc::PcaModel& model, std::size_t n, RngStream& rng);

FeatureMatrix sample_compressed(const CompressedModel& model, std::size_t n, RngStream& rng);

/// Builds the class-balanced training batch for session t (t = store domains
/// + 1): n_current pseudo-features per prior domain and level, the current
/// domain's real features appended last, one shared deterministic row
/// shuffle across levels. Every domain label occurs exactly n_current times.
/// n_pseudo overrides the per-prior-domain draw count for imbalance studies
/// (0 keeps the default, matching the current domain size).
LabeledBatch build_balanced_batch(const DomainStore& store,
                                  const std::map<LevelId, FeatureMatrix>& current,
                                  std::size_t n_current, RngStream& rng,
                                  std::size_t n_pseudo = 0);

}  // namespace soyo::dfr
