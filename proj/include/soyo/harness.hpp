#pragma once

#include <string>
#include <vector>

#include "soyo/core.hpp"
#include "soyo/dfr.hpp"
#include "soyo/gmc.hpp"
#include "soyo/mdfn.hpp"
#include "soyo/selectors.hpp"

namespace soyo::harness {

/// Synthetic two-level feature stream parameters. Per level, domain means
/// sit at mutually equal pairwise distance domain_separation on disjoint
/// scaled unit axes (so 2*n_domains <= dim is required). Every sample
/// carries a class offset shared across domains and supported on the
/// domain-mean axes, which confounds domain prediction, and the two levels
/// mix a shared latent with fresh noise through level_correlation.
struct StreamConfig {
  std::size_t n_domains = 4;
  std::size_t dim = 32;
  std::size_t classes_per_domain = 5;
  std::size_t train_per_domain = 500;
  std::size_t test_per_domain = 200;
  double domain_separation = 3.0;
  double class_offset_scale = 2.0;
  double within_noise = 1.0;
  double level_correlation = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
};

struct DomainData {
  LabeledBatch train;
  LabeledBatch test;
};

struct Stream {
  std::size_t dim = 0;
  std::vector<LevelId> levels;
  std::vector<DomainData> domains;

  std::size_t n_domains() const { return domains.size(); }
};

/// a[i][j] = downstream task accuracy when the true domain is i and the
/// selected parameter set is j. Row diagonals dominate: picking the right
/// expert is never worse.
struct ExpertMatrix {
  std::size_t t = 0;
  std::vector<double> a;  // t x t row-major

  double at(std::size_t i, std::size_t j) const { return a[i * t + j]; }
  static ExpertMatrix uniform(std::size_t t, double diag, double offdiag);
  void validate() const;
};

struct MemoryStats {
  std::size_t store_params = 0;  // persisted compressor/centroid values
  std::size_t extra_params = 0;  // trainable selector parameters
  double store_ratio = 0.0;      // vs backbone parameter count
  double extra_ratio = 0.0;
};

/// Selection metrics against true domains: S_T, raw confusion counts, the
/// row-normalized percentage matrix and per-domain accuracies.
struct SelectionMetrics {
  std::size_t t = 0;
  double s_t = 0.0;
  std::vector<std::size_t> counts;          // t x t
  std::vector<double> confusion_pct;        // t x t, rows sum to 100
  std::vector<double> per_domain_accuracy;  // diagonal of the row-normalized matrix
};

struct SessionReport {
  std::size_t session = 0;  // 0-based; reports print 1-based
  std::size_t t = 0;
  SelectionMetrics selection;
  double a_t = 0.0;
  double oracle_a_t = 0.0;
  double f_t = 0.0;  // 0 for the first session
  MemoryStats memory;
};

enum class SelectorKind { SoyoGmc, SoyoMeanStd, SoyoPca, Nmc, KmeansKnn };

std::string to_string(SelectorKind kind);
SelectorKind selector_from_string(const std::string& name);
bool selector_is_soyo(SelectorKind kind);

struct RunConfig {
  SelectorKind selector = SelectorKind::SoyoGmc;

  // compressor settings (SOYO variants)
  gmc::EmConfig em;
  std::size_t gmm_k = 2;
  bool auto_k = false;  // per-fit BIC sweep over [k_min, k_max]
  std::size_t k_min = 1;
  std::size_t k_max = 5;
  std::size_t pca_components = 10;

  // MDFN training
  mdfn::TrainConfig train;
  bool rehearsal = true;              // false: train on current-domain features only
  bool warm_start = false;
  std::size_t pseudo_per_domain = 0;  // 0: match the current domain's training size

  // baselines
  std::size_t kmeans_centers = 5;

  // reporting
  double expert_diag = 0.9;
  double expert_offdiag = 0.5;
  double backbone_params = 86e6;

  std::uint64_t seed = 0;

  void validate() const;
};

struct ComparisonReport {
  std::vector<SelectorKind> selectors;
  std::vector<std::vector<SessionReport>> sessions;  // per selector

  const SessionReport& final_report(std::size_t selector_idx) const {
    return sessions[selector_idx].back();
  }
};

/// Reports plus the models standing at the end of the run, for persistence.
struct IncrementalResult {
  std::vector<SessionReport> reports;
  dfr::DomainStore store;
  std::optional<mdfn::MdfnParams> mdfn;
  std::optional<selectors::NmcModel> nmc;
  std::optional<selectors::KmeansKnnModel> kmeans;
};

Stream generate_stream(const StreamConfig& cfg);

/// One full incremental pass: per session, train the selector on the newest
/// domain (SOYO rehearses prior domains from compressed models only),
/// compress and store the newest domain, then evaluate on the union of all
/// seen test splits. Raw features of past domains are dropped after
/// compression.
std::vector<SessionReport> run_incremental(const Stream& stream, const RunConfig& cfg);

/// As run_incremental, optionally stopping after n_sessions domains.
IncrementalResult run_incremental_full(const Stream& stream, const RunConfig& cfg,
                                       std::size_t n_sessions);

SelectionMetrics compute_selection_metrics(std::span<const DomainId> truth,
                                           std::span<const DomainId> predicted, std::size_t t);

/// A_T = sum_ij P(true=i, selected=j) a[i][j] from raw confusion counts.
double compute_accuracy_proxy(std::span<const std::size_t> confusion_counts,
                              const ExpertMatrix& expert);

/// The oracle bound sum_i P(true=i) a[i][i].
double oracle_accuracy(std::span<const std::size_t> confusion_counts,
                       const ExpertMatrix& expert);

/// F_T from the per-session history of per-domain accuracies: mean over
/// prior domains of (final accuracy - accuracy right after learning), so
/// negative values mean forgetting.
double compute_forgetting(const std::vector<std::vector<double>>& per_session_accuracy);

/// Runs every selector kind on the same stream and seeds.
ComparisonReport compare_selectors(const Stream& stream, const RunConfig& base);

/// Loads a stream previously written as FEAT files (see the gen subcommand):
/// dir/domain<i>_<level>_<split>.feat for level in {mid, last} and split in
/// {train, test}.
Stream ingest_features(const std::string& dir);

}  // namespace soyo::harness
