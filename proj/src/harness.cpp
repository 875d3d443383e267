#include "soyo/harness.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "soyo/featfile.hpp"

namespace soyo::harness {

namespace {

// Fixed sub-stream tags so every consumer owns a disjoint slice of the seed.
constexpr std::uint64_t kTagClassOffsets = 1;
constexpr std::uint64_t kTagSamples = 2;
constexpr std::uint64_t kTagCompress = 3;
constexpr std::uint64_t kTagBatch = 4;
constexpr std::uint64_t kTagTrain = 5;
constexpr std::uint64_t kTagKmeans = 6;

LabeledBatch make_domain_batch(const StreamConfig& cfg, std::size_t domain, std::size_t n,
                               const std::vector<double>& mean_mid,
                               const std::vector<double>& mean_last,
                               const std::vector<std::vector<double>>& offsets_mid,
                               const std::vector<std::vector<double>>& offsets_last,
                               RngStream rng) {
  const std::size_t d = cfg.dim;
  const double rho = cfg.level_correlation;
  std::vector<double> mid(n * d), last(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t cls = static_cast<std::size_t>(rng.uniform_below(cfg.classes_per_domain));
    const std::vector<double> shared = rng.normals(d);
    const std::vector<double> fresh = rng.normals(d);
    for (std::size_t j = 0; j < d; ++j) {
      mid[i * d + j] = mean_mid[j] + offsets_mid[cls][j] + cfg.within_noise * shared[j];
      last[i * d + j] = mean_last[j] + offsets_last[cls][j] +
                        cfg.within_noise * (rho * shared[j] + (1.0 - rho) * fresh[j]);
    }
  }
  LabeledBatch batch;
  batch.levels.emplace(LevelId::mid(), FeatureMatrix(n, d, std::move(mid)));
  batch.levels.emplace(LevelId::last(), FeatureMatrix(n, d, std::move(last)));
  batch.labels.assign(n, DomainId{static_cast<int>(domain)});
  return batch;
}

dfr::CompressedModel compress_features(const FeatureMatrix& x, const RunConfig& cfg,
                                       RngStream rng) {
  switch (cfg.selector) {
    case SelectorKind::SoyoMeanStd:
      return gmc::fit_meanstd(x);
    case SelectorKind::SoyoPca:
      return gmc::fit_pca(x, std::min(cfg.pca_components, std::min(x.n_rows(), x.dim())));
    default: {
      gmc::EmConfig em = cfg.em;
      em.seed = rng;
      if (cfg.auto_k) {
        const std::size_t k_max = std::min(cfg.k_max, x.n_rows());
        return gmc::fit_gmm(x, gmc::select_k(x, cfg.k_min, k_max, em).best_k, em).model;
      }
      return gmc::fit_gmm(x, std::min(cfg.gmm_k, x.n_rows()), em).model;
    }
  }
}

// MDFN parameter count at t domains for the memory report.
std::size_t mdfn_param_count(std::size_t d, std::size_t hidden, std::size_t t) {
  const std::size_t mlp = hidden * d + hidden + d * hidden + d;
  return 2 * mlp + t * d + t;
}

}  // namespace

void StreamConfig::validate() const {
  if (n_domains < 1 || dim < 1 || classes_per_domain < 1 || train_per_domain < 1 ||
      test_per_domain < 1)
    throw InvalidArgument("StreamConfig: counts must be >= 1");
  if (2 * n_domains > dim)
    throw InvalidArgument(
        "StreamConfig: per-level equidistant domain means need 2*n_domains <= dim");
  if (domain_separation < 0.0) throw InvalidArgument("StreamConfig: separation must be >= 0");
  if (within_noise <= 0.0) throw InvalidArgument("StreamConfig: within_noise must be positive");
  if (level_correlation < 0.0 || level_correlation > 1.0)
    throw InvalidArgument("StreamConfig: level_correlation must be in [0,1]");
}

void RunConfig::validate() const {
  em.validate();
  train.validate();
  if (gmm_k < 1 || kmeans_centers < 1 || pca_components < 1)
    throw InvalidArgument("RunConfig: component counts must be >= 1");
  if (k_min < 1 || k_min > k_max) throw InvalidArgument("RunConfig: bad K range");
  if (expert_diag < 0.0 || expert_diag > 1.0 || expert_offdiag < 0.0 || expert_offdiag > 1.0 ||
      expert_offdiag > expert_diag)
    throw InvalidArgument("RunConfig: expert accuracies must satisfy 0 <= offdiag <= diag <= 1");
  if (backbone_params <= 0.0) throw InvalidArgument("RunConfig: backbone_params must be positive");
}

ExpertMatrix ExpertMatrix::uniform(std::size_t t, double diag, double offdiag) {
  ExpertMatrix m;
  m.t = t;
  m.a.assign(t * t, offdiag);
  for (std::size_t i = 0; i < t; ++i) m.a[i * t + i] = diag;
  m.validate();
  return m;
}

void ExpertMatrix::validate() const {
  if (a.size() != t * t) throw LengthMismatch("ExpertMatrix: size != t*t");
  for (std::size_t i = 0; i < t; ++i) {
    for (std::size_t j = 0; j < t; ++j) {
      const double v = at(i, j);
      if (v < 0.0 || v > 1.0) throw InvalidArgument("ExpertMatrix: entry outside [0,1]");
      if (v > at(i, i) + 1e-12)
        throw InvalidArgument("ExpertMatrix: off-diagonal exceeds row diagonal");
    }
  }
}

std::string to_string(SelectorKind kind) {
  switch (kind) {
    case SelectorKind::SoyoGmc:
      return "soyo-gmc";
    case SelectorKind::SoyoMeanStd:
      return "soyo-meanstd";
    case SelectorKind::SoyoPca:
      return "soyo-pca";
    case SelectorKind::Nmc:
      return "nmc";
    case SelectorKind::KmeansKnn:
      return "kmeans-knn";
  }
  return "?";
}

SelectorKind selector_from_string(const std::string& name) {
  if (name == "soyo-gmc" || name == "soyo") return SelectorKind::SoyoGmc;
  if (name == "soyo-meanstd") return SelectorKind::SoyoMeanStd;
  if (name == "soyo-pca") return SelectorKind::SoyoPca;
  if (name == "nmc") return SelectorKind::Nmc;
  if (name == "kmeans-knn" || name == "kmeans") return SelectorKind::KmeansKnn;
  throw InvalidArgument("unknown selector '" + name + "'");
}

bool selector_is_soyo(SelectorKind kind) {
  return kind == SelectorKind::SoyoGmc || kind == SelectorKind::SoyoMeanStd ||
         kind == SelectorKind::SoyoPca;
}

Stream generate_stream(const StreamConfig& cfg) {
  cfg.validate();
  const RngStream root(cfg.seed, 0);
  const std::size_t d = cfg.dim;
  const std::size_t n_dom = cfg.n_domains;

  // Scaled unit axes are mutually sqrt(2) apart, so axis_scale * e_tau gives
  // the requested pairwise separation. The two levels use disjoint axis
  // blocks: each level carries its own view of the domain identity.
  const double axis_scale = cfg.domain_separation / std::sqrt(2.0);
  std::vector<std::vector<double>> means_mid(n_dom, std::vector<double>(d, 0.0));
  std::vector<std::vector<double>> means_last(n_dom, std::vector<double>(d, 0.0));
  for (std::size_t tau = 0; tau < n_dom; ++tau) {
    means_mid[tau][tau] = axis_scale;
    means_last[tau][n_dom + tau] = axis_scale;
  }

  // One offset per class and level, shared by every domain and supported on
  // that level's domain-mean axes, so the class structure confounds exactly
  // the discriminative directions. Expected squared norm is
  // class_offset_scale^2.
  auto draw_offsets = [&](std::uint64_t tag, std::size_t axis_base) {
    RngStream rng = root.substream(kTagClassOffsets).substream(tag);
    const double per_axis = cfg.class_offset_scale / std::sqrt(static_cast<double>(n_dom));
    std::vector<std::vector<double>> offsets(cfg.classes_per_domain,
                                             std::vector<double>(d, 0.0));
    for (auto& off : offsets) {
      const std::vector<double> z = rng.normals(n_dom);
      for (std::size_t a = 0; a < n_dom; ++a) off[axis_base + a] = per_axis * z[a];
    }
    return offsets;
  };
  const auto offsets_mid = draw_offsets(0, 0);
  const auto offsets_last = draw_offsets(1, n_dom);

  Stream stream;
  stream.dim = d;
  stream.levels = {LevelId::mid(), LevelId::last()};
  for (std::size_t tau = 0; tau < n_dom; ++tau) {
    DomainData data;
    data.train = make_domain_batch(cfg, tau, cfg.train_per_domain, means_mid[tau],
                                   means_last[tau], offsets_mid, offsets_last,
                                   root.substream(kTagSamples).substream(tau * 2));
    data.test = make_domain_batch(cfg, tau, cfg.test_per_domain, means_mid[tau],
                                  means_last[tau], offsets_mid, offsets_last,
                                  root.substream(kTagSamples).substream(tau * 2 + 1));
    stream.domains.push_back(std::move(data));
  }
  return stream;
}

SelectionMetrics compute_selection_metrics(std::span<const DomainId> truth,
                                           std::span<const DomainId> predicted, std::size_t t) {
  if (truth.size() != predicted.size())
    throw LengthMismatch("compute_selection_metrics: label counts differ");
  SelectionMetrics m;
  m.t = t;
  m.counts.assign(t * t, 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const int ti = truth[i].index, pi = predicted[i].index;
    if (ti < 0 || static_cast<std::size_t>(ti) >= t || pi < 0 ||
        static_cast<std::size_t>(pi) >= t)
      throw BadLabel("compute_selection_metrics: label outside [0, t)");
    ++m.counts[static_cast<std::size_t>(ti) * t + static_cast<std::size_t>(pi)];
    if (ti == pi) ++correct;
  }
  m.s_t = truth.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(truth.size());
  m.confusion_pct.assign(t * t, 0.0);
  m.per_domain_accuracy.assign(t, 0.0);
  for (std::size_t i = 0; i < t; ++i) {
    std::size_t row_total = 0;
    for (std::size_t j = 0; j < t; ++j) row_total += m.counts[i * t + j];
    if (row_total == 0) continue;
    for (std::size_t j = 0; j < t; ++j)
      m.confusion_pct[i * t + j] =
          100.0 * static_cast<double>(m.counts[i * t + j]) / static_cast<double>(row_total);
    m.per_domain_accuracy[i] = m.confusion_pct[i * t + i] / 100.0;
  }
  return m;
}

double compute_accuracy_proxy(std::span<const std::size_t> confusion_counts,
                              const ExpertMatrix& expert) {
  if (confusion_counts.size() != expert.t * expert.t)
    throw DimMismatch("compute_accuracy_proxy: confusion size != t*t");
  std::size_t total = 0;
  for (std::size_t c : confusion_counts) total += c;
  if (total == 0) throw EmptyInput("compute_accuracy_proxy: no samples");
  double acc = 0.0;
  for (std::size_t i = 0; i < expert.t; ++i)
    for (std::size_t j = 0; j < expert.t; ++j)
      acc += static_cast<double>(confusion_counts[i * expert.t + j]) * expert.at(i, j);
  return acc / static_cast<double>(total);
}

double oracle_accuracy(std::span<const std::size_t> confusion_counts,
                       const ExpertMatrix& expert) {
  if (confusion_counts.size() != expert.t * expert.t)
    throw DimMismatch("oracle_accuracy: confusion size != t*t");
  std::size_t total = 0;
  for (std::size_t c : confusion_counts) total += c;
  if (total == 0) throw EmptyInput("oracle_accuracy: no samples");
  double acc = 0.0;
  for (std::size_t i = 0; i < expert.t; ++i) {
    std::size_t row_total = 0;
    for (std::size_t j = 0; j < expert.t; ++j) row_total += confusion_counts[i * expert.t + j];
    acc += static_cast<double>(row_total) * expert.at(i, i);
  }
  return acc / static_cast<double>(total);
}

double compute_forgetting(const std::vector<std::vector<double>>& per_session_accuracy) {
  const std::size_t n_sessions = per_session_accuracy.size();
  if (n_sessions < 2) throw NotEnoughSessions("compute_forgetting: need at least 2 sessions");
  for (std::size_t s = 0; s < n_sessions; ++s)
    if (per_session_accuracy[s].size() != s + 1)
      throw LengthMismatch("compute_forgetting: session " + std::to_string(s) +
                           " must report exactly " + std::to_string(s + 1) + " accuracies");
  const auto& final_acc = per_session_accuracy.back();
  double sum = 0.0;
  for (std::size_t tau = 0; tau + 1 < n_sessions; ++tau)
    sum += final_acc[tau] - per_session_accuracy[tau][tau];
  return sum / static_cast<double>(n_sessions - 1);
}

std::vector<SessionReport> run_incremental(const Stream& stream, const RunConfig& cfg) {
  return run_incremental_full(stream, cfg, stream.n_domains()).reports;
}

IncrementalResult run_incremental_full(const Stream& stream, const RunConfig& cfg,
                                       std::size_t n_sessions) {
  cfg.validate();
  if (stream.n_domains() == 0) throw EmptyInput("run_incremental: empty stream");
  if (n_sessions < 1 || n_sessions > stream.n_domains())
    throw InvalidArgument("run_incremental: n_sessions outside [1, n_domains]");
  const RngStream root(cfg.seed, 0);
  const LevelId aux = cfg.train.aux_level, main = cfg.train.main_level;

  dfr::DomainStore store;
  mdfn::MdfnParams mdfn_params;
  bool has_mdfn = false;
  selectors::NmcModel nmc_model;
  nmc_model.dim = stream.dim;
  selectors::KmeansKnnModel knn_model;
  knn_model.dim = stream.dim;
  knn_model.centers_per_domain = cfg.kmeans_centers;

  std::vector<SessionReport> reports;
  std::vector<std::vector<double>> accuracy_history;

  for (std::size_t session = 0; session < n_sessions; ++session) {
    const std::size_t t = session + 1;
    const LabeledBatch& train_batch = stream.domains[session].train;
    const FeatureMatrix& train_last = train_batch.level(main);

    if (selector_is_soyo(cfg.selector)) {
      // Train the fusion network first: rehearsal draws on the compressed
      // models of domains < session, never their raw features.
      if (t >= 2) {
        LabeledBatch balanced;
        if (cfg.rehearsal) {
          RngStream batch_rng = root.substream(kTagBatch).substream(session);
          balanced = dfr::build_balanced_batch(store, train_batch.levels,
                                               train_last.n_rows(), batch_rng,
                                               cfg.pseudo_per_domain);
        } else {
          balanced = train_batch;
        }
        mdfn::TrainConfig train_cfg = cfg.train;
        train_cfg.seed = root.substream(kTagTrain).substream(session);
        const mdfn::MdfnParams* warm =
            cfg.warm_start && has_mdfn ? &mdfn_params : nullptr;
        mdfn::MdfnParams grown;
        if (warm != nullptr) {
          // Carry g1/g2 over and widen the head by one freshly seeded row.
          grown = mdfn::init_params(mdfn_params.dim(), mdfn_params.g1.hidden, t,
                                    mdfn_params.activation, train_cfg.seed.substream(0));
          grown.g1 = mdfn_params.g1;
          grown.g2 = mdfn_params.g2;
          std::copy(mdfn_params.g3.w.begin(), mdfn_params.g3.w.end(), grown.g3.w.begin());
          std::copy(mdfn_params.g3.b.begin(), mdfn_params.g3.b.end(), grown.g3.b.begin());
          warm = &grown;
        }
        mdfn_params = mdfn::train(balanced, t, train_cfg, warm).params;
        has_mdfn = true;
      }
    } else if (cfg.selector == SelectorKind::Nmc) {
      const selectors::NmcModel single = selectors::nmc_fit({train_last});
      nmc_model.centroids.push_back(single.centroids.front());
    } else {
      const selectors::KmeansKnnModel single = selectors::kmeans_fit(
          {train_last}, cfg.kmeans_centers, root.substream(kTagKmeans).substream(session));
      for (const auto& center : single.centers) knn_model.centers.push_back(center);
    }

    // Compress the newest domain at every level; raw features are not kept.
    dfr::DomainStore::DomainRecord record;
    record.n_train = train_last.n_rows();
    for (const auto& [level, features] : train_batch.levels) {
      RngStream fit_rng = root.substream(kTagCompress)
                              .substream(session * 8 + static_cast<std::size_t>(level.index));
      record.levels.emplace(level, compress_features(features, cfg, fit_rng));
    }
    store.domains.push_back(std::move(record));

    // Evaluate on the union of all seen test splits.
    std::vector<DomainId> truth, predicted;
    for (std::size_t tau = 0; tau < t; ++tau) {
      const LabeledBatch& test = stream.domains[tau].test;
      const FeatureMatrix& test_mid = test.level(aux);
      const FeatureMatrix& test_last = test.level(main);
      for (std::size_t i = 0; i < test.n_rows(); ++i) {
        truth.push_back(test.labels[i]);
        DomainId pred{0};
        if (selector_is_soyo(cfg.selector)) {
          pred = has_mdfn
                     ? mdfn::predict(test_mid.row(i), test_last.row(i), mdfn_params).first
                     : DomainId{0};
        } else if (cfg.selector == SelectorKind::Nmc) {
          pred = selectors::nmc_predict(nmc_model, test_last.row(i));
        } else {
          pred = selectors::knn_predict(knn_model, test_last.row(i));
        }
        predicted.push_back(pred);
      }
    }

    SessionReport report;
    report.session = session;
    report.t = t;
    report.selection = compute_selection_metrics(truth, predicted, t);
    const ExpertMatrix expert = ExpertMatrix::uniform(t, cfg.expert_diag, cfg.expert_offdiag);
    report.a_t = compute_accuracy_proxy(report.selection.counts, expert);
    report.oracle_a_t = oracle_accuracy(report.selection.counts, expert);
    accuracy_history.push_back(report.selection.per_domain_accuracy);
    report.f_t = t >= 2 ? compute_forgetting(accuracy_history) : 0.0;

    report.memory.store_params =
        selector_is_soyo(cfg.selector)
            ? store.total_param_count()
            : (cfg.selector == SelectorKind::Nmc
                   ? t * stream.dim
                   : t * cfg.kmeans_centers * stream.dim);
    report.memory.extra_params =
        selector_is_soyo(cfg.selector)
            ? mdfn_param_count(stream.dim, cfg.train.hidden, t)
            : 0;
    report.memory.store_ratio =
        static_cast<double>(report.memory.store_params) / cfg.backbone_params;
    report.memory.extra_ratio =
        static_cast<double>(report.memory.extra_params) / cfg.backbone_params;
    reports.push_back(std::move(report));
  }

  IncrementalResult result;
  result.reports = std::move(reports);
  result.store = std::move(store);
  if (selector_is_soyo(cfg.selector)) {
    if (has_mdfn) result.mdfn = std::move(mdfn_params);
  } else if (cfg.selector == SelectorKind::Nmc) {
    result.nmc = std::move(nmc_model);
  } else {
    result.kmeans = std::move(knn_model);
  }
  return result;
}

ComparisonReport compare_selectors(const Stream& stream, const RunConfig& base) {
  ComparisonReport report;
  report.selectors = {SelectorKind::SoyoGmc, SelectorKind::SoyoMeanStd, SelectorKind::SoyoPca,
                      SelectorKind::Nmc, SelectorKind::KmeansKnn};
  for (const SelectorKind kind : report.selectors) {
    RunConfig cfg = base;
    cfg.selector = kind;
    report.sessions.push_back(run_incremental(stream, cfg));
  }
  return report;
}

Stream ingest_features(const std::string& dir) {
  namespace fs = std::filesystem;
  const std::vector<LevelId> levels = {LevelId::mid(), LevelId::last()};

  Stream stream;
  stream.levels = levels;
  for (std::size_t domain = 0;; ++domain) {
    const std::string stem = dir + "/domain" + std::to_string(domain) + "_";
    bool any = false, all = true;
    for (const LevelId level : levels) {
      for (const char* split : {"train", "test"}) {
        const bool present = fs::exists(stem + to_string(level) + "_" + split + ".feat");
        any = any || present;
        all = all && present;
      }
    }
    if (!any) break;
    if (!all)
      throw IncompleteStore("ingest_features: domain " + std::to_string(domain) +
                            " is missing level/split files in " + dir);

    DomainData data;
    for (const bool is_train : {true, false}) {
      LabeledBatch& batch = is_train ? data.train : data.test;
      std::size_t n_rows = 0;
      for (const LevelId level : levels) {
        const std::string path =
            stem + to_string(level) + "_" + (is_train ? "train" : "test") + ".feat";
        cli::FeatFile file = cli::load_feat(path);
        if (stream.dim == 0) stream.dim = file.features.dim();
        if (file.features.dim() != stream.dim)
          throw DimMismatch("ingest_features: " + path + " has dim " +
                            std::to_string(file.features.dim()) + ", expected " +
                            std::to_string(stream.dim));
        n_rows = file.features.n_rows();
        batch.levels.emplace(level, std::move(file.features));
      }
      batch.labels.assign(n_rows, DomainId{static_cast<int>(domain)});
      batch.validate();
    }
    stream.domains.push_back(std::move(data));
  }
  if (stream.domains.empty())
    throw EmptyInput("ingest_features: no domain files found in " + dir);
  return stream;
}

}  // namespace soyo::harness
