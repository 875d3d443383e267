#include "soyo/cli.hpp"

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "soyo/featfile.hpp"

namespace soyo::cli {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

// ---------------------------------------------------------------------------
// config file handling
// ---------------------------------------------------------------------------

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t");
  return s.substr(begin, end - begin + 1);
}

std::size_t to_count(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const unsigned long long v = std::stoull(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw InvalidArgument("config: bad integer for " + key + ": '" + value + "'");
  }
}

double to_real(const std::string& key, const std::string& value) {
  char* end = nullptr;
  const double v = std::strtod(value.c_str(), &end);
  if (end != value.c_str() + value.size() || !std::isfinite(v))
    throw InvalidArgument("config: bad number for " + key + ": '" + value + "'");
  return v;
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw InvalidArgument("config: bad boolean for " + key + ": '" + value + "'");
}

void apply_key(ToolConfig& cfg, const std::string& section, const std::string& key,
               const std::string& value) {
  const std::string full = section.empty() ? key : section + "." + key;
  if (section.empty()) {
    if (key == "seed") {
      const std::size_t seed = to_count(full, value);
      cfg.stream.seed = seed;
      cfg.run.seed = seed;
      return;
    }
    throw InvalidArgument("config: unknown top-level key '" + key + "'");
  }
  if (section == "stream") {
    if (key == "n_domains") cfg.stream.n_domains = to_count(full, value);
    else if (key == "dim") cfg.stream.dim = to_count(full, value);
    else if (key == "classes_per_domain") cfg.stream.classes_per_domain = to_count(full, value);
    else if (key == "train_per_domain") cfg.stream.train_per_domain = to_count(full, value);
    else if (key == "test_per_domain") cfg.stream.test_per_domain = to_count(full, value);
    else if (key == "domain_separation") cfg.stream.domain_separation = to_real(full, value);
    else if (key == "class_offset_scale") cfg.stream.class_offset_scale = to_real(full, value);
    else if (key == "within_noise") cfg.stream.within_noise = to_real(full, value);
    else if (key == "level_correlation") cfg.stream.level_correlation = to_real(full, value);
    else throw InvalidArgument("config: unknown key '" + full + "'");
  } else if (section == "em") {
    if (key == "max_iter") cfg.run.em.max_iter = to_count(full, value);
    else if (key == "rel_tol") cfg.run.em.rel_tol = to_real(full, value);
    else if (key == "var_floor") cfg.run.em.var_floor = to_real(full, value);
    else if (key == "n_restarts") cfg.run.em.n_restarts = to_count(full, value);
    else if (key == "init") {
      if (value == "kmeans++") cfg.run.em.init = gmc::GmmInit::KMeansPlusPlus;
      else if (value == "random") cfg.run.em.init = gmc::GmmInit::RandomPoints;
      else throw InvalidArgument("config: em.init must be kmeans++ or random");
    } else if (key == "cov") {
      if (value == "diag") cfg.run.em.cov_kind = gmc::CovKind::Diagonal;
      else if (value == "full") cfg.run.em.cov_kind = gmc::CovKind::Full;
      else throw InvalidArgument("config: em.cov must be diag or full");
    } else throw InvalidArgument("config: unknown key '" + full + "'");
  } else if (section == "train") {
    if (key == "learning_rate") cfg.run.train.learning_rate = to_real(full, value);
    else if (key == "weight_decay") cfg.run.train.weight_decay = to_real(full, value);
    else if (key == "epochs") cfg.run.train.epochs = to_count(full, value);
    else if (key == "batch_size") cfg.run.train.batch_size = to_count(full, value);
    else if (key == "hidden") cfg.run.train.hidden = to_count(full, value);
    else throw InvalidArgument("config: unknown key '" + full + "'");
  } else if (section == "run") {
    if (key == "selector") cfg.run.selector = harness::selector_from_string(value);
    else if (key == "gmm_k") cfg.run.gmm_k = to_count(full, value);
    else if (key == "auto_k") cfg.run.auto_k = to_bool(full, value);
    else if (key == "k_min") cfg.run.k_min = to_count(full, value);
    else if (key == "k_max") cfg.run.k_max = to_count(full, value);
    else if (key == "pca_components") cfg.run.pca_components = to_count(full, value);
    else if (key == "kmeans_centers") cfg.run.kmeans_centers = to_count(full, value);
    else if (key == "rehearsal") cfg.run.rehearsal = to_bool(full, value);
    else if (key == "warm_start") cfg.run.warm_start = to_bool(full, value);
    else if (key == "pseudo_per_domain") cfg.run.pseudo_per_domain = to_count(full, value);
    else if (key == "expert_diag") cfg.run.expert_diag = to_real(full, value);
    else if (key == "expert_offdiag") cfg.run.expert_offdiag = to_real(full, value);
    else if (key == "backbone_params") cfg.run.backbone_params = to_real(full, value);
    else throw InvalidArgument("config: unknown key '" + full + "'");
  } else {
    throw InvalidArgument("config: unknown section '" + section + "'");
  }
}

std::string render_bool(bool v) { return v ? "true" : "false"; }

// short form for progress lines; output files always use format_double
std::string fmt_short(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

std::string render_init(gmc::GmmInit init) {
  return init == gmc::GmmInit::KMeansPlusPlus ? "kmeans++" : "random";
}

std::string render_cov(gmc::CovKind kind) {
  return kind == gmc::CovKind::Diagonal ? "diag" : "full";
}

// ---------------------------------------------------------------------------
// report writers
// ---------------------------------------------------------------------------

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw FormatError("write failed for " + path.string());
}

std::string session_csv(const std::vector<std::pair<harness::SelectorKind,
                                                    const std::vector<harness::SessionReport>*>>&
                            runs) {
  std::ostringstream out;
  out << "selector,session,t,s_t,a_t,oracle_a_t,f_t,store_params,store_ratio,extra_params,"
         "extra_ratio\n";
  for (const auto& [kind, reports] : runs) {
    for (const harness::SessionReport& r : *reports) {
      out << to_string(kind) << ',' << (r.session + 1) << ',' << r.t << ','
          << format_double(r.selection.s_t) << ',' << format_double(r.a_t) << ','
          << format_double(r.oracle_a_t) << ',' << format_double(r.f_t) << ','
          << r.memory.store_params << ',' << format_double(r.memory.store_ratio) << ','
          << r.memory.extra_params << ',' << format_double(r.memory.extra_ratio) << '\n';
    }
  }
  return out.str();
}

std::string confusion_csv(const std::vector<std::pair<harness::SelectorKind,
                                                      const std::vector<harness::SessionReport>*>>&
                              runs) {
  std::ostringstream out;
  out << "selector,session,true_domain,selected_domain,percent,count\n";
  for (const auto& [kind, reports] : runs) {
    for (const harness::SessionReport& r : *reports) {
      for (std::size_t i = 0; i < r.t; ++i)
        for (std::size_t j = 0; j < r.t; ++j)
          out << to_string(kind) << ',' << (r.session + 1) << ',' << (i + 1) << ',' << (j + 1)
              << ',' << format_double(r.selection.confusion_pct[i * r.t + j]) << ','
              << r.selection.counts[i * r.t + j] << '\n';
    }
  }
  return out.str();
}

ordered_json session_json(const harness::SessionReport& r) {
  ordered_json j;
  j["session"] = r.session + 1;
  j["t"] = r.t;
  j["s_t"] = r.selection.s_t;
  j["a_t"] = r.a_t;
  j["oracle_a_t"] = r.oracle_a_t;
  j["f_t"] = r.f_t;
  j["per_domain_accuracy"] = r.selection.per_domain_accuracy;
  ordered_json pct = ordered_json::array(), counts = ordered_json::array();
  for (std::size_t i = 0; i < r.t; ++i) {
    ordered_json prow = ordered_json::array(), crow = ordered_json::array();
    for (std::size_t j2 = 0; j2 < r.t; ++j2) {
      prow.push_back(r.selection.confusion_pct[i * r.t + j2]);
      crow.push_back(r.selection.counts[i * r.t + j2]);
    }
    pct.push_back(prow);
    counts.push_back(crow);
  }
  j["confusion_pct"] = pct;
  j["confusion_counts"] = counts;
  j["memory"] = {{"store_params", r.memory.store_params},
                 {"store_ratio", r.memory.store_ratio},
                 {"extra_params", r.memory.extra_params},
                 {"extra_ratio", r.memory.extra_ratio}};
  return j;
}

// ---------------------------------------------------------------------------
// shared command state
// ---------------------------------------------------------------------------

struct Ctx {
  ToolConfig cfg;
  std::string out_dir;
  bool quiet = false;
  std::string hash;

  void info(const std::string& msg) const {
    if (!quiet) std::cout << msg << '\n';
  }

  fs::path out_path(const std::string& name) const {
    if (out_dir.empty()) throw InvalidArgument("--out <dir> is required for this command");
    fs::create_directories(out_dir);
    return fs::path(out_dir) / name;
  }

  std::string provenance() const {
    return "# seed=" + std::to_string(cfg.run.seed) + " config_hash=" + hash + "\n";
  }
};

// gen: synthesize a stream and write it as FEAT files plus a manifest.
void cmd_gen(const Ctx& ctx) {
  const harness::Stream stream = harness::generate_stream(ctx.cfg.stream);
  for (std::size_t tau = 0; tau < stream.n_domains(); ++tau) {
    for (const LevelId level : stream.levels) {
      for (const bool is_train : {true, false}) {
        const harness::DomainData& data = stream.domains[tau];
        const LabeledBatch& batch = is_train ? data.train : data.test;
        std::vector<std::uint32_t> labels(batch.n_rows(),
                                          static_cast<std::uint32_t>(tau));
        const std::string name = "domain" + std::to_string(tau) + "_" + to_string(level) +
                                 "_" + (is_train ? "train" : "test") + ".feat";
        save_feat(ctx.out_path(name).string(), batch.level(level), labels);
      }
    }
  }
  ordered_json manifest;
  manifest["format"] = "soyo-stream";
  manifest["version"] = 1;
  manifest["seed"] = ctx.cfg.stream.seed;
  manifest["config_hash"] = ctx.hash;
  manifest["n_domains"] = stream.n_domains();
  manifest["dim"] = stream.dim;
  ordered_json levels = ordered_json::array();
  for (const LevelId level : stream.levels) levels.push_back(to_string(level));
  manifest["levels"] = levels;
  manifest["train_per_domain"] = ctx.cfg.stream.train_per_domain;
  manifest["test_per_domain"] = ctx.cfg.stream.test_per_domain;
  write_file(ctx.out_path("manifest.json"), manifest.dump(2) + "\n");
  ctx.info("wrote " + std::to_string(stream.n_domains()) + " domains (dim " +
           std::to_string(stream.dim) + ") to " + ctx.out_dir);
}

void cmd_fit_gmc(const Ctx& ctx, const std::string& in, const std::string& out_file,
                 const std::string& compressor, std::size_t domain, const std::string& level_name,
                 bool append) {
  const FeatFile feat = load_feat(in);
  const LevelId level = level_from_string(level_name);

  dfr::CompressedModel model = [&]() -> dfr::CompressedModel {
    if (compressor == "meanstd") return gmc::fit_meanstd(feat.features);
    if (compressor == "pca")
      return gmc::fit_pca(feat.features,
                          std::min(ctx.cfg.run.pca_components,
                                   std::min(feat.features.n_rows(), feat.features.dim())));
    gmc::EmConfig em = ctx.cfg.run.em;
    em.seed = RngStream(ctx.cfg.run.seed, 0);
    if (ctx.cfg.run.auto_k) {
      const std::size_t k_max = std::min(ctx.cfg.run.k_max, feat.features.n_rows());
      const std::size_t best =
          gmc::select_k(feat.features, ctx.cfg.run.k_min, k_max, em).best_k;
      return gmc::fit_gmm(feat.features, best, em).model;
    }
    return gmc::fit_gmm(feat.features, ctx.cfg.run.gmm_k, em).model;
  }();

  ModelStore ms;
  if (append && fs::exists(out_file)) ms = load_model_store(out_file);
  ms.seed = ctx.cfg.run.seed;
  ms.config_hash = ctx.hash;
  if (domain > ms.store.n_domains())
    throw InvalidArgument("fit-gmc: domain " + std::to_string(domain) +
                          " would leave a gap (store has " +
                          std::to_string(ms.store.n_domains()) + " domains)");
  if (domain == ms.store.n_domains()) ms.store.domains.emplace_back();
  auto& record = ms.store.domains[domain];
  if (record.levels.count(level) != 0)
    throw InvalidArgument("fit-gmc: store already has domain " + std::to_string(domain) +
                          " level " + level_name);
  record.n_train = feat.features.n_rows();
  const std::size_t params = dfr::compressed_param_count(model);
  record.levels.emplace(level, std::move(model));
  save_model_store(out_file, ms);
  ctx.info("fitted " + compressor + " on " + std::to_string(feat.features.n_rows()) +
           " rows (" + std::to_string(params) + " stored parameters) -> " + out_file);
}

void cmd_bic_sweep(const Ctx& ctx, const std::string& in, std::size_t k_min, std::size_t k_max) {
  const FeatFile feat = load_feat(in);
  gmc::EmConfig em = ctx.cfg.run.em;
  em.seed = RngStream(ctx.cfg.run.seed, 0);
  const gmc::SelectKResult result = gmc::select_k(feat.features, k_min, k_max, em);

  std::ostringstream csv;
  csv << "k,bic\n";
  for (const gmc::KScore& s : result.scores) {
    std::cout << "K=" << s.k << "  BIC=" << format_double(s.bic) << '\n';
    csv << s.k << ',' << format_double(s.bic) << '\n';
  }
  std::cout << "best K = " << result.best_k << '\n';
  if (!ctx.out_dir.empty())
    write_file(ctx.out_path("bic_sweep.csv"), ctx.provenance() + csv.str());
}

void cmd_resample(const Ctx& ctx, const std::string& store_path, std::size_t domain,
                  const std::string& level_name, std::size_t n, const std::string& out_file) {
  const ModelStore ms = load_model_store(store_path);
  const dfr::CompressedModel& model =
      ms.store.model(DomainId{static_cast<int>(domain)}, level_from_string(level_name));
  RngStream rng(ctx.cfg.run.seed, 0);
  const FeatureMatrix pseudo = dfr::sample_compressed(model, n, rng);
  std::vector<std::uint32_t> labels(n, static_cast<std::uint32_t>(domain));
  save_feat(out_file, pseudo, labels);
  ctx.info("resampled " + std::to_string(n) + " pseudo-features -> " + out_file);
}

void cmd_train(const Ctx& ctx, const std::string& stream_dir, std::size_t sessions) {
  const harness::Stream stream = harness::ingest_features(stream_dir);
  const std::size_t n_sessions =
      sessions == 0 ? stream.n_domains() : std::min(sessions, stream.n_domains());
  const harness::IncrementalResult result =
      harness::run_incremental_full(stream, ctx.cfg.run, n_sessions);

  ModelStore ms;
  ms.seed = ctx.cfg.run.seed;
  ms.config_hash = ctx.hash;
  ms.store = result.store;
  ms.mdfn = result.mdfn;
  ms.nmc = result.nmc;
  ms.kmeans = result.kmeans;
  const fs::path out = ctx.out_path("model.store");
  save_model_store(out.string(), ms);
  ctx.info("trained " + to_string(ctx.cfg.run.selector) + " through session " +
           std::to_string(n_sessions) + ", final S_T = " +
           fmt_short(result.reports.back().selection.s_t) + " -> " + out.string());
}

void cmd_predict(const Ctx& ctx, const std::string& store_path, const std::string& selector,
                 const std::string& in_mid, const std::string& in_last,
                 const std::string& dump_fused) {
  const ModelStore ms = load_model_store(store_path);
  const FeatFile last = load_feat(in_last);

  std::ostringstream csv;
  if (selector == "soyo") {
    if (!ms.mdfn) throw IncompleteStore("predict: store has no mdfn parameters");
    if (in_mid.empty()) throw InvalidArgument("predict: --in-mid is required for soyo");
    const FeatFile mid = load_feat(in_mid);
    if (mid.features.n_rows() != last.features.n_rows())
      throw LengthMismatch("predict: mid and last row counts differ");
    const std::size_t t = ms.mdfn->n_domains();
    csv << "index,selected_domain";
    for (std::size_t c = 1; c <= t; ++c) csv << ",p" << c;
    csv << '\n';
    std::vector<double> fused_rows;
    std::vector<std::uint32_t> fused_labels;
    for (std::size_t i = 0; i < last.features.n_rows(); ++i) {
      const auto [pred, probs] =
          mdfn::predict(mid.features.row(i), last.features.row(i), *ms.mdfn);
      csv << (i + 1) << ',' << (pred.index + 1);
      for (double p : probs.values) csv << ',' << format_double(p);
      csv << '\n';
      if (!dump_fused.empty()) {
        const std::vector<double> fused =
            mdfn::forward_fuse(mid.features.row(i), last.features.row(i), *ms.mdfn);
        fused_rows.insert(fused_rows.end(), fused.begin(), fused.end());
        fused_labels.push_back(static_cast<std::uint32_t>(pred.index));
      }
    }
    if (!dump_fused.empty()) {
      // fused domain features for external plotting, labeled by prediction
      save_feat(dump_fused,
                FeatureMatrix(last.features.n_rows(), ms.mdfn->dim(), std::move(fused_rows)),
                fused_labels);
      ctx.info("dumped fused features -> " + dump_fused);
    }
  } else if (selector == "nmc") {
    if (!ms.nmc) throw IncompleteStore("predict: store has no nmc model");
    csv << "index,selected_domain\n";
    for (std::size_t i = 0; i < last.features.n_rows(); ++i)
      csv << (i + 1) << ','
          << (selectors::nmc_predict(*ms.nmc, last.features.row(i)).index + 1) << '\n';
  } else if (selector == "kmeans") {
    if (!ms.kmeans) throw IncompleteStore("predict: store has no kmeans model");
    csv << "index,selected_domain\n";
    for (std::size_t i = 0; i < last.features.n_rows(); ++i)
      csv << (i + 1) << ','
          << (selectors::knn_predict(*ms.kmeans, last.features.row(i)).index + 1) << '\n';
  } else {
    throw InvalidArgument("predict: selector must be soyo, nmc or kmeans");
  }
  const fs::path out = ctx.out_path("predictions.csv");
  write_file(out, ctx.provenance() + csv.str());
  ctx.info("wrote " + std::to_string(last.features.n_rows()) + " predictions -> " +
           out.string());
}

void cmd_run(const Ctx& ctx, const std::string& stream_dir) {
  const harness::Stream stream = harness::ingest_features(stream_dir);
  const std::vector<harness::SessionReport> reports =
      harness::run_incremental(stream, ctx.cfg.run);

  const std::vector<std::pair<harness::SelectorKind, const std::vector<harness::SessionReport>*>>
      runs = {{ctx.cfg.run.selector, &reports}};
  write_file(ctx.out_path("report.csv"), ctx.provenance() + session_csv(runs));
  write_file(ctx.out_path("confusion.csv"), ctx.provenance() + confusion_csv(runs));

  ordered_json j;
  j["tool"] = "soyo";
  j["report"] = "run";
  j["seed"] = ctx.cfg.run.seed;
  j["config_hash"] = ctx.hash;
  j["selector"] = to_string(ctx.cfg.run.selector);
  ordered_json sessions = ordered_json::array();
  for (const harness::SessionReport& r : reports) sessions.push_back(session_json(r));
  j["sessions"] = sessions;
  write_file(ctx.out_path("report.json"), j.dump(2) + "\n");

  for (const harness::SessionReport& r : reports)
    ctx.info("session " + std::to_string(r.session + 1) + ": S_T = " +
             fmt_short(r.selection.s_t) + ", A_T = " + fmt_short(r.a_t) + " (oracle " +
             fmt_short(r.oracle_a_t) + ")");
}

void cmd_compare(const Ctx& ctx, const std::string& stream_dir) {
  const harness::Stream stream = harness::ingest_features(stream_dir);
  const harness::ComparisonReport report = harness::compare_selectors(stream, ctx.cfg.run);

  std::ostringstream csv;
  csv << "selector,s_t,a_t,oracle_a_t,f_t,store_params,store_ratio,extra_params,extra_ratio\n";
  for (std::size_t s = 0; s < report.selectors.size(); ++s) {
    const harness::SessionReport& r = report.final_report(s);
    csv << to_string(report.selectors[s]) << ',' << format_double(r.selection.s_t) << ','
        << format_double(r.a_t) << ',' << format_double(r.oracle_a_t) << ','
        << format_double(r.f_t) << ',' << r.memory.store_params << ','
        << format_double(r.memory.store_ratio) << ',' << r.memory.extra_params << ','
        << format_double(r.memory.extra_ratio) << '\n';
  }
  write_file(ctx.out_path("comparison.csv"), ctx.provenance() + csv.str());

  std::vector<std::pair<harness::SelectorKind, const std::vector<harness::SessionReport>*>> runs;
  for (std::size_t s = 0; s < report.selectors.size(); ++s)
    runs.emplace_back(report.selectors[s], &report.sessions[s]);
  write_file(ctx.out_path("sessions.csv"), ctx.provenance() + session_csv(runs));
  write_file(ctx.out_path("confusion.csv"), ctx.provenance() + confusion_csv(runs));

  ordered_json j;
  j["tool"] = "soyo";
  j["report"] = "compare";
  j["seed"] = ctx.cfg.run.seed;
  j["config_hash"] = ctx.hash;
  ordered_json selectors_json = ordered_json::array();
  for (std::size_t s = 0; s < report.selectors.size(); ++s) {
    ordered_json entry;
    entry["selector"] = to_string(report.selectors[s]);
    ordered_json sessions = ordered_json::array();
    for (const harness::SessionReport& r : report.sessions[s])
      sessions.push_back(session_json(r));
    entry["sessions"] = sessions;
    selectors_json.push_back(entry);
  }
  j["selectors"] = selectors_json;
  write_file(ctx.out_path("comparison.json"), j.dump(2) + "\n");

  for (std::size_t s = 0; s < report.selectors.size(); ++s)
    ctx.info(to_string(report.selectors[s]) + ": S_T = " +
             fmt_short(report.final_report(s).selection.s_t) + ", A_T = " +
             fmt_short(report.final_report(s).a_t));
}

void cmd_inspect(const Ctx& ctx, const std::string& store_path) {
  const ModelStore ms = load_model_store(store_path);
  std::cout << "store: " << store_path << '\n';
  std::cout << "seed: " << ms.seed << '\n';
  std::cout << "config-hash: " << (ms.config_hash.empty() ? "-" : ms.config_hash) << '\n';

  const double backbone = ctx.cfg.run.backbone_params;
  std::size_t total = 0;
  for (std::size_t domain = 0; domain < ms.store.n_domains(); ++domain) {
    for (const auto& [level, model] : ms.store.domains[domain].levels) {
      const std::size_t params = dfr::compressed_param_count(model);
      total += params;
      std::cout << "domain " << (domain + 1) << " level " << to_string(level) << ": ";
      if (const auto* gmm = std::get_if<gmc::GmmModel>(&model)) {
        std::cout << "gmm K=" << gmm->k << " dim=" << gmm->dim << " cov="
                  << render_cov(gmm->cov_kind);
      } else if (const auto* meanstd = std::get_if<gmc::MeanStdModel>(&model)) {
        std::cout << "meanstd dim=" << meanstd->dim();
      } else {
        const auto& pca = std::get<gmc::PcaModel>(model);
        std::cout << "pca N=" << pca.n_components << " dim=" << pca.dim();
      }
      std::cout << " params=" << params << '\n';
    }
  }
  auto pct = [&](std::size_t params) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6g%%", 100.0 * static_cast<double>(params) / backbone);
    return std::string(buf);
  };
  std::cout << "stored parameters total: " << total << " (" << pct(total)
            << " of backbone)\n";
  if (ms.mdfn)
    std::cout << "mdfn trainable parameters: " << ms.mdfn->n_params() << " ("
              << pct(ms.mdfn->n_params()) << " of backbone, t=" << ms.mdfn->n_domains()
              << ", hidden=" << ms.mdfn->g1.hidden << ")\n";
  if (ms.nmc)
    std::cout << "nmc centroids: " << ms.nmc->n_domains() << " x " << ms.nmc->dim << " ("
              << ms.nmc->n_domains() * ms.nmc->dim << " values)\n";
  if (ms.kmeans)
    std::cout << "kmeans centers: " << ms.kmeans->centers.size() << " x " << ms.kmeans->dim
              << " (" << ms.kmeans->centers.size() * ms.kmeans->dim << " values)\n";
}

}  // namespace

ToolConfig parse_config_text(const std::string& text, ToolConfig base) {
  std::istringstream in(text);
  std::string line, section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string s = trim(line);
    if (s.empty() || s[0] == '#' || s[0] == ';') continue;
    if (s.front() == '[') {
      if (s.back() != ']')
        throw FormatError("config line " + std::to_string(line_no) + ": unclosed section");
      section = trim(s.substr(1, s.size() - 2));
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos)
      throw FormatError("config line " + std::to_string(line_no) + ": expected key = value");
    apply_key(base, section, trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
  }
  return base;
}

ToolConfig load_config(const std::string& path, ToolConfig base) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open config file " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_config_text(text, std::move(base));
}

std::string canonical_config(const ToolConfig& cfg) {
  std::ostringstream out;
  out << "seed=" << cfg.run.seed << '\n';
  out << "stream.n_domains=" << cfg.stream.n_domains << '\n';
  out << "stream.dim=" << cfg.stream.dim << '\n';
  out << "stream.classes_per_domain=" << cfg.stream.classes_per_domain << '\n';
  out << "stream.train_per_domain=" << cfg.stream.train_per_domain << '\n';
  out << "stream.test_per_domain=" << cfg.stream.test_per_domain << '\n';
  out << "stream.domain_separation=" << format_double(cfg.stream.domain_separation) << '\n';
  out << "stream.class_offset_scale=" << format_double(cfg.stream.class_offset_scale) << '\n';
  out << "stream.within_noise=" << format_double(cfg.stream.within_noise) << '\n';
  out << "stream.level_correlation=" << format_double(cfg.stream.level_correlation) << '\n';
  out << "em.max_iter=" << cfg.run.em.max_iter << '\n';
  out << "em.rel_tol=" << format_double(cfg.run.em.rel_tol) << '\n';
  out << "em.var_floor=" << format_double(cfg.run.em.var_floor) << '\n';
  out << "em.n_restarts=" << cfg.run.em.n_restarts << '\n';
  out << "em.init=" << render_init(cfg.run.em.init) << '\n';
  out << "em.cov=" << render_cov(cfg.run.em.cov_kind) << '\n';
  out << "train.learning_rate=" << format_double(cfg.run.train.learning_rate) << '\n';
  out << "train.weight_decay=" << format_double(cfg.run.train.weight_decay) << '\n';
  out << "train.epochs=" << cfg.run.train.epochs << '\n';
  out << "train.batch_size=" << cfg.run.train.batch_size << '\n';
  out << "train.hidden=" << cfg.run.train.hidden << '\n';
  out << "run.selector=" << harness::to_string(cfg.run.selector) << '\n';
  out << "run.gmm_k=" << cfg.run.gmm_k << '\n';
  out << "run.auto_k=" << render_bool(cfg.run.auto_k) << '\n';
  out << "run.k_min=" << cfg.run.k_min << '\n';
  out << "run.k_max=" << cfg.run.k_max << '\n';
  out << "run.pca_components=" << cfg.run.pca_components << '\n';
  out << "run.kmeans_centers=" << cfg.run.kmeans_centers << '\n';
  out << "run.rehearsal=" << render_bool(cfg.run.rehearsal) << '\n';
  out << "run.warm_start=" << render_bool(cfg.run.warm_start) << '\n';
  out << "run.pseudo_per_domain=" << cfg.run.pseudo_per_domain << '\n';
  out << "run.expert_diag=" << format_double(cfg.run.expert_diag) << '\n';
  out << "run.expert_offdiag=" << format_double(cfg.run.expert_offdiag) << '\n';
  out << "run.backbone_params=" << format_double(cfg.run.backbone_params) << '\n';
  return out.str();
}

std::string config_hash(const ToolConfig& cfg) {
  const std::string text = canonical_config(cfg);
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"soyo: Gaussian-mixture feature compression, rehearsal and domain selection"};
  app.require_subcommand(1);
  app.fallthrough();

  std::uint64_t seed = 0;
  CLI::Option* seed_opt = app.add_option("--seed", seed, "root seed (overrides config/env)");
  std::string config_path;
  app.add_option("--config", config_path, "INI-style config file");
  std::string out_dir;
  app.add_option("--out", out_dir, "output directory");
  bool quiet = false;
  app.add_flag("--quiet", quiet, "suppress progress output");
  std::size_t threads = 1;
  app.add_option("--threads", threads, "worker threads for EM restarts")
      ->check(CLI::Range(std::size_t{1}, std::size_t{64}));

  // gen
  CLI::App* gen = app.add_subcommand("gen", "generate a synthetic stream as FEAT files");

  // fit-gmc
  CLI::App* fit = app.add_subcommand("fit-gmc", "fit a compressor on one FEAT file");
  std::string fit_in, fit_out, fit_compressor = "gmm", fit_level = "last";
  std::size_t fit_domain = 0;
  bool fit_append = false;
  fit->add_option("--in", fit_in, "input FEAT file")->required();
  fit->add_option("--out-store", fit_out, "output model store")->required();
  fit->add_option("--compressor", fit_compressor, "gmm | meanstd | pca")
      ->check(CLI::IsMember({"gmm", "meanstd", "pca"}));
  fit->add_option("--domain", fit_domain, "domain index of this record (0-based)");
  fit->add_option("--level", fit_level, "level tag: mid | last")
      ->check(CLI::IsMember({"mid", "last"}));
  fit->add_flag("--append", fit_append, "add the record to an existing store");

  // bic-sweep
  CLI::App* sweep = app.add_subcommand("bic-sweep", "BIC table over a K range");
  std::string sweep_in;
  std::size_t sweep_kmin = 1, sweep_kmax = 10;
  sweep->add_option("--in", sweep_in, "input FEAT file")->required();
  sweep->add_option("--k-min", sweep_kmin, "smallest K");
  sweep->add_option("--k-max", sweep_kmax, "largest K");

  // resample
  CLI::App* resample = app.add_subcommand("resample", "draw pseudo-features from a store");
  std::string rs_store, rs_level = "last", rs_out;
  std::size_t rs_domain = 0, rs_n = 0;
  resample->add_option("--store", rs_store, "model store")->required();
  resample->add_option("--domain", rs_domain, "domain index (0-based)");
  resample->add_option("--level", rs_level, "level tag")->check(CLI::IsMember({"mid", "last"}));
  resample->add_option("--n", rs_n, "sample count")->required();
  resample->add_option("--out-file", rs_out, "output FEAT file")->required();

  // train
  CLI::App* train = app.add_subcommand("train", "run the incremental pipeline, save models");
  std::string train_stream;
  std::size_t train_sessions = 0;
  train->add_option("--stream", train_stream, "stream directory (from gen)")->required();
  train->add_option("--sessions", train_sessions, "stop after this many sessions (default all)");

  // predict
  CLI::App* predict = app.add_subcommand("predict", "per-sample domain predictions");
  std::string pr_store, pr_selector = "soyo", pr_mid, pr_last, pr_dump_fused;
  predict->add_option("--store", pr_store, "model store")->required();
  predict->add_option("--selector", pr_selector, "soyo | nmc | kmeans")
      ->check(CLI::IsMember({"soyo", "nmc", "kmeans"}));
  predict->add_option("--in-mid", pr_mid, "mid-level FEAT file (soyo)");
  predict->add_option("--in-last", pr_last, "last-level FEAT file")->required();
  predict->add_option("--dump-fused", pr_dump_fused,
                      "also write the fused domain features to this FEAT file (soyo)");

  // run
  CLI::App* run = app.add_subcommand("run", "incremental evaluation of one selector");
  std::string run_stream, run_selector;
  run->add_option("--stream", run_stream, "stream directory (from gen)")->required();
  run->add_option("--selector", run_selector, "selector kind")
      ->check(CLI::IsMember({"soyo-gmc", "soyo-meanstd", "soyo-pca", "nmc", "kmeans-knn"}));

  // compare
  CLI::App* compare = app.add_subcommand("compare", "all selectors on one stream");
  std::string cmp_stream;
  compare->add_option("--stream", cmp_stream, "stream directory (from gen)")->required();

  // inspect
  CLI::App* inspect = app.add_subcommand("inspect", "summarize a model store");
  std::string ins_store;
  inspect->add_option("--store", ins_store, "model store")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    Ctx ctx;
    if (!config_path.empty()) ctx.cfg = load_config(config_path);
    if (seed_opt->count() == 0) {
      if (const char* env = std::getenv("SOYO_SEED"); env != nullptr && config_path.empty()) {
        char* end = nullptr;
        const unsigned long long v = std::strtoull(env, &end, 10);
        if (end == env || *end != '\0')
          throw InvalidArgument(std::string("SOYO_SEED is not an integer: ") + env);
        ctx.cfg.stream.seed = v;
        ctx.cfg.run.seed = v;
      }
    } else {
      ctx.cfg.stream.seed = seed;
      ctx.cfg.run.seed = seed;
    }
    ctx.cfg.run.em.threads = threads;
    ctx.out_dir = out_dir;
    ctx.quiet = quiet;
    ctx.hash = config_hash(ctx.cfg);

    if (gen->parsed()) {
      cmd_gen(ctx);
    } else if (fit->parsed()) {
      cmd_fit_gmc(ctx, fit_in, fit_out, fit_compressor, fit_domain, fit_level, fit_append);
    } else if (sweep->parsed()) {
      cmd_bic_sweep(ctx, sweep_in, sweep_kmin, sweep_kmax);
    } else if (resample->parsed()) {
      cmd_resample(ctx, rs_store, rs_domain, rs_level, rs_n, rs_out);
    } else if (train->parsed()) {
      cmd_train(ctx, train_stream, train_sessions);
    } else if (predict->parsed()) {
      cmd_predict(ctx, pr_store, pr_selector, pr_mid, pr_last, pr_dump_fused);
    } else if (run->parsed()) {
      if (!run_selector.empty())
        ctx.cfg.run.selector = harness::selector_from_string(run_selector);
      ctx.hash = config_hash(ctx.cfg);
      cmd_run(ctx, run_stream);
    } else if (compare->parsed()) {
      cmd_compare(ctx, cmp_stream);
    } else if (inspect->parsed()) {
      cmd_inspect(ctx, ins_store);
    }
    return 0;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 2;
  }
}

}  // namespace soyo::cli
