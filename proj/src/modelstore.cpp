#include "soyo/modelstore.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace soyo::cli {

namespace {

std::string format_size(std::size_t v) { return std::to_string(v); }

void write_values(std::ostream& out, const char* tag, std::span<const double> values) {
  out << tag;
  for (double v : values) out << ' ' << format_double(v);
  out << '\n';
}

// --- parsing -------------------------------------------------------------

struct LineReader {
  std::istringstream in;
  std::string path;
  std::size_t line_no = 0;
  std::string line;

  bool next() {
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) return true;
    }
    return false;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw FormatError(path + ":" + std::to_string(line_no) + ": " + what);
  }
};

std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

// key=value fields after the record keyword
std::map<std::string, std::string> parse_fields(LineReader& r,
                                                const std::vector<std::string>& toks) {
  std::map<std::string, std::string> fields;
  for (std::size_t i = 1; i < toks.size(); ++i) {
    const auto pos = toks[i].find('=');
    if (pos == std::string::npos) r.fail("expected key=value, got '" + toks[i] + "'");
    fields[toks[i].substr(0, pos)] = toks[i].substr(pos + 1);
  }
  return fields;
}

std::string need(LineReader& r, const std::map<std::string, std::string>& fields,
                 const std::string& key) {
  auto it = fields.find(key);
  if (it == fields.end()) r.fail("missing field '" + key + "'");
  return it->second;
}

LevelId parse_level(LineReader& r, const std::string& s) {
  try {
    return level_from_string(s);
  } catch (const Error&) {
    r.fail("unknown level '" + s + "'");
  }
}

std::size_t parse_size(LineReader& r, const std::string& s) {
  try {
    std::size_t pos = 0;
    const unsigned long long v = std::stoull(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    r.fail("bad integer '" + s + "'");
  }
}

double parse_double(LineReader& r, const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size()) r.fail("bad number '" + s + "'");
  if (!std::isfinite(v)) r.fail("non-finite parameter '" + s + "'");
  return v;
}

std::vector<double> parse_values(LineReader& r, const std::string& tag, std::size_t count) {
  if (!r.next()) r.fail("unexpected end of file, wanted '" + tag + "'");
  const std::vector<std::string> toks = split_ws(r.line);
  if (toks.empty() || toks[0] != tag) r.fail("expected '" + tag + "' line");
  if (toks.size() != count + 1)
    r.fail("'" + tag + "' wants " + format_size(count) + " values, got " +
           format_size(toks.size() - 1));
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = parse_double(r, toks[i + 1]);
  return out;
}

// tag with an index argument, e.g. "mean 3 v v v ..."
std::vector<double> parse_indexed_values(LineReader& r, const std::string& tag,
                                         std::size_t index, std::size_t count) {
  if (!r.next()) r.fail("unexpected end of file, wanted '" + tag + "'");
  const std::vector<std::string> toks = split_ws(r.line);
  if (toks.size() != count + 2 || toks[0] != tag || parse_size(r, toks[1]) != index)
    r.fail("expected '" + tag + " " + format_size(index) + "' with " + format_size(count) +
           " values");
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = parse_double(r, toks[i + 2]);
  return out;
}

void expect_end(LineReader& r) {
  if (!r.next() || r.line != "end") r.fail("expected 'end'");
}

}  // namespace

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void save_model_store(const std::string& path, const ModelStore& ms) {
  std::ostringstream out;
  out << "soyo-model-store v1\n";
  out << "seed " << ms.seed << '\n';
  out << "config-hash " << (ms.config_hash.empty() ? "-" : ms.config_hash) << '\n';
  out << "domains " << ms.store.n_domains() << '\n';

  for (std::size_t domain = 0; domain < ms.store.n_domains(); ++domain) {
    const auto& record = ms.store.domains[domain];
    for (const auto& [level, model] : record.levels) {
      out << "record domain=" << domain << " level=" << to_string(level)
          << " n_train=" << record.n_train << ' ';
      if (const auto* gmm = std::get_if<gmc::GmmModel>(&model)) {
        out << "kind=gmm k=" << gmm->k << " dim=" << gmm->dim << " cov="
            << (gmm->cov_kind == gmc::CovKind::Diagonal ? "diag" : "full") << '\n';
        write_values(out, "weights", gmm->weights.values);
        for (std::size_t c = 0; c < gmm->k; ++c) {
          out << "mean " << c;
          for (double v : gmm->means[c]) out << ' ' << format_double(v);
          out << '\n';
          out << "cov " << c;
          for (double v : gmm->covariances[c].values) out << ' ' << format_double(v);
          out << '\n';
        }
      } else if (const auto* meanstd = std::get_if<gmc::MeanStdModel>(&model)) {
        out << "kind=meanstd dim=" << meanstd->dim() << '\n';
        write_values(out, "mean", meanstd->mean);
        write_values(out, "std", meanstd->std);
      } else {
        const auto& pca = std::get<gmc::PcaModel>(model);
        out << "kind=pca dim=" << pca.dim() << " n=" << pca.n_components << '\n';
        write_values(out, "mean", pca.mean);
        for (std::size_t c = 0; c < pca.n_components; ++c) {
          out << "axis " << c;
          for (double v : pca.axis(c)) out << ' ' << format_double(v);
          out << '\n';
        }
        write_values(out, "variances", pca.component_variances);
      }
      out << "end\n";
    }
  }

  if (ms.mdfn) {
    const mdfn::MdfnParams& p = *ms.mdfn;
    out << "mdfn dim=" << p.dim() << " hidden=" << p.g1.hidden << " t=" << p.g3.t
        << " activation=relu\n";
    write_values(out, "g1.w1", p.g1.w1);
    write_values(out, "g1.b1", p.g1.b1);
    write_values(out, "g1.w2", p.g1.w2);
    write_values(out, "g1.b2", p.g1.b2);
    write_values(out, "g2.w1", p.g2.w1);
    write_values(out, "g2.b1", p.g2.b1);
    write_values(out, "g2.w2", p.g2.w2);
    write_values(out, "g2.b2", p.g2.b2);
    write_values(out, "g3.w", p.g3.w);
    write_values(out, "g3.b", p.g3.b);
    out << "end\n";
  }

  if (ms.nmc) {
    out << "nmc dim=" << ms.nmc->dim << " domains=" << ms.nmc->n_domains() << '\n';
    for (std::size_t c = 0; c < ms.nmc->centroids.size(); ++c) {
      out << "centroid " << c;
      for (double v : ms.nmc->centroids[c]) out << ' ' << format_double(v);
      out << '\n';
    }
    out << "end\n";
  }

  if (ms.kmeans) {
    out << "kmeans dim=" << ms.kmeans->dim << " domains=" << ms.kmeans->n_domains()
        << " m=" << ms.kmeans->centers_per_domain << '\n';
    for (std::size_t c = 0; c < ms.kmeans->centers.size(); ++c) {
      out << "center " << c;
      for (double v : ms.kmeans->centers[c]) out << ' ' << format_double(v);
      out << '\n';
    }
    out << "end\n";
  }

  std::ofstream file(path, std::ios::trunc);
  if (!file) throw FormatError("save_model_store: cannot open " + path);
  file << out.str();
  if (!file) throw FormatError("save_model_store: write failed for " + path);
}

ModelStore load_model_store(const std::string& path) {
  std::ifstream file(path);
  if (!file) throw FormatError("load_model_store: cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());

  LineReader r;
  r.in.str(text);
  r.path = path;

  if (!r.next() || r.line != "soyo-model-store v1")
    r.fail("unsupported version (want 'soyo-model-store v1')");

  ModelStore ms;
  {
    if (!r.next()) r.fail("missing seed line");
    const auto toks = split_ws(r.line);
    if (toks.size() != 2 || toks[0] != "seed") r.fail("expected 'seed <value>'");
    ms.seed = static_cast<std::uint64_t>(parse_size(r, toks[1]));
  }
  {
    if (!r.next()) r.fail("missing config-hash line");
    const auto toks = split_ws(r.line);
    if (toks.size() != 2 || toks[0] != "config-hash") r.fail("expected 'config-hash <value>'");
    if (toks[1] != "-") ms.config_hash = toks[1];
  }
  std::size_t n_domains = 0;
  {
    if (!r.next()) r.fail("missing domains line");
    const auto toks = split_ws(r.line);
    if (toks.size() != 2 || toks[0] != "domains") r.fail("expected 'domains <count>'");
    n_domains = parse_size(r, toks[1]);
  }
  ms.store.domains.resize(n_domains);

  while (r.next()) {
    const std::vector<std::string> toks = split_ws(r.line);
    const std::string& keyword = toks[0];

    if (keyword == "record") {
      const auto fields = parse_fields(r, toks);
      const std::size_t domain = parse_size(r, need(r, fields, "domain"));
      if (domain >= n_domains) r.fail("domain index out of range");
      const LevelId level = parse_level(r, need(r, fields, "level"));
      const std::size_t n_train = parse_size(r, need(r, fields, "n_train"));
      const std::string kind = need(r, fields, "kind");
      auto& dst = ms.store.domains[domain];
      if (dst.levels.count(level) != 0) r.fail("duplicate record for domain/level");
      dst.n_train = n_train;

      if (kind == "gmm") {
        gmc::GmmModel gmm;
        gmm.k = parse_size(r, need(r, fields, "k"));
        gmm.dim = parse_size(r, need(r, fields, "dim"));
        const std::string cov = need(r, fields, "cov");
        if (cov != "diag" && cov != "full") r.fail("cov must be diag or full");
        gmm.cov_kind = cov == "diag" ? gmc::CovKind::Diagonal : gmc::CovKind::Full;
        gmm.weights.values = parse_values(r, "weights", gmm.k);
        const std::size_t cov_len =
            gmm.cov_kind == gmc::CovKind::Diagonal ? gmm.dim : gmm.dim * gmm.dim;
        for (std::size_t c = 0; c < gmm.k; ++c) {
          gmm.means.push_back(parse_indexed_values(r, "mean", c, gmm.dim));
          std::vector<double> values = parse_indexed_values(r, "cov", c, cov_len);
          gmm.covariances.push_back(gmm.cov_kind == gmc::CovKind::Diagonal
                                        ? gmc::Covariance::diagonal(std::move(values))
                                        : gmc::Covariance::full(gmm.dim, std::move(values)));
        }
        expect_end(r);
        try {
          gmm.validate();
        } catch (const Error& e) {
          r.fail(std::string("invalid gmm record: ") + e.what());
        }
        dst.levels.emplace(level, std::move(gmm));
      } else if (kind == "meanstd") {
        const std::size_t dim = parse_size(r, need(r, fields, "dim"));
        gmc::MeanStdModel m;
        m.mean = parse_values(r, "mean", dim);
        m.std = parse_values(r, "std", dim);
        for (double s : m.std)
          if (s < 0.0) r.fail("negative std");
        expect_end(r);
        dst.levels.emplace(level, std::move(m));
      } else if (kind == "pca") {
        const std::size_t dim = parse_size(r, need(r, fields, "dim"));
        const std::size_t n_comp = parse_size(r, need(r, fields, "n"));
        gmc::PcaModel m;
        m.mean = parse_values(r, "mean", dim);
        m.n_components = n_comp;
        m.components.reserve(n_comp * dim);
        for (std::size_t c = 0; c < n_comp; ++c) {
          const std::vector<double> axis = parse_indexed_values(r, "axis", c, dim);
          m.components.insert(m.components.end(), axis.begin(), axis.end());
        }
        m.component_variances = parse_values(r, "variances", n_comp);
        for (double v : m.component_variances)
          if (v < 0.0) r.fail("negative component variance");
        expect_end(r);
        dst.levels.emplace(level, std::move(m));
      } else {
        r.fail("unknown record kind '" + kind + "'");
      }
    } else if (keyword == "mdfn") {
      const auto fields = parse_fields(r, toks);
      const std::size_t dim = parse_size(r, need(r, fields, "dim"));
      const std::size_t hidden = parse_size(r, need(r, fields, "hidden"));
      const std::size_t t = parse_size(r, need(r, fields, "t"));
      if (need(r, fields, "activation") != "relu") r.fail("unknown activation");
      mdfn::MdfnParams p;
      p.g1 = mdfn::MlpParams::zeros(dim, hidden, dim);
      p.g2 = mdfn::MlpParams::zeros(dim, hidden, dim);
      p.g3 = mdfn::HeadParams::zeros(dim, t);
      p.g1.w1 = parse_values(r, "g1.w1", hidden * dim);
      p.g1.b1 = parse_values(r, "g1.b1", hidden);
      p.g1.w2 = parse_values(r, "g1.w2", dim * hidden);
      p.g1.b2 = parse_values(r, "g1.b2", dim);
      p.g2.w1 = parse_values(r, "g2.w1", hidden * dim);
      p.g2.b1 = parse_values(r, "g2.b1", hidden);
      p.g2.w2 = parse_values(r, "g2.w2", dim * hidden);
      p.g2.b2 = parse_values(r, "g2.b2", dim);
      p.g3.w = parse_values(r, "g3.w", t * dim);
      p.g3.b = parse_values(r, "g3.b", t);
      expect_end(r);
      ms.mdfn = std::move(p);
    } else if (keyword == "nmc") {
      const auto fields = parse_fields(r, toks);
      selectors::NmcModel m;
      m.dim = parse_size(r, need(r, fields, "dim"));
      const std::size_t domains = parse_size(r, need(r, fields, "domains"));
      for (std::size_t c = 0; c < domains; ++c)
        m.centroids.push_back(parse_indexed_values(r, "centroid", c, m.dim));
      expect_end(r);
      ms.nmc = std::move(m);
    } else if (keyword == "kmeans") {
      const auto fields = parse_fields(r, toks);
      selectors::KmeansKnnModel m;
      m.dim = parse_size(r, need(r, fields, "dim"));
      const std::size_t domains = parse_size(r, need(r, fields, "domains"));
      m.centers_per_domain = parse_size(r, need(r, fields, "m"));
      for (std::size_t c = 0; c < domains * m.centers_per_domain; ++c)
        m.centers.push_back(parse_indexed_values(r, "center", c, m.dim));
      expect_end(r);
      ms.kmeans = std::move(m);
    } else {
      r.fail("unknown keyword '" + keyword + "'");
    }
  }

  for (std::size_t domain = 0; domain < n_domains; ++domain)
    if (ms.store.domains[domain].levels.empty())
      r.fail("domain " + format_size(domain) + " has no records");

  return ms;
}

}  // namespace soyo::cli
