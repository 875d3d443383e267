#pragma once

#include <optional>
#include <string>

#include "soyo/dfr.hpp"
#include "soyo/mdfn.hpp"
#include "soyo/selectors.hpp"

namespace soyo::cli {

/// Versioned text document holding every persisted model: the per-domain,
/// per-level compressor records, optional MDFN parameters, optional baseline
/// selector models, and provenance (seed, config hash). All values are
/// written with 17 significant digits so a load(save(m)) round trip
/// reproduces 64-bit parameters exactly.
struct ModelStore {
  std::uint64_t seed = 0;
  std::string config_hash;
  dfr::DomainStore store;
  std::optional<mdfn::MdfnParams> mdfn;
  std::optional<selectors::NmcModel> nmc;
  std::optional<selectors::KmeansKnnModel> kmeans;
};

void save_model_store(const std::string& path, const ModelStore& store);

/// Parses and validates a store document. Non-finite parameters, malformed
/// records and trailing garbage are rejected with FormatError (line-numbered
/// diagnostics).
ModelStore load_model_store(const std::string& path);

std::string format_double(double v);  // 17 significant digits, round-trip exact

}  // namespace soyo::cli
