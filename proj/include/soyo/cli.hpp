#pragma once

#include <string>

#include "soyo/harness.hpp"
#include "soyo/modelstore.hpp"

namespace soyo::cli {

/// Effective tool configuration: the synthetic stream parameters plus the
/// run parameters. Populated from defaults, then an optional INI-style
/// config file, then command-line flags; the canonical serialization is
/// hashed into every output for provenance.
struct ToolConfig {
  harness::StreamConfig stream;
  harness::RunConfig run;
};

/// Parses the flat key=value sections [stream], [em], [train], [run] plus a
/// top-level `seed`. Unknown sections or keys are rejected.
ToolConfig parse_config_text(const std::string& text, ToolConfig base = ToolConfig{});
ToolConfig load_config(const std::string& path, ToolConfig base = ToolConfig{});

/// Fixed-order key=value rendering of every effective setting.
std::string canonical_config(const ToolConfig& cfg);

/// FNV-1a 64-bit hash of canonical_config, as 16 hex digits.
std::string config_hash(const ToolConfig& cfg);

/// Entry point behind the soyo binary. Returns 0 on success, 1 on usage
/// errors, 2 on data/format errors.
int cli_main(int argc, const char* const* argv);

}  // namespace soyo::cli
