#pragma once

// Batch front-end: configuration, subcommands and artifact emission.

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

namespace ldplab::app {

enum ExitCode : int { kOk = 0, kValidation = 1, kComputation = 2, kInconclusive = 3 };

/// Built-in configuration; every accepted key appears here.
nlohmann::json default_config();

/// Merges src into dst. Keys absent from dst and values of the wrong type are rejected.
void merge_config(nlohmann::json& dst, const nlohmann::json& src, const std::string& prefix = "");

/// Applies one dotted override ("params.a", "2.0"). A bare key names the unique leaf with
/// that name ("a" -> "params.a").
void apply_override(nlohmann::json& config, const std::string& key, const std::string& value);

/// 64-bit FNV-1a of the bytes, as 16 lower-case hex digits.
std::string fnv1a_hex(const std::string& bytes);

/// Hash of (subcommand, canonical config, version).
std::string config_hash(const std::string& subcommand, const nlohmann::json& config);

std::vector<std::string> subcommands();

/// Full command line: argv[0] is ignored. Writes artifacts under outputs.directory.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ldplab::app
