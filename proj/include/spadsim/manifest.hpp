#pragma once

#include <openssl/evp.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "spadsim/config.hpp"

/** @file spadsim/manifest.hpp
    @brief Run manifests: resolved configuration, seeds and SHA-256 checksums of every output.
*/

namespace spadsim
{
  inline constexpr const char* tool_version = "1.0.0";
  inline constexpr const char* manifest_name = "manifest.json";

  inline std::string sha256_hex(const std::string& data)
  {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) throw std::runtime_error("sha256 failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned i = 0; i < len; ++i)
    {
      out += hex[digest[i] >> 4];
      out += hex[digest[i] & 15];
    }
    return out;
  }

  inline std::string read_file(const std::filesystem::path& p)
  {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + p.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  }

  struct OutputFile
  {
    std::string name;  ///< relative to the output directory
    std::string sha256;
  };

  struct CheckResult
  {
    std::string name;
    bool passed = false;
    std::string detail;
  };

  struct RunRecord
  {
    std::string subcommand;
    RunConfig config;
    std::vector<std::uint64_t> point_seeds;
    std::vector<OutputFile> outputs;
    std::vector<CheckResult> checks;
    bool success = true;
    std::string error;
  };

  inline nlohmann::json to_json(const RunRecord& r)
  {
    nlohmann::json j;
    j["tool"] = "spadsim";
    j["version"] = tool_version;
    j["subcommand"] = r.subcommand;
    j["master_seed"] = r.config.master_seed;
    j["point_seeds"] = r.point_seeds;
    j["config"] = config_to_json(r.config);
    j["status"] = r.success ? "ok" : "failed";
    if (!r.error.empty()) j["error"] = r.error;
    auto& checks = j["checks"] = nlohmann::json::array();
    for (const auto& c : r.checks) checks.push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
    auto& outs = j["outputs"] = nlohmann::json::array();
    for (const auto& o : r.outputs) outs.push_back({{"file", o.name}, {"sha256", o.sha256}});
    return j;
  }

  /// Writes <dir>/manifest.json; throws when the directory is not writable.
  inline std::filesystem::path write_manifest(const RunRecord& r, const std::filesystem::path& dir)
  {
    const auto path = dir / manifest_name;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write manifest to " + dir.string());
    out << to_json(r).dump(2) << '\n';
    if (!out) throw std::runtime_error("cannot write manifest to " + dir.string());
    return path;
  }

  struct ManifestIssue
  {
    std::string file;
    std::string problem;
  };

  /// Recomputes every recorded checksum against the files next to the manifest.
  inline std::vector<ManifestIssue> verify_manifest(const std::filesystem::path& manifest_path)
  {
    const auto j = nlohmann::json::parse(read_file(manifest_path));
    const auto dir = manifest_path.parent_path();
    std::vector<ManifestIssue> issues;
    for (const auto& o : j.at("outputs"))
    {
      const std::string name = o.at("file");
      const auto p = dir / name;
      if (!std::filesystem::exists(p))
      {
        issues.push_back({name, "missing"});
        continue;
      }
      if (sha256_hex(read_file(p)) != o.at("sha256").get<std::string>()) issues.push_back({name, "checksum mismatch"});
    }
    return issues;
  }

  /// Subcommand and configuration recorded in a manifest.
  inline std::pair<std::string, RunConfig> load_manifest_run(const std::filesystem::path& manifest_path)
  {
    const auto j = nlohmann::json::parse(read_file(manifest_path));
    return {j.at("subcommand").get<std::string>(), parse_config(j.at("config").dump())};
  }
}
