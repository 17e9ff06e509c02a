#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "spadsim/cli.hpp"
#include "spadsim/manifest.hpp"

using namespace spadsim;
namespace fs = std::filesystem;

namespace
{
  fs::path fresh_dir(const std::string& name)
  {
    const auto d = fs::temp_directory_path() / ("spadsim-test-" + name);
    fs::remove_all(d);
    return d;
  }
}

TEST(Sha256, KnownDigests)
{
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Manifest, RecordsConfigSeedsAndChecksums)
{
  const auto dir = fresh_dir("manifest");
  OutputSet out(dir);
  out.write("a.csv", "x,y\n1,2\n");
  RunRecord r;
  r.subcommand = "simulate";
  r.config = parse_config("{}");
  r.point_seeds = {1, 2};
  r.outputs = out.files();
  const auto path = write_manifest(r, dir);
  const auto j = nlohmann::json::parse(read_file(path));
  EXPECT_EQ(j["tool"], "spadsim");
  EXPECT_EQ(j["version"], tool_version);
  EXPECT_EQ(j["master_seed"], 1);
  EXPECT_EQ(j["point_seeds"].size(), 2u);
  EXPECT_EQ(j["outputs"][0]["sha256"], sha256_hex("x,y\n1,2\n"));
  EXPECT_TRUE(verify_manifest(path).empty());
  const auto [name, cfg] = load_manifest_run(path);
  EXPECT_EQ(name, "simulate");
  EXPECT_EQ(cfg, r.config);
}

TEST(Manifest, DetectsTamperingAndMissingFiles)
{
  const auto dir = fresh_dir("tamper");
  OutputSet out(dir);
  out.write("a.csv", "1\n");
  out.write("b.csv", "2\n");
  RunRecord r;
  r.subcommand = "table1";
  r.outputs = out.files();
  const auto path = write_manifest(r, dir);
  std::ofstream(dir / "a.csv") << "3\n";
  fs::remove(dir / "b.csv");
  const auto issues = verify_manifest(path);
  ASSERT_EQ(issues.size(), 2u);
  EXPECT_EQ(issues[0].problem, "checksum mismatch");
  EXPECT_EQ(issues[1].problem, "missing");

  auto j = nlohmann::json::parse(read_file(path));
  std::ofstream(dir / "a.csv") << "1\n";
  std::ofstream(dir / "b.csv") << "2\n";
  EXPECT_TRUE(verify_manifest(path).empty());
  j["outputs"][0]["sha256"] = sha256_hex("tampered");
  std::ofstream(path) << j.dump(2);
  EXPECT_EQ(verify_manifest(path).size(), 1u);
}

TEST(Manifest, UnwritableDirectoryFails)
{
  RunRecord r;
  EXPECT_THROW(write_manifest(r, "/proc/definitely/not/here"), std::runtime_error);
  EXPECT_THROW(OutputSet("/proc/definitely/not/here"), std::runtime_error);
}

TEST(OutputSet, RefusesPathsOutsideItsDirectory)
{
  OutputSet out(fresh_dir("paths"));
  EXPECT_THROW(out.write("../escape.csv", "x"), std::logic_error);
  EXPECT_THROW(out.write("sub/dir.csv", "x"), std::logic_error);
  EXPECT_THROW(out.write("", "x"), std::logic_error);
}
