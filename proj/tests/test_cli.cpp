#include <doctest.h>

#include <filesystem>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "plantrec/app.hpp"
#include "plantrec/dataset.hpp"
#include "plantrec/io.hpp"

using namespace plantrec;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "plantrec");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream err;
  auto* old = std::cerr.rdbuf(err.rdbuf());
  const int code = run_cli(static_cast<int>(argv.size()), argv.data());
  std::cerr.rdbuf(old);
  return {code, err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("plantrec_cli_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("usage and errors") {
  CHECK(cli({}).code == 2);
  CHECK(cli({"frobnicate"}).code == 2);
  CHECK(cli({"generate"}).code == 2);
  CHECK(cli({"--version"}).code == 0);

  const Run missing = cli({"reconstruct", "--lstring", "/nonexistent/x.lstr", "--out", "/tmp/x.obj"});
  CHECK(missing.code == 1);
  CHECK(missing.err.rfind("error: ", 0) == 0);
  CHECK(std::count(missing.err.begin(), missing.err.end(), '\n') == 1);
}

TEST_CASE("generate, tasks and evaluation") {
  const fs::path d = scratch("gen");
  REQUIRE(cli({"generate", "--out", d.string(), "--seed", "1", "--per-structure", "10", "--points", "512"}).code ==
          0);
  const Dataset ds = load_dataset(d);
  CHECK(ds.records.size() == 330);
  const auto manifest = nlohmann::json::parse(read_text(d / "run.json"));
  CHECK(manifest["command"] == "generate");
  CHECK(manifest["config"].get<std::string>().find("generate.per-structure=10") != std::string::npos);

  const RecordInfo& r = ds.records[17];
  const std::string lstr = (d / r.lstring).string();
  const fs::path out = scratch("out");
  fs::create_directories(out);
  REQUIRE(cli({"reconstruct", "--lstring", lstr, "--out", (out / "m.obj").string()}).code == 0);
  CHECK(fs::exists(out / "m.obj.manifest.json"));
  REQUIRE(cli({"skeleton", "--lstring", lstr, "--out", (out / "s.txt").string()}).code == 0);
  REQUIRE(cli({"segment", "--lstring", lstr, "--cloud", (d / r.clean).string(), "--out",
               (out / "seg.ply").string()})
              .code == 0);
  CHECK(read_ply(out / "seg.ply").labeled());

  REQUIRE(cli({"eval", "recon", "--pred", (out / "m.obj").string(), "--gt", (out / "m.obj").string(), "--views",
               "20", "--resolution", "64", "--samples", "2000", "--out", (out / "recon.csv").string()})
              .code == 0);
  std::istringstream csv(read_text(out / "recon.csv"));
  std::string header, row;
  std::getline(csv, header);
  std::getline(csv, row);
  std::vector<std::string> fields;
  for (std::istringstream rs(row); std::getline(rs, row, ',');) fields.push_back(row);
  REQUIRE(fields.size() == 5);
  CHECK(fields[3] == "0");
  CHECK(fields[4] == "1");

  CHECK(cli({"eval", "skeleton", "--pred", (out / "s.txt").string(), "--gt", (out / "s.txt").string()}).code == 0);
  CHECK(cli({"eval", "segment", "--pred", (out / "seg.ply").string(), "--gt", (d / r.clean).string()}).code == 0);
  fs::remove_all(d);
  fs::remove_all(out);
}

TEST_CASE("config file with flag overrides") {
  const fs::path d = scratch("cfg");
  fs::create_directories(d);
  write_text(d / "run.toml", "seed = 3\n[generate]\nstructures = 5\nper-structure = 2\npoints = 128\n");
  REQUIRE(cli({"--config", (d / "run.toml").string(), "generate", "--out", (d / "data").string(), "--structures",
               "2"})
              .code == 0);
  const Dataset ds = load_dataset(d / "data");
  CHECK(ds.records.size() == 4);
  CHECK(ds.config.seed == 3);
  fs::remove_all(d);
}
