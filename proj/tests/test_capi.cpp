// Exercises the shared library through the C surface alone; nothing here may
// link the C++ core.  json.hpp is header-only and is used purely to build
// documents and inspect outputs.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "json.hpp"
#include "ngvi.h"

using nlohmann::json;

namespace {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;

  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("ngvi_capi_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string sub(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(bool(in));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json tiny_doc() {
  return json{
      {"family", {{"kind", "gaussian_full"}, {"dim", 2}}},
      {"model", {{"model", "gaussian"}, {"dim", 2}, {"kappa", 3.0}, {"seed", 1}}},
      {"estimator", "exact"},
      {"schedule",
       {{"step", {{"kind", "constant"}, {"eta", 0.5}}},
        {"batch", {{"kind", "constant"}, {"n", 1}}}}},
      {"iterations", 8},
      {"runs", 2},
      {"base_seed", 3},
      {"metrics", {{"bregman", true}}},
  };
}

struct Config {
  ngvi_config* ptr = nullptr;

  explicit Config(const json& doc) : ptr(ngvi_config_parse(doc.dump().c_str())) {}
  ~Config() { ngvi_config_free(ptr); }
  Config(const Config&) = delete;
  Config& operator=(const Config&) = delete;
};

}  // namespace

TEST_CASE("configs parse, load, and reject bad JSON through the C surface") {
  CHECK(ngvi_config_parse("{nope") == nullptr);
  CHECK(std::string(ngvi_last_error()).find("JSON") != std::string::npos);
  CHECK(ngvi_config_load("/nonexistent/x.json") == nullptr);
  CHECK(ngvi_config_parse(nullptr) == nullptr);

  Config cfg(tiny_doc());
  REQUIRE(cfg.ptr != nullptr);

  TempDir dir("load");
  {
    std::ofstream out(dir.sub("c.json"));
    out << tiny_doc().dump();
  }
  ngvi_config* loaded = ngvi_config_load(dir.sub("c.json").c_str());
  REQUIRE(loaded != nullptr);
  ngvi_config_free(loaded);
}

TEST_CASE("validation reports travel across the boundary") {
  Config good(tiny_doc());
  CHECK(ngvi_config_validate(good.ptr, nullptr, nullptr) == NGVI_OK);

  json doc = tiny_doc();
  doc["schedule"]["step"]["eta"] = 2.5;
  doc["runs"] = 0;
  Config bad(doc);
  char* report = nullptr;
  int count = 0;
  CHECK(ngvi_config_validate(bad.ptr, &report, &count) == NGVI_ERR_CONFIG);
  REQUIRE(report != nullptr);
  CHECK(count == 2);
  const std::string text = report;
  ngvi_string_free(report);
  CHECK(text.find("step.eta must lie in (0,1]") != std::string::npos);
  CHECK(text.find("runs") != std::string::npos);
  CHECK(ngvi_config_validate(nullptr, nullptr, nullptr) == NGVI_ERR_INVALID_ARGUMENT);
}

TEST_CASE("dotted-key overrides edit the document in place") {
  Config cfg(tiny_doc());
  CHECK(ngvi_config_set(cfg.ptr, "schedule.step.eta", "1.5") == NGVI_OK);
  CHECK(ngvi_config_validate(cfg.ptr, nullptr, nullptr) == NGVI_ERR_CONFIG);
  CHECK(ngvi_config_set(cfg.ptr, "schedule.step.eta", "0.25") == NGVI_OK);
  CHECK(ngvi_config_validate(cfg.ptr, nullptr, nullptr) == NGVI_OK);

  CHECK(ngvi_config_set(cfg.ptr, "schedule.step.eta", "{broken") == NGVI_ERR_PARSE);
  CHECK(ngvi_config_set(cfg.ptr, "a..b", "1") == NGVI_ERR_SCHEMA);
  CHECK(ngvi_config_set(nullptr, "x", "1") == NGVI_ERR_INVALID_ARGUMENT);
}

TEST_CASE("runs write deterministic outputs and aggregate to the fixed header") {
  TempDir dir("run");
  Config cfg(tiny_doc());
  int failures = -1;
  REQUIRE(ngvi_run(cfg.ptr, dir.sub("a").c_str(), 1, &failures) == NGVI_OK);
  CHECK(failures == 0);
  REQUIRE(ngvi_run(cfg.ptr, dir.sub("b").c_str(), 2, nullptr) == NGVI_OK);
  const std::string csv = slurp(dir.sub("a") + "/results.csv");
  CHECK(csv == slurp(dir.sub("b") + "/results.csv"));
  CHECK(csv.rfind("run,iter,eta,batch,budget,metric,value\n", 0) == 0);

  const json man = json::parse(slurp(dir.sub("a") + "/manifest.json"));
  CHECK(man["failures"] == 0);
  CHECK(man["runs"] == 2);

  SUBCASE("aggregation emits x,center,lo,hi for both statistics") {
    REQUIRE(ngvi_aggregate(dir.sub("a").c_str(), nullptr, "mean", "budget",
                           dir.sub("agg.csv").c_str()) == NGVI_OK);
    const std::string agg = slurp(dir.sub("agg.csv"));
    CHECK(agg.rfind("x,center,lo,hi\n", 0) == 0);
    REQUIRE(ngvi_aggregate(dir.sub("a").c_str(), "bregman", "median-iqr", "iteration",
                           dir.sub("agg2.csv").c_str()) == NGVI_OK);
    CHECK(slurp(dir.sub("agg2.csv")).rfind("x,center,lo,hi\n", 0) == 0);
  }

  SUBCASE("bad aggregate arguments are rejected") {
    CHECK(ngvi_aggregate(dir.sub("a").c_str(), nullptr, "average", "iteration",
                         dir.sub("x.csv").c_str()) == NGVI_ERR_INVALID_ARGUMENT);
    CHECK(ngvi_aggregate(dir.sub("a").c_str(), nullptr, "mean", "time",
                         dir.sub("x.csv").c_str()) == NGVI_ERR_INVALID_ARGUMENT);
    CHECK(ngvi_aggregate(dir.sub("missing").c_str(), nullptr, "mean", "iteration",
                         dir.sub("x.csv").c_str()) == NGVI_ERR_IO);
    CHECK(ngvi_aggregate(dir.sub("a").c_str(), "speed", "mean", "iteration",
                         dir.sub("x.csv").c_str()) == NGVI_ERR_INVALID_ARGUMENT);
  }

  SUBCASE("an invalid config refuses to run") {
    Config bad(tiny_doc());
    CHECK(ngvi_config_set(bad.ptr, "iterations", "0") == NGVI_OK);
    CHECK(ngvi_run(bad.ptr, dir.sub("c").c_str(), 1, nullptr) == NGVI_ERR_CONFIG);
    CHECK(std::string(ngvi_last_error()).find("iterations") != std::string::npos);
  }

  SUBCASE("a missing output directory is a config error") {
    CHECK(ngvi_run(cfg.ptr, nullptr, 1, nullptr) == NGVI_ERR_CONFIG);
    Config with_output(tiny_doc());
    CHECK(ngvi_config_set(with_output.ptr, "output",
                          json(dir.sub("from_key")).dump().c_str()) == NGVI_OK);
    CHECK(ngvi_run(with_output.ptr, nullptr, 1, nullptr) == NGVI_OK);
    CHECK(fs::exists(dir.sub("from_key") + "/results.csv"));
  }
}

TEST_CASE("sweeps expand a grid file into child directories") {
  TempDir dir("sweep");
  {
    std::ofstream out(dir.sub("grid.json"));
    out << json{{"runs", json::array({1, 2})}}.dump();
  }
  Config cfg(tiny_doc());
  int failures = -1;
  REQUIRE(ngvi_sweep(cfg.ptr, dir.sub("grid.json").c_str(), dir.sub("out").c_str(), 1,
                     &failures) == NGVI_OK);
  CHECK(failures == 0);
  CHECK(fs::exists(dir.sub("out") + "/runs=1/results.csv"));
  CHECK(fs::exists(dir.sub("out") + "/runs=2/results.csv"));
  const json index = json::parse(slurp(dir.sub("out") + "/sweep.json"));
  REQUIRE(index["entries"].size() == 2);
  CHECK(index["entries"][0]["name"] == "runs=1");
  CHECK(index["entries"][1]["runs"] == 2);

  SUBCASE("a grid producing an invalid child aborts before running") {
    {
      std::ofstream out(dir.sub("bad_grid.json"));
      out << json{{"schedule.step.eta", json::array({0.5, 7.0})}}.dump();
    }
    CHECK(ngvi_sweep(cfg.ptr, dir.sub("bad_grid.json").c_str(), dir.sub("out2").c_str(), 1,
                     nullptr) == NGVI_ERR_CONFIG);
    CHECK(!fs::exists(dir.sub("out2") + "/sweep.json"));
  }

  SUBCASE("grid file problems map to io and parse codes") {
    CHECK(ngvi_sweep(cfg.ptr, dir.sub("absent.json").c_str(), dir.sub("o").c_str(), 1,
                     nullptr) == NGVI_ERR_IO);
    {
      std::ofstream out(dir.sub("broken.json"));
      out << "{";
    }
    CHECK(ngvi_sweep(cfg.ptr, dir.sub("broken.json").c_str(), dir.sub("o").c_str(), 1,
                     nullptr) == NGVI_ERR_PARSE);
  }
}

TEST_CASE("version and error plumbing") {
  CHECK(std::string(ngvi_version()) == "0.1.0");
  Config cfg(tiny_doc());
  CHECK(ngvi_config_validate(cfg.ptr, nullptr, nullptr) == NGVI_OK);
  CHECK(std::string(ngvi_last_error()).empty());
}
