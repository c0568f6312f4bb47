#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "icefuse/cli/app.hpp"
#include "icefuse/cli/config.hpp"
#include "icefuse/common/error.hpp"
#include "icefuse/gridstore/sicg.hpp"

using namespace icefuse;
using namespace icefuse::cli;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) : path(fs::temp_directory_path() / ("icefuse_cli_" + tag)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result invoke(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("config: empty file gives the defaults") {
  TempDir tmp("empty");
  std::ofstream(tmp.path / "empty.json") << "{}";
  const auto cfg = RunConfig::load(tmp.path / "empty.json", {});
  const auto t = cfg.train();
  CHECK(t.epochs == 50);
  CHECK(t.adam.learning_rate == 1e-4);
  CHECK(t.batch_size == 4);
  CHECK(cfg.n_inferences() == 30);
  CHECK(cfg.estimator() == bayes::Estimator::BBB);
  CHECK(cfg.document() == RunConfig().document());
}

TEST_CASE("config: --set overrides one value only") {
  const auto cfg = RunConfig::load(std::nullopt, {"train.epochs=2"});
  CHECK(cfg.train().epochs == 2);
  auto expected = RunConfig().document();
  expected["train"]["epochs"] = 2;
  CHECK(cfg.document() == expected);

  const auto s = RunConfig::load(std::nullopt, {"bayes.estimator=mc_dropout", "train.lr=0.001"});
  CHECK(s.estimator() == bayes::Estimator::MCDropout);
  CHECK(s.train().adam.learning_rate == 0.001);
}

TEST_CASE("config: overrides win over the file") {
  TempDir tmp("precedence");
  std::ofstream(tmp.path / "c.json") << R"({"train": {"epochs": 7, "batch_size": 2}})";
  const auto cfg = RunConfig::load(tmp.path / "c.json", {"train.epochs=3"});
  CHECK(cfg.train().epochs == 3);
  CHECK(cfg.train().batch_size == 2);
}

TEST_CASE("config: errors name the key path") {
  auto message = [](auto&& f) {
    try {
      f();
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  CHECK(message([] { RunConfig::load(std::nullopt, {"train.epochz=3"}); }).find("train.epochz") != std::string::npos);
  CHECK(message([] { RunConfig::load(std::nullopt, {"train.epochs=\"many\""}); }).find("train.epochs") !=
        std::string::npos);
  CHECK(message([] { RunConfig::load(std::nullopt, {"model.heads=-1"}); }).find("model.heads") != std::string::npos);
  CHECK(message([] { RunConfig::load(fs::path("/nonexistent/c.json"), {}); }).find("c.json") != std::string::npos);
  CHECK(message([] { RunConfig::load(std::nullopt, {"model.hidden=30"}); }) != "no error");
  CHECK(message([] { RunConfig::load(std::nullopt, {"bayes.estimator=gibbs"}); }) != "no error");

  TempDir tmp("badjson");
  std::ofstream(tmp.path / "bad.json") << "{ not json";
  CHECK(message([&] { RunConfig::load(tmp.path / "bad.json", {}); }) != "no error");

  const auto r = invoke({"--set", "train.epochz=3", "--runs-dir", tmp.path.string(), "gen"});
  CHECK(r.code == kConfigError);
  CHECK(r.err.find("train.epochz") != std::string::npos);
}

TEST_CASE("cli: argument errors exit 1, help exits 0") {
  CHECK(invoke({}).code == kConfigError);
  CHECK(invoke({"frobnicate"}).code == kConfigError);
  CHECK(invoke({"fuse"}).code == kConfigError);
  CHECK(invoke({"--help"}).code == kOk);
}

TEST_CASE("cli: gradcheck on the tiny model") {
  const auto r = invoke({"gradcheck"});
  INFO(r.out);
  CHECK(r.code == kOk);
  const auto pos = r.out.find("max rel error ");
  REQUIRE(pos != std::string::npos);
  CHECK(std::stod(r.out.substr(pos + 14)) < 1e-4);
}

TEST_CASE("cli: fuse layers and extent mismatch") {
  TempDir tmp("fuse");
  grid::Grid lo(4, 4, 30.0), lo_s(4, 4, 5.0), hi(4, 4, 90.0), hi_s(4, 4, 2.0), big(5, 4, 1.0);
  hi.set_nodata(0);
  hi_s.set_nodata(0);
  grid::write_grid(lo, tmp.path / "lo.sicg");
  grid::write_grid(lo_s, tmp.path / "lo_s.sicg");
  grid::write_grid(hi, tmp.path / "hi.sicg");
  grid::write_grid(hi_s, tmp.path / "hi_s.sicg");
  grid::write_grid(big, tmp.path / "big.sicg");
  const auto p = [&](const char* f) { return (tmp.path / f).string(); };

  auto r = invoke({"--runs-dir", p("runs"), "fuse", "--layer", "amsr2:" + p("lo.sicg") + ":" + p("lo_s.sicg"),
                   "--layer", "sentinel1:" + p("hi.sicg") + ":" + p("hi_s.sicg")});
  REQUIRE(r.code == kOk);
  const auto fused = grid::read_grid(tmp.path / "runs/default/grids/fused/fused_sic.sicg");
  CHECK(fused[0] == 30.0);
  CHECK(fused[1] == 90.0);
  CHECK(fs::exists(tmp.path / "runs/default/config.json"));

  r = invoke({"--runs-dir", p("runs"), "fuse", "--layer", "amsr2:" + p("lo.sicg") + ":" + p("lo_s.sicg"), "--layer",
              "rcm:" + p("big.sicg") + ":" + p("big.sicg")});
  CHECK(r.code == kDataError);
  r = invoke({"--runs-dir", p("runs"), "fuse", "--layer", "amsr2:" + p("missing.sicg") + ":" + p("lo_s.sicg")});
  CHECK(r.code == kDataError);
  r = invoke({"--runs-dir", p("runs"), "fuse", "--layer", "no-colons"});
  CHECK(r.code == kConfigError);

  // Reordered by fusion.order: sentinel1 ends on top even when listed first.
  r = invoke({"--runs-dir", p("runs"), "fuse", "--config-order", "--layer", "sentinel1:" + p("hi.sicg") + ":" +
              p("hi_s.sicg"), "--layer", "amsr2:" + p("lo.sicg") + ":" + p("lo_s.sicg")});
  REQUIRE(r.code == kOk);
  CHECK(grid::read_grid(tmp.path / "runs/default/grids/fused/fused_sic.sicg")[1] == 90.0);
}

TEST_CASE("cli: gen -> train -> infer -> eval smoke run is deterministic") {
  TempDir tmp("pipeline");
  const std::vector<std::string> common{"--runs-dir", tmp.path.string(), "--set",     "model.chip=16",
                                        "--set",      "model.window=2",  "--set",     "model.hidden=8",
                                        "--set",      "model.heads=2",   "--set",     "model.stages=2",
                                        "--set",      "synth.params.size=32", "--set", "synth.train_scenes=2",
                                        "--set",      "synth.val_scenes=1", "--set",  "synth.test_scenes=1",
                                        "--set",      "train.epochs=2",  "--set",     "train.chip_overlap=0",
                                        "--set",      "bayes.n_inferences=3"};
  auto cmd = [&](const std::string& name, std::vector<std::string> extra) {
    std::vector<std::string> args = common;
    args.insert(args.end(), {"--name", name});
    args.insert(args.end(), extra.begin(), extra.end());
    return invoke(args);
  };
  for (const std::string name : {"a", "b"}) {
    for (const auto& step : std::vector<std::vector<std::string>>{
             {"gen"}, {"train"}, {"infer"}, {"eval"}, {"infer", "--estimator", "epoch_ensemble", "--burn-in", "1"},
             {"eval", "--estimator", "epoch_ensemble"}}) {
      const auto r = cmd(name, step);
      INFO(step.front(), ": ", r.err);
      REQUIRE(r.code == kOk);
    }
  }
  const auto a = tmp.path / "a";
  CHECK(fs::exists(a / "config.json"));
  CHECK(fs::exists(a / "checkpoints/epoch_2.sicw"));
  CHECK(fs::exists(a / "checkpoints/best.sicw"));
  CHECK(fs::exists(a / "metrics/loss_log.csv"));
  CHECK(fs::exists(a / "metrics/bbb/report.json"));
  CHECK(fs::exists(a / "metrics/bbb/ece.csv"));
  CHECK(fs::exists(a / "metrics/epoch_ensemble/report.json"));
  CHECK(slurp(a / "config.json").find("\"epochs\": 2") != std::string::npos);

  for (const auto* f : {"checkpoints/best.sicw", "grids/pred/bbb/scene_0003/mean.sicg",
                        "grids/pred/bbb/scene_0003/std.sicg", "metrics/bbb/report.json", "metrics/bbb/ece.csv"}) {
    INFO(f);
    CHECK(slurp(a / f) == slurp(tmp.path / "b" / f));
  }

  // Deterministic inference needs no variational weights; bbb rejects a plain checkpoint.
  CHECK(cmd("a", {"infer", "--estimator", "deterministic"}).code == kOk);
  CHECK(cmd("a", {"infer", "--estimator", "mc_dropout"}).code == kOk);
  CHECK(cmd("a", {"infer", "--estimator", "epoch_ensemble", "--burn-in", "9"}).code == kConfigError);
  CHECK(cmd("missing", {"train"}).code == kDataError);
}
