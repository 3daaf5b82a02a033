#include <sstream>

#include <gtest/gtest.h>

#include "json.hpp"

#include "citerate/pipeline.hpp"
#include "support.hpp"

using namespace citerate;
using nlohmann::json;
using testing_support::read_file;
using testing_support::TempDir;
using testing_support::write_file;

namespace {

const char* kSim = R"({"n_patents": 400, "horizon_years": 6, "seed": 5,
  "median_years": {"storage": 2.0, "fuel_cells": 1.0},
  "extra_flag_probability": 0.2, "hazard_ratios": {"storage": 1.5}})";

std::string config_text(const std::string& models) {
  return "input = simulate\n"
         "sim_config = sim.json\n"
         "covariates = storage, fuel_cells, days_after_publication, total_cpc_classes, "
         "shared_subdomain, katz\n" +
         models + "out = out\n";
}

PipelineConfig write_and_load(const TempDir& dir, const std::string& text) {
  write_file(dir / "sim.json", kSim);
  write_file(dir / "run.conf", text);
  return PipelineConfig::load(dir / "run.conf");
}

}  // namespace

TEST(Config, ParsesModelsAndRejectsUnknownKeys) {
  std::istringstream in(
      "input = csv  # fixture\npatents = p.csv\nedges = e.csv\n"
      "covariates = storage, katz\nmodel.m = storage, katz\nmodel.m.ties = breslow\nties = efron\n");
  const PipelineConfig c = PipelineConfig::parse(in, "/data");
  EXPECT_EQ(c.patents, std::filesystem::path("/data/p.csv"));
  ASSERT_EQ(c.models.size(), 1u);
  EXPECT_EQ(c.models[0].covariates, (std::vector<std::string>{"storage", "katz"}));
  EXPECT_EQ(*c.models[0].ties, TieMethod::breslow);

  std::istringstream bad("colour = blue\n");
  try {
    PipelineConfig::parse(bad);
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("line 1"), std::string::npos);
  }
}

TEST(Config, UndeclaredCovariateIsNamed) {
  TempDir dir("cfg");
  const PipelineConfig c =
      write_and_load(dir, "input = simulate\nsim_config = sim.json\ncovariates = storage\nmodel.m = storage, katz\n");
  try {
    c.validate();
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("'katz'"), std::string::npos);
  }
}

TEST(Pipeline, FullRunThenCachedRerun) {
  TempDir dir("pipe");
  const PipelineConfig c = write_and_load(
      dir, config_text("model.subdomain = storage, fuel_cells\n"
                       "model.knowledge = storage, fuel_cells, days_after_publication, total_cpc_classes, "
                       "shared_subdomain, katz\n"));
  std::ostringstream log;
  const RunResult first = run_pipeline(c, log);
  ASSERT_EQ(first.exit_code, 0) << log.str();
  ASSERT_EQ(first.stages.size(), 7u);
  for (const auto& s : first.stages) {
    EXPECT_TRUE(s.ok) << s.stage << ": " << s.error;
    EXPECT_FALSE(s.cache_hit);
  }
  const json manifest = json::parse(read_file(first.manifest));
  EXPECT_EQ(manifest.at("artifacts").size(), 7u);
  EXPECT_EQ(manifest.at("exit_code"), 0);
  for (const char* f : {"report/comparison.csv", "report/fits.csv", "fit/fits.json", "spells/spells.csv"})
    EXPECT_TRUE(std::filesystem::exists(dir / "out" / f)) << f;

  // every log line is a JSON object
  std::istringstream lines(log.str());
  for (std::string line; std::getline(lines, line);) EXPECT_NO_THROW(json::parse(line)) << line;

  std::ostringstream log2;
  const RunResult second = run_pipeline(c, log2);
  EXPECT_EQ(second.exit_code, 0);
  for (const auto& s : second.stages) EXPECT_TRUE(s.cache_hit) << s.stage;
  EXPECT_EQ(read_file(second.manifest), manifest.dump(2) + "\n");
}

TEST(Pipeline, ConfigChangeInvalidatesDownstreamOnly) {
  TempDir dir("pipe2");
  PipelineConfig c = write_and_load(dir, config_text("model.a = storage, katz\n"));
  std::ostringstream log;
  ASSERT_EQ(run_pipeline(c, log).exit_code, 0) << log.str();
  c.ties = TieMethod::breslow;
  const RunResult r = run_pipeline(c, log);
  ASSERT_EQ(r.exit_code, 0);
  for (const auto& s : r.stages) {
    const bool downstream = s.stage == "fit" || s.stage == "report";
    EXPECT_EQ(s.cache_hit, !downstream) << s.stage;
  }
}

TEST(Pipeline, DegenerateCovariateIsDroppedWithWarning) {
  TempDir dir("pipe3");
  // no simulated patent carries the distribution flag
  write_file(dir / "sim.json", kSim);
  write_file(dir / "run.conf",
             "input = simulate\nsim_config = sim.json\ncovariates = storage, distribution\n"
             "model.m = storage, distribution\nout = out\n");
  std::ostringstream log;
  const RunResult r = run_pipeline(PipelineConfig::load(dir / "run.conf"), log);
  EXPECT_EQ(r.exit_code, 0);
  EXPECT_NE(log.str().find("'distribution' is degenerate"), std::string::npos) << log.str();
  const json fits = json::parse(read_file(dir / "out" / "fit" / "fits.json"));
  EXPECT_EQ(fits.at("models")[0].at("fit").at("names"), json::array({"storage"}));
}

TEST(Pipeline, FailureWritesPartialManifest) {
  TempDir dir("pipe5");
  write_file(dir / "p.csv",
             "id,pub_date,filing_date,storage,distribution,production,fuel_cells,total_cpc\n"
             "a,2000-01-01,,1,0,0,0,1\nb,2005-01-01,,0,0,0,1,2\n");
  write_file(dir / "e.csv", "citing_id,cited_id\nb,a\n");
  write_file(dir / "run.conf",
             "input = csv\npatents = p.csv\nedges = e.csv\nhorizon = 2003-01-01\n"
             "covariates = storage\nmodel.m = storage\nout = out\n");
  std::ostringstream log;
  const RunResult r = run_pipeline(PipelineConfig::load(dir / "run.conf"), log);
  EXPECT_NE(r.exit_code, 0);
  ASSERT_FALSE(r.stages.empty());
  EXPECT_FALSE(r.stages.back().ok);
  EXPECT_FALSE(r.stages.back().error.empty());
  const json manifest = json::parse(read_file(r.manifest));
  EXPECT_NE(manifest.at("exit_code"), 0);
  EXPECT_EQ(manifest.at("artifacts").back().at("status"), "failed");
  EXPECT_EQ(manifest.at("artifacts").front().at("status"), "ok");
  EXPECT_LT(manifest.at("artifacts").size(), 7u);

  // the failed stage is not cached: a second run fails the same way
  std::ostringstream log2;
  EXPECT_NE(run_pipeline(PipelineConfig::load(dir / "run.conf"), log2).exit_code, 0);
}

TEST(Pipeline, StopsAtRequestedStage) {
  TempDir dir("pipe4");
  const PipelineConfig c = write_and_load(dir, config_text("model.a = storage\n"));
  std::ostringstream log;
  const RunResult r = run_pipeline(c, log, "katz");
  EXPECT_EQ(r.exit_code, 0);
  ASSERT_EQ(r.stages.size(), 3u);
  EXPECT_EQ(r.stages.back().stage, "katz");
  EXPECT_THROW(run_pipeline(c, log, "nonsense"), std::invalid_argument);
}
