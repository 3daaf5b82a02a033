#include <cmath>

#include <gtest/gtest.h>

#include "citerate/events.hpp"
#include "citerate/graph.hpp"
#include "citerate/sim.hpp"
#include "support.hpp"

using namespace citerate;

namespace {

SimConfig small_config() {
  SimConfig c;
  c.n_patents = 500;
  c.horizon_years = 8;
  c.seed = 42;
  c.base_rates = {{Subdomain::storage, 0.4}, {Subdomain::fuel_cells, 0.8}};
  c.extra_flag_probability = 0.2;
  c.flag_effects = {{Subdomain::storage, std::log(2.0)}};
  c.cpc_effect = 0.3;
  return c;
}

}  // namespace

TEST(Simulate, SameSeedSameCorpus) {
  const SimResult a = simulate(small_config());
  const SimResult b = simulate(small_config());
  EXPECT_EQ(a.store.patents(), b.store.patents());
  EXPECT_EQ(a.store.edges(), b.store.edges());
  SimConfig other = small_config();
  other.seed = 43;
  EXPECT_NE(simulate(other).store.edges(), a.store.edges());
}

TEST(Simulate, WrittenFilesAreByteIdentical) {
  testing_support::TempDir one("sim1"), two("sim2");
  write_simulation(small_config(), simulate(small_config()), one.path());
  write_simulation(small_config(), simulate(small_config()), two.path());
  for (const char* f : {"patents.csv", "edges.csv", "truth.json"})
    EXPECT_EQ(testing_support::read_file(one / f), testing_support::read_file(two / f)) << f;
}

TEST(Simulate, CorpusIsAlreadyAcyclicAndBalanced) {
  for (CitationMode mode : {CitationMode::attach, CitationMode::create}) {
    SimConfig c = small_config();
    c.mode = mode;
    c.inherit_probability = 0.5;
    const SimResult r = simulate(c);
    const TemporalDag dag = build_dag(r.store);
    EXPECT_TRUE(dag.removed_edges().empty());
    EXPECT_TRUE(r.store.quarantined().empty());
    EXPECT_EQ(dag.edge_count(), r.events);
    const auto spells = build_spells(dag, r.store, r.horizon);
    EXPECT_TRUE(account(dag, spells).balanced());
  }
}

TEST(Simulate, CreateModeAddsOneLeafPerCitation) {
  SimConfig c = small_config();
  c.mode = CitationMode::create;
  const SimResult r = simulate(c);
  EXPECT_EQ(r.store.patents().size(), c.n_patents + r.events);
}

TEST(Simulate, EventCountMatchesExpectation) {
  // Arrivals uniform on [0, H]; each patent's citations form a Poisson
  // process of rate lambda over its remaining time, mean lambda H / 2 and
  // variance lambda H / 2 + (lambda H)^2 / 12 per patent.
  SimConfig c;
  c.n_patents = 2000;
  c.horizon_years = 10;
  c.seed = 9;
  c.base_rates = {{Subdomain::production, 0.5}};
  const SimResult r = simulate(c);
  const double lh = 0.5 * 10;
  const double mean = c.n_patents * lh / 2;
  const double se = std::sqrt(c.n_patents * (lh / 2 + lh * lh / 12));
  EXPECT_NEAR(static_cast<double>(r.events), mean, 3 * se);
}

TEST(Simulate, TinyRateWarns) {
  SimConfig c;
  c.n_patents = 5;
  c.horizon_years = 1;
  c.base_rates = {{Subdomain::storage, 1e-9}};
  const SimResult r = simulate(c);
  EXPECT_EQ(r.events, 0u);
  EXPECT_FALSE(r.warnings.empty());
}

TEST(SimConfig, ValidationAndJson) {
  SimConfig bad;
  bad.cpc_mean = 0.5;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  const nlohmann::json j = {{"n_patents", 10},
                            {"median_years", {{"storage", 3.0}, {"fuel_cells", 1.5}}},
                            {"hazard_ratios", {{"storage", 2.0}, {"total_cpc_classes", 1.5}}},
                            {"citation_mode", "new"},
                            {"effect_reversal_years", 5}};
  const SimConfig c = SimConfig::from_json(j);
  EXPECT_EQ(c.mode, CitationMode::create);
  EXPECT_NEAR(c.base_rates.at(Subdomain::storage), std::log(2.0) / 3.0, 1e-15);
  EXPECT_NEAR(c.cpc_effect, std::log(1.5), 1e-15);
  EXPECT_NEAR(*c.effect_reversal_day, 5 * kDaysPerYear, 1e-9);
  const SimConfig back = SimConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  EXPECT_THROW(SimConfig::from_json({{"hazard_ratios", {{"bogus", 2.0}}}}), std::invalid_argument);
}

TEST(SimTruth, MediansAndHazardRatios) {
  SimConfig c;
  c.base_rates = {{Subdomain::storage, std::log(2.0) / 3.0}, {Subdomain::distribution, std::log(2.0) / 1.5}};
  c.flag_effects = {{Subdomain::storage, std::log(2.0)}};
  const SimTruth t = known_truth(c);
  EXPECT_NEAR(t.median_years.at("storage"), 3.0, 1e-12);
  EXPECT_NEAR(t.median_years.at("distribution"), 1.5, 1e-12);
  EXPECT_NEAR(t.hazard_ratio.at("storage"), 2.0, 1e-12);
  EXPECT_EQ(t.hazard_ratio.at("total_cpc_classes"), 1.0);
  EXPECT_EQ(t.generator, std::string(kSimGenerator));
}
