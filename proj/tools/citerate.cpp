// citerate: patent citation DAG, Katz snapshots and citation-hazard models.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "citerate/ingest.hpp"
#include "citerate/pipeline.hpp"
#include "citerate/sim.hpp"

namespace {

struct Globals {
  std::string config;
  std::string out;
  unsigned threads = 0;
  std::optional<std::uint64_t> seed;
};

citerate::PipelineConfig load_config(const Globals& g) {
  if (g.config.empty()) throw std::invalid_argument("--config is required");
  citerate::PipelineConfig c = citerate::PipelineConfig::load(g.config);
  if (!g.out.empty()) c.out = g.out;
  if (g.threads > 0) c.threads = g.threads;
  if (g.seed) c.seed = g.seed;
  return c;
}

int run_to(const Globals& g, std::string_view stage) {
  const citerate::PipelineConfig c = load_config(g);
  const citerate::RunResult r = citerate::run_pipeline(c, std::cerr, stage);
  for (const auto& s : r.stages)
    if (!s.ok) std::cerr << "stage " << s.stage << " failed: " << s.error << '\n';
  std::cout << r.manifest.string() << '\n';
  return r.exit_code;
}

void print_tally(const citerate::CorpusStore& store) {
  const auto& t = store.tally();
  nlohmann::json j{{"patents", store.patents().size()},   {"edges", store.edges().size()},
                   {"quarantined", store.quarantined().size()}, {"records_read", t.records_read},
                   {"skipped", t.skipped()},              {"self_citations", t.self_citations},
                   {"duplicate_edges", t.duplicate_edges}};
  std::cerr << j.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Temporal patent citation analysis"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "Pipeline config (key = value) or, for simulate, a JSON sim config");
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--threads", g.threads, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--seed", g.seed, "Random seed for simulated inputs");

  auto* ingest = app.add_subcommand("ingest", "Parse a JSONL dump or CSV fixture pair into normalized CSV");
  std::string jsonl;
  std::vector<std::string> csv_pair;
  bool fetch = false;
  ingest->add_option("--jsonl", jsonl, "Lens-style JSONL dump");
  ingest->add_option("--csv", csv_pair, "Patent and edge CSV files")->expected(2);
  ingest->add_flag("--fetch", fetch, "Fetch via the paginated search API (token from LENS_API_TOKEN)");

  auto* simulate = app.add_subcommand("simulate", "Write a simulated corpus with its truth record");

  const std::vector<std::string> stages{"graph", "katz", "spells", "km", "fit", "report"};
  std::vector<CLI::App*> stage_cmds;
  for (const auto& s : stages)
    stage_cmds.push_back(app.add_subcommand(s, "Run the pipeline through the " + s + " stage"));
  auto* run = app.add_subcommand("run", "Run every pipeline stage");

  CLI11_PARSE(app, argc, argv);

  try {
    if (ingest->parsed()) {
      const int sources = !jsonl.empty() + !csv_pair.empty() + fetch;
      if (sources == 0) return run_to(g, "ingest");
      if (sources > 1) throw std::invalid_argument("choose one of --jsonl, --csv, --fetch");
      const std::filesystem::path out = g.out.empty() ? "." : g.out;
      std::filesystem::create_directories(out);
      citerate::CorpusStore store;
      if (!jsonl.empty()) {
        store = citerate::parse_jsonl_file(jsonl);
      } else if (!csv_pair.empty()) {
        store = citerate::parse_csv_edges(csv_pair[0], csv_pair[1]);
      } else {
        const char* token = std::getenv("LENS_API_TOKEN");
        if (!token) throw std::invalid_argument("--fetch needs LENS_API_TOKEN in the environment");
        citerate::ScrollRequest req;
        req.endpoint = "https://api.lens.org/patent/search";
        req.query_body = citerate::default_scroll_query();
        req.token = token;
        const citerate::ScrollResult r = citerate::fetch_scroll(req);
        for (const auto& w : r.warnings) std::cerr << w << '\n';
        std::ofstream dump(out / "fetched.jsonl", std::ios::binary);
        citerate::write_jsonl(r.records, dump);
        dump.close();
        store = citerate::parse_jsonl_file(out / "fetched.jsonl");
        if (!r.complete()) {
          std::cerr << "fetch aborted with HTTP " << *r.failed_status << "; partial records kept\n";
          citerate::write_csv(store, out / "patents.csv", out / "edges.csv");
          return 1;
        }
      }
      citerate::write_csv(store, out / "patents.csv", out / "edges.csv");
      print_tally(store);
      return 0;
    }
    if (simulate->parsed()) {
      if (g.config.empty()) throw std::invalid_argument("simulate needs --config <sim.json>");
      std::ifstream in(g.config);
      if (!in) throw std::invalid_argument("cannot open " + g.config);
      citerate::SimConfig sc = citerate::SimConfig::from_json(nlohmann::json::parse(in));
      if (g.seed) sc.seed = *g.seed;
      const citerate::SimResult r = citerate::simulate(sc);
      for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
      citerate::write_simulation(sc, r, g.out.empty() ? "." : g.out);
      print_tally(r.store);
      return 0;
    }
    for (std::size_t k = 0; k < stages.size(); ++k)
      if (stage_cmds[k]->parsed()) return run_to(g, stages[k]);
    if (run->parsed()) return run_to(g, "report");
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
