#include "citerate/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "citerate/centrality.hpp"
#include "citerate/digest.hpp"
#include "citerate/events.hpp"
#include "citerate/graph.hpp"
#include "citerate/ingest.hpp"
#include "citerate/sim.hpp"

namespace citerate {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Bump when a stage's output format changes, so stale caches miss.
constexpr std::string_view kCacheVersion = "1";

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    const auto comma = s.find(',', pos);
    auto item = trim(s.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos));
    if (!item.empty()) out.push_back(std::move(item));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "yes" || v == "1") return true;
  if (v == "false" || v == "no" || v == "0") return false;
  throw std::invalid_argument(key + ": expected true or false, got '" + v + "'");
}

std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (const auto& x : v) s += (s.empty() ? "" : ",") + x;
  return s;
}

std::string input_name(InputMode m) {
  switch (m) {
    case InputMode::csv: return "csv";
    case InputMode::jsonl: return "jsonl";
    case InputMode::simulate: return "simulate";
    case InputMode::fetch: return "fetch";
  }
  return "csv";
}

std::string now_ms() {
  const auto now = std::chrono::system_clock::now();
  return std::to_string(std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count());
}

void log_line(std::ostream& log, json j) {
  j["ts_ms"] = std::stoll(now_ms());
  log << j.dump() << '\n';
  log.flush();
}

std::string combined_digest(const std::vector<ArtifactFile>& files) {
  Sha256 h;
  for (const auto& f : files) h.update(f.path + " " + f.sha256 + "\n");
  return h.hex_digest();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

PipelineConfig PipelineConfig::parse(std::istream& in, const fs::path& base_dir) {
  PipelineConfig c;
  bool covariates_given = false;
  auto resolve = [&](const std::string& v) {
    fs::path p(v);
    return p.is_absolute() ? p : base_dir / p;
  };
  auto model = [&](const std::string& name) -> ModelDef& {
    for (auto& m : c.models)
      if (m.name == name) return m;
    c.models.push_back({name, {}, {}, std::nullopt});
    return c.models.back();
  };

  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    auto fail = [&](const std::string& what) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + " (" + key + "): " + what);
    };
    if (key == "input") {
      if (value == "csv") c.input = InputMode::csv;
      else if (value == "jsonl") c.input = InputMode::jsonl;
      else if (value == "simulate") c.input = InputMode::simulate;
      else if (value == "fetch") c.input = InputMode::fetch;
      else fail("expected csv, jsonl, simulate or fetch");
    } else if (key == "patents") {
      c.patents = resolve(value);
    } else if (key == "edges") {
      c.edges = resolve(value);
    } else if (key == "jsonl") {
      c.jsonl = resolve(value);
    } else if (key == "sim_config") {
      c.sim_config = resolve(value);
    } else if (key == "endpoint") {
      c.endpoint = value;
    } else if (key == "horizon") {
      c.horizon = parse_iso_date(value);
      if (!c.horizon) fail("not a date");
    } else if (key == "seed") {
      c.seed = std::stoull(value);
    } else if (key == "threads") {
      c.threads = static_cast<unsigned>(std::stoul(value));
      if (c.threads == 0) fail("must be at least 1");
    } else if (key == "covariates") {
      c.covariates = split_list(value);
      covariates_given = true;
    } else if (key == "standardize_dummies") {
      c.standardize_dummies = parse_bool(value, key);
    } else if (key == "log_days") {
      c.log_days = parse_bool(value, key);
    } else if (key == "ties") {
      auto t = tie_method_from_name(value);
      if (!t) fail("expected efron or breslow");
      c.ties = *t;
    } else if (key == "time_scale") {
      if (value == "calendar") c.time_scale = TimeScale::calendar;
      else if (value == "gap") c.time_scale = TimeScale::gap;
      else fail("expected calendar or gap");
    } else if (key == "robust") {
      c.robust = parse_bool(value, key);
    } else if (key == "katz_alpha") {
      if (value == "per_snapshot") c.global_alpha = false;
      else if (value == "global") c.global_alpha = true;
      else fail("expected per_snapshot or global");
    } else if (key == "km_group") {
      c.km_group = value;
    } else if (key == "km_pooling") {
      if (value == "all") c.km_pooling = KmPooling::all_spells;
      else if (value == "first") c.km_pooling = KmPooling::first_spell;
      else fail("expected all or first");
    } else if (key == "schoenfeld_transform") {
      auto t = time_transform_from_name(value);
      if (!t) fail("expected km, rank or identity");
      c.schoenfeld_transform = *t;
    } else if (key == "lr_nesting") {
      if (value == "strict") c.lr_nesting = Nesting::strict;
      else if (value == "quasi") c.lr_nesting = Nesting::quasi;
      else fail("expected strict or quasi");
    } else if (key == "out") {
      c.out = resolve(value);
    } else if (key == "cache") {
      c.cache = resolve(value);
    } else if (key.rfind("model.", 0) == 0) {
      std::string rest = key.substr(6);
      const auto dot = rest.find('.');
      const std::string name = rest.substr(0, dot);
      if (name.empty()) fail("empty model name");
      ModelDef& m = model(name);
      if (dot == std::string::npos) {
        m.covariates = split_list(value);
      } else {
        const std::string field = rest.substr(dot + 1);
        if (field == "baseline") {
          m.baseline = value;
        } else if (field == "ties") {
          m.ties = tie_method_from_name(value);
          if (!m.ties) fail("expected efron or breslow");
        } else {
          fail("unknown model field '" + field + "'");
        }
      }
    } else {
      fail("unknown key");
    }
  }
  if (!covariates_given)
    for (const auto& d : CovariateSpec::all().covariates) c.covariates.push_back(d.name);
  return c;
}

PipelineConfig PipelineConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config " + path.string());
  return parse(in, path.parent_path().empty() ? fs::path(".") : path.parent_path());
}

void PipelineConfig::validate() const {
  auto need = [](const fs::path& p, const char* key) {
    if (p.empty()) throw std::invalid_argument(std::string("config: '") + key + "' is required for this input");
    if (!fs::exists(p)) throw std::invalid_argument(std::string("config: ") + key + " '" + p.string() + "' does not exist");
  };
  switch (input) {
    case InputMode::csv: need(patents, "patents"); need(edges, "edges"); break;
    case InputMode::jsonl: need(jsonl, "jsonl"); break;
    case InputMode::simulate: need(sim_config, "sim_config"); break;
    case InputMode::fetch:
      if (!std::getenv("LENS_API_TOKEN"))
        throw std::invalid_argument("config: input = fetch needs the LENS_API_TOKEN environment variable");
      break;
  }
  CovariateSpec::from_names(covariates);  // throws on unknown or repeated names
  if (models.empty()) throw std::invalid_argument("config: no model defined (model.<name> = covariates)");
  for (const auto& m : models) {
    if (m.covariates.empty()) throw std::invalid_argument("model '" + m.name + "' has no covariates");
    for (const auto& cv : m.covariates) {
      const bool declared = std::any_of(covariates.begin(), covariates.end(), [&](const std::string& d) {
        return d == cv || (covariate_kind_from_name(d) && covariate_kind_from_name(cv) &&
                           *covariate_kind_from_name(d) == *covariate_kind_from_name(cv));
      });
      if (!declared)
        throw std::invalid_argument("model '" + m.name + "' uses covariate '" + cv +
                                    "' which is not declared in covariates");
    }
    if (!m.baseline.empty()) {
      if (!subdomain_from_name(m.baseline))
        throw std::invalid_argument("model '" + m.name + "': baseline '" + m.baseline + "' is not a subdomain");
      if (std::find(m.covariates.begin(), m.covariates.end(), m.baseline) != m.covariates.end())
        throw std::invalid_argument("model '" + m.name + "': baseline '" + m.baseline +
                                    "' must be left out of the covariates");
    }
  }
  if (km_group != "subdomain" && !subdomain_from_name(km_group))
    throw std::invalid_argument("config: km_group must be 'subdomain' or a subdomain name");
}

namespace {

/// State passed between stages.
struct Products {
  std::optional<CorpusStore> store;
  Day horizon = 0;
  std::optional<TemporalDag> dag;
  std::vector<KatzSnapshot> katz;
  std::optional<SpellMatrix> spells;
  std::vector<KmCurve> km;
  std::vector<NamedFit> fits;
  std::vector<std::pair<std::string, std::string>> input_digests;
};

struct StageContext {
  const PipelineConfig& config;
  fs::path dir;                // stage output directory
  std::string key;             // cache key
  std::vector<fs::path> files; // produced files, relative to config.out
};

class Runner {
 public:
  Runner(const PipelineConfig& c, std::ostream& log) : c_(c), log_(log) {}

  RunResult run(std::string_view last_stage) {
    RunResult result;
    const auto last = std::find(kStages.begin(), kStages.end(), last_stage);
    if (last == kStages.end()) throw std::invalid_argument("unknown stage '" + std::string(last_stage) + "'");
    fs::create_directories(c_.out);
    fs::create_directories(c_.cache_dir());
    std::string upstream = sha256_hex(config_text());
    for (auto it = kStages.begin(); it <= last; ++it) {
      StageRecord rec = run_stage(*it, upstream);
      result.stages.push_back(rec);
      if (!rec.ok) {
        result.exit_code = 1;
        break;
      }
      upstream = rec.digest;
    }
    result.manifest = c_.out / "manifest.json";
    write_manifest(result);
    return result;
  }

 private:
  std::string config_text() const {
    // Only settings that change artifacts; threads and paths of outputs do not.
    std::ostringstream s;
    s << "version=" << kCacheVersion << "\ninput=" << input_name(c_.input) << "\nseed="
      << (c_.seed ? std::to_string(*c_.seed) : "") << "\nhorizon=" << (c_.horizon ? format_iso_date(*c_.horizon) : "")
      << "\n";
    return s.str();
  }

  std::string stage_settings(std::string_view stage) const {
    std::ostringstream s;
    s << stage << "\n";
    if (stage == "katz") s << "global_alpha=" << c_.global_alpha << "\n";
    if (stage == "spells")
      s << "covariates=" << join(c_.covariates) << "\nstandardize_dummies=" << c_.standardize_dummies
        << "\nlog_days=" << c_.log_days << "\n";
    if (stage == "km") s << "group=" << c_.km_group << "\npooling=" << static_cast<int>(c_.km_pooling) << "\n";
    if (stage == "fit") {
      s << "ties=" << tie_method_name(c_.ties) << "\ntime_scale=" << static_cast<int>(c_.time_scale)
        << "\nrobust=" << c_.robust << "\nschoenfeld=" << static_cast<int>(c_.schoenfeld_transform)
        << "\nnesting=" << static_cast<int>(c_.lr_nesting) << "\n";
      for (const auto& m : c_.models)
        s << "model " << m.name << "=" << join(m.covariates) << "|" << m.baseline << "|"
          << (m.ties ? tie_method_name(*m.ties) : "") << "\n";
    }
    return s.str();
  }

  std::string input_fingerprint() {
    std::string fp;
    auto add = [&](const std::string& name, const fs::path& p) {
      const std::string d = sha256_file(p);
      p_.input_digests.emplace_back(name, d);
      fp += name + "=" + d + "\n";
    };
    switch (c_.input) {
      case InputMode::csv: add("patents", c_.patents); add("edges", c_.edges); break;
      case InputMode::jsonl: add("jsonl", c_.jsonl); break;
      case InputMode::simulate: add("sim_config", c_.sim_config); break;
      case InputMode::fetch: fp += "fetch " + c_.endpoint + " " + now_ms() + "\n"; break;
    }
    return fp;
  }

  bool cache_valid(const fs::path& record, const std::string& key, std::vector<ArtifactFile>& files) {
    if (!fs::exists(record)) return false;
    try {
      const json j = json::parse(read_text(record));
      if (j.at("key").get<std::string>() != key) return false;
      std::vector<ArtifactFile> stored;
      for (const auto& f : j.at("files")) {
        const fs::path p = c_.out / f.at("path").get<std::string>();
        if (!fs::exists(p) || sha256_file(p) != f.at("sha256").get<std::string>()) return false;
        stored.push_back({f.at("path").get<std::string>(), f.at("sha256").get<std::string>(),
                          f.at("bytes").get<std::uintmax_t>()});
      }
      files = std::move(stored);
      return true;
    } catch (const std::exception&) {
      return false;
    }
  }

  StageRecord run_stage(std::string_view stage, const std::string& upstream) {
    StageRecord rec;
    rec.stage = std::string(stage);
    const auto t0 = std::chrono::steady_clock::now();
    const fs::path dir = c_.out / stage;
    const fs::path record = c_.cache_dir() / (std::string(stage) + ".json");
    try {
      std::string key_text = stage_settings(stage) + "upstream=" + upstream + "\n";
      if (stage == "ingest") key_text += input_fingerprint();
      const std::string key = sha256_hex(key_text);
      rec.cache_hit = cache_valid(record, key, rec.files);
      fs::create_directories(dir);
      std::vector<fs::path> produced = execute(stage, dir, rec.cache_hit, rec.records);
      if (!rec.cache_hit) {
        std::vector<fs::path> rel;
        for (const auto& p : produced) rel.push_back(fs::relative(p, c_.out));
        rec.files = describe_files(c_.out, rel);
        json files = json::array();
        for (const auto& f : rec.files) files.push_back({{"path", f.path}, {"sha256", f.sha256}, {"bytes", f.bytes}});
        write_text(record, json{{"key", key}, {"files", files}}.dump(2) + "\n");
      }
      rec.digest = combined_digest(rec.files);
      rec.ok = true;
    } catch (const std::exception& e) {
      rec.ok = false;
      rec.error = e.what();
      std::error_code ec;
      fs::remove(record, ec);
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    json line{{"stage", rec.stage},
              {"status", rec.ok ? (rec.cache_hit ? "cached" : "ok") : "failed"},
              {"duration_s", rec.seconds},
              {"records", rec.records}};
    if (!rec.ok) line["error"] = rec.error;
    for (const auto& w : warnings_) line["warnings"].push_back(w);
    warnings_.clear();
    log_line(log_, line);
    return rec;
  }

  std::vector<fs::path> execute(std::string_view stage, const fs::path& dir, bool hit, std::size_t& records) {
    if (stage == "ingest") return ingest(dir, hit, records);
    if (stage == "graph") return graph(dir, hit, records);
    if (stage == "katz") return katz(dir, hit, records);
    if (stage == "spells") return spells(dir, hit, records);
    if (stage == "km") return km(dir, hit, records);
    if (stage == "fit") return fit(dir, hit, records);
    return report(dir, hit, records);
  }

  std::vector<fs::path> ingest(const fs::path& dir, bool hit, std::size_t& records) {
    const fs::path pf = dir / "patents.csv", ef = dir / "edges.csv", meta = dir / "meta.json";
    if (!hit) {
      CorpusStore store;
      std::optional<Day> horizon = c_.horizon;
      json extra;
      switch (c_.input) {
        case InputMode::csv: store = parse_csv_edges(c_.patents, c_.edges); break;
        case InputMode::jsonl: store = parse_jsonl_file(c_.jsonl); break;
        case InputMode::simulate: {
          SimConfig sc = SimConfig::from_json(json::parse(read_text(c_.sim_config)));
          if (c_.seed) sc.seed = *c_.seed;
          SimResult r = simulate(sc);
          for (auto& w : r.warnings) warnings_.push_back(w);
          if (!horizon) horizon = r.horizon;
          extra["truth"] = known_truth(sc).to_json();
          store = std::move(r.store);
          break;
        }
        case InputMode::fetch: {
          ScrollRequest req;
          req.endpoint = c_.endpoint;
          req.query_body = default_scroll_query();
          req.token = std::getenv("LENS_API_TOKEN");
          ScrollResult r = fetch_scroll(req);
          for (auto& w : r.warnings) warnings_.push_back(w);
          if (!r.complete())
            warnings_.push_back("fetch aborted with HTTP " + std::to_string(*r.failed_status) +
                                "; continuing with partial records");
          std::ostringstream buf;
          write_jsonl(r.records, buf);
          std::istringstream in(buf.str());
          store = parse_jsonl(in, c_.endpoint);
          break;
        }
      }
      if (store.empty()) throw std::runtime_error("ingest produced no patents; check the input files");
      if (!horizon) {
        Day last = store.patents().front().publication;
        for (const auto& p : store.patents()) last = std::max(last, p.publication);
        horizon = last;
      }
      write_csv(store, pf, ef);
      const IngestTally& t = store.tally();
      extra["horizon"] = format_iso_date(*horizon);
      extra["tally"] = {{"records_read", t.records_read},     {"skipped", t.skipped()},
                        {"raw_edges", t.raw_edges},           {"self_citations", t.self_citations},
                        {"duplicate_edges", t.duplicate_edges}, {"quarantined", store.quarantined().size()}};
      write_text(meta, extra.dump(2) + "\n");
    }
    // Downstream always reads the normalized files, so fresh and cached
    // runs see the same corpus.
    p_.store = parse_csv_edges(pf, ef);
    const json m = json::parse(read_text(meta));
    p_.horizon = *parse_iso_date(m.at("horizon").get<std::string>());
    records = p_.store->patents().size();
    return {pf, ef, meta};
  }

  std::vector<fs::path> graph(const fs::path& dir, bool hit, std::size_t& records) {
    p_.dag = build_dag(*p_.store);
    if (!p_.dag->removed_edges().empty())
      warnings_.push_back(std::to_string(p_.dag->removed_edges().size()) + " edges removed to break cycles");
    if (!hit) write_dag_csv(*p_.dag, dir);
    records = p_.dag->edge_count();
    return {dir / "nodes.csv", dir / "edges.csv", dir / "removed_edges.csv"};
  }

  std::vector<fs::path> katz(const fs::path& dir, bool hit, std::size_t& records) {
    const fs::path f = dir / "katz.csv";
    if (hit) {
      p_.katz = read_katz_csv(*p_.dag, f);
    } else {
      YearlyKatzOptions opt;
      opt.global_alpha = c_.global_alpha;
      opt.threads = c_.threads;
      p_.katz = yearly_katz(*p_.dag, opt);
      write_katz_csv(*p_.dag, p_.katz, f);
    }
    records = p_.katz.size();
    return {f};
  }

  std::vector<fs::path> spells(const fs::path& dir, bool hit, std::size_t& records) {
    const fs::path f = dir / "spells.csv";
    if (hit) {
      p_.spells = read_spell_csv(f, *p_.store, *p_.dag);
    } else {
      CovariateSpec spec = CovariateSpec::from_names(c_.covariates);
      for (auto& d : spec.covariates) {
        if (is_dummy(d.kind)) d.standardize = c_.standardize_dummies;
        if (d.kind == CovariateKind::days_after_publication) d.log_transform = c_.log_days;
      }
      auto sp = build_spells(*p_.dag, *p_.store, p_.horizon);
      const SpellAccounting acc = account(*p_.dag, sp);
      if (!acc.balanced())
        throw std::logic_error("spell accounting does not balance: " + std::to_string(acc.events) + " events + " +
                               std::to_string(acc.censored) + " censored");
      SpellMatrix m = standardize(attach_covariates(std::move(sp), *p_.store, *p_.dag, p_.katz, std::move(spec)));
      for (auto& w : m.warnings) warnings_.push_back(w);
      write_spell_csv(m, f);
      p_.spells = std::move(m);
    }
    records = p_.spells->spells.size();
    return {f, fs::path(f.string() + ".spec.json")};
  }

  std::vector<fs::path> km(const fs::path& dir, bool hit, std::size_t& records) {
    const fs::path f = dir / "km_curves.csv";
    p_.km = km_by_group(p_.spells->spells, c_.km_group, c_.km_pooling);
    if (!hit) {
      write_km_csv(p_.km, f);
      json medians = json::object();
      for (const auto& curve : p_.km) {
        auto med = km_median(curve);
        medians[curve.group] = med ? json(days_to_years(*med)) : json();
      }
      write_text(dir / "medians.json", json{{"median_years", medians}}.dump(2) + "\n");
    }
    records = p_.km.size();
    return {f, dir / "medians.json"};
  }

  std::vector<fs::path> fit(const fs::path& dir, bool hit, std::size_t& records) {
    const fs::path f = dir / "fits.json";
    std::vector<fs::path> files{f};
    if (hit) {
      const json j = json::parse(read_text(f));
      p_.fits.clear();
      for (const auto& m : j.at("models"))
        p_.fits.push_back({m.at("name").get<std::string>(), fit_from_json(m.at("fit"))});
      for (const auto& m : c_.models) files.push_back(dir / ("schoenfeld_" + m.name + ".csv"));
      records = p_.fits.size();
      return files;
    }
    json models = json::array();
    p_.fits.clear();
    for (const auto& def : c_.models) {
      std::vector<std::string> cols;
      for (const auto& cv : def.covariates) {
        const std::string name(covariate_kind_name(*covariate_kind_from_name(cv)));
        if (p_.spells->column(name))
          cols.push_back(name);
        else
          warnings_.push_back("model '" + def.name + "': covariate '" + name + "' is degenerate and was dropped");
      }
      if (cols.empty()) throw std::runtime_error("model '" + def.name + "' has no usable covariates");
      const CoxData data = make_cox_data(*p_.spells, cols, c_.time_scale);
      CoxOptions opt;
      opt.ties = def.ties.value_or(c_.ties);
      opt.robust = c_.robust;
      opt.baseline_label = def.baseline;
      FitResult result;
      try {
        result = cox_fit(data, opt);
      } catch (const SeparationError& e) {
        throw std::runtime_error("model '" + def.name + "': " + e.what() + "; remove '" + e.covariate() +
                                 "' from the model");
      }
      for (auto& w : result.warnings) warnings_.push_back("model '" + def.name + "': " + w);
      json entry{{"name", def.name}, {"fit", fit_to_json(result)}};
      const Concordance conc = concordance(result, data);
      entry["concordance"] = conc.c_index ? json(*conc.c_index) : json();
      const fs::path sf = dir / ("schoenfeld_" + def.name + ".csv");
      try {
        const SchoenfeldReport zph = schoenfeld_test(result, data, c_.schoenfeld_transform);
        write_schoenfeld_csv(zph, sf);
        entry["schoenfeld_global_p"] = zph.rows.back().p_value;
      } catch (const std::invalid_argument& e) {
        write_text(sf, "covariate,rho,chisq,df,p\n");
        entry["schoenfeld_error"] = e.what();
      }
      files.push_back(sf);
      if (auto k = result.index_of("katz")) {
        const std::vector<double> values{-1.0, 0.0, 1.0, 2.0};
        const fs::path pf = dir / ("partial_katz_" + def.name + ".csv");
        write_partial_effect_csv(partial_effects(result, breslow_baseline(result, data), "katz", values), pf);
        files.push_back(pf);
      }
      models.push_back(std::move(entry));
      p_.fits.push_back({def.name, std::move(result)});
    }
    json lr = json::array();
    if (p_.fits.size() >= 2)
      for (const auto& row : model_comparison(p_.fits, c_.lr_nesting).lr_tests)
        lr.push_back({{"restricted", row.restricted},
                      {"full", row.full},
                      {"statistic", row.test.statistic},
                      {"df", row.test.df},
                      {"p", row.test.p_value},
                      {"nesting", row.test.nesting == Nesting::strict ? "strict" : "quasi"}});
    write_text(f, json{{"models", models}, {"lr_tests", lr}}.dump(2) + "\n");
    records = p_.fits.size();
    return files;
  }

  std::vector<fs::path> report(const fs::path& dir, bool hit, std::size_t& records) {
    std::vector<fs::path> files;
    if (hit) {
      for (const char* name : {"descriptives.csv", "yearly_counts.csv", "degree_hist.csv", "km_curves.csv",
                               "fits.csv", "comparison.csv", "manifest.json"})
        files.push_back(dir / name);
    } else {
      ReportInputs in;
      in.store = &*p_.store;
      in.dag = &*p_.dag;
      in.spells = &*p_.spells;
      in.km = &p_.km;
      in.fits = p_.fits;
      in.provenance = p_.input_digests;
      in.nesting = c_.lr_nesting;
      for (const auto& name : write_report(in, dir)) files.push_back(dir / name);
    }
    records = files.size();
    return files;
  }

  void write_manifest(const RunResult& result) {
    json stages = json::array();
    for (const auto& s : result.stages) {
      json files = json::array();
      for (const auto& f : s.files) files.push_back({{"path", f.path}, {"sha256", f.sha256}, {"bytes", f.bytes}});
      json entry{{"stage", s.stage}, {"status", s.ok ? "ok" : "failed"}, {"digest", s.digest}, {"files", files}};
      if (!s.ok) entry["error"] = s.error;
      stages.push_back(std::move(entry));
    }
    json m{{"artifacts", stages}, {"exit_code", result.exit_code}};
    write_text(c_.out / "manifest.json", m.dump(2) + "\n");
  }

  const PipelineConfig& c_;
  std::ostream& log_;
  Products p_;
  std::vector<std::string> warnings_;
};

}  // namespace

RunResult run_pipeline(const PipelineConfig& config, std::ostream& log, std::string_view last_stage) {
  config.validate();
  Runner runner(config, log);
  return runner.run(last_stage);
}

}  // namespace citerate
