#include "citerate/events.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <stdexcept>

#include "json.hpp"

#include "citerate/csv.hpp"
#include "citerate/digest.hpp"

namespace citerate {
namespace {

constexpr std::array<std::pair<CovariateKind, std::string_view>, 8> kKinds{{
    {CovariateKind::storage, "storage"},
    {CovariateKind::distribution, "distribution"},
    {CovariateKind::production, "production"},
    {CovariateKind::fuel_cells, "fuel_cells"},
    {CovariateKind::days_after_publication, "days_after_publication"},
    {CovariateKind::total_cpc_classes, "total_cpc_classes"},
    {CovariateKind::shared_subdomain, "shared_subdomain"},
    {CovariateKind::katz_centrality, "katz"},
}};

Subdomain dummy_subdomain(CovariateKind k) {
  switch (k) {
    case CovariateKind::storage: return Subdomain::storage;
    case CovariateKind::distribution: return Subdomain::distribution;
    case CovariateKind::production: return Subdomain::production;
    case CovariateKind::fuel_cells: return Subdomain::fuel_cells;
    default: throw std::logic_error("not a subdomain dummy");
  }
}

}  // namespace

std::string_view covariate_kind_name(CovariateKind k) {
  for (auto [kind, name] : kKinds)
    if (kind == k) return name;
  return "unknown";
}

std::optional<CovariateKind> covariate_kind_from_name(std::string_view name) {
  for (auto [kind, n] : kKinds)
    if (n == name) return kind;
  if (name == "katz_centrality") return CovariateKind::katz_centrality;
  return std::nullopt;
}

bool is_dummy(CovariateKind k) {
  return k == CovariateKind::storage || k == CovariateKind::distribution ||
         k == CovariateKind::production || k == CovariateKind::fuel_cells ||
         k == CovariateKind::shared_subdomain;
}

CovariateSpec CovariateSpec::all() {
  CovariateSpec spec;
  for (auto [kind, name] : kKinds) spec.covariates.push_back({std::string(name), kind});
  return spec;
}

CovariateSpec CovariateSpec::from_names(std::span<const std::string> names) {
  CovariateSpec spec;
  for (const auto& n : names) {
    auto kind = covariate_kind_from_name(n);
    if (!kind) throw std::invalid_argument("unknown covariate '" + n + "'");
    if (spec.find(n)) throw std::invalid_argument("covariate '" + n + "' listed twice");
    spec.covariates.push_back({n, *kind});
  }
  return spec;
}

const CovariateDef* CovariateSpec::find(std::string_view name) const {
  for (const auto& c : covariates)
    if (c.name == name) return &c;
  return nullptr;
}

CovariateDef* CovariateSpec::find(std::string_view name) {
  for (auto& c : covariates)
    if (c.name == name) return &c;
  return nullptr;
}

std::vector<std::string> SpellMatrix::names() const {
  std::vector<std::string> out;
  for (const auto& c : spec.covariates) out.push_back(c.name);
  return out;
}

std::optional<Eigen::Index> SpellMatrix::column(std::string_view name) const {
  for (std::size_t j = 0; j < spec.covariates.size(); ++j)
    if (spec.covariates[j].name == name) return static_cast<Eigen::Index>(j);
  return std::nullopt;
}

std::vector<SpellRecord> build_spells(const TemporalDag& dag, const CorpusStore& store, Day horizon) {
  const auto& patents = store.patents();
  for (NodeIndex i = 0; i < dag.node_count(); ++i)
    if (dag.publication(i) > horizon)
      throw std::invalid_argument("horizon " + format_iso_date(horizon) +
                                  " precedes publication of " + dag.id(i));

  std::vector<NodeIndex> by_id(dag.node_count());
  std::iota(by_id.begin(), by_id.end(), NodeIndex{0});
  std::sort(by_id.begin(), by_id.end(),
            [&](NodeIndex a, NodeIndex b) { return dag.id(a) < dag.id(b); });

  std::vector<SpellRecord> spells;
  spells.reserve(dag.node_count() + dag.edge_count());
  std::vector<std::pair<Day, NodeIndex>> citations;
  for (NodeIndex i : by_id) {
    const Patent& cited = patents[dag.store_index(i)];
    citations.clear();
    for (NodeIndex j : dag.cited_by(i)) citations.emplace_back(dag.publication(j), j);
    std::sort(citations.begin(), citations.end());

    Day start = cited.publication;
    bool first = true;
    for (auto [day, j] : citations) {
      if (day < cited.publication)
        throw std::logic_error("citation of " + cited.id + " on " + format_iso_date(day) +
                               " predates its publication");
      if (day > horizon)
        throw std::invalid_argument("horizon precedes citation of " + cited.id + " on " +
                                    format_iso_date(day));
      SpellRecord s;
      s.cited_id = cited.id;
      s.cited_node = i;
      s.start = start;
      s.stop = day;
      s.event = true;
      s.citing_id = dag.id(j);
      s.cited_flags = cited.flags;
      s.citing_flags = patents[dag.store_index(j)].flags;
      s.first_spell = first;
      spells.push_back(std::move(s));
      start = day;
      first = false;
    }
    SpellRecord last;
    last.cited_id = cited.id;
    last.cited_node = i;
    last.start = start;
    last.stop = horizon;
    last.event = false;
    last.cited_flags = cited.flags;
    last.first_spell = first;
    spells.push_back(std::move(last));
  }
  return spells;
}

SpellAccounting account(const TemporalDag& dag, std::span<const SpellRecord> spells) {
  SpellAccounting a;
  a.patents = dag.node_count();
  a.citations = dag.edge_count();
  for (const auto& s : spells) (s.event ? a.events : a.censored)++;
  return a;
}

SpellMatrix attach_covariates(std::vector<SpellRecord> spells, const CorpusStore& store,
                              const TemporalDag& dag, std::span<const KatzSnapshot> katz,
                              CovariateSpec spec) {
  std::map<int, const KatzSnapshot*> katz_by_year;
  for (const auto& s : katz) katz_by_year[s.year] = &s;

  SpellMatrix m;
  m.values.resize(static_cast<Eigen::Index>(spells.size()),
                  static_cast<Eigen::Index>(spec.covariates.size()));
  for (std::size_t r = 0; r < spells.size(); ++r) {
    const SpellRecord& s = spells[r];
    if (s.cited_node >= dag.node_count() || dag.id(s.cited_node) != s.cited_id)
      throw std::invalid_argument("spell refers to unknown patent '" + s.cited_id + "'");
    const Patent& p = store.patents()[dag.store_index(s.cited_node)];
    for (std::size_t c = 0; c < spec.covariates.size(); ++c) {
      const CovariateDef& def = spec.covariates[c];
      double v = 0.0;
      switch (def.kind) {
        case CovariateKind::storage:
        case CovariateKind::distribution:
        case CovariateKind::production:
        case CovariateKind::fuel_cells:
          v = s.cited_flags.has(dummy_subdomain(def.kind)) ? 1.0 : 0.0;
          break;
        case CovariateKind::days_after_publication:
          v = static_cast<double>(s.start - p.publication);
          if (def.log_transform) v = std::log1p(v);
          break;
        case CovariateKind::total_cpc_classes:
          v = static_cast<double>(p.total_cpc_classes);
          break;
        case CovariateKind::shared_subdomain:
          v = (s.event && s.citing_flags.shares(s.cited_flags)) ? 1.0 : 0.0;
          break;
        case CovariateKind::katz_centrality: {
          auto it = katz_by_year.find(year_of(s.start) - 1);
          v = it == katz_by_year.end() ? 0.0 : it->second->score(s.cited_node);
          break;
        }
      }
      m.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v;
    }
  }
  m.spells = std::move(spells);
  m.spec = std::move(spec);
  return m;
}

SpellMatrix standardize(SpellMatrix m) {
  const double n = static_cast<double>(m.values.rows());
  std::vector<Eigen::Index> keep;
  for (std::size_t c = 0; c < m.spec.covariates.size(); ++c) {
    CovariateDef& def = m.spec.covariates[c];
    const auto j = static_cast<Eigen::Index>(c);
    if (!def.standardize || n == 0) {
      keep.push_back(j);
      continue;
    }
    auto col = m.values.col(j);
    const double mean = col.mean();
    const double var = (col.array() - mean).square().sum() / n;
    const double sd = std::sqrt(var);
    if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) {
      def.degenerate = true;
      m.warnings.push_back("covariate '" + def.name + "' has zero variance and was excluded");
      continue;
    }
    col = (col.array() - mean) / sd;
    // Compose with any earlier standardization so back-transformation
    // always maps to the raw scale.
    def.mean = def.standardized ? def.mean + def.sd * mean : mean;
    def.sd = def.standardized ? def.sd * sd : sd;
    def.standardized = true;
    keep.push_back(j);
  }
  if (keep.size() != m.spec.covariates.size()) {
    Eigen::MatrixXd kept(m.values.rows(), static_cast<Eigen::Index>(keep.size()));
    CovariateSpec spec;
    for (std::size_t k = 0; k < keep.size(); ++k) {
      kept.col(static_cast<Eigen::Index>(k)) = m.values.col(keep[k]);
      spec.covariates.push_back(m.spec.covariates[static_cast<std::size_t>(keep[k])]);
    }
    m.values = std::move(kept);
    m.spec = std::move(spec);
  }
  return m;
}

namespace {

nlohmann::json spec_to_json(const CovariateSpec& spec) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& c : spec.covariates)
    arr.push_back({{"name", c.name},
                   {"kind", covariate_kind_name(c.kind)},
                   {"standardize", c.standardize},
                   {"log_transform", c.log_transform},
                   {"standardized", c.standardized},
                   {"mean", c.mean},
                   {"sd", c.sd}});
  return arr;
}

CovariateSpec spec_from_json(const nlohmann::json& arr) {
  CovariateSpec spec;
  for (const auto& j : arr) {
    CovariateDef c;
    c.name = j.at("name").get<std::string>();
    auto kind = covariate_kind_from_name(j.at("kind").get<std::string>());
    if (!kind) throw std::runtime_error("bad covariate kind in spell spec");
    c.kind = *kind;
    c.standardize = j.at("standardize").get<bool>();
    c.log_transform = j.at("log_transform").get<bool>();
    c.standardized = j.at("standardized").get<bool>();
    c.mean = j.at("mean").get<double>();
    c.sd = j.at("sd").get<double>();
    spec.covariates.push_back(std::move(c));
  }
  return spec;
}

}  // namespace

void write_spell_csv(const SpellMatrix& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  std::vector<std::string> header{"cited_id", "start", "stop", "event", "citing_id"};
  for (const auto& c : m.spec.covariates) header.push_back(c.name);
  csv::write_row(out, header);
  std::vector<std::string> row;
  for (std::size_t r = 0; r < m.spells.size(); ++r) {
    const SpellRecord& s = m.spells[r];
    row = {s.cited_id, format_iso_date(s.start), format_iso_date(s.stop), s.event ? "1" : "0",
           s.citing_id.value_or("")};
    for (Eigen::Index c = 0; c < m.values.cols(); ++c)
      row.push_back(csv::format_double(m.values(static_cast<Eigen::Index>(r), c)));
    csv::write_row(out, row);
  }
  std::ofstream spec_out(path.string() + ".spec.json", std::ios::binary);
  spec_out << spec_to_json(m.spec).dump(2) << '\n';
  if (!out || !spec_out) throw std::runtime_error("write failed for " + path.string());
}

SpellMatrix read_spell_csv(const std::filesystem::path& path, const CorpusStore& store,
                           const TemporalDag& dag) {
  std::ifstream spec_in(path.string() + ".spec.json");
  if (!spec_in) throw std::runtime_error("missing " + path.string() + ".spec.json");
  SpellMatrix m;
  m.spec = spec_from_json(nlohmann::json::parse(spec_in));
  const csv::Table t = csv::read_file(path);
  const auto c_cited = t.column("cited_id"), c_start = t.column("start"), c_stop = t.column("stop"),
             c_event = t.column("event"), c_citing = t.column("citing_id");
  std::vector<std::size_t> cov_cols;
  for (const auto& c : m.spec.covariates) cov_cols.push_back(t.column(c.name));

  m.values.resize(static_cast<Eigen::Index>(t.rows.size()),
                  static_cast<Eigen::Index>(cov_cols.size()));
  m.spells.reserve(t.rows.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    SpellRecord s;
    s.cited_id = row[c_cited];
    auto node = dag.index_of(s.cited_id);
    if (!node) throw std::runtime_error("spell for unknown patent '" + s.cited_id + "'");
    s.cited_node = *node;
    auto start = parse_iso_date(row[c_start]);
    auto stop = parse_iso_date(row[c_stop]);
    if (!start || !stop) throw std::runtime_error("bad spell dates for " + s.cited_id);
    s.start = *start;
    s.stop = *stop;
    s.event = row[c_event] == "1";
    const Patent& cited = store.patents()[dag.store_index(*node)];
    s.cited_flags = cited.flags;
    s.first_spell = s.start == cited.publication &&
                    (m.spells.empty() || m.spells.back().cited_id != s.cited_id);
    if (!row[c_citing].empty()) {
      s.citing_id = row[c_citing];
      const Patent* citing = store.find(row[c_citing]);
      if (!citing) throw std::runtime_error("spell cites unknown patent '" + row[c_citing] + "'");
      s.citing_flags = citing->flags;
    }
    for (std::size_t c = 0; c < cov_cols.size(); ++c)
      m.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          std::stod(row[cov_cols[c]]);
    m.spells.push_back(std::move(s));
  }
  return m;
}

std::string spell_digest(const SpellMatrix& m) {
  Sha256 h;
  for (const auto& c : m.spec.covariates) {
    h.update(c.name);
    h.update("|");
  }
  for (std::size_t r = 0; r < m.spells.size(); ++r) {
    const auto& s = m.spells[r];
    h.update(s.cited_id);
    h.update(std::to_string(s.start) + "," + std::to_string(s.stop) + (s.event ? ",1" : ",0"));
    for (Eigen::Index c = 0; c < m.values.cols(); ++c)
      h.update("," + csv::format_double(m.values(static_cast<Eigen::Index>(r), c)));
    h.update("\n");
  }
  return h.hex_digest();
}

}  // namespace citerate
