#include "citerate/ingest.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "citerate/csv.hpp"
#include "citerate/digest.hpp"

namespace citerate {
namespace {

using nlohmann::json;

constexpr std::array<std::string_view, 4> kNames{"storage", "distribution", "production",
                                                 "fuel_cells"};
constexpr std::array<std::string_view, 4> kCpc{"Y02E60/32", "Y02E60/34", "Y02E60/36",
                                               "Y02E60/50"};

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string normalize_cpc(std::string_view symbol) {
  std::string out;
  for (char c : symbol)
    if (c != ' ') out.push_back(c);
  return out;
}

const json* lookup(const json& j, std::initializer_list<const char*> path) {
  const json* cur = &j;
  for (const char* key : path) {
    if (!cur->is_object()) return nullptr;
    auto it = cur->find(key);
    if (it == cur->end()) return nullptr;
    cur = &*it;
  }
  return cur;
}

std::optional<std::string> string_at(const json& j, std::initializer_list<const char*> path) {
  const json* v = lookup(j, path);
  if (v && v->is_string()) return v->get<std::string>();
  return std::nullopt;
}

void collect_cpc(const json& node, std::set<std::string>& out) {
  if (node.is_string()) {
    out.insert(normalize_cpc(node.get<std::string>()));
  } else if (node.is_object()) {
    if (auto it = node.find("symbol"); it != node.end() && it->is_string())
      out.insert(normalize_cpc(it->get<std::string>()));
    else if (auto c = node.find("classifications"); c != node.end())
      collect_cpc(*c, out);
  } else if (node.is_array()) {
    for (const auto& item : node) collect_cpc(item, out);
  }
}

bool parse_flag(const std::string& text, std::string_view column, std::string_view id) {
  if (text == "1" || text == "true" || text == "True" || text == "TRUE") return true;
  if (text == "0" || text == "false" || text == "False" || text == "FALSE" || text.empty())
    return false;
  throw std::runtime_error("patent " + std::string(id) + ": bad boolean '" + text + "' in " +
                           std::string(column));
}

}  // namespace

std::string_view subdomain_name(Subdomain s) { return kNames[static_cast<std::size_t>(s)]; }

std::optional<Subdomain> subdomain_from_name(std::string_view name) {
  for (auto s : kSubdomains)
    if (subdomain_name(s) == name) return s;
  return std::nullopt;
}

std::string_view subdomain_cpc(Subdomain s) { return kCpc[static_cast<std::size_t>(s)]; }

const Patent* CorpusStore::find(std::string_view id) const {
  auto idx = index_of(id);
  return idx ? &patents_[*idx] : nullptr;
}

std::optional<std::size_t> CorpusStore::index_of(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

bool CorpusBuilder::add_patent(Patent patent) {
  auto& tally = store_.tally_;
  if (patent.id.empty()) {
    ++tally.missing_id;
    return false;
  }
  if (patent.filing && *patent.filing > patent.publication) {
    ++tally.filing_after_publication;
    return false;
  }
  if (patent.total_cpc_classes < 1) {
    ++tally.missing_cpc;
    return false;
  }
  if (store_.index_.contains(patent.id)) {
    if (duplicates_ == DuplicatePolicy::fail)
      throw std::runtime_error("duplicate patent id '" + patent.id + "'");
    ++tally.duplicate_ids;
    return false;
  }
  store_.index_.emplace(patent.id, store_.patents_.size());
  store_.patents_.push_back(std::move(patent));
  return true;
}

void CorpusBuilder::add_citation(std::string citing_id, std::string cited_id) {
  ++store_.tally_.raw_edges;
  raw_edges_.emplace_back(std::move(citing_id), std::move(cited_id));
}

void CorpusBuilder::add_source(std::string source, std::string digest) {
  store_.provenance_.source_digests.emplace_back(std::move(source), std::move(digest));
}

CorpusStore CorpusBuilder::build() && {
  auto& tally = store_.tally_;
  std::set<std::pair<std::string, std::string>> seen;
  for (auto& [citing, cited] : raw_edges_) {
    if (citing == cited) {
      ++tally.self_citations;
      continue;
    }
    const Patent* from = store_.find(citing);
    const Patent* to = store_.find(cited);
    if (!from || !to) {
      std::string missing = !from ? citing : cited;
      store_.quarantined_.push_back({std::move(citing), std::move(cited), std::move(missing)});
      continue;
    }
    if (!seen.emplace(citing, cited).second) {
      ++tally.duplicate_edges;
      continue;
    }
    store_.edges_.push_back({std::move(citing), std::move(cited), from->publication});
  }
  raw_edges_.clear();
  store_.provenance_.ingested_at = utc_now();
  return std::move(store_);
}

LensRecord parse_lens_record(const json& record, IngestTally& tally) {
  LensRecord out;
  if (!record.is_object()) {
    ++tally.malformed;
    return out;
  }
  auto id = string_at(record, {"lens_id"});
  if (!id || id->empty()) {
    ++tally.missing_id;
    return out;
  }
  auto pub_text = string_at(record, {"date_published"});
  if (!pub_text) pub_text = string_at(record, {"biblio", "publication_reference", "date"});
  std::optional<Day> pub = pub_text ? parse_iso_date(*pub_text) : std::nullopt;
  if (!pub) {
    ++tally.missing_publication;
    return out;
  }

  Patent p;
  p.id = *id;
  p.publication = *pub;
  auto filing_text = string_at(record, {"filing_date"});
  if (!filing_text) filing_text = string_at(record, {"biblio", "application_reference", "date"});
  if (filing_text) p.filing = parse_iso_date(*filing_text);

  std::set<std::string> symbols;
  if (const json* c = lookup(record, {"biblio", "classifications_cpc"})) collect_cpc(*c, symbols);
  if (const json* c = lookup(record, {"class_cpc"})) collect_cpc(*c, symbols);
  for (auto s : kSubdomains)
    if (symbols.contains(std::string(subdomain_cpc(s)))) p.flags.set(s);
  p.total_cpc_classes = static_cast<int>(symbols.size());

  if (const json* cites = lookup(record, {"biblio", "references_cited", "citations"});
      cites && cites->is_array()) {
    for (const auto& c : *cites)
      if (auto cited = string_at(c, {"patcit", "lens_id"})) out.cited_ids.push_back(*cited);
  }
  out.patent = std::move(p);
  return out;
}

CorpusStore parse_jsonl(std::istream& in, std::string_view source_name) {
  if (!in) throw std::runtime_error("cannot read " + std::string(source_name));
  CorpusBuilder builder;
  Sha256 digest;
  std::string line;
  while (std::getline(in, line)) {
    digest.update(line);
    digest.update("\n");
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto& tally = builder.tally();
    ++tally.records_read;
    json record = json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (record.is_discarded()) {
      ++tally.malformed;
      continue;
    }
    LensRecord parsed = parse_lens_record(record, tally);
    if (!parsed.patent) continue;
    const std::string citing = parsed.patent->id;
    if (!builder.add_patent(std::move(*parsed.patent))) continue;
    for (auto& cited : parsed.cited_ids) builder.add_citation(citing, std::move(cited));
  }
  if (in.bad()) throw std::runtime_error("I/O error reading " + std::string(source_name));
  builder.add_source(std::string(source_name), digest.hex_digest());
  return std::move(builder).build();
}

CorpusStore parse_jsonl_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return parse_jsonl(in, path.string());
}

CorpusStore parse_csv_edges(const std::filesystem::path& patent_file,
                            const std::filesystem::path& edge_file) {
  const csv::Table patents = csv::read_file(patent_file);
  const csv::Table edges = csv::read_file(edge_file);

  const std::size_t c_id = patents.column("id"), c_pub = patents.column("pub_date"),
                    c_filing = patents.column("filing_date"), c_cpc = patents.column("total_cpc");
  std::array<std::size_t, 4> c_flag{};
  for (auto s : kSubdomains)
    c_flag[static_cast<std::size_t>(s)] = patents.column(subdomain_name(s));

  CorpusBuilder builder(CorpusBuilder::DuplicatePolicy::fail);
  for (const auto& row : patents.rows) {
    auto& tally = builder.tally();
    ++tally.records_read;
    Patent p;
    p.id = row[c_id];
    auto pub = parse_iso_date(row[c_pub]);
    if (!pub) {
      if (p.id.empty())
        ++tally.missing_id;
      else
        ++tally.missing_publication;
      continue;
    }
    p.publication = *pub;
    if (!row[c_filing].empty()) {
      p.filing = parse_iso_date(row[c_filing]);
      if (!p.filing)
        throw std::runtime_error("patent " + p.id + ": bad filing_date '" + row[c_filing] + "'");
    }
    for (auto s : kSubdomains)
      p.flags.set(s, parse_flag(row[c_flag[static_cast<std::size_t>(s)]], subdomain_name(s), p.id));
    try {
      p.total_cpc_classes = std::stoi(row[c_cpc]);
    } catch (const std::exception&) {
      throw std::runtime_error("patent " + p.id + ": bad total_cpc '" + row[c_cpc] + "'");
    }
    builder.add_patent(std::move(p));
  }

  const std::size_t c_citing = edges.column("citing_id"), c_cited = edges.column("cited_id");
  for (const auto& row : edges.rows) builder.add_citation(row[c_citing], row[c_cited]);

  builder.add_source(patent_file.string(), sha256_file(patent_file));
  builder.add_source(edge_file.string(), sha256_file(edge_file));
  return std::move(builder).build();
}

void write_csv(const CorpusStore& store, const std::filesystem::path& patent_file,
               const std::filesystem::path& edge_file) {
  std::ofstream pout(patent_file, std::ios::binary);
  if (!pout) throw std::runtime_error("cannot write " + patent_file.string());
  csv::write_row(pout, {"id", "pub_date", "filing_date", "storage", "distribution", "production",
                        "fuel_cells", "total_cpc"});
  for (const auto& p : store.patents()) {
    std::vector<std::string> row{p.id, format_iso_date(p.publication),
                                 p.filing ? format_iso_date(*p.filing) : ""};
    for (auto s : kSubdomains) row.push_back(p.flags.has(s) ? "1" : "0");
    row.push_back(std::to_string(p.total_cpc_classes));
    csv::write_row(pout, row);
  }
  std::ofstream eout(edge_file, std::ios::binary);
  if (!eout) throw std::runtime_error("cannot write " + edge_file.string());
  csv::write_row(eout, {"citing_id", "cited_id"});
  for (const auto& e : store.edges()) csv::write_row(eout, {e.citing_id, e.cited_id});
  for (const auto& q : store.quarantined()) csv::write_row(eout, {q.citing_id, q.cited_id});
  if (!pout || !eout) throw std::runtime_error("write failed for corpus CSV");
}

void write_jsonl(const std::vector<json>& records, std::ostream& out) {
  for (const auto& r : records) out << r.dump() << '\n';
}

}  // namespace citerate
