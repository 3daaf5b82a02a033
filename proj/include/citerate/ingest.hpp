#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "citerate/date.hpp"

namespace citerate {

/// The four hydrogen subdomains (CPC Y02E60/32, /34, /36, /50).
enum class Subdomain : std::uint8_t { storage = 0, distribution = 1, production = 2, fuel_cells = 3 };

inline constexpr std::array<Subdomain, 4> kSubdomains{Subdomain::storage, Subdomain::distribution,
                                                      Subdomain::production, Subdomain::fuel_cells};

std::string_view subdomain_name(Subdomain s);
std::optional<Subdomain> subdomain_from_name(std::string_view name);

/// CPC symbol prefix for a subdomain, e.g. "Y02E60/32".
std::string_view subdomain_cpc(Subdomain s);

/// Set of subdomain memberships; a patent may carry several.
class SubdomainFlags {
 public:
  constexpr SubdomainFlags() = default;
  constexpr explicit SubdomainFlags(std::uint8_t bits) : bits_(bits & 0xf) {}

  constexpr bool has(Subdomain s) const { return bits_ & (1u << static_cast<unsigned>(s)); }
  constexpr void set(Subdomain s, bool on = true) {
    const auto mask = static_cast<std::uint8_t>(1u << static_cast<unsigned>(s));
    bits_ = on ? (bits_ | mask) : (bits_ & ~mask);
  }
  constexpr bool shares(SubdomainFlags other) const { return (bits_ & other.bits_) != 0; }
  constexpr bool any() const { return bits_ != 0; }
  constexpr std::uint8_t bits() const { return bits_; }

  friend constexpr bool operator==(SubdomainFlags, SubdomainFlags) = default;

 private:
  std::uint8_t bits_ = 0;
};

struct Patent {
  std::string id;
  Day publication = 0;
  std::optional<Day> filing;
  SubdomainFlags flags;
  int total_cpc_classes = 1;

  friend bool operator==(const Patent&, const Patent&) = default;
};

/// citing -> cited; citation_date is the citing patent's publication date.
struct CitationEdge {
  std::string citing_id;
  std::string cited_id;
  Day citation_date = 0;

  friend bool operator==(const CitationEdge&, const CitationEdge&) = default;
};

struct QuarantinedEdge {
  std::string citing_id;
  std::string cited_id;
  std::string missing_id;

  friend bool operator==(const QuarantinedEdge&, const QuarantinedEdge&) = default;
};

struct IngestTally {
  std::size_t records_read = 0;
  std::size_t malformed = 0;
  std::size_t missing_id = 0;
  std::size_t missing_publication = 0;
  std::size_t filing_after_publication = 0;
  std::size_t missing_cpc = 0;
  std::size_t duplicate_ids = 0;
  std::size_t raw_edges = 0;
  std::size_t self_citations = 0;
  std::size_t duplicate_edges = 0;

  std::size_t skipped() const {
    return malformed + missing_id + missing_publication + filing_after_publication + missing_cpc +
           duplicate_ids;
  }
};

struct Provenance {
  std::vector<std::pair<std::string, std::string>> source_digests;  // (source, sha256)
  std::string ingested_at;                                         // UTC ISO-8601
};

/// Immutable patent corpus. Built once by CorpusBuilder, then read-only.
class CorpusStore {
 public:
  const std::vector<Patent>& patents() const { return patents_; }
  const std::vector<CitationEdge>& edges() const { return edges_; }
  const std::vector<QuarantinedEdge>& quarantined() const { return quarantined_; }
  const IngestTally& tally() const { return tally_; }
  const Provenance& provenance() const { return provenance_; }

  const Patent* find(std::string_view id) const;
  std::optional<std::size_t> index_of(std::string_view id) const;
  bool empty() const { return patents_.empty(); }

 private:
  friend class CorpusBuilder;

  std::vector<Patent> patents_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<CitationEdge> edges_;
  std::vector<QuarantinedEdge> quarantined_;
  IngestTally tally_;
  Provenance provenance_;
};

/// Single-writer accumulator. Edges are resolved in build(), so a citation
/// may name a patent that is added later.
class CorpusBuilder {
 public:
  enum class DuplicatePolicy { skip, fail };

  explicit CorpusBuilder(DuplicatePolicy duplicates = DuplicatePolicy::skip)
      : duplicates_(duplicates) {}

  /// Validates and stores a patent. Returns false (and tallies) when the
  /// record violates an invariant; throws std::runtime_error on a duplicate
  /// id under DuplicatePolicy::fail.
  bool add_patent(Patent patent);
  void add_citation(std::string citing_id, std::string cited_id);
  void add_source(std::string source, std::string digest);
  IngestTally& tally() { return store_.tally_; }

  /// Resolves citations: self-citations and repeated pairs are counted and
  /// dropped; edges with an unknown endpoint are quarantined.
  CorpusStore build() &&;

 private:
  DuplicatePolicy duplicates_;
  CorpusStore store_;
  std::vector<std::pair<std::string, std::string>> raw_edges_;
};

/// Converts one Lens-shaped JSON record. Citations listed under
/// biblio.references_cited are returned as cited ids.
struct LensRecord {
  std::optional<Patent> patent;  // nullopt when a required field is missing
  std::vector<std::string> cited_ids;
};
LensRecord parse_lens_record(const nlohmann::json& record, IngestTally& tally);

/// Reads newline-delimited Lens records. Malformed lines and invalid records
/// are skipped and tallied. Throws std::runtime_error if the stream fails.
CorpusStore parse_jsonl(std::istream& in, std::string_view source_name = "<stream>");
CorpusStore parse_jsonl_file(const std::filesystem::path& path);

/// Reads the CSV fixture pair. Patent columns: id, pub_date, filing_date,
/// storage, distribution, production, fuel_cells, total_cpc. Edge columns:
/// citing_id, cited_id. Throws on duplicate patent ids.
CorpusStore parse_csv_edges(const std::filesystem::path& patent_file,
                            const std::filesystem::path& edge_file);

/// Writes the CSV fixture pair. Resolved and quarantined edges are both
/// written, so a re-parse reproduces the same store.
void write_csv(const CorpusStore& store, const std::filesystem::path& patent_file,
               const std::filesystem::path& edge_file);

// Paginated retrieval -------------------------------------------------------

struct ScrollRequest {
  std::string endpoint;       // e.g. https://api.lens.org/patent/search
  std::string query_body;     // first request body (JSON text)
  std::string token;          // bearer token
  std::vector<std::string> include{"biblio", "doc_key", "lang"};
  std::chrono::milliseconds retry_wait{1000};
  int max_retries = 100;
  int max_restarts = 3;
};

struct ScrollResult {
  std::vector<nlohmann::json> records;
  int requests = 0;
  int retries = 0;   // HTTP 429 responses
  int restarts = 0;  // scroll expiries
  std::size_t duplicates = 0;
  std::optional<int> failed_status;  // set when aborted; records are kept
  std::vector<std::string> warnings;

  bool complete() const { return !failed_status.has_value(); }
};

/// Request body for the Y02E60 hydrogen subclasses, sorted by publication
/// date, 100 records per page, 1 minute scroll context.
std::string default_scroll_query();

ScrollResult fetch_scroll(const ScrollRequest& request);

/// Writes records as JSONL, one per line.
void write_jsonl(const std::vector<nlohmann::json>& records, std::ostream& out);

}  // namespace citerate
