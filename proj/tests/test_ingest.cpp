#include <httplib.h>

#include <atomic>
#include <mutex>
#include <sstream>
#include <thread>

#include <gtest/gtest.h>

#include "citerate/csv.hpp"
#include "citerate/date.hpp"
#include "citerate/ingest.hpp"
#include "support.hpp"

using namespace citerate;
using nlohmann::json;
using testing_support::TempDir;
using testing_support::write_file;

TEST(Date, EpochAndRoundTrip) {
  EXPECT_EQ(make_day(1841, 1, 1), 0);
  EXPECT_EQ(make_day(1840, 12, 31), -1);
  EXPECT_EQ(*parse_iso_date("1841-01-02"), 1);
  for (const char* s : {"1841-08-04", "2000-02-29", "2013-08-07", "2023-01-06"})
    EXPECT_EQ(format_iso_date(*parse_iso_date(s)), s);
  EXPECT_EQ(parse_iso_date("2013-08-07T00:00:00Z"), parse_iso_date("2013-08-07"));
  EXPECT_FALSE(parse_iso_date("2013-02-30"));
  EXPECT_FALSE(parse_iso_date("2013/02/03"));
  EXPECT_FALSE(parse_iso_date(""));
  EXPECT_EQ(year_of(make_day(2010, 12, 31)), 2010);
  EXPECT_EQ(last_day_of_year(2010) + 1, first_day_of_year(2011));
}

TEST(Csv, SplitEscapeAndDoubles) {
  EXPECT_EQ(csv::split_line("a,\"b,c\",\"d\"\"e\",,"),
            (std::vector<std::string>{"a", "b,c", "d\"e", "", ""}));
  EXPECT_EQ(csv::escape("x,y"), "\"x,y\"");
  EXPECT_EQ(csv::escape("plain"), "plain");
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 12345678.9})
    EXPECT_EQ(std::stod(csv::format_double(v)), v);
}

TEST(ParseJsonl, LensRecordWithFuelCellClass) {
  std::istringstream in(
      R"({"lens_id":"X","date_published":"2013-08-07","biblio":{"classifications_cpc":{"classifications":[{"symbol":"Y02E60/50"}]}}})"
      "\n");
  const CorpusStore store = parse_jsonl(in);
  ASSERT_EQ(store.patents().size(), 1u);
  const Patent& p = store.patents()[0];
  EXPECT_EQ(p.id, "X");
  EXPECT_EQ(p.publication, *parse_iso_date("2013-08-07"));
  EXPECT_TRUE(p.flags.has(Subdomain::fuel_cells));
  EXPECT_FALSE(p.flags.has(Subdomain::storage));
  EXPECT_EQ(p.total_cpc_classes, 1);
}

TEST(ParseJsonl, EmptyStreamGivesEmptyStore) {
  std::istringstream in("");
  const CorpusStore store = parse_jsonl(in);
  EXPECT_TRUE(store.empty());
  EXPECT_EQ(store.tally().records_read, 0u);
}

TEST(ParseJsonl, FilingAfterPublicationIsSkippedAndCounted) {
  std::istringstream in(
      R"({"lens_id":"A","date_published":"2010-01-01","filing_date":"2011-01-01","class_cpc":["Y02E60/32"]})"
      "\n"
      R"({"lens_id":"B","date_published":"2010-01-01","class_cpc":["Y02E 60/32","H01M8/00"]})"
      "\n"
      "not json\n");
  const CorpusStore store = parse_jsonl(in);
  ASSERT_EQ(store.patents().size(), 1u);
  EXPECT_EQ(store.patents()[0].id, "B");
  EXPECT_EQ(store.patents()[0].total_cpc_classes, 2);
  EXPECT_EQ(store.tally().filing_after_publication, 1u);
  EXPECT_EQ(store.tally().malformed, 1u);
  EXPECT_EQ(store.tally().skipped(), 2u);
}

TEST(ParseJsonl, CitationsResolveAcrossRecords) {
  std::istringstream in(
      R"({"lens_id":"B","date_published":"2012-01-01","class_cpc":["Y02E60/34"],"biblio":{"references_cited":{"citations":[{"patcit":{"lens_id":"A"}},{"patcit":{"lens_id":"Z"}},{"nplcit":{"text":"x"}}]}}})"
      "\n"
      R"({"lens_id":"A","date_published":"2010-01-01","class_cpc":["Y02E60/34"]})"
      "\n");
  const CorpusStore store = parse_jsonl(in);
  ASSERT_EQ(store.edges().size(), 1u);
  EXPECT_EQ(store.edges()[0].citing_id, "B");
  EXPECT_EQ(store.edges()[0].cited_id, "A");
  EXPECT_EQ(store.edges()[0].citation_date, *parse_iso_date("2012-01-01"));
  ASSERT_EQ(store.quarantined().size(), 1u);
  EXPECT_EQ(store.quarantined()[0].missing_id, "Z");
}

class CsvFixture : public ::testing::Test {
 protected:
  TempDir dir{"ingest"};
  void write(const std::string& patents, const std::string& edges) {
    write_file(dir / "p.csv", "id,pub_date,filing_date,storage,distribution,production,fuel_cells,total_cpc\n" + patents);
    write_file(dir / "e.csv", "citing_id,cited_id\n" + edges);
  }
  CorpusStore parse() { return parse_csv_edges(dir / "p.csv", dir / "e.csv"); }
};

TEST_F(CsvFixture, MinimalChainResolvesTwoEdges) {
  write("a,2000-01-01,,1,0,0,0,1\nb,2005-01-01,,1,0,0,0,2\nc,2010-01-01,2009-05-01,0,0,0,1,3\n", "c,b\nb,a\n");
  const CorpusStore s = parse();
  EXPECT_EQ(s.patents().size(), 3u);
  EXPECT_EQ(s.edges().size(), 2u);
  EXPECT_TRUE(s.quarantined().empty());
  EXPECT_EQ(s.edges()[0].citation_date, *parse_iso_date("2010-01-01"));
}

TEST_F(CsvFixture, UnknownIdIsQuarantined) {
  write("a,2000-01-01,,1,0,0,0,1\nb,2005-01-01,,1,0,0,0,1\n", "b,a\nb,z\n");
  const CorpusStore s = parse();
  EXPECT_EQ(s.edges().size(), 1u);
  ASSERT_EQ(s.quarantined().size(), 1u);
  EXPECT_EQ(s.quarantined()[0].missing_id, "z");
}

TEST_F(CsvFixture, DuplicatePatentIdIsFatalAndNamed) {
  write("a,2000-01-01,,1,0,0,0,1\na,2001-01-01,,1,0,0,0,1\n", "");
  try {
    parse();
    FAIL() << "expected an exception";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("'a'"), std::string::npos);
  }
}

TEST_F(CsvFixture, EdgeIdentityHolds) {
  write("a,2000-01-01,,1,0,0,0,1\nb,2005-01-01,,1,0,0,0,1\nc,2006-01-01,,1,0,0,0,1\n",
        "b,a\nb,a\nc,c\nc,b\nc,q\nr,a\n");
  const CorpusStore s = parse();
  const auto& t = s.tally();
  EXPECT_EQ(t.raw_edges, 6u);
  EXPECT_EQ(s.edges().size() + s.quarantined().size() + t.self_citations + t.duplicate_edges, t.raw_edges);
  EXPECT_EQ(t.self_citations, 1u);
  EXPECT_EQ(t.duplicate_edges, 1u);
}

TEST_F(CsvFixture, WriteThenParseRoundTrips) {
  write("a,2000-01-01,1999-03-02,1,0,1,0,4\nb,2005-01-01,,0,1,0,0,1\nc,2006-01-01,,0,0,0,1,7\n",
        "b,a\nc,a\nc,b\nc,missing\n");
  const CorpusStore first = parse();
  write_csv(first, dir / "p2.csv", dir / "e2.csv");
  const CorpusStore second = parse_csv_edges(dir / "p2.csv", dir / "e2.csv");
  EXPECT_EQ(first.patents(), second.patents());
  EXPECT_EQ(first.edges(), second.edges());
  EXPECT_EQ(first.quarantined(), second.quarantined());
}

// Paginated retrieval against an in-process stub -----------------------------

namespace {

json page_of(int first, int count, const std::string& scroll_id) {
  json data = json::array();
  for (int k = 0; k < count; ++k) data.push_back({{"lens_id", "L" + std::to_string(first + k)}});
  return {{"data", data}, {"results", count}, {"scroll_id", scroll_id}, {"total", 200}};
}

/// Serves pages[k] for the k-th successful request. Each entry in
/// `script` is an HTTP status to return before moving on; 200 serves the
/// next page.
class StubServer {
 public:
  StubServer(std::vector<json> pages, std::vector<int> script) : pages_(std::move(pages)), script_(std::move(script)) {
    server_.Post("/search", [this](const httplib::Request& req, httplib::Response& res) {
      std::lock_guard lock(mu_);
      bodies_.push_back(req.body);
      auth_ = req.get_header_value("Authorization");
      const int status = step_ < script_.size() ? script_[step_] : 200;
      ++step_;
      if (status == 410) {
        page_ = 0;  // the client restarts from the first query
        res.status = 410;
        res.set_content(R"({"message":"scroll expired"})", "application/json");
        return;
      }
      if (status != 200) {
        res.status = status;
        res.set_content("{}", "application/json");
        return;
      }
      const json body = page_ < pages_.size() ? pages_[page_] : json{{"data", json::array()}, {"results", 0}};
      ++page_;
      res.set_content(body.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~StubServer() {
    server_.stop();
    thread_.join();
  }
  std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_) + "/search"; }
  std::vector<std::string> bodies() {
    std::lock_guard lock(mu_);
    return bodies_;
  }
  std::string auth() {
    std::lock_guard lock(mu_);
    return auth_;
  }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::mutex mu_;
  std::vector<json> pages_;
  std::vector<int> script_;
  std::size_t step_ = 0, page_ = 0;
  std::vector<std::string> bodies_;
  std::string auth_;
};

ScrollRequest request_for(const StubServer& s) {
  ScrollRequest r;
  r.endpoint = s.endpoint();
  r.query_body = default_scroll_query();
  r.token = "secret";
  r.retry_wait = std::chrono::milliseconds(0);
  return r;
}

}  // namespace

TEST(FetchScroll, TwoPagesThenEmpty) {
  StubServer s({page_of(0, 100, "s1"), page_of(100, 100, "s2")}, {});
  const ScrollResult r = fetch_scroll(request_for(s));
  EXPECT_TRUE(r.complete());
  EXPECT_EQ(r.records.size(), 200u);
  EXPECT_EQ(r.requests, 3);
  const auto bodies = s.bodies();
  ASSERT_EQ(bodies.size(), 3u);
  EXPECT_EQ(bodies[0], default_scroll_query());
  const json second = json::parse(bodies[1]);
  EXPECT_EQ(second.at("scroll_id"), "s1");
  EXPECT_TRUE(second.contains("include"));
  EXPECT_EQ(json::parse(bodies[2]).at("scroll_id"), "s2");
  EXPECT_EQ(s.auth(), "Bearer secret");
}

TEST(FetchScroll, RateLimitRetriesSameScroll) {
  StubServer s({page_of(0, 100, "s1"), page_of(100, 100, "s2")}, {200, 429, 200, 200});
  const ScrollResult r = fetch_scroll(request_for(s));
  EXPECT_TRUE(r.complete());
  EXPECT_EQ(r.records.size(), 200u);
  EXPECT_EQ(r.retries, 1);
  const auto bodies = s.bodies();
  ASSERT_EQ(bodies.size(), 4u);
  EXPECT_EQ(bodies[1], bodies[2]);  // the retried request repeats the scroll id
}

TEST(FetchScroll, DuplicateIdsAcrossPagesStoredOnce) {
  StubServer s({page_of(0, 100, "s1"), page_of(50, 100, "s2")}, {});
  const ScrollResult r = fetch_scroll(request_for(s));
  EXPECT_EQ(r.records.size(), 150u);
  EXPECT_EQ(r.duplicates, 50u);
}

TEST(FetchScroll, OutputIndependentOfInjected429s) {
  StubServer a({page_of(0, 100, "s1"), page_of(100, 30, "s2")}, {});
  StubServer b({page_of(0, 100, "s1"), page_of(100, 30, "s2")}, {429, 429, 200, 429, 200});
  const ScrollResult ra = fetch_scroll(request_for(a));
  const ScrollResult rb = fetch_scroll(request_for(b));
  EXPECT_EQ(ra.records, rb.records);
  EXPECT_EQ(rb.retries, 3);
}

TEST(FetchScroll, NonRetryableStatusKeepsPartialRecords) {
  StubServer s({page_of(0, 100, "s1"), page_of(100, 100, "s2")}, {200, 500});
  const ScrollResult r = fetch_scroll(request_for(s));
  EXPECT_FALSE(r.complete());
  EXPECT_EQ(*r.failed_status, 500);
  EXPECT_EQ(r.records.size(), 100u);
}

TEST(FetchScroll, ExpiredScrollRestartsWithWarning) {
  StubServer s({page_of(0, 100, "s1"), page_of(100, 100, "s2")}, {200, 410});
  const ScrollResult r = fetch_scroll(request_for(s));
  EXPECT_TRUE(r.complete());
  EXPECT_EQ(r.restarts, 1);
  EXPECT_EQ(r.records.size(), 200u);
  EXPECT_EQ(r.duplicates, 100u);
  EXPECT_FALSE(r.warnings.empty());
}

TEST(FetchScroll, RetryBudgetExhausted) {
  StubServer s({page_of(0, 10, "s1")}, {429, 429, 429, 429});
  ScrollRequest req = request_for(s);
  req.max_retries = 2;
  const ScrollResult r = fetch_scroll(req);
  EXPECT_FALSE(r.complete());
  EXPECT_EQ(*r.failed_status, 429);
  EXPECT_TRUE(r.records.empty());
}
