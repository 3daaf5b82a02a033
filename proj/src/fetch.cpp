#include <httplib.h>

#include <stdexcept>
#include <thread>
#include <unordered_set>

#include "citerate/ingest.hpp"

namespace citerate {
namespace {

using nlohmann::json;

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

Endpoint split_endpoint(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw std::invalid_argument("endpoint lacks scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

bool looks_expired(const httplib::Result& res) {
  if (res->status == 410) return true;
  if (res->status != 400 && res->status != 404) return false;
  const auto& body = res->body;
  return body.find("scroll") != std::string::npos &&
         (body.find("expired") != std::string::npos ||
          body.find("No search context") != std::string::npos);
}

}  // namespace

std::string default_scroll_query() {
  json body = {
      {"query",
       {{"bool",
         {{"must", {{"terms", {{"class_cpc.symbol", {"Y02E60/32", "Y02E60/34", "Y02E60/36",
                                                     "Y02E60/50"}}}}}},
          {"should", json::array({{{"term", {{"cited_by_patent", true}}}},
                                  {{"term", {{"cites_patent", true}}}}})}}}}},
      {"sort", json::array({{{"date_published", "asc"}}})},
      {"size", 100},
      {"include", {"biblio", "doc_key", "lang", "lens_id", "date_published"}},
      {"scroll", "1m"}};
  return body.dump();
}

ScrollResult fetch_scroll(const ScrollRequest& request) {
  const Endpoint ep = split_endpoint(request.endpoint);
  httplib::Client client(ep.origin);
  client.set_connection_timeout(std::chrono::seconds(30));
  client.set_read_timeout(std::chrono::seconds(120));
  httplib::Headers headers{{"Authorization", "Bearer " + request.token}};

  ScrollResult result;
  std::unordered_set<std::string> recorded;
  std::optional<std::string> scroll_id;
  int consecutive_retries = 0;

  for (;;) {
    std::string body;
    if (scroll_id) {
      body = json{{"scroll_id", *scroll_id}, {"include", request.include}}.dump();
    } else {
      body = request.query_body;
    }
    ++result.requests;
    auto res = client.Post(ep.path, headers, body, "application/json");
    if (!res) {
      result.failed_status = -1;
      result.warnings.push_back("transport error: " + httplib::to_string(res.error()));
      return result;
    }
    if (res->status == 429) {
      ++result.retries;
      if (++consecutive_retries > request.max_retries) {
        result.failed_status = 429;
        result.warnings.push_back("rate limit persisted beyond retry budget");
        return result;
      }
      std::this_thread::sleep_for(request.retry_wait);
      continue;
    }
    consecutive_retries = 0;
    if (scroll_id && looks_expired(res)) {
      if (++result.restarts > request.max_restarts) {
        result.failed_status = res->status;
        result.warnings.push_back("scroll context kept expiring; giving up");
        return result;
      }
      result.warnings.push_back("scroll context expired; restarting from the first page");
      scroll_id.reset();
      continue;
    }
    if (res->status != 200) {
      result.failed_status = res->status;
      result.warnings.push_back("request failed with HTTP " + std::to_string(res->status));
      return result;
    }

    json page = json::parse(res->body, nullptr, false);
    if (page.is_discarded() || !page.is_object()) {
      result.failed_status = res->status;
      result.warnings.push_back("response body is not a JSON object");
      return result;
    }
    const auto data = page.find("data");
    const std::size_t n = (data != page.end() && data->is_array()) ? data->size() : 0;
    const auto results = page.value("results", static_cast<long>(n));
    if (results <= 0 || n == 0) return result;

    for (const auto& rec : *data) {
      const std::string id = rec.is_object() ? rec.value("lens_id", std::string{}) : std::string{};
      if (!id.empty() && !recorded.insert(id).second) {
        ++result.duplicates;
        continue;
      }
      result.records.push_back(rec);
    }
    auto sid = page.find("scroll_id");
    if (sid == page.end() || !sid->is_string()) {
      result.warnings.push_back("page without scroll_id; stopping");
      return result;
    }
    scroll_id = sid->get<std::string>();
  }
}

}  // namespace citerate
