#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "citerate/ingest.hpp"

namespace testing_support {

struct PatentSpec {
  std::string id;
  citerate::Day pub;
  std::optional<citerate::Day> filing = std::nullopt;
  std::uint8_t flags = 1;
  int cpc = 1;
};

inline citerate::CorpusStore make_store(const std::vector<PatentSpec>& patents,
                                        const std::vector<std::pair<std::string, std::string>>& edges) {
  citerate::CorpusBuilder b;
  for (const auto& p : patents) {
    citerate::Patent pat;
    pat.id = p.id;
    pat.publication = p.pub;
    pat.filing = p.filing;
    pat.flags = citerate::SubdomainFlags(p.flags);
    pat.total_cpc_classes = p.cpc;
    b.add_patent(std::move(pat));
  }
  for (const auto& [citing, cited] : edges) b.add_citation(citing, cited);
  return std::move(b).build();
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("citerate_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace testing_support
