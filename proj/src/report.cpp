#include "citerate/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <stdexcept>

#include "citerate/csv.hpp"
#include "citerate/digest.hpp"

namespace citerate {
namespace {

constexpr double kZ975 = 1.96;

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

std::string cell(double v, bool is_date) {
  if (is_date) return format_iso_date(static_cast<Day>(std::lround(v)));
  return csv::format_double(v);
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

Eigen::VectorXd to_vector(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Eigen::MatrixXd to_matrix(const nlohmann::json& j, Eigen::Index p) {
  const auto v = j.get<std::vector<double>>();
  if (v.empty()) return {};
  if (static_cast<Eigen::Index>(v.size()) != p * p) throw std::runtime_error("covariance has wrong size");
  Eigen::MatrixXd m(p, p);
  for (Eigen::Index r = 0; r < p; ++r)
    for (Eigen::Index c = 0; c < p; ++c) m(r, c) = v[static_cast<std::size_t>(r * p + c)];
  return m;
}

std::vector<double> flatten(const Eigen::MatrixXd& m) {
  std::vector<double> v;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) v.push_back(m(r, c));
  return v;
}

}  // namespace

SummaryStats summarize(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("summarize: no values");
  SummaryStats s;
  s.n = values.size();
  const double n = static_cast<double>(s.n);
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.sd = s.n > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  std::sort(values.begin(), values.end());
  s.min = values.front();
  s.max = values.back();
  const std::size_t mid = s.n / 2;
  s.median = s.n % 2 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
  return s;
}

std::vector<DescriptiveRow> descriptives(const CorpusStore& store, const TemporalDag& dag,
                                         const SpellMatrix& spells) {
  if (store.empty() || dag.node_count() == 0)
    throw std::runtime_error("descriptives: the corpus is empty; run the ingest stage first");
  if (spells.spells.empty())
    throw std::runtime_error("descriptives: no spells; run the spells stage first");

  std::vector<DescriptiveRow> rows;
  auto add = [&](std::string table, std::string section, std::string variable, std::vector<double> v,
                 bool is_date = false) {
    rows.push_back({std::move(table), std::move(section), std::move(variable), summarize(std::move(v)), is_date});
  };

  const std::size_t n = dag.node_count();
  std::vector<double> v(n);
  for (auto s : kSubdomains) {
    for (NodeIndex i = 0; i < n; ++i) v[i] = store.patents()[dag.store_index(i)].flags.has(s) ? 1.0 : 0.0;
    add("patents", "patent", std::string(subdomain_name(s)), v);
  }
  for (NodeIndex i = 0; i < n; ++i) v[i] = dag.publication(i);
  add("patents", "patent", "publication_date", v, true);
  for (NodeIndex i = 0; i < n; ++i) v[i] = store.patents()[dag.store_index(i)].total_cpc_classes;
  add("patents", "patent", "total_cpc_classes", v);
  const DegreeStats deg = degree_stats(dag.full());
  for (NodeIndex i = 0; i < n; ++i) v[i] = deg.in_degree[i];
  add("patents", "patent", "in_degree", v);
  for (NodeIndex i = 0; i < n; ++i) v[i] = deg.out_degree[i];
  add("patents", "patent", "out_degree", v);

  const auto& sp = spells.spells;
  const std::size_t m = sp.size();
  std::vector<double> w(m);
  for (std::size_t k = 0; k < m; ++k) w[k] = sp[k].duration();
  add("spells", "time", "days_after_previous_event", w);
  for (std::size_t k = 0; k < m; ++k) w[k] = sp[k].start;
  add("spells", "time", "previous_event_date", w, true);
  std::vector<double> ev;
  for (const auto& s : sp)
    if (s.event) ev.push_back(s.stop);
  if (!ev.empty()) add("spells", "time", "event_date", ev, true);

  for (auto s : kSubdomains) {
    for (std::size_t k = 0; k < m; ++k) w[k] = sp[k].cited_flags.has(s) ? 1.0 : 0.0;
    add("spells", "patent", std::string(subdomain_name(s)), w);
  }
  for (std::size_t k = 0; k < m; ++k)
    w[k] = store.patents()[dag.store_index(sp[k].cited_node)].total_cpc_classes;
  add("spells", "patent", "total_cpc_classes", w);
  if (auto c = spells.column("katz")) {
    const CovariateDef* def = spells.spec.find("katz");
    for (std::size_t k = 0; k < m; ++k) {
      const double x = spells.values(static_cast<Eigen::Index>(k), *c);
      w[k] = def->standardized ? def->mean + def->sd * x : x;
    }
    add("spells", "patent", "katz", w);
  }

  for (std::size_t k = 0; k < m; ++k) w[k] = sp[k].event ? 1.0 : 0.0;
  add("spells", "citation", "citation_event", w);
  std::vector<double> shared_events;
  for (std::size_t k = 0; k < m; ++k) {
    w[k] = sp[k].event && sp[k].citing_flags.shares(sp[k].cited_flags) ? 1.0 : 0.0;
    if (sp[k].event) shared_events.push_back(w[k]);
  }
  add("spells", "citation", "shared_subdomain", w);
  if (!shared_events.empty()) add("spells", "citation", "shared_subdomain_among_events", shared_events);
  return rows;
}

std::vector<YearlyCount> yearly_counts(const TemporalDag& dag) {
  std::map<int, YearlyCount> by_year;
  for (NodeIndex i = 0; i < dag.node_count(); ++i) {
    const int y = year_of(dag.publication(i));
    by_year[y].year = y;
    ++by_year[y].patents;
  }
  for (const auto& e : dag.edges()) {
    const int y = year_of(e.day);
    by_year[y].year = y;
    ++by_year[y].citations;
  }
  std::vector<YearlyCount> out;
  if (by_year.empty()) return out;
  // Dense years so the series plots without gaps.
  for (int y = by_year.begin()->first; y <= by_year.rbegin()->first; ++y) {
    auto it = by_year.find(y);
    out.push_back(it == by_year.end() ? YearlyCount{y, 0, 0} : it->second);
  }
  return out;
}

std::string significance_stars(double p) {
  if (p <= 0.0001) return "***";
  if (p <= 0.001) return "**";
  if (p <= 0.01) return "*";
  return "";
}

std::vector<CoefficientRow> coefficient_rows(std::string_view model, const FitResult& fit) {
  std::vector<CoefficientRow> rows;
  const Eigen::VectorXd se = fit.se(), rse = fit.robust() ? fit.robust_se() : Eigen::VectorXd(),
                        used = fit.reported_se(), p = fit.p_values();
  for (Eigen::Index j = 0; j < fit.beta.size(); ++j) {
    CoefficientRow r;
    r.model = std::string(model);
    r.covariate = fit.names[static_cast<std::size_t>(j)];
    r.beta = fit.beta[j];
    r.hazard_ratio = std::exp(r.beta);
    r.se = se[j];
    if (fit.robust()) r.robust_se = rse[j];
    r.z = r.beta / used[j];
    r.p_value = p[j];
    r.stars = significance_stars(r.p_value);
    r.ci_low = std::exp(r.beta - kZ975 * used[j]);
    r.ci_high = std::exp(r.beta + kZ975 * used[j]);
    rows.push_back(std::move(r));
  }
  return rows;
}

ModelComparison model_comparison(std::span<const NamedFit> fits, Nesting nesting) {
  if (fits.size() < 2) throw std::invalid_argument("model_comparison: needs at least two fits");
  for (const auto& f : fits)
    if (f.fit.source_digest != fits.front().fit.source_digest || f.fit.n_records != fits.front().fit.n_records)
      throw std::invalid_argument("model_comparison: '" + f.name + "' was fitted on a different spell matrix");
  ModelComparison c;
  for (const auto& f : fits) {
    c.models.push_back(f.name);
    for (const auto& name : f.fit.names)
      if (std::find(c.covariates.begin(), c.covariates.end(), name) == c.covariates.end())
        c.covariates.push_back(name);
    c.observations.push_back(f.fit.n_records);
    c.events.push_back(f.fit.n_events);
    c.loglik.push_back(f.fit.loglik);
  }
  c.cells.assign(c.covariates.size(), std::vector<std::optional<CoefficientRow>>(fits.size()));
  for (std::size_t m = 0; m < fits.size(); ++m)
    for (auto& row : coefficient_rows(fits[m].name, fits[m].fit)) {
      const auto k = static_cast<std::size_t>(
          std::find(c.covariates.begin(), c.covariates.end(), row.covariate) - c.covariates.begin());
      c.cells[k][m] = std::move(row);
    }
  for (std::size_t m = 1; m < fits.size(); ++m) {
    const FitResult& a = fits[m - 1].fit;
    const FitResult& b = fits[m].fit;
    if (b.names.size() <= a.names.size()) continue;
    const bool nested = std::all_of(a.names.begin(), a.names.end(), [&](const std::string& n) {
      return std::find(b.names.begin(), b.names.end(), n) != b.names.end();
    });
    if (!nested && nesting == Nesting::strict) continue;
    c.lr_tests.push_back({fits[m - 1].name, fits[m].name, lr_test(a, b, nested ? Nesting::strict : Nesting::quasi)});
  }
  return c;
}

void write_descriptives_csv(const std::vector<DescriptiveRow>& rows, const std::filesystem::path& path) {
  auto out = open_out(path);
  csv::write_row(out, {"table", "section", "variable", "n", "mean", "sd", "median", "max", "min"});
  for (const auto& r : rows)
    csv::write_row(out, {r.table, r.section, r.variable, std::to_string(r.stats.n), cell(r.stats.mean, r.is_date),
                         r.is_date ? "" : csv::format_double(r.stats.sd), cell(r.stats.median, r.is_date),
                         cell(r.stats.max, r.is_date), cell(r.stats.min, r.is_date)});
}

void write_yearly_counts_csv(const std::vector<YearlyCount>& rows, const std::filesystem::path& path) {
  auto out = open_out(path);
  csv::write_row(out, {"year", "patents", "citations"});
  for (const auto& r : rows)
    csv::write_row(out, {std::to_string(r.year), std::to_string(r.patents), std::to_string(r.citations)});
}

void write_fit_csv(std::span<const NamedFit> fits, const std::filesystem::path& path) {
  auto out = open_out(path);
  csv::write_row(out, {"model", "covariate", "beta", "HR", "se", "robust_se", "z", "p", "stars", "ci_lo", "ci_hi"});
  for (const auto& f : fits)
    for (const auto& r : coefficient_rows(f.name, f.fit))
      csv::write_row(out, {r.model, r.covariate, csv::format_double(r.beta), csv::format_double(r.hazard_ratio),
                           csv::format_double(r.se), r.robust_se ? csv::format_double(*r.robust_se) : "",
                           csv::format_double(r.z), csv::format_double(r.p_value), r.stars,
                           csv::format_double(r.ci_low), csv::format_double(r.ci_high)});
}

void write_comparison_csv(const ModelComparison& c, const std::filesystem::path& path) {
  auto out = open_out(path);
  std::vector<std::string> header{"covariate"};
  for (const auto& m : c.models) header.push_back(m);
  csv::write_row(out, header);
  for (std::size_t k = 0; k < c.covariates.size(); ++k) {
    std::vector<std::string> row{c.covariates[k]};
    for (const auto& cellv : c.cells[k]) {
      if (!cellv) {
        row.emplace_back();
        continue;
      }
      const double se = cellv->robust_se ? *cellv->robust_se : cellv->se;
      row.push_back(fixed(cellv->hazard_ratio, 3) + cellv->stars + " (" + fixed(se, 3) + ")");
    }
    csv::write_row(out, row);
  }
  auto summary = [&](const std::string& label, auto get) {
    std::vector<std::string> row{label};
    for (std::size_t m = 0; m < c.models.size(); ++m) row.push_back(get(m));
    csv::write_row(out, row);
  };
  summary("observations", [&](std::size_t m) { return std::to_string(c.observations[m]); });
  summary("events", [&](std::size_t m) { return std::to_string(c.events[m]); });
  summary("log_partial_likelihood", [&](std::size_t m) { return csv::format_double(c.loglik[m]); });
  for (const auto& lr : c.lr_tests) {
    std::vector<std::string> row{"lr_test " + lr.restricted + " vs " + lr.full};
    for (const auto& m : c.models)
      row.push_back(m == lr.full ? "chisq=" + fixed(lr.test.statistic, 3) + " df=" + std::to_string(lr.test.df) +
                                       " p=" + csv::format_double(lr.test.p_value)
                                 : "");
    csv::write_row(out, row);
  }
}

nlohmann::json fit_to_json(const FitResult& fit) {
  return {{"names", fit.names},
          {"beta", std::vector<double>(fit.beta.data(), fit.beta.data() + fit.beta.size())},
          {"covariance", flatten(fit.covariance)},
          {"robust_covariance", flatten(fit.robust_covariance)},
          {"loglik", fit.loglik},
          {"loglik_null", fit.loglik_null},
          {"score_norm", fit.score_norm},
          {"iterations", fit.iterations},
          {"converged", fit.converged},
          {"n_records", fit.n_records},
          {"n_events", fit.n_events},
          {"n_clusters", fit.n_clusters},
          {"dropped_zero_length", fit.dropped_zero_length},
          {"ties", tie_method_name(fit.ties)},
          {"baseline", fit.baseline_label},
          {"source_digest", fit.source_digest},
          {"warnings", fit.warnings}};
}

FitResult fit_from_json(const nlohmann::json& j) {
  FitResult f;
  f.names = j.at("names").get<std::vector<std::string>>();
  f.beta = to_vector(j.at("beta"));
  const auto p = f.beta.size();
  f.covariance = to_matrix(j.at("covariance"), p);
  f.robust_covariance = to_matrix(j.at("robust_covariance"), p);
  f.loglik = j.at("loglik").get<double>();
  f.loglik_null = j.at("loglik_null").get<double>();
  f.score_norm = j.at("score_norm").get<double>();
  f.iterations = j.at("iterations").get<int>();
  f.converged = j.at("converged").get<bool>();
  f.n_records = j.at("n_records").get<std::size_t>();
  f.n_events = j.at("n_events").get<std::size_t>();
  f.n_clusters = j.at("n_clusters").get<std::size_t>();
  f.dropped_zero_length = j.at("dropped_zero_length").get<std::size_t>();
  auto ties = tie_method_from_name(j.at("ties").get<std::string>());
  if (!ties) throw std::runtime_error("unknown tie method in fit record");
  f.ties = *ties;
  f.baseline_label = j.at("baseline").get<std::string>();
  f.source_digest = j.at("source_digest").get<std::string>();
  f.warnings = j.at("warnings").get<std::vector<std::string>>();
  return f;
}

std::vector<ArtifactFile> describe_files(const std::filesystem::path& root,
                                         std::span<const std::filesystem::path> files) {
  std::vector<ArtifactFile> out;
  for (const auto& f : files) {
    const auto full = f.is_absolute() ? f : root / f;
    out.push_back({std::filesystem::relative(full, root).generic_string(), sha256_file(full),
                   std::filesystem::file_size(full)});
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.path < b.path; });
  return out;
}

std::vector<std::filesystem::path> write_report(const ReportInputs& in, const std::filesystem::path& dir) {
  if (!in.store || !in.dag) throw std::runtime_error("report: no corpus; run the ingest and graph stages first");
  if (!in.spells) throw std::runtime_error("report: no spells; run the spells stage first");
  if (!in.km) throw std::runtime_error("report: no survival curves; run the km stage first");
  if (in.fits.empty()) throw std::runtime_error("report: no fitted models; run the fit stage first");
  std::filesystem::create_directories(dir);

  std::vector<std::filesystem::path> files{"descriptives.csv", "yearly_counts.csv", "degree_hist.csv",
                                           "km_curves.csv",    "fits.csv",          "comparison.csv"};
  write_descriptives_csv(descriptives(*in.store, *in.dag, *in.spells), dir / files[0]);
  write_yearly_counts_csv(yearly_counts(*in.dag), dir / files[1]);
  write_degree_csv(degree_stats(in.dag->full()), dir / files[2]);
  write_km_csv(*in.km, dir / files[3]);
  write_fit_csv(in.fits, dir / files[4]);
  if (in.fits.size() >= 2) {
    write_comparison_csv(model_comparison(in.fits, in.nesting), dir / files[5]);
  } else {
    ModelComparison single;
    single.models.push_back(in.fits[0].name);
    single.covariates = in.fits[0].fit.names;
    for (auto& r : coefficient_rows(in.fits[0].name, in.fits[0].fit)) single.cells.push_back({std::move(r)});
    single.observations.push_back(in.fits[0].fit.n_records);
    single.events.push_back(in.fits[0].fit.n_events);
    single.loglik.push_back(in.fits[0].fit.loglik);
    write_comparison_csv(single, dir / files[5]);
  }

  nlohmann::json manifest;
  nlohmann::json inputs = nlohmann::json::array();
  for (const auto& [name, digest] : in.provenance) inputs.push_back({{"input", name}, {"sha256", digest}});
  manifest["inputs"] = inputs;
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& f : describe_files(dir, files))
    arr.push_back({{"path", f.path}, {"sha256", f.sha256}, {"bytes", f.bytes}});
  manifest["files"] = arr;
  files.emplace_back("manifest.json");
  auto out = open_out(dir / files.back());
  out << manifest.dump(2) << '\n';
  return files;
}

}  // namespace citerate
