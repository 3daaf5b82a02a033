#include "citerate/survival.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "citerate/csv.hpp"

namespace citerate {

double KmCurve::survival_at(double t) const {
  auto it = std::upper_bound(rows.begin(), rows.end(), t,
                             [](double v, const KmRow& r) { return v < r.time; });
  return it == rows.begin() ? 1.0 : std::prev(it)->survival;
}

KmCurve km_fit(std::span<const Observation> obs) {
  if (obs.empty()) throw std::invalid_argument("km_fit: no observations");
  for (const auto& o : obs)
    if (!(o.duration >= 0.0)) throw std::invalid_argument("km_fit: negative or NaN duration");
  std::vector<Observation> sorted(obs.begin(), obs.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const Observation& a, const Observation& b) { return a.duration < b.duration; });

  KmCurve curve;
  curve.n = sorted.size();
  std::size_t at_risk = sorted.size();
  double s = 1.0;
  for (std::size_t k = 0; k < sorted.size();) {
    const double t = sorted[k].duration;
    std::size_t d = 0, c = 0;
    for (; k < sorted.size() && sorted[k].duration == t; ++k) (sorted[k].event ? d : c)++;
    if (d > 0) {
      s *= 1.0 - static_cast<double>(d) / static_cast<double>(at_risk);
      curve.rows.push_back({t, at_risk, d, c, s});
    }
    at_risk -= d + c;
  }
  if (curve.rows.empty()) curve.warnings.push_back("all observations censored; survival is flat at 1");
  return curve;
}

std::optional<double> km_median(const KmCurve& curve) {
  for (const auto& r : curve.rows)
    if (r.survival <= 0.5) return r.time;
  return std::nullopt;
}

std::vector<KmCurve> km_by_group(std::span<const SpellRecord> spells, std::string_view group,
                                 KmPooling pooling) {
  std::vector<Subdomain> groups;
  if (group == "subdomain") {
    groups.assign(kSubdomains.begin(), kSubdomains.end());
  } else if (auto s = subdomain_from_name(group)) {
    groups.push_back(*s);
  } else {
    throw std::invalid_argument("unknown KM grouping '" + std::string(group) + "'");
  }

  auto fit_where = [&](auto&& keep, std::string label) {
    std::vector<Observation> obs;
    for (const auto& s : spells) {
      if (pooling == KmPooling::first_spell && !s.first_spell) continue;
      if (keep(s)) obs.push_back({static_cast<double>(s.duration()), s.event});
    }
    std::optional<KmCurve> curve;
    if (!obs.empty()) {
      curve = km_fit(obs);
      curve->group = std::move(label);
    }
    return curve;
  };

  std::vector<KmCurve> out;
  auto all = fit_where([](const SpellRecord&) { return true; }, "all");
  if (!all) throw std::invalid_argument("km_by_group: no spells");
  out.push_back(std::move(*all));
  for (Subdomain g : groups) {
    auto c = fit_where([g](const SpellRecord& s) { return s.cited_flags.has(g); },
                       std::string(subdomain_name(g)));
    if (c)
      out.push_back(std::move(*c));
    else
      out.front().warnings.push_back("no spells in subdomain " + std::string(subdomain_name(g)));
  }
  return out;
}

void write_km_csv(const std::vector<KmCurve>& curves, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  csv::write_row(out, {"group", "t_days", "n_risk", "n_event", "survival"});
  for (const auto& c : curves) {
    if (c.rows.empty() || c.rows.front().time > 0.0)
      csv::write_row(out, {c.group, "0", std::to_string(c.n), "0", "1"});
    for (const auto& r : c.rows)
      csv::write_row(out, {c.group, csv::format_double(r.time), std::to_string(r.n_risk),
                           std::to_string(r.n_event), csv::format_double(r.survival)});
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace citerate
