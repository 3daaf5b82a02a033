#include "citerate/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

namespace citerate {
namespace {

constexpr double kLn2 = 0.69314718055994530942;

/// Portable draws on top of the raw engine output; the standard library
/// distributions are implementation-defined.
class Draw {
 public:
  explicit Draw(std::uint64_t seed) : rng_(seed) {}

  double uniform() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }
  double exponential() { return -std::log1p(-uniform()); }

  unsigned poisson(double mean) {
    if (mean <= 0.0) return 0;
    const double u = uniform();
    double p = std::exp(-mean), cdf = p;
    unsigned x = 0;
    while (u > cdf && x < 10000) {
      ++x;
      p *= mean / x;
      cdf += p;
    }
    return x;
  }

  template <class T>
  T categorical(const std::vector<std::pair<T, double>>& weights, double total) {
    double u = uniform() * total;
    for (const auto& [value, w] : weights) {
      if (u < w) return value;
      u -= w;
    }
    return weights.back().first;
  }

 private:
  std::mt19937_64 rng_;
};

std::string sim_id(const char* prefix, std::size_t n) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%07zu", prefix, n);
  return buf;
}

std::map<Subdomain, double> read_subdomain_map(const nlohmann::json& j, const char* key) {
  std::map<Subdomain, double> out;
  for (const auto& [name, value] : j.items()) {
    auto s = subdomain_from_name(name);
    if (!s) throw std::invalid_argument(std::string(key) + ": unknown subdomain '" + name + "'");
    out[*s] = value.get<double>();
  }
  return out;
}

nlohmann::json write_subdomain_map(const std::map<Subdomain, double>& m) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [s, v] : m) j[std::string(subdomain_name(s))] = v;
  return j;
}

}  // namespace

double SimConfig::cpc_sd() const { return std::sqrt(std::max(cpc_mean - 1.0, 0.0)); }

Day SimConfig::horizon() const {
  return start + static_cast<Day>(std::floor(horizon_years * kDaysPerYear));
}

void SimConfig::validate() const {
  if (n_patents == 0) throw std::invalid_argument("n_patents must be positive");
  if (!(horizon_years > 0.0)) throw std::invalid_argument("horizon_years must be positive");
  if (horizon() <= start) throw std::invalid_argument("horizon shorter than one day");
  if (base_rates.empty()) throw std::invalid_argument("base_rates is empty");
  for (const auto& [s, r] : base_rates)
    if (!(r > 0.0) || !std::isfinite(r))
      throw std::invalid_argument("base rate for " + std::string(subdomain_name(s)) + " must be positive");
  double total = 0.0;
  for (const auto& [s, w] : subdomain_weights) {
    if (!base_rates.contains(s))
      throw std::invalid_argument("weight given for " + std::string(subdomain_name(s)) +
                                  " which has no base rate");
    if (!(w >= 0.0)) throw std::invalid_argument("subdomain weights must be non-negative");
    total += w;
  }
  if (!subdomain_weights.empty() && !(total > 0.0))
    throw std::invalid_argument("subdomain weights sum to zero");
  if (!(extra_flag_probability >= 0.0 && extra_flag_probability <= 1.0))
    throw std::invalid_argument("extra_flag_probability must lie in [0, 1]");
  if (!(inherit_probability >= 0.0 && inherit_probability <= 1.0))
    throw std::invalid_argument("inherit_probability must lie in [0, 1]");
  if (!(cpc_mean >= 1.0)) throw std::invalid_argument("cpc_mean must be at least 1");
  if (cpc_effect != 0.0 && cpc_sd() == 0.0)
    throw std::invalid_argument("cpc_effect needs cpc_mean > 1");
  if (!(weibull_shape > 0.0)) throw std::invalid_argument("weibull_shape must be positive");
  if (effect_reversal_day && weibull_shape != 1.0)
    throw std::invalid_argument("effect reversal requires weibull_shape = 1");
}

SimConfig SimConfig::from_json(const nlohmann::json& j) {
  SimConfig c;
  c.n_patents = j.value("n_patents", c.n_patents);
  if (j.contains("start_date")) {
    auto d = parse_iso_date(j.at("start_date").get<std::string>());
    if (!d) throw std::invalid_argument("start_date is not an ISO date");
    c.start = *d;
  }
  c.horizon_years = j.value("horizon_years", c.horizon_years);
  c.seed = j.value("seed", c.seed);
  if (j.contains("base_rates")) c.base_rates = read_subdomain_map(j.at("base_rates"), "base_rates");
  if (j.contains("median_years")) {
    // Convenience: rates given by their exponential medians.
    for (auto [s, m] : read_subdomain_map(j.at("median_years"), "median_years")) c.base_rates[s] = kLn2 / m;
  }
  if (j.contains("subdomain_weights"))
    c.subdomain_weights = read_subdomain_map(j.at("subdomain_weights"), "subdomain_weights");
  c.extra_flag_probability = j.value("extra_flag_probability", c.extra_flag_probability);
  auto read_effects = [&](const nlohmann::json& e, bool ratios) {
    for (const auto& [name, value] : e.items()) {
      double v = value.get<double>();
      if (ratios) {
        if (!(v > 0.0)) throw std::invalid_argument("hazard ratio for '" + name + "' must be positive");
        v = std::log(v);
      }
      if (name == "total_cpc_classes") {
        c.cpc_effect = v;
      } else if (auto s = subdomain_from_name(name)) {
        c.flag_effects[*s] = v;
      } else {
        throw std::invalid_argument("unknown effect '" + name + "'");
      }
    }
  };
  if (j.contains("effects")) read_effects(j.at("effects"), false);
  if (j.contains("hazard_ratios")) read_effects(j.at("hazard_ratios"), true);
  c.cpc_mean = j.value("cpc_mean", c.cpc_mean);
  if (j.contains("citation_mode")) {
    const auto m = j.at("citation_mode").get<std::string>();
    if (m == "attach") c.mode = CitationMode::attach;
    else if (m == "new") c.mode = CitationMode::create;
    else throw std::invalid_argument("citation_mode must be 'attach' or 'new'");
  }
  c.inherit_probability = j.value("inherit_probability", c.inherit_probability);
  c.weibull_shape = j.value("weibull_shape", c.weibull_shape);
  if (j.contains("effect_reversal_years") && !j.at("effect_reversal_years").is_null())
    c.effect_reversal_day = j.at("effect_reversal_years").get<double>() * kDaysPerYear;
  c.validate();
  return c;
}

nlohmann::json SimConfig::to_json() const {
  nlohmann::json j;
  j["n_patents"] = n_patents;
  j["start_date"] = format_iso_date(start);
  j["horizon_years"] = horizon_years;
  j["seed"] = seed;
  j["base_rates"] = write_subdomain_map(base_rates);
  j["subdomain_weights"] = write_subdomain_map(subdomain_weights);
  j["extra_flag_probability"] = extra_flag_probability;
  nlohmann::json effects = write_subdomain_map(flag_effects);
  effects["total_cpc_classes"] = cpc_effect;
  j["effects"] = effects;
  j["cpc_mean"] = cpc_mean;
  j["citation_mode"] = mode == CitationMode::attach ? "attach" : "new";
  j["inherit_probability"] = inherit_probability;
  j["weibull_shape"] = weibull_shape;
  j["effect_reversal_years"] =
      effect_reversal_day ? nlohmann::json(*effect_reversal_day / kDaysPerYear) : nlohmann::json();
  return j;
}

SimResult simulate(const SimConfig& config) {
  config.validate();
  Draw draw(config.seed);
  const Day horizon = config.horizon();
  const Day span = horizon - config.start;

  std::vector<std::pair<Subdomain, double>> weights;
  double weight_total = 0.0;
  for (const auto& [s, rate] : config.base_rates) {
    const double w = config.subdomain_weights.empty()
                         ? 1.0
                         : (config.subdomain_weights.contains(s) ? config.subdomain_weights.at(s) : 0.0);
    weights.emplace_back(s, w);
    weight_total += w;
  }

  struct Draft {
    Patent patent;
    Subdomain primary;
  };
  auto draft_patent = [&](Day pub) {
    Draft d;
    d.patent.publication = pub;
    d.patent.filing = pub - static_cast<Day>(std::floor(draw.uniform() * 730.0));
    d.primary = draw.categorical(weights, weight_total);
    d.patent.flags.set(d.primary);
    for (auto s : kSubdomains)
      if (s != d.primary && config.base_rates.contains(s) && draw.uniform() < config.extra_flag_probability)
        d.patent.flags.set(s);
    d.patent.total_cpc_classes = 1 + static_cast<int>(draw.poisson(config.cpc_mean - 1.0));
    return d;
  };

  std::vector<Draft> drafts;
  drafts.reserve(config.n_patents);
  for (std::size_t k = 0; k < config.n_patents; ++k)
    drafts.push_back(draft_patent(config.start + static_cast<Day>(std::floor(draw.uniform() * span))));
  std::stable_sort(drafts.begin(), drafts.end(), [](const Draft& a, const Draft& b) {
    return std::pair(a.patent.publication, *a.patent.filing) < std::pair(b.patent.publication, *b.patent.filing);
  });
  for (std::size_t k = 0; k < drafts.size(); ++k) drafts[k].patent.id = sim_id("SIM", k + 1);

  std::vector<Day> pubs(drafts.size());
  for (std::size_t k = 0; k < drafts.size(); ++k) pubs[k] = drafts[k].patent.publication;

  const double sd = config.cpc_sd();
  auto linear_predictor = [&](const Draft& d) {
    double lp = 0.0;
    for (const auto& [s, b] : config.flag_effects)
      if (d.patent.flags.has(s)) lp += b;
    if (config.cpc_effect != 0.0)
      lp += config.cpc_effect * (d.patent.total_cpc_classes - config.cpc_mean) / sd;
    return lp;
  };

  // Next citation time (fractional day) for a spell starting at `s`.
  const double reversal = config.effect_reversal_day ? config.start + *config.effect_reversal_day
                                                     : std::numeric_limits<double>::infinity();
  auto next_time = [&](double s, double rate_per_day, double lp) {
    const double e = draw.exponential();
    if (config.weibull_shape != 1.0)
      return s + std::pow(e * std::exp(-lp), 1.0 / config.weibull_shape) / rate_per_day;
    const double r1 = rate_per_day * std::exp(lp);
    if (s + e / r1 <= reversal) return s + e / r1;
    const double r2 = rate_per_day * std::exp(-lp);
    const double used = s < reversal ? r1 * (reversal - s) : 0.0;
    return std::max(s, reversal) + (e - used) / r2;
  };

  CorpusBuilder builder(CorpusBuilder::DuplicatePolicy::fail);
  std::vector<Draft> leaves;
  std::vector<std::pair<std::string, std::string>> citations;
  SimResult result;
  result.horizon = horizon;

  for (std::size_t i = 0; i < drafts.size(); ++i) {
    const Draft& cited = drafts[i];
    const double rate = config.base_rates.at(cited.primary) / kDaysPerYear;
    const double lp = linear_predictor(cited);
    double s = cited.patent.publication;
    std::size_t last = i;
    for (;;) {
      const double t = next_time(s, rate, lp);
      if (!(t <= static_cast<double>(horizon))) break;
      Day day = static_cast<Day>(std::ceil(t));
      if (config.mode == CitationMode::attach) {
        std::size_t k = static_cast<std::size_t>(std::lower_bound(pubs.begin(), pubs.end(), day) - pubs.begin());
        k = std::max(k, last + 1);
        if (k >= drafts.size()) break;
        if (config.inherit_probability > 0.0 && draw.uniform() < config.inherit_probability) {
          for (std::size_t q = k; q < drafts.size() && pubs[q] < pubs[k] + 30; ++q)
            if (drafts[q].patent.flags.shares(cited.patent.flags)) {
              k = q;
              break;
            }
        }
        citations.emplace_back(drafts[k].patent.id, cited.patent.id);
        last = k;
        day = pubs[k];
      } else {
        day = std::max(day, cited.patent.publication + 1);
        if (day > horizon) break;
        Draft leaf = draft_patent(day);
        if (draw.uniform() < config.inherit_probability) leaf.patent.flags = cited.patent.flags;
        leaf.patent.id = sim_id("SIMC", leaves.size() + 1);
        citations.emplace_back(leaf.patent.id, cited.patent.id);
        leaves.push_back(std::move(leaf));
      }
      ++result.events;
      s = day;
    }
  }

  for (auto& d : drafts) builder.add_patent(std::move(d.patent));
  for (auto& d : leaves) builder.add_patent(std::move(d.patent));
  for (auto& [citing, cited] : citations) builder.add_citation(std::move(citing), std::move(cited));
  builder.add_source("simulate:" + std::string(kSimGenerator) + ":seed=" + std::to_string(config.seed), "");
  result.store = std::move(builder).build();
  if (result.events == 0)
    result.warnings.push_back("simulation produced no citations over the horizon; raise rates or horizon");
  return result;
}

SimTruth known_truth(const SimConfig& config) {
  config.validate();
  SimTruth t;
  t.seed = config.seed;
  t.cpc_mean = config.cpc_mean;
  t.cpc_sd = config.cpc_sd();
  for (const auto& [s, b] : config.flag_effects) t.beta[std::string(subdomain_name(s))] = b;
  t.beta["total_cpc_classes"] = config.cpc_effect;
  for (const auto& [name, b] : t.beta) t.hazard_ratio[name] = std::exp(b);
  for (const auto& [s, r] : config.base_rates) {
    t.base_rate[std::string(subdomain_name(s))] = r;
    t.median_years[std::string(subdomain_name(s))] = kLn2 / r;
  }
  return t;
}

nlohmann::json SimTruth::to_json() const {
  return {{"beta", beta},         {"hazard_ratio", hazard_ratio}, {"base_rate", base_rate},
          {"median_years", median_years}, {"cpc_mean", cpc_mean}, {"cpc_sd", cpc_sd},
          {"generator", generator}, {"seed", seed}};
}

void write_simulation(const SimConfig& config, const SimResult& result, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_csv(result.store, dir / "patents.csv", dir / "edges.csv");
  nlohmann::json truth = known_truth(config).to_json();
  truth["config"] = config.to_json();
  truth["horizon_date"] = format_iso_date(result.horizon);
  truth["events"] = result.events;
  std::ofstream out(dir / "truth.json", std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + (dir / "truth.json").string());
  out << truth.dump(2) << '\n';
}

}  // namespace citerate
