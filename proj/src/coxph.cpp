#include "citerate/coxph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>

#include <boost/math/special_functions/gamma.hpp>

#include "citerate/csv.hpp"

namespace citerate {
namespace {

/// Beta-independent ordering shared by every sweep over the risk sets.
struct Layout {
  std::vector<std::size_t> by_stop;   // stop descending
  std::vector<std::size_t> by_start;  // start descending
  std::vector<double> times;          // distinct event times, descending
  std::vector<std::size_t> dead_offsets;
  std::vector<std::size_t> dead;
  Eigen::MatrixXd xt;  // covariates x records, one contiguous column per record

  std::span<const std::size_t> dead_at(std::size_t k) const {
    return std::span<const std::size_t>(dead).subspan(dead_offsets[k],
                                                      dead_offsets[k + 1] - dead_offsets[k]);
  }
};

Layout make_layout(const CoxData& data) {
  const std::size_t n = data.size();
  Layout L;
  L.by_stop.resize(n);
  std::iota(L.by_stop.begin(), L.by_stop.end(), std::size_t{0});
  L.by_start = L.by_stop;
  std::stable_sort(L.by_stop.begin(), L.by_stop.end(),
                   [&](std::size_t a, std::size_t b) { return data.stop[a] > data.stop[b]; });
  std::stable_sort(L.by_start.begin(), L.by_start.end(),
                   [&](std::size_t a, std::size_t b) { return data.start[a] > data.start[b]; });
  L.dead_offsets.push_back(0);
  for (std::size_t k = 0; k < n;) {
    const double t = data.stop[L.by_stop[k]];
    bool any = false;
    for (; k < n && data.stop[L.by_stop[k]] == t; ++k) {
      const std::size_t i = L.by_stop[k];
      if (data.event[i]) {
        L.dead.push_back(i);
        any = true;
      }
    }
    if (any) {
      L.times.push_back(t);
      L.dead_offsets.push_back(L.dead.size());
    }
  }
  L.xt = data.x.transpose();
  return L;
}

/// Everything known about one distinct event time.
struct TieStats {
  double time = 0.0;
  std::size_t n_risk = 0;
  std::span<const std::size_t> dead;
  double loglik = 0.0;
  Eigen::VectorXd score;          // sum of dead x minus sum of tie-step means
  Eigen::MatrixXd info;           // sum of tie-step covariances
  double haz = 0.0;               // sum_r 1/D_r (offset scale)
  Eigen::VectorXd haz_mean;       // sum_r m_r/D_r
  double dead_haz = 0.0;          // sum_r f_r/D_r
  Eigen::VectorXd dead_haz_mean;  // sum_r f_r m_r/D_r
  Eigen::VectorXd mean_avg;       // average tie-step mean
  double breslow_increment = 0.0; // d / sum_risk exp(eta)
};

/// Walks the distinct event times from last to first, maintaining the
/// weighted sums of the risk set incrementally: records enter when
/// stop >= t and leave when start >= t. Weights are exp(eta - max eta),
/// which leaves every ratio unchanged.
template <class Visit>
void sweep(const CoxData& data, const Layout& L, const Eigen::VectorXd& beta, TieMethod ties,
           Eigen::VectorXd* weights_out, double* offset_out, Visit&& visit) {
  const std::size_t n = data.size();
  const Eigen::Index p = data.x.cols();
  const Eigen::VectorXd eta = data.x * beta;
  const double offset = n ? eta.maxCoeff() : 0.0;
  const Eigen::VectorXd w = (eta.array() - offset).exp();

  double s0 = 0.0;
  Eigen::VectorXd s1 = Eigen::VectorXd::Zero(p);
  Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd s1d(p), m(p);
  Eigen::MatrixXd s2d(p, p);
  std::size_t at_risk = 0, ps = 0, pr = 0;

  TieStats st;
  st.score.resize(p);
  st.info.resize(p, p);
  st.haz_mean.resize(p);
  st.dead_haz_mean.resize(p);
  st.mean_avg.resize(p);

  for (std::size_t k = 0; k < L.times.size(); ++k) {
    const double t = L.times[k];
    for (; ps < n && data.stop[L.by_stop[ps]] >= t; ++ps) {
      const std::size_t i = L.by_stop[ps];
      const auto xi = L.xt.col(static_cast<Eigen::Index>(i));
      s0 += w[i];
      s1.noalias() += w[i] * xi;
      s2.noalias() += w[i] * xi * xi.transpose();
      ++at_risk;
    }
    for (; pr < n && data.start[L.by_start[pr]] >= t; ++pr) {
      const std::size_t i = L.by_start[pr];
      const auto xi = L.xt.col(static_cast<Eigen::Index>(i));
      s0 -= w[i];
      s1.noalias() -= w[i] * xi;
      s2.noalias() -= w[i] * xi * xi.transpose();
      --at_risk;
    }
    if (at_risk == 0) {
      s0 = 0.0;
      s1.setZero();
      s2.setZero();
    }

    st.time = t;
    st.n_risk = at_risk;
    st.dead = L.dead_at(k);
    const std::size_t d = st.dead.size();
    double s0d = 0.0, eta_dead = 0.0;
    s1d.setZero();
    s2d.setZero();
    st.score.setZero();
    for (std::size_t i : st.dead) {
      const auto xi = L.xt.col(static_cast<Eigen::Index>(i));
      s0d += w[i];
      s1d.noalias() += w[i] * xi;
      s2d.noalias() += w[i] * xi * xi.transpose();
      eta_dead += eta[static_cast<Eigen::Index>(i)] - offset;
      st.score += xi;
    }

    st.loglik = eta_dead;
    st.info.setZero();
    st.haz = 0.0;
    st.haz_mean.setZero();
    st.dead_haz = 0.0;
    st.dead_haz_mean.setZero();
    st.mean_avg.setZero();
    for (std::size_t r = 0; r < d; ++r) {
      const double f = ties == TieMethod::efron ? static_cast<double>(r) / static_cast<double>(d) : 0.0;
      const double D = s0 - f * s0d;
      m = (s1 - f * s1d) / D;
      st.loglik -= std::log(D);
      st.mean_avg += m;
      st.info.noalias() += (s2 - f * s2d) / D - m * m.transpose();
      st.haz += 1.0 / D;
      st.haz_mean += m / D;
      st.dead_haz += f / D;
      st.dead_haz_mean += (f / D) * m;
    }
    st.score -= st.mean_avg;
    st.mean_avg /= static_cast<double>(d);
    st.breslow_increment = static_cast<double>(d) / s0 * std::exp(-offset);
    visit(st);
  }
  if (weights_out) *weights_out = w;
  if (offset_out) *offset_out = offset;
}

CoxEvaluation evaluate(const CoxData& data, const Layout& L, const Eigen::VectorXd& beta,
                       TieMethod ties) {
  const Eigen::Index p = data.x.cols();
  CoxEvaluation ev;
  ev.score = Eigen::VectorXd::Zero(p);
  ev.information = Eigen::MatrixXd::Zero(p, p);
  sweep(data, L, beta, ties, nullptr, nullptr, [&](const TieStats& st) {
    ev.loglik += st.loglik;
    ev.score += st.score;
    ev.information += st.info;
  });
  return ev;
}

Eigen::MatrixXd residuals(const CoxData& data, const Layout& L, const Eigen::VectorXd& beta,
                          TieMethod ties) {
  const std::size_t n = data.size();
  const Eigen::Index p = data.x.cols();
  const std::size_t K = L.times.size();

  // Per event time, in ascending time order.
  std::vector<double> tasc(K), dead_haz(K);
  std::vector<double> cum_c(K + 1, 0.0);
  Eigen::MatrixXd cum_a = Eigen::MatrixXd::Zero(p, static_cast<Eigen::Index>(K + 1));
  Eigen::MatrixXd dead_haz_mean(p, static_cast<Eigen::Index>(K)), mean_avg(p, static_cast<Eigen::Index>(K));
  std::vector<double> haz(K);
  Eigen::MatrixXd haz_mean(p, static_cast<Eigen::Index>(K));
  Eigen::VectorXd w;
  std::size_t seen = 0;
  sweep(data, L, beta, ties, &w, nullptr, [&](const TieStats& st) {
    const std::size_t a = K - 1 - seen++;
    const auto ai = static_cast<Eigen::Index>(a);
    tasc[a] = st.time;
    haz[a] = st.haz;
    haz_mean.col(ai) = st.haz_mean;
    dead_haz[a] = st.dead_haz;
    dead_haz_mean.col(ai) = st.dead_haz_mean;
    mean_avg.col(ai) = st.mean_avg;
  });
  for (std::size_t a = 0; a < K; ++a) {
    const auto ai = static_cast<Eigen::Index>(a);
    cum_c[a + 1] = cum_c[a] + haz[a];
    cum_a.col(ai + 1) = cum_a.col(ai) + haz_mean.col(ai);
  }

  Eigen::MatrixXd out(static_cast<Eigen::Index>(n), p);
  Eigen::VectorXd u(p);
  for (std::size_t i = 0; i < n; ++i) {
    const auto xi = L.xt.col(static_cast<Eigen::Index>(i));
    const auto hi = static_cast<std::size_t>(std::upper_bound(tasc.begin(), tasc.end(), data.stop[i]) - tasc.begin());
    const auto lo = static_cast<std::size_t>(std::upper_bound(tasc.begin(), tasc.end(), data.start[i]) - tasc.begin());
    const double wi = w[static_cast<Eigen::Index>(i)];
    u = -wi * ((cum_c[hi] - cum_c[lo]) * xi -
               (cum_a.col(static_cast<Eigen::Index>(hi)) - cum_a.col(static_cast<Eigen::Index>(lo))));
    if (data.event[i]) {
      const auto k = static_cast<Eigen::Index>(hi - 1);
      u += xi - mean_avg.col(k);
      u += wi * (dead_haz[hi - 1] * xi - dead_haz_mean.col(k));
    }
    out.row(static_cast<Eigen::Index>(i)) = u.transpose();
  }
  return out;
}

Eigen::VectorXd column_ranges(const Eigen::MatrixXd& x) {
  if (x.rows() == 0) return Eigen::VectorXd::Zero(x.cols());
  return x.colwise().maxCoeff().transpose() - x.colwise().minCoeff().transpose();
}

double normal_two_sided(double z) { return std::erfc(std::abs(z) / std::sqrt(2.0)); }

}  // namespace

std::string_view tie_method_name(TieMethod t) { return t == TieMethod::efron ? "efron" : "breslow"; }

std::optional<TieMethod> tie_method_from_name(std::string_view name) {
  if (name == "efron") return TieMethod::efron;
  if (name == "breslow") return TieMethod::breslow;
  return std::nullopt;
}

std::size_t CoxData::event_count() const {
  return static_cast<std::size_t>(std::count_if(event.begin(), event.end(), [](auto e) { return e != 0; }));
}

void CoxData::validate() const {
  const std::size_t n = stop.size();
  if (start.size() != n || event.size() != n || static_cast<std::size_t>(x.rows()) != n)
    throw std::invalid_argument("Cox data columns differ in length");
  if (!cluster.empty() && cluster.size() != n)
    throw std::invalid_argument("Cox cluster ids differ in length");
  if (!names.empty() && names.size() != static_cast<std::size_t>(x.cols()))
    throw std::invalid_argument("Cox covariate names do not match columns");
  for (std::size_t i = 0; i < n; ++i)
    if (!(start[i] < stop[i]))
      throw std::invalid_argument("record " + std::to_string(i) + " has start >= stop");
  if (!x.allFinite()) throw std::invalid_argument("non-finite covariate value");
}

CoxData CoxData::select(std::span<const std::string> columns) const {
  CoxData out;
  out.start = start;
  out.stop = stop;
  out.event = event;
  out.cluster = cluster;
  out.source_digest = source_digest;
  out.dropped_zero_length = dropped_zero_length;
  out.x.resize(x.rows(), static_cast<Eigen::Index>(columns.size()));
  for (std::size_t c = 0; c < columns.size(); ++c) {
    auto it = std::find(names.begin(), names.end(), columns[c]);
    if (it == names.end()) throw std::invalid_argument("unknown covariate '" + columns[c] + "'");
    out.x.col(static_cast<Eigen::Index>(c)) = x.col(it - names.begin());
    out.names.push_back(columns[c]);
  }
  return out;
}

CoxData make_cox_data(const SpellMatrix& matrix, std::span<const std::string> covariates,
                      TimeScale scale) {
  std::vector<Eigen::Index> cols;
  for (const auto& name : covariates) {
    auto c = matrix.column(name);
    if (!c) throw std::invalid_argument("covariate '" + name + "' is not in the spell matrix");
    cols.push_back(*c);
  }
  CoxData d;
  d.names.assign(covariates.begin(), covariates.end());
  d.source_digest = spell_digest(matrix);
  std::vector<std::size_t> keep;
  for (std::size_t r = 0; r < matrix.spells.size(); ++r) {
    if (matrix.spells[r].duration() > 0)
      keep.push_back(r);
    else
      ++d.dropped_zero_length;
  }
  d.x.resize(static_cast<Eigen::Index>(keep.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t k = 0; k < keep.size(); ++k) {
    const SpellRecord& s = matrix.spells[keep[k]];
    d.start.push_back(scale == TimeScale::calendar ? static_cast<double>(s.start) : 0.0);
    d.stop.push_back(scale == TimeScale::calendar ? static_cast<double>(s.stop)
                                                  : static_cast<double>(s.duration()));
    d.event.push_back(s.event ? 1 : 0);
    d.cluster.push_back(static_cast<std::int64_t>(s.cited_node));
    for (std::size_t c = 0; c < cols.size(); ++c)
      d.x(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(c)) =
          matrix.values(static_cast<Eigen::Index>(keep[k]), cols[c]);
  }
  return d;
}

CoxEvaluation cox_evaluate(const CoxData& data, const Eigen::VectorXd& beta, TieMethod ties) {
  data.validate();
  return evaluate(data, make_layout(data), beta, ties);
}

Eigen::MatrixXd score_residuals(const CoxData& data, const Eigen::VectorXd& beta, TieMethod ties) {
  data.validate();
  return residuals(data, make_layout(data), beta, ties);
}

Eigen::VectorXd FitResult::p_values() const {
  const Eigen::VectorXd s = reported_se();
  Eigen::VectorXd p(beta.size());
  for (Eigen::Index j = 0; j < beta.size(); ++j) p[j] = normal_two_sided(beta[j] / s[j]);
  return p;
}

std::optional<Eigen::Index> FitResult::index_of(std::string_view name) const {
  for (std::size_t j = 0; j < names.size(); ++j)
    if (names[j] == name) return static_cast<Eigen::Index>(j);
  return std::nullopt;
}

FitResult cox_fit(const CoxData& data, const CoxOptions& opt) {
  data.validate();
  const Eigen::Index p = data.x.cols();
  FitResult fit;
  fit.names = data.names;
  if (fit.names.empty())
    for (Eigen::Index j = 0; j < p; ++j) fit.names.push_back("x" + std::to_string(j + 1));
  fit.n_records = data.size();
  fit.n_events = data.event_count();
  fit.ties = opt.ties;
  fit.baseline_label = opt.baseline_label;
  fit.source_digest = data.source_digest;
  fit.dropped_zero_length = data.dropped_zero_length;
  if (fit.n_events == 0) throw std::invalid_argument("cox_fit: no events");

  const Layout L = make_layout(data);
  const Eigen::VectorXd range = column_ranges(data.x);
  for (Eigen::Index j = 0; j < p; ++j)
    if (range[j] == 0.0)
      throw std::invalid_argument("covariate '" + fit.names[static_cast<std::size_t>(j)] +
                                  "' is constant");

  auto check_divergence = [&](const Eigen::VectorXd& b) {
    Eigen::Index worst = -1;
    double worst_v = opt.divergence_bound;
    for (Eigen::Index j = 0; j < p; ++j) {
      const double v = std::abs(b[j]) * range[j];
      if (v > worst_v) {
        worst_v = v;
        worst = j;
      }
    }
    if (worst >= 0) {
      const auto& name = fit.names[static_cast<std::size_t>(worst)];
      throw SeparationError(name, "coefficient of '" + name +
                                      "' diverges (monotone likelihood); the covariate separates "
                                      "events from non-events");
    }
  };

  auto newton_step = [&](const CoxEvaluation& ev) {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(ev.information);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || ldlt.rcond() < 1e-13)
      throw std::invalid_argument("information matrix is singular; covariates are collinear");
    return Eigen::VectorXd(ldlt.solve(ev.score));
  };

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  CoxEvaluation ev = evaluate(data, L, beta, opt.ties);
  fit.loglik_null = ev.loglik;

  for (int iter = 1; iter <= opt.max_iterations; ++iter) {
    fit.iterations = iter;
    Eigen::VectorXd step = newton_step(ev);
    Eigen::VectorXd next = beta + step;
    CoxEvaluation ev_next = evaluate(data, L, next, opt.ties);
    for (int h = 0; h < opt.max_halvings && !(std::isfinite(ev_next.loglik) && ev_next.loglik >= ev.loglik); ++h) {
      step /= 2.0;
      next = beta + step;
      ev_next = evaluate(data, L, next, opt.ties);
    }
    if (!(std::isfinite(ev_next.loglik) && ev_next.loglik >= ev.loglik)) {
      // No ascent along the Newton direction: beta is as good as it gets.
      fit.converged = true;
      break;
    }
    const double change = std::abs(ev_next.loglik - ev.loglik) / std::max(1.0, std::abs(ev.loglik));
    beta = std::move(next);
    ev = std::move(ev_next);
    check_divergence(beta);
    if (change < opt.tolerance) {
      fit.converged = true;
      break;
    }
  }
  if (fit.converged) {
    // One more Newton step drives the gradient to round-off.
    Eigen::VectorXd polished = beta + newton_step(ev);
    CoxEvaluation ev_p = evaluate(data, L, polished, opt.ties);
    if (std::isfinite(ev_p.loglik) && ev_p.loglik >= ev.loglik) {
      beta = std::move(polished);
      ev = std::move(ev_p);
    }
    // A coefficient still moving after the likelihood has flattened is
    // running off to infinity.
    const Eigen::VectorXd rest = Eigen::LDLT<Eigen::MatrixXd>(ev.information).solve(ev.score);
    for (Eigen::Index j = 0; j < p; ++j) {
      if (std::isfinite(rest[j]) && std::abs(rest[j]) < 1e-4 * std::max(1.0, std::abs(beta[j]))) continue;
      const auto& name = fit.names[static_cast<std::size_t>(j)];
      throw SeparationError(name, "coefficient of '" + name +
                                      "' diverges (monotone likelihood); the covariate separates "
                                      "events from non-events");
    }
  } else {
    fit.warnings.push_back("did not converge within " + std::to_string(opt.max_iterations) +
                           " iterations; returning the last iterate");
  }

  fit.beta = beta;
  fit.loglik = ev.loglik;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(ev.information);
  fit.covariance = ldlt.solve(Eigen::MatrixXd::Identity(p, p));
  fit.score_norm = std::sqrt(std::max(0.0, ev.score.dot(fit.covariance * ev.score)));

  std::map<std::int64_t, Eigen::Index> cluster_row;
  if (data.cluster.empty()) {
    fit.n_clusters = data.size();
  } else {
    for (auto c : data.cluster) cluster_row.emplace(c, 0);
    Eigen::Index row = 0;
    for (auto& [c, r] : cluster_row) r = row++;
    fit.n_clusters = cluster_row.size();
  }
  if (opt.robust) {
    const Eigen::MatrixXd resid = residuals(data, L, beta, opt.ties);
    Eigen::MatrixXd meat;
    if (data.cluster.empty()) {
      meat = resid.transpose() * resid;
    } else {
      Eigen::MatrixXd summed = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(cluster_row.size()), p);
      for (std::size_t i = 0; i < data.size(); ++i)
        summed.row(cluster_row[data.cluster[i]]) += resid.row(static_cast<Eigen::Index>(i));
      meat = summed.transpose() * summed;
    }
    fit.robust_covariance = fit.covariance * meat * fit.covariance;
  }
  return fit;
}

double chi_square_upper(double statistic, int df) {
  if (df <= 0) return 1.0;
  if (statistic <= 0.0) return 1.0;
  return boost::math::gamma_q(static_cast<double>(df) / 2.0, statistic / 2.0);
}

LrTest lr_test(const FitResult& restricted, const FitResult& full, Nesting nesting) {
  if (!restricted.source_digest.empty() && !full.source_digest.empty() &&
      restricted.source_digest != full.source_digest)
    throw std::invalid_argument("lr_test: models were fitted on different data");
  if (restricted.n_records != full.n_records || restricted.n_events != full.n_events)
    throw std::invalid_argument("lr_test: models were fitted on different data");
  LrTest out;
  out.nesting = nesting;
  const int df = static_cast<int>(full.names.size()) - static_cast<int>(restricted.names.size());
  if (nesting == Nesting::strict) {
    for (const auto& name : restricted.names)
      if (std::find(full.names.begin(), full.names.end(), name) == full.names.end())
        throw std::invalid_argument("lr_test: '" + name +
                                    "' is not in the full model; declare quasi nesting to compare");
  }
  if (df < 0) throw std::invalid_argument("lr_test: full model has fewer covariates");
  if (nesting == Nesting::quasi && df == 0 && restricted.names != full.names)
    throw std::invalid_argument("lr_test: quasi-nested models need a positive df");
  out.df = df;
  out.statistic = std::max(0.0, 2.0 * (full.loglik - restricted.loglik));
  out.p_value = chi_square_upper(out.statistic, df);
  return out;
}

std::optional<TimeTransform> time_transform_from_name(std::string_view name) {
  if (name == "km") return TimeTransform::km;
  if (name == "rank") return TimeTransform::rank;
  if (name == "identity") return TimeTransform::identity;
  return std::nullopt;
}

SchoenfeldReport schoenfeld_test(const FitResult& fit, const CoxData& data, TimeTransform transform) {
  data.validate();
  const Eigen::Index p = data.x.cols();
  if (fit.beta.size() != p) throw std::invalid_argument("schoenfeld_test: fit does not match data");
  const std::size_t n_events = data.event_count();
  if (n_events < static_cast<std::size_t>(p) + 1)
    throw std::invalid_argument("schoenfeld_test: need more events than covariates");

  struct EventTime {
    double time;
    std::size_t n_risk;
    std::vector<std::size_t> dead;
    Eigen::VectorXd score;
    Eigen::MatrixXd info;
    Eigen::VectorXd mean_avg;
  };
  std::vector<EventTime> ev;
  const Layout L = make_layout(data);
  sweep(data, L, fit.beta, fit.ties, nullptr, nullptr, [&](const TieStats& st) {
    ev.push_back({st.time, st.n_risk, {st.dead.begin(), st.dead.end()}, st.score, st.info, st.mean_avg});
  });
  std::reverse(ev.begin(), ev.end());  // ascending time

  std::vector<double> g(ev.size());
  double s = 1.0, rank_base = 0.0;
  for (std::size_t k = 0; k < ev.size(); ++k) {
    const double d = static_cast<double>(ev[k].dead.size());
    switch (transform) {
      case TimeTransform::km:
        s *= 1.0 - d / static_cast<double>(ev[k].n_risk);
        g[k] = 1.0 - s;
        break;
      case TimeTransform::rank:
        g[k] = rank_base + (d + 1.0) / 2.0;
        break;
      case TimeTransform::identity:
        g[k] = ev[k].time;
        break;
    }
    rank_base += d;
  }
  double gbar = 0.0;
  for (std::size_t k = 0; k < ev.size(); ++k) gbar += g[k] * static_cast<double>(ev[k].dead.size());
  gbar /= static_cast<double>(n_events);
  for (double& v : g) v -= gbar;

  Eigen::VectorXd u = Eigen::VectorXd::Zero(p);
  Eigen::MatrixXd i11 = Eigen::MatrixXd::Zero(p, p), i12 = i11, i22 = i11;
  for (std::size_t k = 0; k < ev.size(); ++k) {
    u += g[k] * ev[k].score;
    i11 += ev[k].info;
    i12 += g[k] * ev[k].info;
    i22 += g[k] * g[k] * ev[k].info;
  }
  Eigen::LDLT<Eigen::MatrixXd> i11_ldlt(i11);
  const Eigen::MatrixXd cond = i22 - i12.transpose() * i11_ldlt.solve(i12);

  // Scaled residuals for the correlation column.
  const Eigen::MatrixXd& V = fit.covariance;
  std::vector<double> gk;
  std::vector<Eigen::VectorXd> scaled;
  for (std::size_t k = 0; k < ev.size(); ++k)
    for (std::size_t i : ev[k].dead) {
      gk.push_back(g[k]);
      const Eigen::VectorXd r = data.x.row(static_cast<Eigen::Index>(i)).transpose() - ev[k].mean_avg;
      scaled.push_back(fit.beta + static_cast<double>(n_events) * (V * r));
    }

  SchoenfeldReport rep;
  rep.transform = transform;
  rep.n_events = n_events;
  const double mg = std::accumulate(gk.begin(), gk.end(), 0.0) / static_cast<double>(gk.size());
  for (Eigen::Index j = 0; j < p; ++j) {
    SchoenfeldRow row;
    row.name = j < static_cast<Eigen::Index>(fit.names.size()) ? fit.names[static_cast<std::size_t>(j)]
                                                               : "x" + std::to_string(j + 1);
    double ms = 0.0;
    for (const auto& sv : scaled) ms += sv[j];
    ms /= static_cast<double>(scaled.size());
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t e = 0; e < scaled.size(); ++e) {
      sxy += (gk[e] - mg) * (scaled[e][j] - ms);
      sxx += (gk[e] - mg) * (gk[e] - mg);
      syy += (scaled[e][j] - ms) * (scaled[e][j] - ms);
    }
    row.rho = (sxx > 0 && syy > 0) ? sxy / std::sqrt(sxx * syy) : 0.0;
    row.chisq = cond(j, j) > 0 ? u[j] * u[j] / cond(j, j) : 0.0;
    row.df = 1;
    row.p_value = chi_square_upper(row.chisq, 1);
    rep.rows.push_back(std::move(row));
  }
  SchoenfeldRow global;
  global.name = "GLOBAL";
  global.rho = std::numeric_limits<double>::quiet_NaN();
  Eigen::LDLT<Eigen::MatrixXd> cond_ldlt(cond);
  global.chisq = std::max(0.0, u.dot(cond_ldlt.solve(u)));
  global.df = static_cast<int>(p);
  global.p_value = chi_square_upper(global.chisq, global.df);
  rep.rows.push_back(std::move(global));
  return rep;
}

double BaselineHazard::at(double t) const {
  auto it = std::upper_bound(time.begin(), time.end(), t);
  return it == time.begin() ? 0.0 : cumhaz[static_cast<std::size_t>(it - time.begin()) - 1];
}

double BaselineHazard::survival(double t, double linear_predictor) const {
  return std::exp(-at(t) * std::exp(linear_predictor));
}

BaselineHazard breslow_baseline(const FitResult& fit, const CoxData& data) {
  data.validate();
  if (fit.beta.size() != data.x.cols())
    throw std::invalid_argument("breslow_baseline: fit does not match data");
  const Layout L = make_layout(data);
  std::vector<std::pair<double, double>> inc;
  sweep(data, L, fit.beta, fit.ties, nullptr, nullptr,
        [&](const TieStats& st) { inc.emplace_back(st.time, st.breslow_increment); });
  std::reverse(inc.begin(), inc.end());
  BaselineHazard h;
  double cum = 0.0;
  for (auto [t, dh] : inc) {
    cum += dh;
    h.time.push_back(t);
    h.cumhaz.push_back(cum);
  }
  return h;
}

std::vector<PartialEffectCurve> partial_effects(const FitResult& fit, const BaselineHazard& baseline,
                                                std::string_view covariate,
                                                std::span<const double> values) {
  auto j = fit.index_of(covariate);
  if (!j) throw std::invalid_argument("partial_effects: unknown covariate '" + std::string(covariate) + "'");
  std::vector<PartialEffectCurve> out;
  for (double v : values) {
    PartialEffectCurve c;
    c.label = std::string(covariate) + "=" + csv::format_double(v);
    c.value = v;
    const double lp = fit.beta[*j] * v;
    c.time = baseline.time;
    for (double H : baseline.cumhaz) c.survival.push_back(std::exp(-H * std::exp(lp)));
    out.push_back(std::move(c));
  }
  return out;
}

Concordance concordance(const FitResult& fit, const CoxData& data) {
  data.validate();
  const std::size_t n = data.size();
  Concordance out;
  const Eigen::VectorXd risk = data.x * fit.beta;

  std::vector<double> sorted_risk(risk.data(), risk.data() + n);
  std::sort(sorted_risk.begin(), sorted_risk.end());
  sorted_risk.erase(std::unique(sorted_risk.begin(), sorted_risk.end()), sorted_risk.end());
  const std::size_t m = sorted_risk.size();
  auto rank_of = [&](double r) {
    return static_cast<std::size_t>(std::lower_bound(sorted_risk.begin(), sorted_risk.end(), r) -
                                    sorted_risk.begin());
  };
  // Fenwick tree of counts per risk rank over records already "later".
  std::vector<double> tree(m + 1, 0.0);
  double inserted = 0.0;
  auto add = [&](std::size_t r) {
    for (std::size_t i = r + 1; i <= m; i += i & (~i + 1)) tree[i] += 1.0;
    inserted += 1.0;
  };
  auto prefix = [&](std::size_t r) {  // count with rank < r
    double s = 0.0;
    for (std::size_t i = r; i > 0; i -= i & (~i + 1)) s += tree[i];
    return s;
  };

  std::vector<double> duration(n);
  for (std::size_t i = 0; i < n; ++i) duration[i] = data.stop[i] - data.start[i];
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return duration[a] > duration[b]; });

  std::size_t censored = 0;
  for (std::size_t k = 0; k < n;) {
    std::size_t end = k;
    while (end < n && duration[order[end]] == duration[order[k]]) ++end;
    // Censorings at this time count as surviving longer than the events.
    for (std::size_t q = k; q < end; ++q)
      if (!data.event[order[q]]) {
        add(rank_of(risk[static_cast<Eigen::Index>(order[q])]));
        ++censored;
      }
    for (std::size_t q = k; q < end; ++q) {
      const std::size_t i = order[q];
      if (!data.event[i]) continue;
      const std::size_t r = rank_of(risk[static_cast<Eigen::Index>(i)]);
      const double lower = prefix(r);
      const double equal = prefix(r + 1) - lower;
      out.comparable += inserted;
      out.concordant += lower;
      out.tied_risk += equal;
    }
    for (std::size_t q = k; q < end; ++q)
      if (data.event[order[q]]) add(rank_of(risk[static_cast<Eigen::Index>(order[q])]));
    k = end;
  }
  if (out.comparable > 0)
    out.c_index = (out.concordant + 0.5 * out.tied_risk) / out.comparable;
  else
    out.warnings.push_back("no comparable pairs; concordance undefined");
  if (n > 0 && 2 * censored >= n)
    out.warnings.push_back("at least half of the records are censored; concordance is pulled toward 0.5");
  return out;
}

void write_schoenfeld_csv(const SchoenfeldReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  csv::write_row(out, {"covariate", "rho", "chisq", "df", "p"});
  for (const auto& r : report.rows)
    csv::write_row(out, {r.name, std::isnan(r.rho) ? "" : csv::format_double(r.rho),
                         csv::format_double(r.chisq), std::to_string(r.df),
                         csv::format_double(r.p_value)});
}

void write_partial_effect_csv(const std::vector<PartialEffectCurve>& curves,
                              const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  csv::write_row(out, {"profile", "t", "survival"});
  for (const auto& c : curves)
    for (std::size_t k = 0; k < c.time.size(); ++k)
      csv::write_row(out, {c.label, csv::format_double(c.time[k]), csv::format_double(c.survival[k])});
}

}  // namespace citerate
