#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "citerate/events.hpp"

namespace citerate {

enum class TieMethod { breslow, efron };
std::string_view tie_method_name(TieMethod t);
std::optional<TieMethod> tie_method_from_name(std::string_view name);

/// Calendar: each spell is at risk on (start, stop] in calendar days.
/// Gap: each spell is at risk on (0, stop - start], the time since the
/// previous citation.
enum class TimeScale { calendar, gap };

/// Counting-process input: record i is at risk on (start[i], stop[i]] and
/// has an event at stop[i] when event[i] != 0.
struct CoxData {
  std::vector<double> start;
  std::vector<double> stop;
  std::vector<std::uint8_t> event;
  Eigen::MatrixXd x;                  // records x covariates
  std::vector<std::int64_t> cluster;  // empty: every record is its own cluster
  std::vector<std::string> names;
  std::string source_digest;          // identifies the spell matrix
  std::size_t dropped_zero_length = 0;

  std::size_t size() const { return stop.size(); }
  std::size_t event_count() const;
  /// Throws std::invalid_argument on inconsistent lengths or start >= stop.
  void validate() const;
  /// Same records restricted to the named columns (in the given order).
  CoxData select(std::span<const std::string> columns) const;
};

/// Cox input from spells: the listed covariate columns, clusters by cited
/// patent. Zero-length spells cannot be at risk and are dropped (counted).
CoxData make_cox_data(const SpellMatrix& matrix, std::span<const std::string> covariates,
                      TimeScale scale = TimeScale::calendar);

struct CoxEvaluation {
  double loglik = 0.0;
  Eigen::VectorXd score;        // gradient of the log partial likelihood
  Eigen::MatrixXd information;  // negative Hessian
};

/// Log partial likelihood with its first and second derivatives.
CoxEvaluation cox_evaluate(const CoxData& data, const Eigen::VectorXd& beta, TieMethod ties);

/// Per-record score residuals (records x covariates); rows sum to the score.
Eigen::MatrixXd score_residuals(const CoxData& data, const Eigen::VectorXd& beta, TieMethod ties);

struct CoxOptions {
  TieMethod ties = TieMethod::efron;
  bool robust = true;  // cluster-robust sandwich covariance
  int max_iterations = 100;
  double tolerance = 1e-9;  // relative change of the log partial likelihood
  int max_halvings = 10;
  /// |beta_j| * range(x_j) above this is treated as a diverging coefficient.
  double divergence_bound = 25.0;
  std::string baseline_label;  // dropped reference dummy, if any
};

struct FitResult {
  std::vector<std::string> names;
  Eigen::VectorXd beta;
  Eigen::MatrixXd covariance;         // inverse information
  Eigen::MatrixXd robust_covariance;  // empty unless robust
  double loglik = 0.0;
  double loglik_null = 0.0;
  double score_norm = 0.0;  // sqrt(g' I^-1 g) at beta
  int iterations = 0;
  bool converged = false;
  std::size_t n_records = 0;
  std::size_t n_events = 0;
  std::size_t n_clusters = 0;
  std::size_t dropped_zero_length = 0;
  TieMethod ties = TieMethod::efron;
  std::string baseline_label;
  std::string source_digest;
  std::vector<std::string> warnings;

  bool robust() const { return robust_covariance.size() > 0; }
  Eigen::VectorXd hazard_ratio() const { return beta.array().exp(); }
  Eigen::VectorXd se() const { return covariance.diagonal().cwiseSqrt(); }
  Eigen::VectorXd robust_se() const { return robust_covariance.diagonal().cwiseSqrt(); }
  /// Robust standard errors when available, model-based otherwise.
  Eigen::VectorXd reported_se() const { return robust() ? robust_se() : se(); }
  /// Two-sided Wald p-values from reported_se().
  Eigen::VectorXd p_values() const;
  std::optional<Eigen::Index> index_of(std::string_view name) const;
};

/// Thrown when a coefficient diverges (monotone likelihood).
class SeparationError : public std::runtime_error {
 public:
  SeparationError(std::string covariate, const std::string& what)
      : std::runtime_error(what), covariate_(std::move(covariate)) {}
  const std::string& covariate() const { return covariate_; }

 private:
  std::string covariate_;
};

/// Newton-Raphson with step halving from beta = 0. Throws
/// std::invalid_argument without events, SeparationError on divergence.
/// Non-convergence within max_iterations is flagged, not thrown.
FitResult cox_fit(const CoxData& data, const CoxOptions& options = {});

enum class Nesting { strict, quasi };

struct LrTest {
  double statistic = 0.0;
  int df = 0;
  double p_value = 1.0;
  Nesting nesting = Nesting::strict;
};

/// 2 (ll_full - ll_restricted) against chi-square(df). Strict nesting needs
/// the restricted covariates to be a subset of the full ones; quasi nesting
/// only needs the same data and more covariates. Throws
/// std::invalid_argument otherwise.
LrTest lr_test(const FitResult& restricted, const FitResult& full, Nesting nesting = Nesting::strict);

/// Upper tail of chi-square with `df` degrees of freedom; 1 for df == 0.
double chi_square_upper(double statistic, int df);

enum class TimeTransform { km, rank, identity };
std::optional<TimeTransform> time_transform_from_name(std::string_view name);

struct SchoenfeldRow {
  std::string name;  // "GLOBAL" for the joint test
  double rho = 0.0;  // correlation of scaled residuals with g(t); NaN for GLOBAL
  double chisq = 0.0;
  int df = 1;
  double p_value = 1.0;
};

struct SchoenfeldReport {
  TimeTransform transform = TimeTransform::km;
  std::vector<SchoenfeldRow> rows;  // covariates, then GLOBAL
  std::size_t n_events = 0;
};

/// Score test of H0: no interaction between each covariate and g(t),
/// evaluated at the fitted beta. Throws std::invalid_argument when there
/// are fewer events than covariates.
SchoenfeldReport schoenfeld_test(const FitResult& fit, const CoxData& data,
                                 TimeTransform transform = TimeTransform::km);

/// Breslow cumulative baseline hazard at covariates = 0.
struct BaselineHazard {
  std::vector<double> time;    // ascending event times
  std::vector<double> cumhaz;  // H0 at each time

  double at(double t) const;
  /// exp(-H0(t) * exp(linear_predictor))
  double survival(double t, double linear_predictor) const;
};

BaselineHazard breslow_baseline(const FitResult& fit, const CoxData& data);

struct PartialEffectCurve {
  std::string label;
  double value = 0.0;  // covariate value on the fitted scale
  std::vector<double> time;
  std::vector<double> survival;
};

/// Survival curves with `covariate` set to each of `values` and every other
/// covariate at 0 (the mean on a standardized scale).
std::vector<PartialEffectCurve> partial_effects(const FitResult& fit, const BaselineHazard& baseline,
                                                std::string_view covariate,
                                                std::span<const double> values);

struct Concordance {
  std::optional<double> c_index;
  double comparable = 0.0;
  double concordant = 0.0;
  double tied_risk = 0.0;
  std::vector<std::string> warnings;
};

/// Harrell's C on spell durations (stop - start) with risk score x'beta.
Concordance concordance(const FitResult& fit, const CoxData& data);

void write_schoenfeld_csv(const SchoenfeldReport& report, const std::filesystem::path& path);
void write_partial_effect_csv(const std::vector<PartialEffectCurve>& curves,
                              const std::filesystem::path& path);

}  // namespace citerate
