#pragma once

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qcroute/estimator.hpp"
#include "qcroute/pool.hpp"
#include "qcroute/router.hpp"

namespace qcroute {

// One swept operating point: realized average cost and average quality (raw
// metric units) plus per-model selection fractions.
struct DeferralPoint {
  double lambda = 0.0;
  double avg_cost = 0.0;
  double avg_quality = 0.0;
  std::map<std::string, double> rates;
};

// Points sorted by strictly increasing lambda; avg_cost is nonincreasing
// along the sweep.
struct DeferralCurve {
  std::vector<DeferralPoint> points;
};

struct TTestResult {
  double t = 0.0;
  double dof = 0.0;  // Welch-Satterthwaite, real-valued
  double p = 1.0;    // two-sided
};

// Empirical (Q, C): mean raw true label of the chosen model and mean chosen
// cost, summed in prompt order. Decisions must cover exactly the split.
std::pair<double, double> avg_quality_cost(const std::vector<RouteDecision>& decisions,
                                           const Dataset& ds, Split split,
                                           const RoutingPool& pool);

// Fraction of decisions sent to each pool model; zero-selected models are
// present with rate 0.
std::map<std::string, double> selection_rates(const std::vector<RouteDecision>& decisions,
                                              const RoutingPool& pool);

DeferralCurve deferral_curve(const Estimator& estimator, const Dataset& ds, Split split,
                             const RoutingPool& pool, std::span<const double> lambdas);

// Same sweep but routed on scaled true labels (the oracle skyline).
DeferralCurve oracle_deferral_curve(const Dataset& ds, Split split, const RoutingPool& pool,
                                    std::span<const double> lambdas, const LabelScaler& scaler);

// Quality-neutral cost: the percentage of ref_cost at which the curve's
// monotone upper envelope (piecewise-linear in (C, Q), sorted by C) first
// reaches ref_quality. Empty when the curve never reaches it.
std::optional<double> qnc(const DeferralCurve& curve, double ref_cost, double ref_quality);

// Welch's two-sample t-test, two-sided p via the regularized incomplete beta
// function. Throws DegenerateError when both sample variances are zero.
TTestResult welch_ttest(std::span<const double> a, std::span<const double> b);

// I_x(a, b) evaluated by the Lentz continued fraction, relative accuracy
// better than 1e-10 on the tested domain. Exposed for direct verification.
double regularized_incomplete_beta(double x, double a, double b);

// {0} followed by `n` log-spaced points over [lo, hi].
std::vector<double> default_lambda_grid();

// "log:<lo>:<hi>:<n>" or a comma-separated list; 0 is prepended unless
// `include_zero` is false or already present.
std::vector<double> parse_lambda_grid(const std::string& text, bool include_zero);

// Curve CSV: lambda,avg_cost,avg_quality,rate_<id>... (ids in pool order).
std::string serialize_curve_csv(const DeferralCurve& curve, const RoutingPool& pool);
DeferralCurve parse_curve_csv(std::string_view csv);

}  // namespace qcroute
