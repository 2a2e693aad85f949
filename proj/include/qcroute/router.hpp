#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "qcroute/estimator.hpp"
#include "qcroute/pool.hpp"

namespace qcroute {

// lambda is the quality-per-cost trade-off knob: 0 routes each prompt to its
// highest-estimate model, large values collapse onto the cheapest model.
// Ties in the adjusted score always break to the lower cost, then the lower
// pool index; this is what makes per-prompt cost nonincreasing in lambda.
struct RouterConfig {
  double lambda = 0.0;
};

struct RouteDecision {
  std::string prompt_id;
  std::size_t chosen_index = 0;  // 0-based pool index
  std::string chosen_id;
  QualityEstimate estimates;
  std::vector<double> adjusted;  // estimates[m] - lambda * cost[m]
};

// argmax_m estimate[m] - lambda * cost[m].
RouteDecision route(const QualityEstimate& estimate, const RoutingPool& pool,
                    const RouterConfig& cfg);

// One decision per record of the split, in record order.
std::vector<RouteDecision> route_batch(const Estimator& estimator, const Dataset& ds, Split split,
                                       const RoutingPool& pool, const RouterConfig& cfg);

// Routing with the scaled true labels as estimates: the best plug-in
// achievable on this data, used as a skyline for analysis and tests.
std::vector<RouteDecision> oracle_route(const Dataset& ds, Split split, const RoutingPool& pool,
                                        const RouterConfig& cfg, const LabelScaler& scaler);

// Convenience overload fitting the scaler on the split's own labels.
std::vector<RouteDecision> oracle_route(const Dataset& ds, Split split, const RoutingPool& pool,
                                        const RouterConfig& cfg);

// Smallest lambda on a bisection grid of width `tol` whose average routed
// cost is <= budget. Returns 0 when the unconstrained router already fits.
// Throws InfeasibleError when budget is below the cheapest model.
double calibrate_lambda(const Estimator& estimator, const Dataset& ds, Split split,
                        const RoutingPool& pool, double budget, double tol);

// Decisions JSONL: {"prompt_id":...,"chosen":...,"lambda":...,"adjusted":[...]}
std::string serialize_decisions(const std::vector<RouteDecision>& decisions, double lambda);
std::vector<RouteDecision> parse_decisions(std::string_view jsonl_bytes, const RoutingPool& pool);

}  // namespace qcroute
