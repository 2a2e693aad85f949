#include "qcroute/router.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "qcroute/error.hpp"
#include "qcroute/jsonio.hpp"

namespace qcroute {

RouteDecision route(const QualityEstimate& estimate, const RoutingPool& pool,
                    const RouterConfig& cfg) {
  const std::size_t m_count = pool.size();
  if (estimate.values.size() != m_count)
    throw ValidationError("route: estimate length " + std::to_string(estimate.values.size()) +
                          " does not match pool size " + std::to_string(m_count));
  if (!(cfg.lambda >= 0.0) || !std::isfinite(cfg.lambda))
    throw ValidationError("route: lambda must be finite and >= 0");

  RouteDecision d;
  d.estimates = estimate;
  d.adjusted.resize(m_count);
  std::size_t best = 0;
  for (std::size_t m = 0; m < m_count; ++m) {
    const double g = estimate.values[m];
    if (!std::isfinite(g)) throw ValidationError("route: non-finite estimate");
    d.adjusted[m] = g - cfg.lambda * pool.model(m).cost;
    if (m == 0) continue;
    const double a = d.adjusted[m], b = d.adjusted[best];
    if (a > b ||
        (a == b && pool.model(m).cost < pool.model(best).cost)) {
      best = m;  // equal cost keeps the lower index
    }
  }
  d.chosen_index = best;
  d.chosen_id = pool.model(best).id;
  return d;
}

namespace {

void check_order(const std::vector<std::string>& order, const RoutingPool& pool) {
  if (order != pool.ids())
    throw ValidationError("route_batch: estimator model order does not match pool");
}

}  // namespace

std::vector<RouteDecision> route_batch(const Estimator& estimator, const Dataset& ds, Split split,
                                       const RoutingPool& pool, const RouterConfig& cfg) {
  check_order(estimator.model_order(), pool);
  std::vector<RouteDecision> out;
  for (const auto* rec : ds.split_records(split)) {
    RouteDecision d = route(estimator.predict(rec->features), pool, cfg);
    d.prompt_id = rec->prompt_id;
    out.push_back(std::move(d));
  }
  return out;
}

std::vector<RouteDecision> oracle_route(const Dataset& ds, Split split, const RoutingPool& pool,
                                        const RouterConfig& cfg, const LabelScaler& scaler) {
  std::vector<RouteDecision> out;
  for (const auto* rec : ds.split_records(split)) {
    QualityEstimate est;
    est.values.reserve(pool.size());
    for (double v : rec->labels) est.values.push_back(scaler.apply(v));
    RouteDecision d = route(est, pool, cfg);
    d.prompt_id = rec->prompt_id;
    out.push_back(std::move(d));
  }
  return out;
}

std::vector<RouteDecision> oracle_route(const Dataset& ds, Split split, const RoutingPool& pool,
                                        const RouterConfig& cfg) {
  std::vector<double> labels;
  for (const auto* rec : ds.split_records(split))
    labels.insert(labels.end(), rec->labels.begin(), rec->labels.end());
  return oracle_route(ds, split, pool, cfg, fit_scaler(labels));
}

namespace {

double avg_routed_cost(const Estimator& estimator, const Dataset& ds, Split split,
                       const RoutingPool& pool, double lambda) {
  const auto decisions = route_batch(estimator, ds, split, pool, RouterConfig{lambda});
  if (decisions.empty()) throw ValidationError("calibrate_lambda: empty split");
  double sum = 0.0;
  for (const auto& d : decisions) sum += pool.model(d.chosen_index).cost;
  return sum / static_cast<double>(decisions.size());
}

}  // namespace

double calibrate_lambda(const Estimator& estimator, const Dataset& ds, Split split,
                        const RoutingPool& pool, double budget, double tol) {
  if (!(tol > 0.0)) throw ValidationError("calibrate_lambda: tol must be > 0");
  if (budget < pool.min_cost())
    throw InfeasibleError("calibrate_lambda: budget " + fmt_double(budget) +
                          " is below the cheapest model cost " + fmt_double(pool.min_cost()));
  if (avg_routed_cost(estimator, ds, split, pool, 0.0) <= budget) return 0.0;

  // Upper bound where cost differences dominate any estimate difference:
  // (estimate range) / (smallest positive cost gap), doubled until feasible.
  double est_lo = std::numeric_limits<double>::infinity();
  double est_hi = -std::numeric_limits<double>::infinity();
  for (const auto* rec : ds.split_records(split)) {
    const auto est = estimator.predict(rec->features);
    for (double v : est.values) {
      est_lo = std::min(est_lo, v);
      est_hi = std::max(est_hi, v);
    }
  }
  double min_gap = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < pool.size(); ++a)
    for (std::size_t b = a + 1; b < pool.size(); ++b) {
      const double gap = std::abs(pool.model(a).cost - pool.model(b).cost);
      if (gap > 0.0) min_gap = std::min(min_gap, gap);
    }
  double hi = 1.0;
  if (std::isfinite(min_gap) && est_hi > est_lo) hi = (est_hi - est_lo) / min_gap;
  while (avg_routed_cost(estimator, ds, split, pool, hi) > budget) hi *= 2.0;

  double lo = 0.0;  // infeasible side; hi stays feasible
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    if (avg_routed_cost(estimator, ds, split, pool, mid) <= budget)
      hi = mid;
    else
      lo = mid;
  }
  return hi;
}

std::string serialize_decisions(const std::vector<RouteDecision>& decisions, double lambda) {
  std::string out;
  for (const auto& d : decisions) {
    out += "{\"prompt_id\":" + json_quote(d.prompt_id) + ",\"chosen\":" + json_quote(d.chosen_id) +
           ",\"lambda\":" + fmt_double(lambda) + ",\"adjusted\":[";
    for (std::size_t m = 0; m < d.adjusted.size(); ++m) {
      if (m) out += ',';
      out += fmt_double(d.adjusted[m]);
    }
    out += "]}\n";
  }
  return out;
}

std::vector<RouteDecision> parse_decisions(std::string_view jsonl_bytes, const RoutingPool& pool) {
  std::vector<RouteDecision> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < jsonl_bytes.size()) {
    std::size_t eol = jsonl_bytes.find('\n', pos);
    if (eol == std::string_view::npos) eol = jsonl_bytes.size();
    std::string_view line = jsonl_bytes.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    const std::string where = "decisions line " + std::to_string(line_no);
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw ValidationError(where + ": invalid JSON record");
    RouteDecision d;
    if (!j.contains("prompt_id") || !j["prompt_id"].is_string())
      throw ValidationError(where + ": missing string \"prompt_id\"");
    d.prompt_id = j["prompt_id"].get<std::string>();
    if (!j.contains("chosen") || !j["chosen"].is_string())
      throw ValidationError(where + ": missing string \"chosen\"");
    d.chosen_id = j["chosen"].get<std::string>();
    d.chosen_index = pool.index_of(d.chosen_id);
    if (j.contains("adjusted")) d.adjusted = j["adjusted"].get<std::vector<double>>();
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace qcroute
