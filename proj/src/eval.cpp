#include "qcroute/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include "qcroute/error.hpp"
#include "qcroute/jsonio.hpp"

namespace qcroute {

std::pair<double, double> avg_quality_cost(const std::vector<RouteDecision>& decisions,
                                           const Dataset& ds, Split split,
                                           const RoutingPool& pool) {
  const auto records = ds.split_records(split);
  if (records.empty()) throw ValidationError("avg_quality_cost: empty split");
  if (decisions.size() != records.size())
    throw ValidationError("avg_quality_cost: " + std::to_string(decisions.size()) +
                          " decisions for " + std::to_string(records.size()) + " prompts");
  double q_sum = 0.0, c_sum = 0.0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& d = decisions[i];
    if (d.prompt_id != records[i]->prompt_id)
      throw ValidationError("avg_quality_cost: decision for unknown prompt \"" + d.prompt_id +
                            "\" (expected \"" + records[i]->prompt_id + "\")");
    q_sum += records[i]->labels[d.chosen_index];
    c_sum += pool.model(d.chosen_index).cost;
  }
  const double n = static_cast<double>(records.size());
  return {q_sum / n, c_sum / n};
}

std::map<std::string, double> selection_rates(const std::vector<RouteDecision>& decisions,
                                              const RoutingPool& pool) {
  if (decisions.empty()) throw ValidationError("selection_rates: empty decisions");
  std::map<std::string, double> rates;
  for (const auto& m : pool.models()) rates[m.id] = 0.0;
  for (const auto& d : decisions) {
    auto it = rates.find(d.chosen_id);
    if (it == rates.end())
      throw ValidationError("selection_rates: decision names unknown model \"" + d.chosen_id +
                            "\"");
    it->second += 1.0;
  }
  for (auto& [id, r] : rates) r /= static_cast<double>(decisions.size());
  return rates;
}

namespace {

DeferralCurve sweep_curve(const Dataset& ds, Split split, const RoutingPool& pool,
                          std::span<const double> lambdas,
                          const std::function<std::vector<RouteDecision>(double)>& route_at) {
  if (lambdas.empty()) throw ValidationError("deferral_curve: empty lambda grid");
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    if (!(lambdas[i] >= 0.0) || !std::isfinite(lambdas[i]))
      throw ValidationError("deferral_curve: lambdas must be finite and >= 0");
    if (i > 0 && !(lambdas[i] > lambdas[i - 1]))
      throw ValidationError("deferral_curve: lambdas must be strictly increasing");
  }
  DeferralCurve curve;
  for (double lambda : lambdas) {
    const auto decisions = route_at(lambda);
    DeferralPoint pt;
    pt.lambda = lambda;
    std::tie(pt.avg_quality, pt.avg_cost) = avg_quality_cost(decisions, ds, split, pool);
    pt.rates = selection_rates(decisions, pool);
    if (!curve.points.empty() && pt.avg_cost > curve.points.back().avg_cost)
      throw ValidationError("deferral_curve: avg_cost increased along the lambda sweep");
    curve.points.push_back(std::move(pt));
  }
  return curve;
}

}  // namespace

DeferralCurve deferral_curve(const Estimator& estimator, const Dataset& ds, Split split,
                             const RoutingPool& pool, std::span<const double> lambdas) {
  return sweep_curve(ds, split, pool, lambdas, [&](double lambda) {
    return route_batch(estimator, ds, split, pool, RouterConfig{lambda});
  });
}

DeferralCurve oracle_deferral_curve(const Dataset& ds, Split split, const RoutingPool& pool,
                                    std::span<const double> lambdas, const LabelScaler& scaler) {
  return sweep_curve(ds, split, pool, lambdas, [&](double lambda) {
    return oracle_route(ds, split, pool, RouterConfig{lambda}, scaler);
  });
}

std::optional<double> qnc(const DeferralCurve& curve, double ref_cost, double ref_quality) {
  if (curve.points.empty()) throw ValidationError("qnc: empty curve");
  if (!(ref_cost > 0.0)) throw ValidationError("qnc: ref_cost must be > 0");

  // Monotone upper envelope: sort by cost, then take the running max of Q.
  std::vector<std::pair<double, double>> pts;
  pts.reserve(curve.points.size());
  for (const auto& p : curve.points) pts.emplace_back(p.avg_cost, p.avg_quality);
  std::sort(pts.begin(), pts.end());
  for (std::size_t i = 1; i < pts.size(); ++i)
    pts[i].second = std::max(pts[i].second, pts[i - 1].second);

  if (pts.back().second < ref_quality) return std::nullopt;
  if (pts.front().second >= ref_quality) return 100.0 * pts.front().first / ref_cost;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    if (pts[i].second < ref_quality) continue;
    const auto [c0, q0] = pts[i - 1];
    const auto [c1, q1] = pts[i];
    const double c_star = q1 > q0 ? c0 + (ref_quality - q0) * (c1 - c0) / (q1 - q0) : c1;
    return 100.0 * c_star / ref_cost;
  }
  return std::nullopt;  // unreachable: back() >= ref_quality was checked
}

namespace {

// Modified Lentz evaluation of the incomplete-beta continued fraction.
double beta_continued_fraction(double x, double a, double b) {
  constexpr double tiny = 1e-300;
  constexpr double eps = 1e-15;
  double c = 1.0;
  double d = 1.0 - (a + b) * x / (a + 1.0);
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double result = d;
  for (int m = 1; m <= 300; ++m) {
    const double dm = static_cast<double>(m);
    double numer = dm * (b - dm) * x / ((a + 2.0 * dm - 1.0) * (a + 2.0 * dm));
    d = 1.0 + numer * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + numer / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    result *= d * c;
    numer = -(a + dm) * (a + b + dm) * x / ((a + 2.0 * dm) * (a + 2.0 * dm + 1.0));
    d = 1.0 + numer * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + numer / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double mult = d * c;
    result *= mult;
    if (std::abs(mult - 1.0) < eps) return result;
  }
  return result;
}

}  // namespace

double regularized_incomplete_beta(double x, double a, double b) {
  if (!(a > 0.0) || !(b > 0.0)) throw ValidationError("ibeta: a and b must be > 0");
  if (!(x >= 0.0 && x <= 1.0)) throw ValidationError("ibeta: x must be in [0,1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double log_prefix =
      a * std::log(x) + b * std::log1p(-x) - (std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b));
  // The continued fraction converges fastest for x below the distribution
  // mode; otherwise evaluate the mirrored tail.
  if (x < (a + 1.0) / (a + b + 2.0))
    return std::exp(log_prefix) * beta_continued_fraction(x, a, b) / a;
  return 1.0 - std::exp(log_prefix) * beta_continued_fraction(1.0 - x, b, a) / b;
}

TTestResult welch_ttest(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2)
    throw ValidationError("welch_ttest: each sample needs at least 2 values");
  auto mean_var = [](std::span<const double> s) {
    double mean = 0.0;
    for (double v : s) mean += v;
    mean /= static_cast<double>(s.size());
    double ss = 0.0;
    for (double v : s) ss += (v - mean) * (v - mean);
    return std::pair{mean, ss / static_cast<double>(s.size() - 1)};
  };
  const auto [ma, va] = mean_var(a);
  const auto [mb, vb] = mean_var(b);
  if (va == 0.0 && vb == 0.0)
    throw DegenerateError("welch_ttest: both samples have zero variance");

  const double sa = va / static_cast<double>(a.size());
  const double sb = vb / static_cast<double>(b.size());
  TTestResult r;
  r.t = (ma - mb) / std::sqrt(sa + sb);
  r.dof = (sa + sb) * (sa + sb) /
          (sa * sa / static_cast<double>(a.size() - 1) + sb * sb / static_cast<double>(b.size() - 1));
  // P(|T| > t) = I_{dof/(t^2+dof)}(dof/2, 1/2) for the Student t distribution.
  r.p = regularized_incomplete_beta(r.dof / (r.t * r.t + r.dof), r.dof / 2.0, 0.5);
  r.p = std::clamp(r.p, 0.0, 1.0);
  return r;
}

std::vector<double> default_lambda_grid() {
  return parse_lambda_grid("log:1e-6:1e0:50", true);
}

std::vector<double> parse_lambda_grid(const std::string& text, bool include_zero) {
  std::vector<double> grid;
  auto parse_num = [](const std::string& s) {
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw ValidationError("lambda grid: cannot parse number \"" + s + "\"");
    }
  };
  if (text.rfind("log:", 0) == 0) {
    std::vector<std::string> parts;
    std::size_t pos = 4;
    while (pos <= text.size()) {
      const std::size_t next = text.find(':', pos);
      parts.push_back(text.substr(pos, next == std::string::npos ? next : next - pos));
      if (next == std::string::npos) break;
      pos = next + 1;
    }
    if (parts.size() != 3) throw ValidationError("lambda grid: expected log:<lo>:<hi>:<n>");
    const double lo = parse_num(parts[0]);
    const double hi = parse_num(parts[1]);
    const long n = static_cast<long>(parse_num(parts[2]));
    if (!(lo > 0.0) || !(hi > lo) || n < 2)
      throw ValidationError("lambda grid: need 0 < lo < hi and n >= 2");
    const double llo = std::log10(lo), lhi = std::log10(hi);
    for (long i = 0; i < n; ++i)
      grid.push_back(std::pow(10.0, llo + (lhi - llo) * static_cast<double>(i) /
                                              static_cast<double>(n - 1)));
  } else {
    std::size_t pos = 0;
    while (pos <= text.size()) {
      const std::size_t next = text.find(',', pos);
      const std::string tok = text.substr(pos, next == std::string::npos ? next : next - pos);
      if (!tok.empty()) grid.push_back(parse_num(tok));
      if (next == std::string::npos) break;
      pos = next + 1;
    }
    if (grid.empty()) throw ValidationError("lambda grid: empty list");
  }
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  for (double v : grid)
    if (!(v >= 0.0) || !std::isfinite(v))
      throw ValidationError("lambda grid: values must be finite and >= 0");
  if (include_zero && (grid.empty() || grid.front() != 0.0)) grid.insert(grid.begin(), 0.0);
  return grid;
}

std::string serialize_curve_csv(const DeferralCurve& curve, const RoutingPool& pool) {
  std::string out = "lambda,avg_cost,avg_quality";
  for (const auto& m : pool.models()) out += ",rate_" + m.id;
  out += '\n';
  for (const auto& p : curve.points) {
    out += fmt_double(p.lambda) + "," + fmt_double(p.avg_cost) + "," + fmt_double(p.avg_quality);
    for (const auto& m : pool.models()) out += "," + fmt_double(p.rates.at(m.id));
    out += '\n';
  }
  return out;
}

DeferralCurve parse_curve_csv(std::string_view csv) {
  DeferralCurve curve;
  std::vector<std::string> header;
  std::size_t pos = 0;
  bool first = true;
  while (pos < csv.size()) {
    std::size_t eol = csv.find('\n', pos);
    if (eol == std::string_view::npos) eol = csv.size();
    std::string_view line = csv.substr(pos, eol - pos);
    pos = eol + 1;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::size_t cpos = 0;
    while (cpos <= line.size()) {
      std::size_t comma = line.find(',', cpos);
      if (comma == std::string_view::npos) comma = line.size();
      cells.emplace_back(line.substr(cpos, comma - cpos));
      cpos = comma + 1;
    }
    if (first) {
      first = false;
      if (cells.size() < 3 || cells[0] != "lambda" || cells[1] != "avg_cost" ||
          cells[2] != "avg_quality")
        throw ValidationError("curve CSV: unexpected header");
      for (std::size_t i = 3; i < cells.size(); ++i)
        if (cells[i].rfind("rate_", 0) != 0)
          throw ValidationError("curve CSV: unexpected column \"" + cells[i] + "\"");
      header = cells;
      continue;
    }
    if (cells.size() != header.size())
      throw ValidationError("curve CSV: row width does not match header");
    DeferralPoint p;
    auto num = [](const std::string& s) {
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc{} || ptr != s.data() + s.size())
        throw ValidationError("curve CSV: cannot parse number \"" + s + "\"");
      return v;
    };
    p.lambda = num(cells[0]);
    p.avg_cost = num(cells[1]);
    p.avg_quality = num(cells[2]);
    for (std::size_t i = 3; i < cells.size(); ++i)
      p.rates[header[i].substr(5)] = num(cells[i]);  // strip "rate_"
    curve.points.push_back(std::move(p));
  }
  if (curve.points.empty()) throw ValidationError("curve CSV: no data rows");
  return curve;
}

}  // namespace qcroute
