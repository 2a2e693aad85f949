#include "qcroute/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include <json.hpp>

#include "qcroute/error.hpp"
#include "qcroute/jsonio.hpp"
#include "qcroute/rng.hpp"

namespace qcroute {

using nlohmann::json;

void validate_synth_spec(const SynthSpec& spec) {
  if (spec.models.empty()) throw ValidationError("synth spec: empty model list");
  if (spec.centers.empty()) throw ValidationError("synth spec: at least one cluster required");
  const std::size_t d = spec.centers[0].size();
  if (d < 1) throw ValidationError("synth spec: cluster centers must have dimension >= 1");
  for (const auto& c : spec.centers)
    if (c.size() != d) throw ValidationError("synth spec: inconsistent center dimensions");
  if (spec.mu.size() != spec.centers.size())
    throw ValidationError("synth spec: mu must have one row per cluster");
  for (const auto& row : spec.mu) {
    if (row.size() != spec.models.size())
      throw ValidationError("synth spec: mu row width must equal the model count");
    for (double v : row)
      if (!std::isfinite(v)) throw ValidationError("synth spec: mu must be finite");
  }
  if (!(spec.sigma_q >= 0.0)) throw ValidationError("synth spec: sigma_q must be >= 0");
  if (!(spec.jitter >= 0.0)) throw ValidationError("synth spec: jitter must be >= 0");
  if (spec.n_prompts < 1) throw ValidationError("synth spec: n_prompts must be >= 1");
  if (spec.samples_per_prompt < 1)
    throw ValidationError("synth spec: samples_per_prompt must be >= 1");
  if (!(spec.train_fraction >= 0.0 && spec.val_fraction >= 0.0 &&
        spec.train_fraction + spec.val_fraction <= 1.0))
    throw ValidationError("synth spec: split fractions must be >= 0 and sum to <= 1");
}

SynthSpec load_synth_spec(std::string_view json_bytes) {
  json j = json::parse(json_bytes, nullptr, false);
  if (j.is_discarded()) throw ValidationError("synth spec: invalid JSON");
  if (!j.is_object()) throw ValidationError("synth spec: expected an object");
  SynthSpec spec;
  if (!j.contains("models") || !j["models"].is_array())
    throw ValidationError("synth spec: missing \"models\" array");
  for (const auto& jm : j["models"]) {
    ModelCandidate m;
    m.id = jm.at("id").get<std::string>();
    m.cost = jm.at("cost").get<double>();
    spec.models.push_back(std::move(m));
  }
  if (!j.contains("clusters") || !j["clusters"].is_array())
    throw ValidationError("synth spec: missing \"clusters\" array");
  for (const auto& jc : j["clusters"]) {
    spec.centers.push_back(jc.at("center").get<std::vector<double>>());
    spec.mu.push_back(jc.at("mu").get<std::vector<double>>());
  }
  spec.sigma_q = j.value("sigma_q", 0.0);
  spec.jitter = j.value("jitter", 0.1);
  spec.n_prompts = j.at("n_prompts").get<std::size_t>();
  spec.samples_per_prompt = j.at("samples_per_prompt").get<std::size_t>();
  spec.seed = j.value("seed", 0ULL);
  spec.train_fraction = j.value("train_fraction", 0.8);
  spec.val_fraction = j.value("val_fraction", 0.0);
  validate_synth_spec(spec);
  return spec;
}

SynthResult generate_synth_dataset(const SynthSpec& spec, std::uint64_t seed) {
  validate_synth_spec(spec);
  RoutingPool pool(spec.models);
  const std::size_t n = spec.n_prompts;
  const std::size_t n_train = static_cast<std::size_t>(std::llround(spec.train_fraction * n));
  const std::size_t n_val = static_cast<std::size_t>(std::llround(spec.val_fraction * n));

  Dataset ds{pool, {}, spec.centers[0].size()};
  SplitMix64 rng(seed);
  char id_buf[24];
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t cluster = i % spec.centers.size();
    PromptRecord rec;
    std::snprintf(id_buf, sizeof(id_buf), "p%06zu", i);
    rec.prompt_id = id_buf;
    rec.features.reserve(ds.feature_dim);
    for (double center_j : spec.centers[cluster])
      rec.features.push_back(center_j + spec.jitter * rng.next_gaussian());
    rec.quality_samples.resize(pool.size());
    rec.labels.resize(pool.size());
    for (std::size_t m = 0; m < pool.size(); ++m) {
      for (std::size_t s = 0; s < spec.samples_per_prompt; ++s) {
        const double q = spec.mu[cluster][m] + spec.sigma_q * rng.next_gaussian();
        rec.quality_samples[m].push_back(std::clamp(q, 0.0, 1.0));
      }
      rec.labels[m] = compute_labels(rec.quality_samples[m]);
    }
    rec.split = i < n_train ? Split::train : (i < n_train + n_val ? Split::val : Split::test);
    ds.records.push_back(std::move(rec));
  }
  return SynthResult{std::move(ds), spec.mu};
}

std::string serialize_truth(const SynthSpec& spec, const SynthResult& result) {
  std::string out = "{\"model_order\":[";
  for (std::size_t m = 0; m < spec.models.size(); ++m) {
    if (m) out += ',';
    out += json_quote(spec.models[m].id);
  }
  out += "],\"clusters\":[";
  for (std::size_t c = 0; c < spec.centers.size(); ++c) {
    if (c) out += ',';
    out += "{\"center\":[";
    for (std::size_t j = 0; j < spec.centers[c].size(); ++j) {
      if (j) out += ',';
      out += fmt_double(spec.centers[c][j]);
    }
    out += "],\"mu\":[";
    for (std::size_t m = 0; m < result.mu[c].size(); ++m) {
      if (m) out += ',';
      out += fmt_double(result.mu[c][m]);
    }
    out += "]}";
  }
  out += "]}\n";
  return out;
}

std::vector<FrontierPoint> brute_force_frontier(const Dataset& ds, Split split,
                                                const RoutingPool& pool) {
  const auto records = ds.split_records(split);
  const std::size_t n = records.size();
  const std::size_t m_count = pool.size();
  if (n == 0) throw ValidationError("brute_force_frontier: empty split");
  double combos = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    combos *= static_cast<double>(m_count);
    if (combos > 1e7)
      throw ValidationError("brute_force_frontier: instance too large (M^N > 1e7)");
  }

  // Staircase of non-dominated points: strictly increasing cost implies
  // strictly increasing quality.
  std::map<double, double> frontier;
  std::vector<std::size_t> assign(n, 0);
  const double dn = static_cast<double>(n);
  while (true) {
    // Same summation order and arithmetic as avg_quality_cost, so a routed
    // assignment's (C, Q) is bit-identical to its frontier entry.
    double c_sum = 0.0, q_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      c_sum += pool.model(assign[i]).cost;
      q_sum += records[i]->labels[assign[i]];
    }
    const double c = c_sum / dn, q = q_sum / dn;

    auto it = frontier.upper_bound(c);
    const bool kept = [&] {
      if (it != frontier.begin()) {
        auto prev = std::prev(it);
        if (prev->second >= q) return false;  // dominated or duplicate
        if (prev->first == c) frontier.erase(prev);
      }
      return true;
    }();
    if (kept) {
      it = frontier.upper_bound(c);
      while (it != frontier.end() && it->second <= q) it = frontier.erase(it);
      frontier.emplace(c, q);
    }

    std::size_t digit = 0;
    while (digit < n && ++assign[digit] == m_count) assign[digit++] = 0;
    if (digit == n) break;
  }

  std::vector<FrontierPoint> out;
  out.reserve(frontier.size());
  for (const auto& [c, q] : frontier) out.push_back(FrontierPoint{c, q});
  return out;
}

bool dominated_by_frontier(std::span<const FrontierPoint> frontier, double avg_cost,
                           double avg_quality) {
  for (const auto& f : frontier) {
    if (f.avg_cost > avg_cost) break;  // sorted ascending by cost
    if (f.avg_quality >= avg_quality && (f.avg_cost < avg_cost || f.avg_quality > avg_quality))
      return true;
  }
  return false;
}

}  // namespace qcroute
