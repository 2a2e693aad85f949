#include "qcroute/pool.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <unordered_set>

#include <json.hpp>

#include "qcroute/error.hpp"
#include "qcroute/jsonio.hpp"

namespace qcroute {

using nlohmann::json;

RoutingPool::RoutingPool(std::vector<ModelCandidate> models) : models_(std::move(models)) {
  if (models_.empty()) throw ValidationError("pool: empty model list");
  std::unordered_set<std::string> seen;
  for (const auto& m : models_) {
    if (m.id.empty()) throw ValidationError("pool: empty model id");
    if (!(m.cost >= 0.0) || !std::isfinite(m.cost))
      throw ValidationError("pool: negative cost for model \"" + m.id + "\"");
    if (!seen.insert(m.id).second) throw ValidationError("pool: duplicate id \"" + m.id + "\"");
  }
}

std::size_t RoutingPool::index_of(std::string_view id) const {
  for (std::size_t m = 0; m < models_.size(); ++m)
    if (models_[m].id == id) return m;
  throw ValidationError("pool: unknown model id \"" + std::string(id) + "\"");
}

bool RoutingPool::has(std::string_view id) const {
  return std::any_of(models_.begin(), models_.end(),
                     [&](const ModelCandidate& m) { return m.id == id; });
}

std::vector<std::string> RoutingPool::ids() const {
  std::vector<std::string> out;
  out.reserve(models_.size());
  for (const auto& m : models_) out.push_back(m.id);
  return out;
}

double RoutingPool::min_cost() const {
  double c = models_[0].cost;
  for (const auto& m : models_) c = std::min(c, m.cost);
  return c;
}

double RoutingPool::max_cost() const {
  double c = models_[0].cost;
  for (const auto& m : models_) c = std::max(c, m.cost);
  return c;
}

std::string_view split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw ValidationError("unknown split \"" + std::string(s) + "\" (expected train|val|test)");
}

std::vector<const PromptRecord*> Dataset::split_records(Split s) const {
  std::vector<const PromptRecord*> out;
  for (const auto& r : records)
    if (r.split == s) out.push_back(&r);
  return out;
}

LabelScaler::LabelScaler(double lo, double hi) : lo_(lo), hi_(hi) {
  if (!(lo < hi)) throw DegenerateError("degenerate label range: lo must be < hi");
}

double LabelScaler::apply(double v) const {
  const double s = (v - lo_) / (hi_ - lo_);
  return std::clamp(s, 0.0, 1.0);
}

double compute_labels(std::span<const double> samples) {
  if (samples.empty()) throw ValidationError("compute_labels: empty sample sequence");
  double sum = 0.0;
  for (double s : samples) sum += s;
  return sum / static_cast<double>(samples.size());
}

LabelScaler fit_scaler(std::span<const double> labels) {
  if (labels.empty()) throw ValidationError("fit_scaler: no labels");
  double lo = labels[0], hi = labels[0];
  for (double v : labels) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (lo == hi) throw DegenerateError("degenerate label range: all labels equal");
  return LabelScaler(lo, hi);
}

std::vector<double> collect_labels(const Dataset& ds, Split split) {
  std::vector<double> out;
  for (const auto& r : ds.records) {
    if (r.split != split) continue;
    out.insert(out.end(), r.labels.begin(), r.labels.end());
  }
  return out;
}

namespace {

std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

std::vector<double> featurize_prompt(std::string_view text, std::size_t d) {
  if (d < 1) throw ValidationError("featurize_prompt: dimension must be >= 1");
  std::vector<double> v(d, 0.0);
  if (text.size() < 3) return v;
  for (std::size_t i = 0; i + 3 <= text.size(); ++i)
    v[fnv1a64(text.substr(i, 3)) % d] += 1.0;
  double ss = 0.0;
  for (double x : v) ss += x * x;
  const double norm = std::sqrt(ss);
  if (norm > 0.0)
    for (double& x : v) x /= norm;
  return v;
}

namespace {

json parse_json(std::string_view bytes, const std::string& what) {
  json j = json::parse(bytes, nullptr, false);
  if (j.is_discarded()) throw ValidationError(what + ": invalid JSON");
  return j;
}

double require_finite_number(const json& j, const std::string& where) {
  if (!j.is_number()) throw ValidationError(where + ": expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw ValidationError(where + ": non-finite number");
  return v;
}

}  // namespace

RoutingPool load_pool(std::string_view json_bytes) {
  const json j = parse_json(json_bytes, "pool");
  if (!j.is_object() || !j.contains("models") || !j["models"].is_array())
    throw ValidationError("pool: missing \"models\" array");
  std::vector<ModelCandidate> models;
  for (const auto& jm : j["models"]) {
    if (!jm.is_object()) throw ValidationError("pool: model entry is not an object");
    ModelCandidate m;
    if (!jm.contains("id") || !jm["id"].is_string())
      throw ValidationError("pool: model missing string \"id\"");
    m.id = jm["id"].get<std::string>();
    if (!jm.contains("cost")) throw ValidationError("pool: model \"" + m.id + "\" missing \"cost\"");
    m.cost = require_finite_number(jm["cost"], "pool: model \"" + m.id + "\" cost");
    if (m.cost < 0.0) throw ValidationError("pool: negative cost for model \"" + m.id + "\"");
    if (jm.contains("meta")) {
      if (!jm["meta"].is_object())
        throw ValidationError("pool: model \"" + m.id + "\" meta must be an object");
      for (const auto& [k, val] : jm["meta"].items()) {
        if (!val.is_string())
          throw ValidationError("pool: model \"" + m.id + "\" meta value for \"" + k +
                                "\" must be a string");
        m.meta[k] = val.get<std::string>();
      }
    }
    models.push_back(std::move(m));
  }
  return RoutingPool(std::move(models));
}

std::string serialize_pool(const RoutingPool& pool) {
  std::string out = "{\"models\":[";
  for (std::size_t m = 0; m < pool.size(); ++m) {
    const auto& mc = pool.model(m);
    if (m) out += ',';
    out += "{\"id\":" + json_quote(mc.id) + ",\"cost\":" + fmt_double(mc.cost);
    if (!mc.meta.empty()) {
      out += ",\"meta\":{";
      bool first = true;
      for (const auto& [k, v] : mc.meta) {
        if (!first) out += ',';
        first = false;
        out += json_quote(k) + ":" + json_quote(v);
      }
      out += '}';
    }
    out += '}';
  }
  out += "]}\n";
  return out;
}

Dataset load_dataset(std::string_view jsonl_bytes, const RoutingPool& pool) {
  Dataset ds{pool, {}, 0};
  std::unordered_set<std::string> seen_ids;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= jsonl_bytes.size()) {
    std::size_t eol = jsonl_bytes.find('\n', pos);
    if (eol == std::string_view::npos) eol = jsonl_bytes.size();
    std::string_view line = jsonl_bytes.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (line.empty() || line.find_first_not_of(" \t\r") == std::string_view::npos) {
      if (pos > jsonl_bytes.size()) break;
      continue;
    }
    const std::string where = "dataset line " + std::to_string(line_no);
    const json j = parse_json(line, where);
    if (!j.is_object()) throw ValidationError(where + ": record is not an object");

    PromptRecord rec;
    if (!j.contains("prompt_id") || !j["prompt_id"].is_string())
      throw ValidationError(where + ": missing string \"prompt_id\"");
    rec.prompt_id = j["prompt_id"].get<std::string>();
    if (rec.prompt_id.empty()) throw ValidationError(where + ": empty prompt_id");
    if (!seen_ids.insert(rec.prompt_id).second)
      throw ValidationError(where + ": duplicate prompt_id \"" + rec.prompt_id + "\"");

    if (j.contains("text")) {
      if (!j["text"].is_string()) throw ValidationError(where + ": \"text\" must be a string");
      rec.text = j["text"].get<std::string>();
    }

    if (!j.contains("features") || !j["features"].is_array())
      throw ValidationError(where + ": missing \"features\" array");
    for (const auto& f : j["features"])
      rec.features.push_back(require_finite_number(f, where + ": features"));
    if (ds.records.empty()) {
      ds.feature_dim = rec.features.size();
    } else if (rec.features.size() != ds.feature_dim) {
      throw ValidationError(where + ": feature dimension " + std::to_string(rec.features.size()) +
                            " does not match dataset dimension " + std::to_string(ds.feature_dim));
    }

    if (!j.contains("qualities") || !j["qualities"].is_object())
      throw ValidationError(where + ": missing \"qualities\" object");
    const auto& jq = j["qualities"];
    rec.quality_samples.resize(pool.size());
    rec.labels.resize(pool.size());
    for (const auto& [mid, samples] : jq.items()) {
      if (!pool.has(mid))
        throw ValidationError(where + ": qualities name unknown model \"" + mid + "\"");
      const std::size_t m = pool.index_of(mid);
      if (!samples.is_array() || samples.empty())
        throw ValidationError(where + ": qualities for model \"" + mid +
                              "\" must be a nonempty array");
      for (const auto& s : samples)
        rec.quality_samples[m].push_back(
            require_finite_number(s, where + ": qualities for \"" + mid + "\""));
    }
    for (std::size_t m = 0; m < pool.size(); ++m) {
      if (rec.quality_samples[m].empty())
        throw ValidationError(where + ": missing qualities for model \"" + pool.model(m).id +
                              "\"");
      rec.labels[m] = compute_labels(rec.quality_samples[m]);
    }

    if (!j.contains("split") || !j["split"].is_string())
      throw ValidationError(where + ": missing string \"split\"");
    try {
      rec.split = parse_split(j["split"].get<std::string>());
    } catch (const ValidationError& e) {
      throw ValidationError(where + ": " + e.what());
    }

    ds.records.push_back(std::move(rec));
    if (pos > jsonl_bytes.size()) break;
  }
  return ds;
}

std::string serialize_dataset(const Dataset& ds) {
  std::string out;
  for (const auto& r : ds.records) {
    out += "{\"prompt_id\":" + json_quote(r.prompt_id);
    if (r.text) out += ",\"text\":" + json_quote(*r.text);
    out += ",\"features\":[";
    for (std::size_t i = 0; i < r.features.size(); ++i) {
      if (i) out += ',';
      out += fmt_double(r.features[i]);
    }
    out += "],\"qualities\":{";
    for (std::size_t m = 0; m < ds.pool.size(); ++m) {
      if (m) out += ',';
      out += json_quote(ds.pool.model(m).id) + ":[";
      const auto& samples = r.quality_samples[m];
      for (std::size_t s = 0; s < samples.size(); ++s) {
        if (s) out += ',';
        out += fmt_double(samples[s]);
      }
      out += ']';
    }
    out += "},\"split\":\"";
    out += split_name(r.split);
    out += "\"}\n";
  }
  return out;
}

}  // namespace qcroute
