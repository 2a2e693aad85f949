#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace qcroute {

// One routable generator: an opaque id plus its per-call cost. Cost units are
// whatever the pool's author measured (the bundled examples use TFLOPs);
// everything downstream only assumes cost >= 0.
struct ModelCandidate {
  std::string id;
  double cost = 0.0;
  std::map<std::string, std::string> meta;
};

// The fixed, ordered set of M candidates. Index order is canonical: every
// per-model vector in this project (labels, estimates, adjusted scores,
// selection rates) is aligned to it.
class RoutingPool {
 public:
  explicit RoutingPool(std::vector<ModelCandidate> models);

  std::size_t size() const { return models_.size(); }
  const ModelCandidate& model(std::size_t m) const { return models_[m]; }
  const std::vector<ModelCandidate>& models() const { return models_; }

  // Index of `id`; throws ValidationError if unknown.
  std::size_t index_of(std::string_view id) const;
  bool has(std::string_view id) const;

  std::vector<std::string> ids() const;
  double min_cost() const;
  double max_cost() const;

 private:
  std::vector<ModelCandidate> models_;
};

enum class Split { train, val, test };

std::string_view split_name(Split s);
Split parse_split(std::string_view s);

// One labeled prompt. quality_samples and labels are stored in pool order;
// labels[m] is the arithmetic mean of quality_samples[m] (raw metric units).
struct PromptRecord {
  std::string prompt_id;
  std::optional<std::string> text;
  std::vector<double> features;
  std::vector<std::vector<double>> quality_samples;
  std::vector<double> labels;
  Split split = Split::train;
};

struct Dataset {
  RoutingPool pool;
  std::vector<PromptRecord> records;
  std::size_t feature_dim = 0;

  std::vector<const PromptRecord*> split_records(Split s) const;
};

// Affine map of raw labels onto [0,1], fitted as min/max over the training
// labels of all models jointly so scaled values stay comparable across heads.
class LabelScaler {
 public:
  LabelScaler(double lo, double hi);

  double lo() const { return lo_; }
  double hi() const { return hi_; }

  // (v - lo)/(hi - lo), clamped to [0,1] for out-of-range test-time values.
  double apply(double v) const;

 private:
  double lo_;
  double hi_;
};

// Mean of the S raw quality samples for one (prompt, model) pair.
// Throws ValidationError on an empty sequence.
double compute_labels(std::span<const double> samples);

// Fitted over every (record, model) label passed in; throws DegenerateError
// when all labels are equal.
LabelScaler fit_scaler(std::span<const double> labels);

// Collects labels of all models over one split, in record-major pool order.
std::vector<double> collect_labels(const Dataset& ds, Split split);

// Deterministic hashed character-trigram term-frequency vector, L2-normalized.
// Text shorter than three bytes yields the zero vector. Hash is FNV-1a 64-bit
// taken modulo d, so the output is bit-identical across implementations.
std::vector<double> featurize_prompt(std::string_view text, std::size_t d);

// Pool JSON: {"models":[{"id":str,"cost":number,"meta":{...}?},...]}
RoutingPool load_pool(std::string_view json_bytes);
std::string serialize_pool(const RoutingPool& pool);

// Dataset JSONL, one record per line:
// {"prompt_id":str,"text":str?,"features":[...],"qualities":{"<id>":[...]},"split":...}
// Rejects on the first malformed line, naming the line number.
Dataset load_dataset(std::string_view jsonl_bytes, const RoutingPool& pool);
std::string serialize_dataset(const Dataset& ds);

}  // namespace qcroute
