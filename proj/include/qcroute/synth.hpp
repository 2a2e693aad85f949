#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "qcroute/pool.hpp"

namespace qcroute {

// Recipe for a synthetic routing instance with known per-(cluster, model)
// expected quality, so routing behavior can be checked against ground truth.
struct SynthSpec {
  std::vector<ModelCandidate> models;
  std::vector<std::vector<double>> centers;  // clusters x d
  std::vector<std::vector<double>> mu;       // clusters x M true mean quality
  double sigma_q = 0.0;                      // label noise level
  double jitter = 0.1;                       // feature noise around the center
  std::size_t n_prompts = 1;
  std::size_t samples_per_prompt = 1;
  std::uint64_t seed = 0;
  double train_fraction = 0.8;
  double val_fraction = 0.0;
};

void validate_synth_spec(const SynthSpec& spec);
SynthSpec load_synth_spec(std::string_view json_bytes);

struct SynthResult {
  Dataset dataset;
  std::vector<std::vector<double>> mu;  // the exact truth table, clusters x M
};

// Prompts are assigned round-robin to clusters; features are the cluster
// center plus Gaussian jitter, labels are mu plus Gaussian noise clipped to
// [0,1]. The leading train_fraction of records is the train split, then val,
// then test. One SplitMix64 stream drives everything: per record, first the
// d feature draws, then S draws per model in pool order. Bit-reproducible
// for equal (spec, seed).
SynthResult generate_synth_dataset(const SynthSpec& spec, std::uint64_t seed);

std::string serialize_truth(const SynthSpec& spec, const SynthResult& result);

// One deterministic prompt-to-model assignment's empirical (cost, quality).
struct FrontierPoint {
  double avg_cost = 0.0;
  double avg_quality = 0.0;
};

// Enumerates all M^N assignments of the split's prompts and returns the
// non-dominated (avg_cost, avg_quality) pairs, sorted by ascending cost.
// Rejects instances with M^N > 10^7.
std::vector<FrontierPoint> brute_force_frontier(const Dataset& ds, Split split,
                                                const RoutingPool& pool);

// True when some frontier point has cost <= c and quality >= q with at least
// one inequality strict.
bool dominated_by_frontier(std::span<const FrontierPoint> frontier, double avg_cost,
                           double avg_quality);

}  // namespace qcroute
