#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qcroute/pool.hpp"

namespace qcroute {

// Predicted per-model expected quality in scaled [0,1] space, pool order.
struct QualityEstimate {
  std::vector<double> values;
};

// Common surface of the quality estimators: feature vector in, one scaled
// quality per pool model out. Implementations are immutable once built and
// safe for concurrent predict().
class Estimator {
 public:
  virtual ~Estimator() = default;
  virtual QualityEstimate predict(std::span<const double> features) const = 0;
  virtual const std::vector<std::string>& model_order() const = 0;
  // JSON document; load_estimator() restores it value-exactly.
  virtual std::string serialize() const = 0;
};

// Exact k-nearest-neighbor regression: the estimate is the per-model mean of
// the scaled labels of the k nearest training prompts under Euclidean
// distance. Ties in distance break toward the lower training-row index.
class KnnIndex final : public Estimator {
 public:
  KnnIndex(std::vector<std::vector<double>> features, std::vector<std::vector<double>> labels,
           std::size_t k, std::vector<std::string> model_order, LabelScaler scaler);

  QualityEstimate predict(std::span<const double> features) const override;
  const std::vector<std::string>& model_order() const override { return model_order_; }
  std::string serialize() const override;

  std::size_t size() const { return features_.size(); }
  std::size_t k() const { return k_; }
  std::size_t feature_dim() const { return features_.empty() ? 0 : features_[0].size(); }
  const LabelScaler& scaler() const { return scaler_; }
  const std::vector<std::vector<double>>& labels() const { return labels_; }

 private:
  std::vector<std::vector<double>> features_;  // N x d
  std::vector<std::vector<double>> labels_;    // N x M, scaled
  std::size_t k_;
  std::vector<std::string> model_order_;
  LabelScaler scaler_;
};

KnnIndex knn_build(const Dataset& train, std::size_t k, const LabelScaler& scaler);
QualityEstimate knn_predict(const KnnIndex& index, std::span<const double> features);

// One hidden ReLU layer, then one logistic-sigmoid head per pool model.
// Weights are row-major (output index major); scaler and model_order are
// attached when the model is trained.
class MlpModel final : public Estimator {
 public:
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
  std::size_t output_dim = 0;
  std::vector<double> w1;  // hidden_dim x input_dim
  std::vector<double> b1;  // hidden_dim
  std::vector<double> w2;  // output_dim x hidden_dim
  std::vector<double> b2;  // output_dim
  std::uint64_t seed = 0;
  std::optional<LabelScaler> scaler;
  std::vector<std::string> order;

  QualityEstimate predict(std::span<const double> features) const override;
  const std::vector<std::string>& model_order() const override { return order; }
  std::string serialize() const override;

  std::size_t parameter_count() const {
    return w1.size() + b1.size() + w2.size() + b2.size();
  }
};

// One training example: features plus scaled targets in [0,1]^M.
struct LabeledExample {
  std::vector<double> features;
  std::vector<double> targets;
};

// Per-parameter gradient, same layout as the model parameters.
struct MlpGradient {
  std::vector<double> w1, b1, w2, b2;
};

// Uniform init in +-sqrt(6/(fan_in+fan_out)) from a SplitMix64 stream seeded
// by `seed`; biases zero. Bit-reproducible for equal inputs.
MlpModel mlp_init(std::size_t d, std::size_t h, std::size_t m, std::uint64_t seed);

// sigmoid(W2 relu(W1 x + b1) + b2), componentwise.
QualityEstimate mlp_forward(const MlpModel& model, std::span<const double> features);

// Mean over the batch of the summed per-head sigmoid cross entropies; targets
// are scaled labels treated as ground-truth probabilities. Probabilities are
// clamped to [1e-12, 1-1e-12] inside the log.
double mlp_loss(const MlpModel& model, std::span<const LabeledExample> batch);

// Analytic gradient of mlp_loss via backprop, with the loss value.
double mlp_loss_grad(const MlpModel& model, std::span<const LabeledExample> batch,
                     MlpGradient& grad);

// Plain minibatch gradient descent with a fixed learning rate and
// seed-deterministic shuffling. Targets come from the train split's labels
// through `scaler`. Deterministic given (inputs, seed).
MlpModel mlp_train(MlpModel model, const Dataset& train, const LabelScaler& scaler,
                   std::size_t epochs, double lr, std::size_t batch_size, std::uint64_t seed);

// Max over parameters of |analytic - central difference| / max(|analytic|, 1e-8).
double gradient_check(const MlpModel& model, std::span<const LabeledExample> batch,
                      double epsilon);

// Restores a serialized KnnIndex or MlpModel from its JSON document.
std::unique_ptr<Estimator> load_estimator(std::string_view json_bytes);

}  // namespace qcroute
