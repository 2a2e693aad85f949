#include "qcroute/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "qcroute/error.hpp"
#include "qcroute/jsonio.hpp"
#include "qcroute/rng.hpp"

namespace qcroute {

using nlohmann::json;

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

constexpr double kProbClamp = 1e-12;

double clamped_log(double p) { return std::log(std::clamp(p, kProbClamp, 1.0 - kProbClamp)); }

void check_dim(std::size_t got, std::size_t want, const char* who) {
  if (got != want)
    throw ValidationError(std::string(who) + ": feature dimension " + std::to_string(got) +
                          " does not match expected " + std::to_string(want));
}

std::string serialize_matrix(const std::vector<std::vector<double>>& rows) {
  std::string out = "[";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (i) out += ',';
    out += '[';
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      if (j) out += ',';
      out += fmt_double(rows[i][j]);
    }
    out += ']';
  }
  out += ']';
  return out;
}

std::string serialize_vector(std::span<const double> v) {
  std::string out = "[";
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += fmt_double(v[i]);
  }
  out += ']';
  return out;
}

std::string serialize_ids(std::span<const std::string> ids) {
  std::string out = "[";
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ',';
    out += json_quote(ids[i]);
  }
  out += ']';
  return out;
}

}  // namespace

KnnIndex::KnnIndex(std::vector<std::vector<double>> features,
                   std::vector<std::vector<double>> labels, std::size_t k,
                   std::vector<std::string> model_order, LabelScaler scaler)
    : features_(std::move(features)),
      labels_(std::move(labels)),
      k_(k),
      model_order_(std::move(model_order)),
      scaler_(scaler) {
  const std::size_t n = features_.size();
  if (n == 0) throw ValidationError("knn: empty training set");
  if (labels_.size() != n) throw ValidationError("knn: feature/label row count mismatch");
  if (k_ < 1 || k_ > n)
    throw ValidationError("knn: k=" + std::to_string(k_) + " exceeds N=" + std::to_string(n) +
                          " or is below 1");
  for (const auto& row : features_)
    if (row.size() != features_[0].size())
      throw ValidationError("knn: inconsistent feature dimensions");
  for (const auto& row : labels_)
    if (row.size() != model_order_.size())
      throw ValidationError("knn: label width does not match model order");
}

KnnIndex knn_build(const Dataset& train, std::size_t k, const LabelScaler& scaler) {
  std::vector<std::vector<double>> features;
  std::vector<std::vector<double>> labels;
  for (const auto* rec : train.split_records(Split::train)) {
    features.push_back(rec->features);
    std::vector<double> row;
    row.reserve(rec->labels.size());
    for (double v : rec->labels) row.push_back(scaler.apply(v));
    labels.push_back(std::move(row));
  }
  if (features.empty()) throw ValidationError("knn_build: empty training split");
  return KnnIndex(std::move(features), std::move(labels), k, train.pool.ids(), scaler);
}

QualityEstimate KnnIndex::predict(std::span<const double> x) const {
  check_dim(x.size(), feature_dim(), "knn_predict");
  const std::size_t n = features_.size();
  std::vector<std::pair<double, std::size_t>> order(n);
  for (std::size_t i = 0; i < n; ++i) {
    double d2 = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double diff = features_[i][j] - x[j];
      d2 += diff * diff;
    }
    order[i] = {d2, i};
  }
  std::sort(order.begin(), order.end());

  // Neighbor labels are summed in ascending row order so the result does not
  // depend on the distance ordering among the selected set; with k = N this
  // reproduces the label column means bit for bit.
  std::vector<std::size_t> chosen(k_);
  for (std::size_t i = 0; i < k_; ++i) chosen[i] = order[i].second;
  std::sort(chosen.begin(), chosen.end());

  const std::size_t m_count = model_order_.size();
  QualityEstimate est{std::vector<double>(m_count, 0.0)};
  for (std::size_t idx : chosen)
    for (std::size_t m = 0; m < m_count; ++m) est.values[m] += labels_[idx][m];
  for (std::size_t m = 0; m < m_count; ++m) est.values[m] /= static_cast<double>(k_);
  return est;
}

QualityEstimate knn_predict(const KnnIndex& index, std::span<const double> features) {
  return index.predict(features);
}

std::string KnnIndex::serialize() const {
  std::string out = "{\"format\":\"qcroute-estimator\",\"version\":1,\"type\":\"knn\"";
  out += ",\"k\":" + std::to_string(k_);
  out += ",\"scaler\":{\"lo\":" + fmt_double(scaler_.lo()) + ",\"hi\":" + fmt_double(scaler_.hi()) + "}";
  out += ",\"model_order\":" + serialize_ids(model_order_);
  out += ",\"features\":" + serialize_matrix(features_);
  out += ",\"labels\":" + serialize_matrix(labels_);
  out += "}\n";
  return out;
}

MlpModel mlp_init(std::size_t d, std::size_t h, std::size_t m, std::uint64_t seed) {
  if (d < 1 || h < 1 || m < 1) throw ValidationError("mlp_init: dims must be >= 1");
  MlpModel model;
  model.input_dim = d;
  model.hidden_dim = h;
  model.output_dim = m;
  model.seed = seed;
  SplitMix64 rng(seed);
  const double lim1 = std::sqrt(6.0 / static_cast<double>(d + h));
  model.w1.resize(h * d);
  for (double& w : model.w1) w = rng.next_uniform(-lim1, lim1);
  model.b1.assign(h, 0.0);
  const double lim2 = std::sqrt(6.0 / static_cast<double>(h + m));
  model.w2.resize(m * h);
  for (double& w : model.w2) w = rng.next_uniform(-lim2, lim2);
  model.b2.assign(m, 0.0);
  return model;
}

namespace {

// Forward pass keeping the hidden pre-activations for backprop.
void forward_parts(const MlpModel& model, std::span<const double> x, std::vector<double>& hidden,
                   std::vector<double>& probs) {
  const std::size_t d = model.input_dim, h = model.hidden_dim, m = model.output_dim;
  hidden.assign(h, 0.0);
  for (std::size_t i = 0; i < h; ++i) {
    double z = model.b1[i];
    const double* row = &model.w1[i * d];
    for (std::size_t j = 0; j < d; ++j) z += row[j] * x[j];
    hidden[i] = z > 0.0 ? z : 0.0;
  }
  probs.assign(m, 0.0);
  for (std::size_t o = 0; o < m; ++o) {
    double z = model.b2[o];
    const double* row = &model.w2[o * h];
    for (std::size_t i = 0; i < h; ++i) z += row[i] * hidden[i];
    probs[o] = sigmoid(z);
  }
}

void check_batch(const MlpModel& model, std::span<const LabeledExample> batch) {
  if (batch.empty()) throw ValidationError("mlp: empty batch");
  for (const auto& ex : batch) {
    check_dim(ex.features.size(), model.input_dim, "mlp");
    if (ex.targets.size() != model.output_dim)
      throw ValidationError("mlp: target width does not match output heads");
    for (double y : ex.targets)
      if (!(y >= 0.0 && y <= 1.0)) throw ValidationError("mlp: target outside [0,1]");
  }
}

}  // namespace

QualityEstimate mlp_forward(const MlpModel& model, std::span<const double> x) {
  check_dim(x.size(), model.input_dim, "mlp_forward");
  std::vector<double> hidden, probs;
  forward_parts(model, x, hidden, probs);
  return QualityEstimate{std::move(probs)};
}

QualityEstimate MlpModel::predict(std::span<const double> features) const {
  return mlp_forward(*this, features);
}

double mlp_loss(const MlpModel& model, std::span<const LabeledExample> batch) {
  check_batch(model, batch);
  std::vector<double> hidden, probs;
  double total = 0.0;
  for (const auto& ex : batch) {
    forward_parts(model, ex.features, hidden, probs);
    for (std::size_t o = 0; o < model.output_dim; ++o) {
      const double y = ex.targets[o];
      total -= y * clamped_log(probs[o]) + (1.0 - y) * clamped_log(1.0 - probs[o]);
    }
  }
  return total / static_cast<double>(batch.size());
}

double mlp_loss_grad(const MlpModel& model, std::span<const LabeledExample> batch,
                     MlpGradient& grad) {
  check_batch(model, batch);
  const std::size_t d = model.input_dim, h = model.hidden_dim, m = model.output_dim;
  grad.w1.assign(h * d, 0.0);
  grad.b1.assign(h, 0.0);
  grad.w2.assign(m * h, 0.0);
  grad.b2.assign(m, 0.0);

  const double inv_b = 1.0 / static_cast<double>(batch.size());
  std::vector<double> hidden, probs, dz2(m), dh(h);
  double total = 0.0;
  for (const auto& ex : batch) {
    forward_parts(model, ex.features, hidden, probs);
    for (std::size_t o = 0; o < m; ++o) {
      const double y = ex.targets[o];
      total -= y * clamped_log(probs[o]) + (1.0 - y) * clamped_log(1.0 - probs[o]);
      dz2[o] = (probs[o] - y) * inv_b;
    }
    for (std::size_t o = 0; o < m; ++o) {
      grad.b2[o] += dz2[o];
      double* grow = &grad.w2[o * h];
      for (std::size_t i = 0; i < h; ++i) grow[i] += dz2[o] * hidden[i];
    }
    std::fill(dh.begin(), dh.end(), 0.0);
    for (std::size_t o = 0; o < m; ++o) {
      const double* wrow = &model.w2[o * h];
      for (std::size_t i = 0; i < h; ++i) dh[i] += wrow[i] * dz2[o];
    }
    for (std::size_t i = 0; i < h; ++i) {
      if (hidden[i] <= 0.0) continue;  // relu' is 0 at and below the kink
      grad.b1[i] += dh[i];
      double* grow = &grad.w1[i * d];
      for (std::size_t j = 0; j < d; ++j) grow[j] += dh[i] * ex.features[j];
    }
  }
  return total * inv_b;
}

MlpModel mlp_train(MlpModel model, const Dataset& train, const LabelScaler& scaler,
                   std::size_t epochs, double lr, std::size_t batch_size, std::uint64_t seed) {
  if (epochs < 1) throw ValidationError("mlp_train: epochs must be >= 1");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ValidationError("mlp_train: invalid learning rate");
  if (batch_size < 1) throw ValidationError("mlp_train: batch_size must be >= 1");

  std::vector<LabeledExample> examples;
  for (const auto* rec : train.split_records(Split::train)) {
    LabeledExample ex;
    ex.features = rec->features;
    ex.targets.reserve(rec->labels.size());
    for (double v : rec->labels) ex.targets.push_back(scaler.apply(v));
    examples.push_back(std::move(ex));
  }
  if (examples.empty()) throw ValidationError("mlp_train: empty training split");
  check_dim(examples[0].features.size(), model.input_dim, "mlp_train");
  if (examples[0].targets.size() != model.output_dim)
    throw ValidationError("mlp_train: pool size does not match output heads");

  model.scaler = scaler;
  model.order = train.pool.ids();

  SplitMix64 rng(seed);
  std::vector<std::size_t> perm(examples.size());
  std::iota(perm.begin(), perm.end(), 0);
  MlpGradient grad;
  std::vector<LabeledExample> batch;
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    // Fisher-Yates on the shared stream; one stream for the whole run keeps
    // the schedule a pure function of (data, hyperparameters, seed).
    for (std::size_t i = perm.size(); i > 1; --i)
      std::swap(perm[i - 1], perm[rng.next_below(i)]);
    for (std::size_t start = 0; start < perm.size(); start += batch_size) {
      const std::size_t end = std::min(start + batch_size, perm.size());
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(examples[perm[i]]);
      mlp_loss_grad(model, batch, grad);
      for (std::size_t i = 0; i < model.w1.size(); ++i) model.w1[i] -= lr * grad.w1[i];
      for (std::size_t i = 0; i < model.b1.size(); ++i) model.b1[i] -= lr * grad.b1[i];
      for (std::size_t i = 0; i < model.w2.size(); ++i) model.w2[i] -= lr * grad.w2[i];
      for (std::size_t i = 0; i < model.b2.size(); ++i) model.b2[i] -= lr * grad.b2[i];
    }
  }
  return model;
}

double gradient_check(const MlpModel& model, std::span<const LabeledExample> batch,
                      double epsilon) {
  if (!(epsilon > 0.0 && epsilon <= 1e-2))
    throw ValidationError("gradient_check: epsilon must be in (0, 1e-2]");
  MlpGradient grad;
  mlp_loss_grad(model, batch, grad);

  MlpModel probe = model;
  double max_rel = 0.0;
  auto sweep = [&](std::vector<double>& params, const std::vector<double>& analytic) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double saved = params[i];
      params[i] = saved + epsilon;
      const double up = mlp_loss(probe, batch);
      params[i] = saved - epsilon;
      const double down = mlp_loss(probe, batch);
      params[i] = saved;
      const double fd = (up - down) / (2.0 * epsilon);
      const double rel = std::abs(analytic[i] - fd) / std::max(std::abs(analytic[i]), 1e-8);
      max_rel = std::max(max_rel, rel);
    }
  };
  sweep(probe.w1, grad.w1);
  sweep(probe.b1, grad.b1);
  sweep(probe.w2, grad.w2);
  sweep(probe.b2, grad.b2);
  return max_rel;
}

std::string MlpModel::serialize() const {
  std::string out = "{\"format\":\"qcroute-estimator\",\"version\":1,\"type\":\"mlp\"";
  out += ",\"dims\":{\"d\":" + std::to_string(input_dim) + ",\"h\":" + std::to_string(hidden_dim) +
         ",\"m\":" + std::to_string(output_dim) + "}";
  out += ",\"seed\":" + std::to_string(seed);
  if (scaler)
    out += ",\"scaler\":{\"lo\":" + fmt_double(scaler->lo()) + ",\"hi\":" + fmt_double(scaler->hi()) +
           "}";
  out += ",\"model_order\":" + serialize_ids(order);
  out += ",\"w1\":" + serialize_vector(w1);
  out += ",\"b1\":" + serialize_vector(b1);
  out += ",\"w2\":" + serialize_vector(w2);
  out += ",\"b2\":" + serialize_vector(b2);
  out += "}\n";
  return out;
}

namespace {

std::vector<double> parse_vector(const json& j, const std::string& where) {
  if (!j.is_array()) throw ValidationError(where + ": expected array");
  std::vector<double> out;
  out.reserve(j.size());
  for (const auto& v : j) {
    if (!v.is_number()) throw ValidationError(where + ": expected numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

std::vector<std::vector<double>> parse_matrix(const json& j, const std::string& where) {
  if (!j.is_array()) throw ValidationError(where + ": expected array of arrays");
  std::vector<std::vector<double>> out;
  out.reserve(j.size());
  for (const auto& row : j) out.push_back(parse_vector(row, where));
  return out;
}

std::vector<std::string> parse_ids(const json& j, const std::string& where) {
  if (!j.is_array()) throw ValidationError(where + ": expected array of strings");
  std::vector<std::string> out;
  for (const auto& v : j) {
    if (!v.is_string()) throw ValidationError(where + ": expected strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

LabelScaler parse_scaler(const json& j) {
  if (!j.is_object() || !j.contains("lo") || !j.contains("hi"))
    throw ValidationError("estimator: malformed scaler");
  return LabelScaler(j["lo"].get<double>(), j["hi"].get<double>());
}

}  // namespace

std::unique_ptr<Estimator> load_estimator(std::string_view json_bytes) {
  json j = json::parse(json_bytes, nullptr, false);
  if (j.is_discarded()) throw ValidationError("estimator: invalid JSON");
  if (!j.is_object() || j.value("format", "") != "qcroute-estimator")
    throw ValidationError("estimator: not a qcroute-estimator document");
  if (j.value("version", 0) != 1) throw ValidationError("estimator: unsupported version");
  const std::string type = j.value("type", "");
  if (type == "knn") {
    auto features = parse_matrix(j.at("features"), "estimator features");
    auto labels = parse_matrix(j.at("labels"), "estimator labels");
    auto order = parse_ids(j.at("model_order"), "estimator model_order");
    return std::make_unique<KnnIndex>(std::move(features), std::move(labels),
                                      j.at("k").get<std::size_t>(), std::move(order),
                                      parse_scaler(j.at("scaler")));
  }
  if (type == "mlp") {
    auto model = std::make_unique<MlpModel>();
    const auto& dims = j.at("dims");
    model->input_dim = dims.at("d").get<std::size_t>();
    model->hidden_dim = dims.at("h").get<std::size_t>();
    model->output_dim = dims.at("m").get<std::size_t>();
    model->seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("scaler")) model->scaler = parse_scaler(j.at("scaler"));
    model->order = parse_ids(j.at("model_order"), "estimator model_order");
    model->w1 = parse_vector(j.at("w1"), "estimator w1");
    model->b1 = parse_vector(j.at("b1"), "estimator b1");
    model->w2 = parse_vector(j.at("w2"), "estimator w2");
    model->b2 = parse_vector(j.at("b2"), "estimator b2");
    if (model->w1.size() != model->hidden_dim * model->input_dim ||
        model->b1.size() != model->hidden_dim ||
        model->w2.size() != model->output_dim * model->hidden_dim ||
        model->b2.size() != model->output_dim)
      throw ValidationError("estimator: parameter shapes do not match dims");
    return model;
  }
  throw ValidationError("estimator: unknown type \"" + type + "\"");
}

}  // namespace qcroute
