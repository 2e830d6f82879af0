#include "crl/metarm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "crl/reward.hpp"
#include "crl/rng.hpp"
#include "crl/similarity.hpp"

namespace crl {

const char* to_string(MetaRmVariant variant) {
  switch (variant) {
    case MetaRmVariant::Regression: return "regression";
    case MetaRmVariant::Binary: return "binary";
    case MetaRmVariant::Classifier: return "classifier";
  }
  return "regression";
}

MetaRmVariant metarm_variant_from_string(const std::string& name) {
  if (name == "regression") return MetaRmVariant::Regression;
  if (name == "binary") return MetaRmVariant::Binary;
  if (name == "classifier") return MetaRmVariant::Classifier;
  throw ConfigError("unknown metarm variant: " + name);
}

MetaRmModel MetaRmModel::zero_init(int universe_size, double lambda, MetaRmVariant variant) {
  MetaRmModel model;
  model.universe_size = universe_size;
  model.lambda = lambda;
  model.variant = variant;
  model.weights.assign(model.n_weights(), 0.0);
  return model;
}

std::vector<double> metarm_featurize(const PreferenceSample& sample, const RolloutRecord& rollout,
                                     int universe_size) {
  std::vector<double> features(4 + 2 * universe_size, 0.0);
  features[0] = 1.0;
  features[1] = rollout.predicted_label == sample.label ? 1.0 : 0.0;
  for (const Argument& arg : rollout.argument_set.arguments) {
    const int slot = slot_of_key(arg.content_key, universe_size);
    if (slot < 0) {
      throw std::invalid_argument("argument key outside universe: " + arg.content_key);
    }
    const int polarity_bit = arg.polarity == Polarity::Negative ? 1 : 0;
    features[2 + 2 * slot + polarity_bit] = 1.0;
  }
  features[2 + 2 * universe_size] =
      static_cast<double>(rollout.argument_set.size()) / universe_size;
  features[3 + 2 * universe_size] = repeated_argument_check(rollout.argument_set) ? 1.0 : 0.0;
  return features;
}

namespace {

double dot(std::span<const double> w, std::span<const double> x, int offset = 0) {
  double z = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) z += w[offset + i] * x[i];
  return z;
}

// Classifier class values mirror the three composite-reward regimes; the
// rewarded class sits at the midpoint of [1, 1+lambda].
void class_values(double lambda, double out[3]) {
  out[0] = -1.0;
  out[1] = 0.0;
  out[2] = 1.0 + lambda / 2.0;
}

int target_class(double target) {
  if (target < -0.5) return 0;
  if (target < 0.5) return 1;
  return 2;
}

std::vector<double> class_probabilities(const MetaRmModel& model,
                                        std::span<const double> features) {
  const int dim = model.feature_dim();
  std::vector<double> logits(3);
  for (int c = 0; c < 3; ++c) logits[c] = dot(model.weights, features, c * dim);
  const double max_z = std::max({logits[0], logits[1], logits[2]});
  double sum = 0.0;
  for (double& z : logits) {
    z = std::exp(z - max_z);
    sum += z;
  }
  for (double& z : logits) z /= sum;
  return logits;
}

}  // namespace

double metarm_raw_score(const MetaRmModel& model, std::span<const double> features) {
  if (static_cast<int>(features.size()) != model.feature_dim()) {
    throw std::invalid_argument("feature dimension mismatch");
  }
  if (model.variant == MetaRmVariant::Classifier) {
    const std::vector<double> probs = class_probabilities(model, features);
    double values[3];
    class_values(model.lambda, values);
    return probs[0] * values[0] + probs[1] * values[1] + probs[2] * values[2];
  }
  return dot(model.weights, features);
}

double metarm_predict(const MetaRmModel& model, std::span<const double> features) {
  const double raw = metarm_raw_score(model, features);
  const double ceiling = 1.0 + model.lambda;
  if (model.variant == MetaRmVariant::Binary) {
    return raw >= 0.5 * ceiling ? ceiling : 0.0;
  }
  return std::clamp(raw, 0.0, ceiling);
}

double mse_loss(const MetaRmModel& model, std::span<const MetaRmTarget> targets) {
  if (targets.empty()) return 0.0;
  double loss = 0.0;
  if (model.variant == MetaRmVariant::Classifier) {
    for (const MetaRmTarget& t : targets) {
      const std::vector<double> probs = class_probabilities(model, t.features);
      loss += -std::log(std::max(probs[target_class(t.target)], 1e-300));
    }
  } else {
    for (const MetaRmTarget& t : targets) {
      const double err = dot(model.weights, t.features) - t.target;
      loss += err * err;
    }
  }
  return loss / static_cast<double>(targets.size());
}

std::vector<double> mse_gradient(const MetaRmModel& model, std::span<const MetaRmTarget> targets) {
  std::vector<double> grad(model.weights.size(), 0.0);
  if (targets.empty()) return grad;
  const double inv_n = 1.0 / static_cast<double>(targets.size());
  const int dim = model.feature_dim();
  if (model.variant == MetaRmVariant::Classifier) {
    for (const MetaRmTarget& t : targets) {
      const std::vector<double> probs = class_probabilities(model, t.features);
      const int cls = target_class(t.target);
      for (int c = 0; c < 3; ++c) {
        const double dz = probs[c] - (c == cls ? 1.0 : 0.0);
        for (int f = 0; f < dim; ++f) grad[c * dim + f] += inv_n * dz * t.features[f];
      }
    }
  } else {
    for (const MetaRmTarget& t : targets) {
      const double err = dot(model.weights, t.features) - t.target;
      for (int f = 0; f < dim; ++f) grad[f] += inv_n * 2.0 * err * t.features[f];
    }
  }
  return grad;
}

MetaRmModel mse_train(const MetaRmModel& model, std::span<const MetaRmTarget> targets,
                      const MseTrainOptions& options) {
  if (targets.empty()) throw std::invalid_argument("mse_train requires targets");
  if (options.epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  for (const MetaRmTarget& t : targets) {
    if (static_cast<int>(t.features.size()) != model.feature_dim()) {
      throw std::invalid_argument("target feature dimension mismatch");
    }
  }

  MetaRmModel trained = model;
  Rng rng(options.seed);
  const int n = static_cast<int>(targets.size());
  const int batch = options.batch_size > 0 ? std::min(options.batch_size, n) : n;

  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    if (batch < n) order = rng.permutation(n);
    for (int start = 0; start < n; start += batch) {
      const int end = std::min(start + batch, n);
      std::vector<MetaRmTarget> minibatch;
      minibatch.reserve(end - start);
      for (int i = start; i < end; ++i) minibatch.push_back(targets[order[i]]);
      const std::vector<double> grad = mse_gradient(trained, minibatch);
      for (std::size_t i = 0; i < trained.weights.size(); ++i) {
        trained.weights[i] -= options.learning_rate * grad[i];
        if (!std::isfinite(trained.weights[i])) {
          throw std::runtime_error("non-finite MetaRM weights during training");
        }
      }
    }
  }
  trained.version = model.version + 1;
  return trained;
}

std::vector<MetaRmTarget> build_targets(const ToyPolicy& policy,
                                        std::span<const PreferenceSample> d_h,
                                        const ColdStartOptions& options) {
  std::vector<MetaRmTarget> targets;
  for (std::size_t s = 0; s < d_h.size(); ++s) {
    const PreferenceSample& sample = d_h[s];
    if (!sample.human_critique) {
      throw std::invalid_argument("sample without human critique in D_H: " + sample.id);
    }
    const std::vector<RolloutRecord> rollouts =
        rollout(policy, sample, options.n_sample, options.temperature,
                mix_seed(options.seed, s));
    for (const RolloutRecord& rec : rollouts) {
      double composite;
      if (!rec.format_valid) {
        if (!options.include_format_invalid) continue;
        composite = -1.0;
      } else {
        const SimilarityScores scores =
            compute_similarity(*sample.human_critique, rec.argument_set, MatchMode::Core);
        const int r_process = process_reward(scores.f1);
        composite = composite_reward(true, rec.predicted_label == sample.label, r_process,
                                     options.lambda, options.outcome_regularization);
      }
      targets.push_back({metarm_featurize(sample, rec, policy.universe_size), composite});
    }
  }
  return targets;
}

MetaRmModel cold_start(const ToyPolicy& policy, std::span<const PreferenceSample> d_h,
                       const ColdStartOptions& options) {
  if (d_h.empty()) throw std::invalid_argument("cold_start requires a non-empty D_H");
  const std::vector<MetaRmTarget> targets = build_targets(policy, d_h, options);
  MetaRmModel model = MetaRmModel::zero_init(policy.universe_size, options.lambda,
                                             options.variant);
  if (targets.empty()) return model;
  MseTrainOptions train;
  train.epochs = options.epochs;
  train.learning_rate = options.learning_rate;
  train.batch_size = options.batch_size;
  train.seed = mix_seed(options.seed, 0x636f6c64);
  return mse_train(model, targets, train);
}

MetaRmModel online_update(const MetaRmModel& model, std::span<const MetaRmTarget> fresh_targets,
                          double learning_rate, int epochs_per_round, std::uint64_t seed,
                          int batch_size) {
  if (fresh_targets.empty()) return model;
  MseTrainOptions train;
  train.epochs = epochs_per_round;
  train.learning_rate = learning_rate;
  train.batch_size = batch_size;
  train.seed = seed;
  return mse_train(model, fresh_targets, train);
}

void save_metarm(const MetaRmModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write MetaRM checkpoint: " + path);
  out << "metarm v1\n";
  out << "universe_size " << model.universe_size << "\n";
  out.precision(17);
  out << "lambda " << model.lambda << "\n";
  out << "variant " << to_string(model.variant) << "\n";
  out << "version " << model.version << "\n";
  out << "weights " << model.weights.size() << "\n";
  for (double w : model.weights) out << w << "\n";
}

MetaRmModel load_metarm(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open MetaRM checkpoint: " + path);
  std::string magic, version_tag;
  in >> magic >> version_tag;
  if (magic != "metarm" || version_tag != "v1") {
    throw ParseError("unrecognized MetaRM checkpoint format: " + path);
  }
  MetaRmModel model;
  std::string key, variant_name;
  std::size_t n_weights = 0;
  in >> key >> model.universe_size;
  in >> key >> model.lambda;
  in >> key >> variant_name;
  in >> key >> model.version;
  in >> key >> n_weights;
  model.variant = metarm_variant_from_string(variant_name);
  model.weights.resize(n_weights);
  for (std::size_t i = 0; i < n_weights; ++i) in >> model.weights[i];
  if (!in) throw ParseError("truncated MetaRM checkpoint: " + path);
  if (n_weights != static_cast<std::size_t>(model.n_weights())) {
    throw ParseError("MetaRM checkpoint weight count mismatch: " + path);
  }
  return model;
}

}  // namespace crl
