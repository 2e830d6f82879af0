#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "crl/data.hpp"
#include "crl/policy.hpp"

namespace crl {

enum class MetaRmVariant { Regression, Binary, Classifier };

const char* to_string(MetaRmVariant variant);
MetaRmVariant metarm_variant_from_string(const std::string& name);

// Linear scalar reward regressor over hand-built critique features.
// Regression/Binary use one weight vector; Classifier keeps three linear
// heads over {invalid-like, zero-like, rewarded-like} target classes.
struct MetaRmModel {
  int universe_size = 0;
  double lambda = 0.5;
  MetaRmVariant variant = MetaRmVariant::Regression;
  std::vector<double> weights;
  int version = 0;

  // bias, label-match, one slot*polarity indicator pair per universe slot,
  // normalized argument count, repeated flag
  int feature_dim() const { return 4 + 2 * universe_size; }
  int n_weights() const {
    return variant == MetaRmVariant::Classifier ? 3 * feature_dim() : feature_dim();
  }

  static MetaRmModel zero_init(int universe_size, double lambda,
                               MetaRmVariant variant = MetaRmVariant::Regression);
};

struct MetaRmTarget {
  std::vector<double> features;
  double target = 0.0;
};

std::vector<double> metarm_featurize(const PreferenceSample& sample, const RolloutRecord& rollout,
                                     int universe_size);

// Raw affine score (regression/binary) before clamping; classifier returns
// the expected class value. Exposed for training and tests.
double metarm_raw_score(const MetaRmModel& model, std::span<const double> features);

// Clamped prediction in [0, 1 + lambda].
double metarm_predict(const MetaRmModel& model, std::span<const double> features);

struct MseTrainOptions {
  int epochs = 1;
  double learning_rate = 0.05;
  std::uint64_t seed = 0;
  int batch_size = 0;  // 0 = full batch
};

// Gradient descent on the unclamped score (MSE) or on cross-entropy for the
// classifier variant. Deterministic given the seed; the input model is left
// unmodified.
MetaRmModel mse_train(const MetaRmModel& model, std::span<const MetaRmTarget> targets,
                      const MseTrainOptions& options);

double mse_loss(const MetaRmModel& model, std::span<const MetaRmTarget> targets);
std::vector<double> mse_gradient(const MetaRmModel& model, std::span<const MetaRmTarget> targets);

struct ColdStartOptions {
  int n_sample = 8;
  int epochs = 3;
  double learning_rate = 0.05;
  int batch_size = 4;
  double temperature = 0.7;
  double lambda = 0.5;
  std::uint64_t seed = 0;
  MetaRmVariant variant = MetaRmVariant::Regression;
  bool include_format_invalid = false;  // when true, invalid rollouts train at -1
  bool outcome_regularization = true;
};

// Builds MSE targets by scoring rollouts of `policy` against each sample's
// human critique (core-argument similarity) through the composite reward.
std::vector<MetaRmTarget> build_targets(const ToyPolicy& policy,
                                        std::span<const PreferenceSample> d_h,
                                        const ColdStartOptions& options);

MetaRmModel cold_start(const ToyPolicy& policy, std::span<const PreferenceSample> d_h,
                       const ColdStartOptions& options);

// One online round; empty target lists return the model unchanged.
MetaRmModel online_update(const MetaRmModel& model, std::span<const MetaRmTarget> fresh_targets,
                          double learning_rate, int epochs_per_round, std::uint64_t seed = 0,
                          int batch_size = 4);

void save_metarm(const MetaRmModel& model, const std::string& path);
MetaRmModel load_metarm(const std::string& path);

}  // namespace crl
