#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <vector>

#include "crl/data.hpp"
#include "crl/metarm.hpp"
#include "crl/policy.hpp"
#include "crl/rng.hpp"

using namespace crl;

namespace {

std::vector<double> random_features(const MetaRmModel& model, Rng& rng) {
  std::vector<double> f(static_cast<std::size_t>(model.feature_dim()));
  f[0] = 1.0;
  for (std::size_t i = 1; i < f.size(); ++i) f[i] = rng.next_double();
  return f;
}

MetaRmModel random_model(int universe, MetaRmVariant variant, Rng& rng) {
  MetaRmModel m = MetaRmModel::zero_init(universe, 0.5, variant);
  for (double& w : m.weights) w = rng.next_gaussian() * 0.4;
  return m;
}

}  // namespace

TEST_CASE("featurize: bias, label match, slot/polarity indicators, count, repeat flag") {
  PreferenceSample s;
  s.id = "s0";
  s.label = Side::B;
  RolloutRecord rec;
  rec.predicted_label = Side::B;
  rec.format_valid = true;
  rec.argument_set.arguments = {{"k0", Side::A, Polarity::Positive, false},
                                {"k2", Side::A, Polarity::Negative, false}};
  const int universe = 3;
  const std::vector<double> f = metarm_featurize(s, rec, universe);
  REQUIRE(f.size() == static_cast<std::size_t>(4 + 2 * universe));
  CHECK(f[0] == 1.0);  // bias
  CHECK(f[1] == 1.0);  // label matches the sample's label
  CHECK(f[2] == 1.0);  // k0 positive
  CHECK(f[3] == 0.0);  // k0 negative
  CHECK(f[4] == 0.0);  // k1 positive
  CHECK(f[5] == 0.0);  // k1 negative
  CHECK(f[6] == 0.0);  // k2 positive
  CHECK(f[7] == 1.0);  // k2 negative
  CHECK(f[8] == doctest::Approx(2.0 / 3.0));  // count / universe
  CHECK(f[9] == 0.0);  // no repeats

  RolloutRecord repeated = rec;
  repeated.argument_set.arguments.push_back({"k0", Side::A, Polarity::Positive, false});
  const std::vector<double> fr = metarm_featurize(s, repeated, universe);
  CHECK(fr[9] == 1.0);
}

TEST_CASE("prediction is clamped to [0, 1 + lambda]") {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    MetaRmModel m = random_model(3, MetaRmVariant::Regression, rng);
    for (double& w : m.weights) w *= 20.0;  // force raw scores far outside the band
    const std::vector<double> f = random_features(m, rng);
    const double y = metarm_predict(m, f);
    REQUIRE(y >= 0.0);
    REQUIRE(y <= 1.0 + m.lambda);
  }
}

TEST_CASE("binary variant thresholds at the midpoint") {
  Rng rng(5);
  MetaRmModel m = random_model(2, MetaRmVariant::Binary, rng);
  const std::vector<double> f = random_features(m, rng);
  const double raw = metarm_raw_score(m, f);
  const double y = metarm_predict(m, f);
  const double mid = (1.0 + m.lambda) / 2.0;
  if (raw > mid) {
    CHECK(y == 1.0 + m.lambda);
  } else {
    CHECK(y == 0.0);
  }
}

TEST_CASE("MSE gradient matches central finite differences") {
  Rng rng(7);
  for (MetaRmVariant variant :
       {MetaRmVariant::Regression, MetaRmVariant::Classifier}) {
    for (int trial = 0; trial < 40; ++trial) {
      MetaRmModel m = random_model(3, variant, rng);
      std::vector<MetaRmTarget> targets;
      const double values[] = {-1.0, 0.0, 1.0, 1.25};
      for (int i = 0; i < 6; ++i) {
        targets.push_back({random_features(m, rng),
                           values[rng.next_below(4)]});
      }
      const std::vector<double> grad = mse_gradient(m, targets);
      REQUIRE(grad.size() == m.weights.size());
      const double h = 1e-6;
      for (std::size_t k = 0; k < m.weights.size(); k += 3) {
        MetaRmModel plus = m, minus = m;
        plus.weights[k] += h;
        minus.weights[k] -= h;
        const double fd = (mse_loss(plus, targets) - mse_loss(minus, targets)) / (2.0 * h);
        const double denom = std::max({std::abs(fd), std::abs(grad[k]), 1e-4});
        REQUIRE(std::abs(fd - grad[k]) / denom <= 1e-5);
      }
    }
  }
}

TEST_CASE("contradictory targets converge to their mean") {
  MetaRmModel m = MetaRmModel::zero_init(2, 0.5, MetaRmVariant::Regression);
  std::vector<double> f(static_cast<std::size_t>(m.feature_dim()), 0.0);
  f[0] = 1.0;
  f[2] = 1.0;
  std::vector<MetaRmTarget> targets{{f, 0.0}, {f, 1.5}, {f, 0.0}, {f, 1.5}};
  MseTrainOptions opts;
  opts.epochs = 4000;
  opts.learning_rate = 0.05;
  const MetaRmModel trained = mse_train(m, targets, opts);
  CHECK(metarm_raw_score(trained, f) == doctest::Approx(0.75).epsilon(1e-3));
  CHECK(trained.version == m.version + 1);
  // input untouched
  for (double w : m.weights) CHECK(w == 0.0);
}

TEST_CASE("training is deterministic in the seed") {
  Rng rng(11);
  MetaRmModel m = MetaRmModel::zero_init(3, 0.5, MetaRmVariant::Regression);
  std::vector<MetaRmTarget> targets;
  for (int i = 0; i < 20; ++i) {
    targets.push_back({random_features(m, rng), rng.next_double() * 1.5});
  }
  MseTrainOptions opts;
  opts.epochs = 3;
  opts.batch_size = 4;
  opts.seed = 77;
  const MetaRmModel a = mse_train(m, targets, opts);
  const MetaRmModel b = mse_train(m, targets, opts);
  for (std::size_t i = 0; i < a.weights.size(); ++i) REQUIRE(a.weights[i] == b.weights[i]);
}

TEST_CASE("build_targets scores rollouts against human critiques") {
  GeneratorConfig config;
  config.universe_size = 3;
  config.n_samples = 10;
  config.fraction_with_critique = 1.0;
  auto [env, samples] = generate_environment(config, 21);
  const ToyPolicy policy = ToyPolicy::zero_init(3);
  ColdStartOptions opts;
  opts.n_sample = 4;
  opts.seed = 5;
  const std::vector<MetaRmTarget> targets = build_targets(policy, samples, opts);
  CHECK(!targets.empty());
  // every target is a legal composite value for lambda = 0.5
  for (const MetaRmTarget& t : targets) {
    const bool legal = t.target == -1.0 || t.target == 0.0 || t.target == 1.0 || t.target == 1.5;
    REQUIRE(legal);
    // format-invalid rollouts are excluded by default, so -1 never appears
    REQUIRE(t.target != -1.0);
  }
  ColdStartOptions with_invalid = opts;
  with_invalid.include_format_invalid = true;
  const std::vector<MetaRmTarget> all = build_targets(policy, samples, with_invalid);
  CHECK(all.size() >= targets.size());
}

TEST_CASE("online update: empty targets are a no-op, fresh ones move the model") {
  Rng rng(13);
  MetaRmModel m = random_model(2, MetaRmVariant::Regression, rng);
  const MetaRmModel same = online_update(m, {}, 0.05, 1);
  for (std::size_t i = 0; i < m.weights.size(); ++i) CHECK(same.weights[i] == m.weights[i]);
  std::vector<MetaRmTarget> targets{{random_features(m, rng), 1.5}};
  const MetaRmModel moved = online_update(m, targets, 0.05, 1);
  bool any = false;
  for (std::size_t i = 0; i < m.weights.size(); ++i) any |= moved.weights[i] != m.weights[i];
  CHECK(any);
  CHECK(moved.version == m.version + 1);
}

TEST_CASE("checkpoint round-trip") {
  Rng rng(17);
  const MetaRmModel m = random_model(3, MetaRmVariant::Classifier, rng);
  const auto path = std::filesystem::temp_directory_path() / "crl_metarm_test.ckpt";
  save_metarm(m, path.string());
  const MetaRmModel loaded = load_metarm(path.string());
  std::filesystem::remove(path);
  CHECK(loaded.universe_size == m.universe_size);
  CHECK(loaded.lambda == m.lambda);
  CHECK(loaded.variant == m.variant);
  CHECK(loaded.version == m.version);
  REQUIRE(loaded.weights.size() == m.weights.size());
  for (std::size_t i = 0; i < m.weights.size(); ++i) CHECK(loaded.weights[i] == m.weights[i]);
}
