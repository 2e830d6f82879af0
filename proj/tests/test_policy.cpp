#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <vector>

#include "crl/data.hpp"
#include "crl/policy.hpp"
#include "crl/rng.hpp"

using namespace crl;

namespace {

PreferenceSample make_sample(int universe_size, Rng& rng) {
  PreferenceSample s;
  s.id = "s0";
  s.query = "q";
  s.response_a = "Response A.";
  s.response_b = "Response B.";
  for (int i = 0; i < universe_size; ++i) {
    if (rng.next_bool()) {
      std::string& text = rng.next_bool() ? s.response_a : s.response_b;
      text += " mentions #" + slot_key(i) + "# here.";
    }
  }
  s.label = rng.next_bool() ? Side::A : Side::B;
  return s;
}

ToyPolicy random_policy(int universe_size, Rng& rng, bool garble = true) {
  ToyPolicy p = ToyPolicy::zero_init(universe_size, garble);
  for (double& w : p.weights) w = rng.next_gaussian() * 0.3;
  return p;
}

}  // namespace

TEST_CASE("features: bias plus marker indicators") {
  PreferenceSample s;
  s.response_a = "text with #k0# marker";
  s.response_b = "other text with #k2# marker";
  const std::vector<double> f = extract_features(s, 4);
  REQUIRE(f.size() == 5);
  CHECK(f[0] == 1.0);
  CHECK(f[1] == 1.0);  // k0
  CHECK(f[2] == 0.0);  // k1
  CHECK(f[3] == 1.0);  // k2
  CHECK(f[4] == 0.0);  // k3
}

TEST_CASE("decode maps decisions to labels and argument tuples") {
  // label A, slot 0 omitted, slot 1 positive, slot 2 negative
  const DecodeResult r = decode(std::vector<int>{0, 0, 1, 2});
  CHECK(r.format_valid);
  CHECK(r.predicted_label == Side::A);
  REQUIRE(r.argument_set.size() == 2);
  CHECK(r.argument_set.arguments[0].content_key == "k1");
  CHECK(r.argument_set.arguments[0].target == Side::B);
  CHECK(r.argument_set.arguments[0].polarity == Polarity::Positive);
  CHECK(r.argument_set.arguments[1].content_key == "k2");
  CHECK(r.argument_set.arguments[1].target == Side::A);
  CHECK(r.argument_set.arguments[1].polarity == Polarity::Negative);

  const DecodeResult b = decode(std::vector<int>{1, 0, 0});
  CHECK(b.predicted_label == Side::B);
  CHECK(b.format_valid);

  // garble: invalid format, no arguments scored
  const DecodeResult g = decode(std::vector<int>{2, 1, 1});
  CHECK_FALSE(g.format_valid);
}

TEST_CASE("probabilities: tempered softmax sums to one; garble maskable") {
  Rng rng(5);
  const ToyPolicy p = random_policy(3, rng);
  const std::vector<double> f{1.0, 0.0, 1.0, 1.0};
  for (int d = 0; d < p.n_decisions(); ++d) {
    const std::vector<double> probs = p.probabilities(d, f, 0.7);
    double sum = 0.0;
    for (double q : probs) sum += q;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
  ToyPolicy masked = p;
  masked.garble_enabled = false;
  const std::vector<double> label_probs = masked.probabilities(0, f, 0.7);
  CHECK(label_probs[ToyPolicy::kChoiceGarble] == 0.0);
}

TEST_CASE("rollouts are deterministic in the seed and record sampling logprobs") {
  Rng rng(11);
  const PreferenceSample s = make_sample(4, rng);
  const ToyPolicy p = random_policy(4, rng);
  const std::vector<RolloutRecord> a = rollout(p, s, 6, 0.7, 99);
  const std::vector<RolloutRecord> b = rollout(p, s, 6, 0.7, 99);
  const std::vector<RolloutRecord> c = rollout(p, s, 6, 0.7, 100);
  REQUIRE(a.size() == 6);
  bool identical = true, differs_from_c = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].decisions != b[i].decisions) identical = false;
    if (a[i].decisions != c[i].decisions) differs_from_c = true;
    // recorded logprobs match the policy's own probabilities
    const std::vector<double> f = extract_features(s, 4);
    for (int d = 0; d < p.n_decisions(); ++d) {
      const std::vector<double> probs = p.probabilities(d, f, 0.7);
      REQUIRE(a[i].logprobs_old[static_cast<std::size_t>(d)] ==
              doctest::Approx(std::log(probs[static_cast<std::size_t>(
                  a[i].decisions[static_cast<std::size_t>(d)])])).epsilon(1e-12));
    }
  }
  CHECK(identical);
  CHECK(differs_from_c);
}

TEST_CASE("surrogate gradient matches central finite differences") {
  Rng rng(7);
  int checked = 0;
  for (int trial = 0; trial < 120; ++trial) {
    const int universe = 2 + static_cast<int>(rng.next_below(3));  // U in [2,4]
    const int n = 2 + static_cast<int>(rng.next_below(3));         // rollouts in [2,4]
    const PreferenceSample s = make_sample(universe, rng);
    const ToyPolicy sampling = random_policy(universe, rng);
    const ToyPolicy ref = random_policy(universe, rng);
    std::vector<RolloutRecord> rollouts = rollout(sampling, s, n, 0.7, trial);
    // Evaluate at a nearby (not identical) policy so importance ratios != 1.
    ToyPolicy theta = sampling;
    for (double& w : theta.weights) w += rng.next_gaussian() * 0.05;
    std::vector<double> advantages;
    for (int i = 0; i < n; ++i) advantages.push_back(rng.next_gaussian());

    // The clipped surrogate is non-differentiable where a decision's
    // importance ratio sits on 1 +- epsilon; skip instances near the kink so
    // finite differences never straddle both branches.
    const std::vector<double> f = extract_features(s, universe);
    bool near_kink = false;
    for (const RolloutRecord& rec : rollouts) {
      for (int d = 0; d < theta.n_decisions(); ++d) {
        const std::vector<double> probs = theta.probabilities(d, f, 0.7);
        const int choice = rec.decisions[static_cast<std::size_t>(d)];
        const double ratio = std::exp(std::log(probs[static_cast<std::size_t>(choice)]) -
                                      rec.logprobs_old[static_cast<std::size_t>(d)]);
        if (std::abs(ratio - 1.2) < 1e-3 || std::abs(ratio - 0.8) < 1e-3) near_kink = true;
      }
    }
    if (near_kink) continue;

    const SurrogateResult base =
        surrogate_loss(theta, rollouts, advantages, 0.2, 0.01, ref, 0.7);
    REQUIRE(base.gradient.size() == theta.weights.size());
    const double h = 1e-6;
    for (std::size_t k = 0; k < theta.weights.size(); k += 7) {
      ToyPolicy plus = theta, minus = theta;
      plus.weights[k] += h;
      minus.weights[k] -= h;
      const double lp = surrogate_loss(plus, rollouts, advantages, 0.2, 0.01, ref, 0.7).loss;
      const double lm = surrogate_loss(minus, rollouts, advantages, 0.2, 0.01, ref, 0.7).loss;
      const double fd = (lp - lm) / (2.0 * h);
      const double analytic = base.gradient[k];
      const double denom = std::max({std::abs(fd), std::abs(analytic), 1e-4});
      REQUIRE(std::abs(fd - analytic) / denom <= 1e-5);
      ++checked;
    }
  }
  CHECK(checked > 300);  // the kink skip must not swallow the test
}

TEST_CASE("policy update applies the gradient and honors norm clipping") {
  Rng rng(13);
  const ToyPolicy p = random_policy(2, rng);
  std::vector<double> grad(p.weights.size(), 0.0);
  grad[0] = 3.0;
  grad[1] = 4.0;  // norm 5
  const ToyPolicy stepped = policy_update(p, grad, 0.1);
  CHECK(stepped.weights[0] == doctest::Approx(p.weights[0] - 0.3));
  CHECK(stepped.weights[1] == doctest::Approx(p.weights[1] - 0.4));
  const ToyPolicy clipped = policy_update(p, grad, 0.1, 1.0);  // scale by 1/5
  CHECK(clipped.weights[0] == doctest::Approx(p.weights[0] - 0.3 / 5.0));
  std::vector<double> bad(p.weights.size(), 0.0);
  bad[0] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(policy_update(p, bad, 0.1), std::runtime_error);
}

TEST_CASE("checkpoint round-trip") {
  Rng rng(17);
  const ToyPolicy p = random_policy(3, rng);
  const auto path = std::filesystem::temp_directory_path() / "crl_policy_test.ckpt";
  save_policy(p, 42, "digesthex", path.string());
  int step = 0;
  std::string digest;
  const ToyPolicy loaded = load_policy(path.string(), &step, &digest);
  std::filesystem::remove(path);
  CHECK(step == 42);
  CHECK(digest == "digesthex");
  CHECK(loaded.universe_size == p.universe_size);
  CHECK(loaded.garble_enabled == p.garble_enabled);
  REQUIRE(loaded.weights.size() == p.weights.size());
  for (std::size_t i = 0; i < p.weights.size(); ++i) {
    CHECK(loaded.weights[i] == p.weights[i]);  // exact round-trip
  }
}
