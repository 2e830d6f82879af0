#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "crl/data.hpp"
#include "crl/reward.hpp"

namespace crl {

// Per-decision categorical policy over one pairwise sample:
//   decision 0        : preference label, 3 ways (A, B, garble)
//   decisions 1..U    : argument slot k-1, 3 ways (omit, include-positive,
//                       include-negative)
// The garble choice models format-invalid output; `garble_bias` shifts its
// logit so the invalid fraction is configurable at initialization.
struct ToyPolicy {
  int universe_size = 0;
  bool garble_enabled = true;
  double garble_bias = -2.0;
  std::vector<double> weights;  // n_decisions * feature_dim * kChoices

  static constexpr int kChoices = 3;
  static constexpr int kChoiceGarble = 2;

  int feature_dim() const { return 1 + universe_size; }
  int n_decisions() const { return 1 + universe_size; }
  int n_params() const { return n_decisions() * feature_dim() * kChoices; }

  static ToyPolicy zero_init(int universe_size, bool garble_enabled = true,
                             double garble_bias = -2.0);

  // Flat weight index for (decision, feature, choice).
  int index(int decision, int feature, int choice) const {
    return (decision * feature_dim() + feature) * kChoices + choice;
  }

  // Raw logits (garble bias applied; garble masked to -inf when disabled).
  std::vector<double> logits(int decision, std::span<const double> features) const;
  // Tempered softmax probabilities for one decision.
  std::vector<double> probabilities(int decision, std::span<const double> features,
                                    double temperature) const;
};

struct RolloutRecord {
  std::string sample_id;
  std::vector<int> decisions;
  ArgumentSet argument_set;
  Side predicted_label = Side::A;
  bool format_valid = true;
  std::vector<double> logprobs_old;
  std::vector<double> features;  // shared context for every decision
};

struct DecodeResult {
  ArgumentSet argument_set;
  Side predicted_label = Side::A;
  bool format_valid = true;
};

// Sample features: bias plus one indicator per universe slot whose marker
// token ("#k<i>#") appears in either response text.
std::vector<double> extract_features(const PreferenceSample& sample, int universe_size);

// Deterministic, total decode of a decision vector.
DecodeResult decode(std::span<const int> decisions);

std::vector<RolloutRecord> rollout(const ToyPolicy& policy, const PreferenceSample& sample,
                                   int n, double temperature, std::uint64_t seed);

struct SurrogateResult {
  double loss = 0.0;
  std::vector<double> gradient;  // d loss / d weights
};

// Clipped importance-ratio surrogate with exact per-decision categorical KL
// against `ref_policy`. `advantages` is aligned with `rollouts` and each
// rollout's advantage is broadcast across its decisions. Returns the
// negated objective and its gradient.
SurrogateResult surrogate_loss(const ToyPolicy& policy, std::span<const RolloutRecord> rollouts,
                               std::span<const double> advantages, double epsilon, double beta,
                               const ToyPolicy& ref_policy, double temperature);

// One first-order step; `grad_clip_norm` <= 0 disables clipping.
ToyPolicy policy_update(const ToyPolicy& policy, std::span<const double> gradient,
                        double learning_rate, double grad_clip_norm = 0.0);

void save_policy(const ToyPolicy& policy, int step, const std::string& config_digest,
                 const std::string& path);
ToyPolicy load_policy(const std::string& path, int* step = nullptr,
                      std::string* config_digest = nullptr);

}  // namespace crl
