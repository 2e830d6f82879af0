#include "crl/policy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "crl/rng.hpp"

namespace crl {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::vector<double> log_softmax(std::span<const double> logits, double temperature) {
  std::vector<double> z(logits.size());
  double max_z = kNegInf;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    z[i] = logits[i] / temperature;
    max_z = std::max(max_z, z[i]);
  }
  double sum = 0.0;
  for (double& v : z) sum += std::exp(v - max_z);
  const double log_denom = max_z + std::log(sum);
  for (double& v : z) v -= log_denom;
  return z;
}

}  // namespace

ToyPolicy ToyPolicy::zero_init(int universe_size, bool garble_enabled, double garble_bias) {
  ToyPolicy policy;
  policy.universe_size = universe_size;
  policy.garble_enabled = garble_enabled;
  policy.garble_bias = garble_bias;
  policy.weights.assign(policy.n_params(), 0.0);
  return policy;
}

std::vector<double> ToyPolicy::logits(int decision, std::span<const double> features) const {
  std::vector<double> out(kChoices, 0.0);
  for (int c = 0; c < kChoices; ++c) {
    double z = 0.0;
    for (int f = 0; f < feature_dim(); ++f) {
      z += weights[index(decision, f, c)] * features[f];
    }
    out[c] = z;
  }
  if (decision == 0) {
    if (!garble_enabled) {
      out[kChoiceGarble] = kNegInf;
    } else {
      out[kChoiceGarble] += garble_bias;
    }
  }
  return out;
}

std::vector<double> ToyPolicy::probabilities(int decision, std::span<const double> features,
                                             double temperature) const {
  std::vector<double> lp = log_softmax(logits(decision, features), temperature);
  for (double& v : lp) v = std::exp(v);
  return lp;
}

std::vector<double> extract_features(const PreferenceSample& sample, int universe_size) {
  std::vector<double> features(1 + universe_size, 0.0);
  features[0] = 1.0;
  const std::string text = sample.response_a + "\n" + sample.response_b;
  for (int i = 0; i < universe_size; ++i) {
    const std::string marker = "#" + slot_key(i) + "#";
    if (text.find(marker) != std::string::npos) features[1 + i] = 1.0;
  }
  return features;
}

DecodeResult decode(std::span<const int> decisions) {
  if (decisions.empty()) throw std::invalid_argument("empty decision vector");
  DecodeResult result;
  const int label_choice = decisions[0];
  if (label_choice == ToyPolicy::kChoiceGarble) {
    result.format_valid = false;
    result.predicted_label = Side::A;
  } else {
    result.predicted_label = label_choice == 0 ? Side::A : Side::B;
  }
  for (std::size_t d = 1; d < decisions.size(); ++d) {
    const int choice = decisions[d];
    if (choice == 0) continue;
    const int slot = static_cast<int>(d) - 1;
    Argument arg;
    arg.content_key = slot_key(slot);
    arg.target = slot_target(slot);
    arg.polarity = choice == 1 ? Polarity::Positive : Polarity::Negative;
    result.argument_set.arguments.push_back(std::move(arg));
  }
  return result;
}

std::vector<RolloutRecord> rollout(const ToyPolicy& policy, const PreferenceSample& sample,
                                   int n, double temperature, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("rollout count must be >= 1");
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be > 0");
  const std::vector<double> features = extract_features(sample, policy.universe_size);

  std::vector<RolloutRecord> records;
  records.reserve(n);
  for (int i = 0; i < n; ++i) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(i)));
    RolloutRecord rec;
    rec.sample_id = sample.id;
    rec.features = features;
    for (int d = 0; d < policy.n_decisions(); ++d) {
      const std::vector<double> lp = log_softmax(policy.logits(d, features), temperature);
      std::vector<double> probs(lp.size());
      for (std::size_t c = 0; c < lp.size(); ++c) probs[c] = std::exp(lp[c]);
      const int choice = rng.categorical(probs);
      rec.decisions.push_back(choice);
      rec.logprobs_old.push_back(lp[choice]);
    }
    DecodeResult decoded = decode(rec.decisions);
    rec.argument_set = std::move(decoded.argument_set);
    rec.predicted_label = decoded.predicted_label;
    rec.format_valid = decoded.format_valid;
    records.push_back(std::move(rec));
  }
  return records;
}

SurrogateResult surrogate_loss(const ToyPolicy& policy, std::span<const RolloutRecord> rollouts,
                               std::span<const double> advantages, double epsilon, double beta,
                               const ToyPolicy& ref_policy, double temperature) {
  if (rollouts.size() != advantages.size()) {
    throw std::invalid_argument("rollouts and advantages differ in length");
  }
  if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be > 0");
  if (beta < 0.0) throw std::invalid_argument("beta must be >= 0");

  SurrogateResult result;
  result.gradient.assign(policy.n_params(), 0.0);
  if (rollouts.empty()) return result;

  double objective = 0.0;
  const double inv_g = 1.0 / static_cast<double>(rollouts.size());

  for (std::size_t i = 0; i < rollouts.size(); ++i) {
    const RolloutRecord& rec = rollouts[i];
    if (static_cast<int>(rec.decisions.size()) != policy.n_decisions()) {
      throw std::invalid_argument("rollout decision count does not match policy");
    }
    const double adv = advantages[i];
    const double inv_d = 1.0 / static_cast<double>(rec.decisions.size());
    const double scale = inv_g * inv_d;

    for (int d = 0; d < policy.n_decisions(); ++d) {
      const std::vector<double> lp_new = log_softmax(policy.logits(d, rec.features), temperature);
      const int choice = rec.decisions[d];
      const double ratio = std::exp(lp_new[choice] - rec.logprobs_old[d]);
      const double clipped = std::clamp(ratio, 1.0 - epsilon, 1.0 + epsilon);
      const double unclipped_term = ratio * adv;
      const double clipped_term = clipped * adv;
      objective += scale * std::min(unclipped_term, clipped_term);

      std::vector<double> probs(lp_new.size());
      for (std::size_t c = 0; c < lp_new.size(); ++c) probs[c] = std::exp(lp_new[c]);

      // Gradient of the surrogate term flows only through the unclipped
      // branch; at the kink the unclipped branch is taken.
      if (unclipped_term <= clipped_term) {
        const double coeff = scale * adv * ratio / temperature;
        for (int c = 0; c < ToyPolicy::kChoices; ++c) {
          const double dz = (c == choice ? 1.0 : 0.0) - probs[c];
          if (dz == 0.0) continue;
          for (int f = 0; f < policy.feature_dim(); ++f) {
            if (rec.features[f] == 0.0) continue;
            result.gradient[policy.index(d, f, c)] -= coeff * dz * rec.features[f];
          }
        }
      }

      if (beta > 0.0) {
        const std::vector<double> lp_ref =
            log_softmax(ref_policy.logits(d, rec.features), temperature);
        double kl = 0.0;
        for (std::size_t c = 0; c < probs.size(); ++c) {
          if (probs[c] > 0.0) kl += probs[c] * (lp_new[c] - lp_ref[c]);
        }
        objective -= scale * beta * kl;
        // d KL / d z_c = p_c * (log p_c - log q_c - KL)
        const double coeff = scale * beta / temperature;
        for (int c = 0; c < ToyPolicy::kChoices; ++c) {
          if (probs[c] <= 0.0) continue;
          const double dz = probs[c] * (lp_new[c] - lp_ref[c] - kl);
          for (int f = 0; f < policy.feature_dim(); ++f) {
            if (rec.features[f] == 0.0) continue;
            result.gradient[policy.index(d, f, c)] += coeff * dz * rec.features[f];
          }
        }
      }
    }
  }

  result.loss = -objective;
  return result;
}

ToyPolicy policy_update(const ToyPolicy& policy, std::span<const double> gradient,
                        double learning_rate, double grad_clip_norm) {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be > 0");
  if (gradient.size() != policy.weights.size()) {
    throw std::invalid_argument("gradient size does not match parameter count");
  }
  double norm_sq = 0.0;
  for (double g : gradient) {
    if (!std::isfinite(g)) throw std::runtime_error("non-finite gradient");
    norm_sq += g * g;
  }
  double scale = 1.0;
  if (grad_clip_norm > 0.0) {
    const double norm = std::sqrt(norm_sq);
    if (norm > grad_clip_norm) scale = grad_clip_norm / norm;
  }
  ToyPolicy updated = policy;
  for (std::size_t i = 0; i < updated.weights.size(); ++i) {
    updated.weights[i] -= learning_rate * scale * gradient[i];
  }
  return updated;
}

void save_policy(const ToyPolicy& policy, int step, const std::string& config_digest,
                 const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write policy checkpoint: " + path);
  out << "toy-policy v1\n";
  out << "universe_size " << policy.universe_size << "\n";
  out << "garble_enabled " << (policy.garble_enabled ? 1 : 0) << "\n";
  out.precision(17);
  out << "garble_bias " << policy.garble_bias << "\n";
  out << "step " << step << "\n";
  out << "config_digest " << config_digest << "\n";
  out << "params " << policy.weights.size() << "\n";
  for (double w : policy.weights) out << w << "\n";
}

ToyPolicy load_policy(const std::string& path, int* step, std::string* config_digest) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open policy checkpoint: " + path);
  std::string magic, version;
  in >> magic >> version;
  if (magic != "toy-policy" || version != "v1") {
    throw ParseError("unrecognized policy checkpoint format: " + path);
  }
  ToyPolicy policy;
  std::string key;
  int garble_enabled = 1;
  int step_value = 0;
  std::string digest;
  std::size_t n_params = 0;
  in >> key >> policy.universe_size;
  in >> key >> garble_enabled;
  in >> key >> policy.garble_bias;
  in >> key >> step_value;
  in >> key >> digest;
  in >> key >> n_params;
  policy.garble_enabled = garble_enabled != 0;
  policy.weights.resize(n_params);
  for (std::size_t i = 0; i < n_params; ++i) in >> policy.weights[i];
  if (!in) throw ParseError("truncated policy checkpoint: " + path);
  if (n_params != static_cast<std::size_t>(policy.n_params())) {
    throw ParseError("policy checkpoint parameter count mismatch: " + path);
  }
  if (step) *step = step_value;
  if (config_digest) *config_digest = digest;
  return policy;
}

}  // namespace crl
