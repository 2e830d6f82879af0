#include "crl/reward.hpp"

#include <cmath>
#include <stdexcept>

namespace crl {

int process_reward(double s) {
  if (!(s >= 0.0 && s <= 1.0)) {
    throw std::domain_error("similarity score outside [0, 1]: " + std::to_string(s));
  }
  return s > 0.5 ? 1 : 0;
}

double composite_reward(bool format_valid, bool label_match, std::optional<int> r_process,
                        double lambda, bool regularized) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw std::invalid_argument("lambda outside [0, 1]");
  }
  if (!format_valid) return -1.0;
  const bool needs_process = label_match || !regularized;
  if (needs_process && !r_process.has_value()) {
    throw std::invalid_argument("process reward required but absent");
  }
  if (label_match) return 1.0 + lambda * *r_process;
  if (regularized) return 0.0;
  return lambda * *r_process;
}

double metarm_reward(bool format_valid, bool label_match, double r_meta, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw std::invalid_argument("lambda outside [0, 1]");
  }
  if (!format_valid) return -1.0;
  if (!label_match) return 0.0;
  return 1.0 + std::min(lambda, std::max(0.0, r_meta - 1.0));
}

GroupAdvantages group_advantages(std::span<const double> rewards, double guard,
                                 bool literal_sigma) {
  if (rewards.empty()) throw std::invalid_argument("empty reward group");
  GroupAdvantages group;
  group.rewards.assign(rewards.begin(), rewards.end());
  const double n = static_cast<double>(rewards.size());
  double sum = 0.0;
  for (double r : rewards) sum += r;
  group.mean = sum / n;
  double sq = 0.0;
  for (double r : rewards) sq += (r - group.mean) * (r - group.mean);
  group.stddev = literal_sigma ? std::sqrt(sq) / n : std::sqrt(sq / n);
  group.advantages.resize(rewards.size(), 0.0);
  if (group.stddev >= guard) {
    for (std::size_t i = 0; i < rewards.size(); ++i) {
      group.advantages[i] = (rewards[i] - group.mean) / group.stddev;
    }
  }
  return group;
}

}  // namespace crl
