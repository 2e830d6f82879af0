#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace crl {

enum class RewardSource { HumanCritique, MetaRm, OutcomeOnly };

struct RewardRecord {
  bool outcome_correct = false;
  bool format_valid = false;
  std::optional<double> process_score;
  double composite = 0.0;
  RewardSource source = RewardSource::OutcomeOnly;
};

// Binarized process reward: 1 iff the similarity score strictly exceeds 0.5.
int process_reward(double s);

// Composite reward branches: -1 for invalid format, 0 for a wrong label
// (regularized), 1 + lambda * r_process for a correct one. With
// regularization off, a wrong label still earns lambda * r_process.
double composite_reward(bool format_valid, bool label_match, std::optional<int> r_process,
                        double lambda, bool regularized = true);

// MetaRM-backed reward: the process component is max(0, r_meta - 1) clipped
// to lambda.
double metarm_reward(bool format_valid, bool label_match, double r_meta, double lambda);

struct GroupAdvantages {
  std::vector<double> rewards;
  double mean = 0.0;
  double stddev = 0.0;
  std::vector<double> advantages;
};

// Group-normalized advantages. stddev is the population standard deviation;
// `literal_sigma` divides the root sum of squares by N instead (the
// non-standard normalization), kept behind a switch.
GroupAdvantages group_advantages(std::span<const double> rewards, double guard = 1e-8,
                                 bool literal_sigma = false);

}  // namespace crl
