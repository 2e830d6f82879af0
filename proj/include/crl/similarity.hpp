#pragma once

#include "crl/data.hpp"

namespace crl {

enum class MatchMode { Core, All };

struct SimilarityScores {
  double f1 = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  int tp = 0;
  int n_ref = 0;
  int n_gen = 0;
  bool repeated = false;
};

// True iff any (content_key, target, polarity) tuple occurs at least twice.
bool repeated_argument_check(const ArgumentSet& gen);

// Core mode with a fatal reference argument collapses the reference count
// to 1; otherwise counts unique tuples.
int count_reference_arguments(const ArgumentSet& ref, MatchMode mode);

// Size of the maximum one-to-one matching between unique reference and
// generated tuples. Matching is exact tuple equality, so this is the
// intersection size; under the fatal rule it is 0 or 1.
int count_true_positives(const ArgumentSet& ref, const ArgumentSet& gen, MatchMode mode);

SimilarityScores compute_similarity(const ArgumentSet& ref, const ArgumentSet& gen,
                                    MatchMode mode);

// Fixed 4-decimal rounding applied only at wire/file boundaries.
double round4(double value);

}  // namespace crl
