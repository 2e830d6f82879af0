#include "crl/similarity.hpp"

#include <cmath>
#include <set>
#include <tuple>

namespace crl {

namespace {

using Tuple = std::tuple<std::string, Side, Polarity>;

Tuple tuple_of(const Argument& arg) {
  return {arg.content_key, arg.target, arg.polarity};
}

std::set<Tuple> unique_tuples(const ArgumentSet& set) {
  std::set<Tuple> out;
  for (const Argument& arg : set.arguments) out.insert(tuple_of(arg));
  return out;
}

bool has_fatal(const ArgumentSet& set) {
  for (const Argument& arg : set.arguments) {
    if (arg.fatal) return true;
  }
  return false;
}

std::set<Tuple> fatal_tuples(const ArgumentSet& set) {
  std::set<Tuple> out;
  for (const Argument& arg : set.arguments) {
    if (arg.fatal) out.insert(tuple_of(arg));
  }
  return out;
}

}  // namespace

bool repeated_argument_check(const ArgumentSet& gen) {
  std::set<Tuple> seen;
  for (const Argument& arg : gen.arguments) {
    if (!seen.insert(tuple_of(arg)).second) return true;
  }
  return false;
}

int count_reference_arguments(const ArgumentSet& ref, MatchMode mode) {
  if (mode == MatchMode::Core && has_fatal(ref)) return 1;
  return static_cast<int>(unique_tuples(ref).size());
}

int count_true_positives(const ArgumentSet& ref, const ArgumentSet& gen, MatchMode mode) {
  const std::set<Tuple> gen_set = unique_tuples(gen);
  if (mode == MatchMode::Core && has_fatal(ref)) {
    for (const Tuple& t : fatal_tuples(ref)) {
      if (gen_set.count(t)) return 1;
    }
    return 0;
  }
  int tp = 0;
  for (const Tuple& t : unique_tuples(ref)) {
    if (gen_set.count(t)) ++tp;
  }
  return tp;
}

SimilarityScores compute_similarity(const ArgumentSet& ref, const ArgumentSet& gen,
                                    MatchMode mode) {
  SimilarityScores scores;
  if (repeated_argument_check(gen)) {
    scores.repeated = true;
    return scores;
  }
  scores.n_ref = count_reference_arguments(ref, mode);
  scores.n_gen = static_cast<int>(unique_tuples(gen).size());
  scores.tp = count_true_positives(ref, gen, mode);
  scores.precision = scores.n_gen > 0 ? static_cast<double>(scores.tp) / scores.n_gen : 0.0;
  scores.recall = scores.n_ref > 0 ? static_cast<double>(scores.tp) / scores.n_ref : 0.0;
  const double pr = scores.precision + scores.recall;
  scores.f1 = pr > 0.0 ? 2.0 * scores.precision * scores.recall / pr : 0.0;
  return scores;
}

double round4(double value) { return std::round(value * 10000.0) / 10000.0; }

}  // namespace crl
