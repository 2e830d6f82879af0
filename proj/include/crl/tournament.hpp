#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "crl/data.hpp"

namespace crl {

// Pairwise judge over two candidate texts, already presented in the order
// given; returns which of the two presented positions wins.
using PairwiseJudge = std::function<Side(const std::string& first, const std::string& second)>;

struct MatchRecord {
  int a = 0;
  int b = 0;
  int winner = 0;
  bool swapped = false;  // candidates were presented in b-first order
};

struct TournamentResult {
  int winner = 0;
  std::vector<int> ranking;           // best first, every candidate once
  std::map<int, int> pointwise_scores;  // candidate -> match wins
  std::vector<MatchRecord> match_log;
};

// Single-elimination bracket; byes go to earlier input positions; each match
// randomizes presentation order (seeded) to neutralize position bias.
TournamentResult bon_select(const std::vector<std::string>& candidates, const PairwiseJudge& judge,
                            std::uint64_t seed);

// Winners/losers double elimination; a candidate is out after two losses;
// pointwise score is the total match wins; grand-final ties resolved by the
// bracket-reset rule.
TournamentResult double_elimination(const std::vector<std::string>& candidates,
                                    const PairwiseJudge& judge, std::uint64_t seed);

// Critique producer for a candidate pair (e.g. a GRM behind a judge client).
using CritiqueFn = std::function<std::string(const std::string& first, const std::string& second)>;
// Rewrite client: (first, second, critique) -> edited text.
using EditFn = std::function<std::string(const std::string& first, const std::string& second,
                                         const std::string& critique)>;

// Selects the top 2 candidates, obtains a critique for the pair, and returns
// the edit client's rewrite.
std::string feedback_edit(const std::vector<std::string>& candidates, const PairwiseJudge& judge,
                          const CritiqueFn& critique_fn, const EditFn& edit_fn,
                          std::uint64_t seed);

}  // namespace crl
