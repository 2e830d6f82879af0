#include "crl/tournament.hpp"

#include <algorithm>
#include <stdexcept>

#include "crl/rng.hpp"

namespace crl {

namespace {

// Plays one match, logging the randomized presentation order.
int play_match(const std::vector<std::string>& candidates, int a, int b,
               const PairwiseJudge& judge, Rng& rng, TournamentResult& result) {
  const bool swapped = rng.next_bool();
  const int first = swapped ? b : a;
  const int second = swapped ? a : b;
  const Side verdict = judge(candidates[first], candidates[second]);
  const int winner = verdict == Side::A ? first : second;
  result.match_log.push_back({a, b, winner, swapped});
  result.pointwise_scores[winner] += 1;
  return winner;
}

}  // namespace

TournamentResult bon_select(const std::vector<std::string>& candidates, const PairwiseJudge& judge,
                            std::uint64_t seed) {
  if (candidates.empty()) throw std::invalid_argument("bon_select requires >= 1 candidate");
  Rng rng(seed);
  TournamentResult result;
  for (std::size_t i = 0; i < candidates.size(); ++i) result.pointwise_scores[(int)i] = 0;

  std::vector<int> active(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) active[i] = static_cast<int>(i);
  // Losers of later rounds rank higher; within a round, input order decides.
  std::vector<std::vector<int>> eliminated_by_round;

  while (active.size() > 1) {
    std::vector<int> next;
    std::vector<int> losers;
    std::size_t start = 0;
    if (active.size() % 2 == 1) {
      next.push_back(active[0]);  // bye to the earliest input position
      start = 1;
    }
    for (std::size_t i = start; i + 1 < active.size(); i += 2) {
      const int winner = play_match(candidates, active[i], active[i + 1], judge, rng, result);
      next.push_back(winner);
      losers.push_back(winner == active[i] ? active[i + 1] : active[i]);
    }
    eliminated_by_round.push_back(std::move(losers));
    active = std::move(next);
  }

  result.winner = active[0];
  result.ranking.push_back(result.winner);
  for (auto it = eliminated_by_round.rbegin(); it != eliminated_by_round.rend(); ++it) {
    for (int id : *it) result.ranking.push_back(id);
  }
  return result;
}

TournamentResult double_elimination(const std::vector<std::string>& candidates,
                                    const PairwiseJudge& judge, std::uint64_t seed) {
  if (candidates.size() < 2) {
    throw std::invalid_argument("double_elimination requires >= 2 candidates");
  }
  Rng rng(seed);
  TournamentResult result;
  for (std::size_t i = 0; i < candidates.size(); ++i) result.pointwise_scores[(int)i] = 0;

  std::vector<int> winners_bracket(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) winners_bracket[i] = static_cast<int>(i);
  std::vector<int> losers_bracket;
  std::vector<int> eliminated;  // in order of second loss

  auto play_round = [&](std::vector<int>& bracket, std::vector<int>& losers_out) {
    std::vector<int> next;
    std::size_t start = 0;
    if (bracket.size() % 2 == 1) {
      next.push_back(bracket[0]);
      start = 1;
    }
    for (std::size_t i = start; i + 1 < bracket.size(); i += 2) {
      const int winner = play_match(candidates, bracket[i], bracket[i + 1], judge, rng, result);
      next.push_back(winner);
      losers_out.push_back(winner == bracket[i] ? bracket[i + 1] : bracket[i]);
    }
    bracket = std::move(next);
  };

  while (winners_bracket.size() > 1 || losers_bracket.size() > 1) {
    if (winners_bracket.size() > 1) {
      std::vector<int> dropped;
      play_round(winners_bracket, dropped);
      // losers-bracket internal round before the fresh drops join
      if (losers_bracket.size() > 1) {
        std::vector<int> out;
        play_round(losers_bracket, out);
        for (int id : out) eliminated.push_back(id);
      }
      for (int id : dropped) losers_bracket.push_back(id);
    } else if (losers_bracket.size() > 1) {
      std::vector<int> out;
      play_round(losers_bracket, out);
      for (int id : out) eliminated.push_back(id);
    }
  }

  // Grand final; the losers-bracket finalist must beat the winners-bracket
  // champion twice (bracket reset).
  int champion = winners_bracket[0];
  if (!losers_bracket.empty()) {
    const int challenger = losers_bracket[0];
    int winner = play_match(candidates, champion, challenger, judge, rng, result);
    if (winner == challenger) {
      winner = play_match(candidates, champion, challenger, judge, rng, result);
      const int runner_up = winner == champion ? challenger : champion;
      eliminated.push_back(runner_up);
      champion = winner;
    } else {
      eliminated.push_back(challenger);
    }
  }

  result.winner = champion;
  result.ranking.push_back(champion);
  for (auto it = eliminated.rbegin(); it != eliminated.rend(); ++it) {
    result.ranking.push_back(*it);
  }
  return result;
}

std::string feedback_edit(const std::vector<std::string>& candidates, const PairwiseJudge& judge,
                          const CritiqueFn& critique_fn, const EditFn& edit_fn,
                          std::uint64_t seed) {
  if (candidates.size() < 2) throw std::invalid_argument("feedback_edit requires >= 2 candidates");
  const TournamentResult selection = bon_select(candidates, judge, seed);
  const std::string& top1 = candidates[selection.ranking[0]];
  const std::string& top2 = candidates[selection.ranking[1]];
  const std::string critique = critique_fn(top1, top2);
  return edit_fn(top1, top2, critique);
}

}  // namespace crl
