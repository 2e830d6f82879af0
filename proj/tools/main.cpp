#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "crl/data.hpp"
#include "crl/judge.hpp"
#include "crl/orchestrator.hpp"
#include "crl/report.hpp"
#include "crl/similarity.hpp"
#include "crl/tournament.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Candidate {
  double quality = 0.0;
  std::string text;
};

// Candidate files: one candidate per line. For the local oracle each line is
// "<quality>\t<text>"; for the remote judge the whole line is the text.
std::vector<Candidate> load_candidates(const std::string& path, bool with_quality) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open candidates file: " + path);
  std::vector<Candidate> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    Candidate c;
    if (with_quality) {
      const std::size_t tab = line.find('\t');
      if (tab == std::string::npos) {
        throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                 ": expected \"<quality>\\t<text>\" for the local oracle");
      }
      c.quality = std::stod(line.substr(0, tab));
      c.text = line.substr(tab + 1);
    } else {
      c.text = line;
    }
    out.push_back(std::move(c));
  }
  if (out.empty()) throw std::runtime_error("no candidates in " + path);
  return out;
}

crl::PairwiseJudge make_judge(const std::string& mode, const std::vector<Candidate>& candidates,
                              const std::string& query, crl::JudgeClient* client) {
  if (mode == "local-oracle") {
    // Strict total order by the quality column; ties (equal quality) go to
    // the first presented candidate.
    std::map<std::string, double> quality;
    for (const Candidate& c : candidates) quality[c.text] = c.quality;
    return [quality](const std::string& first, const std::string& second) {
      return quality.at(second) > quality.at(first) ? crl::Side::B : crl::Side::A;
    };
  }
  return [client, query](const std::string& first, const std::string& second) {
    const crl::JudgeResponse response = client->call(
        crl::TemplateId::Grm,
        {{"conv_his", query}, {"response_A", first}, {"response_B", second}});
    const std::optional<crl::Side> choice = crl::parse_choice(response.raw);
    if (!choice) throw std::runtime_error("judge returned no usable <choice> block");
    return *choice;
  };
}

json result_to_json(const crl::TournamentResult& result,
                    const std::vector<Candidate>& candidates) {
  json scores = json::object();
  for (const auto& [id, wins] : result.pointwise_scores) {
    scores[std::to_string(id)] = wins;
  }
  json matches = json::array();
  for (const crl::MatchRecord& m : result.match_log) {
    matches.push_back({{"a", m.a}, {"b", m.b}, {"winner", m.winner}, {"swapped", m.swapped}});
  }
  return {{"winner", result.winner},
          {"winner_text", candidates[static_cast<std::size_t>(result.winner)].text},
          {"ranking", result.ranking},
          {"pointwise_scores", scores},
          {"matches", matches}};
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

int run(int argc, char** argv) {
  CLI::App app{"Critique-reward training and evaluation toolkit"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic preference dataset");
  std::string gen_out;
  std::uint64_t gen_seed = 0;
  crl::GeneratorConfig gen_config;
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--seed", gen_seed, "Generator seed");
  gen->add_option("--n", gen_config.n_samples, "Number of samples");
  gen->add_option("--universe", gen_config.universe_size, "Argument universe size");
  gen->add_option("--dh-fraction", gen_config.fraction_with_critique,
                  "Fraction of samples that carry a human critique");
  gen->add_option("--min-args", gen_config.min_gold_args, "Minimum gold arguments per sample");
  gen->add_option("--max-args", gen_config.max_gold_args, "Maximum gold arguments per sample");
  gen->add_option("--fatal-fraction", gen_config.fatal_fraction,
                  "Probability a universe argument is fatal");
  gen->add_option("--shift-step", gen_config.shift_steps,
                  "Training step at which a distribution shift occurs (repeatable)");

  // train
  auto* train = app.add_subcommand("train", "Run a training experiment");
  std::string train_config_path, train_data, train_out, train_regime;
  std::uint64_t train_seed = 0;
  bool train_seed_set = false;
  train->add_option("--config", train_config_path, "Training config file")->required();
  train->add_option("--data", train_data, "Directory with dataset.jsonl and env.json")
      ->required();
  train->add_option("--out", train_out, "Output directory")->required();
  train->add_option("--regime", train_regime, "Override the config's regime");
  train->add_option("--seed", train_seed, "Override the config's seed")
      ->each([&](const std::string&) { train_seed_set = true; });

  // eval-bon / eval-double-elim
  std::string bon_candidates, bon_judge = "local-oracle", bon_out, bon_query = "";
  std::uint64_t bon_seed = 0;
  int bon_n = 0;
  const auto add_tournament_flags = [&](CLI::App* cmd) {
    cmd->add_option("--candidates", bon_candidates, "Candidate file, one per line")->required();
    cmd->add_option("--judge", bon_judge, "local-oracle or remote")
        ->check(CLI::IsMember({"local-oracle", "remote"}));
    cmd->add_option("--out", bon_out, "Output directory");
    cmd->add_option("--seed", bon_seed, "Presentation-order seed");
    cmd->add_option("--n", bon_n, "Use only the first N candidates");
    cmd->add_option("--query", bon_query, "Conversation history for the remote judge");
  };
  auto* bon = app.add_subcommand("eval-bon", "Best-of-N single-elimination selection");
  add_tournament_flags(bon);
  auto* delim = app.add_subcommand("eval-double-elim",
                                   "Double-elimination pointwise scoring");
  add_tournament_flags(delim);
  auto* fedit = app.add_subcommand("feedback-edit",
                                   "Select top-2 candidates and rewrite via critique");
  add_tournament_flags(fedit);

  // score
  auto* score = app.add_subcommand("score", "Similarity scores for critique pairs");
  std::string score_in, score_mode = "core";
  score->add_option("--in", score_in,
                    "JSONL with per-line {\"reference\": [...], \"generated\": [...]}")
      ->required();
  score->add_option("--mode", score_mode, "core or all")
      ->check(CLI::IsMember({"core", "all"}));

  // report
  auto* report = app.add_subcommand("report", "Render curves and a summary from metrics CSVs");
  std::vector<std::string> report_files;
  std::string report_out;
  report->add_option("--out", report_out, "Output directory")->required();
  report->add_option("files", report_files, "metrics.csv files")->required();

  CLI11_PARSE(app, argc, argv);

  if (gen->parsed()) {
    auto [env, samples] = crl::generate_environment(gen_config, gen_seed);
    fs::create_directories(gen_out);
    crl::save_dataset(samples, (fs::path(gen_out) / "dataset.jsonl").string());
    crl::save_environment(env, (fs::path(gen_out) / "env.json").string());
    std::cout << "wrote " << samples.size() << " samples to " << gen_out << "\n";
    return 0;
  }

  if (train->parsed()) {
    crl::TrainConfig config = crl::parse_train_config(train_config_path);
    if (!train_regime.empty()) config.regime = crl::regime_from_string(train_regime);
    if (train_seed_set) config.seed = train_seed;
    auto samples = crl::load_dataset((fs::path(train_data) / "dataset.jsonl").string());
    auto env = crl::load_environment((fs::path(train_data) / "env.json").string());
    crl::Orchestrator orchestrator(config, std::move(env), std::move(samples));
    orchestrator.run_experiment(train_out);
    std::cout << "experiment written to " << train_out << "\n";
    return 0;
  }

  if (bon->parsed() || delim->parsed() || fedit->parsed()) {
    const bool local = bon_judge == "local-oracle";
    std::vector<Candidate> candidates = load_candidates(bon_candidates, local);
    if (bon_n > 0 && bon_n < static_cast<int>(candidates.size())) {
      candidates.resize(static_cast<std::size_t>(bon_n));
    }
    std::unique_ptr<crl::JudgeClient> client;
    if (!local) {
      client = std::make_unique<crl::JudgeClient>(crl::JudgeConfig::from_environment());
    }
    std::vector<std::string> texts;
    for (const Candidate& c : candidates) texts.push_back(c.text);
    const crl::PairwiseJudge judge = make_judge(bon_judge, candidates, bon_query, client.get());

    if (fedit->parsed()) {
      crl::CritiqueFn critique_fn;
      crl::EditFn edit_fn;
      if (local) {
        critique_fn = [](const std::string& first, const std::string&) {
          return "Chatbot A's response already covers the stronger points: " + first;
        };
        edit_fn = [](const std::string& first, const std::string&, const std::string&) {
          return first;
        };
      } else {
        critique_fn = [&](const std::string& first, const std::string& second) {
          const crl::JudgeResponse r = client->call(
              crl::TemplateId::Grm,
              {{"conv_his", bon_query}, {"response_A", first}, {"response_B", second}});
          return crl::extract_critique(r.raw);
        };
        edit_fn = [&](const std::string& first, const std::string& second,
                      const std::string& critique) {
          const crl::JudgeResponse r = client->call(crl::TemplateId::Edit,
                                                    {{"conv_his", bon_query},
                                                     {"response_A", first},
                                                     {"response_B", second},
                                                     {"critique", critique}});
          return r.raw;
        };
      }
      const std::string edited =
          crl::feedback_edit(texts, judge, critique_fn, edit_fn, bon_seed);
      if (!bon_out.empty()) write_text(fs::path(bon_out) / "edited.txt", edited);
      std::cout << edited << "\n";
      return 0;
    }

    const crl::TournamentResult result = bon->parsed()
                                             ? crl::bon_select(texts, judge, bon_seed)
                                             : crl::double_elimination(texts, judge, bon_seed);
    const json out = result_to_json(result, candidates);
    if (!bon_out.empty()) {
      write_text(fs::path(bon_out) / (bon->parsed() ? "bon.json" : "double_elim.json"),
                 out.dump(2) + "\n");
    }
    std::cout << out.dump(2) << "\n";
    return 0;
  }

  if (score->parsed()) {
    std::ifstream in(score_in);
    if (!in) throw std::runtime_error("cannot open " + score_in);
    const crl::MatchMode mode =
        score_mode == "core" ? crl::MatchMode::Core : crl::MatchMode::All;
    std::cout << "f1,precision,recall,tp,n_ref,n_gen,repeated\n";
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      const json obj = json::parse(line);
      const auto parse_set = [&](const char* field) {
        crl::ArgumentSet set;
        for (const json& item : obj.at(field)) {
          crl::Argument arg;
          arg.content_key = item.at("content_key").get<std::string>();
          arg.target = item.at("target").get<std::string>() == "B" ? crl::Side::B : crl::Side::A;
          arg.polarity = item.at("polarity").get<std::string>() == "negative"
                             ? crl::Polarity::Negative
                             : crl::Polarity::Positive;
          arg.fatal = item.value("fatal", false);
          set.arguments.push_back(std::move(arg));
        }
        return set;
      };
      const crl::SimilarityScores s =
          crl::compute_similarity(parse_set("reference"), parse_set("generated"), mode);
      std::printf("%.4f,%.4f,%.4f,%d,%d,%d,%d\n", crl::round4(s.f1), crl::round4(s.precision),
                  crl::round4(s.recall), s.tp, s.n_ref, s.n_gen, s.repeated ? 1 : 0);
    }
    return 0;
  }

  if (report->parsed()) {
    const std::vector<std::string> written = crl::emit_report(report_files, report_out);
    for (const std::string& path : written) std::cout << path << "\n";
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 1;
  }
}
