#include "crl/orchestrator.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "crl/rng.hpp"
#include "crl/similarity.hpp"

namespace crl {

namespace {

std::string format_double(double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", value);
  return buf;
}

double ms_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
      .count();
}

}  // namespace

const char* to_string(Regime regime) {
  switch (regime) {
    case Regime::OutcomeOnly: return "outcome_only";
    case Regime::NaiveCombination: return "naive_combination";
    case Regime::OfflineMetaRm: return "offline_metarm";
    case Regime::OnlineMetaRm: return "online_metarm";
    case Regime::FullHumanCritique: return "full_human_critique";
    case Regime::OnlyMetaRm: return "only_metarm";
  }
  return "outcome_only";
}

Regime regime_from_string(const std::string& name) {
  if (name == "outcome_only") return Regime::OutcomeOnly;
  if (name == "naive_combination") return Regime::NaiveCombination;
  if (name == "offline_metarm") return Regime::OfflineMetaRm;
  if (name == "online_metarm") return Regime::OnlineMetaRm;
  if (name == "full_human_critique") return Regime::FullHumanCritique;
  if (name == "only_metarm") return Regime::OnlyMetaRm;
  throw ConfigError("unknown regime: " + name);
}

namespace {

std::string config_echo(const TrainConfig& c) {
  std::ostringstream out;
  out.precision(17);
  out << "lambda=" << c.lambda << "\n";
  out << "n_rollout=" << c.n_rollout << "\n";
  out << "epsilon=" << c.epsilon << "\n";
  out << "beta=" << c.beta << "\n";
  out << "temperature=" << c.temperature << "\n";
  out << "policy_lr=" << c.policy_lr << "\n";
  out << "metarm_cold_lr=" << c.metarm_cold_lr << "\n";
  out << "metarm_online_lr=" << c.metarm_online_lr << "\n";
  out << "metarm_cold_epochs=" << c.metarm_cold_epochs << "\n";
  out << "metarm_online_epochs=" << c.metarm_online_epochs << "\n";
  out << "metarm_batch_size=" << c.metarm_batch_size << "\n";
  out << "cold_n_sample=" << c.cold_n_sample << "\n";
  out << "steps=" << c.steps << "\n";
  out << "batch_size=" << c.batch_size << "\n";
  out << "dh_batch_fraction=" << c.dh_batch_fraction << "\n";
  out << "regime=" << to_string(c.regime) << "\n";
  out << "metarm_variant=" << to_string(c.metarm_variant) << "\n";
  out << "aggressive_online=" << (c.aggressive_online ? 1 : 0) << "\n";
  out << "outcome_regularization=" << (c.outcome_regularization ? 1 : 0) << "\n";
  out << "do_for_metarm=" << (c.do_for_metarm ? 1 : 0) << "\n";
  out << "literal_sigma=" << (c.literal_sigma ? 1 : 0) << "\n";
  out << "garble_enabled=" << (c.garble_enabled ? 1 : 0) << "\n";
  out << "garble_bias=" << c.garble_bias << "\n";
  out << "grad_clip_norm=" << c.grad_clip_norm << "\n";
  out << "seed=" << c.seed << "\n";
  out << "checkpoint_interval=" << c.checkpoint_interval << "\n";
  out << "log_timings=" << (c.log_timings ? 1 : 0) << "\n";
  return out.str();
}

}  // namespace

std::string TrainConfig::digest() const {
  const std::string echo = config_echo(*this);
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : echo) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

TrainConfig parse_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  TrainConfig config;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t\r");
    line = line.substr(first, last - first + 1);
    const std::size_t eq = line.find('=');
    const std::string where = path + ":" + std::to_string(line_no);
    if (eq == std::string::npos) throw ConfigError(where + ": expected key=value");
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    while (!key.empty() && (key.back() == ' ' || key.back() == '\t')) key.pop_back();
    while (!value.empty() && (value.front() == ' ' || value.front() == '\t')) value.erase(0, 1);

    const auto as_double = [&] { return std::stod(value); };
    const auto as_int = [&] { return std::stoi(value); };
    const auto as_bool = [&] {
      if (value == "1" || value == "true" || value == "on") return true;
      if (value == "0" || value == "false" || value == "off") return false;
      throw ConfigError(where + ": boolean expected, got " + value);
    };

    if (key == "lambda") config.lambda = as_double();
    else if (key == "n_rollout") config.n_rollout = as_int();
    else if (key == "epsilon") config.epsilon = as_double();
    else if (key == "beta") config.beta = as_double();
    else if (key == "temperature") config.temperature = as_double();
    else if (key == "policy_lr") config.policy_lr = as_double();
    else if (key == "metarm_cold_lr") config.metarm_cold_lr = as_double();
    else if (key == "metarm_online_lr") config.metarm_online_lr = as_double();
    else if (key == "metarm_cold_epochs") config.metarm_cold_epochs = as_int();
    else if (key == "metarm_online_epochs") config.metarm_online_epochs = as_int();
    else if (key == "metarm_batch_size") config.metarm_batch_size = as_int();
    else if (key == "cold_n_sample") config.cold_n_sample = as_int();
    else if (key == "steps") config.steps = as_int();
    else if (key == "batch_size") config.batch_size = as_int();
    else if (key == "dh_batch_fraction") config.dh_batch_fraction = as_double();
    else if (key == "regime") config.regime = regime_from_string(value);
    else if (key == "metarm_variant") config.metarm_variant = metarm_variant_from_string(value);
    else if (key == "aggressive_online") config.aggressive_online = as_bool();
    else if (key == "outcome_regularization") config.outcome_regularization = as_bool();
    else if (key == "do_for_metarm") config.do_for_metarm = as_bool();
    else if (key == "literal_sigma") config.literal_sigma = as_bool();
    else if (key == "garble_enabled") config.garble_enabled = as_bool();
    else if (key == "garble_bias") config.garble_bias = as_double();
    else if (key == "grad_clip_norm") config.grad_clip_norm = as_double();
    else if (key == "seed") config.seed = std::stoull(value);
    else if (key == "checkpoint_interval") config.checkpoint_interval = as_int();
    else if (key == "log_timings") config.log_timings = as_bool();
    else throw ConfigError(where + ": unknown config key: " + key);
  }
  if (!(config.lambda >= 0.0 && config.lambda <= 1.0)) {
    throw ConfigError("lambda must be in [0, 1]");
  }
  if (config.beta < 0.0) throw ConfigError("beta must be >= 0");
  if (config.policy_lr <= 0.0 || config.metarm_cold_lr <= 0.0 || config.metarm_online_lr <= 0.0) {
    throw ConfigError("learning rates must be > 0");
  }
  return config;
}

void write_train_config(const TrainConfig& config, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write config file: " + path);
  out << config_echo(config);
}

std::string step_metrics_header() {
  return "step,outcome_accuracy,mean_similarity_f1,metarm_mae_vs_oracle,"
         "p_process0_given_outcome1,p_process1_given_outcome0,mean_argument_count,"
         "rollout_ms,score_dh_ms,metarm_update_ms,score_do_ms,policy_update_ms";
}

std::string step_metrics_row(const StepMetrics& m) {
  std::ostringstream out;
  out << m.step << "," << format_double(m.outcome_accuracy) << ","
      << format_double(m.mean_similarity_f1) << ",";
  if (m.metarm_mae_vs_oracle) out << format_double(*m.metarm_mae_vs_oracle);
  out << ",";
  if (m.p_process0_given_outcome1) out << format_double(*m.p_process0_given_outcome1);
  out << ",";
  if (m.p_process1_given_outcome0) out << format_double(*m.p_process1_given_outcome0);
  out << "," << format_double(m.mean_argument_count) << "," << format_double(m.rollout_ms) << ","
      << format_double(m.score_dh_ms) << "," << format_double(m.metarm_update_ms) << ","
      << format_double(m.score_do_ms) << "," << format_double(m.policy_update_ms);
  return out.str();
}

std::pair<std::optional<double>, std::optional<double>>
inconsistency_metrics(std::span<const ScoredRollout> records, double threshold) {
  int outcome1 = 0, outcome0 = 0, p0_given_o1 = 0, p1_given_o0 = 0;
  for (const ScoredRollout& record : records) {
    const bool process_ok = record.similarity > threshold;
    if (record.outcome_correct) {
      ++outcome1;
      if (!process_ok) ++p0_given_o1;
    } else {
      ++outcome0;
      if (process_ok) ++p1_given_o0;
    }
  }
  std::optional<double> p01, p10;
  if (outcome1 > 0) p01 = static_cast<double>(p0_given_o1) / outcome1;
  if (outcome0 > 0) p10 = static_cast<double>(p1_given_o0) / outcome0;
  return {p01, p10};
}

Orchestrator::Orchestrator(TrainConfig config, EnvironmentSpec env,
                           std::vector<PreferenceSample> samples)
    : config_(std::move(config)), env_(std::move(env)) {
  if (env_.gold_sets.size() != samples.size()) {
    throw ConfigError("environment and dataset sizes differ");
  }
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].human_critique) {
      env_index_of_dh_.push_back(i);
      d_h_.push_back(samples[i]);
    } else {
      env_index_of_do_.push_back(i);
      d_o_.push_back(samples[i]);
    }
  }
  state_.policy = ToyPolicy::zero_init(env_.universe_size(), config_.garble_enabled,
                                       config_.garble_bias);
  state_.ref_policy = state_.policy;
}

std::size_t Orchestrator::env_index(const std::string& sample_id) const {
  // Generated ids are "s<index>"; the index is the position in the env.
  if (sample_id.size() < 2 || sample_id[0] != 's') {
    throw ConfigError("sample id without environment index: " + sample_id);
  }
  const std::size_t idx = std::stoul(sample_id.substr(1));
  if (idx >= env_.gold_sets.size()) {
    throw ConfigError("sample id outside environment: " + sample_id);
  }
  return idx;
}

bool Orchestrator::uses_metarm() const {
  return config_.regime == Regime::OfflineMetaRm || config_.regime == Regime::OnlineMetaRm ||
         config_.regime == Regime::OnlyMetaRm;
}

void Orchestrator::initialize() {
  if (initialized_) return;
  if (uses_metarm()) {
    if (d_h_.empty()) throw ConfigError("MetaRM regimes require a non-empty D_H stream");
    ColdStartOptions options;
    options.n_sample = config_.cold_n_sample;
    options.epochs = config_.metarm_cold_epochs;
    options.learning_rate = config_.metarm_cold_lr;
    options.batch_size = config_.metarm_batch_size;
    options.temperature = config_.temperature;
    options.lambda = config_.lambda;
    options.seed = mix_seed(config_.seed, 0xc01d);
    options.variant = config_.metarm_variant;
    options.outcome_regularization = config_.outcome_regularization;
    state_.metarm = cold_start(state_.policy, d_h_, options);
  }
  initialized_ = true;
}

std::vector<PreferenceSample> Orchestrator::next_batch() {
  const std::size_t total = d_h_.size() + d_o_.size();
  if (total == 0) throw ConfigError("empty dataset");
  double fraction = config_.dh_batch_fraction;
  if (fraction < 0.0) fraction = static_cast<double>(d_h_.size()) / total;
  int n_h = static_cast<int>(std::lround(config_.batch_size * fraction));
  n_h = std::min(n_h, config_.batch_size);
  if (d_h_.empty()) n_h = 0;
  if (d_o_.empty()) n_h = config_.batch_size;

  std::vector<PreferenceSample> batch;
  for (int i = 0; i < n_h; ++i) {
    batch.push_back(d_h_[state_.dh_cursor % d_h_.size()]);
    ++state_.dh_cursor;
  }
  for (int i = n_h; i < config_.batch_size; ++i) {
    batch.push_back(d_o_[state_.do_cursor % d_o_.size()]);
    ++state_.do_cursor;
  }
  return batch;
}

StepMetrics Orchestrator::training_step(const std::vector<PreferenceSample>& batch) {
  if (!initialized_) initialize();
  const int step = state_.step;
  StepMetrics metrics;
  metrics.step = step;

  struct GroupWork {
    const PreferenceSample* sample;
    std::size_t env_idx;
    bool is_dh;
    std::vector<RolloutRecord> rollouts;
    std::vector<double> rewards;
  };

  // Phase 1: rollouts.
  auto t0 = std::chrono::steady_clock::now();
  std::vector<GroupWork> groups;
  groups.reserve(batch.size());
  for (const PreferenceSample& sample : batch) {
    GroupWork work;
    work.sample = &sample;
    work.env_idx = env_index(sample.id);
    work.is_dh = sample.human_critique.has_value();
    const std::uint64_t roll_seed =
        mix_seed(mix_seed(config_.seed, 0xabcdULL + step), work.env_idx);
    work.rollouts = rollout(state_.policy, sample, config_.n_rollout, config_.temperature,
                            roll_seed);
    groups.push_back(std::move(work));
  }
  metrics.rollout_ms = ms_since(t0);

  // Phase 2: human-critique scoring on D_H (composite-reward branches) and
  // fresh MetaRM targets.
  t0 = std::chrono::steady_clock::now();
  std::vector<MetaRmTarget> fresh_targets;
  const bool process_on_dh = config_.regime != Regime::OutcomeOnly;
  for (GroupWork& work : groups) {
    if (!work.is_dh) continue;
    // The environment's critique stream is live: under a shift the human
    // critique for a sample follows the shifted gold arguments.
    const ArgumentSet critique = env_.gold_at(work.env_idx, step);
    const Side gold_label = env_.gold_label_at(work.env_idx, step);
    for (const RolloutRecord& rec : work.rollouts) {
      const bool match = rec.predicted_label == gold_label;
      double reward;
      if (!rec.format_valid) {
        reward = -1.0;
      } else if (!process_on_dh) {
        reward = composite_reward(true, match, 0, config_.lambda, true);
      } else {
        const SimilarityScores scores =
            compute_similarity(critique, rec.argument_set, MatchMode::Core);
        const int r_process = process_reward(scores.f1);
        reward = composite_reward(true, match, r_process, config_.lambda,
                                  config_.outcome_regularization);
      }
      work.rewards.push_back(reward);
      if (uses_metarm() && rec.format_valid) {
        fresh_targets.push_back(
            {metarm_featurize(*work.sample, rec, env_.universe_size()), reward});
      }
    }
  }
  metrics.score_dh_ms = ms_since(t0);

  // Phase 3: MetaRM-first online update. Must complete before any D_O
  // rollout is scored.
  t0 = std::chrono::steady_clock::now();
  std::optional<MetaRmModel> next_metarm = state_.metarm;
  const bool online = config_.regime == Regime::OnlineMetaRm ||
                      config_.regime == Regime::OnlyMetaRm;
  if (online && next_metarm && !fresh_targets.empty()) {
    const double lr = config_.aggressive_online ? 2.0 * config_.metarm_online_lr
                                                : config_.metarm_online_lr;
    const int epochs = config_.aggressive_online ? 2 : config_.metarm_online_epochs;
    next_metarm = online_update(*next_metarm, fresh_targets, lr, epochs,
                                mix_seed(config_.seed, 0x0e11e + step),
                                config_.metarm_batch_size);
  }
  metrics.metarm_update_ms = ms_since(t0);

  // Phase 4: D_O scoring with the just-updated snapshot (MetaRM-backed or
  // plain outcome reward, depending on the regime).
  t0 = std::chrono::steady_clock::now();
  double mae_sum = 0.0;
  int mae_count = 0;
  std::vector<MetaRmTarget> do_pseudo_targets;
  for (GroupWork& work : groups) {
    if (work.is_dh) continue;
    const Side gold_label = env_.gold_label_at(work.env_idx, step);
    const ArgumentSet gold = env_.gold_at(work.env_idx, step);
    for (const RolloutRecord& rec : work.rollouts) {
      const bool match = rec.predicted_label == gold_label;
      double reward;
      if (!rec.format_valid) {
        reward = -1.0;
      } else {
        switch (config_.regime) {
          case Regime::OutcomeOnly:
          case Regime::NaiveCombination:
            reward = composite_reward(true, match, 0, config_.lambda, true);
            break;
          case Regime::FullHumanCritique: {
            const SimilarityScores scores =
                compute_similarity(gold, rec.argument_set, MatchMode::Core);
            reward = composite_reward(true, match, process_reward(scores.f1), config_.lambda,
                                      config_.outcome_regularization);
            break;
          }
          case Regime::OfflineMetaRm:
          case Regime::OnlineMetaRm: {
            const std::vector<double> features =
                metarm_featurize(*work.sample, rec, env_.universe_size());
            const double r_meta = metarm_predict(*next_metarm, features);
            reward = metarm_reward(true, match, r_meta, config_.lambda);
            break;
          }
          case Regime::OnlyMetaRm: {
            const std::vector<double> features =
                metarm_featurize(*work.sample, rec, env_.universe_size());
            reward = metarm_predict(*next_metarm, features);
            break;
          }
        }
        if (next_metarm) {
          // MAE of the model's prediction against the oracle composite.
          const std::vector<double> features =
              metarm_featurize(*work.sample, rec, env_.universe_size());
          const SimilarityScores oracle =
              compute_similarity(gold, rec.argument_set, MatchMode::Core);
          const double oracle_reward = composite_reward(
              true, match, process_reward(oracle.f1), config_.lambda, true);
          mae_sum += std::abs(metarm_predict(*next_metarm, features) - oracle_reward);
          ++mae_count;
        }
        if (config_.do_for_metarm && next_metarm) {
          do_pseudo_targets.push_back(
              {metarm_featurize(*work.sample, rec, env_.universe_size()),
               match ? 1.0 + config_.lambda / 2.0 : 0.0});
        }
      }
      work.rewards.push_back(reward);
    }
  }
  if (online && next_metarm && !do_pseudo_targets.empty()) {
    next_metarm = online_update(*next_metarm, do_pseudo_targets, config_.metarm_online_lr,
                                config_.metarm_online_epochs,
                                mix_seed(config_.seed, 0xd0d0 + step),
                                config_.metarm_batch_size);
  }
  metrics.score_do_ms = ms_since(t0);
  if (mae_count > 0) metrics.metarm_mae_vs_oracle = mae_sum / mae_count;

  // Phase 5: group advantages and one policy step.
  t0 = std::chrono::steady_clock::now();
  std::vector<RolloutRecord> all_rollouts;
  std::vector<double> all_advantages;
  for (GroupWork& work : groups) {
    const GroupAdvantages adv = group_advantages(work.rewards, 1e-8, config_.literal_sigma);
    for (std::size_t i = 0; i < work.rollouts.size(); ++i) {
      all_rollouts.push_back(work.rollouts[i]);
      all_advantages.push_back(adv.advantages[i]);
    }
  }
  const SurrogateResult surrogate =
      surrogate_loss(state_.policy, all_rollouts, all_advantages, config_.epsilon, config_.beta,
                     state_.ref_policy, config_.temperature);
  ToyPolicy next_policy = policy_update(state_.policy, surrogate.gradient, config_.policy_lr,
                                        config_.grad_clip_norm);
  metrics.policy_update_ms = ms_since(t0);

  // Oracle metrics over every rollout in the batch.
  int correct = 0, total = 0;
  double f1_sum = 0.0, arg_count_sum = 0.0;
  int valid = 0;
  std::vector<ScoredRollout> scored;
  for (const GroupWork& work : groups) {
    const ArgumentSet gold = env_.gold_at(work.env_idx, step);
    const Side gold_label = env_.gold_label_at(work.env_idx, step);
    for (const RolloutRecord& rec : work.rollouts) {
      ++total;
      ScoredRollout record;
      if (rec.format_valid) {
        ++valid;
        record.outcome_correct = rec.predicted_label == gold_label;
        record.similarity = compute_similarity(gold, rec.argument_set, MatchMode::All).f1;
        arg_count_sum += static_cast<double>(rec.argument_set.size());
      }
      if (record.outcome_correct) ++correct;
      f1_sum += record.similarity;
      scored.push_back(record);
    }
  }
  metrics.outcome_accuracy = total > 0 ? static_cast<double>(correct) / total : 0.0;
  metrics.mean_similarity_f1 = total > 0 ? f1_sum / total : 0.0;
  metrics.mean_argument_count = valid > 0 ? arg_count_sum / valid : 0.0;
  const auto [p01, p10] = inconsistency_metrics(scored, 0.5);
  metrics.p_process0_given_outcome1 = p01;
  metrics.p_process1_given_outcome0 = p10;

  if (!config_.log_timings) {
    metrics.rollout_ms = metrics.score_dh_ms = metrics.metarm_update_ms = 0.0;
    metrics.score_do_ms = metrics.policy_update_ms = 0.0;
  }

  // Commit: all phases succeeded, swap the snapshots.
  state_.policy = std::move(next_policy);
  state_.metarm = std::move(next_metarm);
  state_.step = step + 1;
  return metrics;
}

void Orchestrator::run_experiment(const std::string& output_dir) {
  std::filesystem::create_directories(output_dir);
  initialize();
  write_train_config(config_, (std::filesystem::path(output_dir) / "config.txt").string());

  std::ofstream metrics_out(std::filesystem::path(output_dir) / "metrics.csv");
  if (!metrics_out) throw std::runtime_error("cannot write metrics file in " + output_dir);
  metrics_out << step_metrics_header() << "\n";

  const std::string digest = config_.digest();
  for (int step = 0; step < config_.steps; ++step) {
    std::vector<PreferenceSample> batch = next_batch();
    StepMetrics metrics;
    try {
      metrics = training_step(batch);
    } catch (const std::exception& ex) {
      throw std::runtime_error("step " + std::to_string(step) + ": " + ex.what());
    }
    metrics_out << step_metrics_row(metrics) << "\n";
    if (config_.checkpoint_interval > 0 && (step + 1) % config_.checkpoint_interval == 0) {
      const std::string tag = "_step" + std::to_string(step + 1);
      save_policy(state_.policy, state_.step, digest,
                  (std::filesystem::path(output_dir) / ("policy" + tag + ".ckpt")).string());
      if (state_.metarm) {
        save_metarm(*state_.metarm,
                    (std::filesystem::path(output_dir) / ("metarm" + tag + ".ckpt")).string());
      }
    }
  }
  save_policy(state_.policy, state_.step, digest,
              (std::filesystem::path(output_dir) / "policy.ckpt").string());
  if (state_.metarm) {
    save_metarm(*state_.metarm, (std::filesystem::path(output_dir) / "metarm.ckpt").string());
  }
}

}  // namespace crl
