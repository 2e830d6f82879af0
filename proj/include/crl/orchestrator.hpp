#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "crl/data.hpp"
#include "crl/metarm.hpp"
#include "crl/policy.hpp"
#include "crl/reward.hpp"

namespace crl {

enum class Regime {
  OutcomeOnly,
  NaiveCombination,   // human-critique process reward on D_H, plain outcome on D_O
  OfflineMetaRm,
  OnlineMetaRm,
  FullHumanCritique,
  OnlyMetaRm,
};

const char* to_string(Regime regime);
Regime regime_from_string(const std::string& name);

struct TrainConfig {
  double lambda = 0.5;
  int n_rollout = 8;
  double epsilon = 0.2;
  double beta = 0.001;
  double temperature = 0.7;
  double policy_lr = 0.05;
  double metarm_cold_lr = 0.05;
  double metarm_online_lr = 0.02;
  int metarm_cold_epochs = 3;
  int metarm_online_epochs = 1;
  int metarm_batch_size = 4;
  int cold_n_sample = 8;
  int steps = 100;
  int batch_size = 8;            // samples per step
  double dh_batch_fraction = -1; // <0: use the dataset's own D_H ratio
  Regime regime = Regime::OutcomeOnly;
  MetaRmVariant metarm_variant = MetaRmVariant::Regression;
  bool aggressive_online = false;  // 2 epochs at the higher online rate
  bool outcome_regularization = true;
  bool do_for_metarm = false;      // outcome-only pseudo targets from D_O
  bool literal_sigma = false;
  bool garble_enabled = true;
  double garble_bias = -2.0;
  double grad_clip_norm = 0.0;
  std::uint64_t seed = 0;
  int checkpoint_interval = 0;  // 0 = final checkpoints only
  bool log_timings = true;      // zeroed timing columns when false

  std::string digest() const;  // short content digest echoed into checkpoints
};

// Flat key=value config file; '#' starts a comment; unknown keys rejected.
TrainConfig parse_train_config(const std::string& path);
void write_train_config(const TrainConfig& config, const std::string& path);

struct StepMetrics {
  int step = 0;
  double outcome_accuracy = 0.0;
  double mean_similarity_f1 = 0.0;
  std::optional<double> metarm_mae_vs_oracle;
  std::optional<double> p_process0_given_outcome1;
  std::optional<double> p_process1_given_outcome0;
  double mean_argument_count = 0.0;
  double rollout_ms = 0.0;
  double score_dh_ms = 0.0;
  double metarm_update_ms = 0.0;
  double score_do_ms = 0.0;
  double policy_update_ms = 0.0;
};

std::string step_metrics_header();
std::string step_metrics_row(const StepMetrics& metrics);

struct ScoredRollout {
  bool outcome_correct = false;
  double similarity = 0.0;
};

// (p01, p10) from outcome/process contingency; a side is absent when its
// conditioning event never occurs.
std::pair<std::optional<double>, std::optional<double>>
inconsistency_metrics(std::span<const ScoredRollout> records, double threshold = 0.5);

struct TrainState {
  ToyPolicy policy;
  ToyPolicy ref_policy;
  std::optional<MetaRmModel> metarm;
  int step = 0;

  // Batch cursors into the two streams, advanced per step.
  std::size_t dh_cursor = 0;
  std::size_t do_cursor = 0;
};

class Orchestrator {
 public:
  Orchestrator(TrainConfig config, EnvironmentSpec env, std::vector<PreferenceSample> samples);

  // Cold start when the regime consults a MetaRM; no-op otherwise.
  void initialize();

  // One Algorithm-1 step over an explicit batch. Exceptions leave the state
  // untouched.
  StepMetrics training_step(const std::vector<PreferenceSample>& batch);

  // Runs `config.steps` steps over interleaved D_H/D_O batches and writes
  // metrics.csv, config echo, and checkpoints under `output_dir`.
  void run_experiment(const std::string& output_dir);

  std::vector<PreferenceSample> next_batch();

  const TrainState& state() const { return state_; }
  const TrainConfig& config() const { return config_; }
  const EnvironmentSpec& environment() const { return env_; }

 private:
  TrainConfig config_;
  EnvironmentSpec env_;
  std::vector<PreferenceSample> d_h_;
  std::vector<PreferenceSample> d_o_;
  std::vector<std::size_t> env_index_of_dh_;  // positions in the full sample list
  std::vector<std::size_t> env_index_of_do_;
  TrainState state_;
  bool initialized_ = false;

  std::size_t env_index(const std::string& sample_id) const;
  bool uses_metarm() const;
};

}  // namespace crl
