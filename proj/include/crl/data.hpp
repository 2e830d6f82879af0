#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

namespace crl {

enum class Side { A, B };
enum class Polarity { Positive, Negative };

inline const char* to_string(Side s) { return s == Side::A ? "A" : "B"; }
inline const char* to_string(Polarity p) {
  return p == Polarity::Positive ? "positive" : "negative";
}

// One point made by a critique. Equality is the (content_key, target,
// polarity) tuple; the fatal flag marks decisive flaws but does not
// participate in matching.
struct Argument {
  std::string content_key;
  Side target = Side::A;
  Polarity polarity = Polarity::Positive;
  bool fatal = false;

  std::tuple<const std::string&, Side, Polarity> key() const {
    return {content_key, target, polarity};
  }
  friend bool operator==(const Argument& a, const Argument& b) {
    return a.key() == b.key();
  }
};

struct ArgumentSet {
  std::vector<Argument> arguments;

  bool empty() const { return arguments.empty(); }
  std::size_t size() const { return arguments.size(); }
};

struct PreferenceSample {
  std::string id;
  std::string query;
  std::string response_a;
  std::string response_b;
  Side label = Side::A;
  std::optional<ArgumentSet> human_critique;
  std::optional<std::string> human_critique_text;
};

struct ShiftEvent {
  int step = 0;
  std::vector<int> permutation;  // slot i remaps to universe slot permutation[i]
};

// Synthetic critique environment. Universe slot i carries the canonical
// content key "k<i>" and target A for even i, B for odd i.
struct EnvironmentSpec {
  std::vector<Argument> argument_universe;
  std::vector<ArgumentSet> gold_sets;  // parallel to the generated samples
  std::vector<Side> gold_labels;
  std::vector<ShiftEvent> shift_schedule;

  int universe_size() const { return static_cast<int>(argument_universe.size()); }

  // Gold arguments as seen at a training step: shift events whose step is
  // <= `step` are composed in order.
  ArgumentSet gold_at(std::size_t sample_index, int step) const;
  // Shifts move the critique distribution only; the annotated preference
  // label is step-invariant.
  Side gold_label_at(std::size_t sample_index, int step) const;
};

struct GeneratorConfig {
  int universe_size = 6;
  int n_samples = 100;
  double fraction_with_critique = 0.5;
  int min_gold_args = 1;
  int max_gold_args = 3;
  double fatal_fraction = 0.0;     // probability a universe argument is fatal
  std::vector<int> shift_steps;    // each gets a seeded random permutation
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Canonical slot <-> argument mapping shared by the generator, the policy
// decoder and the MetaRM featurizer.
std::string slot_key(int slot);
Side slot_target(int slot);
// Returns the slot for a canonical key ("k3" -> 3) or -1 if unknown.
int slot_of_key(const std::string& content_key, int universe_size);

// Gold label from gold arguments: the response with the larger net-positive
// argument count wins, ties go to A.
Side derive_label(const ArgumentSet& gold);

std::vector<PreferenceSample> load_dataset(const std::string& path);
void save_dataset(const std::vector<PreferenceSample>& samples, const std::string& path);

std::pair<std::vector<PreferenceSample>, std::vector<PreferenceSample>>
split_streams(const std::vector<PreferenceSample>& samples);

std::pair<EnvironmentSpec, std::vector<PreferenceSample>>
generate_environment(const GeneratorConfig& config, std::uint64_t seed);

EnvironmentSpec load_environment(const std::string& path);
void save_environment(const EnvironmentSpec& env, const std::string& path);

}  // namespace crl
