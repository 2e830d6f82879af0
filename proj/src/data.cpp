#include "crl/data.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "crl/rng.hpp"

namespace crl {

using nlohmann::json;

std::string slot_key(int slot) { return "k" + std::to_string(slot); }

Side slot_target(int slot) { return slot % 2 == 0 ? Side::A : Side::B; }

int slot_of_key(const std::string& content_key, int universe_size) {
  if (content_key.size() < 2 || content_key[0] != 'k') return -1;
  for (std::size_t i = 1; i < content_key.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(content_key[i]))) return -1;
  }
  const int slot = std::stoi(content_key.substr(1));
  if (slot < 0 || slot >= universe_size) return -1;
  return slot;
}

Side derive_label(const ArgumentSet& gold) {
  int net_a = 0;
  int net_b = 0;
  for (const Argument& arg : gold.arguments) {
    int& net = arg.target == Side::A ? net_a : net_b;
    net += arg.polarity == Polarity::Positive ? 1 : -1;
  }
  return net_a >= net_b ? Side::A : Side::B;
}

ArgumentSet EnvironmentSpec::gold_at(std::size_t sample_index, int step) const {
  ArgumentSet gold = gold_sets.at(sample_index);
  for (const ShiftEvent& shift : shift_schedule) {
    if (shift.step > step) continue;
    ArgumentSet shifted;
    shifted.arguments.reserve(gold.arguments.size());
    for (const Argument& arg : gold.arguments) {
      const int slot = slot_of_key(arg.content_key, universe_size());
      if (slot < 0) throw std::runtime_error("gold argument outside universe: " + arg.content_key);
      shifted.arguments.push_back(argument_universe.at(shift.permutation.at(slot)));
    }
    gold = std::move(shifted);
  }
  return gold;
}

Side EnvironmentSpec::gold_label_at(std::size_t sample_index, int /*step*/) const {
  // Shifts move the critique distribution (which arguments count as gold);
  // the annotated preference label stays fixed.
  return gold_labels.at(sample_index);
}

namespace {

Side parse_side(const std::string& s, const std::string& where) {
  if (s == "A") return Side::A;
  if (s == "B") return Side::B;
  throw ParseError(where + ": expected \"A\" or \"B\", got \"" + s + "\"");
}

Polarity parse_polarity(const std::string& s, const std::string& where) {
  if (s == "positive") return Polarity::Positive;
  if (s == "negative") return Polarity::Negative;
  throw ParseError(where + ": expected \"positive\" or \"negative\", got \"" + s + "\"");
}

ArgumentSet parse_argument_set(const json& arr, const std::string& where) {
  if (!arr.is_array()) throw ParseError(where + ": human_critique must be an array");
  ArgumentSet set;
  for (const json& item : arr) {
    Argument arg;
    arg.content_key = item.at("content_key").get<std::string>();
    if (arg.content_key.empty()) throw ParseError(where + ": empty content_key");
    arg.target = parse_side(item.at("target").get<std::string>(), where);
    arg.polarity = parse_polarity(item.at("polarity").get<std::string>(), where);
    arg.fatal = item.value("fatal", false);
    set.arguments.push_back(std::move(arg));
  }
  return set;
}

json argument_set_to_json(const ArgumentSet& set) {
  json arr = json::array();
  for (const Argument& arg : set.arguments) {
    arr.push_back({{"content_key", arg.content_key},
                   {"target", to_string(arg.target)},
                   {"polarity", to_string(arg.polarity)},
                   {"fatal", arg.fatal}});
  }
  return arr;
}

}  // namespace

std::vector<PreferenceSample> load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open dataset file: " + path);
  std::vector<PreferenceSample> samples;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(line_no);
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::exception& ex) {
      throw ParseError(where + ": malformed JSON: " + ex.what());
    }
    try {
      PreferenceSample s;
      s.id = obj.at("id").get<std::string>();
      s.query = obj.at("query").get<std::string>();
      s.response_a = obj.at("response_a").get<std::string>();
      s.response_b = obj.at("response_b").get<std::string>();
      s.label = parse_side(obj.at("label").get<std::string>(), where);
      if (obj.contains("human_critique_text")) {
        s.human_critique_text = obj.at("human_critique_text").get<std::string>();
      }
      if (obj.contains("human_critique")) {
        s.human_critique = parse_argument_set(obj.at("human_critique"), where);
      }
      samples.push_back(std::move(s));
    } catch (const json::exception& ex) {
      throw ParseError(where + ": schema error: " + ex.what());
    }
  }
  return samples;
}

void save_dataset(const std::vector<PreferenceSample>& samples, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write dataset file: " + path);
  for (const PreferenceSample& s : samples) {
    json obj = {{"id", s.id},
                {"query", s.query},
                {"response_a", s.response_a},
                {"response_b", s.response_b},
                {"label", to_string(s.label)}};
    if (s.human_critique_text) obj["human_critique_text"] = *s.human_critique_text;
    if (s.human_critique) obj["human_critique"] = argument_set_to_json(*s.human_critique);
    out << obj.dump() << "\n";
  }
}

std::pair<std::vector<PreferenceSample>, std::vector<PreferenceSample>>
split_streams(const std::vector<PreferenceSample>& samples) {
  std::vector<PreferenceSample> d_h;
  std::vector<PreferenceSample> d_o;
  for (const PreferenceSample& s : samples) {
    (s.human_critique ? d_h : d_o).push_back(s);
  }
  return {std::move(d_h), std::move(d_o)};
}

namespace {

std::string describe_argument(const Argument& arg) {
  std::string text = "#" + arg.content_key + "# ";
  text += arg.polarity == Polarity::Positive ? "a strength" : "a flaw";
  if (arg.fatal) text += " (decisive)";
  return text;
}

}  // namespace

std::pair<EnvironmentSpec, std::vector<PreferenceSample>>
generate_environment(const GeneratorConfig& config, std::uint64_t seed) {
  if (config.universe_size < 2) throw ConfigError("universe_size must be >= 2");
  if (config.n_samples < 1) throw ConfigError("n_samples must be >= 1");
  if (config.fraction_with_critique < 0.0 || config.fraction_with_critique > 1.0) {
    throw ConfigError("fraction_with_critique must be in [0, 1]");
  }
  if (config.min_gold_args < 1 || config.max_gold_args < config.min_gold_args ||
      config.max_gold_args > config.universe_size) {
    throw ConfigError("gold argument bounds must satisfy 1 <= min <= max <= universe_size");
  }
  if (config.fatal_fraction < 0.0 || config.fatal_fraction > 1.0) {
    throw ConfigError("fatal_fraction must be in [0, 1]");
  }

  Rng rng(seed);
  EnvironmentSpec env;
  for (int i = 0; i < config.universe_size; ++i) {
    Argument arg;
    arg.content_key = slot_key(i);
    arg.target = slot_target(i);
    arg.polarity = rng.next_bool() ? Polarity::Positive : Polarity::Negative;
    arg.fatal = rng.next_double() < config.fatal_fraction;
    env.argument_universe.push_back(std::move(arg));
  }

  // Exact critique count: the first round(n * fraction) positions of a
  // seeded permutation carry a human critique.
  const int n_with_critique =
      static_cast<int>(std::lround(config.n_samples * config.fraction_with_critique));
  std::vector<bool> has_critique(static_cast<std::size_t>(config.n_samples), false);
  {
    const std::vector<int> order = rng.permutation(config.n_samples);
    for (int i = 0; i < n_with_critique; ++i) {
      has_critique[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = true;
    }
  }

  std::vector<PreferenceSample> samples;
  for (int i = 0; i < config.n_samples; ++i) {
    const int n_gold = config.min_gold_args +
        static_cast<int>(rng.next_below(config.max_gold_args - config.min_gold_args + 1));
    std::vector<int> slots = rng.permutation(config.universe_size);
    slots.resize(n_gold);
    std::sort(slots.begin(), slots.end());

    ArgumentSet gold;
    for (int slot : slots) gold.arguments.push_back(env.argument_universe[slot]);

    PreferenceSample s;
    s.id = "s" + std::to_string(i);
    s.query = "Which response handles request " + std::to_string(i) + " better?";
    std::string about_a = "Response A for request " + std::to_string(i) + ".";
    std::string about_b = "Response B for request " + std::to_string(i) + ".";
    for (const Argument& arg : gold.arguments) {
      std::string& text = arg.target == Side::A ? about_a : about_b;
      text += " It shows " + describe_argument(arg) + ".";
    }
    s.response_a = about_a;
    s.response_b = about_b;
    s.label = derive_label(gold);

    if (has_critique[static_cast<std::size_t>(i)]) {
      s.human_critique = gold;
      std::string note = "Key points:";
      for (const Argument& arg : gold.arguments) {
        note += " " + describe_argument(arg) + " in response ";
        note += to_string(arg.target);
        note += ";";
      }
      s.human_critique_text = note;
    }

    env.gold_sets.push_back(std::move(gold));
    env.gold_labels.push_back(s.label);
    samples.push_back(std::move(s));
  }

  for (int step : config.shift_steps) {
    ShiftEvent shift;
    shift.step = step;
    // A shift must actually move something; redraw identity permutations.
    do {
      shift.permutation = rng.permutation(config.universe_size);
    } while (std::is_sorted(shift.permutation.begin(), shift.permutation.end()));
    env.shift_schedule.push_back(std::move(shift));
  }

  return {std::move(env), std::move(samples)};
}

EnvironmentSpec load_environment(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open environment file: " + path);
  json obj;
  try {
    in >> obj;
  } catch (const json::exception& ex) {
    throw ParseError(path + ": malformed JSON: " + ex.what());
  }
  EnvironmentSpec env;
  const std::string where = path;
  for (const json& item : obj.at("argument_universe")) {
    Argument arg;
    arg.content_key = item.at("content_key").get<std::string>();
    arg.target = parse_side(item.at("target").get<std::string>(), where);
    arg.polarity = parse_polarity(item.at("polarity").get<std::string>(), where);
    arg.fatal = item.value("fatal", false);
    env.argument_universe.push_back(std::move(arg));
  }
  for (const json& set : obj.at("gold_sets")) {
    env.gold_sets.push_back(parse_argument_set(set, where));
  }
  for (const json& label : obj.at("gold_labels")) {
    env.gold_labels.push_back(parse_side(label.get<std::string>(), where));
  }
  if (obj.contains("shift_schedule")) {
    for (const json& item : obj.at("shift_schedule")) {
      ShiftEvent shift;
      shift.step = item.at("step").get<int>();
      shift.permutation = item.at("permutation").get<std::vector<int>>();
      env.shift_schedule.push_back(std::move(shift));
    }
  }
  return env;
}

void save_environment(const EnvironmentSpec& env, const std::string& path) {
  json obj;
  obj["argument_universe"] = argument_set_to_json(ArgumentSet{env.argument_universe});
  obj["gold_sets"] = json::array();
  for (const ArgumentSet& set : env.gold_sets) {
    obj["gold_sets"].push_back(argument_set_to_json(set));
  }
  obj["gold_labels"] = json::array();
  for (Side label : env.gold_labels) obj["gold_labels"].push_back(to_string(label));
  obj["shift_schedule"] = json::array();
  for (const ShiftEvent& shift : env.shift_schedule) {
    obj["shift_schedule"].push_back({{"step", shift.step}, {"permutation", shift.permutation}});
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write environment file: " + path);
  out << obj.dump(2) << "\n";
}

}  // namespace crl
