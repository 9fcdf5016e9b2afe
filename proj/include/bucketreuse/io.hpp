#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "bucketreuse/bitvector.hpp"
#include "bucketreuse/coordination.hpp"
#include "bucketreuse/errors.hpp"
#include "bucketreuse/simulation.hpp"

namespace bucketreuse {

using Json = nlohmann::json;

/// Shortest round-trip decimal form; "NA" for missing values.
inline std::string format_number(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string format_number(const std::optional<double>& v) { return v ? format_number(*v) : "NA"; }

inline Json optional_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidParams("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
  const auto parent = std::filesystem::path(path).parent_path();
  std::error_code ec;
  if (!parent.empty()) std::filesystem::create_directories(parent, ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InvalidParams("cannot write '" + path + "'");
  out << content;
  if (!out) throw InvalidParams("write to '" + path + "' failed");
}

inline Json parse_json(const std::string& text, const std::string& source) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ConfigInvalid(source + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// State export

inline Json experiment_to_json(const Experiment& e) {
  Json buckets = Json::array();
  for (auto b : e.buckets) buckets.push_back(b.index);
  return Json{{"id", e.id}, {"start_day", e.start_day}, {"length_days", e.length_days}, {"buckets", buckets}};
}

inline Json state_to_json(const ProgramState& s) {
  Json exps = Json::array();
  for (const auto& e : s.active()) exps.push_back(experiment_to_json(e));
  return Json{{"clock", s.clock()},
              {"B", s.num_buckets()},
              {"experiments", exps},
              {"availability", rle_encode(s.availability().bits)}};
}

// ---------------------------------------------------------------------------
// Flat key-value configs

namespace detail {

class ConfigReader {
 public:
  ConfigReader(const Json& j, std::string source) : j_(j), source_(std::move(source)) {
    if (!j_.is_object()) throw ConfigInvalid(source_ + ": config must be a JSON object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const Json::exception&) {
      throw ConfigInvalid(source_ + ": bad value for '" + key + "'");
    }
  }

  void unsigned_value(const char* key, std::uint64_t& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const Json& v = j_.at(key);
    if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)) throw ConfigInvalid(source_ + ": '" + key + "' must be a non-negative integer");
    out = v.get<std::uint64_t>();
  }

  bool has(const char* key) const { return j_.contains(key); }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigInvalid(source_ + ": unknown key '" + it.key() + "'");
  }

 private:
  const Json& j_;
  std::string source_;
  std::set<std::string> seen_;
};

}  // namespace detail

inline SamplingSimConfig sampling_config_from_json(const Json& j, SamplingSimConfig cfg = {},
                                                   const std::string& source = "config") {
  detail::ConfigReader r(j, source);
  r.unsigned_value("replications", cfg.replications);
  r.unsigned_value("population_size", cfg.population_size);
  r.unsigned_value("sample_size", cfg.sample_size);
  r.unsigned_value("num_buckets", cfg.num_buckets);
  r.unsigned_value("bucket_size", cfg.bucket_size);
  r.unsigned_value("samples_per_population", cfg.samples_per_population);
  r.unsigned_value("assignments_per_sample", cfg.assignments_per_sample);
  r.read("icc_coefficient", cfg.icc_coefficient);
  r.unsigned_value("seed", cfg.seed);
  r.finish();
  return cfg;
}

inline Json to_json(const SamplingSimConfig& c) {
  return Json{{"replications", c.replications},
              {"population_size", c.population_size},
              {"sample_size", c.sample_size},
              {"num_buckets", c.num_buckets},
              {"bucket_size", c.bucket_size},
              {"samples_per_population", c.samples_per_population},
              {"assignments_per_sample", c.assignments_per_sample},
              {"icc_coefficient", c.icc_coefficient},
              {"seed", c.seed}};
}

inline ProgramSimConfig program_config_from_json(const Json& j, ProgramSimConfig cfg = {},
                                                 const std::string& source = "config") {
  detail::ConfigReader r(j, source);
  r.read("name", cfg.name);
  r.read("length_distribution", cfg.length_distribution);
  r.read("size_distribution", cfg.size_distribution);
  r.read("target_traffic", cfg.target_traffic);
  r.unsigned_value("num_buckets", cfg.num_buckets);
  r.read("horizon_days", cfg.horizon_days);
  r.unsigned_value("num_starting_points", cfg.num_starting_points);
  r.unsigned_value("replications_per_start", cfg.replications_per_start);
  r.read("effect_mean", cfg.effect_mean);
  r.read("effect_variance", cfg.effect_variance);
  r.unsigned_value("seed", cfg.seed);
  r.finish();
  return cfg;
}

inline Json to_json(const ProgramSimConfig& c) {
  return Json{{"name", c.name},
              {"length_distribution", c.length_distribution},
              {"size_distribution", c.size_distribution},
              {"target_traffic", c.target_traffic},
              {"num_buckets", c.num_buckets},
              {"horizon_days", c.horizon_days},
              {"num_starting_points", c.num_starting_points},
              {"replications_per_start", c.replications_per_start},
              {"effect_mean", c.effect_mean},
              {"effect_variance", c.effect_variance},
              {"seed", c.seed}};
}

// ---------------------------------------------------------------------------
// CSV

inline std::string metrics_csv(const MetricSeries& m) {
  std::string out =
      "setting,delta,availability_cor_mean,sampling_cor_mean,ate1_bias_mean,ate1_bias_sd,n_effective,"
      "availability_cor_sd,sampling_cor_sd,ate1_bias_abs_mean,ate1_bias_abs_se\n";
  for (const auto& r : m.rows) {
    out += m.setting + ',' + std::to_string(r.delta) + ',' + format_number(r.availability_cor_mean) + ',' +
           format_number(r.sampling_cor_mean) + ',' + format_number(r.ate1_bias_mean) + ',' +
           format_number(r.ate1_bias_sd) + ',' + std::to_string(r.n_effective) + ',' +
           format_number(r.availability_cor_sd) + ',' + format_number(r.sampling_cor_sd) + ',' +
           format_number(r.ate1_bias_abs_mean) + ',' + format_number(r.ate1_bias_abs_se) + '\n';
  }
  return out;
}

/// One row per day of comma-separated 0/1 values; blank lines are skipped.
inline std::vector<BitVector> parse_series_csv(const std::string& text) {
  std::vector<BitVector> days;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<std::uint8_t> bits;
    std::istringstream row(line);
    std::string cell;
    while (std::getline(row, cell, ',')) {
      const auto a = cell.find_first_not_of(" \t");
      const auto b = cell.find_last_not_of(" \t");
      const std::string v = a == std::string::npos ? "" : cell.substr(a, b - a + 1);
      if (v != "0" && v != "1") throw InvalidParams("line " + std::to_string(lineno) + ": expected 0 or 1");
      bits.push_back(v == "1");
    }
    if (!days.empty() && bits.size() != days.front().size())
      throw LengthMismatch("line " + std::to_string(lineno) + " has " + std::to_string(bits.size()) +
                           " values, expected " + std::to_string(days.front().size()));
    days.push_back(BitVector::from_bits(bits));
  }
  return days;
}

inline std::string series_csv(const std::vector<BitVector>& days) {
  std::string out;
  for (const auto& d : days) {
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (i) out += ',';
      out += d.test(i) ? '1' : '0';
    }
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Scripted coordination schedules

struct ScheduleEvent {
  int day = 1;
  enum class Action { Start, Stop } action = Action::Start;
  std::string id;
  double fraction = 0;
  int length_days = 1;
};

struct Schedule {
  std::uint64_t num_buckets = 100;
  int days = 1;
  std::string program = "program";
  std::vector<ScheduleEvent> events;  // replayed in listed order within a day
};

inline Schedule schedule_from_json(const Json& j, const std::string& source = "schedule") {
  Schedule s;
  detail::ConfigReader r(j, source);
  r.unsigned_value("num_buckets", s.num_buckets);
  r.read("days", s.days);
  r.read("program", s.program);
  Json events = Json::array();
  r.read("events", events);
  r.finish();
  if (s.days < 1) throw ConfigInvalid(source + ": days must be >= 1");
  if (!events.is_array()) throw ConfigInvalid(source + ": events must be an array");
  for (const auto& ej : events) {
    ScheduleEvent e;
    std::string action = "start";
    detail::ConfigReader er(ej, source + " event");
    er.read("day", e.day);
    er.read("action", action);
    er.read("id", e.id);
    er.read("fraction", e.fraction);
    er.read("length_days", e.length_days);
    er.finish();
    if (action == "start")
      e.action = ScheduleEvent::Action::Start;
    else if (action == "stop")
      e.action = ScheduleEvent::Action::Stop;
    else
      throw ConfigInvalid(source + ": action must be 'start' or 'stop'");
    if (e.day < 1 || e.day > s.days) throw ConfigInvalid(source + ": event day outside 1..days");
    if (e.action == ScheduleEvent::Action::Stop && e.id.empty()) throw ConfigInvalid(source + ": stop needs an id");
    s.events.push_back(std::move(e));
  }
  return s;
}

struct ScheduleRun {
  std::string csv;  // day,available_count,started_ids,stopped_ids
  ProgramState final_state;
  std::vector<BitVector> availability;
};

/// Replays a schedule: each day scheduled ends and explicit stops happen
/// first, then starts in listed order. Ids in CSV cells are ';'-separated.
inline ScheduleRun run_schedule(const Schedule& s, std::uint64_t seed) {
  Rng rng = derive_rng({seed});
  ProgramState state(s.num_buckets, s.program, seed);
  ScheduleRun run{"day,available_count,started_ids,stopped_ids\n", state, {}};
  for (int day = 1; day <= s.days; ++day) {
    std::vector<std::string> started, stopped;
    if (day > 1)
      for (const auto& e : state.advance_day()) stopped.push_back(e.id);
    for (const auto& ev : s.events)
      if (ev.day == day && ev.action == ScheduleEvent::Action::Stop) stopped.push_back(state.stop_experiment(ev.id).id);
    for (const auto& ev : s.events)
      if (ev.day == day && ev.action == ScheduleEvent::Action::Start)
        started.push_back(state.start_experiment(ev.fraction, ev.length_days, rng, ev.id).id);
    auto join = [](const std::vector<std::string>& v) {
      std::string o;
      for (std::size_t i = 0; i < v.size(); ++i) o += (i ? ";" : "") + v[i];
      return o;
    };
    run.csv += std::to_string(day) + ',' + std::to_string(state.available_count()) + ',' + join(started) + ',' +
               join(stopped) + '\n';
    run.availability.push_back(state.availability().bits);
  }
  run.final_state = state;
  return run;
}

}  // namespace bucketreuse
