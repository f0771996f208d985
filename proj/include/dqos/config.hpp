#pragma once

#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "dqos/attack.hpp"
#include "dqos/common.hpp"
#include "dqos/ini.hpp"
#include "dqos/predictor.hpp"
#include "dqos/simcore.hpp"
#include "dqos/topology.hpp"
#include "dqos/traffic.hpp"

namespace dqos {

struct ExperimentConfig {
  std::string topology = "default";  // "default", "same_site" or a file path
  std::string topology_text;         // resolved contents when a file is used
  std::uint64_t seed = 1;
  double warmup_s = 600;

  EngineConfig engine;
  TrafficConfig traffic;

  double baseline_duration_s = 600;
  std::size_t forced_miss_packets = 50;

  double collect_duration_s = 12000;
  double epoch_s = 10;
  double delay_s = 5;
  double window_s = 5;
  double granularity_ms = 100;
  double train_fraction = 0.8;

  TrainConfig train;
  std::size_t hidden = 20;
  double dropout = 0.15;
  double noise_sigma = 0.3;

  double attack_m = 0;
  std::vector<double> attack_bands{1, 2, 3};
  StepSizes steps;
  double aim_fraction = 0.25;
  double ceiling_fraction = 0.6;
  double attack_interval_s = 10;
  double attack_duration_s = 600;
  std::size_t audit_persistence = 3;

  double eval_duration_s = 1000;
  double eval_drop_low = 3;
  double eval_drop_high = 10;
  std::size_t eval_tries = 50;

  void set_seed(std::uint64_t s) {
    seed = s;
    engine.seed = s;
    train.seed = s;
  }

  Topology build_topology() const {
    if (topology == "default") return default_topology();
    if (topology == "same_site") return same_site_topology();
    return parse_topology(topology_text);
  }

  // Canonical "key = value" listing of every setting; hashed into file headers.
  std::string dump() const {
    std::ostringstream os;
    auto kv = [&os](const char* k, const auto& v) { os << k << " = " << v << "\n"; };
    auto num = [&kv](const char* k, double v) { kv(k, format_double(v)); };
    auto ms = [&num](const char* k, SimTime t) { num(k, to_ms(t)); };
    os << "[run]\n";
    kv("topology", topology);
    if (!topology_text.empty()) kv("topology_hash", fnv1a(topology_text));
    kv("seed", seed);
    num("warmup_s", warmup_s);
    os << "[engine]\n";
    kv("table_capacity", engine.table_capacity);
    num("idle_timeout_s", to_seconds(engine.idle_timeout));
    kv("hard_timeout_s", engine.hard_timeout == kNever ? std::string("inf") : format_double(to_seconds(engine.hard_timeout)));
    kv("queue_bytes", engine.queue_capacity_bytes);
    num("controller_rtt_ms", engine.controller_rtt_ms);
    num("rtt_jitter", engine.rtt_jitter);
    kv("retry_rejected_installs", engine.retry_rejected_installs ? 1 : 0);
    ms("stats_bucket_ms", engine.stats_bucket);
    os << "[traffic]\n";
    kv("frame_size", traffic.frame_size);
    ms("frame_interval_ms", traffic.frame_interval);
    num("on_min_minutes", to_seconds(traffic.ranges.on_min) / 60);
    num("on_max_minutes", to_seconds(traffic.ranges.on_max) / 60);
    num("off_min_minutes", to_seconds(traffic.ranges.off_min) / 60);
    num("off_max_minutes", to_seconds(traffic.ranges.off_max) / 60);
    kv("frames_per_connection", traffic.frames_per_connection);
    num("attack_rate_pps", traffic.attack_rate_pps);
    kv("forged_size", traffic.forged_size);
    kv("dummy_size", traffic.dummy_size);
    num("dummy_initial_rate", traffic.dummy_initial_rate);
    num("dummy_flow_rate", traffic.dummy_flow_rate);
    num("dummy_target_pct", traffic.dummy_target_pct);
    num("dummy_allowance_pct", traffic.dummy_allowance_pct);
    ms("dummy_adjust_interval_ms", traffic.dummy_adjust_interval);
    num("dummy_gain", traffic.dummy_gain);
    os << "[baseline]\n";
    num("duration_s", baseline_duration_s);
    kv("forced_miss_packets", forced_miss_packets);
    os << "[collect]\n";
    num("duration_s", collect_duration_s);
    num("epoch_s", epoch_s);
    num("delay_s", delay_s);
    num("window_s", window_s);
    num("granularity_ms", granularity_ms);
    num("train_fraction", train_fraction);
    os << "[train]\n";
    kv("batch_size", train.batch_size);
    kv("max_epochs", train.max_epochs);
    kv("patience", train.patience);
    num("learning_rate", train.learning_rate);
    num("adam_beta1", train.adam_beta1);
    num("adam_beta2", train.adam_beta2);
    num("adam_eps", train.adam_eps);
    num("validation_fraction", train.validation_fraction);
    kv("hidden", hidden);
    num("dropout", dropout);
    num("noise_sigma", noise_sigma);
    os << "[attack]\n";
    num("m", attack_m);
    std::string bands;
    for (double b : attack_bands) bands += (bands.empty() ? "" : " ") + format_double(b);
    kv("bands", bands);
    num("p", steps.increment_p);
    num("q", steps.decrement_q);
    kv("max_iterations", steps.max_iterations);
    num("aim_fraction", aim_fraction);
    num("ceiling_fraction", ceiling_fraction);
    num("interval_s", attack_interval_s);
    num("duration_s", attack_duration_s);
    kv("audit_persistence", audit_persistence);
    os << "[eval]\n";
    num("duration_s", eval_duration_s);
    num("drop_low_pct", eval_drop_low);
    num("drop_high_pct", eval_drop_high);
    kv("tries", eval_tries);
    return os.str();
  }

  std::uint64_t hash() const { return fnv1a(dump()); }

  std::size_t collect_snapshots() const {
    return static_cast<std::size_t>(std::floor(collect_duration_s / epoch_s + 1e-9));
  }

  void validate() const {
    if (engine.table_capacity == 0) throw ConfigError("table_capacity must be positive");
    if (engine.queue_capacity_bytes == 0) throw ConfigError("queue_bytes must be positive");
    if (traffic.frame_size == 0 || traffic.forged_size == 0 || traffic.dummy_size == 0)
      throw ConfigError("packet sizes must be positive");
    if (traffic.frame_interval <= 0) throw ConfigError("frame_interval_ms must be positive");
    if (traffic.ranges.on_min > traffic.ranges.on_max || traffic.ranges.off_min > traffic.ranges.off_max)
      throw ConfigError("on/off ranges must be ordered");
    if (!(epoch_s > 0) || delay_s < 0 || !(window_s > 0) || delay_s + window_s > epoch_s)
      throw ConfigError("collection windows must fit inside the epoch");
    if (!(granularity_ms > 0)) throw ConfigError("granularity_ms must be positive");
    if (from_seconds(window_s) % from_ms(granularity_ms) != 0)
      throw ConfigError("granularity_ms must divide window_s");
    if (!(train_fraction > 0 && train_fraction < 1)) throw ConfigError("train_fraction must lie in (0,1)");
    if (!(noise_sigma >= 0)) throw ConfigError("noise_sigma must be non-negative");
    if (!(dropout >= 0 && dropout < 1)) throw ConfigError("dropout must lie in [0,1)");
    if (attack_bands.empty()) throw ConfigError("attack bands must not be empty");
    for (double b : attack_bands)
      if (!(b > 0)) throw ConfigError("attack bands must be positive");
    if (!(aim_fraction >= 0 && aim_fraction < ceiling_fraction && ceiling_fraction <= 1))
      throw ConfigError("need 0 <= aim_fraction < ceiling_fraction <= 1");
    if (!(attack_interval_s > 0)) throw ConfigError("attack interval must be positive");
    train.validate();
    steps.validate();
  }
};

namespace detail {

inline std::size_t entry_count(const IniDocument::Entry& e) {
  double v = entry_number(e);
  if (v < 0 || v != std::floor(v)) throw ConfigError("'" + e.key + "' expects a non-negative integer", e.line);
  return static_cast<std::size_t>(v);
}

}  // namespace detail

// Reads an experiment config. Unknown sections or keys are errors so typos do
// not silently fall back to defaults. `base_dir` resolves relative topology paths.
inline ExperimentConfig parse_config(std::string_view text, const std::string& base_dir = ".") {
  using E = IniDocument::Entry;
  ExperimentConfig c;
  auto doc = IniDocument::parse(text);
  using Setter = std::function<void(const E&)>;
  auto num = [](double& dst) { return Setter([&dst](const E& e) { dst = entry_number(e); }); };
  auto cnt = [](std::size_t& dst) { return Setter([&dst](const E& e) { dst = detail::entry_count(e); }); };
  auto u32 = [](std::uint32_t& dst) {
    return Setter([&dst](const E& e) { dst = static_cast<std::uint32_t>(detail::entry_count(e)); });
  };
  auto ms = [](SimTime& dst) { return Setter([&dst](const E& e) { dst = from_ms(entry_number(e)); }); };
  auto minutes = [](SimTime& dst) {
    return Setter([&dst](const E& e) { dst = from_seconds(entry_number(e) * 60); });
  };
  std::map<std::pair<std::string, std::string>, Setter> table = {
      {{"run", "topology"}, [&c](const E& e) { c.topology = e.value; }},
      {{"run", "seed"}, [&c](const E& e) { c.seed = detail::entry_count(e); }},
      {{"run", "warmup_s"}, num(c.warmup_s)},
      {{"engine", "table_capacity"}, cnt(c.engine.table_capacity)},
      {{"engine", "idle_timeout_s"},
       [&c](const E& e) {
         c.engine.idle_timeout = e.value == "inf" ? kNever : from_seconds(entry_number(e));
       }},
      {{"engine", "hard_timeout_s"},
       [&c](const E& e) {
         c.engine.hard_timeout = e.value == "inf" ? kNever : from_seconds(entry_number(e));
       }},
      {{"engine", "queue_bytes"}, cnt(c.engine.queue_capacity_bytes)},
      {{"engine", "controller_rtt_ms"}, num(c.engine.controller_rtt_ms)},
      {{"engine", "rtt_jitter"}, num(c.engine.rtt_jitter)},
      {{"engine", "retry_rejected_installs"},
       [&c](const E& e) { c.engine.retry_rejected_installs = detail::entry_count(e) != 0; }},
      {{"engine", "stats_bucket_ms"}, ms(c.engine.stats_bucket)},
      {{"traffic", "frame_size"}, u32(c.traffic.frame_size)},
      {{"traffic", "frame_interval_ms"}, ms(c.traffic.frame_interval)},
      {{"traffic", "on_min_minutes"}, minutes(c.traffic.ranges.on_min)},
      {{"traffic", "on_max_minutes"}, minutes(c.traffic.ranges.on_max)},
      {{"traffic", "off_min_minutes"}, minutes(c.traffic.ranges.off_min)},
      {{"traffic", "off_max_minutes"}, minutes(c.traffic.ranges.off_max)},
      {{"traffic", "frames_per_connection"}, u32(c.traffic.frames_per_connection)},
      {{"traffic", "attack_rate_pps"}, num(c.traffic.attack_rate_pps)},
      {{"traffic", "forged_size"}, u32(c.traffic.forged_size)},
      {{"traffic", "dummy_size"}, u32(c.traffic.dummy_size)},
      {{"traffic", "dummy_initial_rate"}, num(c.traffic.dummy_initial_rate)},
      {{"traffic", "dummy_flow_rate"}, num(c.traffic.dummy_flow_rate)},
      {{"traffic", "dummy_target_pct"}, num(c.traffic.dummy_target_pct)},
      {{"traffic", "dummy_allowance_pct"}, num(c.traffic.dummy_allowance_pct)},
      {{"traffic", "dummy_adjust_interval_ms"}, ms(c.traffic.dummy_adjust_interval)},
      {{"traffic", "dummy_gain"}, num(c.traffic.dummy_gain)},
      {{"baseline", "duration_s"}, num(c.baseline_duration_s)},
      {{"baseline", "forced_miss_packets"}, cnt(c.forced_miss_packets)},
      {{"collect", "duration_s"}, num(c.collect_duration_s)},
      {{"collect", "epoch_s"}, num(c.epoch_s)},
      {{"collect", "delay_s"}, num(c.delay_s)},
      {{"collect", "window_s"}, num(c.window_s)},
      {{"collect", "granularity_ms"}, num(c.granularity_ms)},
      {{"collect", "train_fraction"}, num(c.train_fraction)},
      {{"train", "batch_size"}, cnt(c.train.batch_size)},
      {{"train", "max_epochs"}, cnt(c.train.max_epochs)},
      {{"train", "patience"}, cnt(c.train.patience)},
      {{"train", "learning_rate"}, num(c.train.learning_rate)},
      {{"train", "adam_beta1"}, num(c.train.adam_beta1)},
      {{"train", "adam_beta2"}, num(c.train.adam_beta2)},
      {{"train", "adam_eps"}, num(c.train.adam_eps)},
      {{"train", "validation_fraction"}, num(c.train.validation_fraction)},
      {{"train", "hidden"}, cnt(c.hidden)},
      {{"train", "dropout"}, num(c.dropout)},
      {{"train", "noise_sigma"}, num(c.noise_sigma)},
      {{"attack", "m"}, num(c.attack_m)},
      {{"attack", "bands"},
       [&c](const E& e) {
         c.attack_bands.clear();
         for (auto f : split_ws(e.value)) {
           try {
             c.attack_bands.push_back(parse_double(f));
           } catch (const Error&) {
             throw ConfigError("'bands' expects numbers", e.line);
           }
         }
       }},
      {{"attack", "p"}, num(c.steps.increment_p)},
      {{"attack", "q"}, num(c.steps.decrement_q)},
      {{"attack", "max_iterations"}, cnt(c.steps.max_iterations)},
      {{"attack", "aim_fraction"}, num(c.aim_fraction)},
      {{"attack", "ceiling_fraction"}, num(c.ceiling_fraction)},
      {{"attack", "interval_s"}, num(c.attack_interval_s)},
      {{"attack", "duration_s"}, num(c.attack_duration_s)},
      {{"attack", "audit_persistence"}, cnt(c.audit_persistence)},
      {{"eval", "duration_s"}, num(c.eval_duration_s)},
      {{"eval", "drop_low_pct"}, num(c.eval_drop_low)},
      {{"eval", "drop_high_pct"}, num(c.eval_drop_high)},
      {{"eval", "tries"}, cnt(c.eval_tries)},
  };
  for (const auto& e : doc.entries()) {
    auto it = table.find({e.section, e.key});
    if (it == table.end()) throw ConfigError("unknown setting '" + e.key + "' in [" + e.section + "]", e.line);
    it->second(e);
  }
  c.set_seed(c.seed);
  if (c.topology != "default" && c.topology != "same_site") {
    std::string path = c.topology;
    if (!path.empty() && path[0] != '/') path = base_dir + "/" + path;
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read topology file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    c.topology_text = ss.str();
  }
  c.validate();
  return c;
}

}  // namespace dqos
