#pragma once

#include <cmath>
#include <future>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dqos/attack.hpp"
#include "dqos/config.hpp"
#include "dqos/predictor.hpp"
#include "dqos/simcore.hpp"
#include "dqos/telemetry.hpp"
#include "dqos/topology.hpp"
#include "dqos/traffic.hpp"

namespace dqos {

// RNG stream labels so each stage sees independent, reproducible traffic.
enum class Stream : std::uint64_t { Collect = 0, Baseline = 1, Attack = 2, Eval = 3 };

// A running network: engine, all traffic sources and telemetry, warmed up.
// Without a known dummy rate the regulator runs for the whole warm-up and
// the rate is then frozen; with one, the rate is applied directly.
class Environment {
 public:
  Environment(const ExperimentConfig& cfg, Stream stream, std::optional<double> dummy_rate = std::nullopt)
      : seed_(mix_seed(cfg.seed, static_cast<std::uint64_t>(stream))) {
    EngineConfig ec = cfg.engine;
    ec.seed = seed_;
    engine_ = std::make_unique<Engine>(cfg.build_topology(), ec);
    workload_ = std::make_unique<Workload>(*engine_, cfg.traffic, seed_);
    telemetry_ = std::make_unique<Telemetry>(*engine_, from_ms(cfg.granularity_ms),
                                             from_seconds(2 * cfg.epoch_s + cfg.window_s));
    if (dummy_rate) workload_->set_dummy_rate(*dummy_rate);
    workload_->start();
    telemetry_->start();
    const SimTime warm = from_seconds(cfg.warmup_s);
    if (!dummy_rate) workload_->regulate_until(warm);
    engine_->advance(warm);
    engine_->clear_latencies();
  }

  Engine& engine() { return *engine_; }
  Workload& workload() { return *workload_; }
  const Telemetry& telemetry() const { return *telemetry_; }
  double dummy_rate() const { return workload_->regulator().current_rate; }

 private:
  std::uint64_t seed_;
  std::unique_ptr<Engine> engine_;
  std::unique_ptr<Workload> workload_;
  std::unique_ptr<Telemetry> telemetry_;
};

inline std::string file_header(const std::string& kind, const ExperimentConfig& cfg) {
  std::ostringstream os;
  os << "# dqos " << kind << " v1\n# config_hash=" << std::hex << cfg.hash() << std::dec << "\n# seed=" << cfg.seed
     << "\n";
  return os.str();
}

inline double mean_latency(const std::vector<LatencyRecord>& recs) {
  if (recs.empty()) return 0.0;
  double s = 0;
  for (const auto& r : recs) s += r.latency_ms();
  return s / static_cast<double>(recs.size());
}

// ---------------------------------------------------------------- baseline

struct ForcedMissResult {
  int misses = 0;
  double mean_latency_ms = 0;
  std::size_t packets = 0;
};

// Sends isolated packets across the same-site chain with rules preinstalled on
// every switch except the first `misses` ones.
inline std::vector<ForcedMissResult> forced_miss_scenarios(const ExperimentConfig& cfg) {
  std::vector<ForcedMissResult> out;
  const Topology topo = same_site_topology(cfg.engine.controller_rtt_ms > 0 ? cfg.engine.controller_rtt_ms : 68.0);
  const NodeId host = topo.hosts().front(), server = topo.servers().front();
  const Route& route = topo.route(host, server);
  for (int m = 0; m <= static_cast<int>(route.size()); ++m) {
    EngineConfig ec = cfg.engine;
    ec.seed = mix_seed(cfg.seed, 0xF0 + static_cast<std::uint64_t>(m));
    Engine eng(topo, ec);
    KeyAllocator keys(topo.node(host).address);
    for (std::size_t i = 0; i < cfg.forced_miss_packets; ++i) {
      eng.advance(from_seconds(static_cast<double>(i)));
      Packet p;
      p.key = keys.next();
      p.size = cfg.traffic.frame_size;
      p.src = host;
      p.dst = server;
      p.frame_id = i;
      for (std::size_t s = static_cast<std::size_t>(m); s < route.size(); ++s)
        eng.preinstall(route[s], p.key, s + 1 < route.size() ? route[s + 1] : server);
      eng.inject(p);
    }
    eng.advance(from_seconds(static_cast<double>(cfg.forced_miss_packets) + 10));
    out.push_back({m, mean_latency(eng.latencies()), eng.latencies().size()});
  }
  return out;
}

struct BaselineResult {
  SimReport report;
  std::vector<std::string> node_names;
  std::vector<ForcedMissResult> forced;
  double dummy_rate = 0;

  double mean_latency_ms() const { return report.mean_latency_ms(); }
};

inline BaselineResult run_baseline(const ExperimentConfig& cfg) {
  BaselineResult r;
  Environment env(cfg, Stream::Baseline);
  auto& eng = env.engine();
  eng.advance(eng.now() + from_seconds(cfg.baseline_duration_s));
  r.report = eng.report();
  r.node_names = eng.node_names();
  r.dummy_rate = env.dummy_rate();
  r.forced = forced_miss_scenarios(cfg);
  return r;
}

// Latency histogram with fixed-width bins, for plotting.
inline std::string latency_histogram(const std::vector<LatencyRecord>& recs, double bin_ms = 10) {
  std::map<long, std::size_t> bins;
  for (const auto& r : recs) ++bins[static_cast<long>(std::floor(r.latency_ms() / bin_ms))];
  std::ostringstream os;
  os << "# columns: bin_start_ms bin_end_ms count\n";
  for (const auto& [b, n] : bins)
    os << format_double(static_cast<double>(b) * bin_ms) << " " << format_double(static_cast<double>(b + 1) * bin_ms)
       << " " << n << "\n";
  return os.str();
}

// ---------------------------------------------------------------- collect

inline Dataset run_collect(const ExperimentConfig& cfg) {
  Environment env(cfg, Stream::Collect);
  Dataset ds;
  ds.layout = env.telemetry().layout();
  ds.k = env.workload().attacker_count();
  ds.header.config_hash = cfg.hash();
  ds.header.seed = cfg.seed;
  ds.header.topology_fingerprint = env.engine().topology().fingerprint();
  ds.header.epoch = from_seconds(cfg.epoch_s);
  ds.header.dummy_rate = env.dummy_rate();
  std::mt19937_64 rng(mix_seed(cfg.seed, 0xA1FA));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  CollectParams params{cfg.collect_snapshots(), from_seconds(cfg.epoch_s), from_seconds(cfg.delay_s),
                       from_seconds(cfg.window_s)};
  ds.snapshots = collect(env.engine(), env.workload(), env.telemetry(), params, [&](std::size_t) {
    std::vector<double> a(ds.k);
    for (auto& x : a) x = u(rng);
    return a;
  });
  return ds;
}

inline std::uint64_t dataset_hash(const Dataset& ds) {
  std::ostringstream os;
  ds.write(os);
  return fnv1a(os.str());
}

// ---------------------------------------------------------------- train

struct HeldOutScore {
  double rmse = 0;           // target switch, percentage points
  double baseline_rmse = 0;  // constant training mean
  std::size_t rows = 0;
};

struct TrainOutcome {
  PredictorModel model;
  TrainReport report;
  HeldOutScore test;
};

inline HeldOutScore score_target_switch(const PredictorModel& model, const ModelData& test, std::size_t target) {
  HeldOutScore s;
  const double mean = model.target_norm.mean.at(target);
  double se = 0, be = 0;
  for (std::size_t i = 0; i < test.x.size(); ++i) {
    const double pred = model.predict_normalized(test.x[i])[target];
    const double actual = model.target_norm.invert(test.y[i])[target];
    se += (pred - actual) * (pred - actual);
    be += (mean - actual) * (mean - actual);
  }
  s.rows = test.x.size();
  if (s.rows > 0) {
    s.rmse = std::sqrt(se / static_cast<double>(s.rows));
    s.baseline_rmse = std::sqrt(be / static_cast<double>(s.rows));
  }
  return s;
}

// Index of the target switch within the per-switch outputs. The dataset must
// have been collected on the configured topology.
inline std::size_t target_slot(const ExperimentConfig& cfg, const Dataset& ds) {
  const Topology topo = cfg.build_topology();
  if (!(StateLayout::of(topo) == ds.layout)) throw LayoutMismatch("dataset layout does not match the topology");
  return static_cast<std::size_t>(topo.switch_index(topo.target_switch()));
}

inline TrainOutcome train_model(const Dataset& ds, int model_id, const ExperimentConfig& cfg,
                                bool noisy_test = false) {
  TrainOutcome out;
  auto& m = out.model;
  m.model_id = model_id;
  m.k = ds.k;
  m.layout = ds.layout;
  m.columns = input_columns(model_id, ds.layout, ds.k);
  m.dataset_hash = dataset_hash(ds);
  m.dummy_rate = ds.header.dummy_rate;
  const std::size_t split = ds.split_index(cfg.train_fraction);
  auto [train_rows, test_rows] =
      prepare_model_data(ds, model_id, split, cfg.noise_sigma, cfg.seed, m.input_norm, m.target_norm, noisy_test);
  m.net = Mlp::table2(m.columns.size(), ds.layout.size(1), cfg.hidden, cfg.dropout);
  std::mt19937_64 init_rng(mix_seed(cfg.seed, 0x1417 + static_cast<std::uint64_t>(model_id)));
  m.net.init(init_rng);
  TrainConfig tc = cfg.train;
  tc.seed = mix_seed(cfg.seed, 0x7000 + static_cast<std::uint64_t>(model_id));
  out.report = train(m.net, train_rows.x, train_rows.y, tc);
  out.test = score_target_switch(m, test_rows, target_slot(cfg, ds));
  return out;
}

// ---------------------------------------------------------------- eval

struct EvalRow {
  SimTime t = 0;
  std::vector<double> alphas;
  std::vector<double> actual;     // per switch, changed-state window
  std::vector<double> predicted;  // per switch
};

struct EvalResult {
  std::vector<EvalRow> rows;
  std::size_t target = 0;
  double rmse = 0;
  double null_rmse = 0;
  std::size_t in_regime = 0;
};

inline EvalResult run_eval(const PredictorModel& model, const ExperimentConfig& cfg, bool noisy_inputs = false) {
  Environment env(cfg, Stream::Eval, model.dummy_rate);
  auto& eng = env.engine();
  const auto& topo = eng.topology();
  EvalResult res;
  res.target = static_cast<std::size_t>(topo.switch_index(topo.target_switch()));
  std::mt19937_64 rng(mix_seed(cfg.seed, 0xE7A1));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto n = static_cast<std::size_t>(std::floor(cfg.eval_duration_s / cfg.epoch_s + 1e-9));
  const SimTime epoch = from_seconds(cfg.epoch_s), delay = from_seconds(cfg.delay_s), window = from_seconds(cfg.window_s);
  const double lo = cfg.eval_drop_low, hi = cfg.eval_drop_high;
  auto predict = [&](const StateVector& state, const std::vector<double>& a) {
    if (!noisy_inputs || !model_is_noisy(model.model_id)) return model.predict_drop_rates(state, a);
    auto z = model.input_norm.apply(model.raw_input(state, a));
    add_state_noise(z, model.k, cfg.noise_sigma, rng);
    return model.predict_normalized(z);
  };
  double se = 0, ne = 0;
  for (std::size_t j = 0; j < n; ++j) {
    const SimTime t = eng.now();
    const StateVector state = env.telemetry().sample_state(t - window, t);
    std::vector<double> best;
    std::vector<double> best_pred;
    double best_gap = 0;
    for (std::size_t tr = 0; tr < std::max<std::size_t>(1, cfg.eval_tries); ++tr) {
      std::vector<double> a(model.k);
      for (auto& x : a) x = u(rng);
      auto p = predict(state, a);
      const double d = p[res.target];
      const double gap = d < lo ? lo - d : (d > hi ? d - hi : 0.0);
      if (best.empty() || gap < best_gap) {
        best = a;
        best_pred = p;
        best_gap = gap;
      }
      if (gap == 0) break;
    }
    if (best_gap == 0) ++res.in_regime;
    env.workload().set_alphas(best);
    eng.advance(t + delay + window);
    auto changed = env.telemetry().sample_state(t + delay, t + delay + window);
    EvalRow row{t, best, changed.cat2_drop_rates, best_pred};
    const double e = row.predicted[res.target] - row.actual[res.target];
    const double ne1 = model.target_norm.mean[res.target] - row.actual[res.target];
    se += e * e;
    ne += ne1 * ne1;
    res.rows.push_back(std::move(row));
    eng.advance(t + epoch);
  }
  if (n > 0) {
    res.rmse = std::sqrt(se / static_cast<double>(n));
    res.null_rmse = std::sqrt(ne / static_cast<double>(n));
  }
  return res;
}

// ---------------------------------------------------------------- attack

struct BandOutcome {
  double band_k = 0;
  AttackReport report;
  StealthVerdict verdict;
  double within_fraction = 0;
};

struct AttackSuite {
  double no_attack_latency_ms = 0;
  AttackReport no_attack;
  std::vector<BandOutcome> bands;
};

inline AttackPlan make_plan(const ExperimentConfig& cfg, const Topology& topo, double band_k) {
  AttackPlan plan;
  plan.target.target_switch = topo.target_switch();
  plan.target.mean_pct = cfg.attack_m;
  plan.target.band_pct = band_k;
  plan.steps = cfg.steps;
  plan.aim_fraction = cfg.aim_fraction;
  plan.ceiling_fraction = cfg.ceiling_fraction;
  plan.interval = from_seconds(cfg.attack_interval_s);
  plan.window = from_seconds(cfg.window_s);
  plan.intervals = static_cast<std::size_t>(std::floor(cfg.attack_duration_s / cfg.attack_interval_s + 1e-9));
  return plan;
}

// One independent run for a band (or the no-attack reference when band_k is
// empty). Runs share the traffic stream so they differ only in the attack.
inline AttackReport run_attack_once(const PredictorModel& model, const ExperimentConfig& cfg,
                                    std::optional<double> band_k) {
  Environment env(cfg, Stream::Attack, model.dummy_rate);
  auto plan = make_plan(cfg, env.engine().topology(), band_k.value_or(1.0));
  plan.no_attack = !band_k.has_value();
  return run_attack(env.engine(), env.workload(), env.telemetry(), model, plan);
}

inline AttackSuite run_attack_suite(const PredictorModel& model, const ExperimentConfig& cfg,
                                    bool parallel = true) {
  std::vector<std::optional<double>> jobs{std::nullopt};
  for (double b : cfg.attack_bands) jobs.push_back(b);
  std::vector<AttackReport> reports(jobs.size());
  if (parallel) {
    std::vector<std::future<AttackReport>> fs;
    for (const auto& j : jobs) fs.push_back(std::async(std::launch::async, run_attack_once, std::cref(model),
                                                       std::cref(cfg), j));
    for (std::size_t i = 0; i < fs.size(); ++i) reports[i] = fs[i].get();
  } else {
    for (std::size_t i = 0; i < jobs.size(); ++i) reports[i] = run_attack_once(model, cfg, jobs[i]);
  }
  AttackSuite suite;
  suite.no_attack = std::move(reports[0]);
  suite.no_attack_latency_ms = suite.no_attack.mean_latency_ms;
  const Topology topo = cfg.build_topology();
  for (std::size_t i = 1; i < jobs.size(); ++i) {
    BandOutcome b;
    b.band_k = *jobs[i];
    auto plan = make_plan(cfg, topo, b.band_k);
    b.report = std::move(reports[i]);
    b.verdict = stealth_audit(b.report.actual_drops(), plan.target, cfg.audit_persistence);
    b.within_fraction = b.report.fraction_within(plan.target.upper());
    suite.bands.push_back(std::move(b));
  }
  return suite;
}

inline std::string attack_summary_table(const AttackSuite& s, double m) {
  std::ostringstream os;
  os << "# columns: m k no_attack_ms attack_ms ratio mean_drop_pct max_drop_pct within_band verdict\n";
  for (const auto& b : s.bands) {
    auto d = b.report.actual_drops();
    double mean = 0, mx = 0;
    for (double x : d) {
      mean += x;
      mx = std::max(mx, x);
    }
    if (!d.empty()) mean /= static_cast<double>(d.size());
    const double ratio = s.no_attack_latency_ms > 0 ? b.report.mean_latency_ms / s.no_attack_latency_ms : 0.0;
    os << format_double(m) << " " << format_double(b.band_k) << " " << format_double(s.no_attack_latency_ms) << " "
       << format_double(b.report.mean_latency_ms) << " " << format_double(ratio) << " " << format_double(mean) << " "
       << format_double(mx) << " " << format_double(b.within_fraction) << " "
       << (b.verdict.detected ? "detected" : "stealthy") << "\n";
  }
  return os.str();
}

}  // namespace dqos
