#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "dqos/common.hpp"
#include "dqos/predictor.hpp"
#include "dqos/simcore.hpp"
#include "dqos/telemetry.hpp"
#include "dqos/traffic.hpp"

namespace dqos {

// Drop rates compared against band edges within this slack count as inside.
inline constexpr double kBandEpsilon = 1e-9;

struct StealthTarget {
  NodeId target_switch;
  double mean_pct = 0;  // m
  double band_pct = 3;  // k

  double upper() const { return mean_pct + band_pct; }
  void validate() const {
    if (!(band_pct > 0)) throw ConfigError("band k must be positive");
    if (!(mean_pct >= 0)) throw ConfigError("mean m must be non-negative");
  }
};

struct StepSizes {
  double increment_p = 0.05;
  double decrement_q = 0.01;
  std::size_t max_iterations = 0;  // 0: 10 * K / q

  std::size_t limit(std::size_t k) const {
    if (max_iterations > 0) return max_iterations;
    return static_cast<std::size_t>(std::ceil(10.0 * static_cast<double>(k) / decrement_q - 1e-9));
  }
  void validate() const {
    if (!(decrement_q > 0 && decrement_q <= increment_p && increment_p <= 1))
      throw ConfigError("step sizes must satisfy 0 < q <= p <= 1");
  }
};

enum class AdjustStatus { InBand, IterationLimit, NoFeasibleRate };

inline std::string_view to_string(AdjustStatus s) {
  switch (s) {
    case AdjustStatus::InBand: return "in_band";
    case AdjustStatus::IterationLimit: return "iteration_limit";
    case AdjustStatus::NoFeasibleRate: return "no_feasible_rate";
  }
  return "?";
}

struct AdjustResult {
  std::vector<double> alphas;
  double predicted = 0;
  std::size_t predictor_calls = 0;
  AdjustStatus status = AdjustStatus::InBand;
};

using DropPredictor = std::function<double(const std::vector<double>&)>;

// Greedy rate adjustment. Raise every rate by p while the predicted drop rate
// is below m; lower every rate by q while it is above m + k. Rates are clamped
// to [0, 1]. If the predictor budget runs out, the best-so-far rates (highest
// prediction not above m + k) are returned. NoFeasibleRate means all rates
// sit at 1 below the band, or at 0 above it.
inline AdjustResult adjust_rates(std::vector<double> alphas, const DropPredictor& predict,
                                 const StealthTarget& target, const StepSizes& steps) {
  target.validate();
  steps.validate();
  if (alphas.empty()) throw Error("need at least one attacker");
  const std::size_t limit = steps.limit(alphas.size());
  const double lo = target.mean_pct - kBandEpsilon;
  const double hi = target.upper() + kBandEpsilon;
  auto clamp_all = [](std::vector<double>& a) {
    for (auto& x : a) x = std::clamp(x, 0.0, 1.0);
  };
  clamp_all(alphas);

  AdjustResult r;
  std::vector<double> best;
  double best_dr = 0;
  std::vector<double> lowest;
  double lowest_dr = 0;
  auto eval = [&](const std::vector<double>& a) {
    const double dr = predict(a);
    ++r.predictor_calls;
    if (dr <= hi && (best.empty() || dr > best_dr)) {
      best = a;
      best_dr = dr;
    }
    if (lowest.empty() || dr < lowest_dr) {
      lowest = a;
      lowest_dr = dr;
    }
    return dr;
  };
  auto give_up = [&]() {
    r.status = AdjustStatus::IterationLimit;
    if (!best.empty()) {
      r.alphas = best;
      r.predicted = best_dr;
    } else {
      r.alphas = lowest;
      r.predicted = lowest_dr;
    }
    return r;
  };

  auto all_at = [&alphas](double v) {
    return std::all_of(alphas.begin(), alphas.end(), [v](double a) { return a == v; });
  };
  auto infeasible = [&](double dr) {
    r.alphas = alphas;
    r.predicted = dr;
    r.status = AdjustStatus::NoFeasibleRate;
    return r;
  };

  double dr = eval(alphas);
  // The decrement loop also runs before the first raise so that rates which
  // start above the band are walked back down.
  for (;;) {
    while (dr > hi) {
      if (all_at(0.0)) return infeasible(dr);
      if (r.predictor_calls >= limit) return give_up();
      for (auto& a : alphas) a -= steps.decrement_q;
      clamp_all(alphas);
      dr = eval(alphas);
    }
    if (dr >= lo) break;
    if (all_at(1.0)) return infeasible(dr);
    if (r.predictor_calls >= limit) return give_up();
    for (auto& a : alphas) a += steps.increment_p;
    clamp_all(alphas);
    dr = eval(alphas);
  }
  r.alphas = alphas;
  r.predicted = dr;
  r.status = AdjustStatus::InBand;
  return r;
}

struct StealthVerdict {
  bool detected = false;
  std::vector<std::size_t> windows;  // indices of windows in offending runs
};

// Detected iff more than `persistence` consecutive windows exceed m + k.
inline StealthVerdict stealth_audit(const std::vector<double>& window_drop_pct, const StealthTarget& target,
                                    std::size_t persistence = 3) {
  StealthVerdict v;
  std::vector<std::size_t> run;
  auto flush = [&]() {
    if (run.size() > persistence) {
      v.detected = true;
      v.windows.insert(v.windows.end(), run.begin(), run.end());
    }
    run.clear();
  };
  for (std::size_t i = 0; i < window_drop_pct.size(); ++i) {
    if (window_drop_pct[i] > target.upper() + kBandEpsilon)
      run.push_back(i);
    else
      flush();
  }
  flush();
  return v;
}

struct AttackInterval {
  SimTime t = 0;
  std::vector<double> alphas;
  double predicted = 0;
  double actual = 0;
  AdjustStatus status = AdjustStatus::InBand;
};

struct AttackReport {
  std::vector<AttackInterval> intervals;
  std::vector<LatencyRecord> latencies;
  double mean_latency_ms = 0;

  std::vector<double> actual_drops() const {
    std::vector<double> d;
    for (const auto& i : intervals) d.push_back(i.actual);
    return d;
  }

  double fraction_within(double upper) const {
    if (intervals.empty()) return 1.0;
    std::size_t ok = 0;
    for (const auto& i : intervals)
      if (i.actual <= upper + kBandEpsilon) ++ok;
    return static_cast<double>(ok) / static_cast<double>(intervals.size());
  }

  std::string to_text(std::size_t k) const {
    std::ostringstream os;
    os << "[intervals]\n# t_ms";
    for (std::size_t i = 0; i < k; ++i) os << " alpha" << i + 1;
    os << " predicted_pct actual_pct status\n";
    for (const auto& iv : intervals) {
      os << iv.t / kMicrosPerMilli;
      for (double a : iv.alphas) os << " " << format_double(a);
      os << " " << format_double(iv.predicted) << " " << format_double(iv.actual) << " " << to_string(iv.status)
         << "\n";
    }
    os << "[summary]\nmean_latency_ms " << format_double(mean_latency_ms) << "\nframes " << latencies.size() << "\n";
    return os.str();
  }
};

struct AttackPlan {
  StealthTarget target;
  StepSizes steps;
  // Algorithm 1 only climbs while the prediction is below m, so with m = 0 it
  // would never start. The controller therefore runs it against the inner band
  // [m + aim_fraction*k, m + ceiling_fraction*k]; the gap to m + k absorbs
  // prediction error.
  double aim_fraction = 0.25;
  double ceiling_fraction = 0.6;
  SimTime interval = from_seconds(10);
  SimTime window = from_seconds(5);  // current-state window fed to the model
  std::size_t intervals = 60;
  bool no_attack = false;
};

// Periodic attack controller: every interval, read the current state, pick
// rates with adjust_rates against the model's target-switch prediction, and
// apply them. The engine must already be running with telemetry attached.
inline AttackReport run_attack(Engine& engine, Workload& workload, const Telemetry& telemetry,
                               const PredictorModel& model, const AttackPlan& plan) {
  const auto& topo = engine.topology();
  const int target_index = topo.switch_index(plan.target.target_switch);
  if (target_index < 0) throw Error("attack target is not a switch");
  const std::size_t k = workload.attacker_count();
  StealthTarget inner = plan.target;
  inner.mean_pct = plan.target.mean_pct + plan.aim_fraction * plan.target.band_pct;
  inner.band_pct = (plan.ceiling_fraction - plan.aim_fraction) * plan.target.band_pct;

  AttackReport report;
  const std::size_t first_latency = engine.latencies().size();
  std::vector<double> alphas(k, 0.0);
  for (std::size_t n = 0; n < plan.intervals; ++n) {
    const SimTime t = engine.now();
    AttackInterval iv;
    iv.t = t;
    if (plan.no_attack) {
      alphas.assign(k, 0.0);
      iv.predicted = 0;
    } else {
      const StateVector state = telemetry.sample_state(t - plan.window, t);
      DropPredictor predict = [&](const std::vector<double>& a) {
        return model.predict_drop_rates(state, a)[static_cast<std::size_t>(target_index)];
      };
      if (predict(alphas) > inner.upper() + kBandEpsilon) alphas.assign(k, 0.0);
      auto res = adjust_rates(alphas, predict, inner, plan.steps);
      alphas = res.alphas;
      iv.predicted = res.predicted;
      iv.status = res.status;
    }
    iv.alphas = alphas;
    workload.set_alphas(alphas);
    engine.advance(t + plan.interval);
    iv.actual = engine.drop_rate(plan.target.target_switch, plan.interval, engine.now());
    report.intervals.push_back(std::move(iv));
  }
  report.latencies.assign(engine.latencies().begin() + static_cast<std::ptrdiff_t>(first_latency),
                          engine.latencies().end());
  double s = 0;
  for (const auto& r : report.latencies) s += r.latency_ms();
  report.mean_latency_ms = report.latencies.empty() ? 0.0 : s / static_cast<double>(report.latencies.size());
  return report;
}

}  // namespace dqos
