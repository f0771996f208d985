#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <functional>
#include <istream>
#include <map>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dqos/common.hpp"
#include "dqos/simcore.hpp"
#include "dqos/topology.hpp"
#include "dqos/traffic.hpp"

namespace dqos {

inline constexpr std::size_t kCategories = 5;

// Feature names per category, in layout order: hosts, switches, switches,
// switch-switch links, switches (each ascending by id).
struct StateLayout {
  std::array<std::vector<std::string>, kCategories> names;

  static StateLayout of(const Topology& topo) {
    StateLayout l;
    for (auto h : topo.hosts()) l.names[0].push_back("gap:" + topo.node(h).name);
    for (auto s : topo.switches()) l.names[1].push_back("drop:" + topo.node(s).name);
    for (auto s : topo.switches()) l.names[2].push_back("table:" + topo.node(s).name);
    for (auto li : topo.switch_links()) {
      const auto& link = topo.links()[li];
      l.names[3].push_back("util:" + topo.node(link.a).name + "-" + topo.node(link.b).name);
    }
    for (auto s : topo.switches()) l.names[4].push_back("wait:" + topo.node(s).name);
    return l;
  }

  std::size_t size(std::size_t cat) const { return names.at(cat).size(); }
  std::size_t total() const {
    std::size_t n = 0;
    for (const auto& c : names) n += c.size();
    return n;
  }
  std::size_t offset(std::size_t cat) const {
    std::size_t n = 0;
    for (std::size_t c = 0; c < cat; ++c) n += names[c].size();
    return n;
  }
  std::vector<std::string> flat() const {
    std::vector<std::string> out;
    for (const auto& c : names) out.insert(out.end(), c.begin(), c.end());
    return out;
  }
  bool operator==(const StateLayout&) const = default;
};

struct StateVector {
  std::vector<double> cat1_frame_gaps;
  std::vector<double> cat2_drop_rates;
  std::vector<double> cat3_table_sizes;
  std::vector<double> cat4_link_util;
  std::vector<double> cat5_waiting_frames;

  const std::vector<double>& category(std::size_t c) const {
    switch (c) {
      case 0: return cat1_frame_gaps;
      case 1: return cat2_drop_rates;
      case 2: return cat3_table_sizes;
      case 3: return cat4_link_util;
      case 4: return cat5_waiting_frames;
    }
    throw Error("category out of range");
  }
  std::vector<double>& category(std::size_t c) { return const_cast<std::vector<double>&>(std::as_const(*this).category(c)); }

  std::vector<double> flatten() const {
    std::vector<double> out;
    for (std::size_t c = 0; c < kCategories; ++c) out.insert(out.end(), category(c).begin(), category(c).end());
    return out;
  }

  static StateVector unflatten(const StateLayout& layout, const std::vector<double>& flat) {
    if (flat.size() != layout.total()) throw LayoutMismatch("state vector length does not match layout");
    StateVector s;
    std::size_t at = 0;
    for (std::size_t c = 0; c < kCategories; ++c) {
      s.category(c).assign(flat.begin() + static_cast<std::ptrdiff_t>(at),
                           flat.begin() + static_cast<std::ptrdiff_t>(at + layout.size(c)));
      at += layout.size(c);
    }
    return s;
  }

  bool operator==(const StateVector&) const = default;
};

// One 100 ms (by default) observation covering (at - granularity, at].
struct StateSample {
  SimTime at = 0;
  std::vector<double> gap_sum;    // per host, ms
  std::vector<double> gap_count;  // per host
  std::vector<double> drop_pct;   // per switch
  std::vector<double> table;      // per switch
  std::vector<double> util;       // per switch-switch link
  std::vector<double> waiting;    // per switch
};

// Averages samples into a state vector: frame gaps are count-weighted, other
// categories are plain means over the samples. Empty input yields zeros.
inline StateVector average_samples(const StateLayout& layout, const std::vector<const StateSample*>& samples) {
  StateVector s;
  s.cat1_frame_gaps.assign(layout.size(0), 0.0);
  s.cat2_drop_rates.assign(layout.size(1), 0.0);
  s.cat3_table_sizes.assign(layout.size(2), 0.0);
  s.cat4_link_util.assign(layout.size(3), 0.0);
  s.cat5_waiting_frames.assign(layout.size(4), 0.0);
  if (samples.empty()) return s;
  std::vector<double> gsum(layout.size(0), 0.0), gcnt(layout.size(0), 0.0);
  for (const auto* x : samples) {
    for (std::size_t i = 0; i < gsum.size(); ++i) {
      gsum[i] += x->gap_sum[i];
      gcnt[i] += x->gap_count[i];
    }
    for (std::size_t i = 0; i < s.cat2_drop_rates.size(); ++i) s.cat2_drop_rates[i] += x->drop_pct[i];
    for (std::size_t i = 0; i < s.cat3_table_sizes.size(); ++i) s.cat3_table_sizes[i] += x->table[i];
    for (std::size_t i = 0; i < s.cat4_link_util.size(); ++i) s.cat4_link_util[i] += x->util[i];
    for (std::size_t i = 0; i < s.cat5_waiting_frames.size(); ++i) s.cat5_waiting_frames[i] += x->waiting[i];
  }
  const double n = static_cast<double>(samples.size());
  for (std::size_t i = 0; i < gsum.size(); ++i) s.cat1_frame_gaps[i] = gcnt[i] > 0 ? gsum[i] / gcnt[i] : 0.0;
  for (auto* v : {&s.cat2_drop_rates, &s.cat3_table_sizes, &s.cat4_link_util, &s.cat5_waiting_frames})
    for (auto& x : *v) x /= n;
  return s;
}

// Samples engine state on a fixed grid and keeps a bounded history so windows
// can be averaged after the fact.
class Telemetry {
 public:
  // Frames created further apart than this belong to different sessions and
  // do not contribute a delivery gap.
  static constexpr SimTime kSessionBreak = kMicrosPerSecond;

  Telemetry(Engine& engine, SimTime granularity = from_ms(100), SimTime history = from_seconds(60))
      : engine_(engine), granularity_(granularity), history_(history), layout_(StateLayout::of(engine.topology())) {
    if (granularity_ <= 0) throw Error("granularity must be positive");
    const auto& topo = engine.topology();
    hosts_ = topo.hosts();
    switches_ = topo.switches();
    links_ = topo.switch_links();
    host_slot_.assign(topo.nodes().size(), -1);
    for (std::size_t i = 0; i < hosts_.size(); ++i) host_slot_[hosts_[i].value] = static_cast<int>(i);
    last_delivery_.assign(hosts_.size(), -1);
    last_created_.assign(hosts_.size(), 0);
    pending_sum_.assign(hosts_.size(), 0.0);
    pending_count_.assign(hosts_.size(), 0.0);
    for (auto li : links_) {
      const auto& l = topo.links()[li];
      last_tx_.push_back({port_bytes(l.a, l.b), port_bytes(l.b, l.a)});
    }
    engine_.add_delivery_observer([this](const Packet& p, SimTime now) { on_delivery(p, now); });
    owner_ = engine_.add_timer_owner([this](Engine&, SimTime now, std::uint64_t) { on_sample(now); });
  }

  Telemetry(const Telemetry&) = delete;
  Telemetry& operator=(const Telemetry&) = delete;

  // Begins sampling on the grid aligned to multiples of the granularity.
  void start() {
    const SimTime now = engine_.now();
    SimTime first = (now / granularity_ + 1) * granularity_;
    engine_.schedule_timer(owner_, first);
  }

  const StateLayout& layout() const { return layout_; }
  SimTime granularity() const { return granularity_; }
  const std::deque<StateSample>& samples() const { return samples_; }

  std::vector<const StateSample*> window(SimTime from, SimTime to) const {
    std::vector<const StateSample*> out;
    for (const auto& s : samples_)
      if (s.at > from && s.at <= to) out.push_back(&s);
    return out;
  }

  // Averages the samples covering (from, to].
  StateVector sample_state(SimTime from, SimTime to) const {
    if (to <= from) throw Error("empty telemetry window");
    if ((to - from) % granularity_ != 0) throw Error("granularity must divide the window");
    return average_samples(layout_, window(from, to));
  }

 private:
  std::uint64_t port_bytes(NodeId from, NodeId to) const {
    for (const auto& p : engine_.ports(from))
      if (p.peer == to) return p.tx_bytes;
    return 0;
  }

  void on_delivery(const Packet& p, SimTime now) {
    if (p.cls != PacketClass::Video) return;
    int slot = host_slot_[p.src.value];
    if (slot < 0) return;
    auto i = static_cast<std::size_t>(slot);
    if (last_delivery_[i] >= 0 && p.created_at - last_created_[i] <= kSessionBreak) {
      pending_sum_[i] += to_ms(now - last_delivery_[i]);
      pending_count_[i] += 1;
    }
    last_delivery_[i] = now;
    last_created_[i] = p.created_at;
  }

  void on_sample(SimTime now) {
    StateSample s;
    s.at = now;
    s.gap_sum = pending_sum_;
    s.gap_count = pending_count_;
    std::fill(pending_sum_.begin(), pending_sum_.end(), 0.0);
    std::fill(pending_count_.begin(), pending_count_.end(), 0.0);
    for (auto sw : switches_) {
      s.drop_pct.push_back(engine_.drop_rate(sw, granularity_, now));
      auto& st = engine_.state(sw);
      st.table.evict_expired(now);
      s.table.push_back(static_cast<double>(st.table.size()));
      s.waiting.push_back(static_cast<double>(engine_.waiting_packets(sw)));
    }
    const auto& topo = engine_.topology();
    const double secs = to_seconds(granularity_);
    for (std::size_t j = 0; j < links_.size(); ++j) {
      const auto& l = topo.links()[links_[j]];
      auto ab = port_bytes(l.a, l.b), ba = port_bytes(l.b, l.a);
      double bytes = static_cast<double>(std::max(ab - last_tx_[j].first, ba - last_tx_[j].second));
      last_tx_[j] = {ab, ba};
      s.util.push_back(std::min(1.0, bytes * 8.0 / (l.bandwidth_bps * secs)));
    }
    samples_.push_back(std::move(s));
    while (!samples_.empty() && samples_.front().at < now - history_) samples_.pop_front();
    engine_.schedule_timer(owner_, now + granularity_);
  }

  Engine& engine_;
  SimTime granularity_;
  SimTime history_;
  StateLayout layout_;
  std::size_t owner_ = 0;
  std::vector<NodeId> hosts_;
  std::vector<NodeId> switches_;
  std::vector<std::size_t> links_;
  std::vector<int> host_slot_;
  std::vector<SimTime> last_delivery_;
  std::vector<SimTime> last_created_;
  std::vector<double> pending_sum_;
  std::vector<double> pending_count_;
  std::vector<std::pair<std::uint64_t, std::uint64_t>> last_tx_;
  std::deque<StateSample> samples_;
};

struct Snapshot {
  SimTime t = 0;
  StateVector current_state;
  std::vector<double> attack_vector;
  StateVector changed_state;
  SimTime changed_from = 0;  // earliest changed-state sample covers (changed_from, ...]
};

struct Normalization {
  std::vector<double> mean;
  std::vector<double> stdev;

  // Per-column z-score statistics of `rows`; a zero spread maps to 1.
  static Normalization fit(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) throw EmptyDataset("cannot fit normalization on an empty split");
    const std::size_t d = rows.front().size();
    Normalization n;
    n.mean.assign(d, 0.0);
    n.stdev.assign(d, 0.0);
    for (const auto& r : rows) {
      if (r.size() != d) throw DimensionMismatch("ragged rows");
      for (std::size_t j = 0; j < d; ++j) n.mean[j] += r[j];
    }
    for (auto& m : n.mean) m /= static_cast<double>(rows.size());
    for (const auto& r : rows)
      for (std::size_t j = 0; j < d; ++j) n.stdev[j] += (r[j] - n.mean[j]) * (r[j] - n.mean[j]);
    for (auto& s : n.stdev) {
      s = std::sqrt(s / static_cast<double>(rows.size()));
      if (!(s > 1e-12)) s = 1.0;
    }
    return n;
  }

  std::vector<double> apply(const std::vector<double>& x) const {
    if (x.size() != mean.size()) throw DimensionMismatch("normalization width differs from input");
    std::vector<double> out(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) out[j] = (x[j] - mean[j]) / stdev[j];
    return out;
  }

  std::vector<double> invert(const std::vector<double>& z) const {
    if (z.size() != mean.size()) throw DimensionMismatch("normalization width differs from input");
    std::vector<double> out(z.size());
    for (std::size_t j = 0; j < z.size(); ++j) out[j] = z[j] * stdev[j] + mean[j];
    return out;
  }

  bool operator==(const Normalization&) const = default;
};

// Category sets of the ten model variants; 6-10 repeat 1-5 with noisy state.
inline const std::vector<std::size_t>& model_categories(int model_id) {
  static const std::array<std::vector<std::size_t>, 5> sets = {
      std::vector<std::size_t>{0, 1, 2, 3, 4}, std::vector<std::size_t>{0, 2, 3, 4}, std::vector<std::size_t>{0, 2},
      std::vector<std::size_t>{0, 3}, std::vector<std::size_t>{0, 4}};
  if (model_id < 1 || model_id > 10) throw InvalidModelId("model id must be in 1..10, got " + std::to_string(model_id));
  return sets[static_cast<std::size_t>((model_id - 1) % 5)];
}

inline bool model_is_noisy(int model_id) {
  model_categories(model_id);
  return model_id > 5;
}

// Column indices into [attack_vector, current_state.flatten()] used by a model.
inline std::vector<std::size_t> input_columns(int model_id, const StateLayout& layout, std::size_t k) {
  std::vector<std::size_t> cols;
  for (std::size_t i = 0; i < k; ++i) cols.push_back(i);
  for (auto c : model_categories(model_id))
    for (std::size_t j = 0; j < layout.size(c); ++j) cols.push_back(k + layout.offset(c) + j);
  return cols;
}

inline std::vector<double> full_features(const std::vector<double>& attack, const StateVector& state) {
  std::vector<double> x = attack;
  auto flat = state.flatten();
  x.insert(x.end(), flat.begin(), flat.end());
  return x;
}

// Raw (unnormalized) model input and target for one snapshot.
inline std::pair<std::vector<double>, std::vector<double>> select_inputs(const Snapshot& s, int model_id,
                                                                         const StateLayout& layout) {
  const auto cols = input_columns(model_id, layout, s.attack_vector.size());
  const auto full = full_features(s.attack_vector, s.current_state);
  if (full.size() != s.attack_vector.size() + layout.total()) throw LayoutMismatch("snapshot does not match layout");
  std::vector<double> x;
  x.reserve(cols.size());
  for (auto c : cols) x.push_back(full[c]);
  return {x, s.changed_state.cat2_drop_rates};
}

// Adds N(0, sigma^2) to every state coordinate of a normalized input; the
// first k (attack) coordinates are untouched.
template <class Rng>
void add_state_noise(std::vector<double>& normalized, std::size_t k, double sigma, Rng& rng) {
  std::normal_distribution<double> n(0.0, sigma);
  for (std::size_t i = k; i < normalized.size(); ++i) normalized[i] += n(rng);
}

struct DatasetHeader {
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  std::uint64_t topology_fingerprint = 0;
  SimTime epoch = from_seconds(10);
  double dummy_rate = 0;
};

struct Dataset {
  DatasetHeader header;
  StateLayout layout;
  std::size_t k = 0;
  std::vector<Snapshot> snapshots;

  // Chronological split point for a train fraction.
  std::size_t split_index(double train_fraction) const {
    return static_cast<std::size_t>(std::floor(static_cast<double>(snapshots.size()) * train_fraction + 1e-9));
  }

  std::vector<std::string> columns() const {
    std::vector<std::string> c{"t_ms"};
    for (std::size_t i = 0; i < k; ++i) c.push_back("alpha" + std::to_string(i + 1));
    for (const auto& n : layout.flat()) c.push_back("cur." + n);
    for (const auto& n : layout.flat()) c.push_back("chg." + n);
    return c;
  }

  void write(std::ostream& os) const {
    os << "# dqos dataset v1\n";
    os << "# config_hash=" << std::hex << header.config_hash << std::dec << "\n";
    os << "# seed=" << header.seed << "\n";
    os << "# topology=" << std::hex << header.topology_fingerprint << std::dec << "\n";
    os << "# epoch_ms=" << to_ms(header.epoch) << "\n";
    os << "# dummy_rate=" << format_double(header.dummy_rate) << "\n";
    os << "# k=" << k << "\n";
    for (std::size_t c = 0; c < kCategories; ++c) os << "# cat" << c + 1 << "=" << layout.size(c) << "\n";
    os << "# snapshots=" << snapshots.size() << "\n";
    os << "# columns:";
    for (const auto& c : columns()) os << " " << c;
    os << "\n";
    for (const auto& s : snapshots) {
      os << s.t / kMicrosPerMilli;
      for (double a : s.attack_vector) os << " " << format_double(a);
      for (double v : s.current_state.flatten()) os << " " << format_double(v);
      for (double v : s.changed_state.flatten()) os << " " << format_double(v);
      os << "\n";
    }
  }

  static Dataset read(std::istream& is) {
    Dataset d;
    std::map<std::string, std::string> meta;
    std::vector<std::string> cols;
    std::string line;
    int line_no = 0;
    bool magic = false;
    while (std::getline(is, line)) {
      ++line_no;
      if (line.empty()) continue;
      if (line[0] == '#') {
        std::string_view body = trim(std::string_view(line).substr(1));
        if (body == "dqos dataset v1") {
          magic = true;
        } else if (body.rfind("columns:", 0) == 0) {
          for (auto c : split_ws(body.substr(8))) cols.emplace_back(c);
          d = from_meta(meta, cols, line_no);
        } else if (auto eq = body.find('='); eq != std::string_view::npos) {
          meta[std::string(body.substr(0, eq))] = std::string(body.substr(eq + 1));
        }
        continue;
      }
      if (!magic || cols.empty()) throw ConfigError("dataset header missing", line_no);
      auto fields = split_ws(line);
      if (fields.size() != cols.size()) throw LayoutMismatch("line " + std::to_string(line_no) + ": expected " +
                                                             std::to_string(cols.size()) + " columns");
      Snapshot s;
      s.t = static_cast<SimTime>(parse_double(fields[0])) * kMicrosPerMilli;
      std::size_t at = 1;
      for (std::size_t i = 0; i < d.k; ++i) s.attack_vector.push_back(parse_double(fields[at++]));
      std::vector<double> cur, chg;
      for (std::size_t i = 0; i < d.layout.total(); ++i) cur.push_back(parse_double(fields[at++]));
      for (std::size_t i = 0; i < d.layout.total(); ++i) chg.push_back(parse_double(fields[at++]));
      s.current_state = StateVector::unflatten(d.layout, cur);
      s.changed_state = StateVector::unflatten(d.layout, chg);
      d.snapshots.push_back(std::move(s));
    }
    if (!magic) throw ConfigError("not a dqos dataset");
    return d;
  }

 private:
  static Dataset from_meta(const std::map<std::string, std::string>& meta, const std::vector<std::string>& cols,
                           int line_no) {
    auto get = [&](const std::string& key) -> const std::string& {
      auto it = meta.find(key);
      if (it == meta.end()) throw ConfigError("dataset header lacks '" + key + "'", line_no);
      return it->second;
    };
    Dataset d;
    d.header.config_hash = std::stoull(get("config_hash"), nullptr, 16);
    d.header.seed = std::stoull(get("seed"));
    d.header.topology_fingerprint = std::stoull(get("topology"), nullptr, 16);
    d.header.epoch = from_ms(parse_double(get("epoch_ms")));
    d.header.dummy_rate = parse_double(get("dummy_rate"));
    d.k = std::stoul(get("k"));
    // Feature names come from the column list itself: "cur.<name>".
    std::array<std::size_t, kCategories> sizes{};
    for (std::size_t c = 0; c < kCategories; ++c) sizes[c] = std::stoul(get("cat" + std::to_string(c + 1)));
    std::size_t at = 1 + d.k;
    for (std::size_t c = 0; c < kCategories; ++c)
      for (std::size_t j = 0; j < sizes[c]; ++j) {
        if (at >= cols.size() || cols[at].rfind("cur.", 0) != 0) throw LayoutMismatch("dataset column list malformed");
        d.layout.names[c].push_back(cols[at++].substr(4));
      }
    if (cols.size() != 1 + d.k + 2 * d.layout.total()) throw LayoutMismatch("dataset column count malformed");
    return d;
  }
};

// Runs the snapshot protocol: at each epoch boundary t an attack vector is
// drawn and applied; the snapshot pairs the state over (t - window, t] with
// the state over (t + delay, t + delay + window].
struct CollectParams {
  std::size_t snapshots = 0;
  SimTime epoch = from_seconds(10);
  SimTime delay = from_seconds(5);
  SimTime window = from_seconds(5);
};

template <class AlphaSampler>
std::vector<Snapshot> collect(Engine& engine, Workload& workload, const Telemetry& telemetry,
                              const CollectParams& params, AlphaSampler&& sampler) {
  if (params.delay + params.window > params.epoch) throw Error("changed-state window must end within the epoch");
  std::vector<Snapshot> out;
  out.reserve(params.snapshots);
  for (std::size_t j = 0; j < params.snapshots; ++j) {
    const SimTime t = engine.now();
    Snapshot s;
    s.t = t;
    s.current_state = telemetry.sample_state(t - params.window, t);
    s.attack_vector = sampler(j);
    workload.set_alphas(s.attack_vector);
    engine.advance(t + params.delay + params.window);
    s.changed_from = t + params.delay;
    s.changed_state = telemetry.sample_state(t + params.delay, t + params.delay + params.window);
    engine.advance(t + params.epoch);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace dqos
