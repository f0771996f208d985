#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <limits>
#include <deque>
#include <functional>
#include <optional>
#include <queue>
#include <random>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "dqos/common.hpp"
#include "dqos/flowtable.hpp"
#include "dqos/topology.hpp"

namespace dqos {

enum class PacketClass : std::uint8_t { Video, Dummy, Attack };

inline constexpr std::size_t kPacketClasses = 3;

inline std::string_view to_string(PacketClass c) {
  switch (c) {
    case PacketClass::Video: return "video";
    case PacketClass::Dummy: return "dummy";
    case PacketClass::Attack: return "attack";
  }
  return "?";
}

struct Packet {
  FlowKey key;
  std::uint32_t size = 0;  // bytes
  SimTime created_at = 0;
  NodeId src;
  NodeId dst;
  std::optional<std::uint64_t> frame_id;
  PacketClass cls = PacketClass::Video;
  std::uint16_t miss_count = 0;
  std::uint16_t hop = 0;  // index into `route` of the next switch to visit
  const Route* route = nullptr;
};

struct LatencyRecord {
  std::uint64_t frame_id = 0;
  NodeId src;
  NodeId dst;
  SimTime created_at = 0;
  SimTime delivered_at = 0;
  std::uint16_t miss_count = 0;

  double latency_ms() const { return to_ms(delivered_at - created_at); }
};

enum class EventKind : std::uint8_t { Arrival, ControllerReply, TimerFire, TxDone };

struct Event {
  SimTime fire_at = 0;
  std::uint64_t seq = 0;
  EventKind kind = EventKind::Arrival;
  std::uint32_t a = 0;  // node (Arrival, TxDone), switch (ControllerReply), owner (TimerFire)
  std::uint64_t b = 0;  // packet slot, port index or timer tag
};

struct EventLater {
  bool operator()(const Event& x, const Event& y) const {
    return x.fire_at != y.fire_at ? x.fire_at > y.fire_at : x.seq > y.seq;
  }
};

struct EngineConfig {
  std::size_t table_capacity = 1000;
  SimTime idle_timeout = from_seconds(5);
  SimTime hard_timeout = kNever;
  std::size_t queue_capacity_bytes = 64 * 1024;
  double controller_rtt_ms = 0;  // <= 0: use the topology's value
  double rtt_jitter = 0;         // uniform +-fraction of the round trip
  // A flow whose install was refused for a full table keeps being served by
  // per-packet controller round trips until it has been idle for idle_timeout.
  // When true, every miss retries the install instead.
  bool retry_rejected_installs = false;
  SimTime stats_bucket = from_ms(100);
  SimTime report_window = from_seconds(10);
  bool record_latency = true;
  std::uint64_t seed = 1;
};

// Milliseconds to serialize `size_bytes` onto a link of `bandwidth_bps`.
inline double transmission_delay(std::uint32_t size_bytes, double bandwidth_bps) {
  if (!(bandwidth_bps > 0)) throw Error("bandwidth must be positive");
  return static_cast<double>(size_bytes) * 8.0 / bandwidth_bps * 1000.0;
}

struct SwitchReport {
  NodeId id;
  std::string name;
  std::uint64_t drops = 0;
  std::uint64_t forwards = 0;
  std::size_t table_size = 0;
  FlowTableStats table;
};

struct SwitchWindowStat {
  SimTime window_start = 0;
  NodeId id;
  std::uint64_t drops = 0;
  std::uint64_t forwards = 0;

  double drop_pct() const {
    auto total = drops + forwards;
    return total == 0 ? 0.0 : 100.0 * static_cast<double>(drops) / static_cast<double>(total);
  }
};

struct ClassCounts {
  std::uint64_t created = 0;
  std::uint64_t delivered = 0;
  std::uint64_t dropped = 0;
};

struct SimReport {
  SimTime clock = 0;
  std::vector<SwitchReport> switches;
  std::vector<SwitchWindowStat> windows;
  std::vector<LatencyRecord> latencies;  // sorted by (created_at, src, frame_id)
  std::array<ClassCounts, kPacketClasses> counts{};
  std::uint64_t in_flight = 0;

  double mean_latency_ms() const {
    if (latencies.empty()) return 0.0;
    double s = 0;
    for (const auto& r : latencies) s += r.latency_ms();
    return s / static_cast<double>(latencies.size());
  }

  // Columnar text: a `#` header, then one section per table.
  std::string to_text(const std::vector<std::string>& node_names) const {
    std::ostringstream os;
    os << "# dqos simreport v1\n# clock_ms=" << format_double(to_ms(clock)) << "\n";
    os << "[counts]\n# class created delivered dropped\n";
    for (std::size_t c = 0; c < kPacketClasses; ++c)
      os << to_string(static_cast<PacketClass>(c)) << " " << counts[c].created << " " << counts[c].delivered << " "
         << counts[c].dropped << "\n";
    os << "in_flight " << in_flight << "\n";
    os << "[switches]\n# switch drops forwards table_size hits misses installs refreshes evictions_idle "
          "evictions_hard rejects_full\n";
    for (const auto& s : switches)
      os << s.name << " " << s.drops << " " << s.forwards << " " << s.table_size << " " << s.table.hits << " "
         << s.table.misses << " " << s.table.installs << " " << s.table.refreshes << " " << s.table.evictions_idle
         << " " << s.table.evictions_hard << " " << s.table.rejects_full << "\n";
    os << "[switch_windows]\n# window_start_ms switch drops forwards drop_pct\n";
    for (const auto& w : windows)
      os << format_double(to_ms(w.window_start)) << " " << node_names.at(w.id.value) << " " << w.drops << " "
         << w.forwards << " " << format_double(w.drop_pct()) << "\n";
    os << "[latency]\n# frame_id src dst created_ms delivered_ms latency_ms misses\n";
    for (const auto& r : latencies)
      os << r.frame_id << " " << node_names.at(r.src.value) << " " << node_names.at(r.dst.value) << " "
         << format_double(to_ms(r.created_at)) << " " << format_double(to_ms(r.delivered_at)) << " "
         << format_double(r.latency_ms()) << " " << r.miss_count << "\n";
    return os.str();
  }
};

// Deterministic discrete-event engine. Owns all mutable network state; traffic
// sources, telemetry and controllers drive it through timers and observers.
class Engine {
 public:
  using TimerHandler = std::function<void(Engine&, SimTime now, std::uint64_t tag)>;
  using DeliveryObserver = std::function<void(const Packet&, SimTime now)>;

  struct Port {
    std::size_t link = 0;
    NodeId peer;
    double bandwidth_bps = 0;
    SimTime propagation = 0;
    std::size_t capacity_bytes = 0;
    std::deque<std::uint32_t> queue;
    std::size_t queued_bytes = 0;
    bool busy = false;
    std::uint64_t tx_bytes = 0;  // cumulative bytes put on the wire
  };

  struct SwitchState {
    NodeId id;
    FlowTable table;
    std::uint64_t drops = 0;
    std::uint64_t forwards = 0;
    std::uint64_t held = 0;  // packets waiting for a controller reply
    std::unordered_map<FlowKey, SimTime, FlowKeyHash> rejected;  // key -> last activity
    std::deque<std::pair<SimTime, FlowKey>> rejected_order;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> buckets;  // (drops, forwards) per stats bucket
  };

  Engine(Topology topology, EngineConfig config)
      : topo_(std::move(topology)), cfg_(config), rng_(mix_seed(config.seed, 0xE46)) {
    if (cfg_.controller_rtt_ms <= 0) cfg_.controller_rtt_ms = topo_.controller_rtt_ms();
    if (cfg_.stats_bucket <= 0) throw Error("stats bucket must be positive");
    const auto n = topo_.nodes().size();
    ports_.resize(n);
    port_to_.assign(n * n, -1);
    for (std::size_t li = 0; li < topo_.links().size(); ++li) {
      const auto& l = topo_.links()[li];
      for (int dir = 0; dir < 2; ++dir) {
        NodeId from = dir == 0 ? l.a : l.b;
        NodeId to = dir == 0 ? l.b : l.a;
        Port p;
        p.link = li;
        p.peer = to;
        p.bandwidth_bps = l.bandwidth_bps;
        p.propagation = from_ms(l.delay_ms);
        p.capacity_bytes = topo_.is_switch(from) ? cfg_.queue_capacity_bytes : std::numeric_limits<std::size_t>::max();
        port_to_[from.value * n + to.value] = static_cast<int>(ports_[from.value].size());
        ports_[from.value].push_back(std::move(p));
      }
    }
    switch_slot_.assign(n, -1);
    for (auto s : topo_.switches()) {
      switch_slot_[s.value] = static_cast<int>(switches_.size());
      switches_.push_back(
          SwitchState{s, FlowTable(cfg_.table_capacity, cfg_.idle_timeout, cfg_.hard_timeout), 0, 0, 0, {}, {}, {}});
    }
  }

  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  const Topology& topology() const { return topo_; }
  const EngineConfig& config() const { return cfg_; }
  SimTime now() const { return clock_; }

  std::size_t add_timer_owner(TimerHandler handler) {
    timer_owners_.push_back(std::move(handler));
    return timer_owners_.size() - 1;
  }

  void schedule_timer(std::size_t owner, SimTime at, std::uint64_t tag = 0) {
    if (at < clock_) throw InvariantViolation("timer scheduled in the past");
    push({at, 0, EventKind::TimerFire, static_cast<std::uint32_t>(owner), tag});
  }

  void add_delivery_observer(DeliveryObserver obs) { observers_.push_back(std::move(obs)); }

  // Creates a packet at its source now and hands it to the source's NIC.
  void inject(Packet p) {
    if (p.size == 0) throw Error("packet size must be positive");
    p.created_at = clock_;
    p.route = &topo_.route(p.src, p.dst);
    p.hop = 0;
    p.miss_count = 0;
    auto slot = alloc(p);
    ++counts_[static_cast<std::size_t>(p.cls)].created;
    enqueue(p.src, slot, p.route->front());
  }

  // Installs a rule directly (no controller round trip); used to stage
  // forced-hit scenarios.
  InstallResult preinstall(NodeId sw, const FlowKey& key, NodeId next_hop) {
    return state(sw).table.install(key, next_hop, clock_);
  }

  // Executes every event with fire_at <= until, then sets the clock to until.
  void advance(SimTime until) {
    if (until < clock_) throw Error("cannot run backwards");
    while (!events_.empty() && events_.top().fire_at <= until) {
      Event ev = events_.top();
      events_.pop();
      if (ev.fire_at < clock_) throw InvariantViolation("event precedes clock");
      clock_ = ev.fire_at;
      dispatch(ev);
    }
    clock_ = until;
  }

  SimReport run(SimTime until) {
    advance(until);
    return report();
  }

  SimReport report() const {
    SimReport r;
    r.clock = clock_;
    for (const auto& s : switches_)
      r.switches.push_back({s.id, topo_.node(s.id).name, s.drops, s.forwards, s.table.size(), s.table.stats()});
    const SimTime w = cfg_.report_window;
    for (SimTime start = 0; start + w <= clock_; start += w)
      for (const auto& s : switches_) {
        auto [d, f] = window_counts(s, start, start + w);
        r.windows.push_back({start, s.id, d, f});
      }
    r.latencies = latencies_;
    std::sort(r.latencies.begin(), r.latencies.end(), [](const LatencyRecord& a, const LatencyRecord& b) {
      return std::tie(a.created_at, a.src, a.frame_id) < std::tie(b.created_at, b.src, b.frame_id);
    });
    r.counts = counts_;
    r.in_flight = live_packets_;
    return r;
  }

  std::vector<std::string> node_names() const {
    std::vector<std::string> names;
    for (const auto& n : topo_.nodes()) names.push_back(n.name);
    return names;
  }

  // Percentage of packets dropped at `sw` among those dropped or forwarded in
  // [now - window, now). Windows are resolved at stats-bucket granularity.
  double drop_rate(NodeId sw, SimTime window, SimTime now) const {
    if (window <= 0) throw Error("window must be positive");
    auto [d, f] = window_counts(state(sw), now - window, now);
    return d + f == 0 ? 0.0 : 100.0 * static_cast<double>(d) / static_cast<double>(d + f);
  }

  const SwitchState& state(NodeId sw) const {
    int slot = switch_slot_.at(sw.value);
    if (slot < 0) throw Error(topo_.node(sw).name + " is not a switch");
    return switches_[static_cast<std::size_t>(slot)];
  }
  SwitchState& state(NodeId sw) { return const_cast<SwitchState&>(std::as_const(*this).state(sw)); }

  const std::vector<Port>& ports(NodeId node) const { return ports_.at(node.value); }

  // Held plus queued packets at a switch.
  std::uint64_t waiting_packets(NodeId sw) const {
    std::uint64_t q = state(sw).held;
    for (const auto& p : ports_[sw.value]) q += p.queue.size();
    return q;
  }

  const std::array<ClassCounts, kPacketClasses>& counts() const { return counts_; }
  std::uint64_t live_packets() const { return live_packets_; }
  const std::vector<LatencyRecord>& latencies() const { return latencies_; }
  void clear_latencies() { latencies_.clear(); }
  std::size_t pending_events() const { return events_.size(); }
  std::uint64_t executed_events() const { return executed_; }

  double controller_rtt_ms() const { return cfg_.controller_rtt_ms; }

 private:
  void push(Event ev) {
    ev.seq = next_seq_++;
    events_.push(ev);
  }

  std::uint32_t alloc(const Packet& p) {
    ++live_packets_;
    if (!free_.empty()) {
      auto slot = free_.back();
      free_.pop_back();
      pool_[slot] = p;
      return slot;
    }
    pool_.push_back(p);
    return static_cast<std::uint32_t>(pool_.size() - 1);
  }

  void release(std::uint32_t slot) {
    --live_packets_;
    free_.push_back(slot);
  }

  Port& port_toward(NodeId from, NodeId to) {
    int idx = port_to_[from.value * topo_.nodes().size() + to.value];
    if (idx < 0) throw InvariantViolation("no link " + topo_.node(from).name + "->" + topo_.node(to).name);
    return ports_[from.value][static_cast<std::size_t>(idx)];
  }

  std::pair<std::uint32_t, std::uint32_t>& bucket(SwitchState& s) {
    auto idx = static_cast<std::size_t>(clock_ / cfg_.stats_bucket);
    if (s.buckets.size() <= idx) s.buckets.resize(idx + 1, {0, 0});
    return s.buckets[idx];
  }

  std::pair<std::uint64_t, std::uint64_t> window_counts(const SwitchState& s, SimTime from, SimTime to) const {
    if (from < 0) from = 0;
    auto first = static_cast<std::size_t>(from / cfg_.stats_bucket);
    auto last = static_cast<std::size_t>((to + cfg_.stats_bucket - 1) / cfg_.stats_bucket);
    std::uint64_t d = 0, f = 0;
    for (auto i = first; i < last && i < s.buckets.size(); ++i) {
      d += s.buckets[i].first;
      f += s.buckets[i].second;
    }
    return {d, f};
  }

  void enqueue(NodeId node, std::uint32_t slot, NodeId next) {
    auto& port = port_toward(node, next);
    const auto size = pool_[slot].size;
    if (port.queued_bytes + size > port.capacity_bytes) {
      auto& s = state(node);
      ++s.drops;
      ++bucket(s).first;
      ++counts_[static_cast<std::size_t>(pool_[slot].cls)].dropped;
      release(slot);
      return;
    }
    port.queue.push_back(slot);
    port.queued_bytes += size;
    if (!port.busy) start_tx(node, port);
  }

  void start_tx(NodeId node, Port& port) {
    auto slot = port.queue.front();
    port.queue.pop_front();
    const auto size = pool_[slot].size;
    port.queued_bytes -= size;
    port.busy = true;
    port.tx_bytes += size;
    if (switch_slot_[node.value] >= 0) {
      auto& s = state(node);
      ++s.forwards;
      ++bucket(s).second;
    }
    const SimTime tx = std::max<SimTime>(1, from_ms(transmission_delay(size, port.bandwidth_bps)));
    auto port_index = static_cast<std::uint64_t>(&port - ports_[node.value].data());
    push({clock_ + tx, 0, EventKind::TxDone, node.value, port_index});
    push({clock_ + tx + port.propagation, 0, EventKind::Arrival, port.peer.value, slot});
  }

  void dispatch(const Event& ev) {
    ++executed_;
    switch (ev.kind) {
      case EventKind::Arrival: on_arrival(NodeId{static_cast<std::uint16_t>(ev.a)}, static_cast<std::uint32_t>(ev.b)); break;
      case EventKind::ControllerReply:
        on_controller_reply(NodeId{static_cast<std::uint16_t>(ev.a)}, static_cast<std::uint32_t>(ev.b));
        break;
      case EventKind::TimerFire: timer_owners_.at(ev.a)(*this, clock_, ev.b); break;
      case EventKind::TxDone: {
        auto& port = ports_[ev.a][ev.b];
        port.busy = false;
        if (!port.queue.empty()) start_tx(NodeId{static_cast<std::uint16_t>(ev.a)}, port);
        break;
      }
    }
  }

  NodeId next_hop(const Packet& p) const {
    return p.hop + 1u < p.route->size() ? (*p.route)[p.hop + 1u] : p.dst;
  }

  void on_arrival(NodeId node, std::uint32_t slot) {
    Packet& p = pool_[slot];
    if (node == p.dst) {
      deliver(slot);
      return;
    }
    auto& s = state(node);
    if (auto hop = s.table.lookup(p.key, clock_)) {
      advance_hop(p);
      enqueue(node, slot, *hop);
      return;
    }
    ++p.miss_count;
    ++s.held;
    SimTime rtt = from_ms(cfg_.controller_rtt_ms);
    if (cfg_.rtt_jitter > 0) {
      std::uniform_real_distribution<double> u(-cfg_.rtt_jitter, cfg_.rtt_jitter);
      rtt = from_ms(cfg_.controller_rtt_ms * (1.0 + u(rng_)));
    }
    push({clock_ + rtt, 0, EventKind::ControllerReply, node.value, slot});
  }

  void on_controller_reply(NodeId sw, std::uint32_t slot) {
    Packet& p = pool_[slot];
    auto& s = state(sw);
    --s.held;
    const NodeId next = next_hop(p);
    if (cfg_.retry_rejected_installs || !still_rejected(s, p.key)) {
      if (s.table.install(p.key, next, clock_) == InstallResult::RejectedFull) mark_rejected(s, p.key);
    } else {
      mark_rejected(s, p.key);
    }
    advance_hop(p);
    enqueue(sw, slot, next);
  }

  bool still_rejected(SwitchState& s, const FlowKey& key) {
    while (!s.rejected_order.empty() && clock_ - s.rejected_order.front().first >= cfg_.idle_timeout) {
      auto [t, k] = s.rejected_order.front();
      s.rejected_order.pop_front();
      auto it = s.rejected.find(k);
      if (it != s.rejected.end() && it->second == t) s.rejected.erase(it);
    }
    return s.rejected.count(key) != 0;
  }

  void mark_rejected(SwitchState& s, const FlowKey& key) {
    s.rejected[key] = clock_;
    s.rejected_order.emplace_back(clock_, key);
  }

  static void advance_hop(Packet& p) { ++p.hop; }

  void deliver(std::uint32_t slot) {
    const Packet& p = pool_[slot];
    ++counts_[static_cast<std::size_t>(p.cls)].delivered;
    if (p.cls == PacketClass::Video && cfg_.record_latency)
      latencies_.push_back({p.frame_id.value_or(0), p.src, p.dst, p.created_at, clock_, p.miss_count});
    for (auto& obs : observers_) obs(p, clock_);
    release(slot);
  }

  Topology topo_;
  EngineConfig cfg_;
  std::mt19937_64 rng_;
  SimTime clock_ = 0;
  std::uint64_t next_seq_ = 0;
  std::uint64_t executed_ = 0;
  std::priority_queue<Event, std::vector<Event>, EventLater> events_;
  std::vector<std::vector<Port>> ports_;
  std::vector<int> port_to_;
  std::vector<int> switch_slot_;
  std::vector<SwitchState> switches_;
  std::vector<Packet> pool_;
  std::vector<std::uint32_t> free_;
  std::uint64_t live_packets_ = 0;
  std::array<ClassCounts, kPacketClasses> counts_{};
  std::vector<LatencyRecord> latencies_;
  std::vector<TimerHandler> timer_owners_;
  std::vector<DeliveryObserver> observers_;
};

}  // namespace dqos
