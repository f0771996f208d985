#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <utility>
#include <variant>
#include <vector>

#include "dqos/common.hpp"
#include "dqos/flowtable.hpp"
#include "dqos/simcore.hpp"
#include "dqos/topology.hpp"

namespace dqos {

inline constexpr std::uint8_t kUdp = 17;

struct OnOffRanges {
  SimTime on_min = from_seconds(10 * 60);
  SimTime on_max = from_seconds(15 * 60);
  SimTime off_min = 0;
  SimTime off_max = from_seconds(5 * 60);
};

struct OnOffHost {
  struct On {
    SimTime until = 0;
  };
  struct Off {
    SimTime until = 0;
  };

  NodeId host;
  std::variant<On, Off> state = Off{0};
  OnOffRanges ranges;
  SimTime frame_interval = from_ms(33);
  NodeId current_server;

  bool is_on() const { return std::holds_alternative<On>(state); }
};

// Flips the host between On and Off; the new state lasts a duration drawn
// uniformly from its range. Returns the new state and that duration.
template <class Rng>
std::pair<std::variant<OnOffHost::On, OnOffHost::Off>, SimTime> next_transition(const OnOffHost& host, SimTime now,
                                                                               Rng& rng) {
  const auto& r = host.ranges;
  if (host.is_on()) {
    auto d = std::uniform_int_distribution<SimTime>(r.off_min, r.off_max)(rng);
    return {OnOffHost::Off{now + d}, d};
  }
  auto d = std::uniform_int_distribution<SimTime>(r.on_min, r.on_max)(rng);
  return {OnOffHost::On{now + d}, d};
}

// Least-loaded server; ties go to the lowest id.
inline NodeId assign_server(const std::vector<std::pair<NodeId, int>>& loads) {
  if (loads.empty()) throw Error("no servers to assign");
  auto best = loads.front();
  for (const auto& l : loads)
    if (l.second < best.second || (l.second == best.second && l.first < best.first)) best = l;
  return best.first;
}

// Hands out flow keys that are never repeated within a run for a given source
// address.
class KeyAllocator {
 public:
  explicit KeyAllocator(std::uint32_t src_addr) : src_addr_(src_addr) {}

  FlowKey next() {
    const std::uint64_t c = counter_++;
    return FlowKey{src_addr_, 0xC0000000u | static_cast<std::uint32_t>((c >> 32) & 0x3FFFFFFF),
                   static_cast<std::uint16_t>(c & 0xFFFF), static_cast<std::uint16_t>((c >> 16) & 0xFFFF), kUdp};
  }
  std::uint64_t issued() const { return counter_; }

 private:
  std::uint32_t src_addr_;
  std::uint64_t counter_ = 0;
};

struct ForgedPacket {
  SimTime offset = 0;  // from the start of the epoch
  FlowKey key;
};

inline std::size_t forged_count(double alpha, double rate_pps, SimTime epoch) {
  if (!(alpha >= 0 && alpha <= 1)) throw Error("alpha must lie in [0,1]");
  return static_cast<std::size_t>(std::floor(alpha * rate_pps * to_seconds(epoch) + 1e-9));
}

// floor(alpha * R * epoch) packets spaced evenly across the epoch, each with a
// fresh key so it misses at every switch.
inline std::vector<ForgedPacket> forge_packets(KeyAllocator& keys, double alpha, double rate_pps, SimTime epoch) {
  const auto n = forged_count(alpha, rate_pps, epoch);
  std::vector<ForgedPacket> out;
  out.reserve(n);
  for (std::size_t j = 0; j < n; ++j)
    out.push_back({static_cast<SimTime>(static_cast<double>(epoch) * static_cast<double>(j) / static_cast<double>(n)),
                   keys.next()});
  return out;
}

struct DummyRegulator {
  NodeId target_switch;
  double target_drop_pct = 0;
  double allowance_pct = 3;
  double current_rate = 0;  // packets/s
  SimTime adjust_interval = from_seconds(1);
  double gain = 0.1;      // fraction of the rate per percentage point of error
  double min_error = 1;   // smallest step below the target, in points
  double min_rate = 1;    // packets/s
};

// Proportional update: back off above target + allowance, push up at or below
// target, hold inside the band.
inline double regulate_dummy(DummyRegulator& reg, double observed_drop_pct) {
  const double upper = reg.target_drop_pct + reg.allowance_pct;
  if (observed_drop_pct > upper) {
    reg.current_rate -= reg.gain * reg.current_rate * (observed_drop_pct - upper);
  } else if (observed_drop_pct <= reg.target_drop_pct) {
    reg.current_rate += reg.gain * reg.current_rate * std::max(reg.min_error, reg.target_drop_pct - observed_drop_pct);
  }
  reg.current_rate = std::max(reg.current_rate, reg.min_rate);
  return reg.current_rate;
}

struct TrafficConfig {
  std::uint32_t frame_size = 1250;
  SimTime frame_interval = from_ms(33);
  OnOffRanges ranges;
  std::uint32_t frames_per_connection = 60;  // a new transport connection per segment
  std::uint16_t video_port = 5004;

  double attack_rate_pps = 100;  // R, per attacker
  std::uint32_t forged_size = 3000;
  SimTime epoch = from_seconds(10);

  std::uint32_t dummy_size = 1250;
  double dummy_initial_rate = 500;     // packets/s per dummy
  double dummy_flow_rate = 95;         // new flows/s per dummy
  double dummy_allowance_pct = 3;
  double dummy_target_pct = 0;
  SimTime dummy_adjust_interval = from_seconds(1);
  double dummy_gain = 0.1;
};

// All packet sources of a run, driven by engine timers.
class Workload {
 public:
  Workload(Engine& engine, TrafficConfig cfg, std::uint64_t seed) : engine_(engine), cfg_(cfg) {
    const auto& topo = engine.topology();
    for (auto s : topo.servers()) server_load_.push_back({s, 0});
    if (server_load_.empty()) throw Error("topology has no servers");
    for (auto h : topo.hosts()) {
      Video v;
      v.host.host = h;
      v.host.ranges = cfg_.ranges;
      v.host.frame_interval = cfg_.frame_interval;
      v.rng.seed(mix_seed(seed, 0x1000 + h.value));
      videos_.push_back(std::move(v));
    }
    for (auto a : topo.attackers())
      attackers_.push_back(Attacker{a, KeyAllocator(topo.node(a).address), 0.0, {}, 0, 0});
    for (auto d : topo.dummies()) {
      Dummy dm{d, KeyAllocator(topo.node(d).address), {}, 0, std::mt19937_64(mix_seed(seed, 0x3000 + d.value)), d};
      dummies_.push_back(std::move(dm));
    }
    regulator_.target_switch = topo.target_switch();
    regulator_.target_drop_pct = cfg_.dummy_target_pct;
    regulator_.allowance_pct = cfg_.dummy_allowance_pct;
    regulator_.current_rate = cfg_.dummy_initial_rate;
    regulator_.adjust_interval = cfg_.dummy_adjust_interval;
    regulator_.gain = cfg_.dummy_gain;
    owner_ = engine_.add_timer_owner([this](Engine&, SimTime now, std::uint64_t tag) { on_timer(now, tag); });
  }

  Workload(const Workload&) = delete;
  Workload& operator=(const Workload&) = delete;

  // Starts video hosts (all On, with a random frame phase) and dummies.
  void start(bool video = true, bool dummies = true) {
    const SimTime now = engine_.now();
    if (video)
      for (std::size_t i = 0; i < videos_.size(); ++i) {
        auto& v = videos_[i];
        v.host.state = OnOffHost::Off{now};
        begin_on(i, now, std::uniform_int_distribution<SimTime>(0, cfg_.frame_interval - 1)(v.rng));
      }
    if (dummies)
      for (std::size_t i = 0; i < dummies_.size(); ++i) {
        new_dummy_flow(i);
        schedule_dummy_packet(i, now);
        schedule_dummy_flow(i, now);
      }
  }

  // Runs the dummy regulator every adjust interval until `until`, then freezes
  // the rate at its average over the second half of that period.
  void regulate_until(SimTime until) {
    regulate_until_ = until;
    regulate_from_ = engine_.now() + (until - engine_.now()) / 2;
    rate_sum_ = 0;
    rate_samples_ = 0;
    engine_.schedule_timer(owner_, engine_.now() + regulator_.adjust_interval, tag(Kind::Regulate, 0, 0));
  }

  // Applies one attack vector for the epoch starting now.
  void set_alphas(const std::vector<double>& alphas) {
    if (alphas.size() != attackers_.size()) throw DimensionMismatch("attack vector length differs from K");
    const SimTime now = engine_.now();
    for (std::size_t i = 0; i < attackers_.size(); ++i) {
      auto& a = attackers_[i];
      a.alpha = alphas[i];
      a.schedule = forge_packets(a.keys, a.alpha, cfg_.attack_rate_pps, cfg_.epoch);
      a.next = 0;
      ++a.generation;
      a.epoch_start = now;
      if (!a.schedule.empty())
        engine_.schedule_timer(owner_, now + a.schedule[0].offset, tag(Kind::Forge, i, a.generation));
    }
  }

  std::vector<double> alphas() const {
    std::vector<double> out;
    for (const auto& a : attackers_) out.push_back(a.alpha);
    return out;
  }

  std::size_t attacker_count() const { return attackers_.size(); }
  const DummyRegulator& regulator() const { return regulator_; }
  void set_dummy_rate(double pps) { regulator_.current_rate = pps; }
  const std::vector<std::pair<NodeId, int>>& server_loads() const { return server_load_; }
  const OnOffHost& video_host(std::size_t i) const { return videos_.at(i).host; }
  std::uint64_t forged_issued() const {
    std::uint64_t n = 0;
    for (const auto& a : attackers_) n += a.keys.issued();
    return n;
  }

 private:
  enum class Kind : std::uint8_t { Frame, Transition, Forge, DummyPacket, DummyFlow, Regulate };

  struct Video {
    OnOffHost host;
    std::mt19937_64 rng;
    std::uint64_t session = 0;
    std::uint64_t frames = 0;  // frame ids, per host
    std::uint32_t frames_in_connection = 0;
    std::uint32_t connection = 0;
    FlowKey key;
  };

  struct Attacker {
    NodeId node;
    KeyAllocator keys;
    double alpha = 0;
    std::vector<ForgedPacket> schedule;
    std::size_t next = 0;
    std::uint64_t generation = 0;
    SimTime epoch_start = 0;
    std::size_t rr = 0;
  };

  struct Dummy {
    NodeId node;
    KeyAllocator keys;
    FlowKey key;
    std::size_t flow_server = 0;
    std::mt19937_64 rng;
    NodeId server;
  };

  static std::uint64_t tag(Kind k, std::size_t index, std::uint64_t gen) {
    return (static_cast<std::uint64_t>(k) << 56) | (static_cast<std::uint64_t>(index & 0xFFFF) << 40) |
           (gen & 0xFFFFFFFFFFull);
  }

  void on_timer(SimTime now, std::uint64_t t) {
    const auto kind = static_cast<Kind>(t >> 56);
    const auto index = static_cast<std::size_t>((t >> 40) & 0xFFFF);
    const auto gen = t & 0xFFFFFFFFFFull;
    switch (kind) {
      case Kind::Frame: on_frame(index, now, gen); break;
      case Kind::Transition: on_transition(index, now, gen); break;
      case Kind::Forge: on_forge(index, now, gen); break;
      case Kind::DummyPacket: {
        auto& d = dummies_[index];
        Packet p;
        p.key = d.key;
        p.size = cfg_.dummy_size;
        p.src = d.node;
        p.dst = d.server;
        p.cls = PacketClass::Dummy;
        engine_.inject(p);
        schedule_dummy_packet(index, now);
        break;
      }
      case Kind::DummyFlow:
        new_dummy_flow(index);
        schedule_dummy_flow(index, now);
        break;
      case Kind::Regulate:
        if (now >= regulate_until_) {
          if (rate_samples_ > 0) regulator_.current_rate = rate_sum_ / static_cast<double>(rate_samples_);
          break;
        }
        regulate_dummy(regulator_, engine_.drop_rate(regulator_.target_switch, regulator_.adjust_interval, now));
        if (now >= regulate_from_) {
          rate_sum_ += regulator_.current_rate;
          ++rate_samples_;
        }
        engine_.schedule_timer(owner_, now + regulator_.adjust_interval, tag(Kind::Regulate, 0, 0));
        break;
    }
  }

  void begin_on(std::size_t i, SimTime now, SimTime phase) {
    auto& v = videos_[i];
    auto [state, dur] = next_transition(v.host, now, v.rng);
    v.host.state = state;
    ++v.session;
    v.host.current_server = assign_server(server_load_);
    for (auto& l : server_load_)
      if (l.first == v.host.current_server) ++l.second;
    v.frames_in_connection = cfg_.frames_per_connection;  // forces a fresh connection
    engine_.schedule_timer(owner_, now + phase, tag(Kind::Frame, i, v.session));
    engine_.schedule_timer(owner_, now + dur, tag(Kind::Transition, i, v.session));
  }

  void on_transition(std::size_t i, SimTime now, std::uint64_t gen) {
    auto& v = videos_[i];
    if (gen != v.session) return;
    if (v.host.is_on()) {
      for (auto& l : server_load_)
        if (l.first == v.host.current_server) --l.second;
      auto [state, dur] = next_transition(v.host, now, v.rng);
      v.host.state = state;
      ++v.session;
      engine_.schedule_timer(owner_, now + dur, tag(Kind::Transition, i, v.session));
    } else {
      begin_on(i, now, 0);
    }
  }

  void on_frame(std::size_t i, SimTime now, std::uint64_t gen) {
    auto& v = videos_[i];
    if (gen != v.session || !v.host.is_on()) return;
    if (v.frames_in_connection >= cfg_.frames_per_connection) {
      v.frames_in_connection = 0;
      ++v.connection;
      const auto& topo = engine_.topology();
      v.key = FlowKey{topo.node(v.host.host).address, topo.node(v.host.current_server).address,
                      static_cast<std::uint16_t>(10000 + v.connection % 50000), cfg_.video_port, kUdp};
    }
    ++v.frames_in_connection;
    Packet p;
    p.key = v.key;
    p.size = cfg_.frame_size;
    p.src = v.host.host;
    p.dst = v.host.current_server;
    p.frame_id = v.frames++;
    p.cls = PacketClass::Video;
    engine_.inject(p);
    engine_.schedule_timer(owner_, now + cfg_.frame_interval, tag(Kind::Frame, i, v.session));
  }

  void on_forge(std::size_t i, SimTime now, std::uint64_t gen) {
    auto& a = attackers_[i];
    if (gen != (a.generation & 0xFFFFFFFFFFull) || a.next >= a.schedule.size()) return;
    Packet p;
    p.key = a.schedule[a.next].key;
    p.size = cfg_.forged_size;
    p.src = a.node;
    p.dst = server_load_[a.rr++ % server_load_.size()].first;
    p.cls = PacketClass::Attack;
    engine_.inject(p);
    ++a.next;
    if (a.next < a.schedule.size())
      engine_.schedule_timer(owner_, std::max(now, a.epoch_start + a.schedule[a.next].offset),
                             tag(Kind::Forge, i, a.generation));
  }

  void new_dummy_flow(std::size_t i) {
    auto& d = dummies_[i];
    d.key = d.keys.next();
    d.server = server_load_[d.flow_server++ % server_load_.size()].first;
  }

  void schedule_dummy_packet(std::size_t i, SimTime now) {
    auto& d = dummies_[i];
    if (regulator_.current_rate <= 0) return;
    const double gap = std::exponential_distribution<double>(regulator_.current_rate)(d.rng);
    engine_.schedule_timer(owner_, now + std::max<SimTime>(1, from_seconds(gap)), tag(Kind::DummyPacket, i, 0));
  }

  void schedule_dummy_flow(std::size_t i, SimTime now) {
    auto& d = dummies_[i];
    if (cfg_.dummy_flow_rate <= 0) return;
    const double gap = std::exponential_distribution<double>(cfg_.dummy_flow_rate)(d.rng);
    engine_.schedule_timer(owner_, now + std::max<SimTime>(1, from_seconds(gap)), tag(Kind::DummyFlow, i, 0));
  }

  Engine& engine_;
  TrafficConfig cfg_;
  std::size_t owner_ = 0;
  std::vector<Video> videos_;
  std::vector<Attacker> attackers_;
  std::vector<Dummy> dummies_;
  std::vector<std::pair<NodeId, int>> server_load_;
  DummyRegulator regulator_;
  SimTime regulate_until_ = 0;
  SimTime regulate_from_ = 0;
  double rate_sum_ = 0;
  std::uint64_t rate_samples_ = 0;
};

}  // namespace dqos
