#include <gtest/gtest.h>

#include "dqos/simcore.hpp"
#include "dqos/traffic.hpp"

using namespace dqos;

namespace {

EngineConfig quiet_config() {
  EngineConfig c;
  c.seed = 7;
  return c;
}

Packet video_packet(const Topology& t, std::uint32_t port, std::uint64_t frame = 0) {
  Packet p;
  p.src = t.hosts().front();
  p.dst = t.servers().front();
  p.key = FlowKey{t.node(p.src).address, t.node(p.dst).address, static_cast<std::uint16_t>(port), 5004, kUdp};
  p.size = 1250;
  p.frame_id = frame;
  return p;
}

// Rules for `p` on every switch of its route except the first `misses`.
void preinstall_after(Engine& e, const Packet& p, std::size_t misses) {
  const auto& r = e.topology().route(p.src, p.dst);
  for (std::size_t s = misses; s < r.size(); ++s) e.preinstall(r[s], p.key, s + 1 < r.size() ? r[s + 1] : p.dst);
}

// host -100Mbps- s1 -50Mbps- server: the s1 egress is the bottleneck.
Topology bottleneck_topology() {
  TopologyBuilder b;
  b.add_node("s1", NodeKind::Switch);
  b.add_node("h", NodeKind::Host);
  b.add_node("v", NodeKind::Server);
  b.add_node("c", NodeKind::Controller);
  b.add_link("h", "s1", 100, 0.1).add_link("s1", "v", 50, 0.1);
  b.target_switch("s1").compute_missing_routes();
  return b.build();
}

std::string run_workload_report(std::uint64_t seed, double seconds) {
  EngineConfig ec;
  ec.seed = seed;
  Engine e(default_topology(), ec);
  Workload w(e, TrafficConfig{}, seed);
  w.start();
  w.set_alphas({0.5, 0.2, 0.9});
  e.advance(from_seconds(seconds));
  return e.report().to_text(e.node_names());
}

}  // namespace

TEST(Run, NoEventsEmptyReport) {
  Engine e(same_site_topology(), quiet_config());
  auto r = e.run(from_ms(1000));
  EXPECT_EQ(r.clock, from_ms(1000));
  EXPECT_TRUE(r.latencies.empty());
  EXPECT_EQ(r.in_flight, 0u);
}

TEST(Run, SinglePacketNoMissTakesTenMs) {
  const auto t = same_site_topology();
  Engine e(t, quiet_config());
  auto p = video_packet(t, 1);
  preinstall_after(e, p, 0);
  e.inject(p);
  auto r = e.run(from_seconds(1));
  ASSERT_EQ(r.latencies.size(), 1u);
  EXPECT_EQ(r.latencies[0].delivered_at - r.latencies[0].created_at, from_ms(10));
  EXPECT_EQ(r.latencies[0].miss_count, 0);
}

TEST(Run, LatencyAdditivityPerMiss) {
  const auto t = same_site_topology();
  for (std::size_t m = 0; m <= 3; ++m) {
    Engine e(t, quiet_config());
    auto p = video_packet(t, 1);
    preinstall_after(e, p, m);
    e.inject(p);
    auto r = e.run(from_seconds(2));
    ASSERT_EQ(r.latencies.size(), 1u);
    EXPECT_EQ(r.latencies[0].delivered_at - r.latencies[0].created_at,
              from_ms(10) + static_cast<SimTime>(m) * from_ms(68))
        << m << " misses";
    EXPECT_EQ(r.latencies[0].miss_count, m);
  }
}

TEST(Run, MissAtEverySwitchCosts214Ms) {
  const auto t = same_site_topology();
  Engine e(t, quiet_config());
  e.inject(video_packet(t, 1));
  auto r = e.run(from_seconds(1));
  ASSERT_EQ(r.latencies.size(), 1u);
  EXPECT_DOUBLE_EQ(r.latencies[0].latency_ms(), 214.0);
}

TEST(Run, InsertionOrderOfSimultaneousEventsDoesNotMatter) {
  const auto t = default_topology();
  auto make = [&](bool swap) {
    Engine e(t, quiet_config());
    Packet a = video_packet(t, 1, 1);
    Packet b = video_packet(t, 2, 2);
    b.src = t.id("host4");
    b.key.src_addr = t.node(b.src).address;
    if (swap) std::swap(a, b);
    e.inject(a);
    e.inject(b);
    return e.run(from_seconds(1)).to_text(e.node_names());
  };
  EXPECT_EQ(make(false), make(true));
}

TEST(ControllerReply, InstalledRuleServesLaterPackets) {
  const auto t = same_site_topology();
  Engine e(t, quiet_config());
  e.inject(video_packet(t, 1, 0));
  e.advance(from_ms(500));
  e.inject(video_packet(t, 1, 1));
  auto r = e.run(from_seconds(1));
  ASSERT_EQ(r.latencies.size(), 2u);
  EXPECT_EQ(r.latencies[0].miss_count, 3);
  EXPECT_EQ(r.latencies[1].miss_count, 0);
  EXPECT_DOUBLE_EQ(r.latencies[1].latency_ms(), 10.0);
}

TEST(ControllerReply, FullTableChargesEveryPacket) {
  const auto t = same_site_topology();
  EngineConfig c = quiet_config();
  c.table_capacity = 1;
  c.idle_timeout = kNever;
  Engine e(t, c);
  const auto first = t.route(t.hosts().front(), t.servers().front()).front();
  e.preinstall(first, FlowKey{1, 2, 3, 4, 5}, t.id("switch2"));
  for (int i = 0; i < 5; ++i) {
    e.advance(from_ms(300 * i));
    e.inject(video_packet(t, 9, static_cast<std::uint64_t>(i)));
  }
  auto r = e.run(from_seconds(3));
  ASSERT_EQ(r.latencies.size(), 5u);
  EXPECT_DOUBLE_EQ(r.latencies[0].latency_ms(), 10.0 + 3 * 68.0);
  for (std::size_t i = 1; i < 5; ++i) {
    EXPECT_EQ(r.latencies[i].miss_count, 1) << i;
    EXPECT_DOUBLE_EQ(r.latencies[i].latency_ms(), 10.0 + 68.0) << i;
  }
  EXPECT_GE(r.switches[0].table.rejects_full, 1u);
}

TEST(ControllerReply, RuleEvictedBeforeReplyIsInstalledAgain) {
  const auto t = same_site_topology();
  EngineConfig c = quiet_config();
  c.idle_timeout = from_ms(1);
  Engine e(t, c);
  e.inject(video_packet(t, 1));
  auto r = e.run(from_seconds(1));
  ASSERT_EQ(r.latencies.size(), 1u);
  EXPECT_EQ(r.switches[0].table.installs, 1u);
}

TEST(TransmissionDelay, Examples) {
  EXPECT_DOUBLE_EQ(transmission_delay(1250, 100e6), 0.1);
  EXPECT_DOUBLE_EQ(transmission_delay(1250, 50e6), 0.2);
  EXPECT_THROW(transmission_delay(1250, 0), Error);
}

TEST(Packet, ZeroSizeRejected) {
  const auto t = same_site_topology();
  Engine e(t, quiet_config());
  auto p = video_packet(t, 1);
  p.size = 0;
  EXPECT_THROW(e.inject(p), Error);
}

TEST(DropRate, EmptyWindowIsZero) {
  const auto t = same_site_topology();
  Engine e(t, quiet_config());
  e.advance(from_seconds(5));
  EXPECT_EQ(e.drop_rate(t.id("switch1"), from_seconds(1), e.now()), 0.0);
}

TEST(DropRate, Arithmetic) {
  SwitchWindowStat s{0, NodeId{0}, 3, 97};
  EXPECT_DOUBLE_EQ(s.drop_pct(), 3.0);
}

TEST(DropRate, DoubleOfferedLoadDropsHalf) {
  const auto t = bottleneck_topology();
  Engine e(t, quiet_config());
  const auto h = t.id("h"), v = t.id("v"), s1 = t.id("s1");
  const FlowKey key{1, 2, 3, 4, kUdp};
  e.preinstall(s1, key, v);
  // 1250-byte packets every 100 us: 100 Mbps offered to a 50 Mbps egress.
  std::size_t owner = 0;
  owner = e.add_timer_owner([&](Engine& eng, SimTime now, std::uint64_t) {
    Packet p;
    p.key = key;
    p.size = 1250;
    p.src = h;
    p.dst = v;
    p.cls = PacketClass::Dummy;
    eng.inject(p);
    eng.schedule_timer(0, now + 100);
  });
  e.schedule_timer(owner, 0);
  e.advance(from_seconds(3));
  const double closed_form = 100.0 * (1.0 - 50.0 / 100.0);
  EXPECT_NEAR(e.drop_rate(s1, from_seconds(1), e.now()), closed_form, 2.0);
}

TEST(Invariants, ConservationQueueBoundAndClock) {
  EngineConfig ec;
  ec.seed = 3;
  Engine e(default_topology(), ec);
  Workload w(e, TrafficConfig{}, 3);
  w.start();
  w.set_alphas({1, 1, 1});
  SimTime last = 0;
  std::size_t over = 0, backwards = 0;
  std::size_t owner = 0;
  owner = e.add_timer_owner([&](Engine& eng, SimTime now, std::uint64_t) {
    if (now < last) ++backwards;
    last = now;
    for (auto sw : eng.topology().switches())
      for (const auto& p : eng.ports(sw))
        if (p.queued_bytes > p.capacity_bytes) ++over;
    eng.schedule_timer(owner, now + from_ms(7));
  });
  e.schedule_timer(owner, 0);
  e.advance(from_seconds(20));
  std::uint64_t created = 0, delivered = 0, dropped = 0;
  for (const auto& c : e.counts()) {
    created += c.created;
    delivered += c.delivered;
    dropped += c.dropped;
  }
  EXPECT_GT(created, 0u);
  EXPECT_EQ(created, delivered + dropped + e.live_packets());
  EXPECT_EQ(over, 0u);
  EXPECT_EQ(backwards, 0u);
  std::uint64_t switch_drops = 0;
  for (const auto& s : e.report().switches) switch_drops += s.drops;
  EXPECT_EQ(switch_drops, dropped);
}

TEST(Invariants, SameSeedSameReport) {
  EXPECT_EQ(run_workload_report(11, 15), run_workload_report(11, 15));
  EXPECT_NE(run_workload_report(11, 15), run_workload_report(12, 15));
}

TEST(Invariants, LatencyRecordsAreCausal) {
  EngineConfig ec;
  Engine e(default_topology(), ec);
  Workload w(e, TrafficConfig{}, 5);
  w.start();
  e.advance(from_seconds(10));
  ASSERT_FALSE(e.latencies().empty());
  for (const auto& r : e.latencies()) EXPECT_GE(r.delivered_at, r.created_at);
}
