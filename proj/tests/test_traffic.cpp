#include <gtest/gtest.h>

#include <set>

#include "dqos/traffic.hpp"

using namespace dqos;

namespace {

OnOffHost host_in(bool on) {
  OnOffHost h;
  h.state = on ? std::variant<OnOffHost::On, OnOffHost::Off>(OnOffHost::On{0})
               : std::variant<OnOffHost::On, OnOffHost::Off>(OnOffHost::Off{0});
  return h;
}

}  // namespace

TEST(NextTransition, OffToOnWithinTenToFifteenMinutes) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 1000; ++i) {
    auto [s, d] = next_transition(host_in(false), 0, rng);
    EXPECT_TRUE(std::holds_alternative<OnOffHost::On>(s));
    EXPECT_GE(d, from_ms(600000));
    EXPECT_LE(d, from_ms(900000));
  }
}

TEST(NextTransition, OnToOffWithinFiveMinutes) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 1000; ++i) {
    auto [s, d] = next_transition(host_in(true), 0, rng);
    EXPECT_TRUE(std::holds_alternative<OnOffHost::Off>(s));
    EXPECT_GE(d, 0);
    EXPECT_LE(d, from_ms(300000));
  }
}

TEST(NextTransition, SeededSequenceRepeats) {
  auto seq = [](std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    OnOffHost h = host_in(false);
    std::vector<SimTime> out;
    for (int i = 0; i < 50; ++i) {
      auto [s, d] = next_transition(h, 0, rng);
      h.state = s;
      out.push_back(d);
    }
    return out;
  };
  EXPECT_EQ(seq(9), seq(9));
  EXPECT_NE(seq(9), seq(10));
}

TEST(NextTransition, DutyCycleNearFiveSixths) {
  std::mt19937_64 rng(3);
  OnOffHost h = host_in(false);
  double on = 0, total = 0;
  for (int i = 0; i < 400; ++i) {
    auto [s, d] = next_transition(h, 0, rng);
    h.state = s;
    if (h.is_on()) on += static_cast<double>(d);
    total += static_cast<double>(d);
  }
  EXPECT_NEAR(on / total, 12.5 / 15.0, 0.05);
}

TEST(AssignServer, TieGoesToLowestId) {
  std::vector<std::pair<NodeId, int>> loads{{NodeId{1}, 0}, {NodeId{2}, 0}, {NodeId{3}, 0}, {NodeId{4}, 0}};
  EXPECT_EQ(assign_server(loads), NodeId{1});
}

TEST(AssignServer, UniqueMinimum) {
  std::vector<std::pair<NodeId, int>> loads{{NodeId{1}, 2}, {NodeId{2}, 1}, {NodeId{3}, 2}, {NodeId{4}, 3}};
  EXPECT_EQ(assign_server(loads), NodeId{2});
}

TEST(AssignServer, EightSessionsSpreadEvenly) {
  std::vector<std::pair<NodeId, int>> loads{{NodeId{1}, 0}, {NodeId{2}, 0}, {NodeId{3}, 0}, {NodeId{4}, 0}};
  for (int i = 0; i < 8; ++i) {
    auto s = assign_server(loads);
    for (auto& l : loads)
      if (l.first == s) ++l.second;
  }
  for (const auto& l : loads) EXPECT_EQ(l.second, 2);
}

TEST(AssignServer, FairAfterManyAssignments) {
  std::vector<std::pair<NodeId, int>> loads{{NodeId{5}, 0}, {NodeId{6}, 0}, {NodeId{7}, 0}};
  for (int n = 1; n <= 50; ++n) {
    auto s = assign_server(loads);
    for (auto& l : loads)
      if (l.first == s) ++l.second;
    int lo = 1 << 30, hi = 0;
    for (const auto& l : loads) {
      lo = std::min(lo, l.second);
      hi = std::max(hi, l.second);
    }
    EXPECT_LE(hi - lo, 1);
  }
}

TEST(ForgePackets, ZeroAlphaNoPackets) {
  KeyAllocator keys(1);
  EXPECT_TRUE(forge_packets(keys, 0.0, 100, from_seconds(10)).empty());
}

TEST(ForgePackets, FullRateThousandPackets) {
  KeyAllocator keys(1);
  EXPECT_EQ(forge_packets(keys, 1.0, 100, from_seconds(10)).size(), 1000u);
}

TEST(ForgePackets, FractionalAlphaDistinctKeysUniformSpacing) {
  KeyAllocator keys(1);
  auto pk = forge_packets(keys, 0.37, 100, from_seconds(10));
  ASSERT_EQ(pk.size(), 370u);
  std::set<FlowKey> distinct;
  for (const auto& p : pk) distinct.insert(p.key);
  EXPECT_EQ(distinct.size(), 370u);
  for (std::size_t i = 1; i < pk.size(); ++i) {
    const double gap = static_cast<double>(pk[i].offset - pk[i - 1].offset);
    EXPECT_NEAR(gap, from_seconds(10) / 370.0, 1.0);
  }
}

TEST(ForgePackets, KeysNeverRepeatAcrossEpochs) {
  KeyAllocator keys(1);
  std::set<FlowKey> seen;
  for (int e = 0; e < 20; ++e)
    for (const auto& p : forge_packets(keys, 0.9, 100, from_seconds(10))) EXPECT_TRUE(seen.insert(p.key).second);
}

TEST(ForgePackets, RejectsAlphaOutsideUnitInterval) {
  KeyAllocator keys(1);
  EXPECT_THROW(forge_packets(keys, 1.5, 100, from_seconds(10)), Error);
}

TEST(RegulateDummy, AboveBandDecreases) {
  DummyRegulator r;
  r.current_rate = 100;
  EXPECT_LT(regulate_dummy(r, 5.0), 100.0);
}

TEST(RegulateDummy, ZeroDropIncreases) {
  DummyRegulator r;
  r.current_rate = 100;
  EXPECT_GT(regulate_dummy(r, 0.0), 100.0);
}

TEST(RegulateDummy, InsideBandUnchanged) {
  DummyRegulator r;
  r.current_rate = 100;
  EXPECT_EQ(regulate_dummy(r, 2.0), 100.0);
}

TEST(RegulateDummy, NeverNegative) {
  DummyRegulator r;
  r.current_rate = 10;
  regulate_dummy(r, 100.0);
  EXPECT_GE(r.current_rate, 0.0);
}

TEST(Workload, ForgedPacketsMissAtEverySwitch) {
  EngineConfig ec;
  Engine e(default_topology(), ec);
  Workload w(e, TrafficConfig{}, 1);
  std::size_t forged = 0, wrong = 0;
  e.add_delivery_observer([&](const Packet& p, SimTime) {
    if (p.cls != PacketClass::Attack) return;
    ++forged;
    if (p.miss_count != p.route->size()) ++wrong;
  });
  w.start(false, false);
  w.set_alphas({0.3, 0.3, 0.3});
  e.advance(from_seconds(10));
  // 3 attackers * 0.3 * 100 pps * 10 s.
  EXPECT_EQ(w.forged_issued(), 900u);
  EXPECT_GT(forged, 800u);
  EXPECT_EQ(wrong, 0u);
}

TEST(Workload, FramesOnlyWhileOn) {
  EngineConfig ec;
  TrafficConfig tc;
  tc.ranges.on_min = tc.ranges.on_max = from_seconds(2);
  tc.ranges.off_min = tc.ranges.off_max = from_seconds(3);
  Engine e(default_topology(), ec);
  Workload w(e, tc, 4);
  std::size_t off_frames = 0, frames = 0;
  e.add_delivery_observer([&](const Packet& p, SimTime) {
    if (p.cls != PacketClass::Video) return;
    ++frames;
    const SimTime phase = p.created_at % from_seconds(5);
    if (phase >= from_seconds(2)) ++off_frames;
  });
  w.start(true, false);
  e.advance(from_seconds(20));
  EXPECT_GT(frames, 0u);
  EXPECT_EQ(off_frames, 0u);
}
