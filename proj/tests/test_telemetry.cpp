#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "dqos/telemetry.hpp"

using namespace dqos;

namespace {

StateSample sample(const StateLayout& l, SimTime at, double drop, double gap_sum, double gap_count) {
  StateSample s;
  s.at = at;
  s.gap_sum.assign(l.size(0), gap_sum);
  s.gap_count.assign(l.size(0), gap_count);
  s.drop_pct.assign(l.size(1), drop);
  s.table.assign(l.size(2), 4.0);
  s.util.assign(l.size(3), 0.25);
  s.waiting.assign(l.size(4), 2.0);
  return s;
}

Snapshot snapshot_of(const StateLayout& l, SimTime t, double base) {
  Snapshot s;
  s.t = t;
  s.attack_vector = {0.1, 0.35, 1.0};
  std::vector<double> cur(l.total()), chg(l.total());
  for (std::size_t i = 0; i < l.total(); ++i) {
    cur[i] = base + 0.1 * static_cast<double>(i);
    chg[i] = base * 3.0 + 1.0 / (1.0 + static_cast<double>(i));
  }
  s.current_state = StateVector::unflatten(l, cur);
  s.changed_state = StateVector::unflatten(l, chg);
  return s;
}

}  // namespace

TEST(Normalization, ConstantColumnMapsToZero) {
  auto n = Normalization::fit({{5.0}, {5.0}, {5.0}});
  EXPECT_DOUBLE_EQ(n.stdev[0], 1.0);
  EXPECT_DOUBLE_EQ(n.apply({5.0})[0], 0.0);
}

TEST(Normalization, TwoPointColumnMapsToPlusMinusOne) {
  auto n = Normalization::fit({{0.0}, {10.0}});
  EXPECT_DOUBLE_EQ(n.mean[0], 5.0);
  EXPECT_DOUBLE_EQ(n.stdev[0], 5.0);
  EXPECT_DOUBLE_EQ(n.apply({0.0})[0], -1.0);
  EXPECT_DOUBLE_EQ(n.apply({10.0})[0], 1.0);
}

TEST(Normalization, InvertRoundTrips) {
  auto n = Normalization::fit({{1.0, -3.0}, {2.5, 7.0}, {4.0, 0.5}});
  std::vector<double> x{3.3, 2.2};
  auto back = n.invert(n.apply(x));
  EXPECT_NEAR(back[0], x[0], 1e-12);
  EXPECT_NEAR(back[1], x[1], 1e-12);
}

TEST(Normalization, RejectsEmptyAndRagged) {
  EXPECT_THROW(Normalization::fit({}), EmptyDataset);
  EXPECT_THROW(Normalization::fit({{1.0, 2.0}, {1.0}}), DimensionMismatch);
}

TEST(Layout, DefaultTopologySizesAndStability) {
  const auto t = default_topology();
  const auto a = StateLayout::of(t);
  const auto b = StateLayout::of(default_topology());
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.size(0), t.hosts().size());
  EXPECT_EQ(a.size(1), t.switches().size());
  EXPECT_EQ(a.size(2), t.switches().size());
  EXPECT_EQ(a.size(3), t.switch_links().size());
  EXPECT_EQ(a.size(4), t.switches().size());
  EXPECT_EQ(a.flat().size(), a.total());
  EXPECT_EQ(a.offset(2), a.size(0) + a.size(1));
}

TEST(SelectInputs, ModelWidthsFollowCategories) {
  const auto l = StateLayout::of(default_topology());
  const auto s = snapshot_of(l, 0, 1.0);
  auto [x1, y1] = select_inputs(s, 1, l);
  EXPECT_EQ(x1.size(), 3 + l.total());
  EXPECT_EQ(y1, s.changed_state.cat2_drop_rates);
  auto [x4, y4] = select_inputs(s, 4, l);
  EXPECT_EQ(x4.size(), 3 + l.size(0) + l.size(3));
  EXPECT_EQ(x4[0], 0.1);
  EXPECT_EQ(x4[3], s.current_state.cat1_frame_gaps[0]);
  EXPECT_EQ(x4[3 + l.size(0)], s.current_state.cat4_link_util[0]);
  auto [x9, y9] = select_inputs(s, 9, l);
  EXPECT_EQ(x9, x4);
}

TEST(SelectInputs, RejectsUnknownModel) {
  const auto l = StateLayout::of(default_topology());
  EXPECT_THROW(select_inputs(snapshot_of(l, 0, 1.0), 11, l), InvalidModelId);
  EXPECT_THROW(model_categories(0), InvalidModelId);
  EXPECT_FALSE(model_is_noisy(5));
  EXPECT_TRUE(model_is_noisy(6));
}

TEST(StateNoise, OnlyStateCoordinatesChange) {
  std::vector<double> x(20, 0.0);
  std::mt19937_64 rng(3);
  add_state_noise(x, 3, 0.3, rng);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(x[i], 0.0);
  int changed = 0;
  for (std::size_t i = 3; i < x.size(); ++i) changed += x[i] != 0.0;
  EXPECT_EQ(changed, 17);
}

TEST(AverageSamples, EmptyWindowIsZero) {
  const auto l = StateLayout::of(default_topology());
  auto s = average_samples(l, {});
  for (double v : s.flatten()) EXPECT_EQ(v, 0.0);
}

TEST(AverageSamples, ConstantAndAlternating) {
  const auto l = StateLayout::of(default_topology());
  std::vector<StateSample> xs;
  for (int i = 0; i < 10; ++i) xs.push_back(sample(l, from_ms(100 * (i + 1)), i % 2 ? 10.0 : 0.0, 0.0, 0.0));
  std::vector<const StateSample*> ptr;
  for (const auto& x : xs) ptr.push_back(&x);
  auto s = average_samples(l, ptr);
  EXPECT_DOUBLE_EQ(s.cat2_drop_rates[0], 5.0);
  EXPECT_DOUBLE_EQ(s.cat3_table_sizes[0], 4.0);
  EXPECT_DOUBLE_EQ(s.cat4_link_util[0], 0.25);
  EXPECT_DOUBLE_EQ(s.cat5_waiting_frames[0], 2.0);
  EXPECT_DOUBLE_EQ(s.cat1_frame_gaps[0], 0.0);
}

TEST(AverageSamples, FrameGapsAreCountWeighted) {
  const auto l = StateLayout::of(default_topology());
  auto a = sample(l, from_ms(100), 0, 30.0, 1.0);
  auto b = sample(l, from_ms(200), 0, 90.0, 3.0);
  auto s = average_samples(l, {&a, &b});
  EXPECT_DOUBLE_EQ(s.cat1_frame_gaps[0], 30.0);
}

TEST(Telemetry, IdleNetworkIsAllZero) {
  Engine e(default_topology(), EngineConfig{});
  Telemetry tel(e);
  tel.start();
  e.advance(from_seconds(2));
  EXPECT_EQ(tel.samples().size(), 20u);
  auto s = tel.sample_state(from_seconds(1), from_seconds(2));
  for (double v : s.flatten()) EXPECT_EQ(v, 0.0);
}

TEST(Telemetry, WindowMustBeMultipleOfGranularity) {
  Engine e(default_topology(), EngineConfig{});
  Telemetry tel(e);
  EXPECT_THROW(tel.sample_state(0, from_ms(150)), Error);
  EXPECT_THROW(tel.sample_state(from_ms(100), from_ms(100)), Error);
}

TEST(Telemetry, VideoTrafficProducesGapsNearFrameInterval) {
  Engine e(default_topology(), EngineConfig{});
  Workload w(e, TrafficConfig{}, 2);
  Telemetry tel(e);
  w.start(true, false);
  tel.start();
  e.advance(from_seconds(1));
  auto s = tel.sample_state(from_ms(500), from_seconds(1));
  // Every host is On at start; consecutive frames leave 33 ms apart.
  for (double g : s.cat1_frame_gaps) EXPECT_NEAR(g, to_ms(TrafficConfig{}.frame_interval), 5.0);
  for (double d : s.cat2_drop_rates) EXPECT_EQ(d, 0.0);
}

TEST(Collect, HundredSecondsGivesTenCausalSnapshots) {
  Engine e(default_topology(), EngineConfig{});
  Workload w(e, TrafficConfig{}, 5);
  Telemetry tel(e);
  w.start();
  tel.start();
  CollectParams p;
  p.snapshots = 10;
  std::vector<std::vector<double>> drawn;
  auto snaps = collect(e, w, tel, p, [&](std::size_t j) {
    std::vector<double> a{0.1 * static_cast<double>(j % 3), 0.0, 0.05 * static_cast<double>(j)};
    drawn.push_back(a);
    return a;
  });
  ASSERT_EQ(snaps.size(), 10u);
  EXPECT_EQ(e.now(), from_seconds(100));
  for (std::size_t j = 0; j < snaps.size(); ++j) {
    EXPECT_EQ(snaps[j].t, from_seconds(10) * static_cast<SimTime>(j));
    EXPECT_EQ(snaps[j].attack_vector, drawn[j]);
    EXPECT_GT(snaps[j].changed_from, snaps[j].t);
    EXPECT_EQ(snaps[j].changed_from, snaps[j].t + p.delay);
  }
}

TEST(Collect, RejectsWindowPastEpoch) {
  Engine e(default_topology(), EngineConfig{});
  Workload w(e, TrafficConfig{}, 5);
  Telemetry tel(e);
  CollectParams p;
  p.snapshots = 1;
  p.delay = from_seconds(6);
  EXPECT_THROW(collect(e, w, tel, p, [](std::size_t) { return std::vector<double>{0, 0, 0}; }), Error);
}

TEST(Dataset, WriteReadRoundTrip) {
  Dataset d;
  d.layout = StateLayout::of(default_topology());
  d.k = 3;
  d.header.config_hash = 0xabcdef12345ULL;
  d.header.seed = 42;
  d.header.topology_fingerprint = 0x1234ULL;
  d.header.dummy_rate = 2213.5;
  for (int i = 0; i < 5; ++i) d.snapshots.push_back(snapshot_of(d.layout, from_seconds(10) * i, 0.7 * i));
  std::stringstream ss;
  d.write(ss);
  const std::string first = ss.str();
  auto r = Dataset::read(ss);
  EXPECT_EQ(r.layout, d.layout);
  EXPECT_EQ(r.k, 3u);
  EXPECT_EQ(r.header.config_hash, d.header.config_hash);
  EXPECT_EQ(r.header.seed, 42u);
  EXPECT_EQ(r.header.dummy_rate, 2213.5);
  ASSERT_EQ(r.snapshots.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(r.snapshots[i].t, d.snapshots[i].t);
    EXPECT_EQ(r.snapshots[i].attack_vector, d.snapshots[i].attack_vector);
    EXPECT_EQ(r.snapshots[i].current_state, d.snapshots[i].current_state);
    EXPECT_EQ(r.snapshots[i].changed_state, d.snapshots[i].changed_state);
  }
  std::stringstream again;
  r.write(again);
  EXPECT_EQ(again.str(), first);
}

TEST(Dataset, SplitIsChronological) {
  Dataset d;
  d.layout = StateLayout::of(default_topology());
  d.snapshots.resize(1000);
  EXPECT_EQ(d.split_index(0.8), 800u);
  d.snapshots.resize(7);
  EXPECT_EQ(d.split_index(0.8), 5u);
}

TEST(Dataset, ShortRowIsRejected) {
  std::stringstream ss;
  Dataset d;
  d.layout = StateLayout::of(default_topology());
  d.k = 3;
  d.snapshots.push_back(snapshot_of(d.layout, 0, 1.0));
  d.write(ss);
  std::string text = ss.str();
  text = text.substr(0, text.rfind(' ')) + "\n";
  std::stringstream bad(text);
  EXPECT_THROW(Dataset::read(bad), LayoutMismatch);
}
