#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "spadsim/engine.hpp"

using namespace spadsim;

namespace
{
  Scenario op_point(bool traps)
  {
    Scenario s;
    if (!traps) s.detector.afterpulse = AfterpulseModel::disabled();
    return s;
  }
}

TEST(Detector, PhotonProbability)
{
  EXPECT_EQ(per_gate_photon_prob(0.0, 0.5), 0.0);
  EXPECT_NEAR(per_gate_photon_prob(0.1, 0.093), 1 - std::exp(-0.0093), 1e-15);
  EXPECT_NEAR(per_gate_photon_prob(0.1, 0.093), 0.009257, 1e-6);
  EXPECT_NEAR(per_gate_photon_prob(1e6, 0.093), 1.0, 1e-15);
}

TEST(Detector, DarkProbability)
{
  EXPECT_NEAR(dark_prob_per_gate(2.8e-6, 154e-12), 4.312e-7, 1e-12);
  EXPECT_NEAR(dark_prob_per_gate(2.8e-6, 154e-12) / 4.3e-7, 1.0, 0.01);
  EXPECT_EQ(dark_prob_per_gate(0.0, 154e-12), 0.0);
  EXPECT_NEAR(dark_prob_per_gate(1.5e-5, 170e-12), 2.55e-6, 1e-15);
  EXPECT_EQ(dark_prob_per_gate(100.0, 1e-6), 1.0);
}

TEST(Detector, GateProfile)
{
  GateConfig g;
  EXPECT_EQ(gate_profile_efficiency(0.0, g, 0.093), 0.093);
  EXPECT_NEAR(gate_profile_efficiency(0.5 * g.delta_t, g, 0.093), 0.0465, 1e-15);
  EXPECT_NEAR(gate_profile_efficiency(g.delta_t, g, 0.093), 0.0058125, 1e-15);
  g.profile = GateProfile::rectangular;
  EXPECT_EQ(gate_profile_efficiency(0.49 * g.delta_t, g, 0.2), 0.2);
  EXPECT_EQ(gate_profile_efficiency(0.51 * g.delta_t, g, 0.2), 0.0);
}

TEST(Detector, PulseConvolutionWidensInQuadrature)
{
  GateConfig g;
  const double w = std::hypot(154e-12, 30e-12);
  const double peak = gate_profile_efficiency(0, g, 1.0, 30e-12);
  EXPECT_NEAR(peak, 154e-12 / w, 1e-12);
  EXPECT_NEAR(gate_profile_efficiency(0.5 * w, g, 1.0, 30e-12) / peak, 0.5, 1e-12);
}

TEST(Detector, InvariantsRejected)
{
  GateConfig g;
  g.delta_t = 2e-9;
  EXPECT_THROW(g.validate(), invalid_config);
  g = GateConfig{};
  g.count_off = -1;
  EXPECT_THROW(g.validate(), invalid_config);
  Scenario s;
  s.detector.eta = 1.5;
  EXPECT_THROW(s.validate(), invalid_config);
  s = Scenario{};
  s.detector.afterpulse.trigger_prob = 2;
  EXPECT_THROW(Engine(s, 1), invalid_config);
  s = Scenario{};
  s.source->divider = 0;
  EXPECT_THROW(s.validate(), invalid_config);
}

TEST(CountOff, GreedyRule)
{
  std::vector<EventRecord> ev{{0, 0.0, Cause::photon, true, true}, {5, 5e-9, Cause::dark, true, false}, {12, 12e-9, Cause::dark, true, false}};
  const auto out = apply_count_off(ev, 10e-9);
  EXPECT_TRUE(out[0].counted);
  EXPECT_FALSE(out[1].counted);
  EXPECT_TRUE(out[2].counted);
  for (const auto& e : apply_count_off(ev, 0.0)) EXPECT_TRUE(e.counted);
  std::swap(ev[0], ev[2]);
  EXPECT_THROW(apply_count_off(ev, 10e-9), std::invalid_argument);
}

TEST(Engine, NothingHappensWithoutSources)
{
  Scenario s = op_point(false);
  s.detector.eta = 0;
  s.detector.p_dc_ns = 0;
  const auto r = simulate_gates(s, 1'000'000, 1);
  EXPECT_TRUE(r.events.empty());
  EXPECT_EQ(r.summary.n_gates, 1'000'000u);
  EXPECT_EQ(r.summary.illuminated_gates, 83'334u);
}

TEST(Engine, DeterministicStreams)
{
  const auto a = simulate_gates(op_point(true), 2'000'000, 9);
  const auto b = simulate_gates(op_point(true), 2'000'000, 9);
  const auto c = simulate_gates(op_point(true), 2'000'000, 10);
  EXPECT_EQ(a.events, b.events);
  EXPECT_EQ(a.summary, b.summary);
  EXPECT_NE(a.events, c.events);
  std::ostringstream x, y;
  write_events_csv(x, a.events);
  write_events_csv(y, b.events);
  EXPECT_EQ(x.str(), y.str());
}

TEST(Engine, EventInvariants)
{
  Scenario s = op_point(true);
  s.source->mu = 5;
  const auto r = simulate_gates(s, 3'000'000, 4);
  double last_counted = -1;
  std::uint64_t prev_gate = 0;
  bool first = true;
  for (const auto& e : r.events)
  {
    if (!first) { EXPECT_GT(e.gate_index, prev_gate); }
    first = false;
    prev_gate = e.gate_index;
    EXPECT_EQ(e.illuminated, e.gate_index % 12 == 0);
    EXPECT_LE(std::abs(e.time - s.gate.center(e.gate_index)), 0.5 * s.gate.delta_t + 1e-18);
    if (e.counted)
    {
      if (last_counted >= 0) { EXPECT_GE(e.time - last_counted, s.gate.count_off); }
      last_counted = e.time;
    }
  }
  const auto& sum = r.summary;
  EXPECT_LE(sum.coincidence_rate(), sum.count_rate());
  EXPECT_LE(sum.count_rate(), s.gate.f_g);
  EXPECT_LE(sum.counted_illuminated, sum.illuminated_gates);
  EXPECT_LE(static_cast<double>(sum.counted), sum.duration() / s.gate.count_off + 1);
  // count-off is reproducible offline from the avalanche stream
  EXPECT_EQ(apply_count_off(r.events, s.gate.count_off), r.events);
}

TEST(Engine, SummaryMatchesEvents)
{
  const auto r = simulate_gates(op_point(true), 1'000'000, 5);
  CountSummary s;
  s.f_g = r.summary.f_g;
  for (const auto& e : r.events) s.record(e);
  EXPECT_EQ(s.avalanches, r.summary.avalanches);
  EXPECT_EQ(s.counted, r.summary.counted);
  EXPECT_EQ(s.counted_illuminated, r.summary.counted_illuminated);
  EXPECT_EQ(count_gates(op_point(true), 1'000'000, 5), r.summary);
}

TEST(Engine, SplittingARunIntoChunksMatchesOneRun)
{
  Engine a(op_point(true), 77), b(op_point(true), 77);
  a.run(3'000'000);
  b.run(1'000'000);
  b.run(500'000);
  b.run(1'500'000);
  EXPECT_EQ(a.summary(), b.summary());
}

TEST(Engine, SaturatedPulsesReachLaserRate)
{
  Scenario s = op_point(false);
  s.source->mu = 1e6;
  const auto sum = count_gates(s, 12'000'000, 3);
  EXPECT_EQ(sum.counted_illuminated, 1'000'000u);
  EXPECT_NEAR(sum.coincidence_rate(), 921e6 / 12, 1e-6);
}

TEST(Engine, ContinuousSaturationIsCountOffLimited)
{
  Scenario s = op_point(false);
  s.detector.p_dc_ns = 0;
  s.source->mu = 1e6;
  s.source->divider = 1;
  const auto sum = count_gates(s, 10'000'000, 3);
  // the first gate at least 10 ns after a count is the 10th one
  EXPECT_EQ(sum.counted, 1'000'000u);
  EXPECT_NEAR(sum.count_rate(), 92.1e6, 1.0);
}

TEST(Engine, DarkRateConverges)
{
  Scenario s = op_point(false);
  s.gate.count_off = 0;
  const std::uint64_t n = 1'000'000'000;
  const auto sum = count_gates(s.dark(), n, 8);
  const double expect = 2.8e-6 * 0.154 * 921e6;
  EXPECT_NEAR(expect, 397.0, 0.2);
  const double sigma = std::sqrt(expect * sum.duration()) / sum.duration();
  EXPECT_NEAR(sum.count_rate(), expect, 3 * sigma);
}

TEST(Engine, CoincidenceFractionConverges)
{
  Scenario s = op_point(false);
  s.gate.count_off = 0;
  s.detector.p_dc_ns = 1e-3;
  const auto sum = count_gates(s, 50'000'000, 12);
  const double p_dark = dark_prob_per_gate(1e-3, 154e-12);
  const double p = 1 - (1 - p_dark) * std::exp(-0.1 * 0.093);
  const double n = static_cast<double>(sum.illuminated_gates);
  EXPECT_NEAR(sum.counted_illuminated / n, p, 3 * std::sqrt(p * (1 - p) / n));
}

TEST(Engine, ZeroMuIsADarkRun)
{
  Scenario s = op_point(false);
  s.source->mu = 0;
  Engine e(s, 1);
  EXPECT_FALSE(e.scenario().source.has_value());
  EXPECT_EQ(e.photon_prob(), 0.0);
}

TEST(Engine, UncountedAvalanchesStillFillTraps)
{
  Scenario s;
  s.source->mu = 1e6;
  s.source->divider = 1;
  s.detector.p_dc_ns = 0;
  s.detector.afterpulse = {3.0, 1e-6, 1.0};
  Engine e(s, 2);
  e.run(20);
  // every gate fired, only two were counted, and traps came from all twenty
  EXPECT_EQ(e.summary().avalanches, 20u);
  EXPECT_EQ(e.summary().counted, 2u);
  EXPECT_GT(e.traps().size(), 30u);
}

TEST(Summary, MergeIsAssociativeAndSerialises)
{
  const auto a = count_gates(op_point(true), 300'000, 1);
  const auto b = count_gates(op_point(true), 300'000, 2);
  const auto c = count_gates(op_point(true), 300'000, 3);
  EXPECT_EQ(merge(merge(a, b), c), merge(a, merge(b, c)));
  EXPECT_EQ(merge(a, b), merge(b, a));
  CountSummary other = a;
  other.f_g = 1e9;
  EXPECT_THROW(merge(a, other), std::invalid_argument);
  std::stringstream ss;
  write_summary(ss, a);
  EXPECT_EQ(read_summary(ss), a);
}

TEST(Events, CsvRoundTrip)
{
  const auto r = simulate_gates(op_point(true), 500'000, 6);
  std::stringstream ss;
  write_events_csv(ss, r.events);
  EXPECT_EQ(ss.str().substr(0, ss.str().find('\n')), event_csv_header);
  const auto back = read_events_csv(ss);
  ASSERT_EQ(back.size(), r.events.size());
  for (std::size_t i = 0; i < back.size(); ++i)
  {
    EXPECT_EQ(back[i].gate_index, r.events[i].gate_index);
    EXPECT_DOUBLE_EQ(back[i].time, r.events[i].time);
    EXPECT_EQ(back[i].cause, r.events[i].cause);
    EXPECT_EQ(back[i].counted, r.events[i].counted);
  }
}
