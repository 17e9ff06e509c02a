#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "spadsim/engine.hpp"
#include "spadsim/estimators.hpp"
#include "spadsim/experiments.hpp"

using namespace spadsim;

namespace
{
  /** Exact expected afterpulse gates per primary avalanche over the next `depth` gates.

      Each avalanche a leaves Poisson(m) traps; the releases that land in the window of gate a+j and
      fire form a Poisson(m * trig * q_j) count (thinning), independent across gates. A gate fires
      iff at least one such release reaches it. Enumerates every fire/no-fire history.
  */
  double afterpulses_per_primary(double m, double trig, double tau, double period, double width, int depth)
  {
    std::vector<double> q(depth + 1, 0.0);
    for (int j = 1; j <= depth; ++j) q[j] = trig * (std::exp(-(j * period - 0.5 * width) / tau) - std::exp(-(j * period + 0.5 * width) / tau));
    std::vector<int> fired{0};
    std::function<double(int, double)> visit = [&](int gate, double prob) -> double {
      if (gate > depth) return 0.0;
      double lambda = 0.0;
      for (int a : fired) lambda += m * q[gate - a];
      const double p = -std::expm1(-lambda);
      double total = 0.0;
      if (p > 0)
      {
        fired.push_back(gate);
        total += prob * p + visit(gate + 1, prob * p);
        fired.pop_back();
      }
      total += visit(gate + 1, prob * (1 - p));
      return total;
    };
    return visit(1, 1.0);
  }
}

TEST(AfterpulseOracle, FirstGenerationMatchesClosedForm)
{
  GateConfig g;
  const AfterpulseModel ap{1e-3, 2e-9, 0.5};
  // with a tiny trap mean, compounding and saturation vanish
  const double exact = afterpulses_per_primary(ap.mean_traps, ap.trigger_prob, ap.detrap_lifetime, g.period(), g.delta_t, 18);
  EXPECT_NEAR(exact / first_order_afterpulse_yield(ap, g), 1.0, 1e-3);
}

TEST(AfterpulseOracle, EngineMatchesBruteForceEnumeration)
{
  Scenario s;
  s.gate.count_off = 0;
  s.source->mu = 60;
  s.source->divider = 64;
  s.detector.eta = 1.0;
  s.detector.p_dc_ns = 0;
  s.detector.afterpulse = {2.0, 2e-9, 0.5};
  const double expect = afterpulses_per_primary(2.0, 0.5, 2e-9, s.gate.period(), s.gate.delta_t, 20);

  const auto sum = count_gates(s, 64'000'000, 21);
  ASSERT_EQ(sum.counted_illuminated, sum.illuminated_gates);
  const double primaries = static_cast<double>(sum.counted_illuminated);
  const double excess = static_cast<double>(sum.counted - sum.counted_illuminated);
  const double measured = excess / primaries;
  EXPECT_NEAR(measured, expect, 4 * std::sqrt(excess) / primaries) << "oracle " << expect;

  // the excess-count estimator sees the same quantity
  EXPECT_NEAR(afterpulse_prob(sum.count_rate(), sum.coincidence_rate(), 0.0, 64), measured, 1e-12);
}

TEST(AfterpulseOracle, CompoundingRaisesTheYield)
{
  GateConfig g;
  const double with = afterpulses_per_primary(2.0, 0.5, 2e-9, g.period(), g.delta_t, 18);
  const double first = first_order_afterpulse_yield({2.0, 2e-9, 0.5}, g);
  EXPECT_GT(with, 0.0);
  EXPECT_NE(with, first);
}

TEST(Statistics, ReportedErrorsMatchRunToRunScatter)
{
  Scenario s;
  s.detector.afterpulse = AfterpulseModel::disabled();
  s.detector.p_dc_ns = 2e-4;
  const int runs = 40;
  std::vector<double> eta, pdc;
  double err_eta = 0, err_pdc = 0;
  for (int i = 0; i < runs; ++i)
  {
    const auto light = count_gates(s, 4'000'000, derive_seed(100, 2 * i));
    const auto dark = count_gates(s.dark(), 4'000'000, derive_seed(100, 2 * i + 1));
    const auto r = characterize(dark, light, {0.1, 12, s.gate.delta_t});
    eta.push_back(r.eta.value);
    pdc.push_back(r.p_dc_ns.value);
    err_eta += r.eta.error / runs;
    err_pdc += r.p_dc_ns.error / runs;
  }
  auto sd = [](const std::vector<double>& v) {
    double m = 0, s2 = 0;
    for (double x : v) m += x / v.size();
    for (double x : v) s2 += (x - m) * (x - m) / (v.size() - 1);
    return std::sqrt(s2);
  };
  // sample sd of 40 runs is within about 35 % of the truth at 3 sigma
  EXPECT_NEAR(sd(eta) / err_eta, 1.0, 0.35);
  EXPECT_NEAR(sd(pdc) / err_pdc, 1.0, 0.35);
}

TEST(Statistics, ErrorsShrinkAsInverseRootCounts)
{
  Scenario s;
  s.detector.afterpulse = AfterpulseModel::disabled();
  const auto small = characterize(count_gates(s.dark(), 10'000'000, 1), count_gates(s, 10'000'000, 2), {});
  const auto large = characterize(count_gates(s.dark(), 160'000'000, 3), count_gates(s, 160'000'000, 4), {});
  EXPECT_NEAR(small.eta.error / large.eta.error, 4.0, 0.2);
}

TEST(GatePhase, IlluminatedGatesDominatePulsedDetections)
{
  Scenario s;
  s.source->mu = 1;
  const auto sum = count_gates(s, 10'000'000, 31);
  EXPECT_GE(static_cast<double>(sum.counted_illuminated) / sum.counted, 0.90);
}

TEST(GatePhase, DarkDetectionsAreUniformOverPhase)
{
  Scenario s = Scenario{}.dark();
  s.detector.p_dc_ns = 2e-3;
  s.detector.afterpulse = AfterpulseModel::disabled();
  const auto r = simulate_gates(s, 12'000'000, 5);
  std::vector<double> bins(12, 0.0);
  for (const auto& e : r.events)
    if (e.counted) bins[e.gate_index % 12] += 1;
  double n = 0;
  for (double b : bins) n += b;
  ASSERT_GT(n, 1000);
  double chi2 = 0;
  for (double b : bins) chi2 += (b - n / 12) * (b - n / 12) / (n / 12);
  // 99th percentile of chi-square with 11 degrees of freedom
  EXPECT_LT(chi2, 24.725);
}
