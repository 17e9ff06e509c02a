#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "spadsim/fit.hpp"
#include "spadsim/random.hpp"

using namespace spadsim;

namespace
{
  std::vector<CurvePoint> gaussian_curve(double fwhm, double center, double amp, double offset, double noise, std::uint64_t seed)
  {
    const double sigma = fwhm / (2 * std::sqrt(2 * std::log(2.0)));
    Philox rng(seed);
    std::vector<CurvePoint> pts;
    for (int i = -20; i <= 20; ++i)
    {
      const double x = i * 20e-12;
      double y = offset + amp * std::exp(-0.5 * std::pow((x - center) / sigma, 2));
      // Box-Muller
      const double g = std::sqrt(-2 * std::log(rng.uniform_pos())) * std::cos(2 * M_PI * rng.uniform());
      y += noise * amp * g;
      pts.push_back({x, y, noise * amp, 0});
    }
    return pts;
  }
}

TEST(Fit, ExactGaussianRecoversWidth)
{
  const auto pts = gaussian_curve(154e-12, 13e-12, 7e5, 200, 0, 1);
  const auto f = fit_gaussian(pts);
  EXPECT_NEAR(f.fwhm() / 154e-12, 1.0, 1e-3);
  EXPECT_NEAR(f.center, 13e-12, 1e-15);
  EXPECT_NEAR(f.amplitude / 7e5, 1.0, 1e-6);
  EXPECT_NEAR(f.offset, 200, 1e-3);
  EXPECT_NEAR(fwhm_estimate(pts) / 154e-12, 1.0, 1e-3);
}

TEST(Fit, NoisyGaussianWithinTwoPercent)
{
  for (std::uint64_t seed = 1; seed <= 10; ++seed)
  {
    const auto f = fit_gaussian(gaussian_curve(154e-12, 0, 1.0, 0.0, 0.01, seed));
    EXPECT_NEAR(f.fwhm() / 154e-12, 1.0, 0.02) << "seed " << seed;
  }
}

TEST(Fit, HalfMaxWidthOfTriangle)
{
  std::vector<CurvePoint> pts;
  for (int i = -5; i <= 5; ++i) pts.push_back({static_cast<double>(i), 5.0 - std::abs(i), 0, 0});
  EXPECT_NEAR(half_max_width(pts), 5.0, 1e-12);
}

TEST(Fit, RejectsFlatAndMonotoneCurves)
{
  std::vector<CurvePoint> flat, ramp, zero;
  for (int i = 0; i < 10; ++i)
  {
    flat.push_back({double(i), 3.0, 0.1, 0});
    ramp.push_back({double(i), double(i), 0.0, 0});
    zero.push_back({double(i), 0.0, 0.0, 0});
  }
  EXPECT_THROW(fit_gaussian(flat), fit_error);
  EXPECT_THROW(fit_gaussian(ramp), fit_error);
  EXPECT_THROW(fit_gaussian(zero), fit_error);
  EXPECT_THROW(fit_gaussian(std::vector<CurvePoint>{{0, 1, 0, 0}, {1, 2, 0, 0}}), fit_error);
}

TEST(Fit, PeakBuriedInNoiseIsRejected)
{
  std::vector<CurvePoint> pts;
  for (int i = -5; i <= 5; ++i) pts.push_back({double(i), i == 0 ? 1.0 : 0.0, 1.0, 0});
  EXPECT_THROW(fit_gaussian(pts), fit_error);
}
