#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

/** @file spadsim/fit.hpp
    @brief Least-squares gaussian-plus-offset fit (Levenberg-Marquardt) and half-maximum widths.
*/

namespace spadsim
{
  class fit_error : public std::runtime_error
  {
    public:
      using std::runtime_error::runtime_error;
  };

  struct CurvePoint
  {
    double x = 0.0;
    double y = 0.0;
    double y_err = 0.0;
    double x_err = 0.0;
  };

  struct GaussianFit
  {
    double amplitude = 0.0;
    double center = 0.0;
    double sigma = 0.0;
    double offset = 0.0;
    double rms_residual = 0.0;
    int iterations = 0;

    double fwhm() const { return 2.0 * std::sqrt(2.0 * std::numbers::ln2) * std::abs(sigma); }
    double operator()(double x) const
    {
      const double z = (x - center) / sigma;
      return offset + amplitude * std::exp(-0.5 * z * z);
    }
  };

  namespace detail
  {
    inline std::size_t argmax_y(std::span<const CurvePoint> pts)
    {
      return static_cast<std::size_t>(std::max_element(pts.begin(), pts.end(), [](auto& a, auto& b) { return a.y < b.y; }) - pts.begin());
    }

    /// Throws unless the curve has one clear maximum that falls below half height on both sides.
    inline void require_unimodal(std::span<const CurvePoint> pts)
    {
      if (pts.size() < 4) throw fit_error("gaussian fit needs at least 4 points");
      for (std::size_t i = 1; i < pts.size(); ++i)
        if (!(pts[i].x > pts[i - 1].x)) throw fit_error("curve x values must be strictly increasing");
      const std::size_t peak = argmax_y(pts);
      const double ymax = pts[peak].y;
      const double ymin = std::min_element(pts.begin(), pts.end(), [](auto& a, auto& b) { return a.y < b.y; })->y;
      double noise = 0.0;
      for (const auto& p : pts) noise = std::max(noise, p.y_err);
      if (!(ymax - ymin > std::max(3.0 * noise, 1e-12 * std::abs(ymax))) || !(ymax > ymin))
        throw fit_error("curve has no maximum above the noise floor");
      const double half = ymin + 0.5 * (ymax - ymin);
      const bool left = std::any_of(pts.begin(), pts.begin() + static_cast<std::ptrdiff_t>(peak), [&](auto& p) { return p.y < half; });
      const bool right = std::any_of(pts.begin() + static_cast<std::ptrdiff_t>(peak) + 1, pts.end(), [&](auto& p) { return p.y < half; });
      if (!left || !right) throw fit_error("curve maximum is not bracketed by half-height points");
    }
  }

  /// Width of the region above half height (baseline = curve minimum), with linearly interpolated edges.
  inline double half_max_width(std::span<const CurvePoint> pts)
  {
    detail::require_unimodal(pts);
    const std::size_t peak = detail::argmax_y(pts);
    const double ymin = std::min_element(pts.begin(), pts.end(), [](auto& a, auto& b) { return a.y < b.y; })->y;
    const double half = ymin + 0.5 * (pts[peak].y - ymin);
    auto cross = [&](std::size_t a, std::size_t b) {
      return pts[a].x + (half - pts[a].y) * (pts[b].x - pts[a].x) / (pts[b].y - pts[a].y);
    };
    std::size_t l = peak;
    while (l > 0 && pts[l - 1].y >= half) --l;
    std::size_t r = peak;
    while (r + 1 < pts.size() && pts[r + 1].y >= half) ++r;
    return cross(r, r + 1) - cross(l - 1, l);
  }

  /// Fits offset + amplitude * exp(-(x - center)^2 / (2 sigma^2)) by unweighted least squares.
  inline GaussianFit fit_gaussian(std::span<const CurvePoint> pts)
  {
    detail::require_unimodal(pts);
    const std::size_t n = pts.size();
    const std::size_t peak = detail::argmax_y(pts);

    Eigen::Vector4d p;  // amplitude, center, sigma, offset
    const double ymin = std::min_element(pts.begin(), pts.end(), [](auto& a, auto& b) { return a.y < b.y; })->y;
    p << pts[peak].y - ymin, pts[peak].x, half_max_width(pts) / (2.0 * std::sqrt(2.0 * std::numbers::ln2)), ymin;

    // work in scaled units so the normal equations are well conditioned
    const double xs = std::abs(p[2]) > 0 ? std::abs(p[2]) : 1.0;
    const double ys = std::abs(p[0]) > 0 ? std::abs(p[0]) : 1.0;
    Eigen::VectorXd x(n), y(n);
    for (std::size_t i = 0; i < n; ++i)
    {
      x[static_cast<Eigen::Index>(i)] = (pts[i].x - p[1]) / xs;
      y[static_cast<Eigen::Index>(i)] = pts[i].y / ys;
    }
    const double x_shift = p[1];
    Eigen::Vector4d q(p[0] / ys, 0.0, p[2] / xs, p[3] / ys);

    auto residuals = [&](const Eigen::Vector4d& v, Eigen::VectorXd& r, Eigen::MatrixXd* J) {
      r.resize(static_cast<Eigen::Index>(n));
      if (J) J->resize(static_cast<Eigen::Index>(n), 4);
      for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(n); ++i)
      {
        const double z = (x[i] - v[1]) / v[2];
        const double e = std::exp(-0.5 * z * z);
        r[i] = y[i] - (v[3] + v[0] * e);
        if (J)
        {
          (*J)(i, 0) = e;
          (*J)(i, 1) = v[0] * e * z / v[2];
          (*J)(i, 2) = v[0] * e * z * z / v[2];
          (*J)(i, 3) = 1.0;
        }
      }
    };

    Eigen::VectorXd r;
    Eigen::MatrixXd J;
    residuals(q, r, &J);
    double cost = r.squaredNorm();
    double lambda = 1e-3;
    int it = 0;
    for (; it < 500; ++it)
    {
      const Eigen::Matrix4d JtJ = J.transpose() * J;
      const Eigen::Vector4d g = J.transpose() * r;
      Eigen::Matrix4d A = JtJ;
      A.diagonal() += lambda * JtJ.diagonal().cwiseMax(1e-12);
      const Eigen::Vector4d step = A.ldlt().solve(g);
      Eigen::Vector4d trial = q + step;
      Eigen::VectorXd rt;
      residuals(trial, rt, nullptr);
      const double trial_cost = rt.squaredNorm();
      if (std::isfinite(trial_cost) && trial_cost <= cost)
      {
        const bool converged = step.norm() <= 1e-13 * (q.norm() + 1e-13) || cost - trial_cost <= 1e-30;
        q = trial;
        cost = trial_cost;
        residuals(q, r, &J);
        lambda = std::max(lambda * 0.3, 1e-12);
        if (converged) break;
      }
      else
      {
        lambda *= 10.0;
        if (lambda > 1e12) break;
      }
    }

    GaussianFit f;
    f.amplitude = q[0] * ys;
    f.center = q[1] * xs + x_shift;
    f.sigma = std::abs(q[2]) * xs;
    f.offset = q[3] * ys;
    f.rms_residual = std::sqrt(cost / static_cast<double>(n)) * ys;
    f.iterations = it;
    if (!std::isfinite(f.sigma) || !(f.amplitude > 0) || f.sigma == 0) throw fit_error("gaussian fit did not converge");
    return f;
  }

  /// FWHM of the least-squares gaussian through the curve.
  inline double fwhm_estimate(std::span<const CurvePoint> pts) { return fit_gaussian(pts).fwhm(); }
}
