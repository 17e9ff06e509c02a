#pragma once

#include <cmath>
#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <string>

#include "spadsim/events.hpp"
#include "spadsim/units.hpp"

/** @file spadsim/estimators.hpp
    @brief Closed-form characterization of a gated SPAD from measured count rates.

    All rates are in Hz, densities per ns, and gate widths in seconds (converted to ns where a
    per-ns density is formed).
*/

namespace spadsim
{
  /// Detection efficiency from the dark-count rate and the coincidence rate, assuming Poisson pulses.
  inline double estimate_efficiency(double mu, double f_g, double f_p, double r_dc, double r_de_c)
  {
    if (!(mu > 0)) throw std::domain_error("estimate_efficiency: mu must be > 0");
    if (!(r_dc < f_g) || r_dc < 0) throw std::domain_error("estimate_efficiency: need 0 <= R_dc < f_g");
    if (!(r_de_c < f_p) || r_de_c < 0) throw std::domain_error("estimate_efficiency: need 0 <= R_de_c < f_p");
    return (std::log1p(-r_dc / f_g) - std::log1p(-r_de_c / f_p)) / mu;
  }

  /// Dark counts per effective open nanosecond (afterpulsing of dark counts neglected).
  inline double dark_per_ns(double r_dc, double f_g, double delta_t)
  {
    if (!(f_g > 0) || !(delta_t > 0)) throw std::domain_error("dark_per_ns: f_g and delta_t must be > 0");
    return r_dc / (f_g * (delta_t / ns));
  }

  /// Afterpulse probability per detection from the excess of counts outside illuminated gates.
  /// k is the gate/laser divider; (k-1)/k of the dark counts fall in non-illuminated gates.
  inline double afterpulse_prob(double r_de, double r_de_c, double r_dc, unsigned k)
  {
    if (k < 2) throw std::domain_error("afterpulse_prob: divider must be >= 2");
    if (r_de_c == 0) throw std::domain_error("afterpulse_prob: R_de_c is zero");
    const double dark_outside = (static_cast<double>(k) - 1.0) / static_cast<double>(k) * r_dc;
    return (r_de - r_de_c - dark_outside) / r_de_c;
  }

  /// P_ap divided by the mean effective open time (ns) between detections, f_g*delta_t/R_de.
  inline double afterpulse_per_ns(double p_ap, double f_g, double delta_t, double r_de)
  {
    if (!(r_de > 0)) throw std::domain_error("afterpulse_per_ns: R_de must be > 0");
    if (!(f_g > 0) || !(delta_t > 0)) throw std::domain_error("afterpulse_per_ns: f_g and delta_t must be > 0");
    return p_ap / (f_g * (delta_t / ns) / r_de);
  }

  /// Same normalisation with R_de approximated by f_p*mu*eta; only approximately equal to the primary form.
  inline double afterpulse_per_ns_from_source(double p_ap, double f_g, double delta_t, double f_p, double mu, double eta)
  {
    if (!(f_g > 0) || !(delta_t > 0)) throw std::domain_error("afterpulse_per_ns: f_g and delta_t must be > 0");
    return p_ap * f_p * mu * eta / (f_g * (delta_t / ns));
  }

  inline double duty_cycle(double f_g, double delta_t)
  {
    if (!(f_g > 0) || !(delta_t > 0) || !(delta_t < 1.0 / f_g)) throw std::domain_error("duty_cycle: need 0 < delta_t < 1/f_g");
    return f_g * delta_t;
  }

  struct Estimate
  {
    double value = 0.0;
    double error = 0.0;    ///< one standard deviation from Poisson counting statistics
    bool negative = false; ///< returned unclamped; set when value < 0

    static Estimate make(double v, double e) { return {v, e, v < 0}; }
  };

  struct CharacterizationReport
  {
    Estimate eta;
    Estimate p_dc_ns;
    Estimate p_dc_gate;
    Estimate p_ap;
    Estimate p_ap_ns;
    Estimate p_ap_ns_from_source;
    double duty_cycle = 0.0;
    double r_dc = 0.0;
    double r_de = 0.0;
    double r_de_c = 0.0;
  };

  struct MeasurementSetup
  {
    double mu = 0.1;
    unsigned divider = 12;
    double delta_t = 154e-12;
  };

  /** @brief Applies every estimator to a dark run and an illuminated run.

      Errors are first-order propagations of independent Poisson counts: the dark count, the
      counted coincidences and the counted detections outside illuminated gates.
  */
  inline CharacterizationReport characterize(const CountSummary& dark, const CountSummary& light, const MeasurementSetup& setup)
  {
    if (dark.n_gates == 0 || light.n_gates == 0) throw std::domain_error("characterize: empty run");
    const double f_g = light.f_g;
    const double f_p = f_g / setup.divider;
    const double mu = setup.mu;
    const double width_ns = setup.delta_t / ns;
    const double k = setup.divider;

    const double t_dark = dark.duration();
    const double t_light = light.duration();
    const auto n_dc = static_cast<double>(dark.counted);
    const auto n_c = static_cast<double>(light.counted_illuminated);
    const auto n_nc = static_cast<double>(light.counted - light.counted_illuminated);

    CharacterizationReport r;
    r.r_dc = n_dc / t_dark;
    r.r_de_c = n_c / t_light;
    r.r_de = (n_c + n_nc) / t_light;
    const double r_nc = n_nc / t_light;
    const double s_dc = std::sqrt(n_dc) / t_dark;
    const double s_c = std::sqrt(n_c) / t_light;
    const double s_nc = std::sqrt(n_nc) / t_light;
    auto quad = [](double a, double b, double c) { return std::sqrt(a * a + b * b + c * c); };

    r.duty_cycle = duty_cycle(f_g, setup.delta_t);

    const double eta = estimate_efficiency(mu, f_g, f_p, r.r_dc, r.r_de_c);
    const double d_eta_dc = -1.0 / (mu * f_g * (1.0 - r.r_dc / f_g));
    const double d_eta_c = 1.0 / (mu * f_p * (1.0 - r.r_de_c / f_p));
    r.eta = Estimate::make(eta, quad(d_eta_dc * s_dc, d_eta_c * s_c, 0.0));

    r.p_dc_ns = Estimate::make(dark_per_ns(r.r_dc, f_g, setup.delta_t), s_dc / (f_g * width_ns));
    r.p_dc_gate = Estimate::make(r.r_dc / f_g, s_dc / f_g);

    if (r.r_de_c > 0)
    {
      const double a = (k - 1.0) / k;
      const double excess = r_nc - a * r.r_dc;
      const double p_ap = afterpulse_prob(r.r_de, r.r_de_c, r.r_dc, setup.divider);
      r.p_ap = Estimate::make(p_ap, quad(s_nc / r.r_de_c, excess / (r.r_de_c * r.r_de_c) * s_c, a / r.r_de_c * s_dc));

      const double kk = f_g * width_ns;
      const double d_nc = (r.r_de + excess) / (r.r_de_c * kk);
      const double d_c = excess * (r.r_de_c - r.r_de) / (r.r_de_c * r.r_de_c * kk);
      const double d_dc = -a * r.r_de / (r.r_de_c * kk);
      r.p_ap_ns = Estimate::make(afterpulse_per_ns(p_ap, f_g, setup.delta_t, r.r_de), quad(d_nc * s_nc, d_c * s_c, d_dc * s_dc));

      const double alt = afterpulse_per_ns_from_source(p_ap, f_g, setup.delta_t, f_p, mu, eta);
      const double rel = std::hypot(r.p_ap.error / std::abs(p_ap), r.eta.error / std::abs(eta));
      r.p_ap_ns_from_source = Estimate::make(alt, std::isfinite(rel) ? std::abs(alt) * rel : 0.0);
    }
    return r;
  }

  /// Flat key=value text.
  inline void write_report(std::ostream& os, const CharacterizationReport& r)
  {
    auto put = [&](const char* key, const Estimate& e) {
      os << key << '=' << format_exact(e.value) << '\n'
         << key << "_err=" << format_exact(e.error) << '\n'
         << key << "_negative=" << (e.negative ? 1 : 0) << '\n';
    };
    put("eta", r.eta);
    put("p_dc_ns", r.p_dc_ns);
    put("p_dc_gate", r.p_dc_gate);
    put("p_ap", r.p_ap);
    put("p_ap_ns", r.p_ap_ns);
    put("p_ap_ns_from_source", r.p_ap_ns_from_source);
    os << "duty_cycle=" << format_exact(r.duty_cycle) << '\n'
       << "r_dc=" << format_exact(r.r_dc) << '\n'
       << "r_de=" << format_exact(r.r_de) << '\n'
       << "r_de_c=" << format_exact(r.r_de_c) << '\n';
  }

  inline constexpr const char* report_csv_header =
    "eta,eta_err,p_dc_ns,p_dc_ns_err,p_dc_gate,p_dc_gate_err,p_ap,p_ap_err,p_ap_ns,p_ap_ns_err,duty_cycle,r_dc,r_de,r_de_c";

  inline void write_report_row(std::ostream& os, const CharacterizationReport& r)
  {
    const double cols[] = {r.eta.value, r.eta.error, r.p_dc_ns.value, r.p_dc_ns.error, r.p_dc_gate.value, r.p_dc_gate.error,
                           r.p_ap.value, r.p_ap.error, r.p_ap_ns.value, r.p_ap_ns.error, r.duty_cycle, r.r_dc, r.r_de, r.r_de_c};
    bool first = true;
    for (double c : cols)
    {
      if (!first) os << ',';
      os << format_exact(c);
      first = false;
    }
    os << '\n';
  }
}
