#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>

#include "spadsim/units.hpp"

/** @file spadsim/detector.hpp
    @brief Gate, light-source and detector ground-truth descriptions plus the per-gate probability model.

    Units: frequencies in Hz, times in seconds, dark-count densities per nanosecond.
*/

namespace spadsim
{
  /// Thrown when a configuration violates one of its invariants; what() starts with the invariant name.
  class invalid_config : public std::invalid_argument
  {
    public:
      using std::invalid_argument::invalid_argument;
  };

  namespace detail
  {
    inline void require(bool ok, const std::string& invariant)
    {
      if (!ok) throw invalid_config(invariant);
    }
  }

  enum class GateProfile { gaussian, rectangular };

  inline const char* to_string(GateProfile p) { return p == GateProfile::gaussian ? "gaussian" : "rectangular"; }

  inline GateProfile parse_gate_profile(const std::string& s)
  {
    if (s == "gaussian") return GateProfile::gaussian;
    if (s == "rectangular") return GateProfile::rectangular;
    throw invalid_config("gate.profile: expected 'gaussian' or 'rectangular', got '" + s + "'");
  }

  struct GateConfig
  {
    double f_g = 921e6;          ///< gating frequency
    double delta_t = 154e-12;    ///< effective gate width, FWHM of the efficiency profile
    GateProfile profile = GateProfile::gaussian;
    double count_off = 10e-9;    ///< counts within this time after a counted avalanche are ignored

    double period() const { return 1.0 / f_g; }
    double center(std::uint64_t gate) const { return static_cast<double>(gate) / f_g; }

    void validate() const
    {
      detail::require(std::isfinite(f_g) && f_g > 0, "gate.frequency > 0");
      detail::require(std::isfinite(delta_t) && delta_t > 0 && delta_t < 1.0 / f_g, "0 < gate.width < 1/gate.frequency");
      detail::require(std::isfinite(count_off) && count_off >= 0, "gate.count_off >= 0");
    }

    bool operator==(const GateConfig&) const = default;
  };

  struct PhotonSource
  {
    double mu = 0.1;              ///< mean photons per pulse
    std::uint32_t divider = 12;   ///< f_p = f_g / divider
    double delay = 0.0;           ///< pulse arrival relative to the gate peak
    double pulse_width = 30e-12;  ///< optical pulse FWHM
    bool convolve_pulse = false;  ///< fold the pulse width into the gate profile

    double f_p(const GateConfig& gate) const { return gate.f_g / divider; }
    bool illuminates(std::uint64_t gate_index) const { return gate_index % divider == 0; }

    void validate(const GateConfig& gate) const
    {
      detail::require(std::isfinite(mu) && mu >= 0, "source.mu >= 0");
      detail::require(divider >= 1, "source.divider >= 1");
      detail::require(std::isfinite(delay) && std::abs(delay) < 0.5 / gate.f_g, "|source.delay| < half a gate period");
      detail::require(std::isfinite(pulse_width) && pulse_width >= 0, "source.pulse_width >= 0");
    }

    bool operator==(const PhotonSource&) const = default;
  };

  struct AfterpulseModel
  {
    /// Shipped calibration: the excess-count afterpulse estimate comes out at 3.4 % at the
    /// 921 MHz / 154 ps / mu=0.1 / k=12 / 10 ns operating point (see `calibrate-afterpulse`).
    static constexpr double calibrated_mean_traps = 0.5167;

    double mean_traps = calibrated_mean_traps;  ///< Poisson mean of traps filled per avalanche
    double detrap_lifetime = 1e-6;
    double trigger_prob = 0.5;  ///< a release inside an open gate fires with this probability

    static AfterpulseModel disabled() { return {0.0, 1e-6, 0.0}; }
    bool enabled() const { return mean_traps > 0 && trigger_prob > 0 && detrap_lifetime > 0; }

    void validate() const
    {
      detail::require(std::isfinite(mean_traps) && mean_traps >= 0, "afterpulse.mean_traps >= 0");
      detail::require(std::isfinite(detrap_lifetime) && detrap_lifetime >= 0, "afterpulse.detrap_lifetime >= 0");
      detail::require(trigger_prob >= 0 && trigger_prob <= 1, "0 <= afterpulse.trigger_prob <= 1");
    }

    bool operator==(const AfterpulseModel&) const = default;
  };

  struct DetectorTruth
  {
    double eta = 0.093;      ///< peak detection efficiency
    double p_dc_ns = 2.8e-6; ///< dark-count probability per effective open ns
    AfterpulseModel afterpulse;

    void validate() const
    {
      detail::require(eta >= 0 && eta <= 1, "0 <= detector.efficiency <= 1");
      detail::require(std::isfinite(p_dc_ns) && p_dc_ns >= 0, "detector.dark_per_ns >= 0");
      afterpulse.validate();
    }

    bool operator==(const DetectorTruth&) const = default;
  };

  /// Probability that at least one photon of a Poisson(mu_eff) pulse is detected with efficiency eta.
  inline double per_gate_photon_prob(double mu_eff, double eta)
  {
    return -std::expm1(-mu_eff * eta);
  }

  /// Dark-count probability of one gate: density (per ns) times the effective width, capped at 1.
  inline double dark_prob_per_gate(double p_dc_ns, double delta_t)
  {
    const double p = p_dc_ns * (delta_t / ns);
    return p > 1.0 ? 1.0 : p;
  }

  /** @brief Relative efficiency of a pulse arriving @p delay from the gate peak, scaled to @p eta_peak.

      Gaussian profiles are parameterised by FWHM = delta_t. With a pulse width, the pulse is
      convolved in: a gaussian keeps its area and widens in quadrature, a rectangle gets erf edges.
  */
  inline double gate_profile_efficiency(double delay, const GateConfig& gate, double eta_peak,
                                        double pulse_width = 0.0)
  {
    const double fwhm_to_sigma = 1.0 / (2.0 * std::sqrt(2.0 * std::numbers::ln2));
    if (gate.profile == GateProfile::gaussian)
    {
      if (pulse_width <= 0) return eta_peak * std::exp(-4.0 * std::numbers::ln2 * delay * delay / (gate.delta_t * gate.delta_t));
      const double width = std::hypot(gate.delta_t, pulse_width);
      return eta_peak * (gate.delta_t / width) * std::exp(-4.0 * std::numbers::ln2 * delay * delay / (width * width));
    }
    const double half = 0.5 * gate.delta_t;
    if (pulse_width <= 0) return std::abs(delay) <= half ? eta_peak : 0.0;
    const double s = pulse_width * fwhm_to_sigma * std::numbers::sqrt2;
    return eta_peak * 0.5 * (std::erf((delay + half) / s) - std::erf((delay - half) / s));
  }
}
