#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <queue>
#include <utility>
#include <vector>

#include "spadsim/detector.hpp"
#include "spadsim/events.hpp"
#include "spadsim/random.hpp"

/** @file spadsim/engine.hpp
    @brief Gate-level Monte Carlo engine.

    Each gate holds at most one avalanche. Causes are resolved in the order afterpulse, photon,
    dark. Every avalanche, counted or not, fills a Poisson number of traps whose release delays are
    exponential and measured from the peak of the avalanche's gate; a release inside a later gate's
    open window [peak - delta_t/2, peak + delta_t/2] fires that gate with trigger_prob.

    Gates where nothing can happen are skipped: dark candidates are drawn as geometric gaps, so
    cost scales with illuminated gates plus avalanches rather than with n_gates.
*/

namespace spadsim
{
  struct Scenario
  {
    GateConfig gate;
    std::optional<PhotonSource> source = PhotonSource{};
    DetectorTruth detector;

    /// A source with mu <= 0 is a dark run.
    Scenario normalized() const
    {
      Scenario s = *this;
      if (s.source && s.source->mu <= 0) s.source.reset();
      return s;
    }

    void validate() const
    {
      gate.validate();
      if (source) source->validate(gate);
      detector.validate();
    }

    Scenario dark() const
    {
      Scenario s = *this;
      s.source.reset();
      return s;
    }

    bool operator==(const Scenario&) const = default;
  };

  /// Pending trap releases, earliest first.
  class TrapState
  {
    public:
      void add(double release_time) { heap_.push(release_time); }
      bool empty() const { return heap_.empty(); }
      std::size_t size() const { return heap_.size(); }
      double next() const { return heap_.top(); }
      double pop()
      {
        const double t = heap_.top();
        heap_.pop();
        return t;
      }

    private:
      std::priority_queue<double, std::vector<double>, std::greater<>> heap_;
  };

  class Engine
  {
    public:
      static constexpr std::uint64_t never = std::numeric_limits<std::uint64_t>::max();

      Engine(const Scenario& scenario, std::uint64_t seed)
        : scenario_(scenario.normalized()), rng_(seed), count_off_(scenario_.gate.count_off)
      {
        scenario_.validate();
        const auto& gate = scenario_.gate;
        p_dark_ = dark_prob_per_gate(scenario_.detector.p_dc_ns, gate.delta_t);
        if (scenario_.source)
        {
          const auto& src = *scenario_.source;
          const double width = src.convolve_pulse ? src.pulse_width : 0.0;
          const double factor = gate_profile_efficiency(src.delay, gate, 1.0, width);
          p_photon_ = per_gate_photon_prob(src.mu * factor, scenario_.detector.eta);
        }
        next_dark_ = sample_geometric(rng_, p_dark_);
        summary_.f_g = gate.f_g;
      }

      const Scenario& scenario() const { return scenario_; }
      std::uint64_t current_gate() const { return gate_; }
      const CountSummary& summary() const { return summary_; }
      const TrapState& traps() const { return traps_; }
      double photon_prob() const { return p_photon_; }
      double dark_prob() const { return p_dark_; }

      /// Advances by @p n_gates gates, handing each avalanche to @p sink in time order.
      template <class Sink>
      void run(std::uint64_t n_gates, Sink&& sink)
      {
        const std::uint64_t end = gate_ + n_gates;
        const auto& gate_cfg = scenario_.gate;
        const std::uint64_t k = scenario_.source ? scenario_.source->divider : 0;

        if (k) summary_.illuminated_gates += multiples_below(end, k) - multiples_below(gate_, k);
        summary_.n_gates += n_gates;

        while (true)
        {
          const std::uint64_t next_release = next_release_gate();
          std::uint64_t next_photon = never;
          if (k && p_photon_ > 0) next_photon = (gate_ + k - 1) / k * k;
          const std::uint64_t g = std::min({next_release, next_photon, next_dark_});
          if (g >= end) break;
          gate_ = g;

          const double center = gate_cfg.center(g);
          const bool illuminated = k && g % k == 0;
          std::optional<EventRecord> ev;

          // afterpulse: every release in this window is consumed, the earliest firing one counts
          while (g == next_release && !traps_.empty() && traps_.next() <= center + 0.5 * gate_cfg.delta_t)
          {
            const double t = traps_.pop();
            if (!ev && rng_.uniform() < scenario_.detector.afterpulse.trigger_prob)
              ev = EventRecord{g, t, Cause::afterpulse, true, illuminated};
          }
          if (illuminated && p_photon_ > 0 && !ev && rng_.uniform() < p_photon_)
            ev = EventRecord{g, center + scenario_.source->delay, Cause::photon, true, illuminated};
          if (g == next_dark_)
          {
            if (!ev)
            {
              const double t = center + (rng_.uniform() - 0.5) * gate_cfg.delta_t;
              ev = EventRecord{g, t, Cause::dark, true, illuminated};
            }
            const auto gap = sample_geometric(rng_, p_dark_);
            next_dark_ = gap >= never - g - 1 ? never : g + 1 + gap;
          }

          if (ev)
          {
            ev->counted = count_off_.admit(ev->time);
            summary_.record(*ev);
            fill_traps(center);
            sink(std::as_const(*ev));
          }
          gate_ = g + 1;
          drop_releases_before(center + 0.5 * gate_cfg.delta_t);
        }
        gate_ = end;
      }

      CountSummary run(std::uint64_t n_gates)
      {
        run(n_gates, [](const EventRecord&) {});
        return summary_;
      }

    private:
      static std::uint64_t multiples_below(std::uint64_t n, std::uint64_t k) { return n == 0 ? 0 : (n - 1) / k + 1; }

      void fill_traps(double center)
      {
        const auto& ap = scenario_.detector.afterpulse;
        if (!ap.enabled()) return;
        const unsigned n = sample_poisson(rng_, ap.mean_traps);
        for (unsigned i = 0; i < n; ++i) traps_.add(center + sample_exponential(rng_, ap.detrap_lifetime));
      }

      void drop_releases_before(double t)
      {
        while (!traps_.empty() && traps_.next() <= t) traps_.pop();
      }

      // gate whose open window contains the earliest pending release; misses are discarded
      std::uint64_t next_release_gate()
      {
        const auto& gate = scenario_.gate;
        while (!traps_.empty())
        {
          const double t = traps_.next();
          const double r = std::nearbyint(t * gate.f_g);
          if (r >= static_cast<double>(gate_) && std::abs(t - r / gate.f_g) <= 0.5 * gate.delta_t)
            return static_cast<std::uint64_t>(r);
          traps_.pop();
        }
        return never;
      }

      Scenario scenario_;
      Philox rng_;
      CountOffFilter count_off_;
      TrapState traps_;
      CountSummary summary_;
      double p_dark_ = 0.0;
      double p_photon_ = 0.0;
      std::uint64_t gate_ = 0;
      std::uint64_t next_dark_ = never;
  };

  struct SimulationResult
  {
    std::vector<EventRecord> events;
    CountSummary summary;
  };

  /// Runs @p n_gates gates from gate 0 and keeps the full event stream.
  inline SimulationResult simulate_gates(const Scenario& scenario, std::uint64_t n_gates, std::uint64_t seed)
  {
    if (n_gates < 1) throw invalid_config("n_gates >= 1");
    Engine engine(scenario, seed);
    SimulationResult out;
    engine.run(n_gates, [&](const EventRecord& e) { out.events.push_back(e); });
    out.summary = engine.summary();
    return out;
  }

  /// Same as simulate_gates without retaining events.
  inline CountSummary count_gates(const Scenario& scenario, std::uint64_t n_gates, std::uint64_t seed)
  {
    if (n_gates < 1) throw invalid_config("n_gates >= 1");
    Engine engine(scenario, seed);
    return engine.run(n_gates);
  }

  /** @brief First-generation afterpulse yield per avalanche, ignoring compounding and overlap:
      mean_traps * trigger_prob * P(release lands in some later open window).
  */
  inline double first_order_afterpulse_yield(const AfterpulseModel& ap, const GateConfig& gate)
  {
    if (!ap.enabled()) return 0.0;
    const double tau = ap.detrap_lifetime;
    const double half = 0.5 * gate.delta_t / tau;
    const double decay = std::exp(-gate.period() / tau);
    return ap.mean_traps * ap.trigger_prob * 2.0 * std::sinh(half) * decay / (1.0 - decay);
  }
}
