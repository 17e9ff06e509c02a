#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "spadsim/detector.hpp"
#include "spadsim/events.hpp"
#include "spadsim/random.hpp"

/** @file spadsim/waveform.hpp
    @brief Sample-level model of the read-out chain: sine gate, device feedthrough with even
    harmonics, band-stop notches, self-differencing, amplification and per-gate discrimination.

    Time origin is the peak of gate 0; sample i of the global grid sits at i / sample_rate, so
    buffers may start at negative indices (filter warm-up).
*/

namespace spadsim
{
  struct NotchSpec
  {
    double center = 921e6;
    double attenuation_db = 35.0;  ///< depth at the center; infinity gives a true zero
    double q = 30.0;

    bool operator==(const NotchSpec&) const = default;
  };

  struct SDConfig
  {
    double delay = 1.0 / 921e6;      ///< one gate period
    double amplitude_mismatch = 0.005;
    double skew = 1e-12;

    bool operator==(const SDConfig&) const = default;
  };

  struct WaveformConfig
  {
    /// Default post-chain avalanche peak of about 2 mV for an avalanche at the gate peak.
    static constexpr double default_avalanche_amp = 2.554e-4;

    double sample_rate = 16 * 921e6;
    double v_pp = 12.0;
    double v_dc = 55.0;                ///< metadata only
    double feedthrough_gain = 0.040;   ///< volts at the device output per unit normalised gate
    double a2 = 0.10;
    double a4 = 0.05;
    double avalanche_amp = default_avalanche_amp;
    double avalanche_rise = 50e-12;
    double amp2_gain_db = 20.0;
    double noise_rms = 0.0;            ///< white noise at the amplifier input, volts
    std::uint64_t noise_seed = 0;
    double threshold = 1e-3;           ///< discriminator level at the amplifier output
    std::vector<NotchSpec> notches{{921e6, 35.0, 30.0}, {2 * 921e6, 35.0, 30.0}, {4 * 921e6, 35.0, 30.0}};
    SDConfig sd;
    std::uint32_t warmup_periods = 128;

    /// Defaults for a given gate frequency: 16 samples per period, notches at f_g, 2f_g, 4f_g.
    static WaveformConfig defaults_for(double f_g)
    {
      WaveformConfig c;
      c.sample_rate = 16 * f_g;
      c.notches = {{f_g, 35.0, 30.0}, {2 * f_g, 35.0, 30.0}, {4 * f_g, 35.0, 30.0}};
      c.sd.delay = 1.0 / f_g;
      return c;
    }

    void validate(double f_g) const
    {
      detail::require(std::isfinite(sample_rate) && sample_rate >= 16 * f_g * (1 - 1e-12), "waveform.sample_rate >= 16 * gate.frequency");
      detail::require(std::isfinite(v_pp) && v_pp > 0, "waveform.v_pp > 0");
      detail::require(std::isfinite(feedthrough_gain) && std::isfinite(a2) && std::isfinite(a4) && std::isfinite(amp2_gain_db), "waveform gains finite");
      detail::require(std::isfinite(avalanche_amp) && avalanche_amp >= 0, "waveform.avalanche_amp >= 0");
      detail::require(std::isfinite(avalanche_rise) && avalanche_rise >= 0, "waveform.avalanche_rise >= 0");
      detail::require(std::isfinite(noise_rms) && noise_rms >= 0, "waveform.noise_rms >= 0");
      detail::require(std::isfinite(threshold) && threshold > 0, "waveform.threshold > 0");
      for (const auto& n : notches)
      {
        detail::require(n.center > 0 && n.center < 0.5 * sample_rate, "0 < notch.center < sample_rate/2");
        detail::require(n.attenuation_db > 0, "notch.attenuation_db > 0");
        detail::require(std::isfinite(n.q) && n.q > 0, "notch.q > 0");
      }
      detail::require(std::isfinite(sd.delay) && sd.delay > 0, "sd.delay > 0");
      detail::require(sd.amplitude_mismatch >= 0 && sd.skew >= 0, "sd.amplitude_mismatch >= 0 and sd.skew >= 0");
    }

    bool operator==(const WaveformConfig&) const = default;
  };

  struct SampleBuffer
  {
    std::int64_t first_index = 0;
    double sample_rate = 1.0;
    std::vector<double> v;

    std::size_t size() const { return v.size(); }
    double time(std::size_t i) const { return static_cast<double>(first_index + static_cast<std::int64_t>(i)) / sample_rate; }
    double span() const { return static_cast<double>(v.size()) / sample_rate; }
    double max() const { return v.empty() ? 0.0 : *std::max_element(v.begin(), v.end()); }
    double min() const { return v.empty() ? 0.0 : *std::min_element(v.begin(), v.end()); }
    double peak_abs() const
    {
      double m = 0;
      for (double x : v) m = std::max(m, std::abs(x));
      return m;
    }
  };

  /// Second-order section, transposed direct form II.
  class Biquad
  {
    public:
      Biquad(double b0, double b1, double b2, double a0, double a1, double a2)
        : b0_(b0 / a0), b1_(b1 / a0), b2_(b2 / a0), a1_(a1 / a0), a2_(a2 / a0) {}

      /// Band-stop of finite depth (a peaking section with negative gain); DC and Nyquist pass at unity.
      static Biquad notch(const NotchSpec& spec, double sample_rate)
      {
        const double w0 = 2.0 * std::numbers::pi * spec.center / sample_rate;
        const double cw = std::cos(w0);
        const double alpha = std::sin(w0) / (2.0 * spec.q);
        if (std::isinf(spec.attenuation_db)) return {1.0, -2.0 * cw, 1.0, 1.0 + alpha, -2.0 * cw, 1.0 - alpha};
        const double a = std::pow(10.0, -spec.attenuation_db / 40.0);
        return {1.0 + alpha * a, -2.0 * cw, 1.0 - alpha * a, 1.0 + alpha / a, -2.0 * cw, 1.0 - alpha / a};
      }

      double step(double x)
      {
        const double y = b0_ * x + s1_;
        s1_ = b1_ * x - a1_ * y + s2_;
        s2_ = b2_ * x - a2_ * y;
        return y;
      }

      /// |H| at frequency f.
      double magnitude(double f, double sample_rate) const
      {
        const double w = 2.0 * std::numbers::pi * f / sample_rate;
        const double c1 = std::cos(w), s1 = std::sin(w), c2 = std::cos(2 * w), s2 = std::sin(2 * w);
        const double nr = b0_ + b1_ * c1 + b2_ * c2, ni = -(b1_ * s1 + b2_ * s2);
        const double dr = 1.0 + a1_ * c1 + a2_ * c2, di = -(a1_ * s1 + a2_ * s2);
        return std::sqrt((nr * nr + ni * ni) / (dr * dr + di * di));
      }

    private:
      double b0_, b1_, b2_, a1_, a2_;
      double s1_ = 0.0, s2_ = 0.0;
  };

  /// Pure sinusoid of peak-to-peak v_pp at f_g, peaking at every gate center, covering whole periods.
  inline SampleBuffer synth_gate_waveform(const WaveformConfig& cfg, double f_g, std::uint64_t n_periods, std::int64_t first_period = 0)
  {
    if (n_periods < 1) throw std::invalid_argument("synth_gate_waveform: n_periods >= 1");
    cfg.validate(f_g);
    const double per_period = cfg.sample_rate / f_g;
    const double cycles_per_sample = f_g / cfg.sample_rate;
    SampleBuffer out;
    out.sample_rate = cfg.sample_rate;
    out.first_index = static_cast<std::int64_t>(std::llround(static_cast<double>(first_period) * per_period));
    const auto n = static_cast<std::size_t>(std::llround(static_cast<double>(n_periods) * per_period));
    out.v.resize(n);
    for (std::size_t i = 0; i < n; ++i)
    {
      // reduce the phase before scaling so whole periods repeat bit-for-bit
      const double cycles = static_cast<double>(out.first_index + static_cast<std::int64_t>(i)) * cycles_per_sample;
      const double phase = cycles - std::floor(cycles);
      out.v[i] = 0.5 * cfg.v_pp * std::cos(2.0 * std::numbers::pi * phase);
    }
    return out;
  }

  struct AvalancheMark
  {
    double time = 0.0;        ///< avalanche onset
    double gate_close = 0.0;  ///< the pulse is cut off here
  };

  /// Avalanche marks for engine events; the sine drive leaves the open half-cycle a quarter period after the peak.
  inline std::vector<AvalancheMark> avalanche_marks(std::span<const EventRecord> events, const GateConfig& gate)
  {
    std::vector<AvalancheMark> marks;
    marks.reserve(events.size());
    for (const auto& e : events) marks.push_back({e.time, gate.center(e.gate_index) + 0.25 * gate.period()});
    return marks;
  }

  /// Feedthrough polynomial of the normalised gate plus a linear-rise, hold-until-close pulse per avalanche.
  inline SampleBuffer device_response(const SampleBuffer& gate, std::span<const AvalancheMark> avalanches, const WaveformConfig& cfg)
  {
    SampleBuffer out = gate;
    const double half = 0.5 * cfg.v_pp;
    for (auto& s : out.v)
    {
      const double x = s / half;
      const double x2 = x * x;
      s = cfg.feedthrough_gain * (x + cfg.a2 * x2 + cfg.a4 * x2 * x2);
    }
    for (std::size_t k = 1; k < avalanches.size(); ++k)
      if (avalanches[k].time < avalanches[k - 1].time) throw std::invalid_argument("device_response: avalanches not time-ordered");
    for (const auto& a : avalanches)
    {
      const auto lo = static_cast<std::int64_t>(std::ceil(a.time * cfg.sample_rate)) - out.first_index;
      const auto hi = static_cast<std::int64_t>(std::ceil(a.gate_close * cfg.sample_rate)) - out.first_index;
      for (std::int64_t i = std::max<std::int64_t>(lo, 0); i < std::min<std::int64_t>(hi, static_cast<std::int64_t>(out.size())); ++i)
      {
        const double dt = out.time(static_cast<std::size_t>(i)) - a.time;
        const double ramp = cfg.avalanche_rise > 0 ? std::min(dt / cfg.avalanche_rise, 1.0) : 1.0;
        out.v[static_cast<std::size_t>(i)] += cfg.avalanche_amp * ramp;
      }
    }
    return out;
  }

  /// Cascade of band-stop sections, starting from rest.
  inline SampleBuffer apply_notch_bank(const SampleBuffer& in, std::span<const NotchSpec> specs)
  {
    if (specs.empty()) throw std::invalid_argument("apply_notch_bank: no notch specified");
    std::vector<Biquad> stages;
    for (const auto& s : specs)
    {
      if (!(s.center > 0 && s.center < 0.5 * in.sample_rate)) throw std::invalid_argument("apply_notch_bank: notch center must lie below Nyquist");
      if (!(s.attenuation_db > 0)) throw std::invalid_argument("apply_notch_bank: attenuation_db must be > 0");
      stages.push_back(Biquad::notch(s, in.sample_rate));
    }
    SampleBuffer out = in;
    for (auto& x : out.v)
      for (auto& st : stages) x = st.step(x);
    return out;
  }

  /// y(t) = x(t) - (1 + mismatch) x(t - delay - skew); fractional delays use linear interpolation,
  /// samples before the buffer start are taken as zero.
  inline SampleBuffer self_difference(const SampleBuffer& in, const SDConfig& sd)
  {
    double shift = (sd.delay + sd.skew) * in.sample_rate;
    if (std::abs(shift - std::round(shift)) < 1e-9) shift = std::round(shift);
    const auto whole = static_cast<std::int64_t>(std::floor(shift));
    const double frac = shift - static_cast<double>(whole);
    const double g = 1.0 + sd.amplitude_mismatch;
    auto at = [&](std::int64_t i) { return i >= 0 && i < static_cast<std::int64_t>(in.size()) ? in.v[static_cast<std::size_t>(i)] : 0.0; };
    SampleBuffer out = in;
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(in.size()); ++i)
    {
      double delayed = at(i - whole);
      if (frac != 0.0) delayed = (1.0 - frac) * delayed + frac * at(i - whole - 1);
      out.v[static_cast<std::size_t>(i)] = in.v[static_cast<std::size_t>(i)] - g * delayed;
    }
    return out;
  }

  inline SampleBuffer amplify(SampleBuffer in, double gain_db)
  {
    const double g = std::pow(10.0, gain_db / 20.0);
    for (auto& x : in.v) x *= g;
    return in;
  }

  inline void add_white_noise(SampleBuffer& buf, double rms, std::uint64_t seed)
  {
    if (rms <= 0) return;
    Philox rng(seed, 0xA0A0);
    for (std::size_t i = 0; i < buf.size(); i += 2)
    {
      const double r = std::sqrt(-2.0 * std::log(rng.uniform_pos()));
      const double th = 2.0 * std::numbers::pi * rng.uniform();
      buf.v[i] += rms * r * std::cos(th);
      if (i + 1 < buf.size()) buf.v[i + 1] += rms * r * std::sin(th);
    }
  }

  /// Half-open sample ranges, relative to the buffer start.
  using GateWindow = std::pair<std::size_t, std::size_t>;

  /// Discriminator window of each gate: one full period starting when the drive enters the open
  /// half-cycle, [peak - T/4, peak + 3T/4).
  inline std::vector<GateWindow> discriminator_windows(const SampleBuffer& buf, double f_g, std::uint64_t first_gate, std::uint64_t n_gates)
  {
    std::vector<GateWindow> w;
    w.reserve(n_gates);
    const double period = 1.0 / f_g;
    auto index = [&](double t) {
      const auto i = static_cast<std::int64_t>(std::ceil(t * buf.sample_rate - 1e-9)) - buf.first_index;
      return static_cast<std::size_t>(std::clamp<std::int64_t>(i, 0, static_cast<std::int64_t>(buf.size())));
    };
    for (std::uint64_t g = first_gate; g < first_gate + n_gates; ++g)
    {
      const double c = static_cast<double>(g) * period;
      w.emplace_back(index(c - 0.25 * period), index(c + 0.75 * period));
    }
    return w;
  }

  /// One flag per window: set iff some sample in it reaches the threshold.
  inline std::vector<bool> discriminate(const SampleBuffer& buf, double threshold, std::span<const GateWindow> windows)
  {
    if (!(threshold > 0)) throw std::invalid_argument("discriminate: threshold must be > 0");
    std::vector<bool> flags(windows.size(), false);
    for (std::size_t g = 0; g < windows.size(); ++g)
      for (std::size_t i = windows[g].first; i < windows[g].second && i < buf.size(); ++i)
        if (buf.v[i] >= threshold)
        {
          flags[g] = true;
          break;
        }
    return flags;
  }

  struct ChainStages
  {
    SampleBuffer gate;
    SampleBuffer device;
    SampleBuffer notched;
    SampleBuffer differenced;
    SampleBuffer output;  ///< discriminator input
  };

  /** @brief Runs the full chain over gates [0, n_gates) preceded by cfg.warmup_periods periods of
      warm-up, and returns every stage cropped to the measured span (which starts a quarter period
      before the peak of gate 0).
  */
  inline ChainStages run_chain(const WaveformConfig& cfg, double f_g, std::uint64_t n_gates, std::span<const AvalancheMark> avalanches)
  {
    cfg.validate(f_g);
    const auto warm = static_cast<std::int64_t>(cfg.warmup_periods);
    ChainStages st;
    // one extra period so the window of the last gate is complete
    st.gate = synth_gate_waveform(cfg, f_g, n_gates + static_cast<std::uint64_t>(warm) + 1, -warm - 1);
    st.device = device_response(st.gate, avalanches, cfg);
    st.notched = cfg.notches.empty() ? st.device : apply_notch_bank(st.device, cfg.notches);
    st.differenced = self_difference(st.notched, cfg.sd);
    SampleBuffer pre_amp = st.differenced;
    add_white_noise(pre_amp, cfg.noise_rms, cfg.noise_seed);
    st.output = amplify(std::move(pre_amp), cfg.amp2_gain_db);

    const double period = 1.0 / f_g;
    const auto begin = static_cast<std::int64_t>(std::ceil(-0.25 * period * cfg.sample_rate - 1e-9)) - st.gate.first_index;
    const auto end = std::min<std::int64_t>(begin + static_cast<std::int64_t>(std::llround(static_cast<double>(n_gates) * period * cfg.sample_rate)),
                                            static_cast<std::int64_t>(st.gate.size()));
    for (SampleBuffer* b : {&st.gate, &st.device, &st.notched, &st.differenced, &st.output})
    {
      b->v = std::vector<double>(b->v.begin() + begin, b->v.begin() + end);
      b->first_index += begin;
    }
    return st;
  }

  /// Gate indices flagged by the discriminator when the engine's events are rendered through the chain.
  inline std::vector<std::uint64_t> detect_with_waveform(std::span<const EventRecord> events, const GateConfig& gate,
                                                         std::uint64_t n_gates, const WaveformConfig& cfg)
  {
    const auto marks = avalanche_marks(events, gate);
    const auto st = run_chain(cfg, gate.f_g, n_gates, marks);
    const auto windows = discriminator_windows(st.output, gate.f_g, 0, n_gates);
    const auto flags = discriminate(st.output, cfg.threshold, windows);
    std::vector<std::uint64_t> out;
    for (std::uint64_t g = 0; g < flags.size(); ++g)
      if (flags[g]) out.push_back(g);
    return out;
  }

  struct RejectionReport
  {
    double pre_notch_background = 0.0;  ///< peak |device output| without avalanches
    double post_notch_background = 0.0;
    double background_residual = 0.0;   ///< peak |discriminator input| without avalanches
    double avalanche_peak = 0.0;        ///< peak of (with avalanche - without) in the avalanche's gate
    double ratio_db = 0.0;
  };

  /// Background-only and single-avalanche runs of the chain; amplitudes at the discriminator input.
  inline RejectionReport measure_rejection(const WaveformConfig& cfg, double f_g, std::uint64_t n_gates = 32)
  {
    const std::uint64_t probe_gate = n_gates / 2;
    const double period = 1.0 / f_g;
    const AvalancheMark mark{probe_gate * period, probe_gate * period + 0.25 * period};
    const auto bg = run_chain(cfg, f_g, n_gates, {});
    const auto av = run_chain(cfg, f_g, n_gates, std::span<const AvalancheMark>(&mark, 1));

    RejectionReport r;
    r.pre_notch_background = bg.device.peak_abs();
    r.post_notch_background = bg.notched.peak_abs();
    r.background_residual = bg.output.peak_abs();
    const auto windows = discriminator_windows(av.output, f_g, probe_gate, 1);
    for (std::size_t i = windows[0].first; i < windows[0].second; ++i)
      r.avalanche_peak = std::max(r.avalanche_peak, av.output.v[i] - bg.output.v[i]);
    r.ratio_db = r.background_residual > 0 ? 20.0 * std::log10(r.avalanche_peak / r.background_residual)
                                           : std::numeric_limits<double>::infinity();
    return r;
  }
}
