#pragma once

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <initializer_list>
#include <limits>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "spadsim/engine.hpp"
#include "spadsim/experiments.hpp"
#include "spadsim/units.hpp"
#include "spadsim/waveform.hpp"

/** @file spadsim/config.hpp
    @brief JSON run configuration: parsing with unit-suffixed quantities, exhaustive validation,
    and a canonical echo that re-parses to the same RunConfig.

    Quantities may be written as numbers in SI base units or as strings with a unit,
    e.g. "921 MHz", "154 ps", "9.3 %". The echo writes every quantity as "<exact> <base unit>".
*/

namespace spadsim
{
  /// Configuration error; syntax errors carry a 1-based line and column.
  class config_error : public std::runtime_error
  {
    public:
      config_error(const std::string& msg, int line = 0, int column = 0)
        : std::runtime_error(line ? "line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + msg : msg),
          line_(line), column_(column) {}
      int line() const { return line_; }
      int column() const { return column_; }

    private:
      int line_;
      int column_;
  };

  struct RunConfig
  {
    Scenario scenario;
    WaveformConfig waveform;
    std::uint64_t simulate_gates = 100'000'000;

    std::vector<double> delays;  ///< seconds
    std::uint64_t delay_scan_gates = 10'000'000;

    std::vector<double> efficiencies;
    std::vector<double> dark_per_ns_values;
    std::vector<double> mean_traps_values;
    std::uint64_t efficiency_sweep_gates = 100'000'000;

    std::vector<double> mu_values;
    std::uint64_t mu_sweep_gates = 100'000'000;
    std::uint64_t continuous_gates = 10'000'000;

    double calibration_target = 0.034;
    std::uint64_t calibration_gates = 1'000'000'000;

    std::string table1_reference;  ///< empty: bundled reference data
    double table1_tolerance = 0.25;

    std::uint32_t waveform_gates = 24;

    std::uint64_t master_seed = 1;
    std::string output_dir = "spadsim-out";

    static std::vector<double> default_delays()
    {
      std::vector<double> d;
      for (int i = -20; i <= 20; ++i) d.push_back(i * 20.0 / 1e12);
      return d;
    }
    static std::vector<double> default_efficiencies() { return {0.03, 0.05, 0.07, 0.093, 0.12, 0.15}; }
    static std::vector<double> default_mu_values()
    {
      return {0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1, 2, 5, 10, 20, 50, 100, 200, 500, 1000};
    }

    void validate() const
    {
      scenario.validate();
      waveform.validate(scenario.gate.f_g);
      detail::require(simulate_gates >= 1 && delay_scan_gates >= 1 && efficiency_sweep_gates >= 1 && mu_sweep_gates >= 1 &&
                        continuous_gates >= 1 && calibration_gates >= 1,
                      "n_gates >= 1");
      detail::require(!delays.empty() && !efficiencies.empty() && !mu_values.empty(), "sweep values non-empty");
      for (double d : delays) detail::require(std::abs(d) < 0.5 / scenario.gate.f_g, "|delay_scan.delays| < half a gate period");
      for (double e : efficiencies) detail::require(e >= 0 && e <= 1, "0 <= efficiency_sweep.efficiencies <= 1");
      for (double m : mu_values) detail::require(m > 0 && std::isfinite(m), "mu_sweep.mu > 0");
      detail::require(dark_per_ns_values.empty() || dark_per_ns_values.size() == efficiencies.size(), "efficiency_sweep.dark_per_ns matches efficiencies");
      detail::require(mean_traps_values.empty() || mean_traps_values.size() == efficiencies.size(), "efficiency_sweep.mean_traps matches efficiencies");
      detail::require(calibration_target > 0 && calibration_target < 1, "0 < calibration.target < 1");
      detail::require(table1_tolerance > 0, "table1.tolerance > 0");
      detail::require(waveform_gates >= 2, "waveform.plot_gates >= 2");
      detail::require(!output_dir.empty(), "run.output_dir non-empty");
    }

    bool operator==(const RunConfig&) const = default;

    SweepSpec delay_spec() const { return {SweepVariable::delay, delays, scenario, delay_scan_gates, master_seed, {}, {}}; }
    SweepSpec efficiency_spec() const
    {
      return {SweepVariable::eta_true, efficiencies, scenario, efficiency_sweep_gates, master_seed, dark_per_ns_values, mean_traps_values};
    }
    SweepSpec mu_spec() const { return {SweepVariable::mu, mu_values, scenario, mu_sweep_gates, master_seed, {}, {}}; }
  };

  namespace detail
  {
    using json = nlohmann::json;

    class Section
    {
      public:
        Section(const json& j, std::string path, std::initializer_list<const char*> allowed) : j_(j), path_(std::move(path))
        {
          if (!j_.is_object()) throw config_error(path_ + ": expected an object");
          std::set<std::string> ok(allowed.begin(), allowed.end());
          for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!ok.count(it.key())) throw config_error("unknown key '" + key(it.key()) + "'");
        }

        bool has(const char* k) const { return j_.contains(k); }
        const json& at(const char* k) const { return j_.at(k); }
        std::string key(const std::string& k) const { return path_.empty() ? k : path_ + "." + k; }

        void quantity(const char* k, double& out, Dimension dim) const
        {
          if (has(k)) out = to_quantity(j_.at(k), key(k), dim);
        }
        void quantities(const char* k, std::vector<double>& out, Dimension dim) const
        {
          if (!has(k)) return;
          const auto& a = j_.at(k);
          if (!a.is_array()) throw config_error(key(k) + ": expected an array");
          out.clear();
          for (const auto& v : a) out.push_back(to_quantity(v, key(k), dim));
        }
        void count(const char* k, std::uint64_t& out) const
        {
          if (!has(k)) return;
          const auto& v = j_.at(k);
          double d = 0;
          if (v.is_number_unsigned()) { out = v.get<std::uint64_t>(); return; }
          if (v.is_number()) d = v.get<double>();
          else if (v.is_string()) d = to_quantity(v, key(k), Dimension::dimensionless);
          else throw config_error(key(k) + ": expected a non-negative integer");
          if (!(d >= 0) || d != std::floor(d) || d > 1.8e19) throw config_error(key(k) + ": expected a non-negative integer");
          out = static_cast<std::uint64_t>(d);
        }
        void boolean(const char* k, bool& out) const
        {
          if (!has(k)) return;
          if (!j_.at(k).is_boolean()) throw config_error(key(k) + ": expected true or false");
          out = j_.at(k).get<bool>();
        }
        void text(const char* k, std::string& out) const
        {
          if (!has(k)) return;
          if (!j_.at(k).is_string()) throw config_error(key(k) + ": expected a string");
          out = j_.at(k).get<std::string>();
        }

        static double to_quantity(const json& v, const std::string& where, Dimension dim)
        {
          if (v.is_number()) return v.get<double>();
          if (!v.is_string()) throw config_error(where + ": expected a number or a quantity string");
          try { return parse_quantity(v.get<std::string>(), dim); }
          catch (const std::invalid_argument& e) { throw config_error(where + ": " + e.what()); }
        }

      private:
        const json& j_;
        std::string path_;
    };

    inline std::pair<int, int> line_column(const std::string& text, std::size_t byte)
    {
      int line = 1, col = 1;
      for (std::size_t i = 0; i < byte && i < text.size(); ++i)
      {
        if (text[i] == '\n') { ++line; col = 1; }
        else ++col;
      }
      return {line, col};
    }

    inline std::string q(double v, Dimension d) { return format_quantity(v, d); }

    inline json qs(const std::vector<double>& v, Dimension d)
    {
      json a = json::array();
      for (double x : v) a.push_back(q(x, d));
      return a;
    }
  }

  inline const char* output_dir_env = "SPADSIM_OUTPUT_DIR";

  /// Parses and validates a configuration. Missing keys take defaults; unknown keys are errors.
  inline RunConfig parse_config(const std::string& text)
  {
    using detail::json;
    using detail::Section;
    json root;
    try
    {
      root = json::parse(text);
    }
    catch (const json::parse_error& e)
    {
      const auto [line, col] = detail::line_column(text, e.byte == 0 ? 0 : e.byte - 1);
      std::string msg = e.what();
      const auto pos = msg.find("syntax error");
      throw config_error(pos == std::string::npos ? msg : msg.substr(pos), line, col);
    }

    RunConfig c;
    c.efficiencies = RunConfig::default_efficiencies();
    c.delays = RunConfig::default_delays();
    c.mu_values = RunConfig::default_mu_values();
    if (const char* env = std::getenv(output_dir_env); env && *env) c.output_dir = env;

    const Section top(root, "", {"gate", "source", "detector", "waveform", "simulate", "delay_scan", "efficiency_sweep", "mu_sweep",
                                 "calibration", "table1", "run"});
    auto& sc = c.scenario;
    if (top.has("gate"))
    {
      const Section s(top.at("gate"), "gate", {"frequency", "width", "profile", "count_off"});
      s.quantity("frequency", sc.gate.f_g, Dimension::frequency);
      s.quantity("width", sc.gate.delta_t, Dimension::time);
      s.quantity("count_off", sc.gate.count_off, Dimension::time);
      std::string profile = to_string(sc.gate.profile);
      s.text("profile", profile);
      sc.gate.profile = parse_gate_profile(profile);
    }
    if (top.has("source"))
    {
      if (top.at("source").is_null()) sc.source.reset();
      else
      {
        const Section s(top.at("source"), "source", {"mu", "divider", "delay", "pulse_width", "convolve_pulse"});
        auto& src = *sc.source;
        s.quantity("mu", src.mu, Dimension::dimensionless);
        std::uint64_t k = src.divider;
        s.count("divider", k);
        if (k == 0 || k > 0xFFFFFFFFull) throw invalid_config("source.divider >= 1");
        src.divider = static_cast<std::uint32_t>(k);
        s.quantity("delay", src.delay, Dimension::time);
        s.quantity("pulse_width", src.pulse_width, Dimension::time);
        s.boolean("convolve_pulse", src.convolve_pulse);
      }
    }
    if (top.has("detector"))
    {
      const Section s(top.at("detector"), "detector", {"efficiency", "dark_per_ns", "afterpulse"});
      s.quantity("efficiency", sc.detector.eta, Dimension::dimensionless);
      s.quantity("dark_per_ns", sc.detector.p_dc_ns, Dimension::dimensionless);
      if (s.has("afterpulse"))
      {
        auto& ap = sc.detector.afterpulse;
        if (s.at("afterpulse").is_null()) ap = AfterpulseModel::disabled();
        else
        {
          const Section a(s.at("afterpulse"), "detector.afterpulse", {"mean_traps", "detrap_lifetime", "trigger_prob"});
          a.quantity("mean_traps", ap.mean_traps, Dimension::dimensionless);
          a.quantity("detrap_lifetime", ap.detrap_lifetime, Dimension::time);
          a.quantity("trigger_prob", ap.trigger_prob, Dimension::dimensionless);
        }
      }
    }

    auto& w = c.waveform;
    w = WaveformConfig::defaults_for(sc.gate.f_g);
    if (top.has("waveform"))
    {
      const Section s(top.at("waveform"), "waveform",
                      {"sample_rate", "v_pp", "v_dc", "feedthrough_gain", "a2", "a4", "avalanche_amp", "avalanche_rise", "amp2_gain_db",
                       "noise_rms", "noise_seed", "threshold", "notches", "sd", "warmup_periods", "plot_gates"});
      s.quantity("sample_rate", w.sample_rate, Dimension::frequency);
      s.quantity("v_pp", w.v_pp, Dimension::voltage);
      s.quantity("v_dc", w.v_dc, Dimension::voltage);
      s.quantity("feedthrough_gain", w.feedthrough_gain, Dimension::voltage);
      s.quantity("a2", w.a2, Dimension::dimensionless);
      s.quantity("a4", w.a4, Dimension::dimensionless);
      s.quantity("avalanche_amp", w.avalanche_amp, Dimension::voltage);
      s.quantity("avalanche_rise", w.avalanche_rise, Dimension::time);
      s.quantity("amp2_gain_db", w.amp2_gain_db, Dimension::dimensionless);
      s.quantity("noise_rms", w.noise_rms, Dimension::voltage);
      s.count("noise_seed", w.noise_seed);
      s.quantity("threshold", w.threshold, Dimension::voltage);
      std::uint64_t warm = w.warmup_periods, plot = c.waveform_gates;
      s.count("warmup_periods", warm);
      s.count("plot_gates", plot);
      w.warmup_periods = static_cast<std::uint32_t>(warm);
      c.waveform_gates = static_cast<std::uint32_t>(plot);
      if (s.has("notches"))
      {
        const auto& arr = s.at("notches");
        if (!arr.is_array()) throw config_error("waveform.notches: expected an array");
        w.notches.clear();
        for (const auto& n : arr)
        {
          const Section ns(n, "waveform.notches[]", {"center", "attenuation_db", "q"});
          NotchSpec spec;
          ns.quantity("center", spec.center, Dimension::frequency);
          if (ns.has("attenuation_db") && ns.at("attenuation_db").is_string() && ns.at("attenuation_db").get<std::string>() == "inf")
            spec.attenuation_db = std::numeric_limits<double>::infinity();
          else ns.quantity("attenuation_db", spec.attenuation_db, Dimension::dimensionless);
          ns.quantity("q", spec.q, Dimension::dimensionless);
          w.notches.push_back(spec);
        }
      }
      if (s.has("sd"))
      {
        const Section sd(s.at("sd"), "waveform.sd", {"delay", "amplitude_mismatch", "skew"});
        sd.quantity("delay", w.sd.delay, Dimension::time);
        sd.quantity("amplitude_mismatch", w.sd.amplitude_mismatch, Dimension::dimensionless);
        sd.quantity("skew", w.sd.skew, Dimension::time);
      }
    }
    if (top.has("simulate"))
    {
      const Section s(top.at("simulate"), "simulate", {"n_gates"});
      s.count("n_gates", c.simulate_gates);
    }
    if (top.has("delay_scan"))
    {
      const Section s(top.at("delay_scan"), "delay_scan", {"delays", "n_gates"});
      s.quantities("delays", c.delays, Dimension::time);
      s.count("n_gates", c.delay_scan_gates);
    }
    if (top.has("efficiency_sweep"))
    {
      const Section s(top.at("efficiency_sweep"), "efficiency_sweep", {"efficiencies", "dark_per_ns", "mean_traps", "n_gates"});
      s.quantities("efficiencies", c.efficiencies, Dimension::dimensionless);
      s.quantities("dark_per_ns", c.dark_per_ns_values, Dimension::dimensionless);
      s.quantities("mean_traps", c.mean_traps_values, Dimension::dimensionless);
      s.count("n_gates", c.efficiency_sweep_gates);
    }
    if (top.has("mu_sweep"))
    {
      const Section s(top.at("mu_sweep"), "mu_sweep", {"mu", "n_gates", "continuous_gates"});
      s.quantities("mu", c.mu_values, Dimension::dimensionless);
      s.count("n_gates", c.mu_sweep_gates);
      s.count("continuous_gates", c.continuous_gates);
    }
    if (top.has("calibration"))
    {
      const Section s(top.at("calibration"), "calibration", {"target", "n_gates"});
      s.quantity("target", c.calibration_target, Dimension::dimensionless);
      s.count("n_gates", c.calibration_gates);
    }
    if (top.has("table1"))
    {
      const Section s(top.at("table1"), "table1", {"reference", "tolerance"});
      s.text("reference", c.table1_reference);
      s.quantity("tolerance", c.table1_tolerance, Dimension::dimensionless);
    }
    if (top.has("run"))
    {
      const Section s(top.at("run"), "run", {"seed", "output_dir"});
      s.count("seed", c.master_seed);
      s.text("output_dir", c.output_dir);
    }
    c.validate();
    return c;
  }

  /// Canonical JSON of a fully resolved configuration.
  inline nlohmann::json config_to_json(const RunConfig& c)
  {
    using detail::json;
    using detail::q;
    using detail::qs;
    const auto& sc = c.scenario;
    json j;
    j["gate"] = {{"frequency", q(sc.gate.f_g, Dimension::frequency)},
                 {"width", q(sc.gate.delta_t, Dimension::time)},
                 {"profile", to_string(sc.gate.profile)},
                 {"count_off", q(sc.gate.count_off, Dimension::time)}};
    if (sc.source)
      j["source"] = {{"mu", q(sc.source->mu, Dimension::dimensionless)},
                     {"divider", sc.source->divider},
                     {"delay", q(sc.source->delay, Dimension::time)},
                     {"pulse_width", q(sc.source->pulse_width, Dimension::time)},
                     {"convolve_pulse", sc.source->convolve_pulse}};
    else j["source"] = nullptr;
    const auto& ap = sc.detector.afterpulse;
    j["detector"] = {{"efficiency", q(sc.detector.eta, Dimension::dimensionless)},
                     {"dark_per_ns", q(sc.detector.p_dc_ns, Dimension::dimensionless)},
                     {"afterpulse",
                      {{"mean_traps", q(ap.mean_traps, Dimension::dimensionless)},
                       {"detrap_lifetime", q(ap.detrap_lifetime, Dimension::time)},
                       {"trigger_prob", q(ap.trigger_prob, Dimension::dimensionless)}}}};
    const auto& w = c.waveform;
    json notches = json::array();
    for (const auto& n : w.notches)
      notches.push_back({{"center", q(n.center, Dimension::frequency)},
                         {"attenuation_db", std::isinf(n.attenuation_db) ? std::string("inf") : q(n.attenuation_db, Dimension::dimensionless)},
                         {"q", q(n.q, Dimension::dimensionless)}});
    j["waveform"] = {{"sample_rate", q(w.sample_rate, Dimension::frequency)},
                     {"v_pp", q(w.v_pp, Dimension::voltage)},
                     {"v_dc", q(w.v_dc, Dimension::voltage)},
                     {"feedthrough_gain", q(w.feedthrough_gain, Dimension::voltage)},
                     {"a2", q(w.a2, Dimension::dimensionless)},
                     {"a4", q(w.a4, Dimension::dimensionless)},
                     {"avalanche_amp", q(w.avalanche_amp, Dimension::voltage)},
                     {"avalanche_rise", q(w.avalanche_rise, Dimension::time)},
                     {"amp2_gain_db", q(w.amp2_gain_db, Dimension::dimensionless)},
                     {"noise_rms", q(w.noise_rms, Dimension::voltage)},
                     {"noise_seed", w.noise_seed},
                     {"threshold", q(w.threshold, Dimension::voltage)},
                     {"notches", notches},
                     {"sd",
                      {{"delay", q(w.sd.delay, Dimension::time)},
                       {"amplitude_mismatch", q(w.sd.amplitude_mismatch, Dimension::dimensionless)},
                       {"skew", q(w.sd.skew, Dimension::time)}}},
                     {"warmup_periods", w.warmup_periods},
                     {"plot_gates", c.waveform_gates}};
    j["simulate"] = {{"n_gates", c.simulate_gates}};
    j["delay_scan"] = {{"delays", qs(c.delays, Dimension::time)}, {"n_gates", c.delay_scan_gates}};
    j["efficiency_sweep"] = {{"efficiencies", qs(c.efficiencies, Dimension::dimensionless)},
                             {"dark_per_ns", qs(c.dark_per_ns_values, Dimension::dimensionless)},
                             {"mean_traps", qs(c.mean_traps_values, Dimension::dimensionless)},
                             {"n_gates", c.efficiency_sweep_gates}};
    j["mu_sweep"] = {{"mu", qs(c.mu_values, Dimension::dimensionless)}, {"n_gates", c.mu_sweep_gates}, {"continuous_gates", c.continuous_gates}};
    j["calibration"] = {{"target", q(c.calibration_target, Dimension::dimensionless)}, {"n_gates", c.calibration_gates}};
    j["table1"] = {{"reference", c.table1_reference}, {"tolerance", q(c.table1_tolerance, Dimension::dimensionless)}};
    j["run"] = {{"seed", c.master_seed}, {"output_dir", c.output_dir}};
    return j;
  }

  inline std::string echo_config(const RunConfig& c) { return config_to_json(c).dump(2) + "\n"; }
}
