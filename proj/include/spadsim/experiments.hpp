#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <fstream>
#include <functional>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "spadsim/engine.hpp"
#include "spadsim/estimators.hpp"
#include "spadsim/fit.hpp"
#include "spadsim/random.hpp"

/** @file spadsim/experiments.hpp
    @brief Scenario drivers: delay scan, efficiency sweep, mean-photon-number sweep, the published
    parameter table, and afterpulse-model calibration.

    Sweep point i uses seed derive_seed(master_seed, i) (efficiency sweeps use 2i for the
    illuminated run and 2i+1 for the dark run), so results do not depend on the job count.
*/

namespace spadsim
{
  enum class SweepVariable { delay, eta_true, mu };

  struct SweepSpec
  {
    SweepVariable variable = SweepVariable::delay;
    std::vector<double> values;
    Scenario base;
    std::uint64_t n_gates = 100'000'000;
    std::uint64_t master_seed = 1;
    /// Optional per-point ground truth for efficiency sweeps; empty means constant.
    std::vector<double> dark_per_ns_values;
    std::vector<double> mean_traps_values;

    void validate() const
    {
      detail::require(!values.empty(), "sweep.values non-empty");
      detail::require(std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); }), "sweep.values finite");
      detail::require(n_gates >= 1, "sweep.n_gates >= 1");
      detail::require(dark_per_ns_values.empty() || dark_per_ns_values.size() == values.size(), "sweep.dark_per_ns_values matches values");
      detail::require(mean_traps_values.empty() || mean_traps_values.size() == values.size(), "sweep.mean_traps_values matches values");
    }
  };

  struct CurveResult
  {
    std::string x_label;
    std::string y_label;
    std::vector<CurvePoint> points;
    std::vector<std::uint64_t> seeds;
    std::optional<GaussianFit> fit;
    std::string fit_error;  ///< set when a requested fit failed
    double half_max_width = std::nan("");
  };

  /// Runs fn(0..n-1) on up to @p jobs threads; results keep index order.
  template <class T, class Fn>
  std::vector<T> parallel_map(std::size_t n, unsigned jobs, Fn&& fn)
  {
    std::vector<T> out(n);
    if (jobs <= 1 || n <= 1)
    {
      for (std::size_t i = 0; i < n; ++i) out[i] = fn(i);
      return out;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(n);
    auto worker = [&] {
      for (std::size_t i = next++; i < n; i = next++)
      {
        try { out[i] = fn(i); }
        catch (...) { errors[i] = std::current_exception(); }
      }
    };
    std::vector<std::thread> pool;
    for (unsigned j = 0; j < std::min<std::size_t>(jobs, n); ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
    return out;
  }

  inline CurvePoint rate_point(double x, std::uint64_t count, const CountSummary& s)
  {
    return {x, s.rate(count), std::sqrt(static_cast<double>(count)) / s.duration(), 0.0};
  }

  /** @brief Counted coincidence rate versus laser delay, with a gaussian fit for the FWHM.

      A failed fit leaves the raw points in place and records the reason in fit_error.
  */
  inline CurveResult run_delay_scan(const SweepSpec& spec, unsigned jobs = 1)
  {
    spec.validate();
    detail::require(spec.variable == SweepVariable::delay, "sweep.variable == delay");
    detail::require(spec.base.source.has_value(), "delay scan needs a photon source");
    const auto [lo, hi] = std::minmax_element(spec.values.begin(), spec.values.end());
    detail::require(*hi - *lo >= 2.0 * spec.base.gate.delta_t, "delay span >= 2 * gate.width");

    CurveResult out;
    out.x_label = "delay_s";
    out.y_label = "coincidence_rate_hz";
    for (std::size_t i = 0; i < spec.values.size(); ++i) out.seeds.push_back(derive_seed(spec.master_seed, i));
    out.points = parallel_map<CurvePoint>(spec.values.size(), jobs, [&](std::size_t i) {
      Scenario s = spec.base;
      s.source->delay = spec.values[i];
      const auto summary = count_gates(s, spec.n_gates, out.seeds[i]);
      return rate_point(spec.values[i], summary.counted_illuminated, summary);
    });
    std::sort(out.points.begin(), out.points.end(), [](auto& a, auto& b) { return a.x < b.x; });
    try
    {
      out.half_max_width = half_max_width(out.points);
      out.fit = fit_gaussian(out.points);
    }
    catch (const fit_error& e)
    {
      out.fit.reset();
      out.fit_error = e.what();
    }
    return out;
  }

  struct EfficiencyPoint
  {
    double eta_true = 0.0;
    CountSummary dark;
    CountSummary light;
    CharacterizationReport report;
  };

  struct EfficiencySweepResult
  {
    CurveResult dark_vs_eta;        ///< P_dc^ns versus estimated efficiency
    CurveResult afterpulse_vs_eta;  ///< P_ap^ns versus estimated efficiency
    std::vector<EfficiencyPoint> points;
  };

  /// Illuminated and dark runs per efficiency point, reduced with every estimator.
  inline EfficiencySweepResult run_efficiency_sweep(const SweepSpec& spec, unsigned jobs = 1)
  {
    spec.validate();
    detail::require(spec.variable == SweepVariable::eta_true, "sweep.variable == eta_true");
    detail::require(spec.base.source.has_value() && spec.base.source->mu > 0, "efficiency sweep needs mu > 0");
    detail::require(spec.base.source->divider >= 2, "efficiency sweep needs source.divider >= 2");

    EfficiencySweepResult out;
    out.dark_vs_eta = {"eta", "p_dc_per_ns", {}, {}, {}, {}, std::nan("")};
    out.afterpulse_vs_eta = {"eta", "p_ap_per_ns", {}, {}, {}, {}, std::nan("")};
    std::vector<std::uint64_t> seeds;
    for (std::size_t i = 0; i < 2 * spec.values.size(); ++i) seeds.push_back(derive_seed(spec.master_seed, i));

    const MeasurementSetup setup{spec.base.source->mu, spec.base.source->divider, spec.base.gate.delta_t};
    out.points = parallel_map<EfficiencyPoint>(spec.values.size(), jobs, [&](std::size_t i) {
      Scenario s = spec.base;
      s.detector.eta = spec.values[i];
      if (!spec.dark_per_ns_values.empty()) s.detector.p_dc_ns = spec.dark_per_ns_values[i];
      if (!spec.mean_traps_values.empty()) s.detector.afterpulse.mean_traps = spec.mean_traps_values[i];
      EfficiencyPoint p;
      p.eta_true = spec.values[i];
      p.light = count_gates(s, spec.n_gates, seeds[2 * i]);
      p.dark = count_gates(s.dark(), spec.n_gates, seeds[2 * i + 1]);
      p.report = characterize(p.dark, p.light, setup);
      return p;
    });
    for (const auto& p : out.points)
    {
      out.dark_vs_eta.points.push_back({p.report.eta.value, p.report.p_dc_ns.value, p.report.p_dc_ns.error, p.report.eta.error});
      out.afterpulse_vs_eta.points.push_back({p.report.eta.value, p.report.p_ap_ns.value, p.report.p_ap_ns.error, p.report.eta.error});
    }
    out.dark_vs_eta.seeds = out.afterpulse_vs_eta.seeds = seeds;
    return out;
  }

  struct MuSweepResult
  {
    CurveResult coincidence;  ///< R_de^c versus mu
    CurveResult detection;    ///< R_de versus mu
  };

  inline MuSweepResult run_mu_sweep(const SweepSpec& spec, unsigned jobs = 1)
  {
    spec.validate();
    detail::require(spec.variable == SweepVariable::mu, "sweep.variable == mu");
    detail::require(spec.base.source.has_value(), "mu sweep needs a photon source");
    detail::require(std::all_of(spec.values.begin(), spec.values.end(), [](double v) { return v > 0; }), "sweep mu values > 0");

    MuSweepResult out;
    out.coincidence.x_label = out.detection.x_label = "mu";
    out.coincidence.y_label = "coincidence_rate_hz";
    out.detection.y_label = "detection_rate_hz";
    for (std::size_t i = 0; i < spec.values.size(); ++i) out.coincidence.seeds.push_back(derive_seed(spec.master_seed, i));
    out.detection.seeds = out.coincidence.seeds;
    const auto summaries = parallel_map<CountSummary>(spec.values.size(), jobs, [&](std::size_t i) {
      Scenario s = spec.base;
      s.source->mu = spec.values[i];
      return count_gates(s, spec.n_gates, out.coincidence.seeds[i]);
    });
    for (std::size_t i = 0; i < summaries.size(); ++i)
    {
      out.coincidence.points.push_back(rate_point(spec.values[i], summaries[i].counted_illuminated, summaries[i]));
      out.detection.points.push_back(rate_point(spec.values[i], summaries[i].counted, summaries[i]));
    }
    return out;
  }

  /// Every gate illuminated with a saturating pulse; the counted rate is limited only by count-off.
  inline CountSummary run_continuous_illumination(Scenario s, std::uint64_t n_gates, std::uint64_t seed, double mu = 1e6)
  {
    PhotonSource src = s.source.value_or(PhotonSource{});
    src.divider = 1;
    src.mu = mu;
    s.source = src;
    return count_gates(s, n_gates, seed);
  }

  // --- published parameter table ------------------------------------------------------------

  struct Table1Row
  {
    std::string name;
    double temperature_c = 0.0;
    double f_g = 0.0;
    double eta = 0.0;
    double p_dc_ns = 0.0;
    double delta_t = 0.0;
    double p_ap = 0.0;
    double r_de = 0.0;
    double p_ap_ns = 0.0;
    double deadtime = 0.0;
  };

  struct Table1Comparison
  {
    Table1Row row;
    double p_ap_ns = 0.0;        ///< recomputed from P_ap, f_g, delta_t, R_de
    double deviation = 0.0;      ///< (recomputed - published) / published
    double duty_cycle = 0.0;
    double p_dc_gate = 0.0;      ///< published P_dc^ns times delta_t
    bool consistent = true;
  };

  /// Reads the reference table: header row then one row per system, SI units.
  inline std::vector<Table1Row> parse_table1_csv(std::istream& is)
  {
    std::vector<Table1Row> rows;
    std::string line;
    bool header = true;
    while (std::getline(is, line))
    {
      if (line.empty() || line[0] == '#') continue;
      if (header)
      {
        header = false;
        continue;
      }
      std::istringstream ss(line);
      std::vector<std::string> cols;
      for (std::string c; std::getline(ss, c, ',');) cols.push_back(c);
      if (cols.size() != 10) throw std::invalid_argument("table1 row needs 10 columns: " + line);
      Table1Row r;
      r.name = cols[0];
      double* fields[] = {&r.temperature_c, &r.f_g, &r.eta, &r.p_dc_ns, &r.delta_t, &r.p_ap, &r.r_de, &r.p_ap_ns, &r.deadtime};
      for (std::size_t i = 0; i < 9; ++i) *fields[i] = std::stod(cols[i + 1]);
      rows.push_back(r);
    }
    return rows;
  }

  inline std::vector<Table1Row> load_table1(const std::string& path)
  {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open reference table " + path);
    return parse_table1_csv(in);
  }

  inline std::string default_table1_path() { return std::string(SPADSIM_DATA_DIR) + "/table1_reference.csv"; }

  /// Recomputes P_ap^ns per row; rows deviating by more than @p tolerance are marked inconsistent.
  inline std::vector<Table1Comparison> reproduce_table1(const std::vector<Table1Row>& rows, double tolerance = 0.25)
  {
    std::vector<Table1Comparison> out;
    for (const auto& r : rows)
    {
      detail::require(r.f_g > 0 && r.delta_t > 0 && r.r_de > 0 && r.p_ap > 0, "table row parameters positive");
      Table1Comparison c;
      c.row = r;
      c.p_ap_ns = afterpulse_per_ns(r.p_ap, r.f_g, r.delta_t, r.r_de);
      c.deviation = (c.p_ap_ns - r.p_ap_ns) / r.p_ap_ns;
      c.duty_cycle = duty_cycle(r.f_g, r.delta_t);
      c.p_dc_gate = dark_prob_per_gate(r.p_dc_ns, r.delta_t);
      c.consistent = std::abs(c.deviation) <= tolerance;
      out.push_back(c);
    }
    return out;
  }

  inline constexpr const char* table1_csv_header = "system,f_g_hz,delta_t_s,p_ap,r_de_hz,p_ap_ns_published,p_ap_ns_computed,relative_deviation,duty_cycle,p_dc_gate,status";

  inline void write_table1_csv(std::ostream& os, const std::vector<Table1Comparison>& rows)
  {
    os << table1_csv_header << '\n';
    for (const auto& c : rows)
      os << c.row.name << ',' << format_exact(c.row.f_g) << ',' << format_exact(c.row.delta_t) << ',' << format_exact(c.row.p_ap) << ','
         << format_exact(c.row.r_de) << ',' << format_exact(c.row.p_ap_ns) << ',' << format_exact(c.p_ap_ns) << ','
         << format_exact(c.deviation) << ',' << format_exact(c.duty_cycle) << ',' << format_exact(c.p_dc_gate) << ','
         << (c.consistent ? "consistent" : "formula-inconsistent") << '\n';
  }

  // --- afterpulse calibration ---------------------------------------------------------------

  struct CalibrationResult
  {
    double mean_traps = 0.0;
    double achieved_p_ap = 0.0;
    double p_ap_error = 0.0;
    int evaluations = 0;
  };

  /// Measured excess-count afterpulse probability for a scenario (illuminated + dark run).
  inline Estimate measured_afterpulse_prob(const Scenario& s, std::uint64_t n_gates, std::uint64_t seed)
  {
    const auto light = count_gates(s, n_gates, derive_seed(seed, 0));
    const auto dark = count_gates(s.dark(), n_gates, derive_seed(seed, 1));
    return characterize(dark, light, {s.source->mu, s.source->divider, s.gate.delta_t}).p_ap;
  }

  /** @brief Finds mean_traps so the simulated afterpulse probability equals @p target.

      Bisection with common random numbers (every evaluation reuses the same seeds), which keeps
      the noisy objective close to monotone. trigger_prob and the detrapping lifetime are held fixed.
  */
  inline CalibrationResult calibrate_afterpulse(Scenario s, double target, std::uint64_t n_gates, std::uint64_t seed,
                                                double tolerance = 1e-4)
  {
    s.validate();
    detail::require(s.source && s.source->mu > 0 && s.source->divider >= 2, "calibration needs an illuminated scenario with divider >= 2");
    detail::require(target > 0, "calibration target > 0");
    auto eval = [&](double m) {
      s.detector.afterpulse.mean_traps = m;
      return measured_afterpulse_prob(s, n_gates, seed);
    };
    CalibrationResult res;
    double lo = 0.0;
    const double y1 = first_order_afterpulse_yield({1.0, s.detector.afterpulse.detrap_lifetime, s.detector.afterpulse.trigger_prob}, s.gate);
    detail::require(y1 > 0, "afterpulse model cannot produce afterpulses");
    double hi = 2.0 * target / y1;
    while (eval(hi).value < target)
    {
      ++res.evaluations;
      lo = hi;
      hi *= 2.0;
      detail::require(hi < 1e6, "calibration target unreachable");
    }
    while (hi - lo > tolerance)
    {
      const double mid = 0.5 * (lo + hi);
      ++res.evaluations;
      (eval(mid).value < target ? lo : hi) = mid;
    }
    res.mean_traps = 0.5 * (lo + hi);
    const auto e = eval(res.mean_traps);
    res.achieved_p_ap = e.value;
    res.p_ap_error = e.error;
    return res;
  }

  // --- curve output ---------------------------------------------------------------------------

  inline void write_curve_csv(std::ostream& os, const CurveResult& c)
  {
    os << "x,y,y_err\n";
    for (const auto& p : c.points) os << format_exact(p.x) << ',' << format_exact(p.y) << ',' << format_exact(p.y_err) << '\n';
  }
}
