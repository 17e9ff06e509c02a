#pragma once

#include <array>
#include <cstdint>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "spadsim/units.hpp"

/** @file spadsim/events.hpp
    @brief Avalanche event records, the count-off rule and accumulated count summaries.
*/

namespace spadsim
{
  enum class Cause : std::uint8_t { photon = 0, dark = 1, afterpulse = 2 };

  inline constexpr std::array<Cause, 3> all_causes{Cause::photon, Cause::dark, Cause::afterpulse};

  inline const char* to_string(Cause c)
  {
    switch (c)
    {
      case Cause::photon: return "photon";
      case Cause::dark: return "dark";
      default: return "afterpulse";
    }
  }

  inline Cause parse_cause(const std::string& s)
  {
    if (s == "photon") return Cause::photon;
    if (s == "dark") return Cause::dark;
    if (s == "afterpulse") return Cause::afterpulse;
    throw std::invalid_argument("unknown avalanche cause '" + s + "'");
  }

  struct EventRecord
  {
    std::uint64_t gate_index = 0;
    double time = 0.0;  ///< seconds since the peak of gate 0
    Cause cause = Cause::photon;
    bool counted = true;
    bool illuminated = false;

    bool operator==(const EventRecord&) const = default;
  };

  /// Streaming form of the count-off rule: an avalanche is counted iff at least
  /// count_off has elapsed since the previous counted one.
  class CountOffFilter
  {
    public:
      explicit CountOffFilter(double count_off) : count_off_(count_off) {}

      bool admit(double time)
      {
        if (has_last_ && time - last_ < count_off_) return false;
        has_last_ = true;
        last_ = time;
        return true;
      }

    private:
      double count_off_;
      double last_ = 0.0;
      bool has_last_ = false;
  };

  /// Re-derives the counted flags of a time-ordered event stream.
  inline std::vector<EventRecord> apply_count_off(std::vector<EventRecord> events, double count_off)
  {
    for (std::size_t i = 1; i < events.size(); ++i)
      if (events[i].time < events[i - 1].time) throw std::invalid_argument("apply_count_off: events are not time-ordered");
    CountOffFilter filter(count_off);
    for (auto& e : events) e.counted = filter.admit(e.time);
    return events;
  }

  struct CountSummary
  {
    double f_g = 0.0;
    std::uint64_t n_gates = 0;
    std::uint64_t illuminated_gates = 0;
    std::uint64_t avalanches = 0;
    std::uint64_t counted = 0;
    std::uint64_t counted_illuminated = 0;
    std::array<std::uint64_t, 3> avalanches_by_cause{};
    std::array<std::uint64_t, 3> counted_by_cause{};

    double duration() const { return f_g > 0 ? static_cast<double>(n_gates) / f_g : 0.0; }
    /// Counted avalanches per second: R_dc for a dark run, R_de under illumination.
    double count_rate() const { return rate(counted); }
    /// Counted avalanches in illuminated gates per second (R_de^c).
    double coincidence_rate() const { return rate(counted_illuminated); }
    double rate(std::uint64_t n) const { return n_gates ? static_cast<double>(n) * f_g / static_cast<double>(n_gates) : 0.0; }

    void record(const EventRecord& e)
    {
      const auto c = static_cast<std::size_t>(e.cause);
      ++avalanches;
      ++avalanches_by_cause[c];
      if (!e.counted) return;
      ++counted;
      ++counted_by_cause[c];
      if (e.illuminated) ++counted_illuminated;
    }

    /// Associative, commutative combination of two runs taken at the same gate frequency.
    CountSummary& merge(const CountSummary& o)
    {
      if (n_gates == 0 && f_g == 0.0) f_g = o.f_g;
      if (o.n_gates != 0 && o.f_g != f_g) throw std::invalid_argument("CountSummary::merge: gate frequencies differ");
      n_gates += o.n_gates;
      illuminated_gates += o.illuminated_gates;
      avalanches += o.avalanches;
      counted += o.counted;
      counted_illuminated += o.counted_illuminated;
      for (std::size_t i = 0; i < 3; ++i)
      {
        avalanches_by_cause[i] += o.avalanches_by_cause[i];
        counted_by_cause[i] += o.counted_by_cause[i];
      }
      return *this;
    }

    bool operator==(const CountSummary&) const = default;
  };

  inline CountSummary merge(CountSummary a, const CountSummary& b) { return a.merge(b); }

  /// Flat key=value record, one pair per line.
  inline void write_summary(std::ostream& os, const CountSummary& s)
  {
    os << "f_g=" << format_exact(s.f_g) << "\n"
       << "n_gates=" << s.n_gates << "\n"
       << "duration=" << format_exact(s.duration()) << "\n"
       << "illuminated_gates=" << s.illuminated_gates << "\n"
       << "avalanches=" << s.avalanches << "\n"
       << "counted=" << s.counted << "\n"
       << "counted_illuminated=" << s.counted_illuminated << "\n"
       << "count_rate=" << format_exact(s.count_rate()) << "\n"
       << "coincidence_rate=" << format_exact(s.coincidence_rate()) << "\n";
    for (auto c : all_causes)
    {
      const auto i = static_cast<std::size_t>(c);
      os << "avalanches." << to_string(c) << "=" << s.avalanches_by_cause[i] << "\n"
         << "counted." << to_string(c) << "=" << s.counted_by_cause[i] << "\n";
    }
  }

  inline CountSummary read_summary(std::istream& is)
  {
    CountSummary s;
    std::string line;
    while (std::getline(is, line))
    {
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw std::invalid_argument("summary line without '=': " + line);
      const std::string key = line.substr(0, eq);
      const std::string value = line.substr(eq + 1);
      auto count = [&] { return static_cast<std::uint64_t>(std::stoull(value)); };
      if (key == "f_g") s.f_g = std::stod(value);
      else if (key == "n_gates") s.n_gates = count();
      else if (key == "illuminated_gates") s.illuminated_gates = count();
      else if (key == "avalanches") s.avalanches = count();
      else if (key == "counted") s.counted = count();
      else if (key == "counted_illuminated") s.counted_illuminated = count();
      else if (key.rfind("avalanches.", 0) == 0) s.avalanches_by_cause[static_cast<std::size_t>(parse_cause(key.substr(11)))] = count();
      else if (key.rfind("counted.", 0) == 0) s.counted_by_cause[static_cast<std::size_t>(parse_cause(key.substr(8)))] = count();
      // derived rates are informational
    }
    return s;
  }

  inline constexpr const char* event_csv_header = "gate_index,time_ns,cause,counted,illuminated";

  inline void write_event_row(std::ostream& os, const EventRecord& e)
  {
    os << e.gate_index << ',' << format_exact(e.time / ns) << ',' << to_string(e.cause) << ','
       << (e.counted ? 1 : 0) << ',' << (e.illuminated ? 1 : 0) << '\n';
  }

  inline void write_events_csv(std::ostream& os, const std::vector<EventRecord>& events)
  {
    os << event_csv_header << '\n';
    for (const auto& e : events) write_event_row(os, e);
  }

  inline std::vector<EventRecord> read_events_csv(std::istream& is)
  {
    std::string line;
    if (!std::getline(is, line) || line != event_csv_header) throw std::invalid_argument("event CSV: unexpected header");
    std::vector<EventRecord> out;
    while (std::getline(is, line))
    {
      if (line.empty()) continue;
      std::istringstream row(line);
      std::string gate, time, cause, counted, illuminated;
      std::getline(row, gate, ',');
      std::getline(row, time, ',');
      std::getline(row, cause, ',');
      std::getline(row, counted, ',');
      std::getline(row, illuminated, ',');
      EventRecord e;
      e.gate_index = std::stoull(gate);
      e.time = std::stod(time) * ns;
      e.cause = parse_cause(cause);
      e.counted = counted == "1";
      e.illuminated = illuminated == "1";
      out.push_back(e);
    }
    return out;
  }
}
