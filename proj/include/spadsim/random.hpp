#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>

/** @file spadsim/random.hpp
    @brief Counter-based Philox4x32-10 generator and the few distributions the simulator draws from.

    All sampling routines are implemented here rather than taken from <random> so that a given
    seed produces the same stream with every standard library.
*/

namespace spadsim
{
  class Philox
  {
    public:
      using result_type = std::uint64_t;

      explicit Philox(std::uint64_t seed = 0, std::uint64_t stream = 0)
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
          stream_(stream) {}

      static constexpr result_type min() { return 0; }
      static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

      /// Independent generator keyed by the same seed on a different stream.
      Philox split(std::uint64_t stream) const
      {
        Philox child = *this;
        child.stream_ = mix(stream_ ^ (stream * 0x9E3779B97F4A7C15ull) ^ 0xD1B54A32D192ED03ull);
        child.counter_ = 0;
        child.have_spare_ = false;
        return child;
      }

      /// Random-access output: the i-th 64-bit word of this stream, without advancing it.
      result_type at(std::uint64_t index) const
      {
        const auto block = generate(index / 2);
        return index % 2 == 0 ? combine(block[0], block[1]) : combine(block[2], block[3]);
      }

      result_type operator()()
      {
        if (have_spare_)
        {
          have_spare_ = false;
          return spare_;
        }
        const auto block = generate(counter_++);
        spare_ = combine(block[2], block[3]);
        have_spare_ = true;
        return combine(block[0], block[1]);
      }

      /// Uniform double in [0, 1) with 53 random bits.
      double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

      /// Uniform double in (0, 1].
      double uniform_pos() { return static_cast<double>(((*this)() >> 11) + 1) * 0x1.0p-53; }

      bool operator==(const Philox&) const = default;

    private:
      static constexpr std::uint32_t M0 = 0xD2511F53u;
      static constexpr std::uint32_t M1 = 0xCD9E8D57u;
      static constexpr std::uint32_t W0 = 0x9E3779B9u;
      static constexpr std::uint32_t W1 = 0xBB67AE85u;

      static std::uint64_t combine(std::uint32_t hi, std::uint32_t lo)
      {
        return (static_cast<std::uint64_t>(hi) << 32) | lo;
      }

      static std::uint64_t mix(std::uint64_t z)
      {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
      }

      std::array<std::uint32_t, 4> generate(std::uint64_t block) const
      {
        std::array<std::uint32_t, 4> ctr{static_cast<std::uint32_t>(block), static_cast<std::uint32_t>(block >> 32),
                                         static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)};
        std::array<std::uint32_t, 2> key = key_;
        for (int round = 0; round < 10; ++round)
        {
          const std::uint64_t p0 = static_cast<std::uint64_t>(M0) * ctr[0];
          const std::uint64_t p1 = static_cast<std::uint64_t>(M1) * ctr[2];
          ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<std::uint32_t>(p1),
                 static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<std::uint32_t>(p0)};
          key[0] += W0;
          key[1] += W1;
        }
        return ctr;
      }

      std::array<std::uint32_t, 2> key_;
      std::uint64_t stream_;
      std::uint64_t counter_ = 0;
      std::uint64_t spare_ = 0;
      bool have_spare_ = false;
  };

  /// Exponential variate with the given mean.
  inline double sample_exponential(Philox& rng, double mean) { return -mean * std::log(rng.uniform_pos()); }

  /// Poisson variate by CDF inversion; intended for small means (trap counts).
  inline unsigned sample_poisson(Philox& rng, double mean)
  {
    if (mean <= 0.0) return 0;
    const double u = rng.uniform();
    double term = std::exp(-mean);
    double cdf = term;
    unsigned n = 0;
    while (u >= cdf && n < 10000)
    {
      ++n;
      term *= mean / n;
      cdf += term;
      if (term == 0.0) break;
    }
    return n;
  }

  /** @brief Number of failed Bernoulli(p) trials before the first success.

      Returns max() of uint64 when p == 0.
  */
  inline std::uint64_t sample_geometric(Philox& rng, double p)
  {
    constexpr auto never = std::numeric_limits<std::uint64_t>::max();
    if (p <= 0.0) return never;
    if (p >= 1.0) return 0;
    const double g = std::floor(std::log(rng.uniform_pos()) / std::log1p(-p));
    return g >= 1.8e19 ? never : static_cast<std::uint64_t>(g);
  }

  /// Deterministic per-index seed derived from a master seed.
  inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index)
  {
    return Philox(master, 0x5EEDull).at(index);
  }
}
