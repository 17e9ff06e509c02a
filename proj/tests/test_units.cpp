#include <gtest/gtest.h>

#include "spadsim/units.hpp"

using namespace spadsim;

TEST(Units, ParsesSiPrefixes)
{
  EXPECT_EQ(parse_quantity("921 MHz", Dimension::frequency), 921e6);
  EXPECT_EQ(parse_quantity("154ps", Dimension::time), 154e-12);
  EXPECT_EQ(parse_quantity("10 ns", Dimension::time), 10e-9);
  EXPECT_EQ(parse_quantity("1 us", Dimension::time), 1e-6);
  EXPECT_EQ(parse_quantity("1 µs", Dimension::time), 1e-6);
  EXPECT_EQ(parse_quantity("1.25 GHz", Dimension::frequency), 1.25e9);
  EXPECT_EQ(parse_quantity("12 V", Dimension::voltage), 12.0);
  EXPECT_EQ(parse_quantity("2 mV", Dimension::voltage), 2e-3);
  EXPECT_EQ(parse_quantity("0.5", Dimension::dimensionless), 0.5);
}

TEST(Units, PercentIsExact)
{
  EXPECT_EQ(parse_quantity("9.3 %", Dimension::dimensionless), 0.093);
  EXPECT_EQ(parse_quantity("14.2%", Dimension::dimensionless), 0.142);
}

TEST(Units, BareNumbersAreBaseUnits)
{
  EXPECT_EQ(parse_quantity("1.54e-10", Dimension::time), 1.54e-10);
  EXPECT_EQ(parse_quantity("921e6 Hz", Dimension::frequency), 921e6);
}

TEST(Units, RejectsWrongDimensionAndGarbage)
{
  EXPECT_THROW(parse_quantity("921 MHz", Dimension::time), std::invalid_argument);
  EXPECT_THROW(parse_quantity("12 ps", Dimension::voltage), std::invalid_argument);
  EXPECT_THROW(parse_quantity("fast", Dimension::time), std::invalid_argument);
  EXPECT_THROW(parse_quantity("", Dimension::time), std::invalid_argument);
  EXPECT_THROW(parse_quantity("3 Xs", Dimension::time), std::invalid_argument);
}

TEST(Units, FormatRoundTrips)
{
  for (double v : {921e6, 154e-12, 0.093, 1.0 / 3.0, 2.8e-6, 1e-300})
  {
    EXPECT_EQ(parse_quantity(format_exact(v), Dimension::dimensionless), v);
    EXPECT_EQ(parse_quantity(format_quantity(v, Dimension::time), Dimension::time), v);
  }
}
