#include <cmath>
#include <stdexcept>

#include <gtest/gtest.h>

#include "slp/harness.hpp"

namespace {

using slp::Scheme;
using slp::ScenarioConfig;

ScenarioConfig small(int k, int m) {
  ScenarioConfig cfg;
  cfg.K = cfg.N = k;
  cfg.M = m;
  cfg.n_channels = 40;
  cfg.n_slots = 10;
  cfg.sinr_grid_db = {0, 4, 8};
  cfg.seed = 12345;
  return cfg;
}

TEST(Config, Validation) {
  auto cfg = small(2, 4);
  EXPECT_NO_THROW(cfg.validate());
  cfg.N = 1;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = small(2, 4);
  cfg.sinr_grid_db.clear();
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = small(2, 4);
  cfg.sigma = {1.0};
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = small(2, 4);
  cfg.n_slots = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = small(2, 4);
  cfg.M = 2;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(ParallelFor, PropagatesExceptions) {
  EXPECT_THROW(slp::parallel_for(100, 4, [](std::size_t i) {
                 if (i == 37) throw std::runtime_error("boom");
               }),
               std::runtime_error);
}

void expect_same_values(const std::vector<slp::SweepRecord>& a, const std::vector<slp::SweepRecord>& b) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].scheme, b[i].scheme);
    EXPECT_EQ(a[i].sinr_db, b[i].sinr_db);
    EXPECT_EQ(a[i].mean_power_dbw, b[i].mean_power_dbw);
    EXPECT_EQ(a[i].linear_mean_power_dbw, b[i].linear_mean_power_dbw);
    if (std::isnan(a[i].accuracy_mean)) {
      EXPECT_TRUE(std::isnan(b[i].accuracy_mean));
    } else {
      EXPECT_EQ(a[i].accuracy_mean, b[i].accuracy_mean);
    }
    EXPECT_EQ(a[i].n_samples, b[i].n_samples);
  }
}

TEST(PowerSweep, DeterministicAcrossWorkerCounts) {
  auto cfg = small(4, 4);
  cfg.threads = 1;
  const auto serial = slp::run_power_sweep(cfg);
  cfg.threads = 3;
  const auto parallel = slp::run_power_sweep(cfg);
  expect_same_values(serial, parallel);
  cfg.seed += 1;
  EXPECT_NE(slp::run_power_sweep(cfg)[0].mean_power_dbw, serial[0].mean_power_dbw);
}

TEST(PowerSweep, ShiftsExactlyWithThresholdAndIsOrdered) {
  const auto cfg = small(4, 8);
  const auto rec = slp::run_power_sweep(cfg);
  ASSERT_EQ(rec.size(), 9u);
  for (std::size_t s = 0; s < 3; ++s) {
    for (std::size_t g = 1; g < 3; ++g) {
      const auto& lo = rec[(g - 1) * 3 + s];
      const auto& hi = rec[g * 3 + s];
      EXPECT_GT(hi.mean_power_dbw, lo.mean_power_dbw);
      // u scales with sqrt(gamma) for every scheme, so dB curves shift by the grid step.
      EXPECT_NEAR(hi.mean_power_dbw - lo.mean_power_dbw, hi.sinr_db - lo.sinr_db, 1e-9);
      EXPECT_NEAR(hi.linear_mean_power_dbw - lo.linear_mean_power_dbw, hi.sinr_db - lo.sinr_db, 1e-9);
    }
  }
  for (std::size_t g = 0; g < 3; ++g) {
    const auto& zf = rec[g * 3 + 0];
    const auto& cf = rec[g * 3 + 1];
    const auto& opt = rec[g * 3 + 2];
    EXPECT_EQ(zf.scheme, Scheme::ZFBF);
    EXPECT_LE(opt.mean_power_dbw, cf.mean_power_dbw + 1e-12);
    EXPECT_LE(cf.mean_power_dbw, zf.mean_power_dbw + 1e-12);
    EXPECT_TRUE(std::isnan(zf.accuracy_mean));
    EXPECT_GE(cf.accuracy_mean, 0.0);
    EXPECT_LE(cf.accuracy_mean, 1.0);
    EXPECT_EQ(opt.n_capped, 0u);
    EXPECT_EQ(cf.n_samples, 400u);
  }
}

TEST(Accuracy, TwoByTwoQpskIsHigh) {
  auto cfg = small(2, 4);
  cfg.n_channels = 200;
  const auto r = slp::run_accuracy(cfg);
  EXPECT_EQ(r.sinr_db, 3.0);
  EXPECT_EQ(r.n_samples, 2000u);
  EXPECT_GE(r.accuracy_mean, 0.93);
}

TEST(Accuracy, NonNegativeVSlotIsPerfect) {
  slp::CounterRng rng(5);
  const auto qpsk = slp::Constellation::psk(4);
  for (;;) {
    const auto h = slp::sample_channel(2, 2, rng);
    const std::vector<int> sym{static_cast<int>(rng() % 4), static_cast<int>(rng() % 4)};
    const auto slot = slp::build_slot(h, qpsk, sym, 1.0, 2.0);
    if (slot.v.minCoeff() < 0.0) continue;
    const auto opt = slp::opt_slp(slot);
    EXPECT_DOUBLE_EQ(slp::active_set_accuracy(slp::predicted_inactive(slot.v),
                                              slp::optimal_inactive(opt.delta, slp::active_tolerance(slot.v))),
                     1.0);
    break;
  }
}

TEST(Timing, ReportsEverySchemeWithPositiveTimes) {
  auto cfg = small(2, 4);
  cfg.n_channels = 5;
  const auto t = slp::run_timing(cfg);
  ASSERT_EQ(t.size(), 3u);
  for (const auto& r : t) {
    EXPECT_GT(r.median_ms_per_slot, 0.0);
    EXPECT_GT(r.mean_ms_per_slot, 0.0);
    EXPECT_GT(r.n_samples, 0u);
  }
  EXPECT_LT(t[0].median_ms_per_slot, t[1].median_ms_per_slot);
}

TEST(Ser, ClosedFormQpsk) {
  EXPECT_DOUBLE_EQ(slp::qpsk_ser(0.0), 0.75);
  EXPECT_NEAR(slp::q_function(1.0), 0.15865525393145707, 1e-15);
  EXPECT_LT(slp::qpsk_ser(slp::db_to_linear(12)), 1e-3);
}

TEST(Ser, NoiseFreeIsErrorFree) {
  auto cfg = small(4, 8);
  const auto rec = slp::run_ser(cfg, 0.0);
  for (const auto& r : rec) EXPECT_EQ(r.ser, 0.0) << slp::scheme_name(r.scheme);
}

TEST(Ser, ZeroForcingMatchesSingleUserQpsk) {
  auto cfg = small(2, 4);
  cfg.n_channels = 500;
  cfg.n_slots = 20;
  cfg.schemes = {Scheme::ZFBF, Scheme::CF_SLP};
  const auto rec = slp::run_ser(cfg);
  for (std::size_t g = 0; g < cfg.sinr_grid_db.size(); ++g) {
    const auto& zf = rec[2 * g];
    const auto& cf = rec[2 * g + 1];
    const double expected = slp::qpsk_ser(slp::db_to_linear(zf.sinr_db));
    const double se = std::sqrt(expected * (1 - expected) / static_cast<double>(zf.n_symbols));
    EXPECT_NEAR(zf.ser, expected, 4 * se) << zf.sinr_db << " dB";
    EXPECT_LE(cf.ser, zf.ser + 3 * zf.std_err);
  }
}

TEST(Verification, AllPropertiesHoldOnSmallRun) {
  auto cfg = small(4, 4);
  for (const auto& c : slp::run_verification(cfg)) {
    EXPECT_TRUE(c.passed) << c.name << " worst=" << c.worst;
  }
}

}  // namespace
