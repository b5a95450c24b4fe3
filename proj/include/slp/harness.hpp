#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "slp/channel.hpp"
#include "slp/constellation.hpp"
#include "slp/nnls.hpp"
#include "slp/precoders.hpp"
#include "slp/rng.hpp"

namespace slp {

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double linear_to_db(double x) { return 10.0 * std::log10(x); }

struct ScenarioConfig {
  int K = 2;
  int N = 2;
  int M = 4;
  std::vector<double> sinr_grid_db{0, 2, 4, 6, 8, 10, 12};
  std::vector<double> sigma;  // per-user noise std; empty means all 1
  int n_channels = 200;
  int n_slots = 50;
  std::uint64_t seed = 1;
  std::vector<Scheme> schemes{Scheme::ZFBF, Scheme::CF_SLP, Scheme::OPT_SLP};
  int threads = 0;  // 0: one per hardware thread

  VectorXd sigma_vector() const {
    if (sigma.empty()) return VectorXd::Ones(K);
    return Eigen::Map<const VectorXd>(sigma.data(), static_cast<Eigen::Index>(sigma.size()));
  }

  bool has(Scheme s) const { return std::find(schemes.begin(), schemes.end(), s) != schemes.end(); }

  void validate() const {
    if (K < 1) throw std::invalid_argument("K must be >= 1");
    if (N < K) throw std::invalid_argument("N must be >= K");
    if (M < 4) throw std::invalid_argument("M must be >= 4");
    if (n_channels < 1) throw std::invalid_argument("n_channels must be >= 1");
    if (n_slots < 1) throw std::invalid_argument("n_slots must be >= 1");
    if (sinr_grid_db.empty()) throw std::invalid_argument("sinr_grid_db must be non-empty");
    for (double g : sinr_grid_db)
      if (!std::isfinite(g)) throw std::invalid_argument("sinr_grid_db entries must be finite");
    if (!sigma.empty()) {
      if (static_cast<int>(sigma.size()) != K) throw std::invalid_argument("sigma needs K entries");
      for (double s : sigma)
        if (!(s > 0.0)) throw std::invalid_argument("sigma entries must be positive");
    }
    if (schemes.empty()) throw std::invalid_argument("schemes must be non-empty");
  }

  std::size_t samples() const { return static_cast<std::size_t>(n_channels) * static_cast<std::size_t>(n_slots); }
};

struct SweepRecord {
  Scheme scheme = Scheme::ZFBF;
  int K = 0, N = 0, M = 0;
  double sinr_db = 0.0;
  double mean_power_dbw = 0.0;         // mean over slots of 10 log10(u^T u)
  double linear_mean_power_dbw = 0.0;  // 10 log10 of the mean of u^T u
  double accuracy_mean = std::numeric_limits<double>::quiet_NaN();  // CF_SLP with OPT_SLP reference only
  double mean_ms_per_slot = 0.0;
  double median_ms_per_slot = 0.0;
  std::size_t n_samples = 0;
  std::size_t n_capped = 0;
  std::uint64_t seed = 0;
};

struct AccuracyRecord {
  int K = 0, N = 0, M = 0;
  double sinr_db = 0.0;
  double accuracy_mean = 0.0;
  std::size_t n_samples = 0;
  std::uint64_t seed = 0;
};

struct TimingRecord {
  Scheme scheme = Scheme::ZFBF;
  int K = 0, N = 0, M = 0;
  double median_ms_per_slot = 0.0;
  double mean_ms_per_slot = 0.0;
  std::size_t n_samples = 0;
  std::uint64_t seed = 0;
};

struct SerRecord {
  Scheme scheme = Scheme::ZFBF;
  int K = 0, N = 0, M = 0;
  double sinr_db = 0.0;
  double ser = 0.0;
  double std_err = 0.0;
  std::size_t n_symbols = 0;
  std::uint64_t seed = 0;
};

struct PropertyCheck {
  std::string name;
  bool passed = false;
  std::size_t checked = 0;
  std::size_t violations = 0;
  double worst = 0.0;
};

/// Worker count: the explicit request, else one per hardware thread.
inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Runs body(i) for i in [0, count) over a worker pool. Rethrows the first
/// exception after all workers stop.
inline void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& body) {
  const int workers = std::max(1, std::min<int>(resolve_threads(threads), static_cast<int>(std::max<std::size_t>(count, 1))));
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= count) return;
        try {
          body(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          next.store(count);
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

namespace detail {

// Substream ids; each channel index owns one id per purpose.
inline constexpr std::uint64_t kChannelStream = 0;
inline constexpr std::uint64_t kNoiseStream = 1;

inline std::uint64_t stream_id(std::uint64_t channel_index, std::uint64_t purpose) {
  return channel_index * 4 + purpose;
}

/// Channel realization and symbol vectors of one channel index. Identical for
/// every scheme and grid point in a run.
struct ChannelDraw {
  ChannelRealization channel;
  std::vector<std::vector<int>> symbols;  // [slot][user]
};

inline ChannelDraw draw_channel(const ScenarioConfig& cfg, std::size_t channel_index) {
  CounterRng rng(cfg.seed, stream_id(channel_index, kChannelStream));
  ChannelRealization ch = sample_channel(cfg.K, cfg.N, rng);
  std::uniform_int_distribution<int> pick(0, cfg.M - 1);
  std::vector<std::vector<int>> symbols(static_cast<std::size_t>(cfg.n_slots), std::vector<int>(cfg.K));
  for (auto& slot : symbols)
    for (auto& s : slot) s = pick(rng);
  return {std::move(ch), std::move(symbols)};
}

inline double ms(std::chrono::nanoseconds d) { return std::chrono::duration<double, std::milli>(d).count(); }

inline double median(std::vector<double> xs) {
  if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
  const auto mid = xs.begin() + static_cast<std::ptrdiff_t>(xs.size() / 2);
  std::nth_element(xs.begin(), mid, xs.end());
  if (xs.size() % 2 == 1) return *mid;
  const double hi = *mid;
  const double lo = *std::max_element(xs.begin(), mid);
  return 0.5 * (lo + hi);
}

inline double mean(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return xs.empty() ? std::numeric_limits<double>::quiet_NaN() : s / static_cast<double>(xs.size());
}

}  // namespace detail

/// Power sweep over the SINR grid.
///
/// mean_power_dbw averages per-slot powers in dB: with N = K the zero-forcing
/// power tr((H H^H)^{-1}) has no finite mean, so a linear average never
/// settles. The linear figure is still reported alongside.
///
/// Every scheme sees the same channel and
/// symbol streams; per-channel partial sums are merged in channel order so the
/// result does not depend on the worker count.
inline std::vector<SweepRecord> run_power_sweep(const ScenarioConfig& cfg) {
  cfg.validate();
  const auto constellation = Constellation::psk(cfg.M);
  const VectorXd sigma = cfg.sigma_vector();
  const std::size_t n_grid = cfg.sinr_grid_db.size();
  const std::size_t n_scheme = cfg.schemes.size();
  const bool want_accuracy = cfg.has(Scheme::CF_SLP) && cfg.has(Scheme::OPT_SLP);

  struct Partial {
    std::vector<double> power;     // [grid][scheme]
    std::vector<double> power_db;
    std::vector<double> accuracy;  // [grid]
    std::vector<std::size_t> capped;
    std::vector<std::vector<double>> elapsed_ms;  // [grid*scheme][slot]
  };
  std::vector<Partial> partials(static_cast<std::size_t>(cfg.n_channels));

  parallel_for(partials.size(), cfg.threads, [&](std::size_t c) {
    const auto draw = detail::draw_channel(cfg, c);
    Partial p;
    p.power.assign(n_grid * n_scheme, 0.0);
    p.power_db.assign(n_grid * n_scheme, 0.0);
    p.accuracy.assign(n_grid, 0.0);
    p.capped.assign(n_grid * n_scheme, 0);
    p.elapsed_ms.assign(n_grid * n_scheme, {});
    for (auto& e : p.elapsed_ms) e.reserve(draw.symbols.size());
    for (std::size_t g = 0; g < n_grid; ++g) {
      const VectorXd gamma = VectorXd::Constant(cfg.K, db_to_linear(cfg.sinr_grid_db[g]));
      for (const auto& symbols : draw.symbols) {
        const SlotProblem slot = build_slot(draw.channel, constellation, symbols, sigma, gamma);
        VectorXd opt_delta;
        for (std::size_t s = 0; s < n_scheme; ++s) {
          const PrecodeResult r = precode(cfg.schemes[s], slot);
          const std::size_t idx = g * n_scheme + s;
          p.power[idx] += r.power;
          p.power_db[idx] += linear_to_db(r.power);
          p.capped[idx] += r.solver_capped ? 1 : 0;
          p.elapsed_ms[idx].push_back(detail::ms(r.elapsed));
          if (cfg.schemes[s] == Scheme::OPT_SLP) opt_delta = r.delta;
        }
        if (want_accuracy) {
          p.accuracy[g] += active_set_accuracy(predicted_inactive(slot.v),
                                               optimal_inactive(opt_delta, active_tolerance(slot.v)));
        }
      }
    }
    partials[c] = std::move(p);
  });

  const double n = static_cast<double>(cfg.samples());
  std::vector<SweepRecord> out;
  out.reserve(n_grid * n_scheme);
  for (std::size_t g = 0; g < n_grid; ++g) {
    double acc = 0.0;
    for (const auto& p : partials) acc += p.accuracy[g];
    for (std::size_t s = 0; s < n_scheme; ++s) {
      const std::size_t idx = g * n_scheme + s;
      double power = 0.0;
      double power_db = 0.0;
      std::size_t capped = 0;
      std::vector<double> times;
      times.reserve(cfg.samples());
      for (const auto& p : partials) {
        power += p.power[idx];
        power_db += p.power_db[idx];
        capped += p.capped[idx];
        times.insert(times.end(), p.elapsed_ms[idx].begin(), p.elapsed_ms[idx].end());
      }
      SweepRecord r;
      r.scheme = cfg.schemes[s];
      r.K = cfg.K;
      r.N = cfg.N;
      r.M = cfg.M;
      r.sinr_db = cfg.sinr_grid_db[g];
      r.mean_power_dbw = power_db / n;
      r.linear_mean_power_dbw = linear_to_db(power / n);
      if (want_accuracy && r.scheme == Scheme::CF_SLP) r.accuracy_mean = acc / n;
      r.mean_ms_per_slot = detail::mean(times);
      r.median_ms_per_slot = detail::median(std::move(times));
      r.n_samples = cfg.samples();
      r.n_capped = capped;
      r.seed = cfg.seed;
      out.push_back(r);
    }
  }
  return out;
}

/// Mean active-set prediction accuracy of CF-SLP against OPT-SLP at one SINR.
inline AccuracyRecord run_accuracy(ScenarioConfig cfg, double sinr_db = 3.0) {
  cfg.sinr_grid_db = {sinr_db};
  cfg.schemes = {Scheme::CF_SLP, Scheme::OPT_SLP};
  const auto sweep = run_power_sweep(cfg);
  AccuracyRecord r;
  r.K = cfg.K;
  r.N = cfg.N;
  r.M = cfg.M;
  r.sinr_db = sinr_db;
  r.accuracy_mean = sweep.front().accuracy_mean;
  r.n_samples = cfg.samples();
  r.seed = cfg.seed;
  return r;
}

namespace detail {

/// Slots faster than this are timed in batches of kTimingBatch.
inline constexpr std::chrono::nanoseconds kBatchThreshold{10'000};
inline constexpr int kTimingBatch = 100;
inline constexpr int kWarmupSlots = 20;

}  // namespace detail

/// Per-slot wall-clock time per scheme, single threaded.
///
/// Spans: ZFBF covers H^+ t only (the pseudo-inverse is symbol independent);
/// CF_SLP covers assembling the slot (A^{-1}, C, Q, v, u_zf) plus the
/// punctured solve; OPT_SLP covers the same assembly plus the NNLS solve.
/// Channel sampling and pseudo-inversion are outside every span.
inline std::vector<TimingRecord> run_timing(const ScenarioConfig& cfg) {
  cfg.validate();
  using Clock = std::chrono::steady_clock;
  const auto constellation = Constellation::psk(cfg.M);
  const VectorXd sigma = cfg.sigma_vector();
  const double gamma_db = cfg.sinr_grid_db[cfg.sinr_grid_db.size() / 2];
  const VectorXd gamma = VectorXd::Constant(cfg.K, db_to_linear(gamma_db));

  double sink = 0.0;
  auto run_one = [&](Scheme scheme, const ChannelRealization& ch, const std::vector<int>& symbols,
                     const VectorXd& target) {
    switch (scheme) {
      case Scheme::ZFBF: sink += zfbf_vector(ch.pinv(), target)(0); break;
      case Scheme::CF_SLP: {
        const SlotProblem slot = build_slot(ch, constellation, symbols, sigma, gamma);
        sink += (slot.u_zf + slot.C * cf_slp_delta(slot.Q, slot.v))(0);
        break;
      }
      case Scheme::OPT_SLP: {
        const SlotProblem slot = build_slot(ch, constellation, symbols, sigma, gamma);
        const NnlsSolution sol = nnls_solve({slot.C, -slot.u_zf});
        sink += (slot.u_zf + slot.C * sol.delta)(0);
        break;
      }
    }
  };

  std::vector<std::vector<double>> samples(cfg.schemes.size());
  for (int c = 0; c < cfg.n_channels; ++c) {
    const auto draw = detail::draw_channel(cfg, static_cast<std::size_t>(c));
    std::vector<VectorXd> targets;
    targets.reserve(draw.symbols.size());
    for (const auto& s : draw.symbols) targets.push_back(scaled_target(constellation, s, sigma, gamma));
    const std::size_t n_slots = draw.symbols.size();

    for (std::size_t s = 0; s < cfg.schemes.size(); ++s) {
      const Scheme scheme = cfg.schemes[s];
      if (c == 0) {
        for (int w = 0; w < detail::kWarmupSlots; ++w) {
          const std::size_t i = static_cast<std::size_t>(w) % n_slots;
          run_one(scheme, draw.channel, draw.symbols[i], targets[i]);
        }
      }
      // Probe one slot to choose between per-slot and batched measurement.
      const auto p0 = Clock::now();
      run_one(scheme, draw.channel, draw.symbols[0], targets[0]);
      const bool batched = (Clock::now() - p0) < detail::kBatchThreshold;
      if (batched) {
        for (std::size_t begin = 0; begin < n_slots; begin += detail::kTimingBatch) {
          const auto t0 = Clock::now();
          for (int b = 0; b < detail::kTimingBatch; ++b) {
            const std::size_t i = (begin + static_cast<std::size_t>(b)) % n_slots;
            run_one(scheme, draw.channel, draw.symbols[i], targets[i]);
          }
          samples[s].push_back(detail::ms(Clock::now() - t0) / detail::kTimingBatch);
        }
      } else {
        for (std::size_t i = 0; i < n_slots; ++i) {
          const auto t0 = Clock::now();
          run_one(scheme, draw.channel, draw.symbols[i], targets[i]);
          samples[s].push_back(detail::ms(Clock::now() - t0));
        }
      }
    }
  }
  if (!std::isfinite(sink)) throw std::runtime_error("timing produced non-finite output");

  std::vector<TimingRecord> out;
  for (std::size_t s = 0; s < cfg.schemes.size(); ++s) {
    TimingRecord r;
    r.scheme = cfg.schemes[s];
    r.K = cfg.K;
    r.N = cfg.N;
    r.M = cfg.M;
    r.mean_ms_per_slot = detail::mean(samples[s]);
    r.median_ms_per_slot = detail::median(samples[s]);
    r.n_samples = samples[s].size();
    r.seed = cfg.seed;
    out.push_back(r);
  }
  return out;
}

/// Gaussian tail probability.
inline double q_function(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }

/// Exact QPSK symbol error rate at per-symbol SNR snr (linear).
inline double qpsk_ser(double snr) {
  const double q = q_function(std::sqrt(snr));
  return 2.0 * q - q * q;
}

/// Symbol error rate per scheme and SINR point: r_k = h_k u + noise_scale * z_k,
/// z_k ~ CN(0, sigma_k^2), ML detection per user. Noise samples are shared by
/// all schemes.
inline std::vector<SerRecord> run_ser(const ScenarioConfig& cfg, double noise_scale = 1.0) {
  cfg.validate();
  if (!(noise_scale >= 0.0)) throw std::invalid_argument("noise_scale must be >= 0");
  const auto constellation = Constellation::psk(cfg.M);
  const VectorXd sigma = cfg.sigma_vector();
  const std::size_t n_grid = cfg.sinr_grid_db.size();
  const std::size_t n_scheme = cfg.schemes.size();

  std::vector<std::vector<std::size_t>> errors(static_cast<std::size_t>(cfg.n_channels));
  parallel_for(errors.size(), cfg.threads, [&](std::size_t c) {
    const auto draw = detail::draw_channel(cfg, c);
    CounterRng noise_rng(cfg.seed, detail::stream_id(c, detail::kNoiseStream));
    std::normal_distribution<double> gauss(0.0, std::sqrt(0.5));
    std::vector<std::size_t> err(n_grid * n_scheme, 0);
    VectorXd noise(2 * cfg.K);
    for (std::size_t g = 0; g < n_grid; ++g) {
      const VectorXd gamma = VectorXd::Constant(cfg.K, db_to_linear(cfg.sinr_grid_db[g]));
      for (const auto& symbols : draw.symbols) {
        for (int k = 0; k < cfg.K; ++k) {
          noise(2 * k) = noise_scale * sigma(k) * gauss(noise_rng);
          noise(2 * k + 1) = noise_scale * sigma(k) * gauss(noise_rng);
        }
        const SlotProblem slot = build_slot(draw.channel, constellation, symbols, sigma, gamma);
        for (std::size_t s = 0; s < n_scheme; ++s) {
          const PrecodeResult r = precode(cfg.schemes[s], slot);
          const VectorXd rx = received(slot, r.u) + noise;
          for (int k = 0; k < cfg.K; ++k) {
            err[g * n_scheme + s] += constellation.ml_detect(rx.segment<2>(2 * k)) != symbols[static_cast<std::size_t>(k)];
          }
        }
      }
    }
    errors[c] = std::move(err);
  });

  const std::size_t n_symbols = cfg.samples() * static_cast<std::size_t>(cfg.K);
  std::vector<SerRecord> out;
  for (std::size_t g = 0; g < n_grid; ++g) {
    for (std::size_t s = 0; s < n_scheme; ++s) {
      std::size_t total = 0;
      for (const auto& e : errors) total += e[g * n_scheme + s];
      SerRecord r;
      r.scheme = cfg.schemes[s];
      r.K = cfg.K;
      r.N = cfg.N;
      r.M = cfg.M;
      r.sinr_db = cfg.sinr_grid_db[g];
      r.ser = static_cast<double>(total) / static_cast<double>(n_symbols);
      r.std_err = std::sqrt(r.ser * (1.0 - r.ser) / static_cast<double>(n_symbols));
      r.n_symbols = n_symbols;
      r.seed = cfg.seed;
      out.push_back(r);
    }
  }
  return out;
}

/// Invariant suite over the config's random slots: solver optimality
/// certificates, the v >= 0 <=> delta* = 0 equivalence, oracle agreement
/// (2K <= 12), power ordering and constructive-interference feasibility.
inline std::vector<PropertyCheck> run_verification(const ScenarioConfig& cfg) {
  cfg.validate();
  const auto constellation = Constellation::psk(cfg.M);
  const VectorXd sigma = cfg.sigma_vector();
  const bool oracle = 2 * cfg.K <= 12;

  enum Idx { Kkt, LemmaSufficiency, LemmaNecessity, Oracle, Ordering, CiFeasible, CfDecodes, Count };
  const char* names[Count] = {"kkt_certificate",   "lemma_v_nonneg_implies_zf", "lemma_zero_slack_implies_v_nonneg",
                              "oracle_agreement",  "power_ordering",            "ci_feasibility",
                              "cf_noise_free_decoding"};

  std::vector<std::vector<PropertyCheck>> partials(static_cast<std::size_t>(cfg.n_channels));
  parallel_for(partials.size(), cfg.threads, [&](std::size_t c) {
    const auto draw = detail::draw_channel(cfg, c);
    std::vector<PropertyCheck> checks(Count);
    auto record = [&](Idx i, double value, double limit) {
      auto& p = checks[i];
      ++p.checked;
      p.worst = std::max(p.worst, value);
      if (!(value <= limit)) ++p.violations;
    };
    for (double db : cfg.sinr_grid_db) {
      const VectorXd gamma = VectorXd::Constant(cfg.K, db_to_linear(db));
      for (const auto& symbols : draw.symbols) {
        const SlotProblem slot = build_slot(draw.channel, constellation, symbols, sigma, gamma);
        const auto zf = zfbf(slot);
        const auto cf = cf_slp(slot);
        const auto opt = opt_slp(slot);
        const double tol = 1e-8 * (1.0 + slot.v.norm());
        record(Kkt, opt.kkt.worst() / tol, 1.0);
        if (slot.v.minCoeff() >= 0.0) {
          record(LemmaSufficiency,
                 std::max(opt.delta.cwiseAbs().maxCoeff() / 1e-7, (opt.u - zf.u).cwiseAbs().maxCoeff() / 1e-8), 1.0);
        }
        if (opt.delta.cwiseAbs().maxCoeff() <= 1e-7) record(LemmaNecessity, std::max(0.0, -slot.v.minCoeff()), 1e-8);
        if (oracle) {
          const auto o = nnls_oracle({slot.C, -slot.u_zf});
          record(Oracle, (o.delta - opt.delta).cwiseAbs().maxCoeff(), 1e-8);
        }
        record(Ordering, std::max(opt.power - cf.power, opt.power - zf.power), 1e-8);
        record(CiFeasible, std::max({zf.ci_residual, cf.ci_residual, opt.ci_residual}), 1e-8);
        const VectorXd rx = received(slot, cf.u);
        double miss = 0.0;
        for (int k = 0; k < cfg.K; ++k)
          miss += constellation.ml_detect(rx.segment<2>(2 * k)) != symbols[static_cast<std::size_t>(k)];
        record(CfDecodes, miss, 0.0);
      }
    }
    partials[c] = std::move(checks);
  });

  std::vector<PropertyCheck> out(Count);
  for (int i = 0; i < Count; ++i) {
    out[i].name = names[i];
    for (const auto& p : partials) {
      out[i].checked += p[i].checked;
      out[i].violations += p[i].violations;
      out[i].worst = std::max(out[i].worst, p[i].worst);
    }
    out[i].passed = out[i].violations == 0;
  }
  if (!oracle) out.erase(out.begin() + Oracle);
  return out;
}

}  // namespace slp
