// Command-line front end for the symbol-level precoding experiments.
//
//   slp power-sweep --config qpsk2x2.json --out sweep.csv
//   slp accuracy --config qpsk2x2.json --set K=8 --set N=8 --set M=8
//   slp timing | ser | verify ...
//
// Exit codes: 0 success (verify: all properties hold), 1 runtime failure or
// failed property, 2 config/argument error.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "slp/harness.hpp"
#include "slp/io.hpp"

namespace {

using slp::io::ConfigError;
using slp::io::json;

struct CommonOptions {
  std::string config_path;
  std::string out_path;
  std::string format = "csv";
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("--config", opts.config_path, "Scenario config (JSON object)");
  cmd->add_option("--out", opts.out_path, "Output file (default: stdout)");
  cmd->add_option("--format", opts.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
  cmd->add_option("--set", opts.overrides, "Override a config field, key=value (repeatable)");
}

slp::ScenarioConfig resolve_config(const CommonOptions& opts) {
  slp::ScenarioConfig cfg = opts.config_path.empty() ? slp::ScenarioConfig{} : slp::io::load_config(opts.config_path);
  for (const auto& o : opts.overrides) slp::io::apply_override(cfg, o);
  if (const char* env = std::getenv("SLP_THREADS")) {
    try {
      cfg.threads = std::stoi(env);
    } catch (const std::exception&) {
      throw ConfigError(std::string("SLP_THREADS must be an integer, got '") + env + "'");
    }
  }
  slp::io::check(cfg);
  return cfg;
}

/// Writes the table (stdout when no path) plus a `<out>.meta.json` provenance sidecar.
void emit(const CommonOptions& opts, const std::string& command, const slp::ScenarioConfig& cfg,
          const std::string& body, json extra = json::object()) {
  if (opts.out_path.empty()) {
    std::cout << body;
    return;
  }
  const std::filesystem::path out(opts.out_path);
  slp::io::write_atomic(out, body);
  json meta{{"command", command},
            {"config", slp::io::to_json(cfg)},
            {"config_hash", slp::io::config_hash(cfg)},
            {"seed", cfg.seed},
            {"overrides", opts.overrides},
            {"format", opts.format}};
  for (auto& [k, v] : extra.items()) meta[k] = v;
  auto meta_path = out;
  meta_path += ".meta.json";
  slp::io::write_atomic(meta_path, meta.dump(2) + "\n");
}

template <typename Record, typename CsvFn>
std::string render(const CommonOptions& opts, const std::vector<Record>& records, const std::string& hash,
                   CsvFn csv) {
  return opts.format == "json" ? slp::io::records_json(records, hash) : csv(records);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Symbol-level precoding: ZFBF, closed-form SLP and optimal SLP experiments"};
  app.require_subcommand(1, 1);

  CommonOptions sweep_opts, acc_opts, timing_opts, ser_opts, verify_opts;
  double accuracy_sinr_db = 3.0;
  double noise_scale = 1.0;

  auto* sweep = app.add_subcommand("power-sweep", "Mean transmit power vs. SINR threshold per scheme");
  add_common(sweep, sweep_opts);
  auto* accuracy = app.add_subcommand("accuracy", "Active-set prediction accuracy of CF-SLP");
  add_common(accuracy, acc_opts);
  accuracy->add_option("--sinr-db", accuracy_sinr_db, "SINR threshold in dB")->capture_default_str();
  auto* timing = app.add_subcommand("timing", "Per-slot execution time per scheme");
  add_common(timing, timing_opts);
  auto* ser = app.add_subcommand("ser", "Symbol error rate per scheme over the SINR grid");
  add_common(ser, ser_opts);
  ser->add_option("--noise-scale", noise_scale, "Receiver noise multiplier (0 disables noise)")
      ->capture_default_str();
  auto* verify = app.add_subcommand("verify", "Check solver and precoder invariants on random slots");
  add_common(verify, verify_opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (*sweep) {
      const auto cfg = resolve_config(sweep_opts);
      const auto hash = slp::io::config_hash(cfg);
      const auto records = slp::run_power_sweep(cfg);
      emit(sweep_opts, "power-sweep", cfg, render(sweep_opts, records, hash, slp::io::sweep_csv));
    } else if (*accuracy) {
      const auto cfg = resolve_config(acc_opts);
      const auto hash = slp::io::config_hash(cfg);
      const std::vector<slp::AccuracyRecord> records{slp::run_accuracy(cfg, accuracy_sinr_db)};
      emit(acc_opts, "accuracy", cfg, render(acc_opts, records, hash, slp::io::accuracy_csv),
           {{"sinr_db", accuracy_sinr_db}});
    } else if (*timing) {
      const auto cfg = resolve_config(timing_opts);
      const auto hash = slp::io::config_hash(cfg);
      const auto records = slp::run_timing(cfg);
      json ratios = json::object();
      for (const auto& a : records)
        for (const auto& b : records)
          if (a.scheme != b.scheme) {
            ratios[std::string(slp::scheme_name(a.scheme)) + "/" + std::string(slp::scheme_name(b.scheme))] =
                a.median_ms_per_slot / b.median_ms_per_slot;
          }
      emit(timing_opts, "timing", cfg, render(timing_opts, records, hash, slp::io::timing_csv),
           {{"median_time_ratios", ratios}});
      if (timing_opts.out_path.empty()) std::cerr << "median time ratios: " << ratios.dump() << "\n";
    } else if (*ser) {
      const auto cfg = resolve_config(ser_opts);
      const auto hash = slp::io::config_hash(cfg);
      const auto records = slp::run_ser(cfg, noise_scale);
      emit(ser_opts, "ser", cfg, render(ser_opts, records, hash, slp::io::ser_csv), {{"noise_scale", noise_scale}});
    } else if (*verify) {
      const auto cfg = resolve_config(verify_opts);
      const auto hash = slp::io::config_hash(cfg);
      const auto checks = slp::run_verification(cfg);
      bool all = true;
      for (const auto& c : checks) {
        all = all && c.passed;
        std::cerr << (c.passed ? "PASS " : "FAIL ") << c.name << "  (" << c.checked << " checked, "
                  << c.violations << " violations, worst " << c.worst << ")\n";
      }
      if (!verify_opts.out_path.empty()) {
        emit(verify_opts, "verify", cfg, render(verify_opts, checks, hash, slp::io::verify_csv));
      }
      return all ? 0 : 1;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
