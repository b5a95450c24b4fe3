#pragma once

// Scenario config files, CSV/JSON result tables and atomic file output.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "slp/harness.hpp"

namespace slp::io {

using nlohmann::json;

/// Bad config file, unknown key or malformed override.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr const char* kConfigKeys[] = {"K",       "N",    "M",       "sinr_grid_db", "sigma",
                                              "n_channels", "n_slots", "seed", "schemes",      "threads"};

inline std::string canonical_key(std::string_view key) {
  if (key == "grid") return "sinr_grid_db";
  for (const char* k : kConfigKeys)
    if (key == k) return k;
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

inline json to_json(const ScenarioConfig& cfg) {
  json schemes = json::array();
  for (Scheme s : cfg.schemes) schemes.push_back(std::string(scheme_name(s)));
  return json{{"K", cfg.K},
              {"N", cfg.N},
              {"M", cfg.M},
              {"sinr_grid_db", cfg.sinr_grid_db},
              {"sigma", cfg.sigma},
              {"n_channels", cfg.n_channels},
              {"n_slots", cfg.n_slots},
              {"seed", cfg.seed},
              {"schemes", schemes},
              {"threads", cfg.threads}};
}

namespace detail {

template <typename T>
T get_as(const json& j, const std::string& key) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type: " + j.dump());
  }
}

inline void apply_key(ScenarioConfig& cfg, const std::string& key, const json& value) {
  if (key == "K") cfg.K = get_as<int>(value, key);
  else if (key == "N") cfg.N = get_as<int>(value, key);
  else if (key == "M") cfg.M = get_as<int>(value, key);
  else if (key == "sinr_grid_db") cfg.sinr_grid_db = value.is_number() ? std::vector<double>{value.get<double>()}
                                                                       : get_as<std::vector<double>>(value, key);
  else if (key == "sigma") cfg.sigma = get_as<std::vector<double>>(value, key);
  else if (key == "n_channels") cfg.n_channels = get_as<int>(value, key);
  else if (key == "n_slots") cfg.n_slots = get_as<int>(value, key);
  else if (key == "seed") cfg.seed = get_as<std::uint64_t>(value, key);
  else if (key == "threads") cfg.threads = get_as<int>(value, key);
  else if (key == "schemes") {
    cfg.schemes.clear();
    for (const auto& name : get_as<std::vector<std::string>>(value, key)) {
      try {
        cfg.schemes.push_back(parse_scheme(name));
      } catch (const std::invalid_argument& e) {
        throw ConfigError("config key 'schemes': " + std::string(e.what()));
      }
    }
  }
}

}  // namespace detail

/// Applies every key of a JSON object onto cfg. Unknown keys are rejected.
inline void merge(ScenarioConfig& cfg, const json& object) {
  if (!object.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, value] : object.items()) detail::apply_key(cfg, canonical_key(key), value);
}

inline ScenarioConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ScenarioConfig cfg;
  merge(cfg, j);
  return cfg;
}

inline ScenarioConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

/// Applies one `key=value` override; the value is read as JSON, falling back
/// to a plain string.
inline void apply_override(ScenarioConfig& cfg, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ConfigError("override '" + std::string(assignment) + "' is not of the form key=value");
  }
  const std::string key = canonical_key(assignment.substr(0, eq));
  const std::string raw(assignment.substr(eq + 1));
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  detail::apply_key(cfg, key, value);
}

/// Validates cfg, rethrowing failures as ConfigError.
inline void check(const ScenarioConfig& cfg) {
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
}

/// FNV-1a 64 of the canonical JSON dump, as 16 hex digits.
inline std::string config_hash(const ScenarioConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : to_json(cfg).dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

/// Shortest-safe decimal: 17 significant digits, so values round-trip.
inline std::string format_number(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

/// RFC 4180 field quoting.
inline std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header) : columns_(header.size()) { row(header); }

  CsvWriter& row(const std::vector<std::string>& fields) {
    if (fields.size() != columns_) throw std::logic_error("CSV row width mismatch");
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out_ << ',';
      out_ << csv_field(fields[i]);
    }
    out_ << "\r\n";
    return *this;
  }

  std::string str() const { return out_.str(); }

 private:
  std::size_t columns_;
  std::ostringstream out_;
};

/// Parses RFC 4180 text into rows of fields.
inline std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (c == '\r' || c == '\n') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      row.push_back(std::move(field));
      field.clear();
      rows.push_back(std::move(row));
      row.clear();
      any = false;
    } else {
      field += c;
      any = true;
    }
  }
  if (any) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline const std::vector<std::string> kSweepColumns{"scheme", "K", "N", "M", "sinr_db", "mean_power_dbw",
                                                    "mean_ms_per_slot", "n_samples", "seed"};
inline const std::vector<std::string> kAccuracyColumns{"K", "N", "M", "sinr_db", "accuracy_mean", "n_samples", "seed"};
inline const std::vector<std::string> kTimingColumns{"scheme", "K", "N", "M", "median_ms_per_slot",
                                                     "mean_ms_per_slot", "n_samples", "seed"};
inline const std::vector<std::string> kSerColumns{"scheme", "K", "N", "M", "sinr_db", "ser", "std_err",
                                                  "n_symbols", "seed"};
inline const std::vector<std::string> kVerifyColumns{"property", "passed", "checked", "violations", "worst"};

inline std::string sweep_csv(const std::vector<SweepRecord>& records) {
  CsvWriter w(kSweepColumns);
  for (const auto& r : records) {
    w.row({std::string(scheme_name(r.scheme)), std::to_string(r.K), std::to_string(r.N), std::to_string(r.M),
           format_number(r.sinr_db), format_number(r.mean_power_dbw), format_number(r.mean_ms_per_slot),
           std::to_string(r.n_samples), std::to_string(r.seed)});
  }
  return w.str();
}

inline std::string accuracy_csv(const std::vector<AccuracyRecord>& records) {
  CsvWriter w(kAccuracyColumns);
  for (const auto& r : records) {
    w.row({std::to_string(r.K), std::to_string(r.N), std::to_string(r.M), format_number(r.sinr_db),
           format_number(r.accuracy_mean), std::to_string(r.n_samples), std::to_string(r.seed)});
  }
  return w.str();
}

inline std::string timing_csv(const std::vector<TimingRecord>& records) {
  CsvWriter w(kTimingColumns);
  for (const auto& r : records) {
    w.row({std::string(scheme_name(r.scheme)), std::to_string(r.K), std::to_string(r.N), std::to_string(r.M),
           format_number(r.median_ms_per_slot), format_number(r.mean_ms_per_slot), std::to_string(r.n_samples),
           std::to_string(r.seed)});
  }
  return w.str();
}

inline std::string ser_csv(const std::vector<SerRecord>& records) {
  CsvWriter w(kSerColumns);
  for (const auto& r : records) {
    w.row({std::string(scheme_name(r.scheme)), std::to_string(r.K), std::to_string(r.N), std::to_string(r.M),
           format_number(r.sinr_db), format_number(r.ser), format_number(r.std_err), std::to_string(r.n_symbols),
           std::to_string(r.seed)});
  }
  return w.str();
}

inline std::string verify_csv(const std::vector<PropertyCheck>& checks) {
  CsvWriter w(kVerifyColumns);
  for (const auto& c : checks) {
    w.row({c.name, c.passed ? "true" : "false", std::to_string(c.checked), std::to_string(c.violations),
           format_number(c.worst)});
  }
  return w.str();
}

// NaN has no JSON spelling; emit null.
inline json number_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

inline json to_json(const SweepRecord& r, const std::string& hash) {
  return {{"scheme", scheme_name(r.scheme)}, {"K", r.K}, {"N", r.N}, {"M", r.M}, {"sinr_db", r.sinr_db},
          {"mean_power_dbw", r.mean_power_dbw}, {"mean_ms_per_slot", r.mean_ms_per_slot},
          {"n_samples", r.n_samples}, {"seed", r.seed},
          {"linear_mean_power_dbw", number_or_null(r.linear_mean_power_dbw)},
          {"accuracy_mean", number_or_null(r.accuracy_mean)}, {"median_ms_per_slot", r.median_ms_per_slot},
          {"n_capped", r.n_capped}, {"config_hash", hash}};
}

inline json to_json(const AccuracyRecord& r, const std::string& hash) {
  return {{"K", r.K}, {"N", r.N}, {"M", r.M}, {"sinr_db", r.sinr_db}, {"accuracy_mean", r.accuracy_mean},
          {"n_samples", r.n_samples}, {"seed", r.seed}, {"config_hash", hash}};
}

inline json to_json(const TimingRecord& r, const std::string& hash) {
  return {{"scheme", scheme_name(r.scheme)}, {"K", r.K}, {"N", r.N}, {"M", r.M},
          {"median_ms_per_slot", r.median_ms_per_slot}, {"mean_ms_per_slot", r.mean_ms_per_slot},
          {"n_samples", r.n_samples}, {"seed", r.seed}, {"config_hash", hash}};
}

inline json to_json(const SerRecord& r, const std::string& hash) {
  return {{"scheme", scheme_name(r.scheme)}, {"K", r.K}, {"N", r.N}, {"M", r.M}, {"sinr_db", r.sinr_db},
          {"ser", r.ser}, {"std_err", r.std_err}, {"n_symbols", r.n_symbols}, {"seed", r.seed},
          {"config_hash", hash}};
}

inline json to_json(const PropertyCheck& c, const std::string& hash) {
  return {{"property", c.name}, {"passed", c.passed}, {"checked", c.checked}, {"violations", c.violations},
          {"worst", c.worst}, {"config_hash", hash}};
}

template <typename Record>
std::string records_json(const std::vector<Record>& records, const std::string& hash) {
  json arr = json::array();
  for (const auto& r : records) arr.push_back(to_json(r, hash));
  return arr.dump(2) + "\n";
}

inline std::vector<SweepRecord> read_sweep_csv(std::string_view text) {
  const auto rows = parse_csv(text);
  if (rows.empty() || rows.front() != kSweepColumns) throw std::runtime_error("not a power-sweep CSV");
  std::vector<SweepRecord> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& f = rows[i];
    if (f.size() != kSweepColumns.size()) throw std::runtime_error("malformed power-sweep row");
    SweepRecord r;
    r.scheme = parse_scheme(f[0]);
    r.K = std::stoi(f[1]);
    r.N = std::stoi(f[2]);
    r.M = std::stoi(f[3]);
    r.sinr_db = std::stod(f[4]);
    r.mean_power_dbw = std::stod(f[5]);
    r.mean_ms_per_slot = std::stod(f[6]);
    r.n_samples = std::stoull(f[7]);
    r.seed = std::stoull(f[8]);
    out.push_back(r);
  }
  return out;
}

inline std::vector<SweepRecord> read_sweep_json(std::string_view text) {
  std::vector<SweepRecord> out;
  for (const auto& j : json::parse(text)) {
    SweepRecord r;
    r.scheme = parse_scheme(j.at("scheme").get<std::string>());
    r.K = j.at("K");
    r.N = j.at("N");
    r.M = j.at("M");
    r.sinr_db = j.at("sinr_db");
    r.mean_power_dbw = j.at("mean_power_dbw");
    r.mean_ms_per_slot = j.at("mean_ms_per_slot");
    r.n_samples = j.at("n_samples");
    r.seed = j.at("seed");
    out.push_back(r);
  }
  return out;
}

/// Writes via a sibling temp file and rename, so readers never see a partial file.
inline void write_atomic(const std::filesystem::path& path, std::string_view content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + tmp.string() + "' for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error("write to '" + tmp.string() + "' failed");
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace slp::io
