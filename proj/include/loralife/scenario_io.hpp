#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "loralife/errors.hpp"
#include "loralife/sim.hpp"
#include "loralife/version.hpp"

namespace loralife {

namespace io_detail {

using nlohmann::json;

struct Parser {
  std::vector<std::string> issues;

  void unknown_keys(const json& obj, const std::string& path,
                    std::initializer_list<const char*> allowed) {
    if (!obj.is_object()) return;
    for (auto it = obj.begin(); it != obj.end(); ++it) {
      bool known = false;
      for (const char* k : allowed)
        if (it.key() == k) {
          known = true;
          break;
        }
      if (!known) issues.push_back(path + "/" + it.key() + ": unknown key");
    }
  }

  bool object(const json& v, const std::string& path) {
    if (v.is_object()) return true;
    issues.push_back(path + ": expected an object");
    return false;
  }

  template <typename T>
  bool fetch(const json& obj, const char* key, const std::string& path, T& out) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return false;
    if constexpr (std::is_same_v<T, bool>) {
      if (!it->is_boolean()) {
        issues.push_back(path + "/" + key + ": expected a boolean");
        return false;
      }
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!it->is_string()) {
        issues.push_back(path + "/" + key + ": expected a string");
        return false;
      }
    } else if constexpr (std::is_integral_v<T>) {
      if (!it->is_number_integer() && !it->is_number_unsigned()) {
        issues.push_back(path + "/" + key + ": expected an integer");
        return false;
      }
    } else {
      if (!it->is_number()) {
        issues.push_back(path + "/" + key + ": expected a number");
        return false;
      }
    }
    out = it->get<T>();
    return true;
  }

  void done() const {
    if (!issues.empty()) throw ValidationError(issues);
  }
};

inline const json* child(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return nullptr;
  return &*it;
}

}  // namespace io_detail

// ---- calibration ----------------------------------------------------------

inline RxWindowCalibration calibration_from_json(const nlohmann::json& j) {
  using io_detail::child;
  io_detail::Parser p;
  RxWindowCalibration cal = RxWindowCalibration::table1_defaults();

  if (!p.object(j, "")) p.done();
  p.unknown_keys(j, "", {"version", "unit", "rx_timeout_symbols", "rx_window_overhead_ms",
                         "rx2_window", "rx1_windows", "printed_totals"});

  int version = 0;
  if (!p.fetch(j, "version", "", version))
    p.issues.emplace_back("/version: required");
  else if (version != schema_version)
    p.issues.push_back("/version: expected " + std::to_string(schema_version) + ", got " +
                       std::to_string(version));
  std::string unit = "mJ";
  p.fetch(j, "unit", "", unit);
  if (unit != "mJ") p.issues.emplace_back("/unit: only \"mJ\" is supported");

  p.fetch(j, "rx_timeout_symbols", "", cal.rx_timeout_symbols);
  double ovh_ms = cal.rx_window_overhead_s * 1e3;
  if (p.fetch(j, "rx_window_overhead_ms", "", ovh_ms)) cal.rx_window_overhead_s = ovh_ms * 1e-3;

  if (const auto* rx2 = child(j, "rx2_window"); rx2 && p.object(*rx2, "/rx2_window")) {
    p.unknown_keys(*rx2, "/rx2_window", {"ack", "noack"});
    p.fetch(*rx2, "ack", "/rx2_window", cal.rx2_ack_mj);
    p.fetch(*rx2, "noack", "/rx2_window", cal.rx2_noack_mj);
  }

  const auto parse_rows = [&](const char* key, auto&& fn) {
    const auto* rows = child(j, key);
    if (!rows) return;
    if (!rows->is_array()) {
      p.issues.push_back(std::string("/") + key + ": expected an array");
      return;
    }
    for (std::size_t i = 0; i < rows->size(); ++i) {
      const auto& row = (*rows)[i];
      const std::string path = std::string("/") + key + "/" + std::to_string(i);
      if (!p.object(row, path)) continue;
      int dr = -1;
      if (!p.fetch(row, "dr", path, dr) || dr < 0 || dr > 5) {
        p.issues.push_back(path + "/dr: expected an integer in [0,5]");
        continue;
      }
      fn(row, path, static_cast<std::size_t>(dr));
    }
  };

  parse_rows("rx1_windows", [&](const nlohmann::json& row, const std::string& path,
                                std::size_t dr) {
    p.unknown_keys(row, path, {"dr", "ack", "noack"});
    p.fetch(row, "noack", path, cal.rx1_noack_mj[dr]);
    double ack = 0.0;
    if (row.contains("ack") && row["ack"].is_null())
      cal.rx1_ack_mj[dr] = std::nullopt;
    else if (p.fetch(row, "ack", path, ack))
      cal.rx1_ack_mj[dr] = ack;
  });

  parse_rows("printed_totals", [&](const nlohmann::json& row, const std::string& path,
                                   std::size_t dr) {
    p.unknown_keys(row, path, {"dr", "ack_worst", "ack_best", "noack"});
    p.fetch(row, "ack_worst", path, cal.total_ack_worst_mj[dr]);
    p.fetch(row, "noack", path, cal.total_noack_mj[dr]);
    double best = 0.0;
    if (row.contains("ack_best") && row["ack_best"].is_null())
      cal.total_ack_best_mj[dr] = std::nullopt;
    else if (p.fetch(row, "ack_best", path, best))
      cal.total_ack_best_mj[dr] = best;
  });

  p.done();
  validate(cal);
  return cal;
}

inline nlohmann::json calibration_to_json(const RxWindowCalibration& cal) {
  nlohmann::json j;
  j["version"] = schema_version;
  j["unit"] = "mJ";
  j["rx_timeout_symbols"] = cal.rx_timeout_symbols;
  j["rx_window_overhead_ms"] = cal.rx_window_overhead_s * 1e3;
  j["rx2_window"] = {{"ack", cal.rx2_ack_mj}, {"noack", cal.rx2_noack_mj}};
  j["rx1_windows"] = nlohmann::json::array();
  j["printed_totals"] = nlohmann::json::array();
  for (int dr = 0; dr < 6; ++dr) {
    const auto i = static_cast<std::size_t>(dr);
    nlohmann::json row{{"dr", dr}, {"noack", cal.rx1_noack_mj[i]}};
    row["ack"] = cal.rx1_ack_mj[i] ? nlohmann::json(*cal.rx1_ack_mj[i]) : nlohmann::json();
    j["rx1_windows"].push_back(row);
    nlohmann::json tot{{"dr", dr},
                       {"ack_worst", cal.total_ack_worst_mj[i]},
                       {"noack", cal.total_noack_mj[i]}};
    tot["ack_best"] =
        cal.total_ack_best_mj[i] ? nlohmann::json(*cal.total_ack_best_mj[i]) : nlohmann::json();
    j["printed_totals"].push_back(tot);
  }
  return j;
}

inline RxWindowCalibration load_calibration_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open calibration file: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  return calibration_from_json(j);
}

// ---- scenario ---------------------------------------------------------------

inline Scenario scenario_from_json(const nlohmann::json& j,
                                   const std::filesystem::path& base_dir = {}) {
  using io_detail::child;
  io_detail::Parser p;
  Scenario sc;

  if (!p.object(j, "")) p.done();
  p.unknown_keys(j, "",
                 {"version", "name", "duration_s", "run_to_battery_death", "seed", "battery",
                  "power_profile", "calibration", "calibration_file", "radio", "sensing",
                  "signal", "processing_s", "accumulation", "filter", "adr", "event_log"});

  int version = 0;
  if (!p.fetch(j, "version", "", version))
    p.issues.emplace_back("/version: required");
  else if (version != schema_version)
    p.issues.push_back("/version: expected " + std::to_string(schema_version) + ", got " +
                       std::to_string(version));

  p.fetch(j, "name", "", sc.name);
  double duration = 0.0;
  if (p.fetch(j, "duration_s", "", duration)) sc.duration_s = duration;
  p.fetch(j, "run_to_battery_death", "", sc.run_to_battery_death);
  std::uint64_t seed = 0;
  if (p.fetch(j, "seed", "", seed)) sc.seed = seed;
  p.fetch(j, "processing_s", "", sc.processing_s);

  if (const auto* b = child(j, "battery"); b && p.object(*b, "/battery")) {
    p.unknown_keys(*b, "/battery", {"capacity_mah", "voltage_v"});
    p.fetch(*b, "capacity_mah", "/battery", sc.battery.capacity_mah);
    double v = 0.0;
    if (p.fetch(*b, "voltage_v", "/battery", v)) sc.battery.voltage_v = v;
  }

  if (const auto* pp = child(j, "power_profile"); pp && p.object(*pp, "/power_profile")) {
    p.unknown_keys(*pp, "/power_profile",
                   {"supply_voltage_v", "sleep_current_a", "mcu_clock_mhz",
                    "mcu_current_per_mhz_a", "sense_current_a", "rx_current_a",
                    "tx_current_by_dbm"});
    auto& prof = sc.profile;
    p.fetch(*pp, "supply_voltage_v", "/power_profile", prof.supply_voltage_v);
    p.fetch(*pp, "sleep_current_a", "/power_profile", prof.sleep_current_a);
    p.fetch(*pp, "mcu_clock_mhz", "/power_profile", prof.mcu_clock_mhz);
    p.fetch(*pp, "mcu_current_per_mhz_a", "/power_profile", prof.mcu_current_per_mhz_a);
    p.fetch(*pp, "sense_current_a", "/power_profile", prof.sense_current_a);
    p.fetch(*pp, "rx_current_a", "/power_profile", prof.rx_current_a);
    if (const auto* tx = child(*pp, "tx_current_by_dbm")) {
      if (!tx->is_object()) {
        p.issues.emplace_back("/power_profile/tx_current_by_dbm: expected an object");
      } else {
        prof.tx_current_by_dbm.clear();
        for (auto it = tx->begin(); it != tx->end(); ++it) {
          int dbm = 0;
          try {
            std::size_t pos = 0;
            dbm = std::stoi(it.key(), &pos);
            if (pos != it.key().size()) throw std::invalid_argument("");
          } catch (const std::exception&) {
            p.issues.push_back("/power_profile/tx_current_by_dbm/" + it.key() +
                               ": key must be an integer dBm level");
            continue;
          }
          if (!it->is_number()) {
            p.issues.push_back("/power_profile/tx_current_by_dbm/" + it.key() +
                               ": expected a number");
            continue;
          }
          prof.tx_current_by_dbm[dbm] = it->get<double>();
        }
      }
    }
  }

  if (child(j, "calibration") && child(j, "calibration_file"))
    p.issues.emplace_back("/calibration: give either an inline calibration or a file, not both");
  if (const auto* c = child(j, "calibration")) {
    try {
      sc.calibration = calibration_from_json(*c);
    } catch (const ValidationError& e) {
      for (const auto& i : e.issues()) p.issues.push_back("/calibration" + i);
    }
  } else if (std::string file; p.fetch(j, "calibration_file", "", file)) {
    try {
      const std::filesystem::path fp(file);
      sc.calibration =
          load_calibration_file(fp.is_absolute() || base_dir.empty() ? fp : base_dir / fp);
    } catch (const ValidationError& e) {
      for (const auto& i : e.issues()) p.issues.push_back("/calibration_file: " + i);
    }
  }

  if (const auto* r = child(j, "radio"); r && p.object(*r, "/radio")) {
    p.unknown_keys(*r, "/radio",
                   {"data_rate", "tx_power_dbm", "confirmed", "ack", "max_retries",
                    "retry_backoff_s", "duty_cycle_limit", "receive_delay1_s", "rx2_data_rate",
                    "ack_payload_bytes"});
    p.fetch(*r, "data_rate", "/radio", sc.radio.initial_dr);
    p.fetch(*r, "tx_power_dbm", "/radio", sc.radio.tx_power_dbm);
    p.fetch(*r, "confirmed", "/radio", sc.radio.confirmed);
    p.fetch(*r, "max_retries", "/radio", sc.radio.max_retries);
    p.fetch(*r, "retry_backoff_s", "/radio", sc.radio.retry_backoff_s);
    p.fetch(*r, "duty_cycle_limit", "/radio", sc.radio.duty_cycle_limit);
    p.fetch(*r, "receive_delay1_s", "/radio", sc.radio.timing.receive_delay1_s);
    p.fetch(*r, "ack_payload_bytes", "/radio", sc.radio.timing.ack_payload_bytes);
    int rx2 = 0;
    if (p.fetch(*r, "rx2_data_rate", "/radio", rx2)) {
      if (rx2 < 0 || rx2 > 5)
        p.issues.emplace_back("/radio/rx2_data_rate: must be in [0,5]");
      else
        sc.radio.timing.rx2_dr = DataRate(rx2);
    }
    if (const auto* a = child(*r, "ack"); a && p.object(*a, "/radio/ack")) {
      p.unknown_keys(*a, "/radio/ack", {"mode", "outcome", "p_ack_rx1", "p_ack_rx2"});
      std::string mode = "fixed";
      p.fetch(*a, "mode", "/radio/ack", mode);
      if (mode == "fixed") {
        sc.radio.ack.kind = AckModel::Kind::fixed;
        std::string outcome;
        if (p.fetch(*a, "outcome", "/radio/ack", outcome)) {
          if (outcome == "ack_rx1")
            sc.radio.ack.fixed_outcome = TxOutcome::ack_rx1;
          else if (outcome == "ack_rx2")
            sc.radio.ack.fixed_outcome = TxOutcome::ack_rx2;
          else if (outcome == "no_ack")
            sc.radio.ack.fixed_outcome = TxOutcome::no_ack;
          else
            p.issues.emplace_back("/radio/ack/outcome: expected ack_rx1, ack_rx2 or no_ack");
        }
      } else if (mode == "probabilistic") {
        sc.radio.ack.kind = AckModel::Kind::probabilistic;
        p.fetch(*a, "p_ack_rx1", "/radio/ack", sc.radio.ack.p_ack_rx1);
        p.fetch(*a, "p_ack_rx2", "/radio/ack", sc.radio.ack.p_ack_rx2);
      } else {
        p.issues.emplace_back("/radio/ack/mode: expected fixed or probabilistic");
      }
    }
  }

  if (const auto* s = child(j, "sensing"); s && p.object(*s, "/sensing")) {
    std::string mode;
    if (!p.fetch(*s, "mode", "/sensing", mode))
      p.issues.emplace_back("/sensing/mode: required (poll or interrupt)");
    if (mode == "poll") {
      p.unknown_keys(*s, "/sensing", {"mode", "period_s", "sample_duration_s"});
      PollMode pm;
      p.fetch(*s, "period_s", "/sensing", pm.period_s);
      p.fetch(*s, "sample_duration_s", "/sensing", pm.sample_duration_s);
      sc.sensing = pm;
    } else if (mode == "interrupt") {
      p.unknown_keys(*s, "/sensing", {"mode", "wake_duration_s", "events"});
      InterruptMode im;
      p.fetch(*s, "wake_duration_s", "/sensing", im.wake_duration_s);
      if (const auto* e = child(*s, "events"); e && p.object(*e, "/sensing/events")) {
        std::string kind;
        if (!p.fetch(*e, "kind", "/sensing/events", kind))
          p.issues.emplace_back("/sensing/events/kind: required (poisson or periodic)");
        if (kind == "poisson") {
          p.unknown_keys(*e, "/sensing/events", {"kind", "rate_per_hour"});
          im.source = InterruptMode::Source::poisson;
          p.fetch(*e, "rate_per_hour", "/sensing/events", im.rate_per_hour);
        } else if (kind == "periodic") {
          p.unknown_keys(*e, "/sensing/events", {"kind", "period_s", "start_s"});
          im.source = InterruptMode::Source::periodic;
          p.fetch(*e, "period_s", "/sensing/events", im.period_s);
          p.fetch(*e, "start_s", "/sensing/events", im.start_s);
        } else if (!kind.empty()) {
          p.issues.emplace_back("/sensing/events/kind: expected poisson or periodic");
        }
      }
      sc.sensing = im;
    } else if (!mode.empty()) {
      p.issues.emplace_back("/sensing/mode: expected poll or interrupt");
    }
  }

  if (const auto* s = child(j, "signal"); s && p.object(*s, "/signal")) {
    std::string kind = "constant";
    p.fetch(*s, "kind", "/signal", kind);
    if (kind == "constant") {
      p.unknown_keys(*s, "/signal", {"kind", "value"});
      sc.signal.kind = SignalModel::Kind::constant;
      p.fetch(*s, "value", "/signal", sc.signal.value);
    } else if (kind == "square") {
      p.unknown_keys(*s, "/signal", {"kind", "period_s", "high_s", "phase_s", "low", "high"});
      sc.signal.kind = SignalModel::Kind::square;
      p.fetch(*s, "period_s", "/signal", sc.signal.period_s);
      p.fetch(*s, "high_s", "/signal", sc.signal.high_s);
      p.fetch(*s, "phase_s", "/signal", sc.signal.phase_s);
      p.fetch(*s, "low", "/signal", sc.signal.low);
      p.fetch(*s, "high", "/signal", sc.signal.high);
    } else if (kind == "normal") {
      p.unknown_keys(*s, "/signal", {"kind", "mean", "sigma"});
      sc.signal.kind = SignalModel::Kind::normal;
      p.fetch(*s, "mean", "/signal", sc.signal.mean);
      p.fetch(*s, "sigma", "/signal", sc.signal.sigma);
    } else {
      p.issues.emplace_back("/signal/kind: expected constant, square or normal");
    }
  }

  if (const auto* a = child(j, "accumulation"); a && p.object(*a, "/accumulation")) {
    p.unknown_keys(*a, "/accumulation", {"batch_size", "sample_bytes", "deadline_s",
                                         "overhead_bytes", "compression_ratio"});
    p.fetch(*a, "batch_size", "/accumulation", sc.accumulation.batch_size);
    p.fetch(*a, "sample_bytes", "/accumulation", sc.accumulation.sample_bytes);
    p.fetch(*a, "overhead_bytes", "/accumulation", sc.accumulation.overhead_bytes);
    p.fetch(*a, "compression_ratio", "/accumulation", sc.accumulation.compression_ratio);
    double deadline = 0.0;
    if (p.fetch(*a, "deadline_s", "/accumulation", deadline)) sc.accumulation.deadline_s = deadline;
  }

  if (const auto* f = child(j, "filter"); f && p.object(*f, "/filter")) {
    p.unknown_keys(*f, "/filter", {"enabled", "threshold", "hysteresis"});
    bool enabled = true;
    p.fetch(*f, "enabled", "/filter", enabled);
    if (enabled) {
      RelevanceFilter rf;
      p.fetch(*f, "threshold", "/filter", rf.threshold);
      p.fetch(*f, "hysteresis", "/filter", rf.hysteresis);
      sc.filter = rf;
    }
  }

  if (const auto* a = child(j, "adr"); a && p.object(*a, "/adr")) {
    p.unknown_keys(*a, "/adr",
                   {"enabled", "history_len", "device_margin_db", "step_db", "adr_ack_limit",
                    "gateway_count", "snr"});
    p.fetch(*a, "enabled", "/adr", sc.adr.enabled);
    p.fetch(*a, "history_len", "/adr", sc.adr.config.history_len);
    p.fetch(*a, "device_margin_db", "/adr", sc.adr.config.device_margin_db);
    p.fetch(*a, "step_db", "/adr", sc.adr.config.step_db);
    p.fetch(*a, "adr_ack_limit", "/adr", sc.adr.config.adr_ack_limit);
    p.fetch(*a, "gateway_count", "/adr", sc.adr.gateway_count);
    if (const auto* snr = child(*a, "snr"); snr && p.object(*snr, "/adr/snr")) {
      std::string kind = "normal";
      p.fetch(*snr, "kind", "/adr/snr", kind);
      if (kind == "normal") {
        p.unknown_keys(*snr, "/adr/snr", {"kind", "mean", "sigma"});
        sc.adr.snr.kind = SnrModel::Kind::normal;
        p.fetch(*snr, "mean", "/adr/snr", sc.adr.snr.mean);
        p.fetch(*snr, "sigma", "/adr/snr", sc.adr.snr.sigma);
      } else if (kind == "trace") {
        p.unknown_keys(*snr, "/adr/snr", {"kind", "values"});
        sc.adr.snr.kind = SnrModel::Kind::trace;
        if (const auto* vals = child(*snr, "values"); vals && vals->is_array()) {
          sc.adr.snr.trace.clear();
          for (const auto& v : *vals) {
            if (!v.is_number()) {
              p.issues.emplace_back("/adr/snr/values: expected numbers");
              break;
            }
            sc.adr.snr.trace.push_back(v.get<double>());
          }
        } else {
          p.issues.emplace_back("/adr/snr/values: required for a trace");
        }
      } else {
        p.issues.emplace_back("/adr/snr/kind: expected normal or trace");
      }
    }
  }

  std::string log_mode;
  if (p.fetch(j, "event_log", "", log_mode)) {
    if (log_mode == "off")
      sc.event_log = EventLogMode::off;
    else if (log_mode == "coalesced")
      sc.event_log = EventLogMode::coalesced;
    else if (log_mode == "full")
      sc.event_log = EventLogMode::full;
    else
      p.issues.emplace_back("/event_log: expected off, coalesced or full");
  }

  p.done();
  return sc;
}

inline Scenario load_scenario_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open scenario file: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  return scenario_from_json(j, path.parent_path());
}

// ---- report ----------------------------------------------------------------

inline nlohmann::json report_to_json(const SimReport& r) {
  nlohmann::json j;
  j["tool_version"] = version_string;
  j["schema_version"] = schema_version;
  j["scenario"] = r.scenario_name;
  j["seed"] = r.seed;
  j["lifetime_s"] = r.lifetime_s();
  j["lifetime_us"] = r.lifetime_us;
  j["battery_died"] = r.battery_died;
  j["average_current_a"] = r.average_current_a;
  j["counts"] = {{"samples", r.samples},
                 {"samples_filtered_out", r.samples_filtered_out},
                 {"uplinks", r.uplink_requests},
                 {"tx_attempts", r.tx_attempts},
                 {"delivered", r.delivered},
                 {"failed", r.failed},
                 {"retransmissions", r.retransmissions},
                 {"rx1_ack_profile_derived", r.rx1_ack_profile_derived}};
  nlohmann::json energy, durations;
  for (PowerState s : all_power_states) {
    energy[to_string(s)] = r.ledger.energy_j(s);
    durations[to_string(s)] = r.state_duration_us[static_cast<std::size_t>(s)];
  }
  energy["total"] = r.ledger.total_j();
  j["energy_j"] = energy;
  j["state_duration_us"] = durations;
  j["final_dr"] = r.final_dr;
  j["final_tx_power_dbm"] = r.final_tx_power_dbm;
  return j;
}

// Event log CSV: t_us,state,duration_us,energy_nJ,detail
inline std::string events_to_csv(const std::vector<EventLogEntry>& events) {
  std::string out = "t_us,state,duration_us,energy_nJ,detail\n";
  char line[192];
  for (const auto& e : events) {
    std::snprintf(line, sizeof(line), "%lld,%s,%lld,%.3f,", static_cast<long long>(e.t_us),
                  to_string(e.state), static_cast<long long>(e.duration_us), e.energy_j * 1e9);
    out += line;
    out += e.detail;
    out += '\n';
  }
  return out;
}

}  // namespace loralife
