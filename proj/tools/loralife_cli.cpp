#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "loralife/loralife.hpp"

namespace fs = std::filesystem;
using namespace loralife;

namespace {

// mJ values print like the source table: one decimal, trailing .0 stripped.
std::string fmt_mj(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", v);
  std::string s = buf;
  if (s.size() > 2 && s.compare(s.size() - 2, 2, ".0") == 0) s.erase(s.size() - 2);
  return s;
}

RxWindowCalibration resolve_calibration(const std::string& flag_path) {
  if (!flag_path.empty()) return load_calibration_file(flag_path);
  if (const char* env = std::getenv("LORALIFE_CALIBRATION"); env && env[0] != '\0')
    return load_calibration_file(env);
  return RxWindowCalibration::table1_defaults();
}

int run_airtime(int sf, double bw, int cr, int payload, int preamble, bool implicit_header,
                bool no_crc, int tx_power, const std::string& sweep) {
  LoRaParams params;
  params.sf = sf;
  params.bw_hz = bw;
  params.cr = cr;
  params.preamble_syms = preamble;
  params.explicit_header = !implicit_header;
  params.crc_on = !no_crc;

  if (sweep.empty() && payload < 0)
    throw ValidationError("give --payload N or --sweep A..B");

  if (!sweep.empty()) {
    // Tidy CSV of the airtime/per-bit curve, ready for any plotting tool.
    const auto sep = sweep.find("..");
    if (sep == std::string::npos) throw ValidationError("--sweep wants a range like 1..51");
    const int first = std::stoi(sweep.substr(0, sep));
    const int last = std::stoi(sweep.substr(sep + 2));
    if (first < 1 || last < first) throw ValidationError("--sweep range must be 1 <= A <= B");
    const PowerProfile profile;
    std::printf("payload_bytes,toa_ms,energy_per_bit_uJ\n");
    for (int pl = first; pl <= last; ++pl)
      std::printf("%d,%.3f,%.3f\n", pl, time_on_air(params, pl) * 1e3,
                  energy_per_bit(profile, params, tx_power, pl) * 1e6);
    return 0;
  }

  const double toa = time_on_air(params, payload);
  std::printf("time on air: %.3f ms\n", toa * 1e3);
  std::printf("payload symbols: %d\n", payload_symbol_count(params, payload));
  if (payload >= 1) {
    const PowerProfile profile;
    const double epb = energy_per_bit(profile, params, tx_power, payload);
    std::printf("energy per bit: %.3f uJ (%d dBm Tx, default profile)\n", epb * 1e6, tx_power);
  }
  return 0;
}

struct Table1Row {
  std::string rx1_ack, rx1_noack, rx2_ack, rx2_noack, worst, best, noack;
};

int run_table1(const std::string& cal_path, bool quiet_rows) {
  const auto cal = resolve_calibration(cal_path);
  const double tol_mj = 0.1 - 1e-9;  // |delta| of exactly 0.1 mJ still flags
  int mismatches = 0;

  if (!quiet_rows)
    std::printf("%-5s %9s %10s %9s %10s %10s %9s %7s\n", "DR", "RX1 ACK", "RX1 NOACK", "RX2 ACK",
                "RX2 NOACK", "ACK worst", "ACK best", "NO ACK");
  for (int dr = 0; dr < 6; ++dr) {
    const auto i = static_cast<std::size_t>(dr);
    const double worst = transaction_rx_energy_mj(cal, DataRate(dr), TxOutcome::ack_rx2);
    const double noack = transaction_rx_energy_mj(cal, DataRate(dr), TxOutcome::no_ack);
    const auto& best = cal.rx1_ack_mj[i];

    Table1Row row;
    row.rx1_ack = best ? fmt_mj(*best) : "-";
    row.rx1_noack = fmt_mj(cal.rx1_noack_mj[i]);
    row.rx2_ack = fmt_mj(cal.rx2_ack_mj);
    row.rx2_noack = fmt_mj(cal.rx2_noack_mj);
    row.worst = fmt_mj(worst);
    row.best = best ? fmt_mj(*best) : "-";
    row.noack = fmt_mj(noack);
    if (!quiet_rows)
      std::printf("DR%-3d %9s %10s %9s %10s %10s %9s %7s\n", dr, row.rx1_ack.c_str(),
                  row.rx1_noack.c_str(), row.rx2_ack.c_str(), row.rx2_noack.c_str(),
                  row.worst.c_str(), row.best.c_str(), row.noack.c_str());

    if (std::abs(worst - cal.total_ack_worst_mj[i]) >= tol_mj) {
      std::printf("DR%d: ACK worst-case %s from components differs from printed %s\n", dr,
                  fmt_mj(worst).c_str(), fmt_mj(cal.total_ack_worst_mj[i]).c_str());
      ++mismatches;
    }
    if (std::abs(noack - cal.total_noack_mj[i]) >= tol_mj) {
      std::printf("DR%d: NO-ACK total %s from components differs from printed %s\n", dr,
                  fmt_mj(noack).c_str(), fmt_mj(cal.total_noack_mj[i]).c_str());
      ++mismatches;
    }
    if (best && cal.total_ack_best_mj[i] &&
        std::abs(*best - *cal.total_ack_best_mj[i]) >= tol_mj) {
      std::printf("DR%d: ACK best-case %s differs from printed %s\n", dr, fmt_mj(*best).c_str(),
                  fmt_mj(*cal.total_ack_best_mj[i]).c_str());
      ++mismatches;
    }
  }

  if (mismatches == 0) {
    std::printf("all printed totals match the component sums to 0.1 mJ\n");
    return 0;
  }
  std::printf("%d mismatch(es) between printed totals and component sums\n", mismatches);
  return 1;
}

void print_summary(const SimReport& r) {
  std::printf("lifetime %.3f s | avg current %.3e A | uplinks %lld | delivered %lld | %s\n",
              r.lifetime_s(), r.average_current_a, static_cast<long long>(r.uplink_requests),
              static_cast<long long>(r.delivered),
              r.battery_died ? "battery died" : "reached limit");
}

void write_outputs(const SimReport& r, const fs::path& out_dir, bool want_json, bool want_csv,
                   const std::string& suffix) {
  fs::create_directories(out_dir);
  if (want_json) {
    std::ofstream out(out_dir / ("report" + suffix + ".json"));
    if (!out) throw std::runtime_error("cannot write report in " + out_dir.string());
    out << report_to_json(r).dump(2) << "\n";
  }
  if (want_csv) {
    std::ofstream out(out_dir / ("events" + suffix + ".csv"));
    if (!out) throw std::runtime_error("cannot write event log in " + out_dir.string());
    out << events_to_csv(r.events);
  }
}

int run_simulate(const std::string& scenario_path, std::optional<std::uint64_t> seed,
                 const std::string& out_dir, const std::string& format,
                 const std::string& seeds_range) {
  Scenario sc = load_scenario_file(scenario_path);
  if (seed) sc.seed = *seed;

  bool want_json = false, want_csv = false;
  for (std::size_t pos = 0; pos < format.size();) {
    const auto comma = format.find(',', pos);
    const std::string tok = format.substr(pos, comma == std::string::npos ? comma : comma - pos);
    if (tok == "json")
      want_json = true;
    else if (tok == "csv")
      want_csv = true;
    else
      throw ValidationError("--format accepts json, csv or json,csv");
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }

  if (seeds_range.empty()) {
    const SimReport report = run(sc);
    write_outputs(report, out_dir, want_json, want_csv, "");
    print_summary(report);
    return 0;
  }

  // --seeds A..B fans isolated runs across a small worker pool.
  const auto sep = seeds_range.find("..");
  if (sep == std::string::npos)
    throw ValidationError("--seeds wants a range like 1..8");
  const std::uint64_t first = std::stoull(seeds_range.substr(0, sep));
  const std::uint64_t last = std::stoull(seeds_range.substr(sep + 2));
  if (last < first) throw ValidationError("--seeds range is reversed");

  const std::size_t n = static_cast<std::size_t>(last - first + 1);
  std::vector<SimReport> reports(n);
  std::vector<std::thread> workers;
  const std::size_t pool =
      std::min<std::size_t>(n, std::max(1u, std::thread::hardware_concurrency()));
  std::atomic<std::size_t> cursor{0};
  for (std::size_t w = 0; w < pool; ++w)
    workers.emplace_back([&] {
      for (std::size_t i = cursor.fetch_add(1); i < n; i = cursor.fetch_add(1)) {
        Scenario local = sc;
        local.seed = first + i;
        reports[i] = run(local);
      }
    });
  for (auto& t : workers) t.join();

  for (std::size_t i = 0; i < n; ++i) {
    write_outputs(reports[i], out_dir, want_json, want_csv,
                  "-" + std::to_string(first + i));
    std::printf("seed %llu: ", static_cast<unsigned long long>(first + i));
    print_summary(reports[i]);
  }
  return 0;
}

int run_compare(const std::vector<std::string>& scenario_paths,
                std::optional<std::uint64_t> seed) {
  if (scenario_paths.size() != 2)
    throw ValidationError("compare wants exactly two --scenario files");

  std::vector<SimReport> reports;
  const char* labels[2] = {"A", "B"};
  for (int i = 0; i < 2; ++i) {
    Scenario sc = load_scenario_file(scenario_paths[static_cast<std::size_t>(i)]);
    if (seed) sc.seed = *seed;
    reports.push_back(run(sc));
  }

  for (int i = 0; i < 2; ++i) {
    const auto& r = reports[static_cast<std::size_t>(i)];
    std::printf("scenario %s: %s\n", labels[i], r.scenario_name.c_str());
    std::printf("  lifetime: %.3f s (%.2f days) [%s]\n", r.lifetime_s(),
                r.lifetime_s() / 86400.0, r.battery_died ? "battery died" : "reached limit");
    std::printf("  average current: %.3e A\n", r.average_current_a);
    const double total = r.ledger.total_j();
    std::printf("  energy: %.3f J |", total);
    for (PowerState s : all_power_states)
      std::printf(" %s %.1f%%", to_string(s),
                  total > 0.0 ? 100.0 * r.ledger.energy_j(s) / total : 0.0);
    std::printf("\n");
    std::printf("  uplinks %lld | delivered %lld | retransmissions %lld\n",
                static_cast<long long>(r.uplink_requests), static_cast<long long>(r.delivered),
                static_cast<long long>(r.retransmissions));
  }
  std::printf("lifetime ratio (B/A): %.3f\n", reports[1].lifetime_s() / reports[0].lifetime_s());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LoRaWAN Class A energy model and battery lifetime simulator"};
  app.set_version_flag("--version", std::string("loralife ") + version_string + " (schema " +
                                        std::to_string(schema_version) + ")");
  app.require_subcommand(1);

  // airtime
  auto* airtime = app.add_subcommand("airtime", "Time on air and Tx energy per bit");
  int sf = 7, cr = 1, payload = -1, preamble = 8, tx_power = 14;
  double bw = 125000.0;
  bool implicit_header = false, no_crc = false;
  std::string sweep;
  airtime->add_option("--sf", sf, "Spreading factor 7..12")->required();
  auto* payload_opt = airtime->add_option("--payload", payload, "Payload length in bytes");
  airtime->add_option("--bw", bw, "Bandwidth in Hz (default 125000)");
  airtime->add_option("--cr", cr, "Coding rate offset 1..4 (4/5..4/8)");
  airtime->add_option("--preamble", preamble, "Preamble symbols (default 8)");
  airtime->add_flag("--implicit-header", implicit_header, "Implicit PHY header");
  airtime->add_flag("--no-crc", no_crc, "Disable payload CRC");
  airtime->add_option("--tx-power", tx_power, "Tx power in dBm for the per-bit figure");
  auto* sweep_opt =
      airtime->add_option("--sweep", sweep, "Payload range A..B; emits a CSV curve instead");
  payload_opt->excludes(sweep_opt);

  // table1
  auto* table1 = app.add_subcommand("table1", "Reconstruct the receive-window energy table");
  std::string cal_path;
  table1->add_option("--calibration", cal_path, "Calibration JSON file");

  // calibrate-check
  auto* calcheck =
      app.add_subcommand("calibrate-check", "Verify a calibration file's internal arithmetic");
  std::string calcheck_path;
  calcheck->add_option("--calibration", calcheck_path, "Calibration JSON file");

  // simulate
  auto* simulate = app.add_subcommand("simulate", "Run a scenario and write reports");
  std::string scenario_path, out_dir = ".", format = "json,csv", seeds_range;
  std::uint64_t seed_value = 0;
  simulate->add_option("--scenario", scenario_path, "Scenario JSON file")->required();
  auto* seed_opt = simulate->add_option("--seed", seed_value, "Override the scenario seed");
  simulate->add_option("--out", out_dir, "Output directory (default .)");
  simulate->add_option("--format", format, "json, csv or json,csv (default both)");
  simulate->add_option("--seeds", seeds_range, "Seed range A..B, one isolated run per seed");

  // compare
  auto* compare = app.add_subcommand("compare", "Run two scenarios and compare lifetimes");
  std::vector<std::string> compare_paths;
  std::uint64_t cmp_seed_value = 0;
  compare->add_option("--scenario", compare_paths, "Scenario JSON file (give twice)");
  auto* cmp_seed_opt =
      compare->add_option("--seed", cmp_seed_value, "Override both scenario seeds");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (airtime->parsed())
      return run_airtime(sf, bw, cr, payload, preamble, implicit_header, no_crc, tx_power,
                         sweep);
    if (table1->parsed()) return run_table1(cal_path, false);
    if (calcheck->parsed()) return run_table1(calcheck_path, true);
    if (simulate->parsed())
      return run_simulate(scenario_path,
                          seed_opt->count() > 0 ? std::optional(seed_value) : std::nullopt,
                          out_dir, format, seeds_range);
    if (compare->parsed())
      return run_compare(compare_paths, cmp_seed_opt->count() > 0
                                            ? std::optional(cmp_seed_value)
                                            : std::nullopt);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ParameterError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const CalibrationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
