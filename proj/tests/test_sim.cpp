#include <catch2/catch.hpp>

#include <cmath>
#include <map>

#include "loralife/scenario_io.hpp"
#include "loralife/sim.hpp"

using namespace loralife;

namespace {

Scenario zero_event_year() {
  Scenario sc;
  sc.name = "zero-event";
  sc.duration_s = 31536000.0;  // one year
  InterruptMode im;
  im.rate_per_hour = 0.0;
  sc.sensing = im;
  sc.event_log = EventLogMode::full;
  return sc;
}

Scenario periodic_uplinks(double period_s, double duration_s, int dr, bool confirmed,
                          TxOutcome outcome) {
  Scenario sc;
  sc.duration_s = duration_s;
  InterruptMode im;
  im.source = InterruptMode::Source::periodic;
  im.period_s = period_s;
  im.start_s = 10.0;
  sc.sensing = im;
  sc.radio.initial_dr = dr;
  sc.radio.confirmed = confirmed;
  sc.radio.ack.kind = AckModel::Kind::fixed;
  sc.radio.ack.fixed_outcome = outcome;
  sc.accumulation = AccumulationPolicy{1, 12, std::nullopt};
  sc.event_log = EventLogMode::full;
  return sc;
}

}  // namespace

TEST_CASE("a silent node sleeps a whole year at 3.3 uW") {
  const auto report = run(zero_event_year());
  CHECK(report.lifetime_us == 31536000LL * 1000000LL);
  CHECK_FALSE(report.battery_died);
  CHECK(report.samples == 0);
  CHECK(report.uplink_requests == 0);
  // 1 uA * 3.3 V * 31,536,000 s = 104.0688 J, all of it asleep.
  CHECK(report.ledger.total_j() == Approx(104.0688).epsilon(1e-9));
  CHECK(report.ledger.energy_j(PowerState::sleep) == Approx(104.0688).epsilon(1e-9));
  CHECK(report.ledger.energy_j(PowerState::tx) == 0.0);
  CHECK(report.state_duration_us[static_cast<std::size_t>(PowerState::sleep)] ==
        report.lifetime_us);
  // lifetime * avg current * voltage = ledger total
  CHECK(report.average_current_a * report.lifetime_s() * 3.3 ==
        Approx(report.ledger.total_j()).epsilon(1e-6));
}

TEST_CASE("identical scenario and seed produce byte-identical outputs") {
  Scenario sc = periodic_uplinks(600.0, 7200.0, 3, true, TxOutcome::no_ack);
  sc.seed = 99;
  sc.radio.ack.kind = AckModel::Kind::probabilistic;
  sc.radio.ack.p_ack_rx1 = 0.3;
  sc.radio.ack.p_ack_rx2 = 0.3;
  const auto a = run(sc);
  const auto b = run(sc);
  CHECK(report_to_json(a).dump() == report_to_json(b).dump());
  CHECK(events_to_csv(a.events) == events_to_csv(b.events));
}

TEST_CASE("battery lifetime closed form") {
  CHECK(battery_lifetime_s(1000.0, 3.3, 1e-3) == Approx(3.6e6));  // 1000 h
  CHECK(battery_lifetime_s(1000.0, 3.3, 1e-6) == Approx(3.6e9));  // ~114 years
  CHECK_THROWS_AS(battery_lifetime_s(0.0, 3.3, 1e-3), ParameterError);
}

TEST_CASE("run-to-death agrees with the closed form on a constant-current node") {
  Scenario sc;
  sc.name = "pure-sleep";
  sc.run_to_battery_death = true;
  InterruptMode im;
  im.rate_per_hour = 0.0;
  sc.sensing = im;
  sc.event_log = EventLogMode::off;
  const auto report = run(sc);
  CHECK(report.battery_died);
  const double expected = battery_lifetime_s(1000.0, 3.3, 1e-6);
  CHECK(std::abs(report.lifetime_s() - expected) / expected < 1e-3);
  // The ledger drained exactly the battery's energy.
  CHECK(report.ledger.total_j() == Approx(1000.0 * 3.6 * 3.3).epsilon(1e-9));
}

TEST_CASE("time and energy conservation on a busy confirmed scenario") {
  Scenario sc = periodic_uplinks(400.0, 86400.0, 0, true, TxOutcome::no_ack);
  sc.processing_s = 0.002;
  const auto report = run(sc);

  std::int64_t dur_sum = 0;
  for (auto d : report.state_duration_us) dur_sum += d;
  CHECK(dur_sum == report.lifetime_us);

  double event_sum = 0.0;
  std::int64_t event_dur = 0;
  for (const auto& e : report.events) {
    event_sum += e.energy_j;
    event_dur += e.duration_us;
  }
  CHECK(event_dur == report.lifetime_us);
  CHECK(std::abs(event_sum - report.ledger.total_j()) <= 1e-9 * report.ledger.total_j());
}

TEST_CASE("confirmed uplink with no ack retries and then fails") {
  Scenario sc = periodic_uplinks(90000.0, 86400.0, 0, true, TxOutcome::no_ack);
  sc.radio.max_retries = 3;
  sc.radio.retry_backoff_s = 2.0;
  const auto report = run(sc);
  CHECK(report.uplink_requests == 1);
  CHECK(report.tx_attempts == 4);  // original + 3 retries
  CHECK(report.retransmissions == 3);
  CHECK(report.delivered == 0);
  CHECK(report.failed == 1);
  // Each attempt times out both windows: 4 * 7.7 mJ of receive energy at DR0.
  CHECK(report.ledger.energy_j(PowerState::rx) == Approx(4 * 7.7e-3).epsilon(1e-9));
  const double toa = time_on_air(datarate_params(DataRate(0)), 25);
  CHECK(report.ledger.energy_j(PowerState::tx) ==
        Approx(4 * state_energy(PowerProfile{}, PowerState::tx, toa, 14)).epsilon(1e-9));
}

TEST_CASE("unconfirmed uplinks are delivered without retries") {
  Scenario sc = periodic_uplinks(3600.0, 86400.0, 5, false, TxOutcome::unconfirmed);
  const auto report = run(sc);
  CHECK(report.uplink_requests == 24);
  CHECK(report.tx_attempts == 24);
  CHECK(report.delivered == 24);
  CHECK(report.retransmissions == 0);
  CHECK(report.failed == 0);
  CHECK(report.ledger.energy_j(PowerState::rx) == Approx(24 * 1.8e-3).epsilon(1e-9));
}

TEST_CASE("ack in RX1 skips RX2 and uses the best-case energy") {
  Scenario sc = periodic_uplinks(3600.0, 3600.0, 5, true, TxOutcome::ack_rx1);
  const auto report = run(sc);
  CHECK(report.delivered == 1);
  CHECK(report.ledger.energy_j(PowerState::rx) == Approx(1.7e-3).epsilon(1e-9));
  CHECK(report.rx1_ack_profile_derived == 0);
}

TEST_CASE("rx1 ack at DR0 falls back to the profile-derived energy") {
  Scenario sc = periodic_uplinks(3600.0, 3600.0, 0, true, TxOutcome::ack_rx1);
  const auto report = run(sc);
  CHECK(report.delivered == 1);
  CHECK(report.rx1_ack_profile_derived == 1);
  const double expected =
      rx1_ack_fallback_mj(sc.calibration, sc.profile, DataRate(0)) * 1e-3;
  CHECK(report.ledger.energy_j(PowerState::rx) == Approx(expected).epsilon(1e-9));
}

TEST_CASE("poll plus threshold filter sends once per rising edge") {
  Scenario sc;
  sc.duration_s = 86400.0;
  sc.sensing = PollMode{60.0, 0.01};
  sc.signal.kind = SignalModel::Kind::square;
  sc.signal.period_s = 3600.0;
  sc.signal.high_s = 120.0;
  sc.signal.phase_s = 1800.0;
  sc.filter = RelevanceFilter{0.5, 0.0};
  sc.accumulation = AccumulationPolicy{1, 12, std::nullopt};
  const auto report = run(sc);
  // Polls at 60 s, 120 s, ...; the wake coinciding with the limit is not run.
  CHECK(report.samples == 1439);
  CHECK(report.uplink_requests == 24);
  CHECK(report.delivered == 24);
  CHECK(report.samples_filtered_out == 1439 - 24);
}

TEST_CASE("an all-below-threshold trace yields zero uplinks and a sleepy ledger") {
  Scenario sc;
  sc.duration_s = 7 * 86400.0;
  sc.sensing = PollMode{300.0, 0.002};
  sc.signal.kind = SignalModel::Kind::constant;
  sc.signal.value = 0.1;
  sc.filter = RelevanceFilter{0.5, 0.1};
  sc.event_log = EventLogMode::off;
  const auto report = run(sc);
  CHECK(report.uplink_requests == 0);
  CHECK(report.tx_attempts == 0);
  CHECK(report.samples_filtered_out == report.samples);
  CHECK(report.ledger.energy_j(PowerState::tx) == 0.0);
  CHECK(report.ledger.energy_j(PowerState::rx) == 0.0);
  CHECK(report.ledger.energy_j(PowerState::sleep) > 0.9 * report.ledger.total_j());
}

TEST_CASE("accumulation deadline flushes a partial batch mid-sleep") {
  Scenario sc = periodic_uplinks(1000.0, 4000.0, 5, false, TxOutcome::unconfirmed);
  sc.accumulation = AccumulationPolicy{10, 2, 1500.0};
  const auto report = run(sc);
  // Samples at 10, 1010, 2010, 3010; deadlines at 1510 (flushes 2), 3510 (flushes 2).
  CHECK(report.samples == 4);
  CHECK(report.uplink_requests == 2);
  CHECK(report.delivered == 2);
}

TEST_CASE("ADR reacts to acked uplinks and converges to DR5 at 2 dBm") {
  Scenario sc = periodic_uplinks(600.0, 7200.0, 0, true, TxOutcome::ack_rx1);
  sc.adr.enabled = true;
  sc.adr.snr.kind = SnrModel::Kind::trace;
  sc.adr.snr.trace = {20.0};
  const auto report = run(sc);
  CHECK(report.final_dr == 5);
  CHECK(report.final_tx_power_dbm == 2);
}

TEST_CASE("ADR lowers total node energy on a good link") {
  Scenario sc = periodic_uplinks(600.0, 2 * 86400.0, 0, true, TxOutcome::ack_rx2);
  sc.event_log = EventLogMode::off;
  sc.adr.snr.kind = SnrModel::Kind::trace;
  sc.adr.snr.trace = {15.0};
  sc.adr.enabled = false;
  const auto fixed_dr = run(sc);
  sc.adr.enabled = true;
  const auto adaptive = run(sc);
  CHECK(adaptive.final_dr == 5);
  CHECK(adaptive.final_tx_power_dbm == 2);
  CHECK(adaptive.delivered == fixed_dr.delivered);
  CHECK(adaptive.ledger.total_j() < 0.5 * fixed_dr.ledger.total_j());
}

TEST_CASE("ADR-ACK backoff steps the data rate down after silence") {
  Scenario sc = periodic_uplinks(100.0, 86400.0 * 2, 5, false, TxOutcome::unconfirmed);
  sc.event_log = EventLogMode::off;
  sc.adr.enabled = true;
  sc.adr.config.adr_ack_limit = 64;
  sc.adr.snr.kind = SnrModel::Kind::trace;
  sc.adr.snr.trace = {0.0};
  const auto report = run(sc);
  // 1728 silent uplinks; a step down every 64 walks DR5 -> DR0 and stays.
  CHECK(report.final_dr == 0);
}

TEST_CASE("higher sleep current strictly shortens the lifetime") {
  Scenario sc;
  sc.run_to_battery_death = true;
  InterruptMode im;
  im.rate_per_hour = 0.0;
  sc.sensing = im;
  sc.event_log = EventLogMode::off;
  const auto base = run(sc);
  sc.profile.sleep_current_a = 2e-6;
  const auto heavier = run(sc);
  CHECK(heavier.lifetime_us < base.lifetime_us);
}

TEST_CASE("batching never increases total energy for the same sampling") {
  Scenario base;
  base.duration_s = 86400.0;
  base.sensing = PollMode{600.0, 0.01};
  base.accumulation = AccumulationPolicy{1, 3, std::nullopt};
  base.radio.initial_dr = 0;
  base.event_log = EventLogMode::off;
  const auto batch1 = run(base);
  base.accumulation.batch_size = 5;
  const auto batch5 = run(base);
  CHECK(batch5.samples == batch1.samples);
  CHECK(batch5.ledger.total_j() < batch1.ledger.total_j());
}

TEST_CASE("duty cycle safety over replayed event log") {
  Scenario sc;
  sc.duration_s = 2 * 86400.0;
  sc.sensing = PollMode{30.0, 0.005};
  sc.accumulation = AccumulationPolicy{1, 12, std::nullopt};
  sc.radio.initial_dr = 0;  // 25 B at SF12: ~1.32 s on air, heavily throttled
  sc.event_log = EventLogMode::full;
  const auto report = run(sc);

  std::map<std::int64_t, double> on_air_per_day;
  double max_toa = 0.0;
  for (const auto& e : report.events) {
    if (e.state != PowerState::tx) continue;
    on_air_per_day[e.t_us / 86400000000LL] += static_cast<double>(e.duration_us) * 1e-6;
    max_toa = std::max(max_toa, static_cast<double>(e.duration_us) * 1e-6);
  }
  REQUIRE_FALSE(on_air_per_day.empty());
  for (const auto& [day, on_air] : on_air_per_day)
    CHECK(on_air <= 0.01 * 86400.0 + max_toa);
  // The throttle actually bites: fewer transmissions than requests.
  CHECK(report.tx_attempts < report.uplink_requests);
}

TEST_CASE("scenario validation rejects inconsistent inputs with a key list") {
  Scenario sc;
  CHECK_THROWS_AS(run(sc), ValidationError);  // no duration, no run-to-death

  sc.duration_s = 100.0;
  sc.battery.voltage_v = 3.0;  // profile says 3.3
  try {
    run(sc);
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    CHECK(e.issues().size() == 1);
    CHECK(e.issues()[0].find("battery voltage") != std::string::npos);
  }

  sc = Scenario{};
  sc.duration_s = 100.0;
  InterruptMode im;
  im.rate_per_hour = 5.0;
  sc.sensing = im;  // stochastic, but no seed
  CHECK_THROWS_AS(run(sc), ValidationError);
  sc.seed = 1;
  CHECK_NOTHROW(run(sc));

  sc = Scenario{};
  sc.duration_s = 100.0;
  sc.radio.initial_dr = 0;
  sc.accumulation = AccumulationPolicy{4, 12, std::nullopt};  // 61 B > 51 B at DR0
  CHECK_THROWS_AS(run(sc), ValidationError);
}

TEST_CASE("battery death mid-transmission cuts the slice and balances the books") {
  Scenario sc = periodic_uplinks(3600.0, 86400.0, 0, false, TxOutcome::unconfirmed);
  sc.run_to_battery_death = true;
  sc.battery.capacity_mah = 0.001;  // 11.88 mJ: dies during the first Tx burst
  const auto report = run(sc);
  CHECK(report.battery_died);
  CHECK(report.tx_attempts == 1);
  CHECK(report.delivered == 0);
  CHECK(report.ledger.total_j() == Approx(0.001 * 3.6 * 3.3).epsilon(1e-9));
  std::int64_t dur_sum = 0;
  for (auto d : report.state_duration_us) dur_sum += d;
  CHECK(dur_sum == report.lifetime_us);
  CHECK(report.events.back().state == PowerState::tx);
  // The cut Tx slice is shorter than the full frame would have been.
  const double toa = time_on_air(datarate_params(DataRate(0)), 25);
  CHECK(report.events.back().duration_us < static_cast<std::int64_t>(toa * 1e6));
}

TEST_CASE("calibration whose rx timeout overruns the RX2 opening is rejected") {
  Scenario sc;
  sc.duration_s = 100.0;
  sc.calibration.rx_window_overhead_s = 2.0;
  CHECK_THROWS_AS(run(sc), ValidationError);
}

TEST_CASE("in-flight transactions complete past the duration limit") {
  // One event at t=10, limit at t=11: the transaction (~2.3 s) finishes.
  Scenario sc = periodic_uplinks(86400.0, 11.0, 5, false, TxOutcome::unconfirmed);
  const auto report = run(sc);
  CHECK(report.uplink_requests == 1);
  CHECK(report.delivered == 1);
  CHECK(report.lifetime_us > 11000000LL);
  std::int64_t dur_sum = 0;
  for (auto d : report.state_duration_us) dur_sum += d;
  CHECK(dur_sum == report.lifetime_us);
}
