#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <deque>
#include <limits>
#include <optional>
#include <queue>
#include <string>
#include <vector>

#include "loralife/adr.hpp"
#include "loralife/energy.hpp"
#include "loralife/errors.hpp"
#include "loralife/mac.hpp"
#include "loralife/phy.hpp"
#include "loralife/rng.hpp"
#include "loralife/strategy.hpp"

namespace loralife {

struct BatterySpec {
  double capacity_mah = 1000.0;
  // Defaults to the profile supply voltage; setting both to different values
  // is a battery model inconsistency and is rejected.
  std::optional<double> voltage_v{};
};

// ACK outcomes are scenario inputs, not a channel model: either a fixed
// directive or seeded probabilities per attempt.
struct AckModel {
  enum class Kind { fixed, probabilistic };
  Kind kind = Kind::fixed;
  TxOutcome fixed_outcome = TxOutcome::no_ack;
  double p_ack_rx1 = 0.0;
  double p_ack_rx2 = 0.0;
};

struct RadioConfig {
  int initial_dr = 5;
  int tx_power_dbm = 14;
  bool confirmed = false;
  AckModel ack;
  int max_retries = 3;
  double retry_backoff_s = 2.0;
  double duty_cycle_limit = 0.01;
  MacTiming timing;
};

// What the sensor reads when it samples.
struct SignalModel {
  enum class Kind { constant, square, normal };
  Kind kind = Kind::constant;
  double value = 0.0;  // constant
  double period_s = 3600.0;
  double high_s = 1.0;
  double phase_s = 0.0;
  double low = 0.0;
  double high = 1.0;
  double mean = 0.0;  // normal
  double sigma = 1.0;

  double sample(double t_s, Rng& rng) const {
    switch (kind) {
      case Kind::constant: return value;
      case Kind::square: {
        if (t_s < phase_s) return low;
        const double m = std::fmod(t_s - phase_s, period_s);
        return m < high_s ? high : low;
      }
      case Kind::normal: return rng.normal(mean, sigma);
    }
    return value;
  }
};

struct SnrModel {
  enum class Kind { normal, trace };
  Kind kind = Kind::normal;
  double mean = 0.0;
  double sigma = 0.0;
  std::vector<double> trace;
};

struct AdrSettings {
  bool enabled = false;
  AdrConfig config;
  SnrModel snr;
  int gateway_count = 1;
};

enum class EventLogMode { off, coalesced, full };

// Declarative experiment input. All stochastic elements draw from streams
// derived from the single seed.
struct Scenario {
  std::string name = "scenario";
  std::optional<double> duration_s{};
  bool run_to_battery_death = false;
  std::optional<std::uint64_t> seed{};
  BatterySpec battery;
  PowerProfile profile;
  RxWindowCalibration calibration = RxWindowCalibration::table1_defaults();
  RadioConfig radio;
  SensingMode sensing = PollMode{};
  SignalModel signal;
  double processing_s = 0.0;  // MCU time charged per processed sample
  AccumulationPolicy accumulation;
  std::optional<RelevanceFilter> filter{};
  AdrSettings adr;
  EventLogMode event_log = EventLogMode::coalesced;
};

struct EventLogEntry {
  std::int64_t t_us = 0;
  PowerState state = PowerState::sleep;
  std::int64_t duration_us = 0;
  double energy_j = 0.0;
  std::string detail;
};

struct SimReport {
  std::string scenario_name;
  std::uint64_t seed = 0;
  std::int64_t lifetime_us = 0;
  bool battery_died = false;
  std::int64_t samples = 0;
  std::int64_t samples_filtered_out = 0;
  std::int64_t uplink_requests = 0;
  std::int64_t tx_attempts = 0;
  std::int64_t delivered = 0;
  std::int64_t failed = 0;
  std::int64_t retransmissions = 0;
  std::int64_t rx1_ack_profile_derived = 0;
  EnergyLedger ledger;
  std::array<std::int64_t, all_power_states.size()> state_duration_us{};
  double average_current_a = 0.0;
  int final_dr = 0;
  int final_tx_power_dbm = 0;
  std::vector<EventLogEntry> events;

  double lifetime_s() const noexcept { return static_cast<double>(lifetime_us) * 1e-6; }
};

// Ideal linear battery: capacity * 3600 / average current.
inline double battery_lifetime_s(double capacity_mah, double voltage_v,
                                 double average_current_a) {
  if (!(capacity_mah > 0.0) || !(voltage_v > 0.0) || !(average_current_a > 0.0))
    throw ParameterError("battery lifetime needs capacity, voltage and current > 0");
  return capacity_mah * 3.6 / average_current_a;
}

inline bool scenario_is_stochastic(const Scenario& sc) {
  if (const auto* i = std::get_if<InterruptMode>(&sc.sensing))
    if (i->source == InterruptMode::Source::poisson && i->rate_per_hour > 0.0) return true;
  if (sc.radio.confirmed && sc.radio.ack.kind == AckModel::Kind::probabilistic) return true;
  if (sc.adr.enabled && sc.adr.snr.kind == SnrModel::Kind::normal && sc.adr.snr.sigma > 0.0)
    return true;
  if (sc.signal.kind == SignalModel::Kind::normal) return true;
  return false;
}

// Lowest DR index whose regional maximum still fits the scenario's largest
// frame; the ADR-ACK backoff never steps below it.
inline int min_dr_for_payload(int payload_bytes) {
  for (int dr = 0; dr < 6; ++dr)
    if (payload_bytes <= max_payload_bytes(DataRate(dr))) return dr;
  throw PayloadTooLargeError("payload of " + std::to_string(payload_bytes) +
                             " B exceeds every data rate's maximum");
}

inline void validate(const Scenario& sc) {
  std::vector<std::string> issues;
  const auto check = [&](auto&& fn) {
    try {
      fn();
    } catch (const ValidationError& e) {
      for (const auto& i : e.issues()) issues.push_back(i);
    } catch (const std::exception& e) {
      issues.emplace_back(e.what());
    }
  };

  if (!sc.duration_s && !sc.run_to_battery_death)
    issues.emplace_back("scenario needs duration_s, run_to_battery_death, or both");
  if (sc.duration_s && !(*sc.duration_s > 0.0))
    issues.emplace_back("duration_s must be > 0");
  if (!(sc.battery.capacity_mah > 0.0)) issues.emplace_back("battery capacity must be > 0");
  if (sc.battery.voltage_v && *sc.battery.voltage_v != sc.profile.supply_voltage_v)
    issues.emplace_back("battery voltage disagrees with the profile supply voltage");

  check([&] { validate(sc.profile); });
  check([&] { validate(sc.calibration); });
  check([&] { validate(sc.sensing); });
  check([&] { validate(sc.accumulation); });
  if (sc.filter) check([&] { validate(*sc.filter); });

  if (sc.radio.initial_dr < 0 || sc.radio.initial_dr > 5)
    issues.emplace_back("radio.initial_dr must be in [0,5]");
  if (!sc.profile.tx_current_by_dbm.count(sc.radio.tx_power_dbm))
    issues.emplace_back("radio.tx_power_dbm has no entry in the profile Tx current table");
  if (sc.radio.max_retries < 0) issues.emplace_back("radio.max_retries must be >= 0");
  if (sc.radio.retry_backoff_s < 0.0) issues.emplace_back("radio.retry_backoff_s must be >= 0");
  if (!(sc.radio.duty_cycle_limit > 0.0) || sc.radio.duty_cycle_limit > 1.0)
    issues.emplace_back("radio.duty_cycle_limit must be in (0,1]");
  if (sc.radio.confirmed && sc.radio.ack.kind == AckModel::Kind::probabilistic) {
    const auto& a = sc.radio.ack;
    if (a.p_ack_rx1 < 0.0 || a.p_ack_rx2 < 0.0 || a.p_ack_rx1 + a.p_ack_rx2 > 1.0)
      issues.emplace_back("ack probabilities must be >= 0 and sum to <= 1");
  }
  if (sc.radio.confirmed && sc.radio.ack.kind == AckModel::Kind::fixed &&
      sc.radio.ack.fixed_outcome == TxOutcome::unconfirmed)
    issues.emplace_back("fixed ack outcome of a confirmed uplink cannot be 'unconfirmed'");

  if (sc.processing_s < 0.0) issues.emplace_back("processing_s must be >= 0");
  if (const auto* p = std::get_if<PollMode>(&sc.sensing))
    if (p->sample_duration_s + sc.processing_s >= p->period_s)
      issues.emplace_back("sample_duration_s + processing_s must fit within the poll period");

  if (sc.radio.initial_dr >= 0 && sc.radio.initial_dr <= 5) {
    const int frame = uplink_payload_bytes(sc.accumulation, sc.accumulation.batch_size);
    if (frame > max_payload_bytes(DataRate(sc.radio.initial_dr)))
      issues.emplace_back("uplink frame of " + std::to_string(frame) +
                          " B exceeds the maximum at DR" + std::to_string(sc.radio.initial_dr));
  }

  if (sc.signal.kind == SignalModel::Kind::square) {
    if (!(sc.signal.period_s > 0.0)) issues.emplace_back("signal.period_s must be > 0");
    if (sc.signal.high_s < 0.0 || sc.signal.high_s > sc.signal.period_s)
      issues.emplace_back("signal.high_s must be in [0, period_s]");
    if (sc.signal.phase_s < 0.0) issues.emplace_back("signal.phase_s must be >= 0");
  }
  if (sc.signal.kind == SignalModel::Kind::normal && sc.signal.sigma < 0.0)
    issues.emplace_back("signal.sigma must be >= 0");

  if (sc.adr.enabled) {
    check([&] { validate(sc.adr.config); });
    if (sc.adr.gateway_count < 1) issues.emplace_back("adr.gateway_count must be >= 1");
    if (sc.adr.snr.kind == SnrModel::Kind::trace && sc.adr.snr.trace.empty())
      issues.emplace_back("adr.snr trace must not be empty");
    if (sc.adr.snr.kind == SnrModel::Kind::normal && sc.adr.snr.sigma < 0.0)
      issues.emplace_back("adr.snr sigma must be >= 0");
  }

  if (scenario_is_stochastic(sc) && !sc.seed)
    issues.emplace_back("scenario has stochastic elements and needs an explicit seed");

  if (!(sc.radio.timing.receive_delay1_s >= 0.0))
    issues.emplace_back("timing.receive_delay1_s must be >= 0");
  if (sc.radio.timing.ack_payload_bytes < 0)
    issues.emplace_back("timing.ack_payload_bytes must be >= 0");
  // The RX1 timeout must close before RX2 opens one second later.
  for (int dr = 0; dr < 6; ++dr)
    if (rx_timeout_duration_s(sc.calibration, DataRate(dr)) >= 1.0) {
      issues.emplace_back("rx timeout at DR" + std::to_string(dr) +
                          " runs past the RX2 opening");
      break;
    }

  if (!issues.empty()) throw ValidationError(issues);
}

namespace detail {

// Saturates far beyond any plausible horizon so extreme interarrival draws
// cannot overflow the microsecond clock.
inline std::int64_t to_us(double seconds) {
  if (seconds >= 9.0e12) return std::numeric_limits<std::int64_t>::max() / 2;
  return static_cast<std::int64_t>(std::llround(seconds * 1e6));
}

// Single-node discrete-event engine. Time is integer microseconds; every
// microsecond of the run belongs to exactly one state slice, which makes
// time conservation exact. Tie-breaking at equal timestamps: MAC events,
// then queued strategy events, then sensing wakes, then insertion order.
class Engine {
 public:
  explicit Engine(const Scenario& sc)
      : sc_(sc),
        schedule_(sc.sensing, derive_seed(sc.seed.value_or(0), 0)),
        ack_rng_(derive_seed(sc.seed.value_or(0), 1)),
        snr_rng_(derive_seed(sc.seed.value_or(0), 2)),
        signal_rng_(derive_seed(sc.seed.value_or(0), 3)),
        duty_(sc.radio.duty_cycle_limit),
        dr_(sc.radio.initial_dr),
        power_dbm_(sc.radio.tx_power_dbm) {
    voltage_ = sc.battery.voltage_v.value_or(sc.profile.supply_voltage_v);
    budget_j_ = sc.battery.capacity_mah * 3.6 * voltage_;
    end_us_ = sc.duration_s ? to_us(*sc.duration_s)
                            : std::numeric_limits<std::int64_t>::max() / 4;
    dr_floor_ = min_dr_for_payload(
        uplink_payload_bytes(sc.accumulation, sc.accumulation.batch_size));
  }

  SimReport run() {
    for (;;) {
      if (dead_ || t_us_ >= end_us_) break;
      const auto next = next_event();
      const std::int64_t target = next ? std::min(next->t_eff_us, end_us_) : end_us_;
      if (target > t_us_) idle_sleep(target - t_us_);
      if (dead_) break;
      // The duration limit is checked between events; a transaction that is
      // already in flight runs to completion.
      if (!next || next->t_eff_us >= end_us_) break;
      dispatch(*next);
    }
    flush_aggregates();
    return make_report();
  }

 private:
  struct QueuedEvent {
    std::int64_t t_us = 0;
    int prio = 0;  // 0 = MAC, 1 = strategy
    std::uint64_t seq = 0;
    enum class Kind { tx_start, flush_deadline } kind = Kind::tx_start;
    int payload_bytes = 0;
    int attempt = 0;
    std::uint64_t request_id = 0;
    std::uint64_t buffer_gen = 0;
  };

  struct QueueOrder {
    bool operator()(const QueuedEvent& a, const QueuedEvent& b) const {
      if (a.t_us != b.t_us) return a.t_us > b.t_us;
      if (a.prio != b.prio) return a.prio > b.prio;
      return a.seq > b.seq;
    }
  };

  struct NextEvent {
    std::int64_t t_eff_us = 0;
    bool is_wake = false;
    QueuedEvent ev{};
  };

  std::optional<NextEvent> next_event() {
    std::optional<NextEvent> best;
    if (!queue_.empty()) {
      const auto& top = queue_.top();
      best = NextEvent{std::max(top.t_us, t_us_), false, top};
    }
    if (const auto w = schedule_.peek()) {
      const std::int64_t wt = std::max(to_us(*w), t_us_);
      // Wakes order after queued events at the same effective time.
      if (!best || wt < best->t_eff_us) best = NextEvent{wt, true, {}};
    }
    return best;
  }

  void dispatch(const NextEvent& next) {
    if (next.is_wake) {
      schedule_.pop();
      on_wake();
      return;
    }
    queue_.pop();
    if (next.ev.kind == QueuedEvent::Kind::tx_start)
      on_tx_start(next.ev);
    else
      on_flush_deadline(next.ev);
  }

  // ---- state slices ------------------------------------------------------

  void slice(PowerState state, std::int64_t dur_us, double energy_j, const char* detail,
             bool transaction_slice) {
    if (dead_ || dur_us < 0) return;
    if (dur_us == 0 && energy_j == 0.0) return;

    const double remaining = budget_j_ - used_j_;
    if (energy_j >= remaining) {
      const double f = energy_j > 0.0 ? remaining / energy_j : 0.0;
      const auto cut =
          static_cast<std::int64_t>(std::floor(static_cast<double>(dur_us) * f));
      record(state, cut, remaining, detail, transaction_slice);
      used_j_ = budget_j_;
      t_us_ += cut;
      dead_ = true;
      return;
    }
    record(state, dur_us, energy_j, detail, transaction_slice);
    used_j_ += energy_j;
    t_us_ += dur_us;
  }

  void record(PowerState state, std::int64_t dur_us, double energy_j, const char* detail,
              bool transaction_slice) {
    ledger_.add(state, energy_j);
    durations_[static_cast<std::size_t>(state)] += dur_us;
    if (sc_.event_log == EventLogMode::off) return;
    if (sc_.event_log == EventLogMode::full || transaction_slice) {
      if (transaction_slice) flush_aggregates();
      events_.push_back({t_us_, state, dur_us, energy_j, detail});
      return;
    }
    // Coalesced: fold idle slices into one row per state per gap.
    auto& agg = agg_[static_cast<std::size_t>(state)];
    if (agg.count == 0) agg.start_us = t_us_;
    agg.dur_us += dur_us;
    agg.energy_j += energy_j;
    ++agg.count;
  }

  void flush_aggregates() {
    if (sc_.event_log != EventLogMode::coalesced) return;
    const auto first = static_cast<std::ptrdiff_t>(events_.size());
    for (PowerState s : all_power_states) {
      auto& agg = agg_[static_cast<std::size_t>(s)];
      if (agg.count == 0) continue;
      events_.push_back({agg.start_us, s, agg.dur_us, agg.energy_j,
                         "aggregate of " + std::to_string(agg.count) + " slices"});
      agg = {};
    }
    // Aggregates of different states overlap in time; keep rows ordered.
    std::sort(events_.begin() + first, events_.end(),
              [](const EventLogEntry& a, const EventLogEntry& b) {
                if (a.t_us != b.t_us) return a.t_us < b.t_us;
                return static_cast<int>(a.state) < static_cast<int>(b.state);
              });
  }

  void idle_sleep(std::int64_t dur_us) {
    slice(PowerState::sleep, dur_us, sleep_energy(dur_us), "", false);
  }

  double sleep_energy(std::int64_t dur_us) const {
    return voltage_ * sc_.profile.sleep_current_a * static_cast<double>(dur_us) * 1e-6;
  }

  // ---- strategy side -----------------------------------------------------

  void on_wake() {
    const std::int64_t sense_start_us = t_us_;
    const std::int64_t sense_us = to_us(schedule_.sense_duration_s());
    slice(PowerState::sense, sense_us,
          voltage_ * sc_.profile.sense_current_a * static_cast<double>(sense_us) * 1e-6, "",
          false);
    if (dead_) return;
    if (sc_.processing_s > 0.0) {
      const std::int64_t proc_us = to_us(sc_.processing_s);
      slice(PowerState::mcu_active, proc_us,
            voltage_ * sc_.profile.mcu_active_current_a() * static_cast<double>(proc_us) * 1e-6,
            "", false);
      if (dead_) return;
    }
    ++samples_;

    const double value = sc_.signal.sample(static_cast<double>(sense_start_us) * 1e-6,
                                           signal_rng_);
    if (sc_.filter) {
      if (!filter_sample(*sc_.filter, filter_state_, value)) {
        ++samples_filtered_out_;
        return;
      }
    }

    const bool was_empty = buffer_.count() == 0;
    if (const auto flush = buffer_.offer(sc_.accumulation, static_cast<double>(t_us_) * 1e-6)) {
      ++buffer_gen_;
      submit_request(flush->payload_bytes);
    } else if (was_empty && sc_.accumulation.deadline_s) {
      QueuedEvent ev;
      ev.t_us = t_us_ + to_us(*sc_.accumulation.deadline_s);
      ev.prio = 1;
      ev.seq = ++seq_;
      ev.kind = QueuedEvent::Kind::flush_deadline;
      ev.buffer_gen = buffer_gen_;
      queue_.push(ev);
    }
  }

  void on_flush_deadline(const QueuedEvent& ev) {
    if (ev.buffer_gen != buffer_gen_) return;  // batch already flushed
    if (const auto flush = buffer_.flush(sc_.accumulation)) {
      ++buffer_gen_;
      submit_request(flush->payload_bytes);
    }
  }

  void submit_request(int payload_bytes) {
    ++uplink_requests_;
    if (txn_active_) {
      pending_.push_back({payload_bytes, uplink_requests_});
      return;
    }
    start_attempt(payload_bytes, 0, uplink_requests_);
  }

  // ---- MAC side ----------------------------------------------------------

  void start_attempt(int payload_bytes, int attempt, std::uint64_t request_id) {
    txn_active_ = true;
    const double toa_s = time_on_air(datarate_params(DataRate(dr_)), payload_bytes);
    const double start_s =
        next_permitted_time(duty_, static_cast<double>(t_us_) * 1e-6, toa_s);
    QueuedEvent ev;
    ev.t_us = std::max(t_us_, to_us(start_s));
    ev.prio = 0;
    ev.seq = ++seq_;
    ev.kind = QueuedEvent::Kind::tx_start;
    ev.payload_bytes = payload_bytes;
    ev.attempt = attempt;
    ev.request_id = request_id;
    queue_.push(ev);
  }

  void on_tx_start(const QueuedEvent& ev) {
    const TxOutcome outcome = draw_outcome();
    if (ev.attempt > 0) ++retransmissions_;
    ++tx_attempts_;

    if (sc_.adr.enabled) {
      adr_state_.record(UplinkObservation{draw_snr(), sc_.adr.gateway_count, DataRate(dr_),
                                          power_dbm_},
                        sc_.adr.config.history_len);
    }

    const double toa_s = time_on_air(datarate_params(DataRate(dr_)), ev.payload_bytes);
    const std::int64_t toa_us = to_us(toa_s);
    const double start_s = static_cast<double>(t_us_) * 1e-6;

    char detail[96];
    std::snprintf(detail, sizeof(detail), "up#%llu try%d DR%d %ddBm %dB",
                  static_cast<unsigned long long>(ev.request_id), ev.attempt, dr_, power_dbm_,
                  ev.payload_bytes);
    slice(PowerState::tx, toa_us,
          state_energy(sc_.profile, PowerState::tx, toa_s, power_dbm_), detail, true);
    duty_.record_transmission(start_s, toa_s);
    if (dead_) return;

    // RECEIVE_DELAY1 with the radio off.
    slice(PowerState::sleep, to_us(sc_.radio.timing.receive_delay1_s),
          sleep_energy(to_us(sc_.radio.timing.receive_delay1_s)), "rx delay", true);
    if (dead_) return;

    const DataRate dr(dr_);
    const auto& cal = sc_.calibration;
    bool answered = false;

    if (outcome == TxOutcome::ack_rx1) {
      const auto [e_mj, derived] = transaction_rx_energy_with_fallback_mj(
          cal, sc_.profile, dr, TxOutcome::ack_rx1, sc_.radio.timing.ack_payload_bytes);
      if (derived) ++rx1_ack_profile_derived_;
      slice(PowerState::rx, to_us(rx_ack_duration_s(cal, dr, sc_.radio.timing.ack_payload_bytes)),
            e_mj * 1e-3, derived ? "rx1 ack (profile-derived)" : "rx1 ack", true);
      answered = true;
    } else {
      const std::int64_t rx1_us = to_us(rx_timeout_duration_s(cal, dr));
      slice(PowerState::rx, rx1_us,
            cal.rx1_noack_mj[static_cast<std::size_t>(dr_)] * 1e-3, "rx1 timeout", true);
      if (dead_) return;
      // RX2 opens exactly one second after RX1.
      slice(PowerState::sleep, 1'000'000 - rx1_us, sleep_energy(1'000'000 - rx1_us), "rx gap",
            true);
      if (dead_) return;
      if (outcome == TxOutcome::ack_rx2) {
        slice(PowerState::rx,
              to_us(rx_ack_duration_s(cal, sc_.radio.timing.rx2_dr,
                                      sc_.radio.timing.ack_payload_bytes)),
              cal.rx2_ack_mj * 1e-3, "rx2 ack", true);
        answered = true;
      } else {
        slice(PowerState::rx, to_us(rx_timeout_duration_s(cal, sc_.radio.timing.rx2_dr)),
              cal.rx2_noack_mj * 1e-3, "rx2 timeout", true);
      }
    }
    if (dead_) return;

    if (answered) {
      adr_unanswered_ = 0;
      if (sc_.adr.enabled) apply_adr_decision();
      resolve(true);
      return;
    }

    // No downlink in either window.
    ++adr_unanswered_;
    if (outcome == TxOutcome::unconfirmed) {
      resolve(true);  // nothing to wait for; the frame was sent
      return;
    }
    if (ev.attempt < sc_.radio.max_retries) {
      schedule_retry(ev);  // same DR for every attempt of one transaction
      return;
    }
    resolve(false);
  }

  void schedule_retry(const QueuedEvent& prev) {
    const double toa_s = time_on_air(datarate_params(DataRate(dr_)), prev.payload_bytes);
    const double earliest =
        static_cast<double>(t_us_) * 1e-6 + sc_.radio.retry_backoff_s;
    QueuedEvent ev;
    ev.t_us = std::max(t_us_, to_us(next_permitted_time(duty_, earliest, toa_s)));
    ev.prio = 0;
    ev.seq = ++seq_;
    ev.kind = QueuedEvent::Kind::tx_start;
    ev.payload_bytes = prev.payload_bytes;
    ev.attempt = prev.attempt + 1;
    ev.request_id = prev.request_id;
    queue_.push(ev);
  }

  void resolve(bool success) {
    if (success)
      ++delivered_;
    else
      ++failed_;
    adr_ack_backoff();  // between transactions, never between retries
    txn_active_ = false;
    if (!pending_.empty()) {
      const auto [payload, request_id] = pending_.front();
      pending_.pop_front();
      start_attempt(payload, 0, request_id);
    }
  }

  // Network ADR commands ride on received downlinks.
  void apply_adr_decision() {
    const auto d = adr_decision(adr_state_, sc_.adr.config, DataRate(dr_), power_dbm_);
    if (!d) return;
    dr_ = d->dr.index();
    power_dbm_ = d->tx_power_dbm;
  }

  // Device-side link recovery: after adr_ack_limit uplinks with no downlink,
  // step the DR down one (never below what the frame size permits).
  void adr_ack_backoff() {
    if (!sc_.adr.enabled || adr_unanswered_ < sc_.adr.config.adr_ack_limit) return;
    adr_unanswered_ = 0;
    if (dr_ > dr_floor_) --dr_;
  }

  TxOutcome draw_outcome() {
    if (!sc_.radio.confirmed) return TxOutcome::unconfirmed;
    const auto& ack = sc_.radio.ack;
    if (ack.kind == AckModel::Kind::fixed) return ack.fixed_outcome;
    const double u = ack_rng_.uniform01();
    if (u < ack.p_ack_rx1) return TxOutcome::ack_rx1;
    if (u < ack.p_ack_rx1 + ack.p_ack_rx2) return TxOutcome::ack_rx2;
    return TxOutcome::no_ack;
  }

  double draw_snr() {
    const auto& m = sc_.adr.snr;
    if (m.kind == SnrModel::Kind::trace) {
      const double v = m.trace[snr_trace_pos_ % m.trace.size()];
      ++snr_trace_pos_;
      return v;
    }
    return snr_rng_.normal(m.mean, m.sigma);
  }

  // ---- report ------------------------------------------------------------

  SimReport make_report() {
    SimReport r;
    r.scenario_name = sc_.name;
    r.seed = sc_.seed.value_or(0);
    r.lifetime_us = t_us_;
    r.battery_died = dead_;
    r.samples = samples_;
    r.samples_filtered_out = samples_filtered_out_;
    r.uplink_requests = static_cast<std::int64_t>(uplink_requests_);
    r.tx_attempts = tx_attempts_;
    r.delivered = delivered_;
    r.failed = failed_;
    r.retransmissions = retransmissions_;
    r.rx1_ack_profile_derived = rx1_ack_profile_derived_;
    r.ledger = ledger_;
    r.state_duration_us = durations_;
    r.average_current_a =
        t_us_ > 0 ? ledger_.total_j() / (voltage_ * static_cast<double>(t_us_) * 1e-6) : 0.0;
    r.final_dr = dr_;
    r.final_tx_power_dbm = power_dbm_;
    r.events = std::move(events_);
    return r;
  }

  struct Aggregate {
    std::int64_t start_us = 0;
    std::int64_t dur_us = 0;
    double energy_j = 0.0;
    std::int64_t count = 0;
  };

  const Scenario& sc_;
  SensingSchedule schedule_;
  Rng ack_rng_;
  Rng snr_rng_;
  Rng signal_rng_;
  DutyCycleState duty_;
  AdrState adr_state_;
  FilterState filter_state_;
  SampleBuffer buffer_;

  std::priority_queue<QueuedEvent, std::vector<QueuedEvent>, QueueOrder> queue_;
  std::deque<std::pair<int, std::uint64_t>> pending_;

  double voltage_ = 3.3;
  double budget_j_ = 0.0;
  double used_j_ = 0.0;
  std::int64_t t_us_ = 0;
  std::int64_t end_us_ = 0;
  bool dead_ = false;
  bool txn_active_ = false;

  int dr_ = 5;
  int power_dbm_ = 14;
  int dr_floor_ = 0;
  int adr_unanswered_ = 0;
  std::size_t snr_trace_pos_ = 0;

  std::uint64_t seq_ = 0;
  std::uint64_t buffer_gen_ = 0;
  std::uint64_t uplink_requests_ = 0;

  std::int64_t samples_ = 0;
  std::int64_t samples_filtered_out_ = 0;
  std::int64_t tx_attempts_ = 0;
  std::int64_t delivered_ = 0;
  std::int64_t failed_ = 0;
  std::int64_t retransmissions_ = 0;
  std::int64_t rx1_ack_profile_derived_ = 0;

  EnergyLedger ledger_;
  std::array<std::int64_t, all_power_states.size()> durations_{};
  std::vector<EventLogEntry> events_;
  std::array<Aggregate, all_power_states.size()> agg_{};
};

}  // namespace detail

// Runs one scenario to completion. Deterministic: identical (scenario, seed)
// pairs produce identical reports.
inline SimReport run(const Scenario& scenario) {
  validate(scenario);
  detail::Engine engine(scenario);
  return engine.run();
}

}  // namespace loralife
