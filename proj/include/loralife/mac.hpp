#pragma once

#include <algorithm>
#include <optional>

#include "loralife/energy.hpp"
#include "loralife/errors.hpp"
#include "loralife/phy.hpp"

namespace loralife {

// Class A window timing. RX2 always opens exactly one second after RX1
// (RECEIVE_DELAY2 = RECEIVE_DELAY1 + 1 s); RX2 listens on a fixed
// DR-independent configuration.
struct MacTiming {
  double receive_delay1_s = 1.0;
  DataRate rx2_dr{0};
  int ack_payload_bytes = 13;  // MHDR + FHDR + FPort + MIC of an empty downlink
};

// One uplink attempt with its receive windows. rx2_open is absent exactly
// when the ACK arrived in RX1.
struct ClassATransaction {
  double uplink_start_s = 0.0;
  double uplink_duration_s = 0.0;
  bool confirmed = false;
  double rx1_open_s = 0.0;
  std::optional<double> rx2_open_s{};
  TxOutcome outcome = TxOutcome::unconfirmed;
  int retries_used = 0;

  DataRate dr{5};
  int tx_power_dbm = 14;
  int payload_len = 0;
};

// Sub-band duty cycle bookkeeping. Enforcement uses the per-transmission
// off-time rule: after a transmission starting at t of duration toa, the next
// one may not start before t + toa/limit. The cumulative on-air counter
// feeds long-horizon safety checks.
class DutyCycleState {
 public:
  explicit DutyCycleState(double limit = 0.01) : limit_(limit) {
    if (!(limit > 0.0) || limit > 1.0) throw ParameterError("duty cycle limit must be in (0,1]");
  }

  double limit() const noexcept { return limit_; }
  double on_air_total_s() const noexcept { return on_air_total_s_; }
  double not_before_s() const noexcept { return not_before_s_; }

  void record_transmission(double start_s, double toa_s) {
    if (!(toa_s > 0.0)) throw ParameterError("time on air must be > 0");
    not_before_s_ = std::max(not_before_s_, start_s + toa_s / limit_);
    on_air_total_s_ += toa_s;
  }

 private:
  double limit_;
  double not_before_s_ = 0.0;
  double on_air_total_s_ = 0.0;
};

// Earliest instant >= now at which a transmission of the given duration may
// start without breaking the duty cycle.
inline double next_permitted_time(const DutyCycleState& state, double now_s, double toa_s) {
  if (!(toa_s > 0.0)) throw ParameterError("time on air must be > 0");
  return std::max(now_s, state.not_before_s());
}

// Plans one uplink attempt. The ACK plan is a scenario directive, not a
// channel model; unconfirmed uplinks ignore it and still open both windows.
inline ClassATransaction plan_uplink(double now_s, DataRate dr, int tx_power_dbm,
                                     int payload_len, bool confirmed, TxOutcome ack_plan,
                                     const DutyCycleState& duty,
                                     const MacTiming& timing = {}) {
  const LoRaParams params = datarate_params(dr);
  const double toa = time_on_air(params, payload_len);  // validates payload vs DR max

  ClassATransaction txn;
  txn.dr = dr;
  txn.tx_power_dbm = tx_power_dbm;
  txn.payload_len = payload_len;
  txn.confirmed = confirmed;
  txn.outcome = confirmed ? ack_plan : TxOutcome::unconfirmed;
  if (!confirmed && ack_plan != TxOutcome::unconfirmed) txn.outcome = TxOutcome::unconfirmed;
  txn.uplink_start_s = next_permitted_time(duty, now_s, toa);
  txn.uplink_duration_s = toa;
  txn.rx1_open_s = txn.uplink_start_s + toa + timing.receive_delay1_s;
  if (txn.outcome != TxOutcome::ack_rx1) txn.rx2_open_s = txn.rx1_open_s + 1.0;
  return txn;
}

inline double rx1_duration_s(const ClassATransaction& txn, const RxWindowCalibration& cal,
                             const MacTiming& timing = {}) {
  if (txn.outcome == TxOutcome::ack_rx1)
    return rx_ack_duration_s(cal, txn.dr, timing.ack_payload_bytes);
  return rx_timeout_duration_s(cal, txn.dr);
}

inline double rx2_duration_s(const ClassATransaction& txn, const RxWindowCalibration& cal,
                             const MacTiming& timing = {}) {
  if (!txn.rx2_open_s) return 0.0;
  if (txn.outcome == TxOutcome::ack_rx2)
    return rx_ack_duration_s(cal, timing.rx2_dr, timing.ack_payload_bytes);
  return rx_timeout_duration_s(cal, timing.rx2_dr);
}

inline double transaction_end_s(const ClassATransaction& txn, const RxWindowCalibration& cal,
                                const MacTiming& timing = {}) {
  if (!txn.rx2_open_s) return txn.rx1_open_s + rx1_duration_s(txn, cal, timing);
  return *txn.rx2_open_s + rx2_duration_s(txn, cal, timing);
}

// Radio energy of the whole transaction: profile Tx energy plus the
// calibrated receive energy for the outcome.
inline double transaction_energy_j(const ClassATransaction& txn, const PowerProfile& profile,
                                   const RxWindowCalibration& cal,
                                   const MacTiming& timing = {}) {
  const double tx =
      state_energy(profile, PowerState::tx, txn.uplink_duration_s, txn.tx_power_dbm);
  const double rx_mj = transaction_rx_energy_with_fallback_mj(cal, profile, txn.dr, txn.outcome,
                                                              timing.ack_payload_bytes)
                           .first;
  return tx + rx_mj * 1e-3;
}

// Retransmission policy for confirmed uplinks: retry after a fixed backoff
// until max_retries is exhausted, at the same DR. Returns the earliest start
// of the next attempt, or nothing when no retry is due.
inline std::optional<double> retransmit_time(const ClassATransaction& txn,
                                             const RxWindowCalibration& cal, int max_retries,
                                             double backoff_s, const MacTiming& timing = {}) {
  if (!txn.confirmed || txn.outcome != TxOutcome::no_ack) return std::nullopt;
  if (txn.retries_used >= max_retries) return std::nullopt;
  return transaction_end_s(txn, cal, timing) + backoff_s;
}

}  // namespace loralife
