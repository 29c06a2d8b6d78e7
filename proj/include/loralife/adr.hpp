#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <optional>

#include "loralife/errors.hpp"
#include "loralife/phy.hpp"

namespace loralife {

// One network-side observation of an uplink.
struct UplinkObservation {
  double snr_db = 0.0;
  int gateway_count = 1;  // recorded but unused by the default rule
  DataRate dr{0};
  int tx_power_dbm = 14;
};

struct AdrConfig {
  int history_len = 20;
  double device_margin_db = 10.0;
  double step_db = 3.0;
  int min_tx_power_dbm = 2;
  int max_tx_power_dbm = 14;
  int adr_ack_limit = 64;  // unanswered uplinks before the device steps DR down
};

inline void validate(const AdrConfig& c) {
  if (c.history_len < 1) throw ParameterError("ADR history length must be >= 1");
  if (!(c.step_db > 0.0)) throw ParameterError("ADR step must be > 0 dB");
  if (c.min_tx_power_dbm > c.max_tx_power_dbm)
    throw ParameterError("ADR power floor exceeds the ceiling");
  if (c.adr_ack_limit < 1) throw ParameterError("ADR ack limit must be >= 1");
}

// Demodulation floor per spreading factor.
inline double required_snr_db(int sf) {
  switch (sf) {
    case 7: return -7.5;
    case 8: return -10.0;
    case 9: return -12.5;
    case 10: return -15.0;
    case 11: return -17.5;
    case 12: return -20.0;
  }
  throw ParameterError("spreading factor must be in [7,12]");
}

// FIFO history of the last N observations.
class AdrState {
 public:
  void record(const UplinkObservation& obs, int max_len) {
    if (obs.gateway_count < 1) throw ParameterError("gateway count must be >= 1");
    history_.push_back(obs);
    while (static_cast<int>(history_.size()) > max_len) history_.pop_front();
  }

  const std::deque<UplinkObservation>& history() const noexcept { return history_; }
  bool empty() const noexcept { return history_.empty(); }

  double snr_max_db() const {
    double best = history_.front().snr_db;
    for (const auto& o : history_) best = std::max(best, o.snr_db);
    return best;
  }

 private:
  std::deque<UplinkObservation> history_;
};

struct AdrDecision {
  DataRate dr{0};
  int tx_power_dbm = 14;
};

// Max-SNR rule: margin = snr_max - required_snr(SF) - device_margin;
// nstep = floor(margin / step). Positive steps raise the DR to DR5 first,
// then lower Tx power to the floor; negative steps raise Tx power only (the
// DR is never lowered here - link recovery is the ADR-ACK backoff's job).
// Empty history yields no decision.
inline std::optional<AdrDecision> adr_decision(const AdrState& state, const AdrConfig& cfg,
                                               DataRate current_dr, int current_power_dbm) {
  if (state.empty()) return std::nullopt;
  const double margin = state.snr_max_db() -
                        required_snr_db(current_dr.spreading_factor()) - cfg.device_margin_db;
  int nstep = static_cast<int>(std::floor(margin / cfg.step_db));

  int dr = current_dr.index();
  double power = current_power_dbm;
  const int step = static_cast<int>(cfg.step_db);
  while (nstep > 0) {
    if (dr < 5)
      ++dr;
    else if (power - step >= cfg.min_tx_power_dbm)
      power -= step;
    else if (power > cfg.min_tx_power_dbm)
      power = cfg.min_tx_power_dbm;
    else
      break;
    --nstep;
  }
  while (nstep < 0) {
    if (power + step <= cfg.max_tx_power_dbm)
      power += step;
    else if (power < cfg.max_tx_power_dbm)
      power = cfg.max_tx_power_dbm;
    else
      break;
    ++nstep;
  }

  AdrDecision d;
  d.dr = DataRate(std::clamp(dr, 0, 5));
  d.tx_power_dbm = std::clamp(static_cast<int>(power),
                              cfg.min_tx_power_dbm, cfg.max_tx_power_dbm);
  return d;
}

}  // namespace loralife
