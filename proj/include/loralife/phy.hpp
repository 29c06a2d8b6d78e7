#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <string>

#include "loralife/errors.hpp"

namespace loralife {

// EU868 uplink data rate index. Each index maps to exactly one (SF, BW) pair:
// DR0 = SF12/125 kHz ... DR5 = SF7/125 kHz.
class DataRate {
 public:
  explicit DataRate(int index) : index_(index) {
    if (index < 0 || index > 5)
      throw ParameterError("data rate index must be in [0,5], got " + std::to_string(index));
  }

  int index() const noexcept { return index_; }
  int spreading_factor() const noexcept { return 12 - index_; }
  double bandwidth_hz() const noexcept { return 125000.0; }

  friend bool operator==(DataRate a, DataRate b) noexcept { return a.index_ == b.index_; }
  friend bool operator!=(DataRate a, DataRate b) noexcept { return a.index_ != b.index_; }

 private:
  int index_;
};

// Maximum MAC payload per EU868 data rate (FOpts absent).
inline int max_payload_bytes(DataRate dr) {
  static constexpr std::array<int, 6> table = {51, 51, 51, 115, 222, 222};
  return table[static_cast<std::size_t>(dr.index())];
}

struct LoRaParams {
  int sf = 7;
  double bw_hz = 125000.0;
  int cr = 1;  // coding rate 4/(4+cr), so cr=1 is 4/5
  int preamble_syms = 8;
  bool explicit_header = true;
  bool crc_on = true;
  // Low data rate optimization; unset means the standard rule
  // (enabled iff sf >= 11 at 125 kHz), set overrides it.
  std::optional<bool> low_dr_optimize{};
};

inline bool low_dr_enabled(const LoRaParams& p) {
  if (p.low_dr_optimize.has_value()) return *p.low_dr_optimize;
  return p.sf >= 11 && p.bw_hz == 125000.0;
}

inline void validate(const LoRaParams& p) {
  if (p.sf < 7 || p.sf > 12)
    throw ParameterError("spreading factor must be in [7,12], got " + std::to_string(p.sf));
  if (!(p.bw_hz > 0.0)) throw ParameterError("bandwidth must be > 0");
  if (p.cr < 1 || p.cr > 4)
    throw ParameterError("coding rate offset must be in [1,4], got " + std::to_string(p.cr));
  if (p.preamble_syms < 1) throw ParameterError("preamble length must be >= 1 symbol");
}

// T_sym = 2^sf / bw.
inline double symbol_duration(int sf, double bw_hz) {
  if (sf < 7 || sf > 12)
    throw ParameterError("spreading factor must be in [7,12], got " + std::to_string(sf));
  if (!(bw_hz > 0.0)) throw ParameterError("bandwidth must be > 0");
  return static_cast<double>(1 << sf) / bw_hz;
}

// Payload symbol count:
//   8 + max(ceil((8*PL - 4*SF + 28 + 16*CRC - 20*IH) / (4*(SF - 2*DE))) * (CR + 4), 0)
inline int payload_symbol_count(const LoRaParams& p, int payload_len) {
  const int crc = p.crc_on ? 1 : 0;
  const int ih = p.explicit_header ? 0 : 1;
  const int de = low_dr_enabled(p) ? 1 : 0;
  const int num = 8 * payload_len - 4 * p.sf + 28 + 16 * crc - 20 * ih;
  const int den = 4 * (p.sf - 2 * de);
  const int blocks = num <= 0 ? 0 : (num + den - 1) / den;
  return 8 + blocks * (p.cr + 4);
}

inline LoRaParams datarate_params(DataRate dr) {
  LoRaParams p;
  p.sf = dr.spreading_factor();
  p.bw_hz = dr.bandwidth_hz();
  return p;
}

// Matches a parameter set back to its EU868 data rate, if it is one.
inline std::optional<DataRate> datarate_of(const LoRaParams& p) {
  if (p.bw_hz != 125000.0 || p.sf < 7 || p.sf > 12) return std::nullopt;
  return DataRate(12 - p.sf);
}

inline double time_on_air(const LoRaParams& params, int payload_len) {
  validate(params);
  if (payload_len < 0 || payload_len > 255)
    throw ParameterError("payload length must be in [0,255] bytes");
  if (auto dr = datarate_of(params); dr && payload_len > max_payload_bytes(*dr))
    throw PayloadTooLargeError("payload of " + std::to_string(payload_len) +
                               " B exceeds the " + std::to_string(max_payload_bytes(*dr)) +
                               " B maximum at DR" + std::to_string(dr->index()));
  const double tsym = symbol_duration(params.sf, params.bw_hz);
  const double preamble = (params.preamble_syms + 4.25) * tsym;
  return preamble + payload_symbol_count(params, payload_len) * tsym;
}

}  // namespace loralife
