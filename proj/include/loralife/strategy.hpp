#pragma once

#include <cmath>
#include <optional>
#include <variant>

#include "loralife/errors.hpp"
#include "loralife/rng.hpp"

namespace loralife {

// Poll-based sensing: wake on a fixed grid (period, 2*period, ...) and spend
// sample_duration in the sense state each time.
struct PollMode {
  double period_s = 60.0;
  double sample_duration_s = 0.01;
};

// Interrupt-based sensing: the node sleeps until an external event wakes it.
// Events come either from a seeded exponential-interarrival process or from
// a strictly periodic source.
struct InterruptMode {
  enum class Source { poisson, periodic };
  Source source = Source::poisson;
  double rate_per_hour = 1.0;  // poisson; 0 means the node never wakes
  double period_s = 3600.0;    // periodic
  double start_s = 0.0;        // periodic: first event time
  double wake_duration_s = 0.01;
};

using SensingMode = std::variant<PollMode, InterruptMode>;

inline void validate(const SensingMode& mode) {
  if (const auto* p = std::get_if<PollMode>(&mode)) {
    if (!(p->period_s > 0.0)) throw ParameterError("poll period must be > 0");
    if (!(p->sample_duration_s > 0.0)) throw ParameterError("sample duration must be > 0");
    if (p->sample_duration_s >= p->period_s)
      throw ParameterError("sample duration must be shorter than the poll period");
  } else {
    const auto& i = std::get<InterruptMode>(mode);
    if (!(i.wake_duration_s > 0.0)) throw ParameterError("wake duration must be > 0");
    if (i.source == InterruptMode::Source::poisson) {
      if (i.rate_per_hour < 0.0) throw ParameterError("event rate must be >= 0");
    } else {
      if (!(i.period_s > 0.0)) throw ParameterError("event period must be > 0");
      if (i.start_s < 0.0) throw ParameterError("event start must be >= 0");
    }
  }
}

// Iterator over wake instants. Poll wakes stay on their nominal grid even if
// one runs late (the node was mid-transaction); interrupt wakes are the event
// stream itself.
class SensingSchedule {
 public:
  SensingSchedule(const SensingMode& mode, std::uint64_t event_seed)
      : mode_(mode), rng_(event_seed) {
    validate(mode_);
    if (const auto* p = std::get_if<PollMode>(&mode_)) {
      next_s_ = p->period_s;
    } else {
      const auto& i = std::get<InterruptMode>(mode_);
      if (i.source == InterruptMode::Source::periodic)
        next_s_ = i.start_s;
      else if (i.rate_per_hour > 0.0)
        next_s_ = rng_.exponential(i.rate_per_hour / 3600.0);
      else
        next_s_ = std::nullopt;  // sleep forever
    }
  }

  std::optional<double> peek() const { return next_s_; }

  // Consumes and returns the next wake time.
  std::optional<double> pop() {
    const auto out = next_s_;
    if (!next_s_) return out;
    if (const auto* p = std::get_if<PollMode>(&mode_)) {
      next_s_ = *next_s_ + p->period_s;
    } else {
      const auto& i = std::get<InterruptMode>(mode_);
      if (i.source == InterruptMode::Source::periodic)
        next_s_ = *next_s_ + i.period_s;
      else
        next_s_ = *next_s_ + rng_.exponential(i.rate_per_hour / 3600.0);
    }
    return out;
  }

  double sense_duration_s() const {
    if (const auto* p = std::get_if<PollMode>(&mode_)) return p->sample_duration_s;
    return std::get<InterruptMode>(mode_).wake_duration_s;
  }

 private:
  SensingMode mode_;
  Rng rng_;
  std::optional<double> next_s_;
};

// Threshold filter with hysteresis: an upward crossing of `threshold` sends;
// no further sends until the value drops below threshold - hysteresis.
struct RelevanceFilter {
  double threshold = 0.0;
  double hysteresis = 0.0;
};

struct FilterState {
  bool armed = true;
};

inline void validate(const RelevanceFilter& f) {
  if (f.hysteresis < 0.0) throw ParameterError("hysteresis must be >= 0");
}

inline bool filter_sample(const RelevanceFilter& f, FilterState& state, double value) {
  if (state.armed && value >= f.threshold) {
    state.armed = false;
    return true;
  }
  if (!state.armed && value < f.threshold - f.hysteresis) state.armed = true;
  return false;
}

// Accumulate samples and emit one uplink per batch_size samples, or earlier
// when the oldest buffered sample reaches its deadline. On-node compression
// is abstract: a bytes-in to bytes-out ratio applied to the sample payload,
// not a codec.
struct AccumulationPolicy {
  int batch_size = 1;
  int sample_bytes = 12;
  std::optional<double> deadline_s{};
  int overhead_bytes = 13;  // MHDR + FHDR + FPort + MIC
  double compression_ratio = 1.0;
};

inline void validate(const AccumulationPolicy& p) {
  if (p.batch_size < 1) throw ParameterError("batch size must be >= 1");
  if (p.sample_bytes < 1) throw ParameterError("sample bytes must be >= 1");
  if (p.overhead_bytes < 0) throw ParameterError("overhead bytes must be >= 0");
  if (p.deadline_s && !(*p.deadline_s > 0.0)) throw ParameterError("deadline must be > 0");
  if (!(p.compression_ratio > 0.0) || p.compression_ratio > 1.0)
    throw ParameterError("compression ratio must be in (0,1]");
}

inline int uplink_payload_bytes(const AccumulationPolicy& p, int sample_count) {
  const double data = static_cast<double>(sample_count * p.sample_bytes) * p.compression_ratio;
  return static_cast<int>(std::ceil(data)) + p.overhead_bytes;
}

class SampleBuffer {
 public:
  struct Flush {
    int sample_count = 0;
    int payload_bytes = 0;
  };

  int count() const noexcept { return count_; }
  std::optional<double> oldest_s() const noexcept { return oldest_s_; }

  // Deadline of the currently buffered batch, if any.
  std::optional<double> flush_due_s(const AccumulationPolicy& p) const {
    if (!p.deadline_s || !oldest_s_) return std::nullopt;
    return *oldest_s_ + *p.deadline_s;
  }

  // Adds one sample; returns a flush when the batch is complete.
  std::optional<Flush> offer(const AccumulationPolicy& p, double t_s) {
    if (count_ == 0) oldest_s_ = t_s;
    ++count_;
    if (count_ >= p.batch_size) return take(p);
    return std::nullopt;
  }

  // Unconditional flush (deadline hit); empty buffer flushes nothing.
  std::optional<Flush> flush(const AccumulationPolicy& p) {
    if (count_ == 0) return std::nullopt;
    return take(p);
  }

 private:
  Flush take(const AccumulationPolicy& p) {
    Flush f{count_, uplink_payload_bytes(p, count_)};
    count_ = 0;
    oldest_s_ = std::nullopt;
    return f;
  }

  int count_ = 0;
  std::optional<double> oldest_s_{};
};

}  // namespace loralife
