#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace negsim {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Treatment { control, time_aware, urgency, turn_limited, baseline };
enum class ClockMode { simulated_speech, wall_clock, hybrid };

std::string_view to_string(Treatment t);
std::string_view to_string(ClockMode m);
Treatment treatment_from_string(std::string_view s);
ClockMode clock_mode_from_string(std::string_view s);

struct TreatmentConfig {
  Treatment treatment = Treatment::control;
  std::optional<int> budget_seconds;  // timed treatments
  std::optional<int> turn_budget;     // max collective utterances
  bool latency_enabled = true;
  ClockMode clock_mode = ClockMode::simulated_speech;

  bool timed() const { return budget_seconds.has_value(); }
  void validate() const;  // throws ConfigError on invalid combinations
};

// All simulated time is integer milliseconds, so speech latency
// (word_count * 400 ms) and budget arithmetic stay exact.
struct ClockState {
  int64_t budget_ms = 0;
  int64_t remaining_ms = 0;
  ClockMode mode = ClockMode::simulated_speech;

  static ClockState start(int budget_seconds, ClockMode mode);
  bool expired() const { return remaining_ms <= 0; }  // strict deadline at 0
};

// Charged clock if latency fits, nullopt otherwise (InsufficientTime).
std::optional<ClockState> charge(const ClockState& clock, int64_t latency_ms);

// Maximal whitespace-delimited tokens of the message field.
int word_count(std::string_view message);

// 150 words per minute = 400 ms per word, exact.
int64_t speech_latency_ms(std::string_view message);

// Per-turn prefix attached to the opponent's latest message. Empty unless
// the treatment calls for one and an opponent message exists.
std::string render_time_prefix(const TreatmentConfig& cfg,
                               const std::optional<ClockState>& clock,
                               bool has_opponent_message);

// Appends (or substitutes at named placeholders) the deadline sentence,
// speech-latency paragraph, and turn-budget sentence called for by the
// treatment. `addressee` names the counterpart in the latency paragraph.
std::string augment_system_prompt(const TreatmentConfig& cfg,
                                  const std::string& base_prompt,
                                  const std::string& addressee);

// Injectable monotonic time source; wall-clock charging and generation-time
// measurement go through this so tests can fake it.
class TimeSource {
 public:
  virtual ~TimeSource() = default;
  virtual int64_t now_ms() = 0;
};

class SteadyTimeSource final : public TimeSource {
 public:
  int64_t now_ms() override;
};

// Advances `step_ms` on every query; a pair of now_ms() calls around an
// agent invocation therefore reports a deterministic generation time.
class FakeTimeSource final : public TimeSource {
 public:
  explicit FakeTimeSource(int64_t step_ms = 0) : step_ms_(step_ms) {}
  int64_t now_ms() override {
    t_ += step_ms_;
    return t_;
  }
  void advance(int64_t ms) { t_ += ms; }

 private:
  int64_t t_ = 0;
  int64_t step_ms_ = 0;
};

}  // namespace negsim
