#include "negsim/temporal.hpp"

#include <cctype>

namespace negsim {

namespace {

constexpr int64_t kMsPerWord = 400;  // 150 words per minute

const char* kDeadlineSentence =
    " You have exactly {TIME_FOR_NEGOTIATION} seconds "
    "from your first message to reach a deal.";

const char* kLatencyParagraph =
    "\n Your output message will be passed through a text to "
    "speech model to communicate to the {ADDRESSEE}. The text "
    "to speech model runs at 150 words per minute, meaning "
    "that if you output 150 words, it will take 60 seconds to "
    "communicate the message to the {ADDRESSEE}.";

const char* kTurnBudgetSentence =
    " You have at most {TURN_BUDGET} collective utterances "
    "(messages from both parties combined) to reach a deal.";

void replace_all(std::string& text, std::string_view needle,
                 std::string_view replacement) {
  size_t pos = 0;
  while ((pos = text.find(needle, pos)) != std::string::npos) {
    text.replace(pos, needle.size(), replacement);
    pos += replacement.size();
  }
}

// Inserts `fragment` at the named placeholder when present, else appends.
// An empty fragment still erases the placeholder.
void insert_or_append(std::string& prompt, std::string_view placeholder,
                      const std::string& fragment) {
  const size_t pos = prompt.find(placeholder);
  if (pos != std::string::npos) {
    std::string body = fragment;
    // drop the leading joiner when the scenario marks the spot itself
    while (!body.empty() && (body.front() == ' ' || body.front() == '\n')) {
      body.erase(body.begin());
    }
    prompt.replace(pos, placeholder.size(), body);
  } else if (!fragment.empty()) {
    prompt += fragment;
  }
}

}  // namespace

std::string_view to_string(Treatment t) {
  switch (t) {
    case Treatment::control: return "control";
    case Treatment::time_aware: return "time_aware";
    case Treatment::urgency: return "urgency";
    case Treatment::turn_limited: return "turn_limited";
    case Treatment::baseline: return "baseline";
  }
  return "?";
}

std::string_view to_string(ClockMode m) {
  switch (m) {
    case ClockMode::simulated_speech: return "simulated_speech";
    case ClockMode::wall_clock: return "wall_clock";
    case ClockMode::hybrid: return "hybrid";
  }
  return "?";
}

Treatment treatment_from_string(std::string_view s) {
  if (s == "control") return Treatment::control;
  if (s == "time_aware") return Treatment::time_aware;
  if (s == "urgency") return Treatment::urgency;
  if (s == "turn_limited") return Treatment::turn_limited;
  if (s == "baseline") return Treatment::baseline;
  throw ConfigError("unknown treatment: " + std::string(s));
}

ClockMode clock_mode_from_string(std::string_view s) {
  if (s == "simulated_speech") return ClockMode::simulated_speech;
  if (s == "wall_clock") return ClockMode::wall_clock;
  if (s == "hybrid") return ClockMode::hybrid;
  throw ConfigError("unknown clock mode: " + std::string(s));
}

void TreatmentConfig::validate() const {
  if (treatment == Treatment::turn_limited) {
    if (budget_seconds) {
      throw ConfigError("turn_limited treatment cannot carry a time budget");
    }
    if (!turn_budget || *turn_budget < 1) {
      throw ConfigError("turn_limited treatment requires a positive turn budget");
    }
    return;
  }
  if (treatment != Treatment::baseline && (!budget_seconds || *budget_seconds <= 0)) {
    throw ConfigError(std::string("timed treatment '") +
                      std::string(to_string(treatment)) +
                      "' requires a positive time budget");
  }
  if (budget_seconds && *budget_seconds <= 0) {
    throw ConfigError("time budget must be positive");
  }
  if (turn_budget && *turn_budget < 1) {
    throw ConfigError("turn budget must be positive");
  }
}

ClockState ClockState::start(int budget_seconds, ClockMode mode) {
  ClockState c;
  c.budget_ms = static_cast<int64_t>(budget_seconds) * 1000;
  c.remaining_ms = c.budget_ms;
  c.mode = mode;
  return c;
}

std::optional<ClockState> charge(const ClockState& clock, int64_t latency_ms) {
  if (latency_ms > clock.remaining_ms) return std::nullopt;
  ClockState next = clock;
  next.remaining_ms -= latency_ms;
  return next;
}

int word_count(std::string_view message) {
  int count = 0;
  bool in_token = false;
  for (unsigned char c : message) {
    if (std::isspace(c)) {
      in_token = false;
    } else if (!in_token) {
      in_token = true;
      ++count;
    }
  }
  return count;
}

int64_t speech_latency_ms(std::string_view message) {
  return static_cast<int64_t>(word_count(message)) * kMsPerWord;
}

std::string render_time_prefix(const TreatmentConfig& cfg,
                               const std::optional<ClockState>& clock,
                               bool has_opponent_message) {
  if (!has_opponent_message) return "";
  if (cfg.treatment == Treatment::time_aware && clock) {
    const int64_t whole_seconds = clock->remaining_ms / 1000;
    return "(" + std::to_string(whole_seconds) + " seconds left)\n";
  }
  if (cfg.treatment == Treatment::urgency) {
    return "(Deadline approaching--act with urgency.)\n";
  }
  return "";
}

std::string augment_system_prompt(const TreatmentConfig& cfg,
                                  const std::string& base_prompt,
                                  const std::string& addressee) {
  std::string prompt = base_prompt;

  std::string deadline;
  const bool timed_treatment = cfg.treatment == Treatment::control ||
                               cfg.treatment == Treatment::time_aware ||
                               cfg.treatment == Treatment::urgency;
  if (timed_treatment && cfg.budget_seconds) {
    deadline = kDeadlineSentence;
    replace_all(deadline, "{TIME_FOR_NEGOTIATION}", std::to_string(*cfg.budget_seconds));
  }
  if (cfg.budget_seconds) {
    replace_all(prompt, "{TIME_FOR_NEGOTIATION}", std::to_string(*cfg.budget_seconds));
  }
  insert_or_append(prompt, "{DEADLINE_SENTENCE}", deadline);

  std::string latency;
  if (cfg.latency_enabled && cfg.treatment != Treatment::baseline) {
    latency = kLatencyParagraph;
    replace_all(latency, "{ADDRESSEE}", addressee);
  }
  insert_or_append(prompt, "{LATENCY_PARAGRAPH}", latency);

  if (cfg.treatment == Treatment::turn_limited && cfg.turn_budget) {
    std::string turns = kTurnBudgetSentence;
    replace_all(turns, "{TURN_BUDGET}", std::to_string(*cfg.turn_budget));
    prompt += turns;
  }
  return prompt;
}

int64_t SteadyTimeSource::now_ms() {
  using namespace std::chrono;
  return duration_cast<milliseconds>(steady_clock::now().time_since_epoch()).count();
}

}  // namespace negsim
