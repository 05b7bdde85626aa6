#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "negsim/scenario.hpp"
#include "negsim/temporal.hpp"

namespace negsim {

class Agent;  // agents.hpp

inline constexpr int kTranscriptSchemaVersion = 1;

// One parsed agent turn.
struct ActionMessage {
  std::string message;
  // issue id -> canonical label; nullopt when the agent sent no proposal.
  std::optional<std::map<std::string, std::string>> proposal;
  bool accepted = false;
  bool taking_batna = false;
};

enum class ParseErrorKind {
  no_json_found,
  field_type_error,
  both_flags_true,
  unknown_issue_key,
};

struct ParseError {
  ParseErrorKind kind;
  std::string detail;
  std::string raw;  // full raw output, kept for logging
};

std::string_view to_string(ParseErrorKind k);

// Extracts the first well-formed JSON object from raw model output
// (tolerating fences and surrounding prose) and validates it against the
// scenario's issue domains. Unknown option values are treated as unassigned;
// unknown proposal keys are an error.
std::variant<ActionMessage, ParseError> parse_action(const std::string& raw,
                                                     const Scenario& scenario);

// Field-wise latest merged proposal for one role.
struct StandingOffer {
  std::map<std::string, std::string> assignments;  // issue -> canonical label
  std::map<std::string, int> provenance;           // issue -> turn of last update

  bool empty() const { return assignments.empty(); }
  Bundle bundle() const { return Bundle{assignments}; }
};

// Last-writer-wins overlay of `incoming` onto `standing`.
StandingOffer merge_proposal(StandingOffer standing,
                             const std::map<std::string, std::string>& incoming,
                             int turn);

enum class OutcomeKind { deal, batna, timeout, turn_exhausted, failed };

std::string_view to_string(OutcomeKind k);
OutcomeKind outcome_kind_from_string(std::string_view s);

struct Outcome {
  OutcomeKind kind = OutcomeKind::timeout;
  std::optional<std::string> invoker;  // batna only
  std::optional<Bundle> bundle;        // deal only
  bool incomplete = false;             // deal over a partial standing offer
  std::map<std::string, Points> payoffs;
  int utterances = 0;
  long long words_total = 0;
  int64_t elapsed_ms = 0;
  bool time_turn_tie = false;  // timeout won the tie against turn exhaustion
  std::optional<std::string> annotation;    // e.g. agent failure detail
  std::optional<nlohmann::json> discarded;  // over-budget utterance audit
};

struct TranscriptEvent {
  int turn = 0;
  std::string role;
  std::string raw;
  ActionMessage action;
  std::string prefix;  // prefix shown to the speaker this turn
  int64_t latency_ms = 0;
  std::optional<int64_t> remaining_ms;  // after charging; nullopt when untimed
  std::optional<long long> reasoning_tokens;
  int64_t gen_ms = 0;  // measured generation wall time
  int64_t t_ms = 0;    // simulated elapsed time after delivery
};

nlohmann::json event_to_json(const TranscriptEvent& e);
TranscriptEvent event_from_json(const nlohmann::json& j);
nlohmann::json outcome_to_json(const Outcome& o);
Outcome outcome_from_json(const nlohmann::json& j);

struct EngineError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NegotiationState {
  const Scenario* scenario = nullptr;
  TreatmentConfig cfg;
  std::optional<ClockState> clock;
  int turn_index = 0;  // == delivered utterances
  std::string active_role;
  std::vector<TranscriptEvent> events;
  std::map<std::string, StandingOffer> standing;
  std::optional<Outcome> ended;

  bool running() const { return !ended.has_value(); }
  const StandingOffer& offer_of(const std::string& role) const {
    return standing.at(role);
  }
  bool opponent_has_spoken() const;
};

NegotiationState make_state(const Scenario& scenario, const TreatmentConfig& cfg,
                            const std::string& initiator);

enum class ApplyError { accept_without_standing_offer };

struct DeliveredAction {
  std::string raw;
  ActionMessage action;
  std::string prefix;
  int64_t latency_ms = 0;
  int64_t gen_ms = 0;
  std::optional<long long> reasoning_tokens;
};

// Appends the event, updates the speaker's standing offer, and resolves the
// terminal flags. The caller has already charged the clock.
std::optional<ApplyError> apply_action(NegotiationState& state,
                                       const DeliveredAction& delivered);

// Time / turn exhaustion checks run between utterances. Sets state.ended.
// Timeout takes precedence over TurnExhausted on a tie.
void check_termination(NegotiationState& state);

// Straight transcript replay helpers used by analysis.
struct OfferMetrics {
  int utterances = 0;
  long long words = 0;
  int accept_events = 0;
  std::optional<double> reasoning_tokens_per_utterance;
  std::optional<Points> first_offer_joint;
  std::optional<Points> final_offer_joint;
};

OfferMetrics compute_metrics(const Scenario& scenario,
                             const std::vector<TranscriptEvent>& events,
                             const Outcome& outcome);

struct RunResult {
  std::vector<TranscriptEvent> events;
  Outcome outcome;
};

struct EngineOptions {
  int max_reprompts = 2;      // corrective re-requests per turn
  int safety_turn_cap = 100000;
  TimeSource* time_source = nullptr;  // required for wall_clock / hybrid
};

// Drives the alternating loop to completion. Deterministic given scripted
// agents and a fixed seed.
RunResult run_negotiation(const Scenario& scenario,
                          const std::map<std::string, Agent*>& agents,
                          const TreatmentConfig& cfg, const std::string& initiator,
                          uint64_t seed, const EngineOptions& options = {});

// Transcript JSONL (one event per line, outcome last).
void write_transcript(const std::string& path, const RunResult& result);
RunResult read_transcript(const std::string& path);
std::string transcript_to_string(const RunResult& result);
RunResult transcript_from_string(const std::string& text);

}  // namespace negsim
