#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "negsim/engine.hpp"
#include "negsim/scenario.hpp"

namespace negsim {

struct AgentError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ChatMessage {
  std::string role;  // "system" | "user" | "assistant"
  std::string content;
};

// Full, untruncated conversation rendered for one turn.
struct TurnContext {
  std::vector<ChatMessage> messages;
};

struct UsageStats {
  std::optional<long long> prompt_tokens;
  std::optional<long long> completion_tokens;
  std::optional<long long> reasoning_tokens;  // absent when unreported
  int64_t gen_wall_ms = 0;
};

struct AgentResult {
  std::string raw;
  UsageStats usage;
};

// Everything an agent may look at for one turn. Remote agents consume the
// rendered context; scripted policies read the structured view.
struct TurnInput {
  TurnContext context;
  const Scenario* scenario = nullptr;
  const std::vector<TranscriptEvent>* transcript = nullptr;
  std::string role;
  std::string prefix;  // prefix rendered for this turn
  uint64_t seed = 0;
};

class Agent {
 public:
  virtual ~Agent() = default;
  virtual AgentResult next_action(const TurnInput& input) = 0;
};

// Deterministic rendering of the conversation: augmented system prompt,
// prior utterances with speaker attribution, and the prefix prepended to the
// opponent's most recent message only.
TurnContext build_turn_context(const std::vector<TranscriptEvent>& transcript,
                               const Scenario& scenario, const std::string& role,
                               const std::string& prefix,
                               const std::string& augmented_system_prompt);

// What the counterpart receives of an utterance: its message and proposal.
std::string render_incoming_message(const TranscriptEvent& event);

// --- Scripted agents -------------------------------------------------------

// Shared global request pacing for remote agents (tokens per second).
class RateLimiter {
 public:
  explicit RateLimiter(double requests_per_second);
  void acquire();

 private:
  std::mutex mu_;
  double min_interval_ms_;
  int64_t next_slot_ms_ = 0;
};

struct RetryPolicy {
  int max_attempts = 4;
  int backoff_ms = 250;  // doubled per retry
};

struct RemoteSpec {
  std::string base_url;  // e.g. https://api.openai.com/v1
  std::string chat_path = "/chat/completions";
  std::string model;
  std::string api_key_env;  // credentials come only from the environment
  nlohmann::json reasoning;  // provider passthrough, merged into the body
  nlohmann::json sampling;   // provider passthrough, merged into the body
  RetryPolicy retry;
  double rate_limit_rps = 0.0;  // 0 = unlimited
};

struct ScriptedSpec {
  std::string policy;
  nlohmann::json params;
};

struct AgentSpec {
  std::variant<ScriptedSpec, RemoteSpec> spec;

  static AgentSpec from_json(const nlohmann::json& j);
  bool is_remote() const { return std::holds_alternative<RemoteSpec>(spec); }
};

// Builds an agent for one negotiation. Scripted policies:
//   never_agree            params: words
//   instant_batna          params: words
//   threshold_accepter     params: threshold, words
//   concession_ladder      params: threshold, words, order?, start?
//   fixed_script           params: actions: [raw strings]
//   time_pressure_accepter params: threshold_strict, threshold_relaxed,
//                                  trigger_seconds, words
std::unique_ptr<Agent> make_agent(const AgentSpec& spec, const Scenario& scenario,
                                  const std::string& role,
                                  std::shared_ptr<RateLimiter> limiter = nullptr);

// Agent pairing file / object: {role: AgentSpec, ...}.
std::map<std::string, AgentSpec> parse_agent_pairing(const nlohmann::json& j);

}  // namespace negsim
