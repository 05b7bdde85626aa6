#include "negsim/agents.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdlib>
#include <thread>

#include "httplib.h"

namespace negsim {

namespace {

using nlohmann::json;

// Deterministic filler text with an exact token count.
std::string filler_words(int n) {
  static const char* kLexicon[] = {
      "let",   "us",    "keep",  "working", "through", "the",   "open",
      "terms", "here",  "and",   "look",    "for",     "trades", "that",
      "serve", "both",  "sides", "of",      "this",    "package"};
  constexpr int kLexiconSize = sizeof(kLexicon) / sizeof(kLexicon[0]);
  std::string out;
  for (int i = 0; i < n; ++i) {
    if (i) out += ' ';
    out += kLexicon[i % kLexiconSize];
  }
  return out;
}

std::string dump_action(const std::string& message, const json& proposal,
                        bool accepted, bool taking_batna) {
  json j;
  j["message"] = message;
  j["proposal"] = proposal;
  j["accepted"] = accepted;
  j["taking_batna"] = taking_batna;
  return j.dump();
}

// Replays standing offers from the transcript view, mirroring the engine's
// merge semantics (accepting turns do not merge).
std::map<std::string, StandingOffer> replay_standing(
    const Scenario& scenario, const std::vector<TranscriptEvent>& events) {
  std::map<std::string, StandingOffer> standing;
  for (const auto& role : scenario.roles) standing[role];
  for (const auto& e : events) {
    if (!e.action.accepted && e.action.proposal && !e.action.proposal->empty()) {
      standing[e.role] = merge_proposal(standing.at(e.role), *e.action.proposal, e.turn);
    }
  }
  return standing;
}

int own_turns(const TurnInput& in) {
  int n = 0;
  for (const auto& e : *in.transcript) {
    if (e.role == in.role) ++n;
  }
  return n;
}

// Complete opponent standing offer worth at least `threshold` to us?
std::optional<Points> acceptable_offer_value(const TurnInput& in) {
  const Scenario& s = *in.scenario;
  auto standing = replay_standing(s, *in.transcript);
  const StandingOffer& offer = standing.at(s.other_role(in.role));
  if (offer.empty()) return std::nullopt;
  const Bundle b = offer.bundle();
  if (!s.is_complete(b)) return std::nullopt;
  return partial_utility(s.payoff_table(in.role), b);
}

class NeverAgreeAgent final : public Agent {
 public:
  explicit NeverAgreeAgent(int words) : words_(words) {}
  AgentResult next_action(const TurnInput&) override {
    return {dump_action(filler_words(words_), nullptr, false, false), {}};
  }

 private:
  int words_;
};

class InstantBatnaAgent final : public Agent {
 public:
  explicit InstantBatnaAgent(int words) : words_(words) {}
  AgentResult next_action(const TurnInput&) override {
    return {dump_action(filler_words(words_), nullptr, false, true), {}};
  }

 private:
  int words_;
};

class ThresholdAccepterAgent final : public Agent {
 public:
  ThresholdAccepterAgent(Points threshold, int words)
      : threshold_(threshold), words_(words) {}
  AgentResult next_action(const TurnInput& in) override {
    auto value = acceptable_offer_value(in);
    if (value && *value >= threshold_) {
      return {dump_action(filler_words(words_), nullptr, true, false), {}};
    }
    return {dump_action(filler_words(words_), nullptr, false, false), {}};
  }

 private:
  Points threshold_;
  int words_;
};

class ConcessionLadderAgent final : public Agent {
 public:
  ConcessionLadderAgent(const Scenario& scenario, const std::string& role,
                        Points threshold, int words,
                        std::vector<std::string> order,
                        std::map<std::string, std::string> start)
      : threshold_(threshold),
        words_(words),
        order_(std::move(order)),
        start_(std::move(start)) {
    for (const auto& issue : scenario.issues) {
      Points best = issue.options.front().points.at(role);
      Points worst = best;
      const OptionDef* best_opt = &issue.options.front();
      const OptionDef* worst_opt = best_opt;
      for (const auto& opt : issue.options) {
        const Points p = opt.points.at(role);
        if (p > best) {
          best = p;
          best_opt = &opt;
        }
        if (p < worst) {
          worst = p;
          worst_opt = &opt;
        }
      }
      if (!start_.count(issue.id)) start_[issue.id] = best_opt->label;
      concession_[issue.id] = worst_opt->label;
    }
    if (order_.empty()) {
      for (const auto& issue : scenario.issues) order_.push_back(issue.id);
    }
  }

  AgentResult next_action(const TurnInput& in) override {
    auto value = acceptable_offer_value(in);
    if (value && *value >= threshold_) {
      return {dump_action(filler_words(words_), nullptr, true, false), {}};
    }
    const size_t conceded =
        std::min<size_t>(static_cast<size_t>(own_turns(in)), order_.size());
    json proposal = json::object();
    auto bundle = start_;
    for (size_t i = 0; i < conceded; ++i) bundle[order_[i]] = concession_.at(order_[i]);
    for (const auto& [issue, label] : bundle) proposal[issue] = label;
    return {dump_action(filler_words(words_), proposal, false, false), {}};
  }

 private:
  Points threshold_;
  int words_;
  std::vector<std::string> order_;
  std::map<std::string, std::string> start_;       // issue -> display label
  std::map<std::string, std::string> concession_;  // issue -> own-worst label
};

class FixedScriptAgent final : public Agent {
 public:
  explicit FixedScriptAgent(std::vector<std::string> actions)
      : actions_(std::move(actions)) {
    if (actions_.empty()) throw AgentError("fixed_script requires actions");
  }
  AgentResult next_action(const TurnInput&) override {
    const size_t i = std::min(cursor_, actions_.size() - 1);
    ++cursor_;  // one entry per call; exhaustion repeats the last action
    return {actions_[i], {}};
  }

 private:
  std::vector<std::string> actions_;
  size_t cursor_ = 0;
};

// Accepts at a strict threshold normally, and at a relaxed one when the
// prefix it sees signals urgency or few seconds left. Sensitive to the
// treatment the way a deadline-aware negotiator would be.
class TimePressureAccepterAgent final : public Agent {
 public:
  TimePressureAccepterAgent(Points strict, Points relaxed, int trigger_seconds,
                            int words)
      : strict_(strict), relaxed_(relaxed), trigger_s_(trigger_seconds),
        words_(words) {}

  AgentResult next_action(const TurnInput& in) override {
    Points threshold = strict_;
    if (prefix_signals_urgency(in.prefix)) threshold = relaxed_;
    auto value = acceptable_offer_value(in);
    if (value && *value >= threshold) {
      return {dump_action(filler_words(words_), nullptr, true, false), {}};
    }
    return {dump_action(filler_words(words_), nullptr, false, false), {}};
  }

 private:
  bool prefix_signals_urgency(const std::string& prefix) const {
    if (prefix.rfind("(Deadline approaching", 0) == 0) return true;
    long long seconds = 0;
    if (prefix.size() > 1 && prefix.front() == '(' &&
        std::isdigit(static_cast<unsigned char>(prefix[1]))) {
      size_t i = 1;
      while (i < prefix.size() && std::isdigit(static_cast<unsigned char>(prefix[i]))) {
        seconds = seconds * 10 + (prefix[i] - '0');
        ++i;
      }
      if (prefix.compare(i, 14, " seconds left)") == 0) return seconds <= trigger_s_;
    }
    return false;
  }

  Points strict_;
  Points relaxed_;
  int trigger_s_;
  int words_;
};

// --- Remote chat-completions agent ------------------------------------------

class RemoteAgent final : public Agent {
 public:
  RemoteAgent(RemoteSpec spec, std::shared_ptr<RateLimiter> limiter)
      : spec_(std::move(spec)), limiter_(std::move(limiter)) {
    if (spec_.model.empty()) throw AgentError("remote agent requires a model id");
    if (spec_.base_url.empty()) throw AgentError("remote agent requires a base_url");
  }

  AgentResult next_action(const TurnInput& in) override {
    json body;
    body["model"] = spec_.model;
    body["messages"] = json::array();
    for (const auto& m : in.context.messages) {
      body["messages"].push_back({{"role", m.role}, {"content", m.content}});
    }
    if (spec_.sampling.is_object()) {
      for (const auto& [k, v] : spec_.sampling.items()) body[k] = v;
    }
    if (spec_.reasoning.is_object()) {
      for (const auto& [k, v] : spec_.reasoning.items()) body[k] = v;
    }

    httplib::Headers headers;
    if (!spec_.api_key_env.empty()) {
      const char* key = std::getenv(spec_.api_key_env.c_str());
      if (!key || !*key) {
        throw AgentError("environment variable " + spec_.api_key_env + " is not set");
      }
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }

    const auto t0 = std::chrono::steady_clock::now();
    std::string last_error;
    for (int attempt = 1; attempt <= spec_.retry.max_attempts; ++attempt) {
      if (attempt > 1) {
        std::this_thread::sleep_for(std::chrono::milliseconds(
            spec_.retry.backoff_ms * (1LL << (attempt - 2))));
      }
      if (limiter_) limiter_->acquire();
      httplib::Client client(spec_.base_url);
      client.set_read_timeout(300, 0);
      client.set_connection_timeout(30, 0);
      auto res = client.Post(spec_.chat_path, headers, body.dump(), "application/json");
      if (!res) {
        last_error = "transport error: " + httplib::to_string(res.error());
        continue;
      }
      if (res->status == 429 || res->status >= 500) {
        last_error = "http status " + std::to_string(res->status);
        continue;
      }
      if (res->status < 200 || res->status >= 300) {
        throw AgentError("http status " + std::to_string(res->status) + ": " +
                         res->body);
      }
      return parse_response(res->body, t0);
    }
    throw AgentError("retries exhausted: " + last_error);
  }

 private:
  AgentResult parse_response(const std::string& body,
                             std::chrono::steady_clock::time_point t0) const {
    json doc = json::parse(body, nullptr, false);
    if (doc.is_discarded()) throw AgentError("response is not JSON");
    AgentResult out;
    try {
      out.raw = doc.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
      throw AgentError(std::string("malformed chat completion: ") + e.what());
    }
    if (doc.contains("usage") && doc.at("usage").is_object()) {
      const json& u = doc.at("usage");
      if (u.contains("prompt_tokens") && u.at("prompt_tokens").is_number_integer()) {
        out.usage.prompt_tokens = u.at("prompt_tokens").get<long long>();
      }
      if (u.contains("completion_tokens") &&
          u.at("completion_tokens").is_number_integer()) {
        out.usage.completion_tokens = u.at("completion_tokens").get<long long>();
      }
      if (u.contains("completion_tokens_details") &&
          u.at("completion_tokens_details").is_object()) {
        const json& d = u.at("completion_tokens_details");
        if (d.contains("reasoning_tokens") &&
            d.at("reasoning_tokens").is_number_integer()) {
          out.usage.reasoning_tokens = d.at("reasoning_tokens").get<long long>();
        }
      }
    }
    out.usage.gen_wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                                std::chrono::steady_clock::now() - t0)
                                .count();
    return out;
  }

  RemoteSpec spec_;
  std::shared_ptr<RateLimiter> limiter_;
};

}  // namespace

std::string render_incoming_message(const TranscriptEvent& event) {
  json j;
  j["message"] = event.action.message;
  if (event.action.proposal) {
    j["proposal"] = *event.action.proposal;
  } else {
    j["proposal"] = nullptr;
  }
  return j.dump();
}

TurnContext build_turn_context(const std::vector<TranscriptEvent>& transcript,
                               const Scenario& scenario, const std::string& role,
                               const std::string& prefix,
                               const std::string& augmented_system_prompt) {
  (void)scenario;
  TurnContext ctx;
  ctx.messages.push_back({"system", augmented_system_prompt});
  size_t last_opponent = transcript.size();
  for (size_t i = 0; i < transcript.size(); ++i) {
    if (transcript[i].role != role) last_opponent = i;
  }
  for (size_t i = 0; i < transcript.size(); ++i) {
    const auto& e = transcript[i];
    if (e.role == role) {
      ctx.messages.push_back({"assistant", e.raw});
    } else {
      std::string content = render_incoming_message(e);
      if (i == last_opponent) content = prefix + content;
      ctx.messages.push_back({"user", std::move(content)});
    }
  }
  return ctx;
}

RateLimiter::RateLimiter(double requests_per_second)
    : min_interval_ms_(requests_per_second > 0 ? 1000.0 / requests_per_second : 0) {}

void RateLimiter::acquire() {
  if (min_interval_ms_ <= 0) return;
  using namespace std::chrono;
  int64_t slot;
  {
    std::lock_guard<std::mutex> lock(mu_);
    const int64_t now =
        duration_cast<milliseconds>(steady_clock::now().time_since_epoch()).count();
    slot = std::max(now, next_slot_ms_);
    next_slot_ms_ = slot + static_cast<int64_t>(min_interval_ms_);
  }
  const int64_t now =
      duration_cast<milliseconds>(steady_clock::now().time_since_epoch()).count();
  if (slot > now) std::this_thread::sleep_for(milliseconds(slot - now));
}

AgentSpec AgentSpec::from_json(const json& j) {
  if (!j.is_object() || !j.contains("kind")) {
    throw AgentError("agent spec must be an object with a 'kind'");
  }
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "scripted") {
    ScriptedSpec s;
    s.policy = j.at("policy").get<std::string>();
    s.params = j.value("params", json::object());
    return AgentSpec{s};
  }
  if (kind == "remote") {
    RemoteSpec r;
    r.base_url = j.at("base_url").get<std::string>();
    r.chat_path = j.value("chat_path", std::string("/chat/completions"));
    r.model = j.at("model").get<std::string>();
    if (r.model.empty()) throw AgentError("remote agent spec: empty model id");
    r.api_key_env = j.value("api_key_env", std::string());
    r.reasoning = j.value("reasoning", json::object());
    r.sampling = j.value("sampling", json::object());
    if (j.contains("retry")) {
      r.retry.max_attempts = j.at("retry").value("max_attempts", 4);
      r.retry.backoff_ms = j.at("retry").value("backoff_ms", 250);
    }
    r.rate_limit_rps = j.value("rate_limit_rps", 0.0);
    return AgentSpec{r};
  }
  throw AgentError("unknown agent kind: " + kind);
}

std::map<std::string, AgentSpec> parse_agent_pairing(const json& j) {
  if (!j.is_object() || j.empty()) {
    throw AgentError("agent pairing must be a non-empty object of role -> spec");
  }
  std::map<std::string, AgentSpec> out;
  for (const auto& [role, spec] : j.items()) {
    out.emplace(role, AgentSpec::from_json(spec));
  }
  return out;
}

std::unique_ptr<Agent> make_agent(const AgentSpec& spec, const Scenario& scenario,
                                  const std::string& role,
                                  std::shared_ptr<RateLimiter> limiter) {
  if (const auto* remote = std::get_if<RemoteSpec>(&spec.spec)) {
    return std::make_unique<RemoteAgent>(*remote, std::move(limiter));
  }
  const auto& s = std::get<ScriptedSpec>(spec.spec);
  const json& p = s.params;
  const int words = p.value("words", 50);
  if (s.policy == "never_agree") {
    return std::make_unique<NeverAgreeAgent>(words);
  }
  if (s.policy == "instant_batna") {
    return std::make_unique<InstantBatnaAgent>(words);
  }
  if (s.policy == "threshold_accepter") {
    return std::make_unique<ThresholdAccepterAgent>(
        p.at("threshold").get<Points>(), words);
  }
  if (s.policy == "concession_ladder") {
    std::vector<std::string> order;
    if (p.contains("order")) order = p.at("order").get<std::vector<std::string>>();
    std::map<std::string, std::string> start;
    if (p.contains("start")) {
      start = p.at("start").get<std::map<std::string, std::string>>();
    }
    return std::make_unique<ConcessionLadderAgent>(
        scenario, role, p.at("threshold").get<Points>(), words, std::move(order),
        std::move(start));
  }
  if (s.policy == "fixed_script") {
    return std::make_unique<FixedScriptAgent>(
        p.at("actions").get<std::vector<std::string>>());
  }
  if (s.policy == "time_pressure_accepter") {
    return std::make_unique<TimePressureAccepterAgent>(
        p.at("threshold_strict").get<Points>(),
        p.at("threshold_relaxed").get<Points>(), p.value("trigger_seconds", 100),
        words);
  }
  throw AgentError("unknown scripted policy: " + s.policy);
}

}  // namespace negsim
