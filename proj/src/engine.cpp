#include "negsim/engine.hpp"

#include <fstream>
#include <sstream>

#include "negsim/agents.hpp"

namespace negsim {

namespace {

using nlohmann::json;

// Scans for a balanced {...} span starting at `start`, honoring string
// literals and escapes. Returns one-past-the-end or npos.
size_t find_balanced_object_end(const std::string& text, size_t start) {
  int depth = 0;
  bool in_string = false;
  bool escaped = false;
  for (size_t i = start; i < text.size(); ++i) {
    const char c = text[i];
    if (in_string) {
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{') {
      ++depth;
    } else if (c == '}') {
      --depth;
      if (depth == 0) return i + 1;
    }
  }
  return std::string::npos;
}

std::string scalar_to_label(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  if (v.is_number_float()) {
    std::ostringstream os;
    os << v.get<double>();
    return os.str();
  }
  return "";
}

Points batna_or_zero(const Scenario& s, const std::string& role) {
  auto it = s.batna_points.find(role);
  return it == s.batna_points.end() ? 0 : it->second;
}

void fill_batna_payoffs(const Scenario& s, Outcome& o) {
  for (const auto& role : s.roles) o.payoffs[role] = batna_or_zero(s, role);
}

}  // namespace

std::string_view to_string(ParseErrorKind k) {
  switch (k) {
    case ParseErrorKind::no_json_found: return "NoJsonFound";
    case ParseErrorKind::field_type_error: return "FieldTypeError";
    case ParseErrorKind::both_flags_true: return "BothFlagsTrue";
    case ParseErrorKind::unknown_issue_key: return "UnknownIssueKey";
  }
  return "?";
}

std::variant<ActionMessage, ParseError> parse_action(const std::string& raw,
                                                     const Scenario& scenario) {
  json obj;
  bool found = false;
  for (size_t pos = raw.find('{'); pos != std::string::npos;
       pos = raw.find('{', pos + 1)) {
    const size_t end = find_balanced_object_end(raw, pos);
    if (end == std::string::npos) continue;
    json candidate = json::parse(raw.substr(pos, end - pos), nullptr, false);
    if (!candidate.is_discarded() && candidate.is_object()) {
      obj = std::move(candidate);
      found = true;
      break;
    }
  }
  if (!found) {
    return ParseError{ParseErrorKind::no_json_found, "no JSON object in output", raw};
  }

  ActionMessage action;
  if (!obj.contains("message") || !obj.at("message").is_string()) {
    return ParseError{ParseErrorKind::field_type_error,
                      "'message' must be a string", raw};
  }
  action.message = obj.at("message").get<std::string>();

  for (const char* flag : {"accepted", "taking_batna"}) {
    if (obj.contains(flag) && !obj.at(flag).is_boolean()) {
      return ParseError{ParseErrorKind::field_type_error,
                        std::string("'") + flag + "' must be a boolean", raw};
    }
  }
  action.accepted = obj.value("accepted", false);
  action.taking_batna = obj.value("taking_batna", false);
  if (action.accepted && action.taking_batna) {
    return ParseError{ParseErrorKind::both_flags_true,
                      "accepted and taking_batna are both true", raw};
  }

  if (obj.contains("proposal") && !obj.at("proposal").is_null()) {
    if (!obj.at("proposal").is_object()) {
      return ParseError{ParseErrorKind::field_type_error,
                        "'proposal' must be an object or null", raw};
    }
    std::map<std::string, std::string> assignments;
    for (const auto& [key, value] : obj.at("proposal").items()) {
      const Issue* issue = scenario.find_issue(key);
      if (!issue) {
        return ParseError{ParseErrorKind::unknown_issue_key,
                          "proposal key '" + key + "' is not a scenario issue", raw};
      }
      if (value.is_null()) continue;
      const OptionDef* opt = issue->find_option(scalar_to_label(value));
      if (!opt) continue;  // unknown value: treated as unassigned
      assignments[key] = opt->canon;
    }
    action.proposal = std::move(assignments);
  }
  return action;
}

StandingOffer merge_proposal(StandingOffer standing,
                             const std::map<std::string, std::string>& incoming,
                             int turn) {
  for (const auto& [issue, label] : incoming) {
    standing.assignments[issue] = label;
    standing.provenance[issue] = turn;
  }
  return standing;
}

std::string_view to_string(OutcomeKind k) {
  switch (k) {
    case OutcomeKind::deal: return "deal";
    case OutcomeKind::batna: return "batna";
    case OutcomeKind::timeout: return "timeout";
    case OutcomeKind::turn_exhausted: return "turn_exhausted";
    case OutcomeKind::failed: return "failed";
  }
  return "?";
}

OutcomeKind outcome_kind_from_string(std::string_view s) {
  if (s == "deal") return OutcomeKind::deal;
  if (s == "batna") return OutcomeKind::batna;
  if (s == "timeout") return OutcomeKind::timeout;
  if (s == "turn_exhausted") return OutcomeKind::turn_exhausted;
  if (s == "failed") return OutcomeKind::failed;
  throw EngineError("unknown outcome kind: " + std::string(s));
}

bool NegotiationState::opponent_has_spoken() const {
  for (const auto& e : events) {
    if (e.role != active_role) return true;
  }
  return false;
}

NegotiationState make_state(const Scenario& scenario, const TreatmentConfig& cfg,
                            const std::string& initiator) {
  cfg.validate();
  if (!scenario.has_role(initiator)) {
    throw EngineError("initiator '" + initiator + "' is not a scenario role");
  }
  NegotiationState state;
  state.scenario = &scenario;
  state.cfg = cfg;
  if (cfg.budget_seconds) {
    state.clock = ClockState::start(*cfg.budget_seconds, cfg.clock_mode);
  }
  state.active_role = initiator;
  for (const auto& role : scenario.roles) state.standing[role];
  return state;
}

namespace {

void finalize_counts(NegotiationState& state, Outcome& o) {
  o.utterances = static_cast<int>(state.events.size());
  o.words_total = 0;
  for (const auto& e : state.events) o.words_total += word_count(e.action.message);
  o.elapsed_ms = state.events.empty() ? 0 : state.events.back().t_ms;
}

void end_negotiation(NegotiationState& state, Outcome o) {
  finalize_counts(state, o);
  state.ended = std::move(o);
}

}  // namespace

std::optional<ApplyError> apply_action(NegotiationState& state,
                                       const DeliveredAction& delivered) {
  if (!state.running()) throw EngineError("apply_action on an ended negotiation");
  const Scenario& s = *state.scenario;
  const std::string speaker = state.active_role;
  const std::string& opponent = s.other_role(speaker);

  if (delivered.action.accepted && state.standing.at(opponent).empty()) {
    return ApplyError::accept_without_standing_offer;
  }

  TranscriptEvent e;
  e.turn = state.turn_index;
  e.role = speaker;
  e.raw = delivered.raw;
  e.action = delivered.action;
  e.prefix = delivered.prefix;
  e.latency_ms = delivered.latency_ms;
  e.gen_ms = delivered.gen_ms;
  e.reasoning_tokens = delivered.reasoning_tokens;
  if (state.clock) e.remaining_ms = state.clock->remaining_ms;
  e.t_ms = (state.events.empty() ? 0 : state.events.back().t_ms) +
           delivered.latency_ms + (state.cfg.clock_mode != ClockMode::simulated_speech
                                       ? delivered.gen_ms
                                       : 0);
  state.events.push_back(std::move(e));
  state.turn_index += 1;

  const ActionMessage& action = delivered.action;
  if (action.accepted) {
    // Binds the opponent's standing offer; any attached proposal is ignored.
    const StandingOffer& offer = state.standing.at(opponent);
    Outcome o;
    o.kind = OutcomeKind::deal;
    o.bundle = offer.bundle();
    o.incomplete = !s.is_complete(*o.bundle);
    for (const auto& role : s.roles) {
      o.payoffs[role] = partial_utility(s.payoff_table(role), *o.bundle);
    }
    end_negotiation(state, std::move(o));
    return std::nullopt;
  }
  if (action.taking_batna) {
    Outcome o;
    o.kind = OutcomeKind::batna;
    o.invoker = speaker;
    fill_batna_payoffs(s, o);
    end_negotiation(state, std::move(o));
    return std::nullopt;
  }
  if (action.proposal && !action.proposal->empty()) {
    state.standing[speaker] =
        merge_proposal(state.standing.at(speaker), *action.proposal,
                       state.turn_index - 1);
  }
  state.active_role = opponent;
  return std::nullopt;
}

void check_termination(NegotiationState& state) {
  if (!state.running()) return;
  const bool time_up = state.clock.has_value() && state.clock->expired();
  const bool turns_up = state.cfg.turn_budget.has_value() &&
                        state.turn_index >= *state.cfg.turn_budget;
  if (!time_up && !turns_up) return;
  Outcome o;
  o.kind = time_up ? OutcomeKind::timeout : OutcomeKind::turn_exhausted;
  o.time_turn_tie = time_up && turns_up;
  fill_batna_payoffs(*state.scenario, o);
  end_negotiation(state, std::move(o));
}

OfferMetrics compute_metrics(const Scenario& scenario,
                             const std::vector<TranscriptEvent>& events,
                             const Outcome& outcome) {
  OfferMetrics m;
  m.utterances = static_cast<int>(events.size());
  long long reasoning_sum = 0;
  int reasoning_n = 0;
  std::map<std::string, StandingOffer> standing;
  for (const auto& role : scenario.roles) standing[role];

  for (const auto& e : events) {
    m.words += word_count(e.action.message);
    if (e.action.accepted) m.accept_events += 1;
    if (e.reasoning_tokens) {
      reasoning_sum += *e.reasoning_tokens;
      reasoning_n += 1;
    }
    if (!e.action.accepted && e.action.proposal && !e.action.proposal->empty()) {
      standing[e.role] = merge_proposal(standing.at(e.role), *e.action.proposal, e.turn);
      const Bundle b = standing.at(e.role).bundle();
      if (scenario.is_complete(b)) {
        const Points joint = joint_payoff(scenario, b);
        if (!m.first_offer_joint) m.first_offer_joint = joint;
        m.final_offer_joint = joint;
      }
    }
  }
  if (outcome.kind == OutcomeKind::deal && outcome.bundle &&
      scenario.is_complete(*outcome.bundle)) {
    m.final_offer_joint = joint_payoff(scenario, *outcome.bundle);
  }
  if (reasoning_n > 0) {
    m.reasoning_tokens_per_utterance =
        static_cast<double>(reasoning_sum) / reasoning_n;
  }
  return m;
}

RunResult run_negotiation(const Scenario& scenario,
                          const std::map<std::string, Agent*>& agents,
                          const TreatmentConfig& cfg, const std::string& initiator,
                          uint64_t seed, const EngineOptions& options) {
  cfg.validate();
  for (const auto& role : scenario.roles) {
    if (!agents.count(role) || agents.at(role) == nullptr) {
      throw EngineError("no agent for role '" + role + "'");
    }
  }
  const bool wall_charged = cfg.clock_mode != ClockMode::simulated_speech;
  const bool speech_charged = cfg.clock_mode != ClockMode::wall_clock;
  SteadyTimeSource steady;
  TimeSource* ts = options.time_source ? options.time_source : &steady;

  NegotiationState state = make_state(scenario, cfg, initiator);
  while (state.running()) {
    if (state.turn_index >= options.safety_turn_cap) {
      throw EngineError("safety turn cap reached; negotiation cannot terminate");
    }
    check_termination(state);
    if (!state.running()) break;

    const std::string role = state.active_role;
    const std::string prefix =
        render_time_prefix(cfg, state.clock, state.opponent_has_spoken());
    const std::string system_prompt = augment_system_prompt(
        cfg, scenario.system_prompts.at(role), scenario.speech_addressees.at(role));

    TurnInput input;
    input.context =
        build_turn_context(state.events, scenario, role, prefix, system_prompt);
    input.scenario = &scenario;
    input.transcript = &state.events;
    input.role = role;
    input.prefix = prefix;
    input.seed = seed;

    // Malformed output is re-requested with a corrective note; retries do
    // not consume the simulated clock.
    std::optional<DeliveredAction> delivered;
    std::string failure;
    for (int attempt = 0; attempt <= options.max_reprompts; ++attempt) {
      AgentResult res;
      int64_t gen_ms = 0;  // charged only in wall-clock modes
      try {
        if (wall_charged) {
          const int64_t t0 = ts->now_ms();
          res = agents.at(role)->next_action(input);
          gen_ms = ts->now_ms() - t0;
        } else {
          res = agents.at(role)->next_action(input);
        }
      } catch (const std::exception& e) {
        failure = std::string("agent failure: ") + e.what();
        break;
      }
      auto parsed = parse_action(res.raw, scenario);
      std::string note;
      if (auto* err = std::get_if<ParseError>(&parsed)) {
        note = std::string("Your previous reply was invalid (") +
               std::string(to_string(err->kind)) + ": " + err->detail + ").";
        failure = "malformed output after retries: " + err->detail;
      } else {
        DeliveredAction d;
        d.raw = res.raw;
        d.action = std::get<ActionMessage>(parsed);
        d.prefix = prefix;
        d.gen_ms = gen_ms;
        d.reasoning_tokens = res.usage.reasoning_tokens;
        if (d.action.accepted &&
            state.standing.at(scenario.other_role(role)).empty()) {
          note = "You set \"accepted\": true but there is no offer on the "
                 "table to accept.";
          failure = "accept without a standing offer after retries";
        } else {
          delivered = std::move(d);
          failure.clear();
          break;
        }
      }
      input.context.messages.push_back({"assistant", res.raw});
      input.context.messages.push_back(
          {"system", note + " Respond again with a single JSON object in the "
                            "required format."});
    }
    if (!delivered) {
      Outcome o;
      o.kind = OutcomeKind::timeout;
      o.annotation = failure.empty() ? "agent failure" : failure;
      fill_batna_payoffs(scenario, o);
      finalize_counts(state, o);
      state.ended = std::move(o);
      break;
    }

    // Charge generation wall time, then speech latency. An utterance that
    // does not fit in the remaining budget is discarded and the negotiation
    // times out; terminal flags inside it do not take effect.
    if (state.clock) {
      bool fits = true;
      ClockState next = *state.clock;
      if (wall_charged) {
        if (auto c = charge(next, delivered->gen_ms)) {
          next = *c;
        } else {
          fits = false;
        }
      }
      int64_t latency = 0;
      if (fits && speech_charged && cfg.latency_enabled) {
        latency = speech_latency_ms(delivered->action.message);
        if (auto c = charge(next, latency)) {
          next = *c;
        } else {
          fits = false;
        }
      }
      if (!fits) {
        Outcome o;
        o.kind = OutcomeKind::timeout;
        o.discarded = nlohmann::json{{"role", role},
                                     {"raw", delivered->raw},
                                     {"latency_ms", speech_latency_ms(
                                                        delivered->action.message)},
                                     {"gen_ms", delivered->gen_ms},
                                     {"remaining_ms", state.clock->remaining_ms}};
        fill_batna_payoffs(scenario, o);
        finalize_counts(state, o);
        state.ended = std::move(o);
        break;
      }
      delivered->latency_ms = latency;
      state.clock = next;
    } else {
      delivered->latency_ms = 0;
    }

    if (apply_action(state, *delivered)) {
      // Unreachable: accept-without-offer is caught during the retry loop.
      throw EngineError("protocol error slipped past validation");
    }
  }

  return RunResult{std::move(state.events), std::move(*state.ended)};
}

// --- serialization ----------------------------------------------------------

json event_to_json(const TranscriptEvent& e) {
  json a;
  a["message"] = e.action.message;
  if (e.action.proposal) {
    a["proposal"] = *e.action.proposal;
  } else {
    a["proposal"] = nullptr;
  }
  a["accepted"] = e.action.accepted;
  a["taking_batna"] = e.action.taking_batna;

  json j;
  j["schema_version"] = kTranscriptSchemaVersion;
  j["type"] = "event";
  j["turn"] = e.turn;
  j["role"] = e.role;
  j["raw"] = e.raw;
  j["action"] = std::move(a);
  j["prefix"] = e.prefix;
  j["latency_ms"] = e.latency_ms;
  j["remaining_ms"] = e.remaining_ms ? json(*e.remaining_ms) : json(nullptr);
  j["reasoning_tokens"] =
      e.reasoning_tokens ? json(*e.reasoning_tokens) : json(nullptr);
  j["gen_ms"] = e.gen_ms;
  j["t_ms"] = e.t_ms;
  return j;
}

TranscriptEvent event_from_json(const json& j) {
  if (j.value("schema_version", -1) != kTranscriptSchemaVersion) {
    throw EngineError("unsupported transcript schema_version");
  }
  TranscriptEvent e;
  e.turn = j.at("turn").get<int>();
  e.role = j.at("role").get<std::string>();
  e.raw = j.at("raw").get<std::string>();
  const json& a = j.at("action");
  e.action.message = a.at("message").get<std::string>();
  if (!a.at("proposal").is_null()) {
    e.action.proposal = a.at("proposal").get<std::map<std::string, std::string>>();
  }
  e.action.accepted = a.at("accepted").get<bool>();
  e.action.taking_batna = a.at("taking_batna").get<bool>();
  e.prefix = j.at("prefix").get<std::string>();
  e.latency_ms = j.at("latency_ms").get<int64_t>();
  if (!j.at("remaining_ms").is_null()) e.remaining_ms = j.at("remaining_ms").get<int64_t>();
  if (!j.at("reasoning_tokens").is_null()) {
    e.reasoning_tokens = j.at("reasoning_tokens").get<long long>();
  }
  e.gen_ms = j.value("gen_ms", int64_t{0});
  e.t_ms = j.at("t_ms").get<int64_t>();
  return e;
}

json outcome_to_json(const Outcome& o) {
  json j;
  j["schema_version"] = kTranscriptSchemaVersion;
  j["type"] = "outcome";
  j["kind"] = std::string(to_string(o.kind));
  j["invoker"] = o.invoker ? json(*o.invoker) : json(nullptr);
  j["bundle"] = o.bundle ? json(o.bundle->assignments) : json(nullptr);
  j["incomplete"] = o.incomplete;
  j["payoffs"] = o.payoffs;
  j["utterances"] = o.utterances;
  j["words_total"] = o.words_total;
  j["elapsed_ms"] = o.elapsed_ms;
  j["time_turn_tie"] = o.time_turn_tie;
  j["annotation"] = o.annotation ? json(*o.annotation) : json(nullptr);
  j["discarded"] = o.discarded ? *o.discarded : json(nullptr);
  return j;
}

Outcome outcome_from_json(const json& j) {
  if (j.value("schema_version", -1) != kTranscriptSchemaVersion) {
    throw EngineError("unsupported transcript schema_version");
  }
  Outcome o;
  o.kind = outcome_kind_from_string(j.at("kind").get<std::string>());
  if (!j.at("invoker").is_null()) o.invoker = j.at("invoker").get<std::string>();
  if (!j.at("bundle").is_null()) {
    o.bundle = Bundle{j.at("bundle").get<std::map<std::string, std::string>>()};
  }
  o.incomplete = j.at("incomplete").get<bool>();
  o.payoffs = j.at("payoffs").get<std::map<std::string, Points>>();
  o.utterances = j.at("utterances").get<int>();
  o.words_total = j.at("words_total").get<long long>();
  o.elapsed_ms = j.at("elapsed_ms").get<int64_t>();
  o.time_turn_tie = j.value("time_turn_tie", false);
  if (!j.at("annotation").is_null()) o.annotation = j.at("annotation").get<std::string>();
  if (!j.at("discarded").is_null()) o.discarded = j.at("discarded");
  return o;
}

std::string transcript_to_string(const RunResult& result) {
  std::string out;
  for (const auto& e : result.events) {
    out += event_to_json(e).dump();
    out += '\n';
  }
  out += outcome_to_json(result.outcome).dump();
  out += '\n';
  return out;
}

RunResult transcript_from_string(const std::string& text) {
  RunResult result;
  bool have_outcome = false;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (have_outcome) throw EngineError("transcript has lines after the outcome");
    json j = json::parse(line);
    const std::string type = j.at("type").get<std::string>();
    if (type == "event") {
      result.events.push_back(event_from_json(j));
    } else if (type == "outcome") {
      result.outcome = outcome_from_json(j);
      have_outcome = true;
    } else {
      throw EngineError("unknown transcript line type: " + type);
    }
  }
  if (!have_outcome) throw EngineError("transcript missing outcome line");
  return result;
}

void write_transcript(const std::string& path, const RunResult& result) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw EngineError("cannot write transcript: " + path);
  out << transcript_to_string(result);
  if (!out) throw EngineError("short write: " + path);
}

RunResult read_transcript(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw EngineError("cannot read transcript: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return transcript_from_string(buf.str());
}

}  // namespace negsim
