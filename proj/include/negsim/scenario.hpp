#pragma once

#include <array>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace negsim {

using Points = long long;

struct ScenarioError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Normalized matching key: lowercase alphanumerics only, so "$39,000",
// "39000" and "$39 000" all land on the same option.
std::string normalize_label(std::string_view label);

struct OptionDef {
  std::string label;  // canonical display label, stored verbatim
  std::string canon;  // normalize_label(label)
  std::map<std::string, Points> points;  // role -> points
};

struct Issue {
  std::string id;
  std::string display_name;
  std::vector<OptionDef> options;

  // Looks an option up by any formatting variant of its label.
  const OptionDef* find_option(std::string_view raw_label) const;
};

// A (possibly partial) assignment of canonical option labels to issues.
struct Bundle {
  std::map<std::string, std::string> assignments;  // issue id -> canonical label

  bool empty() const { return assignments.empty(); }
};

struct PayoffTable {
  std::string role;
  // issue id -> canonical label -> points
  std::map<std::string, std::map<std::string, Points>> by_issue;
};

struct Scenario {
  std::string name;
  std::array<std::string, 2> roles;
  std::vector<Issue> issues;
  std::map<std::string, Points> batna_points;
  std::map<std::string, Points> declared_max;
  std::map<std::string, std::string> system_prompts;
  // How each role's counterpart is addressed in that role's speech-latency
  // paragraph (e.g. hr -> "recruit").
  std::map<std::string, std::string> speech_addressees;

  const Issue* find_issue(std::string_view id) const;
  bool has_role(std::string_view role) const;
  const std::string& other_role(const std::string& role) const;
  PayoffTable payoff_table(const std::string& role) const;
  bool is_complete(const Bundle& b) const;  // all issues assigned
};

Scenario parse_scenario(const nlohmann::json& doc, const std::string& origin);
Scenario load_scenario(const std::string& path);
nlohmann::json scenario_to_json(const Scenario& s);

// Builds a Bundle from display-form labels, normalizing each one.
// Throws ScenarioError on unknown issue ids or labels.
Bundle make_bundle(const Scenario& s,
                   const std::map<std::string, std::string>& raw_assignments);

// Sum of per-issue points over a complete bundle. Throws on an incomplete
// bundle or a label outside the issue's domain.
Points utility(const PayoffTable& table, const Bundle& bundle);
// Same sum restricted to the issues the bundle assigns.
Points partial_utility(const PayoffTable& table, const Bundle& bundle);
Points joint_payoff(const Scenario& s, const Bundle& bundle);
Points joint_partial_payoff(const Scenario& s, const Bundle& bundle);
Points max_utility(const PayoffTable& table);
Points min_utility(const PayoffTable& table);

enum class IssueKind { compatible, distributive, integrative };

struct IssueClass {
  IssueKind kind;
  bool tie = false;  // a role had duplicate point values; order undefined
};

std::string_view to_string(IssueKind k);
IssueClass classify_issue(const Scenario& s, const std::string& issue_id);

}  // namespace negsim
