#include "negsim/scenario.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <limits>

namespace negsim {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& origin, const std::string& what) {
  throw ScenarioError(origin + ": " + what);
}

Points checked_integer(const json& v, const std::string& origin,
                       const std::string& path) {
  if (!v.is_number_integer()) {
    fail(origin, path + " must be an integer point value");
  }
  return v.get<Points>();
}

}  // namespace

std::string normalize_label(std::string_view label) {
  std::string out;
  out.reserve(label.size());
  for (unsigned char c : label) {
    if (std::isalnum(c)) {
      out.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  return out;
}

const OptionDef* Issue::find_option(std::string_view raw_label) const {
  const std::string canon = normalize_label(raw_label);
  for (const auto& opt : options) {
    if (opt.canon == canon) return &opt;
  }
  return nullptr;
}

const Issue* Scenario::find_issue(std::string_view id) const {
  for (const auto& issue : issues) {
    if (issue.id == id) return &issue;
  }
  return nullptr;
}

bool Scenario::has_role(std::string_view role) const {
  return roles[0] == role || roles[1] == role;
}

const std::string& Scenario::other_role(const std::string& role) const {
  if (roles[0] == role) return roles[1];
  if (roles[1] == role) return roles[0];
  throw ScenarioError("unknown role: " + role);
}

PayoffTable Scenario::payoff_table(const std::string& role) const {
  if (!has_role(role)) throw ScenarioError("unknown role: " + role);
  PayoffTable t;
  t.role = role;
  for (const auto& issue : issues) {
    auto& row = t.by_issue[issue.id];
    for (const auto& opt : issue.options) {
      row[opt.canon] = opt.points.at(role);
    }
  }
  return t;
}

bool Scenario::is_complete(const Bundle& b) const {
  for (const auto& issue : issues) {
    if (!b.assignments.count(issue.id)) return false;
  }
  return true;
}

Scenario parse_scenario(const json& doc, const std::string& origin) {
  if (!doc.is_object()) fail(origin, "document is not a JSON object");
  for (const char* key : {"name", "roles", "issues", "batna_points",
                          "declared_max", "system_prompts"}) {
    if (!doc.contains(key)) fail(origin, std::string("missing field '") + key + "'");
  }

  Scenario s;
  s.name = doc.at("name").get<std::string>();
  const auto& roles = doc.at("roles");
  if (!roles.is_array() || roles.size() != 2) {
    fail(origin, "roles must be an array of exactly 2 role ids");
  }
  s.roles = {roles[0].get<std::string>(), roles[1].get<std::string>()};
  if (s.roles[0] == s.roles[1]) fail(origin, "roles must be distinct");

  if (!doc.at("issues").is_array() || doc.at("issues").empty()) {
    fail(origin, "issues must be a non-empty array");
  }
  for (const auto& ij : doc.at("issues")) {
    Issue issue;
    issue.id = ij.at("id").get<std::string>();
    const std::string ipath = "issues." + issue.id;
    if (s.find_issue(issue.id)) fail(origin, ipath + ": duplicate issue id");
    issue.display_name = ij.value("display_name", issue.id);
    if (!ij.contains("options") || !ij.at("options").is_array() ||
        ij.at("options").size() < 2) {
      fail(origin, ipath + ": at least 2 options required");
    }
    for (const auto& oj : ij.at("options")) {
      OptionDef opt;
      opt.label = oj.at("label").get<std::string>();
      opt.canon = normalize_label(opt.label);
      const std::string opath = ipath + ".options[" + opt.label + "]";
      if (opt.canon.empty()) fail(origin, opath + ": label normalizes to empty");
      for (const auto& existing : issue.options) {
        if (existing.canon == opt.canon) {
          fail(origin, opath + ": label collides with '" + existing.label + "'");
        }
      }
      if (!oj.contains("points") || !oj.at("points").is_object()) {
        fail(origin, opath + ": missing points map");
      }
      for (const auto& role : s.roles) {
        if (!oj.at("points").contains(role)) {
          fail(origin, opath + ": no points for role '" + role + "'");
        }
        opt.points[role] =
            checked_integer(oj.at("points").at(role), origin, opath + ".points." + role);
      }
      for (const auto& [role, _] : oj.at("points").items()) {
        if (!s.has_role(role)) {
          fail(origin, opath + ": points for unknown role '" + role + "'");
        }
      }
      issue.options.push_back(std::move(opt));
    }
    s.issues.push_back(std::move(issue));
  }

  for (const auto& role : s.roles) {
    const auto& bj = doc.at("batna_points");
    const auto& mj = doc.at("declared_max");
    const auto& pj = doc.at("system_prompts");
    if (!bj.contains(role)) fail(origin, "batna_points missing role '" + role + "'");
    if (!mj.contains(role)) fail(origin, "declared_max missing role '" + role + "'");
    if (!pj.contains(role)) fail(origin, "system_prompts missing role '" + role + "'");
    s.batna_points[role] = checked_integer(bj.at(role), origin, "batna_points." + role);
    s.declared_max[role] = checked_integer(mj.at(role), origin, "declared_max." + role);
    s.system_prompts[role] = pj.at(role).get<std::string>();
  }
  if (doc.contains("speech_addressees")) {
    for (const auto& role : s.roles) {
      if (doc.at("speech_addressees").contains(role)) {
        s.speech_addressees[role] =
            doc.at("speech_addressees").at(role).get<std::string>();
      }
    }
  }
  for (const auto& role : s.roles) {
    if (!s.speech_addressees.count(role)) {
      s.speech_addressees[role] = s.other_role(role);
    }
  }

  for (const auto& role : s.roles) {
    const Points computed = max_utility(s.payoff_table(role));
    if (computed != s.declared_max.at(role)) {
      fail(origin, "declared_max." + role + " = " +
                       std::to_string(s.declared_max.at(role)) +
                       " but computed maximum is " + std::to_string(computed));
    }
  }
  return s;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError(path + ": cannot open file");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ScenarioError(path + ": " + e.what());
  }
  return parse_scenario(doc, path);
}

nlohmann::json scenario_to_json(const Scenario& s) {
  json doc;
  doc["name"] = s.name;
  doc["roles"] = {s.roles[0], s.roles[1]};
  doc["issues"] = json::array();
  for (const auto& issue : s.issues) {
    json ij;
    ij["id"] = issue.id;
    ij["display_name"] = issue.display_name;
    ij["options"] = json::array();
    for (const auto& opt : issue.options) {
      json oj;
      oj["label"] = opt.label;
      oj["points"] = opt.points;
      ij["options"].push_back(std::move(oj));
    }
    doc["issues"].push_back(std::move(ij));
  }
  doc["batna_points"] = s.batna_points;
  doc["declared_max"] = s.declared_max;
  doc["system_prompts"] = s.system_prompts;
  doc["speech_addressees"] = s.speech_addressees;
  return doc;
}

Bundle make_bundle(const Scenario& s,
                   const std::map<std::string, std::string>& raw_assignments) {
  Bundle b;
  for (const auto& [issue_id, raw_label] : raw_assignments) {
    const Issue* issue = s.find_issue(issue_id);
    if (!issue) throw ScenarioError("unknown issue: " + issue_id);
    const OptionDef* opt = issue->find_option(raw_label);
    if (!opt) {
      throw ScenarioError("issue " + issue_id + ": unknown label '" + raw_label + "'");
    }
    b.assignments[issue_id] = opt->canon;
  }
  return b;
}

Points partial_utility(const PayoffTable& table, const Bundle& bundle) {
  Points sum = 0;
  for (const auto& [issue_id, canon] : bundle.assignments) {
    auto it = table.by_issue.find(issue_id);
    if (it == table.by_issue.end()) {
      throw ScenarioError("unknown issue: " + issue_id);
    }
    auto ot = it->second.find(canon);
    if (ot == it->second.end()) {
      throw ScenarioError("issue " + issue_id + ": unknown label '" + canon + "'");
    }
    sum += ot->second;
  }
  return sum;
}

Points utility(const PayoffTable& table, const Bundle& bundle) {
  for (const auto& [issue_id, _] : table.by_issue) {
    if (!bundle.assignments.count(issue_id)) {
      throw ScenarioError("incomplete bundle: issue '" + issue_id + "' unassigned");
    }
  }
  return partial_utility(table, bundle);
}

Points joint_payoff(const Scenario& s, const Bundle& bundle) {
  return utility(s.payoff_table(s.roles[0]), bundle) +
         utility(s.payoff_table(s.roles[1]), bundle);
}

Points joint_partial_payoff(const Scenario& s, const Bundle& bundle) {
  return partial_utility(s.payoff_table(s.roles[0]), bundle) +
         partial_utility(s.payoff_table(s.roles[1]), bundle);
}

Points max_utility(const PayoffTable& table) {
  Points sum = 0;
  for (const auto& [_, row] : table.by_issue) {
    Points best = std::numeric_limits<Points>::min();
    for (const auto& [_label, pts] : row) best = std::max(best, pts);
    sum += best;
  }
  return sum;
}

Points min_utility(const PayoffTable& table) {
  Points sum = 0;
  for (const auto& [_, row] : table.by_issue) {
    Points worst = std::numeric_limits<Points>::max();
    for (const auto& [_label, pts] : row) worst = std::min(worst, pts);
    sum += worst;
  }
  return sum;
}

std::string_view to_string(IssueKind k) {
  switch (k) {
    case IssueKind::compatible: return "compatible";
    case IssueKind::distributive: return "distributive";
    case IssueKind::integrative: return "integrative";
  }
  return "?";
}

IssueClass classify_issue(const Scenario& s, const std::string& issue_id) {
  const Issue* issue = s.find_issue(issue_id);
  if (!issue) throw ScenarioError("unknown issue: " + issue_id);

  const auto& r0 = s.roles[0];
  const auto& r1 = s.roles[1];
  auto argmax_set = [&](const std::string& role) {
    Points best = std::numeric_limits<Points>::min();
    for (const auto& opt : issue->options) best = std::max(best, opt.points.at(role));
    std::vector<const OptionDef*> out;
    for (const auto& opt : issue->options) {
      if (opt.points.at(role) == best) out.push_back(&opt);
    }
    return out;
  };
  const auto best0 = argmax_set(r0);
  const auto best1 = argmax_set(r1);
  for (const auto* a : best0) {
    if (std::find(best1.begin(), best1.end(), a) != best1.end()) {
      return {IssueKind::compatible, false};
    }
  }

  auto has_tie = [&](const std::string& role) {
    std::vector<Points> vals;
    for (const auto& opt : issue->options) vals.push_back(opt.points.at(role));
    std::sort(vals.begin(), vals.end());
    return std::adjacent_find(vals.begin(), vals.end()) != vals.end();
  };
  if (has_tie(r0) || has_tie(r1)) return {IssueKind::integrative, true};

  // Distributive iff sorting by one role's points exactly reverses the other's.
  std::vector<const OptionDef*> order(issue->options.size());
  for (size_t i = 0; i < issue->options.size(); ++i) order[i] = &issue->options[i];
  std::sort(order.begin(), order.end(), [&](const OptionDef* a, const OptionDef* b) {
    return a->points.at(r0) > b->points.at(r0);
  });
  bool reversed = true;
  for (size_t i = 0; i + 1 < order.size(); ++i) {
    if (order[i]->points.at(r1) >= order[i + 1]->points.at(r1)) {
      reversed = false;
      break;
    }
  }
  return {reversed ? IssueKind::distributive : IssueKind::integrative, false};
}

}  // namespace negsim
