#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "negsim/agents.hpp"
#include "negsim/engine.hpp"
#include "negsim/scenario.hpp"
#include "negsim/temporal.hpp"

namespace negsim {

struct RunnerError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr int kRecordSchemaVersion = 1;
inline constexpr int kManifestSchemaVersion = 1;

uint64_t fnv1a64(std::string_view bytes);
std::string hex64(uint64_t v);

struct TreatmentCells {
  Treatment treatment = Treatment::control;
  std::vector<int> budgets_s;  // timed treatments
  std::vector<int> turns;      // turn_limited
};

struct GridConfig {
  std::string name;
  std::vector<std::string> scenario_paths;
  std::vector<TreatmentCells> treatments;
  int reps = 100;
  uint64_t seed = 0;
  bool latency_enabled = true;
  ClockMode clock_mode = ClockMode::simulated_speech;
  int parallelism = 1;
  std::string output_dir = "out";
  nlohmann::json agents;  // role -> agent spec

  static GridConfig from_json(const nlohmann::json& j, const std::string& origin);
  static GridConfig from_file(const std::string& path);
  nlohmann::json canonical_json() const;
  std::string grid_hash() const;
};

struct Cell {
  std::string key;
  std::string scenario_path;
  std::string scenario_name;
  TreatmentConfig temporal;
};

struct RunSpec {
  int cell_index = 0;
  int rep = 0;
  std::string initiator;
  uint64_t run_seed = 0;
  std::string run_id;
};

struct ExpandedGrid {
  GridConfig config;
  std::map<std::string, Scenario> scenarios;  // keyed by path
  std::vector<Cell> cells;
  std::vector<RunSpec> runs;  // deterministic order

  const Scenario& scenario_of(const Cell& cell) const {
    return scenarios.at(cell.scenario_path);
  }
};

// Deterministic expansion; per-run seeds and ids are stable hashes of
// (global seed, cell key, rep). Initiators alternate by rep parity.
ExpandedGrid expand_grid(const GridConfig& config);

struct RunMetrics {
  int utterances = 0;
  long long words = 0;
  int accept_events = 0;
  std::optional<double> reasoning_tokens_per_utterance;
  std::optional<Points> first_offer_joint;
  std::optional<Points> final_offer_joint;
  bool closed = false;  // deal over a complete bundle
};

struct RunRecord {
  std::string run_id;
  std::string cell_key;
  int rep = 0;
  std::string initiator;
  uint64_t seed = 0;
  std::string outcome_kind;
  bool incomplete = false;
  bool failed = false;
  std::optional<std::string> fail_reason;
  std::map<std::string, Points> payoffs;
  RunMetrics metrics;
  std::string transcript;  // path relative to the results directory
};

nlohmann::json record_to_json(const RunRecord& r);
RunRecord record_from_json(const nlohmann::json& j);

struct ManifestCell {
  std::string key;
  std::string scenario_name;
  std::string scenario_file;  // copy under the results dir
  std::string records_file;
  std::string treatment;
  std::optional<int> budget_s;
  std::optional<int> turns;
  int reps = 0;
};

struct Manifest {
  std::string grid_name;
  std::string grid_hash;
  nlohmann::json config;
  std::vector<ManifestCell> cells;
};

Manifest read_manifest(const std::string& results_dir);

struct ExecuteOptions {
  bool resume = false;
  // Test hook: abort cleanly after this many new completions, simulating a
  // kill mid-grid.
  std::optional<int> stop_after;
  std::function<void(const std::string& cell, int done, int total)> progress;
};

struct ExecuteSummary {
  int total = 0;
  int executed = 0;
  int skipped = 0;
  int failed = 0;
  bool stopped_early = false;
  std::string results_dir;
};

// Runs each (cell, rep) at most once with bounded parallelism. Results land
// under <output_dir>/<grid-hash>/: one JSONL per cell, manifest.json,
// scenario copies, and per-run transcripts.
ExecuteSummary execute_grid(const ExpandedGrid& grid,
                            const ExecuteOptions& options = {});

struct LoadIssue {
  std::string file;
  int line = 0;  // 0 when the issue is not line-scoped
  std::string what;
};

struct LoadedRuns {
  Manifest manifest;
  std::vector<RunRecord> records;
  std::map<std::string, Scenario> scenarios;  // by scenario name
  std::vector<LoadIssue> issues;
  int mismatches = 0;  // cached fields contradicting the transcript
};

// Loads every record, re-deriving closure and payoffs from transcripts and
// flagging any mismatch. Corrupt lines abort unless `lenient`.
LoadedRuns load_runs(const std::string& results_dir, bool lenient);

}  // namespace negsim
