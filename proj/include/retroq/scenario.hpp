#pragma once

// Declarative scenario runner: a single JSON config document selects one of
// the library's scenario families, `run_scenario` dispatches to the modules,
// writes the data artifacts plus a machine-readable report.json, and maps the
// outcome onto the process exit convention (0 pass / 1 failed check /
// 2 error, the error leg being signalled by exceptions).

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "retroq/common.hpp"

namespace retroq {

using Json = nlohmann::json;

struct ScenarioConfig {
    std::string scenario;
    std::uint64_t seed = 0;     // always defined; default 0
    std::string out_dir = "."; // overridable by the CLI --out flag
    Json params;                // the full validated document
};

/// Every schema violation in the document, each prefixed with the JSON
/// pointer of the offending (or missing) key. Empty means valid.
std::vector<std::string> validate_config(const Json& doc);

/// Parse + validate. Throws ParseError on malformed JSON and ValidationError
/// (message = all violations, newline-separated) on schema violations.
ScenarioConfig parse_config(const std::string& text);

struct RunResult {
    int status = 0;  // 0 pass, 1 failed check; errors propagate as exceptions
    Json report;     // copy of what was written to <out_dir>/report.json
};

/// Run one scenario: writes the scenario's data artifacts and report.json
/// into cfg.out_dir (created if missing). The report's top-level keys are
/// scenario, seed, elapsed_s, metrics{...}, artifacts[...].
RunResult run_scenario(const ScenarioConfig& cfg);

}  // namespace retroq
