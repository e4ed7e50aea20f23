#pragma once

#include <string>
#include <vector>

#include "nrho/scenario.hpp"

namespace nrho {

/// Summary document (schema "nrho.summary", version 1).
std::string summary_json(const ScenarioConfig& config, const std::vector<CampaignSummary>& campaigns);

/// Wall-clock solve times per mode (schema "nrho.timing"); kept apart so summaries stay reproducible.
std::string timing_json(const std::vector<CampaignSummary>& campaigns);

/// One CSV per run index holding the rows of every mode (schema in docs/formats.md).
std::string run_csv(const std::vector<const RunRecord*>& records);

/// Per-step controller diagnostics of one run index.
std::string steps_csv(const std::vector<const RunRecord*>& records);

/// Writes summary.json, timing.json, runs/run_<idx>.csv, runs/steps_<idx>.csv and plots/*.dat under `dir`.
void write_campaign_outputs(const std::string& dir, const ScenarioConfig& config,
                            const std::vector<CampaignSummary>& campaigns);

}  // namespace nrho
