#pragma once

#include <string>
#include <vector>

#include "json.hpp"

#include "groklab/trainer.hpp"

namespace groklab {

using Json = nlohmann::ordered_json;

inline constexpr const char* kTrajSchema = "groklab.traj.v1";
inline constexpr const char* kSummarySchema = "groklab.summary.v1";
inline constexpr const char* kCampaignSchema = "groklab.campaign.v1";
inline constexpr const char* kClaimsSchema = "groklab.claims.v1";
inline constexpr const char* kSimGridSchema = "groklab.simgrid.v1";

// Columnar text, schema string on the first line, header row naming the
// TrajectoryLog fields, full-precision values.
void write_trajectory(const std::string& path, const TrajectoryLog& log);
TrajectoryLog read_trajectory(const std::string& path);

Json summary_to_json(const RunSummary& summary);
RunSummary summary_from_json(const Json& j);
void write_summary(const std::string& path, const RunSummary& summary);
RunSummary read_summary(const std::string& path);

// Emitted JSON is compact (single line) so the schema string sits in the
// first line of every artifact; written atomically via a temp file.
void write_json_file(const std::string& path, const Json& j);
Json read_json_file(const std::string& path);

Json run_config_to_json(const RunConfig& config);
RunConfig run_config_from_json(const Json& j);

struct CampaignCell {
  RunConfig base;  // seed field ignored; one run per listed seed
  std::vector<std::uint64_t> seeds;
};

struct CampaignConfig {
  std::string campaign_id;
  std::vector<CampaignCell> cells;
  int jobs = 1;
};

CampaignConfig campaign_from_json(const Json& j);
CampaignConfig load_campaign(const std::string& path);

struct Claim {
  std::string id;
  std::string file;     // relative to the reports directory
  std::string pointer;  // JSON pointer into that file
  double target = 0.0;
  double tol_abs = 0.0;
  double tol_rel = 0.0;  // applied as |value - target| <= tol_rel * |target|
  std::string scope = "desk";
  std::string source;
};

std::vector<Claim> load_claims(const std::string& path);

}  // namespace groklab
