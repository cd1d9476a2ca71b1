#pragma once

// Glue between the scenario ground truth and the pipeline stages: reference
// heatmaps, candidate generators, evaluation and output bookkeeping.

#include "graspforge/aggregate.hpp"
#include "graspforge/heatmap.hpp"
#include "graspforge/metrics.hpp"
#include "graspforge/sample.hpp"
#include "graspforge/scenario.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <string>

namespace graspforge {

inline constexpr const char* kSolveReportSchema = "solve-report.v1";
inline constexpr const char* kMetricsSchema = "metrics.v1";

/// 16 hex digits of FNV-1a over the compact JSON dump.
std::string config_hash(const nlohmann::json& config);

/// Ground-truth heatmaps (21 hand or 27 object channels), corrupted when the
/// config asks for it.
HeatmapStack render_hand_heatmaps(const Scenario& s, const HeatmapConfig& cfg = {});
HeatmapStack render_object_heatmaps(const Scenario& s, const HeatmapConfig& cfg = {});

nlohmann::json to_json(const HeatmapConfig& cfg);
HeatmapConfig heatmap_config_from_json(const nlohmann::json& j);

/// Candidate generator settings. "pf-ode" integrates a Gaussian score field
/// centred on the scenario pose (a closed-form stand-in for a learned,
/// image-conditioned score network); "perturbation" jitters the scenario pose.
struct GeneratorConfig {
  std::string kind = "pf-ode";
  int n = 100;
  double hand_t_f = kHandTf;
  double object_t_f = kObjectTf;
  NoiseSchedule schedule;
  OdeTolerances tolerances;
  double hand_sigma0 = 0.08;               ///< per 6D coordinate
  double object_rotation_sigma0 = 0.05;    ///< per 6D coordinate
  double object_translation_sigma0 = 0.01; ///< meters
  PerturbationSpec perturbation;

  void validate() const;
  nlohmann::json to_json() const;
  static GeneratorConfig from_json(const nlohmann::json& j);
};

CandidateSet generate_candidates(const Scenario& s, Entity entity, const GeneratorConfig& cfg, std::uint64_t seed,
                                 int threads = 1);

nlohmann::json to_json(const MetricsConfig& cfg);
MetricsConfig metrics_config_from_json(const nlohmann::json& j);

/// Pose errors against the scenario ground truth plus the physics metrics
/// of the prediction itself (contact, penetration, stability proxy).
MetricsRow evaluate_prediction(const Scenario& s, const HandPose& hand, const RigidPose& object,
                               const MetricsConfig& metrics = {}, const SolverConfig& solver = {},
                               const std::string& name = "sample");

nlohmann::json to_json(const MetricsRow& row);

/// Every stage of `pipeline` with its settings.
struct PipelineConfig {
  HeatmapConfig heatmaps;
  GeneratorConfig generator;
  AggregationConfig aggregation;
  MetricsConfig metrics;
  SolverConfig eval_solver;

  nlohmann::json to_json() const;
  static PipelineConfig from_json(const nlohmann::json& j);
};

struct PipelineResult {
  HeatmapStack hand_heatmaps;
  HeatmapStack object_heatmaps;
  CandidateSet hand_candidates;
  CandidateSet object_candidates;
  AggregationReport aggregation;
  MetricsRow metrics;
};

/// Heatmaps, candidates, aggregation and evaluation; each stage draws from
/// its own named substream of `seed`.
PipelineResult run_pipeline(const Scenario& s, std::uint64_t seed, const PipelineConfig& cfg, int threads = 1);

}  // namespace graspforge
