// Orchestration: validation, statistics, the ratio harness and the staged
// pipeline behind the command line tool.
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "trajaug/causal.hpp"
#include "trajaug/counterfactual.hpp"
#include "trajaug/dataset.hpp"
#include "trajaug/obs_augmentation.hpp"
#include "trajaug/se3_augment.hpp"
#include "trajaug/segmentation.hpp"
#include "trajaug/toysim.hpp"

namespace trajaug {

using ojson = nlohmann::ordered_json;

/// Accepts a JSON file or the name of a bundled spec.
TaskCausalSpec load_causal_spec_or_bundled(const std::string& path_or_name);

// -- validation ---------------------------------------------------------------

struct TrajectoryFailure {
  std::string traj_id;
  std::string reason;
};

struct ValidationReport {
  std::size_t checked = 0;
  std::size_t skipped = 0;
  std::vector<TrajectoryFailure> failures;
  bool ok() const { return failures.empty(); }
  ojson to_json() const;
};

/// Dataset invariants first; then per provenance:
///  human_source, se3_synthetic: replay from the first timestep must reproduce
///    every recorded state (1e-9) and the recorded success flag;
///  counterfactual_synthetic: the expert on each non-interp timestep must
///    reproduce the stored action target (1e-9 m, 1e-9 rad);
///  mixed: invariants only.
ValidationReport validate_trajectories(const Dataset& ds, const TaskDefinition& task, const TaskCausalSpec& spec,
                                       int workers = 1);

/// Replays human and SE(3) trajectories; failures are those whose replay is
/// not a success. Counterfactual and mixed trajectories are counted as
/// skipped: swapped states are not reachable from their first timestep.
ValidationReport replay_all(const Dataset& ds, const TaskDefinition& task, int workers = 1);

/// Expert-consistency check of a single trajectory; returns the first
/// mismatch, if any.
std::optional<std::string> expert_consistency(const Trajectory& traj, const TaskDefinition& task,
                                              const TaskCausalSpec& spec, double tol = 1e-9);

// -- stats --------------------------------------------------------------------

struct DatasetStats {
  std::map<std::string, std::size_t> trajectories_by_provenance;
  std::map<std::string, std::size_t> timesteps_by_provenance;
  /// phase -> (length -> count)
  std::map<int, std::map<std::size_t, std::size_t>> phase_lengths;
  std::map<std::string, Box> entity_bounds;
  ojson to_json() const;
};

DatasetStats stats(const Dataset& ds);

// -- ratio harness --------------------------------------------------------------

struct RatioPlan {
  std::vector<double> ratios{0, 1, 2, 3, 5, 10};
  void validate() const;
};

struct RatioResult {
  double ratio = 0.0;
  std::size_t real_count = 0;
  std::size_t synthetic_count = 0;
  Dataset dataset;
};

/// For each ratio r: the base plus round(r * |base|) counterfactual copies.
/// Throws NoDonorAvailable when a copy could not be swapped.
std::vector<RatioResult> ratio_study(const Dataset& base, const RatioPlan& plan, const TaskCausalSpec& spec,
                                     const CounterfactualConfig& cfg);

// -- pipeline -------------------------------------------------------------------

struct StageConfig {
  std::string name;  // gen | segment | se3 | causal | obs | validate
  ojson params = ojson::object();
};

struct PipelineConfig {
  std::string task = "stack";         // bundled name or JSON path
  std::string causal_spec = "stack";  // bundled name or JSON path
  std::vector<StageConfig> stages;
  std::uint64_t master_seed = 0;
  int workers = 1;
  std::filesystem::path output_root = "pipeline_out";
  std::optional<std::filesystem::path> input;  // dataset used when there is no gen stage

  void validate() const;  // throws ConfigError on bad stage order
};

PipelineConfig parse_pipeline_config(std::string_view json_text);
PipelineConfig load_pipeline_config(const std::filesystem::path& path);

struct PipelineResult {
  ojson report;
  bool valid = true;  // false when a validate stage found failures
};

/// Runs the stages in order, writing each stage's dataset to
/// output_root/<NN>_<stage>/ and the report to output_root/report.json.
/// Wraps any stage error in StageFailure.
PipelineResult run_pipeline(const PipelineConfig& cfg);

// Individual stages, shared with the command line subcommands.
Dataset stage_gen(const TaskDefinition& task, const TaskCausalSpec& spec, std::size_t count, std::uint64_t seed,
                  int workers);
Dataset stage_segment(const Dataset& ds, const TaskCausalSpec& spec, const SegmentationConfig& cfg, int workers);
/// Appends noised copies ("<id>_obs", provenance mixed) of every non-mixed trajectory.
Dataset stage_obs(const Dataset& ds, double sigma, std::uint64_t seed, int workers);

}  // namespace trajaug
