// Causal-phase segmentation from gripper open/close transitions.
#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "trajaug/causal.hpp"
#include "trajaug/dataset.hpp"

namespace trajaug {

struct SegmentationConfig {
  double close_threshold = 0.5;  // aperture below => closed
  int debounce_steps = 3;
  int min_phase_len = 5;

  void validate() const;  // throws ConfigError
};

enum class Transition { open_to_close, close_to_open };

struct PhaseBoundary {
  std::size_t t = 0;
  Transition transition = Transition::open_to_close;
  std::string agent_id;
  bool operator==(const PhaseBoundary&) const = default;
};

/// A boundary sits at the first timestep of every maximal run of the new
/// binary gripper state that lasts at least `debounce_steps`.
std::vector<PhaseBoundary> detect_boundaries(const Trajectory& traj, std::string_view agent,
                                             const SegmentationConfig& cfg);

/// Contiguous [begin, end) ranges of the raw segments after short-segment
/// merging. Exposed for diagnostics and the CLI.
struct Segment {
  std::size_t begin = 0;
  std::size_t end = 0;
  bool closed = false;
};
std::vector<Segment> detect_segments(const Trajectory& traj, std::string_view agent,
                                     const SegmentationConfig& cfg);

/// Labels every timestep with its phase index. Uses the first robot agent
/// unless `agent` is given. Throws PhaseCountMismatch when the merged segment
/// count differs from the spec's merge map.
Trajectory assign_phases(const Trajectory& traj, const TaskCausalSpec& spec,
                         const SegmentationConfig& cfg,
                         std::optional<std::string> agent = std::nullopt);

/// [begin, end) timestep range labelled with `phase`, if any.
std::optional<std::pair<std::size_t, std::size_t>> phase_range(const Trajectory& traj, int phase);

}  // namespace trajaug
