#include "trajaug/segmentation.hpp"

#include "trajaug/error.hpp"

namespace trajaug {

void SegmentationConfig::validate() const {
  if (!(close_threshold > 0.0 && close_threshold < 1.0))
    throw Error(ErrorCode::ConfigError, "close_threshold must lie strictly inside (0,1)");
  if (debounce_steps < 1) throw Error(ErrorCode::ConfigError, "debounce_steps must be >= 1");
  if (min_phase_len < 1) throw Error(ErrorCode::ConfigError, "min_phase_len must be >= 1");
}

namespace {

std::vector<bool> closed_flags(const Trajectory& traj, std::string_view agent, double threshold) {
  std::vector<bool> closed;
  closed.reserve(traj.size());
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const RobotState* r = traj.timesteps[i].find_robot(agent);
    if (!r)
      throw Error(ErrorCode::AgentNotFound, "trajectory '" + traj.traj_id + "' timestep " +
                                                std::to_string(i) + " has no robot " + std::string(agent));
    closed.push_back(r->gripper_aperture < threshold);
  }
  return closed;
}

}  // namespace

std::vector<PhaseBoundary> detect_boundaries(const Trajectory& traj, std::string_view agent,
                                             const SegmentationConfig& cfg) {
  cfg.validate();
  const auto closed = closed_flags(traj, agent, cfg.close_threshold);
  std::vector<PhaseBoundary> out;
  if (closed.empty()) return out;

  bool committed = closed.front();
  std::size_t run_start = 0;
  const auto debounce = static_cast<std::size_t>(cfg.debounce_steps);
  for (std::size_t i = 1; i <= closed.size(); ++i) {
    if (i < closed.size() && closed[i] == closed[run_start]) continue;
    // run [run_start, i) is maximal
    if (closed[run_start] != committed && i - run_start >= debounce) {
      committed = closed[run_start];
      out.push_back({run_start, committed ? Transition::open_to_close : Transition::close_to_open,
                     std::string(agent)});
    }
    run_start = i;
  }
  return out;
}

std::vector<Segment> detect_segments(const Trajectory& traj, std::string_view agent,
                                     const SegmentationConfig& cfg) {
  const auto boundaries = detect_boundaries(traj, agent, cfg);
  std::vector<Segment> segs;
  if (traj.timesteps.empty()) return segs;

  const bool first_closed = traj.timesteps.front().find_robot(agent)->gripper_aperture < cfg.close_threshold;
  std::size_t begin = 0;
  bool state = first_closed;
  for (const auto& b : boundaries) {
    segs.push_back({begin, b.t, state});
    begin = b.t;
    state = b.transition == Transition::open_to_close;
  }
  segs.push_back({begin, traj.size(), state});

  // Short segments fold into their predecessor (the first one into its
  // successor); neighbours left with equal gripper state are then coalesced.
  const auto min_len = static_cast<std::size_t>(cfg.min_phase_len);
  bool changed = true;
  while (changed && segs.size() > 1) {
    changed = false;
    for (std::size_t i = 0; i < segs.size(); ++i) {
      if (segs[i].end - segs[i].begin >= min_len) continue;
      if (i == 0) {
        segs[1].begin = segs[0].begin;
        segs.erase(segs.begin());
      } else {
        segs[i - 1].end = segs[i].end;
        segs.erase(segs.begin() + static_cast<std::ptrdiff_t>(i));
      }
      changed = true;
      break;
    }
    for (std::size_t i = 1; i < segs.size();) {
      if (segs[i].closed == segs[i - 1].closed) {
        segs[i - 1].end = segs[i].end;
        segs.erase(segs.begin() + static_cast<std::ptrdiff_t>(i));
        changed = true;
      } else {
        ++i;
      }
    }
  }
  return segs;
}

Trajectory assign_phases(const Trajectory& traj, const TaskCausalSpec& spec,
                         const SegmentationConfig& cfg, std::optional<std::string> agent) {
  if (traj.timesteps.empty() || traj.timesteps.front().robots.empty())
    throw Error(ErrorCode::AgentNotFound, "trajectory '" + traj.traj_id + "' has no robot state");
  const std::string who = agent.value_or(traj.timesteps.front().robots.front().agent_id);
  const auto segs = detect_segments(traj, who, cfg);
  if (segs.size() != spec.segment_merge_map.size())
    throw Error(ErrorCode::PhaseCountMismatch,
                "trajectory '" + traj.traj_id + "' has " + std::to_string(segs.size()) +
                    " segments, spec '" + spec.task_id + "' expects " +
                    std::to_string(spec.segment_merge_map.size()));
  Trajectory out = traj;
  for (std::size_t s = 0; s < segs.size(); ++s)
    for (std::size_t i = segs[s].begin; i < segs[s].end; ++i)
      out.timesteps[i].phase = spec.segment_merge_map[s];
  return out;
}

std::optional<std::pair<std::size_t, std::size_t>> phase_range(const Trajectory& traj, int phase) {
  std::optional<std::pair<std::size_t, std::size_t>> r;
  for (std::size_t i = 0; i < traj.size(); ++i) {
    if (traj.timesteps[i].phase != phase) continue;
    if (!r) r.emplace(i, i + 1);
    else r->second = i + 1;
  }
  return r;
}

}  // namespace trajaug
