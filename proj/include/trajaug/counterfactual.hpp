// Offline counterfactual augmentation: causally irrelevant partitions of the
// state are replaced by the same partition taken from another trajectory in
// the same phase. Actions are never touched.
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "trajaug/causal.hpp"
#include "trajaug/dataset.hpp"
#include "trajaug/rng.hpp"

namespace trajaug {

enum class DonorPolicy { same_phase_any_timestep, same_phase_aligned_timestep };

std::string_view to_string(DonorPolicy p);
DonorPolicy donor_policy_from_string(std::string_view s);  // "any" | "aligned" or the full names

struct CounterfactualConfig {
  std::uint64_t master_seed = 0;
  double swap_probability = 1.0;
  DonorPolicy donor_policy = DonorPolicy::same_phase_any_timestep;
  double gripper_jitter_range = 0.0;  // aperture units
  int copies_per_trajectory = 1;
  int debounce_steps = 3;             // jitter keeps this far from phase boundaries
  double close_threshold = 0.5;
  int workers = 1;

  void validate() const;  // throws ConfigError
};

/// "A+B" style key for a partition with agent nodes removed.
std::string partition_signature(const Partition& p);

struct DonorSegment {
  std::string traj_id;
  std::size_t begin = 0;  // timestep range in the donor
  std::size_t end = 0;
  /// snapshots[k] holds the partition's entity states at timestep begin + k,
  /// in partition member order.
  std::vector<std::vector<EntityState>> snapshots;
};

struct PhaseIndex {
  std::string task_id;
  std::map<std::pair<int, std::string>, std::vector<DonorSegment>> donors;

  /// Donors for (phase, signature) excluding `self`.
  std::vector<const DonorSegment*> query(int phase, const std::string& signature,
                                         const std::string& self) const;
  bool empty() const { return donors.empty(); }
};

/// Throws UnlabeledTrajectory when a trajectory carries an unlabeled timestep.
PhaseIndex build_phase_index(const Dataset& ds, const TaskCausalSpec& spec);

struct AugmentReport {
  std::size_t sources = 0;
  std::size_t copies = 0;
  std::size_t swaps = 0;
  /// Copies emitted with at least one drawn swap lacking a donor.
  std::vector<std::string> no_donor_copies;
};

/// D_aug = D plus `copies_per_trajectory` counterfactual copies of every
/// non-counterfactual source. Copy ids are "<traj_id>_cf<k>".
Dataset augment_offline(const Dataset& ds, const TaskCausalSpec& spec, const CounterfactualConfig& cfg,
                        AugmentReport* report = nullptr);

/// One counterfactual copy of `traj`, drawing from `rng`. Missing donors are
/// recorded in `*missing` (when given) and the partition is left unswapped.
Trajectory counterfactual_copy(const Trajectory& traj, const PhaseIndex& index, const TaskCausalSpec& spec,
                               const CounterfactualConfig& cfg, Rng& rng, std::size_t* swaps = nullptr,
                               bool* missing = nullptr);

/// Perturbs the open gripper's aperture and command by one shared uniform
/// draw during the approach part of grasp phases.
Trajectory gripper_transit_jitter(const Trajectory& traj, const TaskCausalSpec& spec,
                                  const CounterfactualConfig& cfg, Rng& rng);

}  // namespace trajaug
