// Per-phase causal graphs over task entities and the state partitions they
// induce.
//
// Adjacency convention: A(i, j) is true iff node j depends on node i. The
// diagonal is always true (every variable depends on its own past).
// Partitions are the connected components of A ∨ Aᵀ; entities in different
// partitions may be resampled independently of one another.
#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace trajaug {

using BoolMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

struct CausalGraph {
  std::vector<std::string> nodes;
  BoolMatrix adjacency;

  /// Builds a graph from directed (src, dst) edges; the diagonal is injected.
  static CausalGraph from_edges(std::vector<std::string> nodes,
                                const std::vector<std::pair<std::string, std::string>>& edges);

  std::size_t size() const { return nodes.size(); }
  std::ptrdiff_t index_of(std::string_view id) const;  // -1 when absent

  friend bool operator==(const CausalGraph& a, const CausalGraph& b) {
    return a.nodes == b.nodes && a.adjacency.rows() == b.adjacency.rows() &&
           a.adjacency.cols() == b.adjacency.cols() && (a.adjacency == b.adjacency).all();
  }
};

/// Members are kept sorted.
struct Partition {
  std::vector<std::string> members;

  bool contains(std::string_view id) const;
  bool operator==(const Partition&) const = default;
};

struct AgentGraph {
  std::string agent_id;
  CausalGraph graph;
  bool operator==(const AgentGraph&) const = default;
};

struct PhaseSpec {
  int phase_index = 0;
  std::vector<AgentGraph> agent_graphs;
  std::string target_entity;
  bool grasp_closes = false;

  const CausalGraph& graph_for(std::string_view agent) const;
  /// join_adjacency folded over every agent's graph.
  CausalGraph joined() const;
  bool operator==(const PhaseSpec&) const = default;
};

struct TaskCausalSpec {
  std::string task_id;
  std::vector<PhaseSpec> phases;
  std::vector<int> segment_merge_map;

  std::size_t phase_count() const { return phases.size(); }
  bool operator==(const TaskCausalSpec&) const = default;
};

/// (A₁ ∨ A₂) ∨ (A₁ ∨ A₂)ᵀ. Throws DimensionMismatch on differing node lists.
CausalGraph join_adjacency(const CausalGraph& a1, const CausalGraph& a2);

/// Connected components of the symmetrized graph, sorted by smallest member.
std::vector<Partition> partitions(const CausalGraph& g);

/// Sum over phases of the partition count of each phase's joined graph.
int count_partitions(const TaskCausalSpec& spec);

/// Partitions of the agent's phase graph holding neither the agent node nor
/// the phase target.
std::vector<Partition> resampleable_partitions(const PhaseSpec& phase, std::string_view agent);

/// Throws ConfigError when a structural invariant is broken.
void validate_causal_spec(const TaskCausalSpec& spec);

TaskCausalSpec parse_causal_spec(std::string_view json_text);
TaskCausalSpec load_causal_spec(const std::filesystem::path& path);
std::string causal_spec_to_json(const TaskCausalSpec& spec);

}  // namespace trajaug
