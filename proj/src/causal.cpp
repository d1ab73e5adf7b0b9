#include "trajaug/causal.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "trajaug/error.hpp"

namespace trajaug {

using json = nlohmann::ordered_json;

namespace {

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n), rank_(n, 0) {
    std::iota(parent_.begin(), parent_.end(), std::size_t{0});
  }

  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (rank_[a] < rank_[b]) std::swap(a, b);
    parent_[b] = a;
    if (rank_[a] == rank_[b]) ++rank_[a];
  }

 private:
  std::vector<std::size_t> parent_;
  std::vector<int> rank_;
};

[[noreturn]] void config_error(const std::string& what) { throw Error(ErrorCode::ConfigError, what); }

void check_graph(const CausalGraph& g, const std::string& where) {
  const auto n = static_cast<Eigen::Index>(g.size());
  if (g.adjacency.rows() != n || g.adjacency.cols() != n) config_error(where + ": adjacency not n×n");
  std::set<std::string> ids(g.nodes.begin(), g.nodes.end());
  if (ids.size() != g.nodes.size()) config_error(where + ": duplicate node ids");
  if (!g.adjacency.matrix().diagonal().array().all()) config_error(where + ": diagonal must be true");
}

}  // namespace

CausalGraph CausalGraph::from_edges(std::vector<std::string> nodes,
                                    const std::vector<std::pair<std::string, std::string>>& edges) {
  CausalGraph g;
  g.nodes = std::move(nodes);
  const auto n = static_cast<Eigen::Index>(g.nodes.size());
  g.adjacency = BoolMatrix::Constant(n, n, false);
  g.adjacency.matrix().diagonal().setConstant(true);
  for (const auto& [src, dst] : edges) {
    const auto i = g.index_of(src);
    const auto j = g.index_of(dst);
    if (i < 0 || j < 0) config_error("edge " + src + "->" + dst + " references unknown node");
    g.adjacency(i, j) = true;
  }
  return g;
}

std::ptrdiff_t CausalGraph::index_of(std::string_view id) const {
  const auto it = std::find(nodes.begin(), nodes.end(), id);
  return it == nodes.end() ? -1 : std::distance(nodes.begin(), it);
}

bool Partition::contains(std::string_view id) const {
  return std::binary_search(members.begin(), members.end(), id);
}

const CausalGraph& PhaseSpec::graph_for(std::string_view agent) const {
  for (const auto& ag : agent_graphs)
    if (ag.agent_id == agent) return ag.graph;
  throw Error(ErrorCode::AgentNotFound,
              "phase " + std::to_string(phase_index) + " has no graph for agent " + std::string(agent));
}

CausalGraph PhaseSpec::joined() const {
  if (agent_graphs.empty()) config_error("phase " + std::to_string(phase_index) + " has no graphs");
  CausalGraph g = agent_graphs.front().graph;
  g.adjacency = (g.adjacency || g.adjacency.transpose()).eval();
  for (std::size_t i = 1; i < agent_graphs.size(); ++i) g = join_adjacency(g, agent_graphs[i].graph);
  return g;
}

CausalGraph join_adjacency(const CausalGraph& a1, const CausalGraph& a2) {
  if (a1.nodes != a2.nodes || a1.adjacency.rows() != a2.adjacency.rows() ||
      a1.adjacency.cols() != a2.adjacency.cols())
    throw Error(ErrorCode::DimensionMismatch, "join_adjacency requires identical node lists");
  const BoolMatrix either = a1.adjacency || a2.adjacency;
  CausalGraph out;
  out.nodes = a1.nodes;
  out.adjacency = either || either.transpose();
  return out;
}

std::vector<Partition> partitions(const CausalGraph& g) {
  const std::size_t n = g.size();
  DisjointSets sets(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (g.adjacency(i, j) || g.adjacency(j, i)) sets.unite(i, j);

  std::vector<std::vector<std::string>> groups(n);
  for (std::size_t i = 0; i < n; ++i) groups[sets.find(i)].push_back(g.nodes[i]);

  std::vector<Partition> out;
  for (auto& members : groups) {
    if (members.empty()) continue;
    std::sort(members.begin(), members.end());
    out.push_back({std::move(members)});
  }
  std::sort(out.begin(), out.end(),
            [](const Partition& a, const Partition& b) { return a.members.front() < b.members.front(); });
  return out;
}

int count_partitions(const TaskCausalSpec& spec) {
  int total = 0;
  for (const auto& phase : spec.phases) total += static_cast<int>(partitions(phase.joined()).size());
  return total;
}

std::vector<Partition> resampleable_partitions(const PhaseSpec& phase, std::string_view agent) {
  std::vector<Partition> out;
  for (auto& p : partitions(phase.graph_for(agent)))
    if (!p.contains(agent) && !p.contains(phase.target_entity)) out.push_back(std::move(p));
  return out;
}

void validate_causal_spec(const TaskCausalSpec& spec) {
  if (spec.phases.empty()) config_error(spec.task_id + ": no phases");
  for (std::size_t k = 0; k < spec.phases.size(); ++k) {
    const auto& ph = spec.phases[k];
    const std::string where = spec.task_id + " phase " + std::to_string(k);
    if (ph.phase_index != static_cast<int>(k)) config_error(where + ": phase indices must be 0..k-1");
    if (ph.agent_graphs.empty()) config_error(where + ": no agent graphs");
    const auto& nodes = ph.agent_graphs.front().graph.nodes;
    for (const auto& ag : ph.agent_graphs) {
      check_graph(ag.graph, where + " agent " + ag.agent_id);
      if (ag.graph.nodes != nodes) config_error(where + ": agent graphs disagree on node ordering");
      if (ag.graph.index_of(ag.agent_id) < 0) config_error(where + ": agent node missing");
    }
    if (std::find(nodes.begin(), nodes.end(), ph.target_entity) == nodes.end())
      config_error(where + ": target entity not a node");
  }
  const auto& m = spec.segment_merge_map;
  if (m.empty() || m.front() != 0) config_error(spec.task_id + ": merge map must start at 0");
  for (std::size_t i = 1; i < m.size(); ++i)
    if (m[i] < m[i - 1] || m[i] > m[i - 1] + 1)
      config_error(spec.task_id + ": merge map must be monotone and gap-free");
  if (m.back() != static_cast<int>(spec.phases.size()) - 1)
    config_error(spec.task_id + ": merge map must cover every phase");
}

TaskCausalSpec parse_causal_spec(std::string_view json_text) {
  TaskCausalSpec spec;
  try {
    const json j = json::parse(json_text);
    spec.task_id = j.at("task_id").get<std::string>();
    for (const auto& jp : j.at("phases")) {
      PhaseSpec ph;
      ph.phase_index = jp.at("phase_index").get<int>();
      ph.target_entity = jp.at("target_entity").get<std::string>();
      ph.grasp_closes = jp.at("grasp_closes").get<bool>();
      for (const auto& [agent, jg] : jp.at("agents").items()) {
        std::vector<std::pair<std::string, std::string>> edges;
        for (const auto& e : jg.at("edges")) edges.emplace_back(e.at(0).get<std::string>(), e.at(1).get<std::string>());
        ph.agent_graphs.push_back(
            {agent, CausalGraph::from_edges(jg.at("nodes").get<std::vector<std::string>>(), edges)});
      }
      spec.phases.push_back(std::move(ph));
    }
    spec.segment_merge_map = j.at("segment_merge_map").get<std::vector<int>>();
  } catch (const json::exception& e) {
    config_error(std::string("malformed causal spec: ") + e.what());
  }
  validate_causal_spec(spec);
  return spec;
}

TaskCausalSpec load_causal_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_causal_spec(ss.str());
}

std::string causal_spec_to_json(const TaskCausalSpec& spec) {
  json j;
  j["task_id"] = spec.task_id;
  j["phases"] = json::array();
  for (const auto& ph : spec.phases) {
    json jp;
    jp["phase_index"] = ph.phase_index;
    jp["target_entity"] = ph.target_entity;
    jp["grasp_closes"] = ph.grasp_closes;
    jp["agents"] = json::object();
    for (const auto& ag : ph.agent_graphs) {
      json edges = json::array();
      const auto n = static_cast<Eigen::Index>(ag.graph.size());
      for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index k = 0; k < n; ++k)
          if (i != k && ag.graph.adjacency(i, k)) edges.push_back({ag.graph.nodes[i], ag.graph.nodes[k]});
      jp["agents"][ag.agent_id] = {{"nodes", ag.graph.nodes}, {"edges", edges}};
    }
    j["phases"].push_back(std::move(jp));
  }
  j["segment_merge_map"] = spec.segment_merge_map;
  return j.dump(2) + "\n";
}

}  // namespace trajaug
