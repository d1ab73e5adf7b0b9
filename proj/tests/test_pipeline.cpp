#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <sys/wait.h>

#include "support.hpp"
#include "trajaug/error.hpp"
#include "trajaug/pipeline.hpp"
#include "trajaug/toysim.hpp"

using namespace trajaug;
namespace fs = std::filesystem;

namespace {

const TaskDefinition& stack_task() {
  static const TaskDefinition t = bundled_task("stack");
  return t;
}
const TaskCausalSpec& stack_spec() {
  static const TaskCausalSpec s = bundled_causal_spec("stack");
  return s;
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::StageFailure;
}

std::map<std::string, std::string> read_tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    out[fs::relative(e.path(), root).string()] = ss.str();
  }
  return out;
}

int cli(const std::string& args) {
  const std::string cmd = std::string(TRAJAUG_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

PipelineConfig small_config(const fs::path& root, int workers) {
  PipelineConfig cfg;
  cfg.master_seed = 99;
  cfg.workers = workers;
  cfg.output_root = root;
  cfg.stages = {{"gen", {{"count", 4}}},
                {"segment", ojson::object()},
                {"se3", {{"count", 4}}},
                {"causal", {{"copies", 1}}},
                {"obs", {{"noise_sigma", 0.01}}},
                {"validate", ojson::object()}};
  return cfg;
}

}  // namespace

TEST_CASE("ratio study emits round(r * n) synthetic copies") {
  const Dataset base = stage_gen(stack_task(), stack_spec(), 10, 3, 1);
  RatioPlan plan;
  plan.ratios = {0, 1, 2, 3, 5, 10, 0.5};
  CounterfactualConfig cfg;
  cfg.master_seed = 4;
  const auto results = ratio_study(base, plan, stack_spec(), cfg);
  const std::vector<std::size_t> expect{0, 10, 20, 30, 50, 100, 5};
  REQUIRE(results.size() == expect.size());
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    CHECK(r.real_count == 10);
    CHECK(r.synthetic_count == expect[i]);
    CHECK(r.dataset.trajectories.size() == 10 + expect[i]);
    std::set<std::string> ids;
    std::size_t synthetic = 0;
    for (const auto& t : r.dataset.trajectories) {
      ids.insert(t.traj_id);
      synthetic += t.provenance == Provenance::counterfactual_synthetic;
    }
    CHECK(ids.size() == r.dataset.trajectories.size());
    CHECK(synthetic == expect[i]);
  }
  plan.ratios = {-1};
  CHECK(code_of([&] { plan.validate(); }) == ErrorCode::ConfigError);
  // one source has no donors
  Dataset lone = base;
  lone.trajectories.resize(1);
  plan.ratios = {1};
  CHECK(code_of([&] { ratio_study(lone, plan, stack_spec(), cfg); }) == ErrorCode::NoDonorAvailable);
}

TEST_CASE("stats") {
  Dataset ds = stage_gen(stack_task(), stack_spec(), 3, 8, 1);
  ds = augment_offline(ds, stack_spec(), {});
  const DatasetStats st = stats(ds);
  CHECK(st.trajectories_by_provenance.at("human_source") == 3);
  CHECK(st.trajectories_by_provenance.at("counterfactual_synthetic") == 3);
  std::size_t steps = 0;
  for (const auto& t : ds.trajectories) steps += t.size();
  std::size_t counted = 0;
  for (const auto& [p, n] : st.timesteps_by_provenance) counted += n;
  CHECK(counted == steps);
  std::size_t by_phase = 0;
  for (const auto& [phase, hist] : st.phase_lengths)
    for (const auto& [len, n] : hist) by_phase += len * n;
  CHECK(by_phase == steps);
  for (const auto& t : ds.trajectories)
    for (const auto& ts : t.timesteps)
      for (const auto& e : ts.entities) CHECK(st.entity_bounds.at(e.entity_id).contains(e.pose.position));
  CHECK(st.to_json().contains("phase_lengths"));
}

TEST_CASE("validation catches tampering") {
  const Dataset base = stage_gen(stack_task(), stack_spec(), 3, 9, 1);
  Dataset ds = augment_offline(base, stack_spec(), {});
  CHECK(validate_trajectories(ds, stack_task(), stack_spec()).ok());

  Dataset moved = ds;
  moved.trajectories[0].timesteps[10].entities[2].pose.position.x() += 0.05;
  auto vr = validate_trajectories(moved, stack_task(), stack_spec());
  REQUIRE(vr.failures.size() == 1);
  CHECK(vr.failures[0].traj_id == "demo_0");

  Dataset acted = ds;
  acted.trajectories[4].timesteps[5].actions[0].target_eef_pose.position.y() += 0.01;
  vr = validate_trajectories(acted, stack_task(), stack_spec());
  REQUIRE(vr.failures.size() == 1);
  CHECK(vr.failures[0].traj_id == acted.trajectories[4].traj_id);

  const auto rep = replay_all(ds, stack_task());
  CHECK(rep.ok());
  CHECK(rep.checked == 3);
  CHECK(rep.skipped == 3);
}

TEST_CASE("pipeline config validation") {
  testing::TempDir d("cfg");
  PipelineConfig cfg = small_config(d.path, 1);
  CHECK_NOTHROW(cfg.validate());
  std::swap(cfg.stages[0], cfg.stages[1]);
  CHECK(code_of([&] { cfg.validate(); }) == ErrorCode::ConfigError);
  cfg = small_config(d.path, 1);
  std::swap(cfg.stages[4], cfg.stages[5]);
  CHECK(code_of([&] { cfg.validate(); }) == ErrorCode::ConfigError);
  cfg = small_config(d.path, 1);
  cfg.stages.push_back({"train", ojson::object()});
  CHECK(code_of([&] { cfg.validate(); }) == ErrorCode::ConfigError);

  const auto parsed = load_pipeline_config(TRAJAUG_CONFIG_DIR "/pipeline_stack.json");
  CHECK(parsed.master_seed == 2024);
  CHECK(parsed.stages.size() == 6);
  CHECK(parsed.stages[3].params.at("copies") == 2);
  CHECK(code_of([] { parse_pipeline_config("{\"stages\": [{\"count\": 1}]}"); }) == ErrorCode::ConfigError);
}

TEST_CASE("pipeline runs, reports and is reproducible") {
  testing::TempDir a("run_a"), b("run_b");
  const PipelineResult ra = run_pipeline(small_config(a.path, 1));
  CHECK(ra.valid);
  for (const char* dir : {"00_gen", "01_segment", "02_se3", "03_causal", "04_obs"})
    CHECK(fs::exists(a.path / dir / "manifest.json"));
  CHECK(fs::exists(a.path / "report.json"));
  CHECK(ra.report.at("stages").size() == 6);
  CHECK(ra.report.at("stages")[5].at("validation").at("failed") == 0);
  const Dataset final = load_dataset(a.path / "04_obs");
  // 4 human + 4 se3, one counterfactual copy of each, then a noised copy of every non-mixed one
  CHECK(final.trajectories.size() == 32);

  run_pipeline(small_config(b.path, 3));
  CHECK(read_tree(a.path) == read_tree(b.path));

  PipelineConfig bad = small_config(b.path, 1);
  bad.stages[2].params = {{"count", 5}, {"budget", 1}};
  CHECK(code_of([&] { run_pipeline(bad); }) == ErrorCode::StageFailure);
}

TEST_CASE("command line exit codes") {
  testing::TempDir d("cli");
  const std::string demos = (d.path / "demos").string();
  CHECK(cli("gen-demos --task stack --count 3 --seed 1 --out " + demos) == 0);
  CHECK(fs::exists(d.path / "demos" / "manifest.json"));
  CHECK(cli("validate --in " + demos) == 0);
  CHECK(cli("replay --strict --in " + demos) == 0);
  CHECK(cli("augment-causal --in " + demos + " --out " + (d.path / "cf").string()) == 0);
  CHECK(cli("stats --in " + (d.path / "cf").string() + " --out " + (d.path / "stats.json").string()) == 0);
  CHECK(cli("augment-se3 --in " + demos + " --count 3 --out " + (d.path / "se3").string()) == 0);
  CHECK(cli("augment-obs --in " + demos + " --out " + (d.path / "obs").string()) == 0);
  CHECK(cli("ratio-study --in " + demos + " --ratios 0,1 --out " + (d.path / "ratio").string()) == 0);
  CHECK(fs::exists(d.path / "ratio" / "ratio_manifest.json"));

  // usage and configuration errors
  CHECK(cli("") == 1);
  CHECK(cli("gen-demos --bogus") == 1);
  CHECK(cli("gen-demos --task juggle --out " + (d.path / "x").string()) == 1);
  CHECK(cli("augment-causal --in " + demos + " --swap-prob 2 --out " + (d.path / "y").string()) == 1);
  CHECK(cli("augment-obs --in " + demos + " --images " + (d.path / "img").string() + " --jitter 0.8,1.2,1,1,1,1,0,0 --out " +
            (d.path / "z").string()) == 1);
  CHECK(cli("augment-obs --in " + demos + " --images " + (d.path / "img").string() +
            " --jitter 0.8,1.2,1,1,1,1,0,0 --force --out " + (d.path / "z").string()) == 0);

  // validation failures
  Dataset ds = load_dataset(d.path / "demos");
  ds.trajectories[1].timesteps[7].entities[0].pose.position.y() -= 0.03;
  save_dataset(ds, d.path / "tampered");
  CHECK(cli("validate --in " + (d.path / "tampered").string()) == 2);
  {
    std::ifstream in(d.path / "demos" / "manifest.json");
    std::stringstream ss;
    ss << in.rdbuf();
    std::string m = ss.str();
    m.replace(m.find("\"1.0\""), 5, "\"9.9\"");
    std::ofstream(d.path / "demos" / "manifest.json") << m;
  }
  CHECK(cli("stats --in " + demos) == 2);

  // stage failures
  CHECK(cli("stats --in " + (d.path / "missing").string()) == 3);
}
