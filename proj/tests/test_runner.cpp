#include <catch2/catch.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>

#include "sonosig/runner.hpp"

using namespace sonosig;
namespace fs = std::filesystem;

namespace {

// Small, fast configuration: coarse phantom, three frequencies, one loosening
// and one crack scenario.
RunConfig mini_config() {
  RunConfig cfg;
  cfg.phantom = default_phantom_spec();
  cfg.phantom.outer_radius = 0.0375;
  cfg.phantom.skin_thickness = 0.003;
  cfg.phantom.fat_thickness = 0.005;
  cfg.phantom.bone_outer_radius = 0.012;
  cfg.phantom.bone_thickness = 0.004;
  cfg.phantom.implant_radius = 0.005;
  cfg.grid_h = 1.5e-3;
  cfg.freq_start_hz = 40e3;
  cfg.freq_stop_hz = 120e3;
  cfg.freq_step_hz = 40e3;
  cfg.scenarios.loosening_angles = {deg_to_rad(180.0)};
  cfg.scenarios.loosening_thicknesses = {1e-3};
  cfg.scenarios.loosening_arcs = {1.0};
  cfg.scenarios.crack_angles = {deg_to_rad(90.0)};
  cfg.scenarios.crack_diameters = {2e-3};
  return cfg;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "sonosig_runner_test" / name;
  fs::remove_all(dir);
  fs::create_directories(dir.parent_path());
  return dir;
}

std::map<std::string, std::string> output_hashes(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const char* sub : {"matrices", "signatures"}) {
    const fs::path dir = root / sub;
    if (!fs::exists(dir)) continue;
    for (const auto& entry : fs::recursive_directory_iterator(dir))
      if (entry.is_regular_file())
        out[fs::relative(entry.path(), root).generic_string()] = io::hash_file(entry.path());
  }
  return out;
}

}  // namespace

TEST_CASE("healthy-only sweep emits one matrix and one all-zero signature") {
  const fs::path dir = fresh_dir("healthy_only");
  SweepOptions options;
  options.jobs = 2;
  options.scenario_filter = std::set<int>{};  // no defects selected
  const SweepResult res = run_sweep(mini_config(), dir, options);
  REQUIRE(res.solved == 1);
  REQUIRE(res.failed == 0);

  REQUIRE(fs::exists(dir / "matrices" / "000_healthy.meta"));
  REQUIRE(fs::exists(dir / "signatures" / "000_healthy.meta"));
  const SignatureImage sig = import_signature(dir / "signatures" / "000_healthy.meta");
  REQUIRE(sig.amplitude.cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(sig.phase.cwiseAbs().maxCoeff() == 0.0);

  // analyze on the healthy-only run reports the healthy rule outcome
  const AnalyzeSummary summary = run_analyze(dir);
  REQUIRE(summary.rows.empty());
  REQUIRE(summary.healthy_total == 1);
  REQUIRE(summary.healthy_correct == 1);
}

TEST_CASE("full mini sweep produces matrices, signatures, reports and figures") {
  const fs::path dir = fresh_dir("full");
  SweepOptions options;
  options.jobs = 2;
  const SweepResult res = run_sweep(mini_config(), dir, options);
  REQUIRE(res.solved == 3);
  REQUIRE(res.failed == 0);

  REQUIRE(fs::exists(dir / "matrices" / "000_healthy.bin"));
  REQUIRE(fs::exists(dir / "matrices" / "001_loosening_a180_t1mm_l1.bin"));
  REQUIRE(fs::exists(dir / "matrices" / "002_crack_a90_d2mm.bin"));
  REQUIRE(fs::exists(dir / "signatures" / "002_crack_a90_d2mm.csv"));
  REQUIRE_FALSE(fs::exists(dir / "signatures" / "000_healthy.meta"));  // defects selected

  const RunManifest manifest = RunManifest::load(RunPaths{dir});
  REQUIRE(manifest.cases.size() == 3);
  REQUIRE(manifest.scenario_lines.size() == 3);
  REQUIRE_FALSE(manifest.created_utc.empty());
  for (const auto& [id, rec] : manifest.cases) {
    REQUIRE(rec.status == "done");
    REQUIRE(rec.quality.size() == 3);  // one flag per frequency
  }

  const VerifyResult verify = verify_run(dir);
  REQUIRE(verify.ok());
  REQUIRE(verify.checked > 0);

  const AnalyzeSummary summary = run_analyze(dir);
  REQUIRE(summary.rows.size() == 2);
  REQUIRE(summary.healthy_correct == 1);
  REQUIRE(fs::exists(dir / "reports" / "summary.csv"));
  REQUIRE(fs::exists(dir / "reports" / "accuracy.kv"));
  REQUIRE(fs::exists(dir / "reports" / "002_crack_a90_d2mm.kv"));
  const io::KeyValues acc = io::KeyValues::parse(io::read_file(dir / "reports" / "accuracy.kv"));
  REQUIRE(acc.get_int("healthy_correct") == 1);

  RenderOptions render_options;
  render_options.field_snapshot = {{0, 80e3, 0}};
  const auto figures = run_render(dir, render_options);
  REQUIRE(figures.size() == 5);  // amp+phase for two defects, one field snapshot
  REQUIRE(fs::exists(dir / "figures" / "002_crack_a90_d2mm_amp.pgm"));
  REQUIRE(fs::exists(dir / "figures" / "002_crack_a90_d2mm_phase.pgm"));
  REQUIRE(fs::exists(dir / "figures" / "field_000_80kHz_s0.pgm"));

  // manifest tracks analyze/render outputs too
  REQUIRE(verify_run(dir).ok());
}

TEST_CASE("rerunning a completed sweep solves nothing and changes nothing") {
  const fs::path dir = fresh_dir("resume_noop");
  SweepOptions options;
  options.jobs = 2;
  REQUIRE(run_sweep(mini_config(), dir, options).solved == 3);
  const auto before = output_hashes(dir);

  const SweepResult again = run_sweep(mini_config(), dir, options);
  REQUIRE(again.solved == 0);
  REQUIRE(again.skipped == 3);
  REQUIRE(output_hashes(dir) == before);
}

TEST_CASE("outputs are byte-identical across worker counts") {
  const fs::path dir1 = fresh_dir("jobs1");
  const fs::path dir2 = fresh_dir("jobs2");
  SweepOptions o1, o2;
  o1.jobs = 1;
  o2.jobs = 2;
  run_sweep(mini_config(), dir1, o1);
  run_sweep(mini_config(), dir2, o2);

  const auto h1 = output_hashes(dir1);
  const auto h2 = output_hashes(dir2);
  REQUIRE_FALSE(h1.empty());
  REQUIRE(h1 == h2);

  // byte-level check, not just hashes
  for (const auto& [rel, hash] : h1)
    REQUIRE(io::read_file(dir1 / rel) == io::read_file(dir2 / rel));

  // manifests agree on everything but timestamps
  const RunManifest m1 = RunManifest::load(RunPaths{dir1});
  const RunManifest m2 = RunManifest::load(RunPaths{dir2});
  REQUIRE(m1.config == m2.config);
  REQUIRE(m1.scenario_lines == m2.scenario_lines);
  ordered_json c1, c2;
  for (const auto& [id, rec] : m1.cases)
    for (const auto& [p, h] : rec.files) c1[p] = h;
  for (const auto& [id, rec] : m2.cases)
    for (const auto& [p, h] : rec.files) c2[p] = h;
  REQUIRE(c1 == c2);
}

TEST_CASE("a partial sweep resumed to completion matches an uninterrupted one") {
  const fs::path partial = fresh_dir("partial");
  const fs::path straight = fresh_dir("straight");

  SweepOptions first;
  first.jobs = 2;
  first.scenario_filter = std::set<int>{1};  // healthy + loosening only
  REQUIRE(run_sweep(mini_config(), partial, first).solved == 2);

  SweepOptions rest;
  rest.jobs = 2;
  const SweepResult resumed = run_sweep(mini_config(), partial, rest);
  REQUIRE(resumed.skipped == 2);
  REQUIRE(resumed.solved == 1);

  SweepOptions all;
  all.jobs = 2;
  run_sweep(mini_config(), straight, all);
  REQUIRE(output_hashes(partial) == output_hashes(straight));
}

TEST_CASE("tampered outputs are caught by verify and healed by resweep") {
  const fs::path dir = fresh_dir("tamper");
  SweepOptions options;
  options.jobs = 2;
  run_sweep(mini_config(), dir, options);

  const fs::path victim = dir / "matrices" / "002_crack_a90_d2mm.bin";
  std::string bytes = io::read_file(victim);
  bytes[bytes.size() / 2] ^= 0x5a;
  io::atomic_write(victim, bytes);

  const VerifyResult broken = verify_run(dir);
  REQUIRE_FALSE(broken.ok());
  REQUIRE(broken.mismatched == std::vector<std::string>{"matrices/002_crack_a90_d2mm.bin"});

  const SweepResult heal = run_sweep(mini_config(), dir, options);
  REQUIRE(heal.solved == 1);
  REQUIRE(heal.skipped == 2);
  REQUIRE(verify_run(dir).ok());
}

TEST_CASE("a run directory refuses a different configuration") {
  const fs::path dir = fresh_dir("config_clash");
  SweepOptions options;
  options.jobs = 2;
  options.scenario_filter = std::set<int>{};
  run_sweep(mini_config(), dir, options);

  RunConfig other = mini_config();
  other.solver.loss_tangent = 0.01;
  REQUIRE_THROWS_WITH(run_sweep(other, dir, options),
                      Catch::Matchers::Contains("different configuration"));
}

TEST_CASE("run config JSON round-trips") {
  const RunConfig cfg = mini_config();
  const fs::path path = fresh_dir("cfg").parent_path() / "mini.json";
  save_run_config(cfg, path);
  const RunConfig back = load_run_config(path);
  REQUIRE(to_json(back) == to_json(cfg));
  REQUIRE(back.grid_h == cfg.grid_h);
  REQUIRE(back.phantom.materials[static_cast<std::size_t>(Region::water)].pwave_speed == 1480.0);
  REQUIRE(back.plan().frequencies == cfg.plan().frequencies);
}

#ifdef SONOSIG_CLI
TEST_CASE("command-line interface drives sweep, analyze, render and verify") {
  const fs::path dir = fresh_dir("cli");
  const fs::path cfg_path = dir.parent_path() / "cli_config.json";
  save_run_config(mini_config(), cfg_path);

  auto cli = [&](const std::string& args) {
    const std::string cmd = std::string(SONOSIG_CLI) + " " + args + " > /dev/null 2>&1";
    return std::system(cmd.c_str());
  };

  REQUIRE(cli("sweep --config " + cfg_path.string() + " --out " + dir.string() + " --jobs 2") == 0);
  REQUIRE(cli("analyze --out " + dir.string()) == 0);
  REQUIRE(cli("render --out " + dir.string() + " --normalization global") == 0);
  REQUIRE(cli("verify --out " + dir.string()) == 0);
  REQUIRE(fs::exists(dir / "reports" / "summary.csv"));
  REQUIRE(fs::exists(dir / "figures" / "002_crack_a90_d2mm_amp.pgm"));

  const fs::path pgm = dir.parent_path() / "cli_phantom.pgm";
  REQUIRE(cli("phantom-debug --config " + cfg_path.string() + " --out " + pgm.string()) == 0);
  REQUIRE(fs::exists(pgm));

  // scenario filter and stride flags
  const fs::path dir2 = fresh_dir("cli2");
  REQUIRE(cli("sweep --config " + cfg_path.string() + " --out " + dir2.string() +
              " --jobs 2 --scenarios 2 --freq-stride 2") == 0);
  REQUIRE(fs::exists(dir2 / "matrices" / "002_crack_a90_d2mm.bin"));
  REQUIRE_FALSE(fs::exists(dir2 / "matrices" / "001_loosening_a180_t1mm_l1.bin"));
  const TransferMatrix tm = load_transfer_matrix(dir2 / "matrices" / "002_crack_a90_d2mm.meta");
  REQUIRE(tm.frequencies == std::vector<double>{80e3});  // stride 2 of {40,80,120} kHz

  // verify flags corruption through the CLI exit code
  std::string bytes = io::read_file(dir2 / "matrices" / "002_crack_a90_d2mm.bin");
  bytes[40] ^= 0xff;
  io::atomic_write(dir2 / "matrices" / "002_crack_a90_d2mm.bin", bytes);
  REQUIRE(cli("verify --out " + dir2.string()) != 0);
}
#endif
