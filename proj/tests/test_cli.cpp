#include "doctest.h"
#include "helpers.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(STIMKIT_CLI_PATH) + " " + args + " > " +
                          log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

// Small but complete pipeline configuration: every stage runs in well under a
// second and the demand fit stays on the sane side of the markup bound.
std::string mini_config() {
  return "seed = 3\n"
         "sim.n_consumers = 800\n"
         "sim.n_establishments = 60\n"
         "forest.n_trees = 80\n"
         "forest.nuisance_trees = 50\n"
         "forest.cost_trees = 50\n"
         "forest.surface_trees = 50\n"
         "forest.k_folds = 2\n";
}

std::string sim_only_config(int seed) {
  return "seed = " + std::to_string(seed) +
         "\n"
         "sim.n_consumers = 300\n"
         "sim.n_establishments = 40\n";
}

const std::vector<std::string> kAllArtifacts = {
    "consumers.csv", "orders.csv",     "establishments.csv", "claims.csv",
    "truth.csv",     "period.cfg",     "balance.csv",        "weights.csv",
    "did.csv",       "effects.csv",    "blp.csv",            "ale.csv",
    "decomposition.csv", "gains.csv",  "incidence.json",     "welfare.json",
    "rate.csv",      "tree.json",      "hybrid.csv",         "manifest.json"};

}  // namespace

TEST_CASE("cli rejects malformed configuration with exit code 2") {
  const fs::path dir = testutil::fresh_dir("cli_config_errors");
  const auto log = dir / "log.txt";
  const auto out = (dir / "out").string();

  SUBCASE("missing config file") {
    const int rc = run_cli("simulate --config " + (dir / "nope.cfg").string() +
                               " --out " + out,
                           log);
    CHECK(rc == 2);
  }
  SUBCASE("unknown key") {
    const auto cfg = dir / "bad.cfg";
    write_file(cfg, "bogus.key = 1\n");
    const int rc =
        run_cli("simulate --config " + cfg.string() + " --out " + out, log);
    CHECK(rc == 2);
    CHECK(slurp(log).find("bogus.key") != std::string::npos);
  }
  SUBCASE("duplicate key") {
    const auto cfg = dir / "dup.cfg";
    write_file(cfg, "seed = 1\nseed = 2\n");
    CHECK(run_cli("simulate --config " + cfg.string() + " --out " + out, log) ==
          2);
  }
  SUBCASE("line without key=value shape") {
    const auto cfg = dir / "shape.cfg";
    write_file(cfg, "this is not a key value line\n");
    CHECK(run_cli("simulate --config " + cfg.string() + " --out " + out, log) ==
          2);
  }
  SUBCASE("non-numeric value for numeric key") {
    const auto cfg = dir / "nan.cfg";
    write_file(cfg, "sim.n_consumers = plenty\n");
    CHECK(run_cli("simulate --config " + cfg.string() + " --out " + out, log) ==
          2);
  }
  SUBCASE("non-integer value for integer key") {
    const auto cfg = dir / "frac.cfg";
    write_file(cfg, "sim.n_consumers = 2.5\n");
    CHECK(run_cli("simulate --config " + cfg.string() + " --out " + out, log) ==
          2);
  }
  SUBCASE("unknown subcommand") {
    CHECK(run_cli("frobnicate --out " + out, log) == 2);
  }
  SUBCASE("missing subcommand") { CHECK(run_cli("--out " + out, log) == 2); }
  SUBCASE("simulate refuses external data mode") {
    const auto cfg = dir / "ext.cfg";
    write_file(cfg, "data.consumers = /tmp/whatever.csv\n");
    CHECK(run_cli("simulate --config " + cfg.string() + " --out " + out, log) ==
          2);
  }
}

TEST_CASE("cli enforces stage prerequisites with exit code 2") {
  const fs::path dir = testutil::fresh_dir("cli_prereqs");
  const auto log = dir / "log.txt";
  const auto cfg = dir / "mini.cfg";
  write_file(cfg, mini_config());
  const std::string base = " --config " + cfg.string() + " --out " +
                           (dir / "out").string() + " --quiet";

  CHECK(run_cli("match" + base, log) == 2);
  CHECK(slurp(log).find("run `simulate` first") != std::string::npos);

  REQUIRE(run_cli("simulate" + base, log) == 0);
  CHECK(run_cli("did" + base, log) == 2);
  CHECK(slurp(log).find("run `match` first") != std::string::npos);

  REQUIRE(run_cli("match" + base, log) == 0);
  CHECK(run_cli("ale" + base, log) == 2);
  CHECK(slurp(log).find("run `forest` first") != std::string::npos);
  CHECK(run_cli("welfare" + base, log) == 2);
}

TEST_CASE("cli surfaces corrupt input data with exit code 3") {
  const fs::path dir = testutil::fresh_dir("cli_data_errors");
  const auto log = dir / "log.txt";
  const auto cfg = dir / "mini.cfg";
  write_file(cfg, sim_only_config(7));
  const auto out = dir / "out";
  const std::string base =
      " --config " + cfg.string() + " --out " + out.string() + " --quiet";

  REQUIRE(run_cli("simulate" + base, log) == 0);
  {
    std::ofstream append(out / "orders.csv", std::ios::app);
    append << "short,row\n";
  }
  CHECK(run_cli("match" + base, log) == 3);
  CHECK(slurp(log).find("data error") != std::string::npos);

  SUBCASE("external mode with missing csv") {
    const auto ext = dir / "ext.cfg";
    write_file(ext,
               "data.consumers = " + (dir / "missing.csv").string() +
                   "\n"
                   "data.orders = " +
                   (out / "orders.csv").string() +
                   "\n"
                   "data.establishments = " +
                   (out / "establishments.csv").string() +
                   "\n"
                   "period.pre_start = 2022-07-04\n"
                   "period.treat_start = 2022-07-18\n"
                   "period.treat_end = 2022-08-27\n"
                   "period.post_end = 2022-09-10\n");
    CHECK(run_cli("match --config " + ext.string() + " --out " +
                      (dir / "ext_out").string() + " --quiet",
                  log) == 3);
  }
}

TEST_CASE("cli runs the external data mode end to end") {
  const fs::path dir = testutil::fresh_dir("cli_external");
  const auto log = dir / "log.txt";
  const auto sim_out = dir / "sim";
  const auto cfg = dir / "sim.cfg";
  write_file(cfg, sim_only_config(11));
  REQUIRE(run_cli("simulate --config " + cfg.string() + " --out " +
                      sim_out.string() + " --quiet",
                  log) == 0);

  const auto ext = dir / "ext.cfg";
  write_file(ext,
             "data.consumers = " + (sim_out / "consumers.csv").string() +
                 "\n"
                 "data.orders = " +
                 (sim_out / "orders.csv").string() +
                 "\n"
                 "data.establishments = " +
                 (sim_out / "establishments.csv").string() +
                 "\n"
                 "period.pre_start = 2022-07-04\n"
                 "period.treat_start = 2022-07-18\n"
                 "period.treat_end = 2022-08-27\n"
                 "period.post_end = 2022-09-10\n");
  const auto ext_out = dir / "ext_out";
  REQUIRE(run_cli("match --config " + ext.string() + " --out " +
                      ext_out.string() + " --quiet",
                  log) == 0);
  CHECK(fs::exists(ext_out / "weights.csv"));
  CHECK(fs::exists(ext_out / "balance.csv"));

  SUBCASE("external mode requires all three data paths") {
    const auto partial = dir / "partial.cfg";
    write_file(partial, "data.consumers = " +
                            (sim_out / "consumers.csv").string() + "\n");
    CHECK(run_cli("match --config " + partial.string() + " --out " +
                      (dir / "p_out").string() + " --quiet",
                  log) == 2);
  }
}

TEST_CASE("cli full pipeline produces every artifact and is reproducible") {
  const fs::path dir = testutil::fresh_dir("cli_pipeline");
  const auto log = dir / "log.txt";
  const auto cfg = dir / "mini.cfg";
  write_file(cfg, mini_config());
  const auto out_a = dir / "a";
  const auto out_b = dir / "b";

  REQUIRE(run_cli("all --config " + cfg.string() + " --out " + out_a.string() +
                      " --quiet",
                  log) == 0);
  CHECK(slurp(log).empty());  // --quiet silences progress output

  for (const auto& name : kAllArtifacts) {
    INFO("artifact ", name);
    CHECK(fs::exists(out_a / name));
  }

  REQUIRE(run_cli("all --config " + cfg.string() + " --out " + out_b.string() +
                      " --quiet",
                  log) == 0);
  for (const auto& name : kAllArtifacts) {
    INFO("artifact ", name);
    CHECK(testutil::files_identical((out_a / name).string(), (out_b / name).string()));
  }

  SUBCASE("progress output appears without --quiet") {
    const auto out_c = dir / "c";
    REQUIRE(run_cli("simulate --config " + cfg.string() + " --out " +
                        out_c.string(),
                    log) == 0);
    CHECK(!slurp(log).empty());
  }

  SUBCASE("unreachable stimulus target fails with exit code 4") {
    const auto greedy = dir / "greedy.cfg";
    write_file(greedy, mini_config() +
                           "hybrid.budget = 1\n"
                           "hybrid.target = 1000000000\n");
    CHECK(run_cli("hybrid --config " + greedy.string() + " --out " +
                      out_a.string() + " --quiet",
                  log) == 4);
    CHECK(slurp(log).find("estimation error") != std::string::npos);
  }
}

TEST_CASE("cli seed flag overrides the configured seed") {
  const fs::path dir = testutil::fresh_dir("cli_seed");
  const auto log = dir / "log.txt";
  const auto cfg = dir / "sim.cfg";
  write_file(cfg, sim_only_config(9));

  const auto d1 = dir / "cfg_seed";
  const auto d2 = dir / "flag_seed";
  const auto d3 = dir / "cfg_seed_again";
  REQUIRE(run_cli("simulate --config " + cfg.string() + " --out " +
                      d1.string() + " --quiet",
                  log) == 0);
  REQUIRE(run_cli("simulate --config " + cfg.string() + " --out " +
                      d2.string() + " --seed 5 --quiet",
                  log) == 0);
  REQUIRE(run_cli("simulate --config " + cfg.string() + " --out " +
                      d3.string() + " --seed 9 --quiet",
                  log) == 0);

  CHECK(slurp(d1 / "manifest.json").find("\"seed\": 9") != std::string::npos);
  CHECK(slurp(d2 / "manifest.json").find("\"seed\": 5") != std::string::npos);

  CHECK(testutil::files_identical((d1 / "truth.csv").string(), (d3 / "truth.csv").string()));
  CHECK(testutil::files_identical((d1 / "orders.csv").string(), (d3 / "orders.csv").string()));
  CHECK(!testutil::files_identical((d1 / "truth.csv").string(), (d2 / "truth.csv").string()));
}
