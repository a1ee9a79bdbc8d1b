//
// molbbo - surrogate-based black-box optimization of molecular graphs
// SPDX-License-Identifier: Apache-2.0
//

#include "molbbo/cli.h"

#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <json.hpp>

#include "molbbo/bbo.h"
#include "molbbo/runlog.h"
#include "test_util.h"

namespace molbbo {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct CliResult {
  int status;
  std::string out;
  std::string err;
};

CliResult cli(std::vector<std::string> args) {
  args.insert(args.begin(), "molbbo");
  std::vector<const char *> argv;
  for (const std::string &a : args)
    argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int status = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {status, out.str(), err.str()};
}

std::string slurp(const fs::path &p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<std::string> lines(const fs::path &p) {
  std::ifstream in(p);
  std::vector<std::string> v;
  for (std::string l; std::getline(in, l);)
    v.push_back(l);
  return v;
}

class Cli : public ::testing::Test {
protected:
  void SetUp() override {
    dir_ = testing::scratch_dir(
        ::testing::UnitTest::GetInstance()->current_test_info()->name());
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string write_config(const std::string &name, const json &j) {
    const fs::path p = dir_ / name;
    std::ofstream(p) << j.dump(1);
    return p.string();
  }

  fs::path dir_;
};

const json kAtomCount = {{"objective", {{"kind", "synthetic_atom_count"}}}};

TEST_F(Cli, RunBboAtomCountReachesCap) {
  const auto cfg = write_config("c.json", kAtomCount);
  const CliResult r = cli({"run-bbo", "--config", cfg, "--out",
                           (dir_ / "run").string(), "--budget", "50"});
  ASSERT_EQ(r.status, 0) << r.err;
  const json summary = json::parse(slurp(dir_ / "run" / "summary.json"));
  EXPECT_EQ(summary["best_value"], 9.0);
  EXPECT_EQ(summary["calls"], 50);
  EXPECT_TRUE(fs::exists(dir_ / "run" / "state.json"));
  const RunLog log = read_runlog(dir_ / "run" / "runlog.jsonl");
  EXPECT_EQ(log.records.size(), 50u);
  EXPECT_TRUE(log.complete);
  const auto steps = lines(dir_ / "run" / "steps.jsonl");
  ASSERT_FALSE(steps.empty());
  const json first = json::parse(steps.front());
  EXPECT_EQ(first["step"], 1);
  EXPECT_TRUE(first["kernel"].contains("signal_variance"));
}

TEST_F(Cli, RunBboRecordSchema) {
  const auto cfg = write_config("c.json", kAtomCount);
  ASSERT_EQ(cli({"run-bbo", "--config", cfg, "--out", (dir_ / "run").string(),
                 "--budget", "1"})
                .status,
            0);
  const auto l = lines(dir_ / "run" / "runlog.jsonl");
  ASSERT_GE(l.size(), 2u);
  const json rec = json::parse(l[1]);
  for (const char *k : {"callIndex", "step", "restart", "smiles", "value",
                        "bestSoFar", "cpuTimeS", "wallTimeS"})
    EXPECT_TRUE(rec.contains(k)) << k;
  EXPECT_EQ(rec["smiles"], "C");
  EXPECT_EQ(read_runlog(dir_ / "run" / "runlog.jsonl").records.size(), 1u);
}

TEST_F(Cli, RunEaAtomCountReachesCap) {
  const auto cfg = write_config("c.json", kAtomCount);
  const CliResult r = cli({"run-ea", "--config", cfg, "--out",
                           (dir_ / "ea").string(), "--budget", "200"});
  ASSERT_EQ(r.status, 0) << r.err;
  const json summary = json::parse(slurp(dir_ / "ea" / "summary.json"));
  EXPECT_EQ(summary["best_value"], 9.0);
  const RunLog log = read_runlog(dir_ / "ea" / "runlog.jsonl");
  TabuSet keys;
  for (const CallRecord &rec : log.records)
    keys.insert(canonical_key(parse_smiles(rec.smiles)));
  EXPECT_EQ(keys.size(), log.records.size());
  EXPECT_EQ(static_cast<long>(log.records.size()), summary["calls"].get<long>());
}

TEST_F(Cli, RerunsAreByteIdentical) {
  const auto cfg = write_config("c.json", {{"seed", 3}, {"budget", 40}});
  for (const char *cmd : {"run-bbo", "run-ea"}) {
    for (const char *name : {"a", "b"})
      ASSERT_EQ(cli({cmd, "--config", cfg, "--out",
                     (dir_ / (std::string(cmd) + name)).string(), "--sequential"})
                    .status,
                0);
    EXPECT_EQ(slurp(dir_ / (std::string(cmd) + "a") / "runlog.jsonl"),
              slurp(dir_ / (std::string(cmd) + "b") / "runlog.jsonl"))
        << cmd;
  }
}

TEST_F(Cli, SeedFlagOverridesConfig) {
  const auto cfg = write_config("c.json", {{"seed", 3}, {"budget", 30}});
  cli({"run-ea", "--config", cfg, "--out", (dir_ / "a").string()});
  cli({"run-ea", "--config", cfg, "--out", (dir_ / "b").string(), "--seed", "4"});
  EXPECT_EQ(read_runlog(dir_ / "b" / "runlog.jsonl").header.seed, 4u);
  EXPECT_NE(slurp(dir_ / "a" / "runlog.jsonl"), slurp(dir_ / "b" / "runlog.jsonl"));
}

TEST_F(Cli, InvalidConfigExitsTwo) {
  const auto unknown = write_config("u.json", {{"budget", 10}, {"budjet", 5}});
  CliResult r = cli({"run-bbo", "--config", unknown, "--out", (dir_ / "x").string()});
  EXPECT_EQ(r.status, 2);
  EXPECT_NE(r.err.find("budjet"), std::string::npos) << r.err;

  const auto bad_type = write_config("t.json", {{"budget", "ten"}});
  EXPECT_EQ(cli({"run-bbo", "--config", bad_type, "--out", (dir_ / "x").string()})
                .status,
            2);
  const auto nested = write_config(
      "n.json", {{"kernel", {{"family", "dot_product"}, {"ofset", 1}}}});
  EXPECT_EQ(cli({"run-ea", "--config", nested, "--out", (dir_ / "x").string()})
                .status,
            2);
  EXPECT_EQ(cli({"run-bbo", "--config", (dir_ / "missing.json").string(), "--out",
                 (dir_ / "x").string()})
                .status,
            2);
  EXPECT_EQ(cli({"run-bbo"}).status, 2);
  EXPECT_EQ(cli({"frobnicate"}).status, 2);
  EXPECT_FALSE(fs::exists(dir_ / "x" / "runlog.jsonl"));
}

TEST_F(Cli, ExperimentConfigRoundTrip) {
  const json j = {{"seed", 12},
                  {"budget", 300},
                  {"restarts", 4},
                  {"xi", 0.05},
                  {"atom_types", {"C", "O"}},
                  {"kernel", {{"family", "rbf"}}},
                  {"ea", {{"steps", 5}}},
                  {"objective", {{"kind", "synthetic_linear_shingles"}, {"seed", 7}}}};
  const ExperimentConfig c = parse_experiment_config(j);
  EXPECT_EQ(c.bbo.restarts, 4);
  EXPECT_EQ(c.bbo.ea.steps, 5);
  EXPECT_EQ(c.bbo.kernel.family, KernelFamily::Rbf);
  EXPECT_EQ(c.objective.seed, 7u);
  const ExperimentConfig back = parse_experiment_config(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
}

TEST_F(Cli, ObjectiveFailureExitsThree) {
  const auto cfg = write_config(
      "c.json", {{"budget", 20},
                 {"objective",
                  {{"kind", "external_process"}, {"command", "exit 0"}}}});
  const CliResult r = cli({"run-bbo", "--config", cfg, "--out", (dir_ / "x").string()});
  EXPECT_EQ(r.status, 3) << r.err;
  const RunLog log = read_runlog(dir_ / "x" / "runlog.jsonl");
  EXPECT_FALSE(log.complete);
  const json summary = json::parse(slurp(dir_ / "x" / "summary.json"));
  EXPECT_FALSE(summary["complete"].get<bool>());
}

TEST_F(Cli, ExternalObjectiveEndToEnd) {
  const fs::path script = dir_ / "count.sh";
  // Value = length of the SMILES text.
  std::ofstream(script) << "while read cmd smi; do echo \"OK ${#smi}\"; done\n";
  const auto cfg = write_config(
      "c.json", {{"budget", 25},
                 {"objective",
                  {{"kind", "external_process"},
                   {"command", "sh " + script.string()},
                   {"timeout_s", 5.0},
                   {"pool_size", 2}}}});
  const CliResult r = cli({"run-bbo", "--config", cfg, "--out",
                           (dir_ / "x").string(), "--parallel", "2"});
  ASSERT_EQ(r.status, 0) << r.err;
  const RunLog log = read_runlog(dir_ / "x" / "runlog.jsonl");
  ASSERT_EQ(log.records.size(), 25u);
  for (const CallRecord &rec : log.records)
    EXPECT_EQ(rec.value, static_cast<double>(rec.smiles.size()));
}

TEST_F(Cli, ResumeMatchesUninterruptedRun) {
  const auto cfg = write_config("c.json", {{"seed", 2}, {"budget", 60}});
  ASSERT_EQ(cli({"run-bbo", "--config", cfg, "--out", (dir_ / "whole").string()})
                .status,
            0);

  // Simulate a crash after step 2: the checkpoint of that step, a log that
  // ran past it and ends in a torn line, and a step log one line ahead.
  const ExperimentConfig ec =
      parse_experiment_config(json::parse(slurp(cfg)));
  BboRun run(ec.bbo, std::shared_ptr<Objective>(make_objective(ec.objective)));
  run.initialize();
  run.step();
  run.step();
  const fs::path crash = dir_ / "crash";
  fs::create_directories(crash);
  std::ofstream(crash / "state.json")
      << json{{"schema", "molbbo-state"},
              {"version", 1},
              {"config", result_config(ec)},
              {"run", run.save_state()}}
             .dump();
  {
    const auto whole_log = lines(dir_ / "whole" / "runlog.jsonl");
    std::ofstream log(crash / "runlog.jsonl");
    const std::size_t keep = static_cast<std::size_t>(run.calls()) + 1 + 4;
    for (std::size_t i = 0; i < keep; ++i)
      log << whole_log.at(i) << '\n';
    log << "{\"callIndex\": 99, \"trunc";
    const auto whole_steps = lines(dir_ / "whole" / "steps.jsonl");
    std::ofstream steps(crash / "steps.jsonl");
    for (std::size_t i = 0; i < 3; ++i)
      steps << whole_steps.at(i) << '\n';
  }
  const CliResult r =
      cli({"run-bbo", "--config", cfg, "--out", crash.string(), "--resume"});
  ASSERT_EQ(r.status, 0) << r.err;
  EXPECT_EQ(slurp(crash / "runlog.jsonl"), slurp(dir_ / "whole" / "runlog.jsonl"));
  EXPECT_EQ(slurp(crash / "summary.json"), slurp(dir_ / "whole" / "summary.json"));
  const auto a = lines(crash / "steps.jsonl"), b = lines(dir_ / "whole" / "steps.jsonl");
  EXPECT_EQ(a, b);

  // A changed config is refused.
  const auto other = write_config("o.json", {{"seed", 5}, {"budget", 60}});
  EXPECT_EQ(cli({"run-bbo", "--config", other, "--out", crash.string(), "--resume"})
                .status,
            2);
}

void write_fixture_log(const fs::path &path, const std::string &method,
                       long hit_at, long calls, long budget) {
  RunLogHeader h;
  h.method = method;
  h.objective = "fixture";
  h.budget = budget;
  RunLogWriter w(path, h);
  for (long i = 1; i <= calls; ++i) {
    CallRecord r;
    r.call_index = i;
    r.smiles = "C";
    r.value = i == hit_at ? -2.0 : -20.0;
    r.best_so_far = i >= hit_at && hit_at > 0 ? -2.0 : -20.0;
    r.cpu_time_s = static_cast<double>(i);
    r.wall_time_s = r.cpu_time_s;
    w.write(r);
  }
  w.finish(true, calls);
}

TEST_F(Cli, ReportErtFixture) {
  write_fixture_log(dir_ / "a.jsonl", "bbo", 100, 1000, 1000);
  write_fixture_log(dir_ / "b.jsonl", "bbo", 300, 1000, 1000);
  const CliResult r = cli({"report", "--logs", (dir_ / "*.jsonl").string(),
                           "--targets", "-3,-1", "--out", (dir_ / "rep").string()});
  ASSERT_EQ(r.status, 0) << r.err;
  const auto ert = lines(dir_ / "rep" / "ert.csv");
  ASSERT_EQ(ert.size(), 3u);
  EXPECT_EQ(ert[0], "method,target,ert,successes,runs,min,median,max");
  EXPECT_EQ(ert[1], "bbo,-3,200,2,2,100,200,300");
  EXPECT_EQ(ert[2], "bbo,-1,no_success,0,2,,,");

  for (const char *name : {"ecdf_calls.csv", "ecdf_cpu.csv"}) {
    const auto curve = lines(dir_ / "rep" / name);
    ASSERT_GE(curve.size(), 2u);
    EXPECT_EQ(curve[0], "x,proportion");
    double prev = 0;
    for (std::size_t i = 1; i < curve.size(); ++i) {
      const double p = std::stod(curve[i].substr(curve[i].find(',') + 1));
      EXPECT_GE(p, prev);
      EXPECT_LE(p, 1.0);
      prev = p;
    }
  }
}

TEST_F(Cli, ReportTwoMethodsFromRealRuns) {
  const auto cfg = write_config("c.json", {{"budget", 40}});
  cli({"run-bbo", "--config", cfg, "--out", (dir_ / "r1").string()});
  cli({"run-ea", "--config", cfg, "--out", (dir_ / "r2").string()});
  const CliResult r =
      cli({"report", "--logs", (dir_ / "r*" / "runlog.jsonl").string(), "--targets",
           "-5", "--out", (dir_ / "rep").string()});
  ASSERT_EQ(r.status, 0) << r.err;
  for (const char *name : {"ecdf_calls__bbo.csv", "ecdf_calls__ea.csv",
                           "ecdf_cpu__bbo.csv", "ecdf_cpu__ea.csv", "ert.csv"})
    EXPECT_TRUE(fs::exists(dir_ / "rep" / name)) << name;
}

TEST_F(Cli, ReportErrors) {
  CliResult r = cli({"report", "--logs", (dir_ / "nothing*.jsonl").string(),
                     "--out", (dir_ / "rep").string()});
  EXPECT_EQ(r.status, 2);
  EXPECT_FALSE(r.err.empty());

  write_fixture_log(dir_ / "a.jsonl", "bbo", 10, 20, 20);
  RunLogHeader h;
  h.objective = "other";
  RunLogWriter(dir_ / "b.jsonl", h).finish(true, 0);
  EXPECT_EQ(cli({"report", "--logs", (dir_ / "*.jsonl").string(), "--out",
                 (dir_ / "rep").string()})
                .status,
            2);
  EXPECT_EQ(cli({"report", "--logs", (dir_ / "*.jsonl").string(), "--out",
                 (dir_ / "rep").string(), "--allow-mixed-objectives"})
                .status,
            0);
  EXPECT_EQ(cli({"report", "--logs", (dir_ / "a.jsonl").string(), "--grid", "0:1",
                 "--out", (dir_ / "rep").string()})
                .status,
            2);
}

TEST_F(Cli, GenerateAndSurrogateEval) {
  const fs::path data = dir_ / "data.csv";
  ASSERT_EQ(cli({"generate-molecules", "--count", "400", "--seed", "3",
                 "--objective-seed", "1", "--out", data.string()})
                .status,
            0);
  const auto rows = lines(data);
  ASSERT_EQ(rows.size(), 400u);
  EXPECT_NE(rows[0].find(','), std::string::npos);

  const CliResult r =
      cli({"surrogate-eval", "--dataset", data.string(), "--sizes", "20,80,300",
           "--folds", "10", "--seed", "1", "--out", (dir_ / "lc").string()});
  ASSERT_EQ(r.status, 0) << r.err;
  const auto csv = lines(dir_ / "lc" / "learning_curve.csv");
  ASSERT_EQ(csv.size(), 5u);
  EXPECT_NE(csv[0].find("folds=10"), std::string::npos);
  EXPECT_EQ(csv[1], "size,mae_mean,mae_std");
  std::vector<double> mae;
  for (std::size_t i = 2; i < csv.size(); ++i) {
    std::stringstream ss(csv[i]);
    std::string size, m;
    std::getline(ss, size, ',');
    std::getline(ss, m, ',');
    mae.push_back(std::stod(m));
  }
  EXPECT_LT(mae.back(), mae.front());

  EXPECT_EQ(cli({"surrogate-eval", "--dataset", data.string(), "--sizes", "1000",
                 "--out", (dir_ / "lc2").string()})
                .status,
            2);
}

TEST_F(Cli, SurrogateEvalReportsBadLines) {
  const fs::path data = dir_ / "data.csv";
  {
    std::ofstream f(data);
    for (int i = 0; i < 50; ++i)
      f << "C,1.0\nCC,2.0\n";
    f << "CX,3.0\n";
    f << "C,abc\n";
  }
  const CliResult r = cli({"surrogate-eval", "--dataset", data.string(), "--sizes",
                           "10", "--folds", "5", "--out", (dir_ / "lc").string()});
  EXPECT_EQ(r.status, 2);
  EXPECT_NE(r.err.find("line 101"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("line 102"), std::string::npos) << r.err;
}

TEST_F(Cli, ReadDatasetToleratesFewBadLines) {
  std::stringstream in, err;
  for (int i = 0; i < 200; ++i)
    in << "CCO,-3.5\n";
  in << "C(,1\n";
  const auto data = read_dataset(in, err);
  EXPECT_EQ(data.size(), 200u);
  EXPECT_NE(err.str().find("line 201"), std::string::npos);
}

TEST_F(Cli, GenerateToStdoutIsDeterministic) {
  const CliResult a = cli({"generate-molecules", "--count", "50", "--seed", "9",
                           "--smiles-only", "--out", "-"});
  const CliResult b = cli({"generate-molecules", "--count", "50", "--seed", "9",
                           "--smiles-only"});
  ASSERT_EQ(a.status, 0);
  EXPECT_EQ(a.out, b.out);
  std::stringstream ss(a.out);
  int n = 0;
  for (std::string l; std::getline(ss, l); ++n)
    EXPECT_NO_THROW(parse_smiles(l)) << l;
  EXPECT_EQ(n, 50);
}

TEST(CliBinary, HelpExitsZero) {
  EXPECT_EQ(std::system((std::string(MOLBBO_CLI_PATH) + " --help > /dev/null").c_str()),
            0);
  EXPECT_NE(std::system((std::string(MOLBBO_CLI_PATH) + " run-bbo 2> /dev/null").c_str()),
            0);
}

} // namespace
} // namespace molbbo
