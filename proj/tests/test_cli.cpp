#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sys/wait.h>

#include "synthetic_suite.hpp"
#include "temp_dir.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path kThree = fs::path(TCD_FIXTURE_DIR) / "three_items";

struct CliResult {
  int code = -1;
  std::string out;
  std::string err;
};

CliResult run_cli(const std::string& args) {
  tcd::testutil::TempDir io("tcd-cli");
  const auto out = io / "stdout";
  const auto err = io / "stderr";
  const std::string cmd =
      std::string("\"") + TCD_CLI_PATH + "\" " + args + " >\"" + out.string() + "\" 2>\"" + err.string() + "\"";
  const int status = std::system(cmd.c_str());
  CliResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = tcd::testutil::slurp(out);
  r.err = tcd::testutil::slurp(err);
  return r;
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

}  // namespace

TEST(Cli, VersionAndHelp) {
  EXPECT_EQ(run_cli("--version").code, 0);
  const auto help = run_cli("--help");
  EXPECT_EQ(help.code, 0);
  EXPECT_NE(help.out.find("render-report"), std::string::npos);
  EXPECT_EQ(run_cli("").code, 1);
  EXPECT_EQ(run_cli("frobnicate").code, 1);
}

TEST(Cli, Validate) {
  const auto ok = run_cli("validate --check-media " + q(kThree / "manifest.json"));
  EXPECT_EQ(ok.code, 0) << ok.out << ok.err;
  EXPECT_TRUE(ok.out.starts_with("0 violations\n")) << ok.out;

  tcd::testutil::TempDir dir;
  std::ofstream(dir / "bad.json") << R"({"items": [{"id": "a", "category": "misleading"}]})";
  const auto bad = run_cli("validate " + q(dir / "bad.json"));
  EXPECT_EQ(bad.code, 1);
  EXPECT_NE(bad.out.find("$.items[0]"), std::string::npos) << bad.out;
  EXPECT_EQ(run_cli("validate " + q(dir / "missing.json")).code, 1);
}

TEST(Cli, EvalAndRenderReport) {
  tcd::testutil::TempDir dir;
  const auto r = run_cli("eval -c " + q(kThree / "config_tcd.json") + " -o " + q(dir / "out") + " -j 2");
  ASSERT_EQ(r.code, 0) << r.out << r.err;
  EXPECT_NE(r.out.find("TCD"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir / "out" / "answers.jsonl"));
  const auto rendered = run_cli("render-report " + q(dir / "out" / "report.json"));
  EXPECT_EQ(rendered.code, 0);
  EXPECT_EQ(rendered.out, tcd::testutil::slurp(dir / "out" / "report.txt"));
}

TEST(Cli, EvalWithQuestionErrorsExitsTwo) {
  tcd::testutil::TempDir dir;
  auto cfg = nlohmann::json::parse(tcd::testutil::slurp(kThree / "config_tcd.json"));
  cfg["judge"]["dir"] = (dir / "no-judge").string();
  cfg["dataset"] = (kThree / "manifest.json").string();
  cfg["backend"]["scenario"] = (kThree / "scenario.json").string();
  fs::create_directories(dir / "no-judge");
  std::ofstream(dir / "cfg.json") << cfg.dump();
  const auto r = run_cli("eval -c " + q(dir / "cfg.json") + " -o " + q(dir / "out"));
  EXPECT_EQ(r.code, 2) << r.out << r.err;
  EXPECT_TRUE(fs::exists(dir / "out" / "report.json"));
}

TEST(Cli, ConfigErrorsExitOne) {
  tcd::testutil::TempDir dir;
  EXPECT_EQ(run_cli("eval -c " + q(dir / "none.json")).code, 1);
  std::ofstream(dir / "bad.json") << R"({"dataset": "x"})";
  const auto r = run_cli("eval -c " + q(dir / "bad.json"));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("backend"), std::string::npos) << r.err;
  EXPECT_EQ(run_cli("render-report " + q(dir / "bad.json")).code, 1);
}

TEST(Cli, AblateWritesGrid) {
  tcd::testutil::TempDir dir;
  tcd::synthetic::write_suite(dir.path());
  const auto r = run_cli("ablate -c " + q(dir / "config.json") + " --alphas 0.25,0.5 --frames 4,8 -o " + q(dir / "abl"));
  ASSERT_EQ(r.code, 0) << r.out << r.err;
  const auto csv = tcd::testutil::slurp(dir / "abl" / "ablation.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
  EXPECT_NE(csv.find("\r\n0.25,0.5,4,"), std::string::npos);
  EXPECT_NE(csv.find("\r\n0.5,0.5,8,"), std::string::npos);
  EXPECT_EQ(r.out.substr(0, csv.size()), csv);
}

TEST(Cli, AblateRejectsBadLists) {
  tcd::testutil::TempDir dir;
  tcd::synthetic::write_suite(dir.path());
  const auto cfg = q(dir / "config.json");
  EXPECT_EQ(run_cli("ablate -c " + cfg + " --alphas \"\"").code, 1);
  EXPECT_EQ(run_cli("ablate -c " + cfg + " --alphas 0.5,x").code, 1);
  EXPECT_EQ(run_cli("ablate -c " + cfg + " --alphas -1").code, 1);
  EXPECT_EQ(run_cli("ablate -c " + cfg + " --betas 1.5").code, 1);
  EXPECT_EQ(run_cli("ablate -c " + cfg + " --frames 0").code, 1);
  EXPECT_FALSE(fs::exists(dir / "out" / "ablation.csv"));
}

TEST(Fixture, GeneratorReproducesCommittedFiles) {
  tcd::testutil::TempDir dir;
  const std::string cmd = std::string("\"") + TCD_GEN_FIXTURE_PATH + "\" " + q(dir.path()) + " >/dev/null";
  ASSERT_EQ(std::system(cmd.c_str()), 0);
  std::size_t compared = 0;
  for (const auto& entry : fs::recursive_directory_iterator(kThree)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), kThree);
    ASSERT_TRUE(fs::exists(dir.path() / rel)) << rel;
    EXPECT_EQ(tcd::testutil::slurp(entry.path()), tcd::testutil::slurp(dir.path() / rel)) << rel;
    ++compared;
  }
  std::size_t generated = 0;
  for (const auto& entry : fs::recursive_directory_iterator(dir.path())) generated += entry.is_regular_file();
  EXPECT_EQ(compared, generated);
}
