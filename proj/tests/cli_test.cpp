// Copyright 2026 The doapnn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Drives the built binary end to end on a tiny dataset.

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "doapnn_cli_test";

struct Run {
  int code;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream f(p);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

Run cli(const std::string& args) {
  const auto out = kRoot / "stdout.txt", err = kRoot / "stderr.txt";
  const std::string cmd = std::string(DOAPNN_CLI) + " " + args + " >" + out.string() + " 2>" +
                          err.string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

const char* kTiny =
    "--set net.conv1=8 --set net.conv2=16 --set net.width=16 --set net.blocks=2";

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    fs::remove_all(kRoot);
    fs::create_directories(kRoot);
  }
  static void TearDownTestSuite() { fs::remove_all(kRoot); }
};

}  // namespace

TEST_F(Cli, SimulateTrainEvaluateBaselineReport) {
  const auto data = (kRoot / "data").string();
  auto r = cli("simulate --out " + data +
               " --tasks 2 --utterances 3 --angles-step 45 --seconds 0.5 --seed 3");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("records=30"), std::string::npos) << r.out;
  EXPECT_TRUE(fs::exists(fs::path(data) / "config.txt"));

  const auto run = (kRoot / "run").string();
  r = cli("train --quiet --data " + data + " --out " + run +
          " --strategy pnn --epochs 1 --batch-size 4 " + kTiny);
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"ledger.json", "curves.csv", "stage_1.ckpt", "stage_2.ckpt"})
    EXPECT_TRUE(fs::exists(fs::path(run) / f)) << f;

  r = cli("evaluate --data " + data + " --checkpoint " + run + "/stage_2.ckpt --out " +
          (kRoot / "eval").string());
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(kRoot / "eval" / "eval.csv"));

  r = cli("baseline --method srp-phat --data " + data);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("srp-phat,1,"), std::string::npos) << r.out;

  r = cli("report --ledger " + run + " --out " + (kRoot / "report").string());
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.substr(0, r.out.find('\n')).find("method"), 0u) << r.out;
  EXPECT_TRUE(fs::exists(kRoot / "report" / "table.csv"));
}

TEST_F(Cli, ErrorsAreOneLineWithCategory) {
  auto r = cli("train --strategy pnn");
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(r.err.rfind("error category=usage", 0), 0u) << r.err;

  r = cli("frobnicate");
  EXPECT_EQ(r.code, 2);

  r = cli("baseline --method gcc-phat --data " + (kRoot / "missing").string());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("error category="), std::string::npos);
  EXPECT_EQ(r.err.find('\n'), r.err.size() - 1) << r.err;
}
