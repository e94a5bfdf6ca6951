#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <sys/wait.h>
#include <unistd.h>

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(SPDOT_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("spdot_cli_" + std::to_string(::getpid()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string at(const std::string& rel) const { return (dir_ / rel).string(); }
  fs::path dir_;
};

TEST_F(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run("gen"), 2);
  EXPECT_EQ(run("gen --out " + at("g") + " --bogus"), 2);
  EXPECT_EQ(run("gen --out " + at("g") + " --shift-w \"1,x;0,1\""), 2);
  EXPECT_EQ(run("gen --out " + at("g") + " --shift-w \"1,0;0\""), 2);
  EXPECT_EQ(run("gen --out " + at("g") + " --dim 3 --shift-w \"1,0;0,1\""), 2);
  EXPECT_EQ(run("frobnicate"), 2);
  EXPECT_EQ(run("--help"), 0);
}

TEST_F(Cli, RuntimeErrorsExitOne) {
  EXPECT_EQ(run("transport --source " + at("missing.jsonl") + " --target " + at("missing.jsonl") +
                " --out " + at("t")),
            1);
  EXPECT_EQ(run("eval --model " + at("none.ckpt") + " --data " + at("none.jsonl")), 1);
  EXPECT_EQ(run("transport --out " + at("t") + " --source " SPDOT_FIXTURE_DIR
                "/not_spd.jsonl --target " SPDOT_FIXTURE_DIR "/not_spd.jsonl"),
            1);
}

TEST_F(Cli, PipelineWritesArtefacts) {
  ASSERT_EQ(run("--out " + at("d") + " gen"), 0);
  ASSERT_EQ(run("--out " + at("t") + " transport --verify-affine --source " + at("d/source.jsonl") +
                " --target " + at("d/target.jsonl")),
            0);
  for (const char* f : {"t/plan.csv", "t/mapped_sources.jsonl", "t/mapped_targets.jsonl",
                        "t/points.csv"})
    EXPECT_TRUE(fs::exists(at(f))) << f;
  // A singular W cannot pass the recovery check.
  EXPECT_EQ(run("--out " + at("t2") + " transport --verify-affine --shift-w \"1,1;1,1\" --source " +
                at("d/source.jsonl") + " --target " + at("d/target.jsonl")),
            1);
  ASSERT_EQ(run("--out " + at("m") + " train --epochs 2 --mode deepjdot --source " +
                at("d/source.jsonl") + " --target " + at("d/target.jsonl")),
            0);
  EXPECT_TRUE(fs::exists(at("m/model.ckpt")));
  EXPECT_TRUE(fs::exists(at("m/history.csv")));
  EXPECT_EQ(run("eval --model " + at("m/model.ckpt") + " --data " + at("d/target.jsonl")), 0);
  EXPECT_EQ(run("train --mode nonsense --out " + at("m") + " --source " + at("d/source.jsonl") +
                " --target " + at("d/target.jsonl")),
            2);
}

TEST_F(Cli, SameSeedSameBytes) {
  ASSERT_EQ(run("--seed 7 --out " + at("a") + " gen --bands 4 --dim 3"), 0);
  ASSERT_EQ(run("--seed 7 --out " + at("b") + " gen --bands 4 --dim 3"), 0);
  ASSERT_EQ(run("--seed 8 --out " + at("c") + " gen --bands 4 --dim 3"), 0);
  EXPECT_EQ(slurp(at("a/source.jsonl")), slurp(at("b/source.jsonl")));
  EXPECT_NE(slurp(at("a/source.jsonl")), slurp(at("c/source.jsonl")));
  ASSERT_EQ(run("--out " + at("a") + " disttable --source " + at("a/source.jsonl") +
                " --target " + at("a/target.jsonl")),
            0);
  const std::string table = slurp(at("a/disttable.csv"));
  EXPECT_EQ(table.rfind("band,t0,t1,t2,t3,diagonal_minimal\n", 0), 0u);
}

TEST_F(Cli, GradcheckSmall) { EXPECT_EQ(run("gradcheck --seeds 2 --min-dim 3 --max-dim 4"), 0); }

}  // namespace
