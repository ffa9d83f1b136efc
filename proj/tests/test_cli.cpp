#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;

namespace {

std::string g_binary;

struct CliRun {
  int code = -1;
  std::string out;
};

CliRun run(const std::string& args) {
  const std::string cmd = g_binary + " " + args + " 2>&1";
  CliRun r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (pipe == nullptr) return r;
  std::array<char, 4096> buf{};
  while (std::fgets(buf.data(), buf.size(), pipe) != nullptr) r.out += buf.data();
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("aflstm_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
  EXPECT_EQ(run("synth --n 0 --out " + path("x.jsonl")).code, 2);
  EXPECT_EQ(run("synth --n 5").code, 2);
  EXPECT_EQ(run("hrr-demo --pairs 0").code, 2);
  EXPECT_EQ(run("gradcheck --d 64").code, 2);
  EXPECT_EQ(run("train --variant lstm --fusion conv --data " + path("x.jsonl")).code, 2);
  EXPECT_EQ(run("train --variant transformer --data " + path("x.jsonl")).code, 2);
  EXPECT_EQ(run("train --variant af-lstm --fusion add --data " + path("x.jsonl")).code, 2);
}

TEST_F(Cli, HelpExitsZero) {
  const CliRun r = run("--help");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("train"), std::string::npos);
}

TEST_F(Cli, HrrDemoSinglePairIsPerfect) {
  const CliRun r = run("hrr-demo --d 512 --pairs 1 --trials 50");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("1.00"), std::string::npos) << r.out;
}

TEST_F(Cli, GradcheckSmallModel) {
  for (const char* args : {"gradcheck --d 8 --k 8", "gradcheck --variant af-lstm --fusion corr --projection --normalization",
                           "gradcheck --variant atae-lstm --d 4 --k 6 --max-len 4"}) {
    const CliRun r = run(args);
    EXPECT_EQ(r.code, 0) << args << "\n" << r.out;
  }
}

TEST_F(Cli, SynthIsDeterministic) {
  ASSERT_EQ(run("synth --n 20 --seed 3 --out " + path("a.jsonl")).code, 0);
  ASSERT_EQ(run("synth --n 20 --seed 3 --out " + path("b.jsonl")).code, 0);
  ASSERT_EQ(run("synth --n 20 --seed 4 --out " + path("c.jsonl")).code, 0);
  EXPECT_EQ(slurp(path("a.jsonl")), slurp(path("b.jsonl")));
  EXPECT_NE(slurp(path("a.jsonl")), slurp(path("c.jsonl")));
  std::ifstream in(path("a.jsonl"));
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_TRUE(j.contains("sentence") && j.contains("aspect") && j.contains("label"));
    ++lines;
  }
  EXPECT_EQ(lines, 40);
}

TEST_F(Cli, TrainEvalAttendFlow) {
  ASSERT_EQ(run("synth --n 60 --seed 1 --out " + path("train.jsonl")).code, 0);
  ASSERT_EQ(run("synth --n 20 --seed 2 --out " + path("test.jsonl")).code, 0);
  const std::string out = path("run");
  const CliRun t = run("train --variant af-lstm --fusion conv --data " + path("train.jsonl") + " --dev-size 20 --test " + path("test.jsonl") +
                    " --k 8 --d 8 --max-len 9 --epochs 2 --patience 2 --seed 5 --out " + out);
  ASSERT_EQ(t.code, 0) << t.out;
  for (const char* f : {"model.ckpt", "history.jsonl", "manifest.json", "split.jsonl"}) EXPECT_TRUE(fs::exists(fs::path(out) / f)) << f;

  const auto manifest = nlohmann::json::parse(slurp(fs::path(out) / "manifest.json"));
  EXPECT_EQ(manifest["config"]["variant"], "af-lstm");
  EXPECT_TRUE(manifest.contains("results"));
  std::ifstream hist(fs::path(out) / "history.jsonl");
  std::string line;
  int records = 0;
  while (std::getline(hist, line)) {
    EXPECT_TRUE(nlohmann::json::accept(line));
    ++records;
  }
  EXPECT_EQ(records, 4);

  const std::string ckpt = (fs::path(out) / "model.ckpt").string();
  const CliRun e = run("eval --model " + ckpt + " --data " + path("test.jsonl"));
  EXPECT_EQ(e.code, 0) << e.out;
  EXPECT_NE(e.out.find("examples 40"), std::string::npos) << e.out;
  EXPECT_NE(e.out.find("accuracy"), std::string::npos);

  const std::string sentence = "\"the pasta was good but the service was slow\"";
  const CliRun a = run("attend --model " + ckpt + " --sentence " + sentence + " --aspect pasta --json");
  ASSERT_EQ(a.code, 0) << a.out;
  const auto j = nlohmann::json::parse(a.out);
  ASSERT_EQ(j["tokens"].size(), 9u);
  double total = 0.0;
  for (double w : j["weights"]) total += w;
  EXPECT_NEAR(total, 1.0, 1e-9);

  // Replaying the manifest with the same seed reproduces the checkpoint.
  const CliRun replay = run("train --manifest " + (fs::path(out) / "manifest.json").string() + " --out " + path("replay"));
  ASSERT_EQ(replay.code, 0) << replay.out;
  EXPECT_EQ(slurp(fs::path(out) / "model.ckpt"), slurp(fs::path(path("replay")) / "model.ckpt"));

  // A corrupted checkpoint is a runtime error, not a crash.
  std::string bytes = slurp(ckpt);
  bytes.resize(bytes.size() / 2);
  std::ofstream(path("bad.ckpt"), std::ios::binary) << bytes;
  EXPECT_EQ(run("eval --model " + path("bad.ckpt") + " --data " + path("test.jsonl")).code, 1);
  EXPECT_EQ(run("eval --model " + path("missing.ckpt") + " --data " + path("test.jsonl")).code, 1);
}

TEST_F(Cli, AttendNeedsAttentionVariant) {
  ASSERT_EQ(run("synth --n 20 --seed 1 --out " + path("train.jsonl")).code, 0);
  const std::string out = path("run");
  ASSERT_EQ(run("train --variant lstm --data " + path("train.jsonl") + " --dev-size 10 --k 4 --d 4 --max-len 9 --epochs 1 --patience 1 --out " + out).code, 0);
  const CliRun a = run("attend --model " + (fs::path(out) / "model.ckpt").string() + " --sentence \"the food was good\" --aspect food");
  EXPECT_EQ(a.code, 1) << a.out;
}

TEST_F(Cli, BadCorpusIsRuntimeError) {
  std::ofstream(path("bad.jsonl")) << "{\"sentence\": \"a\", \"aspect\": \"a\", \"label\": \"mixed\"}\n";
  const CliRun r = run("train --variant lstm --data " + path("bad.jsonl") + " --out " + path("run"));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("line 1"), std::string::npos) << r.out;
}

int main(int argc, char** argv) {
  ::testing::InitGoogleTest(&argc, argv);
  if (argc < 2) {
    std::fprintf(stderr, "usage: test_cli <path-to-aflstm-binary>\n");
    return 2;
  }
  g_binary = fs::absolute(argv[1]).string();
  return RUN_ALL_TESTS();
}
