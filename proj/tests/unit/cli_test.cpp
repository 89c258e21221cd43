#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "rvhate/ingestion.hpp"
#include "support/expect_error.hpp"
#include "support/synthetic.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string output;
};

Run run(const std::string& args) {
  const std::string cmd = std::string(RVHATE_CLI) + " " + args + " 2>&1";
  Run r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  std::array<char, 4096> buf{};
  std::size_t n;
  while ((n = fread(buf.data(), 1, buf.size(), p)) > 0) r.output.append(buf.data(), n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path write_data(const fs::path& dir, std::size_t n = 200) {
  const auto path = dir / "d.jsonl";
  rvhate::write_dataset(rvhate::synth::text_dataset(n, 5), path);
  return path;
}

const char* kFast = "--dim 64 --hidden 8 --epochs 2 --k 3 --rl-steps 64 --seeds 13";

}  // namespace

TEST(Cli, FeaturizeWritesOneRowPerLineAndIsReproducible) {
  const auto dir = scratch_dir();
  const auto data = write_data(dir, 30);
  const auto a = run("featurize --data " + data.string() + " --out " + (dir / "a.rvhe").string() + " --dim 512");
  ASSERT_EQ(a.code, 0) << a.output;
  const auto m = rvhate::read_embeddings(dir / "a.rvhe");
  EXPECT_EQ(m.count(), 30u);
  EXPECT_EQ(m.dim(), 512u);
  const auto b = run("featurize --data " + data.string() + " --out " + (dir / "b.rvhe").string() + " --dim 512");
  ASSERT_EQ(b.code, 0);
  EXPECT_EQ(slurp(dir / "a.rvhe"), slurp(dir / "b.rvhe"));
}

TEST(Cli, MissingInputExitsTwoAndNamesThePath) {
  const auto dir = scratch_dir();
  const auto missing = (dir / "nope.jsonl").string();
  const auto r = run("featurize --data " + missing + " --out " + (dir / "x.rvhe").string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find(missing), std::string::npos) << r.output;
}

TEST(Cli, ParseErrorsExitTwoWithTheLine) {
  const auto dir = scratch_dir();
  std::ofstream(dir / "bad.jsonl") << R"({"id":"a","text":"x","label":0,"split":"train"})" << '\n'
                                   << R"({"id":"b","text":"y","label":2,"split":"train"})" << '\n';
  const auto r = run("featurize --data " + (dir / "bad.jsonl").string() + " --out " + (dir / "x.rvhe").string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("line 2"), std::string::npos) << r.output;
  EXPECT_EQ(run("bogus").code, 2);
  EXPECT_EQ(run("pipeline --data " + (dir / "bad.jsonl").string() + " --out " + (dir / "o").string() +
                " --metric manhattan").code, 2);
}

TEST(Cli, TrainingFailureExitsThree) {
  const auto dir = scratch_dir();
  const auto data = write_data(dir);
  const auto r = run("train --data " + data.string() + " --out " + (dir / "m.rvhd").string() +
                     " --temperature 0 --dim 64");
  EXPECT_EQ(r.code, 3) << r.output;
}

TEST(Cli, TagDoesNotTouchItsInput) {
  const auto dir = scratch_dir();
  const auto data = write_data(dir, 40);
  const std::string before = slurp(data);
  const auto r = run("tag --data " + data.string() + " --out " + (dir / "aug.jsonl").string());
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_EQ(slurp(data), before);
  const auto aug = rvhate::load_dataset(dir / "aug.jsonl");
  EXPECT_GT(aug.size(), 40u);
}

TEST(Cli, TrainVoteEval) {
  const auto dir = scratch_dir();
  const auto data = write_data(dir).string();
  std::string heads;
  for (const char* m : {"M0", "M2"}) {
    const auto out = (dir / (std::string(m) + ".rvhd")).string();
    const auto r = run("train --data " + data + " --module " + m + " --out " + out +
                       " --dim 64 --hidden 8 --epochs 2 --k 3");
    ASSERT_EQ(r.code, 0) << r.output;
    heads += " " + out;
  }
  const auto v = run("vote --data " + data + " --dim 64 --rl-steps 64 --heads" + heads + " --out " + (dir / "v").string());
  ASSERT_EQ(v.code, 0) << v.output;
  EXPECT_TRUE(fs::exists(dir / "v" / "weights.csv"));
  const auto e = run("eval --data " + data + " --dim 64 --heads" + heads + " --weights 0.5 0.5 --out " + (dir / "e").string());
  ASSERT_EQ(e.code, 0) << e.output;
  EXPECT_NE(slurp(dir / "e" / "eval.csv").find("\nRV,1,"), std::string::npos);
}

TEST(Cli, PipelineSingleModule) {
  const auto dir = scratch_dir();
  const auto data = write_data(dir);
  const auto r = run("pipeline --data " + data.string() + " --out " + (dir / "out").string() + " --modules M0 " + kFast);
  ASSERT_EQ(r.code, 0) << r.output;
  const auto weights = slurp(dir / "out" / "weights.csv");
  EXPECT_NE(weights.find(",13,1.000000,0.000000,0.000000,0.000000,"), std::string::npos) << weights;
}

TEST(Cli, FlagsOverrideTheConfigFile) {
  const auto dir = scratch_dir();
  const auto data = write_data(dir);
  std::ofstream(dir / "run.json") << R"({"dataset": ")" << data.string()
                                  << R"(", "modules": ["M0", "M3"], "rl_steps": 5000, "seeds": [1, 2, 3]})";
  const auto r = run("pipeline --config " + (dir / "run.json").string() + " --out " + (dir / "out").string() + " " +
                     kFast);
  ASSERT_EQ(r.code, 0) << r.output;
  const auto manifest = slurp(dir / "out" / "manifest.json");
  EXPECT_NE(manifest.find("\"rl_steps\": 64"), std::string::npos) << manifest;
  EXPECT_NE(manifest.find("\"M3\""), std::string::npos);
  EXPECT_EQ(manifest.find("\"M1\""), std::string::npos);
}

TEST(Cli, FailingStageIsNamed) {
  const auto dir = scratch_dir();
  const auto data = write_data(dir);
  rvhate::write_embeddings(rvhate::EmbeddingMatrix::from_rows(2, std::vector<double>{1, 0}), dir / "x.rvhe");
  const auto r = run("pipeline --data " + data.string() + " --embeddings " + (dir / "x.rvhe").string() + " --out " +
                     (dir / "out").string() + " " + kFast);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("stage 'embed'"), std::string::npos) << r.output;
}
