#include <gtest/gtest.h>

#include <cstdlib>
#include <sstream>
#include <sys/wait.h>
#include <unistd.h>

#include "igs/cli.hpp"

using namespace igs;

namespace {

const fs::path kRoot = fs::temp_directory_path() / ("igs_cli_tests_" + std::to_string(::getpid()));

int run_binary(const std::string& args) {
  const std::string cmd = std::string(IGS_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

int run_inproc(std::vector<std::string> args, std::string* out_text = nullptr) {
  args.insert(args.begin(), "igs");
  std::vector<const char*> argv;
  for (const std::string& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_command(static_cast<int>(argv.size()), argv.data(), out, err);
  if (out_text) *out_text = out.str() + err.str();
  return code;
}

fs::path write_config(const std::string& name, const std::string& body) {
  fs::create_directories(kRoot);
  const fs::path p = kRoot / name;
  write_file_atomic(p, body);
  return p;
}

const char* kSmallConfig = R"({
  "scene": {"objects": 3, "classes": 3, "points_per_object": 60, "cameras": 6, "width": 32, "height": 32, "seed": 9},
  "train": {"total_steps": 60, "log_every": 0},
  "instantiate": {"samples": 40, "seed": 3}
})";

// One small end-to-end run shared by the pipeline tests.
class Pipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    fs::remove_all(run_dir());
    const std::string cfg = write_config("small.json", kSmallConfig).string();
    for (const char* stage : {"generate", "train", "instantiate", "associate", "query", "eval", "export-ply"})
      ASSERT_EQ(run_binary(std::string(stage) + " --config " + cfg + " --out " + run_dir().string()), 0) << stage;
  }
  static fs::path run_dir() { return kRoot / "pipeline"; }
};

}  // namespace

TEST_F(Pipeline, WritesEveryArtifact) {
  for (const char* f : {"scene.json", "points.igpc", "checkpoint.igck", "loss.csv", "instances.iglb",
                        "instance_features.igem", "instance_embeddings.igem", "query.json", "semantic.iglb",
                        "metrics.json", "instances.ply", "embeddings/masks.igem", "embeddings/classes.igem"})
    EXPECT_TRUE(fs::exists(run_dir() / f)) << f;
  const auto metrics = nlohmann::json::parse(read_file(run_dir() / "metrics.json"));
  ASSERT_TRUE(metrics.contains("instance"));
  const double miou = metrics["instance"]["miou"].get<double>();
  EXPECT_GE(miou, 0.0);
  EXPECT_LE(miou, 1.0);
  EXPECT_TRUE(metrics.contains("semantic"));
}

TEST_F(Pipeline, LabelsCoverEverySplat) {
  const Model model = decode_checkpoint(read_file(run_dir() / "checkpoint.igck"));
  const LabelFile lf = decode_labels(read_file(run_dir() / "instances.iglb"));
  EXPECT_EQ(lf.labels.size(), model.anchors.size() * kChildrenPerAnchor);
  for (std::uint32_t l : lf.labels) EXPECT_LT(l, lf.count);
}

TEST_F(Pipeline, LargerGammaNeverYieldsMoreInstances) {
  const std::string cfg = (kRoot / "small.json").string();
  std::size_t prev = std::numeric_limits<std::size_t>::max();
  for (const char* g : {"0.06", "0.18"}) {
    ASSERT_EQ(run_inproc({"instantiate", "--config", cfg, "--out", run_dir().string(), "--gamma", g}), 0);
    const std::size_t m = decode_labels(read_file(run_dir() / "instances.iglb")).count;
    EXPECT_LE(m, prev) << "gamma " << g;
    prev = m;
  }
}

TEST_F(Pipeline, QueryListsEveryClass) {
  const auto q = nlohmann::json::parse(read_file(run_dir() / "query.json"));
  const auto names = nlohmann::json::parse(read_file(run_dir() / "embeddings/classes.json"));
  EXPECT_EQ(names.size(), 3u);
  const std::string dumped = q.dump();
  for (const auto& n : names) EXPECT_NE(dumped.find(n.get<std::string>()), std::string::npos);
}

TEST(Cli, HelpExitsZero) {
  EXPECT_EQ(run_binary("--help"), 0);
  EXPECT_EQ(run_inproc({"train", "--help"}), 0);
}

TEST(Cli, UnknownSubcommandOrFlagIsUsage) {
  EXPECT_EQ(run_binary("frobnicate"), 2);
  EXPECT_EQ(run_inproc({"instantiate", "--no-such-flag"}), 2);
}

TEST(Cli, MalformedConfigExitsTwoWithoutArtifacts) {
  const fs::path out = kRoot / "malformed";
  fs::remove_all(out);
  const fs::path bad = write_config("bad.json", "{\"scene\": {\"objects\": 3,");
  EXPECT_EQ(run_binary("generate --config " + bad.string() + " --out " + out.string()), 2);
  EXPECT_FALSE(fs::exists(out / "scene.json"));
}

TEST(Cli, UnknownConfigKeyExitsTwo) {
  const fs::path out = kRoot / "unknown_key";
  fs::remove_all(out);
  const fs::path bad = write_config("unknown.json", R"({"scene": {"objcets": 3}})");
  std::string text;
  EXPECT_EQ(run_inproc({"generate", "--config", bad.string(), "--out", out.string()}, &text), 2);
  EXPECT_NE(text.find("objcets"), std::string::npos);
  EXPECT_FALSE(fs::exists(out / "scene.json"));
}

TEST(Cli, MissingRunDirectoryExitsThree) {
  const fs::path out = kRoot / "does_not_exist";
  fs::remove_all(out);
  EXPECT_EQ(run_binary("train --out " + out.string()), 3);
  EXPECT_EQ(run_binary("eval --out " + out.string()), 3);
}

TEST(Cli, SelftestPasses) {
  std::string text;
  EXPECT_EQ(run_inproc({"selftest"}, &text), 0) << text;
  EXPECT_EQ(text.find("FAIL"), std::string::npos) << text;
}
