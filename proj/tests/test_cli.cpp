#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "support.hpp"

using namespace oncosynth::testing;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

Run cli(const std::string& args, const fs::path& scratch) {
  const auto log = scratch / "cli.log";
  const std::string cmd = std::string(ONCOSYNTH_CLI) + " " + args + " > " + log.string() + " 2>&1";
  const int st = std::system(cmd.c_str());
  return {WIFEXITED(st) ? WEXITSTATUS(st) : -1, slurp(log)};
}

// Small settings so a whole chain runs in seconds.
const char* kTiny =
    " --seed 7 --set data.labeled=3 --set data.unlabeled=4 --set data.test=2"
    " --set adv.stage1_epochs=1 --set adv.seg_patch=16 --set adv.seg_base=2 --set infer.window=16";

}  // namespace

TEST(Cli, UnknownConfigKeyExitsTwoAndNamesIt) {
  TempDir dir("cli");
  const auto r = cli("phantom-gen --out " + (dir.path() / "d").string() + " --set adv.lamda_cls=1", dir.path());
  EXPECT_EQ(r.code, 2) << r.out;
  EXPECT_NE(r.out.find("adv.lamda_cls"), std::string::npos) << r.out;
}

TEST(Cli, BadValueExitsTwo) {
  TempDir dir("cli");
  EXPECT_EQ(cli("phantom-gen --out " + (dir.path() / "d").string() + " --set gate.threshold=0", dir.path()).code, 2);
  EXPECT_EQ(cli("phantom-gen --out " + (dir.path() / "d").string() + " --set seg.epochs=x", dir.path()).code, 2);
}

TEST(Cli, TrainingWithoutSeedIsRejected) {
  TempDir dir("cli");
  const auto data = dir.path() / "data";
  ASSERT_EQ(cli("phantom-gen --seed 1 --set data.labeled=2 --set data.unlabeled=2 --set data.test=1 --out " +
                    data.string(),
                dir.path())
                .code,
            0);
  const auto r = cli("train-stage1 --data " + data.string() + " --out " + (dir.path() / "s1").string(), dir.path());
  EXPECT_EQ(r.code, 2) << r.out;
  EXPECT_NE(r.out.find("seed"), std::string::npos) << r.out;
}

TEST(Cli, EvalOfIdenticalDirsIsPerfect) {
  TempDir dir("cli");
  const auto data = dir.path() / "data";
  ASSERT_EQ(cli(std::string("phantom-gen") + kTiny + " --out " + data.string(), dir.path()).code, 0);
  const auto r = cli("eval --pred " + data.string() + " --gt " + data.string() + " --out " + (dir.path() / "ev").string(),
                     dir.path());
  ASSERT_EQ(r.code, 0) << r.out;
  const auto rep = json::parse(slurp(dir.path() / "ev" / "report.json"));
  EXPECT_DOUBLE_EQ(rep.at("dice").get<double>(), 100.0);
  EXPECT_TRUE(fs::exists(dir.path() / "ev" / "report.csv"));
  EXPECT_TRUE(fs::exists(dir.path() / "ev" / "run_manifest.json"));
}

// train -> infer -> eval twice: once from flags, once replaying each step's
// run manifest. Every report must match byte for byte.
TEST(Cli, ManifestReplayGivesIdenticalReports) {
  TempDir dir("cli");
  auto chain = [&](const fs::path& root, bool replay, const fs::path& first) {
    const auto data = root / "data";
    auto cfg = [&](const char* step) {
      return replay ? " --config " + (first / step / "run_manifest.json").string() : std::string(kTiny);
    };
    auto ok = [&](const std::string& args) {
      const auto r = cli(args, dir.path());
      EXPECT_EQ(r.code, 0) << args << "\n" << r.out;
    };
    ok("phantom-gen" + cfg("data") + " --out " + data.string());
    ok("train-stage1" + cfg("s1") + " --data " + (data / "manifest.json").string() + " --out " + (root / "s1").string());
    ok("infer" + cfg("pred") + " --model " + (root / "s1" / "segmenter.ckpt").string() + " --input " +
       (data / "manifest.json").string() + " --out " + (root / "pred").string());
    ok("eval" + cfg("ev") + " --pred " + (root / "pred").string() + " --gt " + data.string() + " --out " +
       (root / "ev").string());
  };
  const auto a = dir.path() / "a", b = dir.path() / "b";
  chain(a, false, a);
  chain(b, true, a);
  for (const char* f : {"report.json", "report.csv"}) {
    const auto x = slurp(a / "ev" / f), y = slurp(b / "ev" / f);
    EXPECT_FALSE(x.empty()) << f;
    EXPECT_EQ(x, y) << f;
  }
  EXPECT_EQ(slurp(a / "s1" / "stage1_log.jsonl"), slurp(b / "s1" / "stage1_log.jsonl"));
  const auto ma = json::parse(slurp(a / "s1" / "run_manifest.json"));
  const auto mb = json::parse(slurp(b / "s1" / "run_manifest.json"));
  EXPECT_EQ(ma.at("config_hash"), mb.at("config_hash"));
}
