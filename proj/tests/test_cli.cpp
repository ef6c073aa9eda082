#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

const fs::path kWork = fs::temp_directory_path() / "mobllm-cli-test";

// Exit status of the CLI with stdout and stderr discarded.
int cli(const std::string& args) {
  const std::string cmd = std::string(MOBLLM_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string tiny() {
  const fs::path conf = kWork / "tiny.conf";
  std::ofstream(conf) << "[synth]\nusers=4\npois=12\nsequences=40\ngroups=2\n"
                         "[ppel]\nd=8\n[vimn]\nhidden=8\nr=2\n[htpp]\nK=2\n"
                         "[backbone]\nlayers=1\nheads=2\nffn_mult=2\n[heads]\nk_mix=2\n"
                         "[train]\nmax_epochs=2\nbatch_size=8\n";
  return "--config " + conf.string();
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    fs::remove_all(kWork);
    fs::create_directories(kWork);
  }
};

}  // namespace

TEST_F(Cli, UsageErrorsExitOne) {
  EXPECT_EQ(cli(""), 1);
  EXPECT_EQ(cli("bogus"), 1);
  EXPECT_EQ(cli("train --data x"), 1);
  EXPECT_EQ(cli("synth --out " + (kWork / "s.json").string() + " --set nosuch.key=1"), 1);
  EXPECT_EQ(cli("train --data x --out y --task xx"), 1);
  EXPECT_EQ(cli("--help"), 0);
}

TEST_F(Cli, DataErrorsExitTwo) {
  EXPECT_EQ(cli("train --data /nonexistent/a.json --out " + (kWork / "r").string()), 2);
  EXPECT_EQ(cli("preprocess --data /nonexistent/raw.tsv --out " + (kWork / "p.json").string()), 2);
  // Every user falls below the record threshold.
  const fs::path raw = kWork / "raw.tsv";
  std::ofstream(raw) << "u1\t2012-04-03T18:00:09Z\t40.7\t-73.9\tp1\tBar\n"
                        "u1\t2012-04-03T19:00:09Z\t40.7\t-73.9\tp2\tCafe\n";
  EXPECT_EQ(cli("preprocess --data " + raw.string() + " --out " + (kWork / "p.json").string()), 2);
}

TEST_F(Cli, SynthTrainEvalAreReproducible) {
  const std::string c = tiny();
  const fs::path a1 = kWork / "a1.json", a2 = kWork / "a2.json";
  ASSERT_EQ(cli("synth " + c + " --out " + a1.string()), 0);
  ASSERT_EQ(cli("synth " + c + " --out " + a2.string()), 0);
  EXPECT_EQ(slurp(a1), slurp(a2));
  EXPECT_NE(slurp(a1).find("\"mobllm-ds/1\""), std::string::npos);

  const fs::path r1 = kWork / "r1", r2 = kWork / "r2";
  ASSERT_EQ(cli("train " + c + " --data " + a1.string() + " --task lp --seed 1 --ablate no_htpp --out " + r1.string()), 0);
  ASSERT_EQ(cli("train " + c + " --data " + a1.string() + " --task lp --seed 1 --ablate no_htpp --out " + r2.string()), 0);
  for (const char* f : {"history.jsonl", "history.tsv", "report.json", "params.bin", "config.txt"})
    EXPECT_EQ(slurp(r1 / f), slurp(r2 / f)) << f;
  EXPECT_NE(slurp(r1 / "config.txt").find("train.ablate=no_htpp"), std::string::npos);

  ASSERT_EQ(cli("eval --data " + a1.string() + " --run " + r1.string()), 0);
  const std::string eval = slurp(r1 / "eval.json");
  const std::string report = slurp(r1 / "report.json");
  EXPECT_EQ(eval.substr(eval.find("\"metrics\"")), report.substr(report.find("\"metrics\"")));

  fs::remove(r2 / "params.bin");
  EXPECT_EQ(cli("eval --data " + a1.string() + " --run " + r2.string()), 2);
}

TEST_F(Cli, FewShotAndAblateLayout) {
  const std::string c = tiny();
  const fs::path a = kWork / "fa.json";
  ASSERT_EQ(cli("synth " + c + " --out " + a.string()), 0);
  const fs::path few = kWork / "few";
  ASSERT_EQ(cli("fewshot " + c + " --data " + a.string() + " --task tp --out " + few.string()), 0);
  for (const char* d : {"frac-0.01", "frac-0.05", "frac-0.2"}) EXPECT_TRUE(fs::exists(few / d / "report.json")) << d;
  EXPECT_TRUE(fs::exists(few / "fewshot.tsv"));
  const fs::path abl = kWork / "abl";
  ASSERT_EQ(cli("ablate " + c + " --data " + a.string() + " --task tul --ablate no_vimn --out " + abl.string()), 0);
  EXPECT_TRUE(fs::exists(abl / "full" / "report.json"));
  EXPECT_TRUE(fs::exists(abl / "no_vimn" / "report.json"));
  EXPECT_FALSE(fs::exists(abl / "no_htpp"));
  EXPECT_TRUE(fs::exists(abl / "ablation.tsv"));
}
