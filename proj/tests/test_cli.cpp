#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("baanet_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

Result run(const std::string& args, const fs::path& dir) {
  const fs::path out = dir / "stdout.txt", err = dir / "stderr.txt";
  const std::string cmd = std::string(BAANET_CLI_PATH) + " " + args + " >" + out.string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

std::map<std::string, std::string> tree(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = slurp(e.path());
  return files;
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

// Small dataset shared by the train/eval tests.
fs::path tiny_dataset(const fs::path& dir, double ratio = 0.5) {
  const fs::path data = dir / "data";
  const Result r = run("--seed 3 --out " + data.string() + " gen-data --n 16 --train-ratio " + std::to_string(ratio), dir);
  EXPECT_EQ(r.code, 0) << r.err;
  return data;
}

}  // namespace

TEST(Cli, GenDataIsByteIdentical) {
  const fs::path dir = scratch("gen");
  const Result a = run("gen-data --n 20 --seed 7 --out " + (dir / "a").string(), dir);
  const Result b = run("gen-data --n 20 --seed 7 --out " + (dir / "b").string(), dir);
  ASSERT_EQ(a.code, 0) << a.err;
  ASSERT_EQ(b.code, 0) << b.err;
  const auto ta = tree(dir / "a"), tb = tree(dir / "b");
  EXPECT_EQ(ta.size(), 41u);  // manifest + rgb and tir per sample
  EXPECT_TRUE(ta == tb);
  EXPECT_NE(a.out.find("16 train / 4 test"), std::string::npos) << a.out;
}

TEST(Cli, GenDataRejectsZeroSamples) {
  const fs::path dir = scratch("gen0");
  const Result r = run("gen-data --n 0 --out " + (dir / "d").string(), dir);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("Usage"), std::string::npos) << r.err;
}

TEST(Cli, UsageErrors) {
  const fs::path dir = scratch("usage");
  EXPECT_EQ(run("", dir).code, 2);
  EXPECT_EQ(run("frobnicate", dir).code, 2);
  EXPECT_EQ(run("train --fusion late_fusion", dir).code, 2);
  EXPECT_EQ(run("train --epochs 0", dir).code, 2);
  EXPECT_EQ(run("gen-data --n 5 --train-ratio 1.5 --out x", dir).code, 2);
  EXPECT_EQ(run("train", dir).code, 2);  // no dataset
  std::ofstream(dir / "bad.json") << R"({"train.epochz": 3})";
  EXPECT_EQ(run("--config " + (dir / "bad.json").string() + " train", dir).code, 2);
}

TEST(Cli, TrainEvalDeterministicWithSchemas) {
  const fs::path dir = scratch("train");
  const fs::path data = tiny_dataset(dir);
  const std::string common = " train --data " + data.string() + " --epochs 2 --batch-size 4";
  const Result a = run("--seed 11 --out " + (dir / "r1").string() + common, dir);
  const Result b = run("--seed 11 --out " + (dir / "r2").string() + common, dir);
  ASSERT_EQ(a.code, 0) << a.err;
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_TRUE(tree(dir / "r1") == tree(dir / "r2"));
  const auto metrics = lines(slurp(dir / "r1" / "metrics.csv"));
  ASSERT_EQ(metrics.size(), 3u);
  EXPECT_EQ(metrics[0], "epoch,L_I,L_cls1,L_cls2,L_reg1,L_reg2,total");

  const std::string ck = (dir / "r1" / "checkpoint.baac").string();
  const Result e1 = run("--out " + (dir / "e1").string() + " eval --checkpoint " + ck + " --data " + data.string(), dir);
  const Result e2 = run("--out " + (dir / "e2").string() + " eval --checkpoint " + ck + " --data " + data.string(), dir);
  ASSERT_EQ(e1.code, 0) << e1.err;
  ASSERT_EQ(e2.code, 0) << e2.err;
  EXPECT_TRUE(tree(dir / "e1") == tree(dir / "e2"));
  const auto eval = lines(slurp(dir / "e1" / "eval.csv"));
  ASSERT_FALSE(eval.empty());
  EXPECT_EQ(eval[0], "subset,fppi,miss_rate");
  bool saw_all = false;
  for (const auto& l : eval) {
    if (l.rfind("summary,all,", 0) == 0) saw_all = true;
    EXPECT_EQ(std::count(l.begin(), l.end(), ','), 2) << l;
  }
  EXPECT_TRUE(saw_all);
  EXPECT_EQ(lines(slurp(dir / "e1" / "detections.csv"))[0], "image_id,cx,cy,w,h,score");
  EXPECT_NE(e1.out.find("all"), std::string::npos);
}

TEST(Cli, QuietSuppressesProgress) {
  const fs::path dir = scratch("quiet");
  const Result r = run("--quiet --seed 1 --out " + (dir / "d").string() + " gen-data --n 4", dir);
  EXPECT_EQ(r.code, 0);
  EXPECT_TRUE(r.out.empty()) << r.out;
}

TEST(Cli, EvalMissingCheckpointIsIoError) {
  const fs::path dir = scratch("nock");
  const fs::path data = tiny_dataset(dir);
  const Result r = run("eval --checkpoint " + (dir / "missing.baac").string() + " --data " + data.string(), dir);
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("missing.baac"), std::string::npos) << r.err;
}

TEST(Cli, EvalEmptyTestSplitIsUsageError) {
  const fs::path dir = scratch("notest");
  const fs::path data = tiny_dataset(dir, 1.0);
  const Result t = run("--seed 2 --out " + (dir / "r").string() + " train --epochs 1 --data " + data.string(), dir);
  ASSERT_EQ(t.code, 0) << t.err;
  const Result r = run("eval --checkpoint " + (dir / "r" / "checkpoint.baac").string() + " --data " + data.string(), dir);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("empty test split"), std::string::npos) << r.err;
}

TEST(Cli, CorruptCheckpointIsIoError) {
  const fs::path dir = scratch("corrupt");
  const fs::path data = tiny_dataset(dir);
  std::ofstream(dir / "bad.baac") << "BAAC garbage";
  EXPECT_EQ(run("eval --checkpoint " + (dir / "bad.baac").string() + " --data " + data.string(), dir).code, 3);
}

TEST(Cli, GradcheckDefaultPasses) {
  const fs::path dir = scratch("gc");
  const Result r = run("gradcheck", dir);
  EXPECT_EQ(r.code, 0) << r.out << r.err;
  EXPECT_EQ(r.out.find("FAIL"), std::string::npos);
  EXPECT_NE(r.out.find("model"), std::string::npos);
}

TEST(Cli, GradcheckModuleLimitsScope) {
  const fs::path dir = scratch("gcgate");
  const Result r = run("gradcheck --module gate", dir);
  EXPECT_EQ(r.code, 0) << r.err;
  std::size_t checks = 0;
  for (const auto& l : lines(r.out)) {
    if (l.rfind("PASS", 0) != 0) continue;
    ++checks;
    EXPECT_NE(l.find(" gate "), std::string::npos) << l;
  }
  EXPECT_EQ(checks, 1u);
}

TEST(Cli, GradcheckZeroToleranceFails) {
  const fs::path dir = scratch("gc0");
  const Result r = run("gradcheck --module gate --tolerance 0", dir);
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("FAIL"), std::string::npos);
  EXPECT_NE(r.err.find("worst rel err"), std::string::npos) << r.err;
}

TEST(Cli, AblateRowCount) {
  const fs::path dir = scratch("ablate");
  const fs::path data = tiny_dataset(dir);
  const Result r = run("--seed 4 --out " + (dir / "o").string() + " ablate --data " + data.string() +
                           " --epochs 1 --batch-size 4 --seeds 2",
                       dir);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = lines(slurp(dir / "o" / "ablation.csv"));
  ASSERT_FALSE(rows.empty());
  EXPECT_EQ(rows[0], "mode,seed,subset,mr2,spread");
  // Per mode: every subset present in the test split, once per seed plus a mean row.
  std::map<std::string, std::size_t> per_seed, mean;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const std::string& l = rows[i];
    const std::string mode = l.substr(0, l.find(','));
    (l.find(",mean,") != std::string::npos ? mean : per_seed)[mode]++;
  }
  ASSERT_EQ(per_seed.size(), 3u);
  for (const auto& [mode, count] : per_seed) {
    EXPECT_EQ(count, 2 * mean[mode]) << mode;
    EXPECT_GE(mean[mode], 3u) << mode;  // all, day, night at least
  }
}

TEST(Cli, NumericAbortExitsFour) {
  const fs::path dir = scratch("nan");
  const fs::path data = tiny_dataset(dir);
  const Result r = run("--seed 1 --out " + (dir / "r").string() + " train --epochs 3 --lr 1e300 --data " +
                           data.string(),
                       dir);
  EXPECT_EQ(r.code, 4) << r.out << r.err;
  EXPECT_NE(r.err.find("not finite"), std::string::npos) << r.err;
}
