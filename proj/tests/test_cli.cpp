#include <flare/io.hpp>

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("flare_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  int run(const std::string& args) const {
    const std::string cmd = std::string(FLARE_CLI_PATH) + " " + args + " > " + (dir_ / "stdout.txt").string() +
                            " 2> " + (dir_ / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  std::string read(const std::string& name) const {
    std::ifstream in(dir_ / name, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  void write(const std::string& name, const std::string& content) const { flare::io::write_file(path(name), content); }

  fs::path dir_;
};

std::string reference_rows(bool predictions) {
  const std::uint64_t c[4][4] = {{5336, 471, 92, 69}, {807, 748, 105, 183}, {139, 130, 85, 64}, {1, 33, 12, 31}};
  std::string s = "id,label\n";
  std::size_t id = 0;
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      for (std::uint64_t n = 0; n < c[i][j]; ++n)
        s += "r" + std::to_string(id++) + "," + std::string(flare::name(flare::class_from_rank(predictions ? j : i))) + "\n";
  return s;
}

std::string csv_value(const std::string& csv, const std::string& key) {
  std::istringstream in(csv);
  for (std::string line; std::getline(in, line);)
    if (line.rfind(key + ",", 0) == 0) return line.substr(key.size() + 1);
  return "";
}

}  // namespace

TEST_F(CliTest, UsageErrors) {
  EXPECT_EQ(run(""), 1);
  EXPECT_EQ(run("gen-data --out-dir " + path("x")), 1);
  EXPECT_EQ(run("gen-data --n 0 --out-dir " + path("x")), 1);
  EXPECT_EQ(run("gen-data --n 10 --class-probs 0.5,0.5 --out-dir " + path("x")), 1);
  EXPECT_EQ(run("no-such-command"), 1);
}

TEST_F(CliTest, GenDataIsDeterministic) {
  ASSERT_EQ(run("gen-data --n 300 --seed 5 --feature-dim 4 --out-dir " + path("a")), 0);
  ASSERT_EQ(run("gen-data --n 300 --seed 5 --feature-dim 4 --out-dir " + path("b")), 0);
  for (const char* f : {"samples.csv", "events.csv", "labels.csv", "gen-data.config.txt"}) {
    EXPECT_FALSE(read(std::string("a/") + f).empty()) << f;
    EXPECT_EQ(read(std::string("a/") + f), read(std::string("b/") + f)) << f;
  }
  ASSERT_EQ(run("gen-data --n 300 --seed 6 --feature-dim 4 --out-dir " + path("c")), 0);
  EXPECT_NE(read("a/samples.csv"), read("c/samples.csv"));
}

TEST_F(CliTest, GenDataUnwritableDirectory) {
  write("file", "x");
  EXPECT_EQ(run("gen-data --n 10 --out-dir " + path("file") + "/sub"), 2);
}

TEST_F(CliTest, LabelReproducesGeneratedLabels) {
  ASSERT_EQ(run("gen-data --n 500 --seed 1 --feature-dim 3 --out-dir " + path("d")), 0);
  ASSERT_EQ(run("label --events " + path("d/events.csv") + " --samples " + path("d/samples.csv") + " --out " +
                path("out/labels.csv")),
            0);
  EXPECT_EQ(read("out/labels.csv"), read("d/labels.csv"));
  EXPECT_FALSE(read("out/label.config.txt").empty());
}

TEST_F(CliTest, LabelFixtures) {
  write("samples.csv", "id,timestamp,mask,f0\na,2011-09-06T00:00:00Z,1111111111,0\nb,2011-09-10T00:00:00Z,1111111111,0\n");
  write("events.csv", "peak_time,class\n2011-09-08T15:00:00Z,X\n");
  ASSERT_EQ(run("label --events " + path("events.csv") + " --samples " + path("samples.csv") + " --out " + path("l.csv")), 0);
  EXPECT_EQ(read("l.csv"), "id,label\na,X\nb,O\n");

  write("empty.csv", "peak_time,class\n");
  ASSERT_EQ(run("label --events " + path("empty.csv") + " --samples " + path("samples.csv") + " --out " + path("e.csv")), 0);
  EXPECT_EQ(read("e.csv"), "id,label\na,O\nb,O\n");

  EXPECT_EQ(run("label --events " + path("missing.csv") + " --samples " + path("samples.csv") + " --out " + path("m.csv")), 2);
}

TEST_F(CliTest, EvalPerfectAndConstant) {
  write("labels.csv", "id,label\na,O\nb,C\nc,M\nd,X\ne,O\n");
  ASSERT_EQ(run("eval --preds " + path("labels.csv") + " --labels " + path("labels.csv") + " --out-dir " + path("r1")), 0);
  const auto perfect = read("r1/report.csv");
  EXPECT_EQ(csv_value(perfect, "gmgs"), "1.0000000000");
  EXPECT_EQ(csv_value(perfect, "tss_ge_m"), "1.0000000000");
  EXPECT_EQ(csv_value(perfect, "bss_ge_m"), "n/a");
  EXPECT_FALSE(read("r1/report.txt").empty());
  EXPECT_FALSE(read("r1/eval.config.txt").empty());

  write("allO.csv", "id,label\na,O\nb,O\nc,O\nd,O\ne,O\n");
  ASSERT_EQ(run("eval --preds " + path("allO.csv") + " --labels " + path("labels.csv") + " --out-dir " + path("r2")), 0);
  const double g = std::stod(csv_value(read("r2/report.csv"), "gmgs"));
  EXPECT_NEAR(g, 0.0, 1e-10);
}

TEST_F(CliTest, EvalProbabilisticReportsBss) {
  write("labels.csv", "id,label\na,O\nb,C\nc,M\nd,X\n");
  write("preds.csv", "id,p_O,p_C,p_M,p_X\na,0.8,0.1,0.1,0\nb,0.1,0.7,0.2,0\nc,0,0.1,0.6,0.3\nd,0,0,0.2,0.8\n");
  ASSERT_EQ(run("eval --preds " + path("preds.csv") + " --labels " + path("labels.csv") + " --out-dir " + path("r")), 0);
  // BS = (0.01 + 0.04 + 0.01 + 0) / 4, reference 0.25.
  EXPECT_EQ(csv_value(read("r/report.csv"), "bss_ge_m"), "0.9400000000");
}

TEST_F(CliTest, EvalReferenceInfluenceOrdering) {
  write("labels.csv", reference_rows(false));
  write("preds.csv", reference_rows(true));
  ASSERT_EQ(run("eval --preds " + path("preds.csv") + " --labels " + path("labels.csv") + " --out-dir " + path("r")), 0);
  const auto csv = read("r/report.csv");
  EXPECT_EQ(csv_value(csv, "n"), "8306");
  EXPECT_EQ(csv_value(csv, "gmgs"), "0.3945490680");
  EXPECT_EQ(csv_value(csv, "tss_ge_m"), "0.3303957511");
  std::vector<std::string> keys;
  std::istringstream in(csv);
  for (std::string line; std::getline(in, line);)
    if (line.rfind("influence_", 0) == 0) keys.push_back(line.substr(0, line.find(',')));
  ASSERT_EQ(keys.size(), 5u);
  EXPECT_EQ(keys[0], "influence_X_C");
}

TEST_F(CliTest, EvalIdMismatch) {
  write("labels.csv", "id,label\na,O\nb,X\n");
  write("preds.csv", "id,label\na,O\nc,X\n");
  EXPECT_EQ(run("eval --preds " + path("preds.csv") + " --labels " + path("labels.csv")), 2);
  EXPECT_NE(read("stderr.txt").find("'c'"), std::string::npos);
  EXPECT_EQ(run("eval --preds " + path("preds.csv") + " --labels " + path("labels.csv") + " --climatology 1,2"), 1);
}

TEST_F(CliTest, TrainWarmupAndDeterminism) {
  ASSERT_EQ(run("gen-data --n 600 --seed 3 --feature-dim 6 --separation 1.5 --stratified --class-probs 0.4,0.3,0.2,0.1 "
                "--out-dir " + path("d")),
            0);
  const std::string base = "train --data-dir " + path("d") +
                           " --set epochs=3 --set warmup_epochs=3 --set hidden_widths=8 --set fold_count=1"
                           " --set learning_rate=0.003 --set batch_size=32";
  ASSERT_EQ(run(base + " --out-dir " + path("t1")), 0) << read("stderr.txt");
  ASSERT_EQ(run(base + " --out-dir " + path("t2")), 0);
  for (const char* f : {"history.csv", "checkpoint.txt", "test_predictions.csv", "test_report.csv", "train.config.txt"})
    EXPECT_EQ(read(std::string("t1/") + f), read(std::string("t2/") + f)) << f;

  std::istringstream hist(read("t1/history.csv"));
  std::string line;
  std::getline(hist, line);
  EXPECT_EQ(line, "epoch,wce,ib_ce,wbss,ib_bss,total,val_gmgs,val_tss,val_bss");
  int rows = 0;
  while (std::getline(hist, line)) {
    const auto f = flare::io::split_csv(line);
    ASSERT_EQ(f.size(), 9u);
    EXPECT_EQ(f[2], "0.0000000000");
    EXPECT_EQ(f[4], "0.0000000000");
    ++rows;
  }
  EXPECT_EQ(rows, 3);
  EXPECT_NE(read("t1/train.config.txt").find("warmup_epochs=3"), std::string::npos);

  EXPECT_EQ(run("train --data-dir " + path("d") + " --out-dir " + path("t3") + " --set nope=1"), 1);
  EXPECT_EQ(run("train --data-dir " + path("missing") + " --out-dir " + path("t4")), 2);
}

TEST_F(CliTest, TrainConfigFileAndEnv) {
  ASSERT_EQ(run("gen-data --n 400 --seed 4 --feature-dim 4 --stratified --class-probs 0.4,0.3,0.2,0.1 --out-dir " +
                path("d")),
            0);
  write("run.cfg", "# small run\nepochs=2\nwarmup_epochs=1\nhidden_widths=4\nfold_count=1\n");
  ASSERT_EQ(run("train --config " + path("run.cfg") + " --data-dir " + path("d") + " --out-dir " + path("t")), 0)
      << read("stderr.txt");
  const auto echo = read("t/train.config.txt");
  EXPECT_NE(echo.find("epochs=2\n"), std::string::npos);
  EXPECT_NE(echo.find("hidden_widths=4\n"), std::string::npos);
  ASSERT_EQ(run("train --config " + path("run.cfg") + " --data-dir " + path("d") + " --out-dir " + path("u") +
                " --set epochs=3"),
            0);
  EXPECT_NE(read("u/train.config.txt").find("epochs=3\n"), std::string::npos);
}

TEST_F(CliTest, Gradcheck) {
  ASSERT_EQ(run("gradcheck --seed 1 --trials 100"), 0);
  const auto first = read("stdout.txt");
  EXPECT_NE(first.find("PASS"), std::string::npos);
  EXPECT_EQ(first.find("FAIL"), std::string::npos);
  ASSERT_EQ(run("gradcheck --seed 1 --trials 100"), 0);
  EXPECT_EQ(read("stdout.txt"), first);
  EXPECT_EQ(run("gradcheck --seed 1 --trials 20 --corrupt 1"), 3);
  EXPECT_NE(read("stdout.txt").find("FAIL"), std::string::npos);
  EXPECT_EQ(run("gradcheck --trials 0"), 1);
}
