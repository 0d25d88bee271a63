#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "msm/cli/app.hpp"
#include "msm/cli/run_config.hpp"
#include "msm/core/io.hpp"
#include "msm/eval/metrics.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace msm;

namespace {

const json kTinyConfig = json::parse(R"({
  "seed": 3,
  "vq": {
    "model": {"width": 16, "latent_dim": 8, "codebook_size": 32, "extra_layers": 1,
              "scale_ratios": [0.125, 1.0], "res_blocks": 1, "attention": false},
    "train": {"epochs": 1, "batch_size": 32, "window": 32, "lr": 1e-3}
  },
  "t2m": {
    "model": {"layers": 1, "dim": 16, "ff": 32, "heads": 2, "codebook_size": 32, "text_dim": 8,
              "max_positions": 32},
    "train": {"epochs": 1, "batch_size": 32}
  },
  "eval": {
    "model": {"layers": 1, "latent": 16, "heads": 2, "ff": 32, "text_dim": 8},
    "train": {"epochs": 1, "batch_size": 32},
    "pool_size": 10
  },
  "sampling": {"iterations": 3}
})");

class CliTest : public ::testing::Test {
 protected:
  static fs::path dir() { return fs::temp_directory_path() / "msm_cli_test"; }
  static fs::path data() { return dir() / "data"; }
  static fs::path run_dir() { return dir() / "run"; }
  static fs::path config() { return dir() / "tiny.json"; }

  static int msm(std::vector<std::string> args) {
    std::vector<std::string> full = {"msm", "-c", config().string(), "--run", run_dir().string(),
                                     "--set", "data.root=" + data().string()};
    full.insert(full.end(), args.begin(), args.end());
    return cli::run(full);
  }

  static void SetUpTestSuite() {
    fs::remove_all(dir());
    fs::create_directories(dir());
    io::write_json(config(), kTinyConfig);
    for (const char* cmd : {"extract-features", "fit-norm", "train-vq", "tokenize", "train-t2m", "train-eval"}) {
      if (std::string(cmd) == "extract-features") {
        ASSERT_EQ(msm({"synth-data", "--frames", "33", "--long-takes", "1", "--take-seconds", "30"}), 0);
        ASSERT_EQ(msm({"validate-data"}), 0);
      }
      ASSERT_EQ(msm({cmd}), 0) << cmd;
    }
  }
};

TEST_F(CliTest, SummaryRecordsProvenance) {
  const json s = io::read_json(run_dir() / "summaries" / "train-vq.json");
  EXPECT_EQ(s.at("command"), "train-vq");
  EXPECT_EQ(s.at("seed"), 3);
  EXPECT_EQ(s.at("config_hash").get<std::string>().size(), 40u);
  EXPECT_EQ(s.at("input_hash").get<std::string>().size(), 40u);
  EXPECT_TRUE(s.at("results").contains("train_mse"));
  EXPECT_TRUE(fs::exists(run_dir() / "vq"));
}

TEST_F(CliTest, UnknownConfigKeyExitsWithConfigCode) {
  EXPECT_EQ(msm({"--set", "vq.model.widht=8", "fit-norm"}), cli::kExitConfig);
  EXPECT_EQ(msm({"--set", "vq.train.seed=4", "fit-norm"}), cli::kExitConfig);
  EXPECT_EQ(cli::run({"msm", "-c", (dir() / "absent.json").string(), "fit-norm"}), cli::kExitConfig);
  EXPECT_EQ(cli::run({"msm", "no-such-command"}), cli::kExitConfig);
}

TEST_F(CliTest, MissingArtifactExitsWithItsCode) {
  EXPECT_EQ(cli::run({"msm", "--run", (dir() / "empty_run").string(), "--set", "data.root=" + data().string(),
                      "tokenize"}),
            cli::kExitMissingArtifact);
}

TEST_F(CliTest, InvalidDatasetExitsWithValidationCode) {
  const fs::path bad = dir() / "bad_data";
  fs::create_directories(bad / "motions");
  std::ofstream(bad / "motions" / "broken.bvh") << "HIERARCHY\nnonsense\n";
  EXPECT_EQ(cli::run({"msm", "--run", (dir() / "bad_run").string(), "--set", "data.root=" + bad.string(),
                      "validate-data"}),
            cli::kExitDataValidation);
}

TEST_F(CliTest, OverridesChangeTheConfigHash) {
  const auto a = cli::load_run_config(config(), {});
  const auto b = cli::load_run_config(config(), {"sampling.cfg_scale=2.5"});
  const auto c = cli::load_run_config(config(), {"threads=1"});
  EXPECT_EQ(b.sampling.cfg_scale, 2.5);
  EXPECT_NE(a.hash(), b.hash());
  EXPECT_EQ(a.hash(), c.hash());
  EXPECT_EQ(a.vq_train.seed, 3u);
  EXPECT_EQ(a.t2m_train.seed, 4u);
}

TEST_F(CliTest, GenerateIsDeterministicForAFixedSeed) {
  const fs::path p1 = dir() / "gen_a", p2 = dir() / "gen_b", p3 = dir() / "gen_c";
  ASSERT_EQ(msm({"generate", "--text", "a person walks forward", "--frames", "32", "--out", p1.string()}), 0);
  ASSERT_EQ(msm({"generate", "--text", "a person walks forward", "--frames", "32", "--out", p2.string()}), 0);
  ASSERT_EQ(msm({"--seed", "11", "generate", "--text", "a person walks forward", "--frames", "32", "--out",
                 p3.string()}),
            0);
  const std::string a = io::read_file(p1.string() + ".tensor");
  EXPECT_EQ(a, io::read_file(p2.string() + ".tensor"));
  EXPECT_EQ(io::read_file(p1.string() + ".bvh"), io::read_file(p2.string() + ".bvh"));
  EXPECT_NE(a, io::read_file(p3.string() + ".tensor"));
  const json trace = io::read_json(p1.string() + ".json");
  EXPECT_EQ(trace.at("frames"), 32);
}

TEST_F(CliTest, GroundTruthEvaluationHasZeroFid) {
  ASSERT_EQ(msm({"evaluate", "--ground-truth", "--out", (dir() / "gt.json").string()}), 0);
  const json report = io::read_json(dir() / "gt.json");
  EXPECT_NO_THROW(eval::validate_report(report));
  bool saw_fid = false;
  for (const auto& m : report.at("metrics")) {
    EXPECT_EQ(m.at("n_repeats"), 20);
    if (m.at("metric") == "fid") {
      saw_fid = true;
      EXPECT_LT(m.at("value").get<double>(), 1e-4);
    }
  }
  EXPECT_TRUE(saw_fid);
}

TEST_F(CliTest, GeneratedEvaluationReportsEveryMetric) {
  ASSERT_EQ(msm({"generate", "--split", "test", "--repeats", "2"}), 0);
  ASSERT_EQ(msm({"evaluate"}), 0);
  const json report = io::read_json(run_dir() / "reports" / "evaluate.json");
  std::set<std::string> names;
  for (const auto& m : report.at("metrics")) names.insert(m.at("metric").get<std::string>());
  for (const char* want : {"fid", "r_precision_top1", "r_precision_top3", "mm_dist", "clip_score", "diversity",
                           "mmodality"}) {
    EXPECT_TRUE(names.count(want)) << want;
  }
  EXPECT_EQ(msm({"--set", "eval.pool_size=50", "evaluate"}), cli::kExitConfig);
}

TEST_F(CliTest, CapacityProbeAndReconstruct) {
  ASSERT_EQ(msm({"capacity-probe"}), 0);
  EXPECT_TRUE(fs::exists(run_dir() / "reports" / "capacity_probe.csv"));
  ASSERT_EQ(msm({"reconstruct", "--split", "val"}), 0);
  const json s = io::read_json(run_dir() / "summaries" / "reconstruct.json");
  EXPECT_GT(s.at("results").at("mse").get<double>(), 0.0);
}

TEST_F(CliTest, SegmentWritesPartitions) {
  ASSERT_EQ(msm({"segment"}), 0);
  const json seg = io::read_json(run_dir() / "segments" / "take_00.json");
  const auto& segs = seg.at("segments");
  ASSERT_FALSE(segs.empty());
  EXPECT_EQ(segs.front().at("start"), 0);
  for (std::size_t i = 1; i < segs.size(); ++i) EXPECT_EQ(segs[i].at("start"), segs[i - 1].at("end"));
  EXPECT_EQ(segs.back().at("end"), seg.at("frames"));
}

TEST_F(CliTest, RewritePromptOfflineKeepsText) {
  ASSERT_EQ(msm({"rewrite-prompt", "--text", "wave hello"}), 0);
  const json s = io::read_json(run_dir() / "summaries" / "rewrite-prompt.json");
  EXPECT_EQ(s.at("results").at("text"), "wave hello");
  EXPECT_EQ(s.at("results").at("duration_s"), 8.0);
  EXPECT_EQ(s.at("results").at("offline"), true);
}

}  // namespace
