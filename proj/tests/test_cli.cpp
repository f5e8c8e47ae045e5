#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include <json.hpp>

#include "mmem/cli.hpp"
#include "mmem/datamodel.hpp"
#include "mmem/wsiprep.hpp"

using namespace mmem;
namespace fs = std::filesystem;

namespace {

const fs::path kData = MMEM_DATA_DIR;

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path fresh_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

}  // namespace

TEST(Cli, HelpAndUsageErrors) {
  EXPECT_EQ(cli({"--help"}).code, 0);
  EXPECT_EQ(cli({"no-such-command"}).code, kExitConfig);
  EXPECT_EQ(cli({"cv"}).code, kExitConfig);
}

TEST(Cli, SynthIsReproducibleAndReadable) {
  const auto root = fresh_dir("mmem_cli_synth");
  const std::string spec = (kData / "synth3.cfg").string();
  ASSERT_EQ(cli({"synth", spec, "--seed", "7", "--out", (root / "a").string()}).code, 0);
  ASSERT_EQ(cli({"synth", spec, "--seed", "7", "--out", (root / "b").string()}).code, 0);
  for (const auto& e : fs::directory_iterator(root / "a")) {
    EXPECT_EQ(slurp(e.path()), slurp(root / "b" / e.path().filename())) << e.path();
  }
  const auto cohort = parse_cohort_csv(root / "a" / "outcomes.csv", Endpoint::kOs);
  EXPECT_EQ(cohort.outcomes.size(), 300u);
  EXPECT_EQ(parse_feature_csv(root / "a" / "clinical.csv").rows(), 300);

  ASSERT_EQ(cli({"synth", "--seed", "3", "--out", (root / "d").string()}).code, 0);
  EXPECT_FALSE(parse_embedding_container(root / "d" / "wsi.emb").empty());

  std::ofstream(root / "zero.cfg") << "schema = mmem-synth/1\nn_patients = 0\nmodality.a.n_noise = 1\n";
  EXPECT_EQ(cli({"synth", (root / "zero.cfg").string(), "--out", (root / "z").string()}).code, kExitConfig);
  fs::remove_all(root);
}

TEST(Cli, CvOnBundledFixture) {
  const auto root = fresh_dir("mmem_cli_cv");
  const CliRun r = cli({"cv", (kData / "fixture" / "run.cfg").string(), "--out", root.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto report = nlohmann::json::parse(slurp(root / "report.json"));
  // Two tabular modalities, one bag modality, two fusion variants, two endpoints.
  EXPECT_EQ(report["rows"].size(), (3u + 2u) * 2u);
  const auto manifest = nlohmann::json::parse(slurp(root / "manifest.json"));
  EXPECT_EQ(manifest["schema"], "mmem-manifest/1");
  EXPECT_EQ(manifest["failed_folds"].size(), 0u);
  EXPECT_TRUE(fs::exists(root / "predictions_os.csv"));
  EXPECT_TRUE(fs::exists(root / "predictions_dfs.csv"));
  EXPECT_TRUE(fs::exists(root / "km.csv"));
  EXPECT_TRUE(fs::exists(root / "roc.csv"));
  EXPECT_TRUE(fs::exists(root / "folds" / "os_fold4.json"));
  EXPECT_TRUE(fs::exists(root / "plots" / "km_os_MMEM.svg"));
  fs::remove_all(root);
}

TEST(Cli, MissingEmbeddingFileNamesThePath) {
  const auto root = fresh_dir("mmem_cli_missing");
  for (const char* f : {"clinical.csv", "genomics.csv", "outcomes.csv", "run.cfg"}) {
    fs::copy_file(kData / "fixture" / f, root / f);
  }
  const CliRun r = cli({"cv", (root / "run.cfg").string(), "--out", (root / "out").string()});
  EXPECT_EQ(r.code, kExitConfig);
  EXPECT_NE(r.err.find((root / "wsi.emb").string()), std::string::npos) << r.err;
  fs::remove_all(root);
}

TEST(Cli, PrepWsiReportsCorruptImages) {
  const auto root = fresh_dir("mmem_cli_wsi");
  fs::create_directories(root / "img");
  for (int i = 0; i < 3; ++i) {
    RgbImage img(1100, 1100);
    img.fill_rect(100 * i, 80, 700 + 100 * i, 900, {190, 70, 140});
    write_png(root / "img" / ("s" + std::to_string(i) + ".png"), img);
  }
  CliRun r = cli({"prep-wsi", (root / "img").string(), "--out", (root / "ok").string()});
  EXPECT_EQ(r.code, 0) << r.err;
  std::vector<std::size_t> default_counts;
  for (int i = 0; i < 3; ++i) {
    const auto j = nlohmann::json::parse(slurp(root / "ok" / ("s" + std::to_string(i) + ".tiles.json")));
    default_counts.push_back(j["coords"].size());
  }

  r = cli({"prep-wsi", (root / "img").string(), "--min-tissue", "0.9", "--out", (root / "strict").string()});
  EXPECT_EQ(r.code, 0);
  for (int i = 0; i < 3; ++i) {
    const auto j = nlohmann::json::parse(slurp(root / "strict" / ("s" + std::to_string(i) + ".tiles.json")));
    EXPECT_LE(j["coords"].size(), default_counts[static_cast<std::size_t>(i)]);
  }

  fs::remove(root / "img" / "s2.png");
  std::ofstream(root / "img" / "s2.png") << "garbage";
  r = cli({"prep-wsi", (root / "img").string(), "--out", (root / "bad").string()});
  EXPECT_EQ(r.code, kExitPartialInput);
  EXPECT_TRUE(fs::exists(root / "bad" / "s0.tiles.json"));
  EXPECT_TRUE(fs::exists(root / "bad" / "s1.tiles.json"));
  EXPECT_FALSE(fs::exists(root / "bad" / "s2.tiles.json"));
  const auto errors = nlohmann::json::parse(slurp(root / "bad" / "errors.json"));
  ASSERT_EQ(errors.size(), 1u);
  EXPECT_EQ(errors[0]["image"], "s2.png");
  fs::remove_all(root);
}

TEST(Cli, FuseWeightsScores) {
  const auto root = fresh_dir("mmem_cli_fuse");
  std::ofstream(root / "scores.csv") << "patient_id,a,b\nP1,1,2\nP2,3,4\n";
  ASSERT_EQ(cli({"fuse", (root / "scores.csv").string(), "--p-val", "0.7,0.7", "--out", root.string()}).code, 0);
  const std::string fused = slurp(root / "fused.csv");
  EXPECT_NE(fused.find("1.5"), std::string::npos) << fused;
  EXPECT_NE(fused.find("3.5"), std::string::npos) << fused;
  EXPECT_EQ(cli({"fuse", (root / "scores.csv").string(), "--p-val", "0.7,0", "--out", root.string()}).code,
            kExitRuntime);
  fs::remove_all(root);
}
