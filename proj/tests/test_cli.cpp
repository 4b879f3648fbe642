#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include <nlohmann/json.hpp>

#include "attnaudit/cli.hpp"
#include "attnaudit/report.hpp"
#include "attnaudit/util.hpp"

using namespace attnaudit;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun cli(std::vector<std::string> args) {
  args.insert(args.begin(), "attnaudit");
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("attnaudit_cli_" + name);
  fs::remove_all(p);
  return p;
}

fs::path smoke_config() { return fs::path(ATTNAUDIT_SOURCE_DIR) / "configs" / "smoke.json"; }

}  // namespace

TEST(Cli, HelpExitsZero) {
  const auto r = cli({"--help"});
  EXPECT_EQ(r.code, kExitOk);
  EXPECT_NE(r.out.find("gen-data"), std::string::npos);
}

TEST(Cli, UnknownSubcommandIsUsageError) {
  const auto r = cli({"frobnicate"});
  EXPECT_EQ(r.code, kExitValidation);
  EXPECT_EQ(r.err.rfind("error[USAGE]: ", 0), 0u);
  EXPECT_NE(r.err.find("Usage:"), std::string::npos);
}

TEST(Cli, BadFlagValueIsUsageError) {
  EXPECT_EQ(cli({"train", "--encoder", "gru"}).code, kExitValidation);
}

TEST(Cli, UnknownConfigKeyIsValidationError) {
  const fs::path dir = fresh_dir("badkey");
  write_file(dir / "c.json", R"({"train": {"learning_rate": 0.1, "momentum": 0.9}})");
  const auto r = cli({"gen-data", "--config", (dir / "c.json").string(), "--out", dir.string()});
  EXPECT_EQ(r.code, kExitValidation);
  EXPECT_EQ(r.err, "error[VALIDATION]: unknown config key 'train.momentum'\n");
  fs::remove_all(dir);
}

TEST(Cli, MissingInputIsRuntimeError) {
  const fs::path dir = fresh_dir("missing");
  const auto r = cli({"train", "--out", dir.string()});
  EXPECT_EQ(r.code, kExitRuntime);
  EXPECT_EQ(r.err.rfind("error[RUNTIME]: missing input", 0), 0u);
  fs::remove_all(dir);
}

TEST(Cli, GenDataIsDeterministic) {
  const fs::path a = fresh_dir("gen_a"), b = fresh_dir("gen_b");
  const std::string cfg = smoke_config().string();
  ASSERT_EQ(cli({"gen-data", "--config", cfg, "--seed", "7", "--out", a.string()}).code, 0);
  ASSERT_EQ(cli({"gen-data", "--config", cfg, "--seed", "7", "--out", b.string()}).code, 0);
  EXPECT_EQ(read_file(a / "data/corpus.jsonl"), read_file(b / "data/corpus.jsonl"));
  EXPECT_EQ(read_file(a / "manifests/gen-data.json"), read_file(b / "manifests/gen-data.json"));
  const fs::path c = fresh_dir("gen_c");
  ASSERT_EQ(cli({"gen-data", "--config", cfg, "--seed", "8", "--out", c.string()}).code, 0);
  EXPECT_NE(read_file(a / "data/corpus.jsonl"), read_file(c / "data/corpus.jsonl"));
  for (const auto& d : {a, b, c}) fs::remove_all(d);
}

TEST(Cli, ConfigRoundTripAndFlagOverrides) {
  RunConfig c;
  c.seed = 42;
  c.encoder.kind = EncoderKind::cnn;
  c.adversarial.eps = 0.05;
  c.logodds_abs = false;
  const RunConfig back = RunConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  EXPECT_EQ(back.hash(), c.hash());
  RunConfig moved = c;
  moved.out = "elsewhere";
  moved.jobs = 8;
  EXPECT_EQ(moved.hash(), c.hash());
  moved.seed = 43;
  EXPECT_NE(moved.hash(), c.hash());

  const fs::path dir = fresh_dir("flags");
  ASSERT_EQ(cli({"gen-data", "--config", smoke_config().string(), "--out", dir.string(), "--encoder",
                 "proj", "--eps", "0.2", "--grad-measure", "l2", "--logodds-abs", "false"})
                .code,
            0);
  const RunConfig seen = RunConfig::from_json(nlohmann::json::parse(read_file(dir / "config.json")));
  EXPECT_EQ(seen.encoder.kind, EncoderKind::projection);
  EXPECT_EQ(seen.adversarial.eps, 0.2);
  EXPECT_EQ(seen.grad_measure, GradientMeasure::l2_norm);
  EXPECT_FALSE(seen.logodds_abs);
  fs::remove_all(dir);
}

TEST(Cli, SmokeRunListsAtLeastTenArtifacts) {
  const fs::path dir = fresh_dir("smoke");
  const auto r = cli({"all", "--config", smoke_config().string(), "--out", dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const Manifest m = Manifest::from_json(read_file(dir / "manifests/all.json"));
  EXPECT_GE(m.artifacts.size(), 10u);
  for (const auto& a : m.artifacts) {
    EXPECT_TRUE(fs::exists(dir / a.path)) << a.path;
    EXPECT_EQ(file_hash(dir / a.path), a.hash) << a.path;
  }
  const Manifest report = Manifest::from_json(read_file(dir / "report/manifest.json"));
  EXPECT_GE(report.artifacts.size(), 7u);
  EXPECT_EQ(parse_csv(read_file(dir / "report/tables/summary.csv")).rows.size(), 5u);
  fs::remove_all(dir);
}

TEST(Cli, StagesRunIndividually) {
  const fs::path dir = fresh_dir("stages");
  const std::string cfg = smoke_config().string();
  for (std::vector<std::string> stage : {std::vector<std::string>{"gen-data"}, {"build-vocab"},
                                        {"train"}, {"train-lr"}, {"audit", "logodds"}}) {
    stage.insert(stage.end(), {"--config", cfg, "--out", dir.string()});
    const auto r = cli(stage);
    ASSERT_EQ(r.code, 0) << stage[0] << ": " << r.err;
  }
  EXPECT_TRUE(fs::exists(dir / "audit/logodds_swap.csv"));
  EXPECT_TRUE(fs::exists(dir / "manifests/audit-logodds.json"));
  const auto r = cli({"audit", "permute", "--config", cfg, "--out", dir.string(), "--attention", "none"});
  EXPECT_EQ(r.code, 0) << r.err;
  fs::remove_all(dir);
}
