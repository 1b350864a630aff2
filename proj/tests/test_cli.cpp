#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "doctest.h"
#include "json.hpp"
#include "ltp/common.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using ltp::cli::ExitCode;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json load(const fs::path& p) { return json::parse(slurp(p)); }

int tool(std::vector<std::string> args) {
  args.insert(args.begin(), "ltp");
  return ltp::cli::run(args);
}

// One tiny pipeline shared by the cases below.
struct Pipeline {
  fs::path root;
  std::string cfg;

  Pipeline() {
    root = fs::temp_directory_path() / "ltp_test_cli";
    fs::remove_all(root);
    fs::create_directories(root);
    cfg = (root / "tiny.json").string();
    std::ofstream(cfg) << R"({"train_videos": 8, "test_videos": 4,
      "bank": {"clips_per_category": 6, "feature_dim": 16},
      "synthesis": {"target_len": 32, "num_background": 4, "max_instances": 4, "targets_max": 3},
      "downstream": {"video_len": 32, "instances_max": 4},
      "model": {"feature_dim": 16, "hidden_dim": 8, "ffn_dim": 16, "num_queries": 4, "decoder_layers": 2, "heads": 2},
      "pretrain": {"samples_per_epoch": 8, "epochs": 2, "batch_size": 4, "schedule": {"warmup_epochs": 1}},
      "finetune": {"epochs": 2, "batch_size": 4, "schedule": {"warmup_epochs": 1}}, "analysis_videos": 2})";
    auto common = [&](const std::string& out) {
      return std::vector<std::string>{"--config", cfg, "--out", (root / out).string()};
    };
    auto run_step = [&](std::vector<std::string> head, const std::string& out) {
      auto c = common(out);
      head.insert(head.end(), c.begin(), c.end());
      REQUIRE(tool(head) == ExitCode::kOk);
    };
    run_step({"gen-bank"}, "bank");
    run_step({"gen-downstream", "--bank", (root / "bank").string()}, "down");
    run_step({"pretrain", "--bank", (root / "bank").string()}, "pre");
    run_step({"finetune", "--data", (root / "down").string(), "--init", (root / "pre").string()}, "ft_ltp");
    run_step({"finetune", "--data", (root / "down").string(), "--scratch", "--train-fraction", "0.5"}, "ft_scratch");
    run_step({"eval", "--checkpoint", (root / "ft_ltp").string(), "--data", (root / "down").string()}, "ev_ltp");
    run_step({"eval", "--checkpoint", (root / "ft_scratch").string(), "--data", (root / "down").string()},
             "ev_scratch");
  }
};

const Pipeline& pipeline() {
  static Pipeline p;
  return p;
}

}  // namespace

TEST_CASE("override parsing") {
  json c = {{"a", {{"b", 1}, {"s", "x"}}}};
  ltp::cli::apply_override(c, "a.b=2.5");
  CHECK(c["a"]["b"] == 2.5);
  ltp::cli::apply_override(c, "a.s=hello");
  CHECK(c["a"]["s"] == "hello");
  CHECK_THROWS_AS(ltp::cli::apply_override(c, "a.missing=1"), ltp::ConfigError);
  CHECK_THROWS(ltp::cli::apply_override(c, "novalue"));
}

TEST_CASE("usage errors exit with code 2") {
  CHECK(tool({}) == ExitCode::kUsage);
  CHECK(tool({"frobnicate"}) == ExitCode::kUsage);
  CHECK(tool({"gen-bank"}) == ExitCode::kUsage);
  const auto out = (fs::temp_directory_path() / "ltp_test_cli_usage").string();
  CHECK(tool({"gen-bank", "--out", out, "--config", "/nonexistent/cfg.json"}) == ExitCode::kUsage);
  CHECK(tool({"gen-bank", "--out", out, "--set", "bank.no_such_key=3"}) == ExitCode::kUsage);
  CHECK(tool({"gen-bank", "--out", out, "--set", "bank.num_categories=-1"}) == ExitCode::kUsage);
  CHECK(tool({"replay", "--manifest", "/nonexistent/run_manifest.json", "--out", out}) == ExitCode::kUsage);
}

TEST_CASE("finetune needs exactly one initialization") {
  const auto& p = pipeline();
  const auto out = (p.root / "bad_ft").string();
  const auto data = (p.root / "down").string();
  CHECK(tool({"finetune", "--config", p.cfg, "--data", data, "--out", out}) == ExitCode::kUsage);
  CHECK(tool({"finetune", "--config", p.cfg, "--data", data, "--out", out, "--scratch", "--init",
              (p.root / "pre").string()}) == ExitCode::kUsage);
}

TEST_CASE("missing inputs are usage errors") {
  const auto& p = pipeline();
  CHECK(tool({"eval", "--config", p.cfg, "--checkpoint", (p.root / "nothing").string(), "--data",
              (p.root / "down").string(), "--out", (p.root / "ev_missing").string()}) == ExitCode::kUsage);
}

TEST_CASE("manifest records the run") {
  const auto& p = pipeline();
  const auto m = load(p.root / "pre" / "run_manifest.json");
  CHECK(m["command"] == "pretrain");
  CHECK(m["tool_version"] == ltp::cli::kToolVersion);
  CHECK(m.contains("seeds"));
  CHECK(m["inputs"]["bank"] == fs::absolute(p.root / "bank").lexically_normal().string());
  CHECK(m["wall_clock"]["seconds"].get<double>() >= 0.0);
  const auto outs = m["outputs"].get<std::vector<std::string>>();
  CHECK(std::is_sorted(outs.begin(), outs.end()));
  CHECK(std::find(outs.begin(), outs.end(), "checkpoint/checkpoint.json") != outs.end());
  CHECK(m["config"]["pretrain"]["epochs"] == 2);
}

TEST_CASE("eval writes its reports") {
  const auto& p = pipeline();
  for (const char* f : {"predictions.jsonl", "ground_truth.jsonl", "eval_report.json", "eval_report.csv"}) {
    CHECK(fs::exists(p.root / "ev_ltp" / f));
  }
  const auto info = load(p.root / "ev_scratch" / "run_info.json");
  CHECK(info["train_fraction"] == 0.5);
  CHECK(info["warm_start"] == false);
  CHECK(load(p.root / "ev_ltp" / "run_info.json")["warm_start"] == true);
}

TEST_CASE("report sorts by fraction then id") {
  const auto& p = pipeline();
  const auto out = p.root / "rep";
  REQUIRE(tool({"report", (p.root / "ev_ltp").string(), (p.root / "ev_scratch").string(), "--out", out.string()}) ==
          ExitCode::kOk);
  const auto r = load(out / "report.json");
  REQUIRE(r["runs"].size() == 2u);
  CHECK(r["runs"][0]["run_id"] == "ev_scratch");
  CHECK(r["runs"][1]["run_id"] == "ev_ltp");
  const auto csv = slurp(out / "report.csv");
  CHECK(csv.rfind("run_id,train_fraction,warm_start", 0) == 0);
  CHECK(tool({"report", (p.root / "nothing").string(), "--out", out.string()}) != ExitCode::kOk);
}

TEST_CASE("replay reproduces outputs bit for bit") {
  const auto& p = pipeline();
  for (const char* run : {"down", "pre", "ev_ltp"}) {
    const auto out = p.root / (std::string(run) + "_replay");
    REQUIRE(tool({"replay", "--manifest", (p.root / run / "run_manifest.json").string(), "--out", out.string(),
                  "--threads", "1"}) == ExitCode::kOk);
    const auto outs = load(p.root / run / "run_manifest.json")["outputs"].get<std::vector<std::string>>();
    CHECK(outs == load(out / "run_manifest.json")["outputs"].get<std::vector<std::string>>());
    for (const auto& f : outs) {
      INFO(run << "/" << f);
      CHECK(slurp(p.root / run / f) == slurp(out / f));
    }
  }
}

TEST_CASE("analyze writes diversity tables") {
  const auto& p = pipeline();
  const auto out = p.root / "an";
  REQUIRE(tool({"analyze", "--config", p.cfg, "--checkpoint", (p.root / "ft_ltp").string(), "--data",
                (p.root / "down").string(), "--out", out.string()}) == ExitCode::kOk);
  CHECK(fs::exists(out / "diversity.csv"));
  const auto d = load(out / "diversity.json");
  CHECK(d.is_object());
}

TEST_CASE("too few queries is a config error") {
  const auto out = (fs::temp_directory_path() / "ltp_test_cli_queries").string();
  CHECK(tool({"gen-bank", "--out", out, "--set", "model.num_queries=2"}) == ExitCode::kUsage);
}
