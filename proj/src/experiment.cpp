#include "ltp/experiment.hpp"

#include <chrono>

#include "ltp/analysis.hpp"
#include "ltp/nn/checkpoint.hpp"
#include "ltp/pretext.hpp"

namespace ltp::experiment {

using nlohmann::json;

BenchmarkProfile BenchmarkProfile::desk() { return BenchmarkProfile{}; }

BenchmarkProfile BenchmarkProfile::paper() {
  BenchmarkProfile p;
  p.name = "paper";
  p.model = nn::ModelConfig::paper();
  p.pretrain.batch_size = 256;
  return p;
}

BenchmarkProfile BenchmarkProfile::acceptance() {
  BenchmarkProfile p;
  p.name = "acceptance";
  p.synth.target_len = 96;
  p.synth.num_background = 8;
  p.down.video_len = 96;
  p.model.hidden_dim = 32;
  p.model.ffn_dim = 64;
  p.pretrain.samples_per_epoch = 1000;
  p.pretrain.epochs = 25;
  p.pretrain.batch_size = 8;
  p.pretrain.base_lr = 1e-3;
  p.pretrain.loss.background_weight = 0.1;
  p.pretrain.schedule.warmup_epochs = 1;
  p.finetune.base_lr = 1e-3;
  p.finetune.loss.background_weight = 0.1;
  p.finetune.epochs = 40;
  p.finetune.schedule.warmup_epochs = 2;
  return p;
}

BenchmarkProfile BenchmarkProfile::by_name(const std::string& name) {
  if (name == "desk") return desk();
  if (name == "paper") return paper();
  if (name == "acceptance") return acceptance();
  throw ConfigError("unknown profile '" + name + "' (expected desk, paper or acceptance)");
}

void BenchmarkProfile::validate() const {
  bank.validate();
  if (pretrain_categories < 1 || pretrain_categories >= bank.num_categories) {
    throw ConfigError("pretrain_categories must leave at least one held-out category");
  }
  if (train_videos < 1 || test_videos < 1) throw ConfigError("video counts must be positive");
  down.validate();
  pretrain.validate();
  finetune.validate();
  if (pretrain.phase != trainer::Phase::Pretrain || finetune.phase != trainer::Phase::Finetune) {
    throw ConfigError("pretrain/finetune blocks carry the wrong phase");
  }
  for (double f : fractions) {
    if (!(f > 0.0 && f <= 1.0)) throw ConfigError("fractions must lie in (0, 1]");
  }
  nn::ModelConfig m = model;
  m.feature_dim = bank.feature_dim;
  m.validate();
  // Matching needs a query for every ground-truth segment.
  if (model.num_queries < down.instances_max || model.num_queries < synth.max_instances) {
    throw ConfigError("model.num_queries must cover downstream.instances_max and synthesis.max_instances");
  }
}

namespace {

json synth_to_json(const synthesis::SynthesisParams& s) {
  return {{"target_len", s.target_len},   {"num_background", s.num_background}, {"targets_min", s.targets_min},
          {"targets_max", s.targets_max}, {"crop_min", s.crop_min},             {"crop_max", s.crop_max},
          {"max_instances", s.max_instances}, {"seed", s.seed}};
}

synthesis::SynthesisParams synth_from_json(const json& j) {
  synthesis::SynthesisParams s;
  s.target_len = j.at("target_len").get<int>();
  s.num_background = j.at("num_background").get<int>();
  s.targets_min = j.at("targets_min").get<int>();
  s.targets_max = j.at("targets_max").get<int>();
  s.crop_min = j.at("crop_min").get<double>();
  s.crop_max = j.at("crop_max").get<double>();
  s.max_instances = j.at("max_instances").get<int>();
  s.seed = j.at("seed").get<std::uint64_t>();
  return s;
}

json down_to_json(const downstream::DownstreamParams& d) {
  return {{"video_len", d.video_len},       {"instances_min", d.instances_min},
          {"instances_max", d.instances_max}, {"coverage_min", d.coverage_min},
          {"coverage_max", d.coverage_max}, {"total_coverage_max", d.total_coverage_max},
          {"seed", d.seed}};
}

downstream::DownstreamParams down_from_json(const json& j) {
  downstream::DownstreamParams d;
  d.video_len = j.at("video_len").get<int>();
  d.instances_min = j.at("instances_min").get<int>();
  d.instances_max = j.at("instances_max").get<int>();
  d.coverage_min = j.at("coverage_min").get<double>();
  d.coverage_max = j.at("coverage_max").get<double>();
  d.total_coverage_max = j.at("total_coverage_max").get<double>();
  d.seed = j.at("seed").get<std::uint64_t>();
  return d;
}

}  // namespace

json profile_to_json(const BenchmarkProfile& p) {
  return {{"name", p.name},
          {"bank", featbank::config_to_json(p.bank)},
          {"pretrain_categories", p.pretrain_categories},
          {"synthesis", synth_to_json(p.synth)},
          {"downstream", down_to_json(p.down)},
          {"train_videos", p.train_videos},
          {"test_videos", p.test_videos},
          {"model", nn::model_config_to_json(p.model)},
          {"pretrain", trainer::train_config_to_json(p.pretrain)},
          {"finetune", trainer::train_config_to_json(p.finetune)},
          {"protocol", evalkit::to_string(p.protocol)},
          {"analysis_videos", p.analysis_videos},
          {"fractions", p.fractions}};
}

BenchmarkProfile profile_from_json(const json& j) {
  BenchmarkProfile p;
  try {
    p.name = j.at("name").get<std::string>();
    p.bank = featbank::config_from_json(j.at("bank"));
    p.pretrain_categories = j.at("pretrain_categories").get<int>();
    p.synth = synth_from_json(j.at("synthesis"));
    p.down = down_from_json(j.at("downstream"));
    p.train_videos = j.at("train_videos").get<int>();
    p.test_videos = j.at("test_videos").get<int>();
    p.model = nn::model_config_from_json(j.at("model"));
    p.pretrain = trainer::train_config_from_json(j.at("pretrain"));
    p.finetune = trainer::train_config_from_json(j.at("finetune"));
    p.protocol = evalkit::protocol_from_string(j.at("protocol").get<std::string>());
    p.analysis_videos = j.at("analysis_videos").get<std::size_t>();
    p.fractions = j.at("fractions").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid profile: ") + e.what());
  }
  return p;
}

Benchmark build_benchmark(const BenchmarkProfile& p) {
  p.validate();
  const auto bank = featbank::generate_bank(p.bank);
  const int held_out = p.bank.num_categories - p.pretrain_categories;
  Benchmark b;
  b.pretrain_bank = bank.slice_categories(0, p.pretrain_categories);
  const auto actions = bank.slice_categories(p.pretrain_categories, held_out);
  b.train = downstream::generate(actions, b.pretrain_bank, p.down, 0, static_cast<std::size_t>(p.train_videos));
  // Test videos continue the same stream so they never repeat a training video.
  b.test = downstream::generate(actions, b.pretrain_bank, p.down, static_cast<std::uint64_t>(p.train_videos),
                                static_cast<std::size_t>(p.test_videos));
  return b;
}

namespace {

ArmResult evaluate(const trainer::TrainResult& r, const downstream::DetectionDataset& test, evalkit::Protocol protocol) {
  const auto table = evalkit::map_over_thresholds(trainer::detect(r.model, test), trainer::ground_truth(test),
                                                  evalkit::thresholds(protocol));
  ArmResult a;
  a.avg_map = 100.0 * table.average;
  for (double m : table.map) a.map.push_back(100.0 * m);
  a.val_loss = r.val_loss;
  a.train_size = r.train_size;
  return a;
}

double final_encoder_diversity(const trainer::TrainResult& r, const downstream::DetectionDataset& test,
                               std::size_t videos) {
  return analysis::layer_diversity_profile(trainer::capture_attention(r.model, test, videos)).final_encoder_mean();
}

}  // namespace

SeedOutcome run_seed(const BenchmarkProfile& p, const Benchmark& bench, std::uint64_t seed,
                     const std::function<void(const std::string&)>& progress) {
  const auto t0 = std::chrono::steady_clock::now();
  auto say = [&](const std::string& s) {
    if (progress) progress(s);
  };
  SeedOutcome out;
  out.seed = seed;

  nn::ModelConfig mc = p.model;
  mc.feature_dim = p.bank.feature_dim;
  mc.init_seed = seed;
  mc.num_classes = 1;
  mc.task_input_dim = pretext::condition_width(p.pretrain_categories, p.synth.max_instances);

  auto synth = p.synth;
  synth.seed = mix64(p.synth.seed, seed);
  auto pre_cfg = p.pretrain;
  pre_cfg.seed = seed;
  say("seed " + std::to_string(seed) + ": pretrain");
  const auto pre = trainer::pretrain(bench.pretrain_bank, synth, mc, pre_cfg);
  out.pretrain_loss = pre.epoch_loss;
  const auto state = pre.model.parameters().state();

  for (double f : p.fractions) {
    auto ft = p.finetune;
    ft.seed = seed;
    ft.train_fraction = f;
    trainer::RunOptions opts;
    opts.validation = &bench.test;
    say("seed " + std::to_string(seed) + ": finetune ltp @" + std::to_string(f));
    const auto ltp = trainer::finetune(&state, mc, bench.train, ft, opts);
    out.ltp[f] = evaluate(ltp, bench.test, p.protocol);
    say("seed " + std::to_string(seed) + ": finetune scratch @" + std::to_string(f));
    const auto scratch = trainer::finetune(nullptr, mc, bench.train, ft, opts);
    out.scratch[f] = evaluate(scratch, bench.test, p.protocol);
    if (f == 1.0) {
      out.ltp_final_encoder_diversity = final_encoder_diversity(ltp, bench.test, p.analysis_videos);
      out.scratch_final_encoder_diversity = final_encoder_diversity(scratch, bench.test, p.analysis_videos);
    }
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

json outcome_to_json(const SeedOutcome& o) {
  auto arms = [](const std::map<double, ArmResult>& m) {
    json j = json::array();
    for (const auto& [f, a] : m) {
      j.push_back({{"fraction", f}, {"avg_map", a.avg_map}, {"map", a.map}, {"val_loss", a.val_loss},
                   {"train_size", a.train_size}});
    }
    return j;
  };
  return {{"seed", o.seed},
          {"ltp", arms(o.ltp)},
          {"scratch", arms(o.scratch)},
          {"ltp_final_encoder_diversity", o.ltp_final_encoder_diversity},
          {"scratch_final_encoder_diversity", o.scratch_final_encoder_diversity},
          {"pretrain_loss", o.pretrain_loss},
          {"seconds", o.seconds}};
}

}  // namespace ltp::experiment
