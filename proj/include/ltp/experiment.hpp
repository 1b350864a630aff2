#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "ltp/downstream.hpp"
#include "ltp/evalkit.hpp"
#include "ltp/featbank.hpp"
#include "ltp/nn/model.hpp"
#include "ltp/synthesis.hpp"
#include "ltp/trainer.hpp"

// End-to-end comparison of a pre-trained, warm-started model against the
// scratch baseline on the synthetic downstream benchmark.
namespace ltp::experiment {

struct BenchmarkProfile {
  std::string name = "desk";
  featbank::BankConfig bank;
  int pretrain_categories = 32;  // bank categories [0, n) pre-train; the rest are downstream classes
  synthesis::SynthesisParams synth;
  downstream::DownstreamParams down;
  int train_videos = 200;
  int test_videos = 100;
  nn::ModelConfig model;
  trainer::TrainConfig pretrain = trainer::TrainConfig::pretrain_desk();
  trainer::TrainConfig finetune = trainer::TrainConfig::finetune_desk();
  evalkit::Protocol protocol = evalkit::Protocol::AnetStyle;
  std::size_t analysis_videos = 16;
  std::vector<double> fractions{1.0, 0.25};

  static BenchmarkProfile desk();
  static BenchmarkProfile paper();
  // Reduced sequence length and width so three seeds fit a 30 minute budget
  // on one core.
  static BenchmarkProfile acceptance();
  static BenchmarkProfile by_name(const std::string& name);
  void validate() const;
};

nlohmann::json profile_to_json(const BenchmarkProfile& p);
// Applies "a.b.c=value" style overrides onto a profile's JSON form.
BenchmarkProfile profile_from_json(const nlohmann::json& j);

struct Benchmark {
  featbank::FeatureBank pretrain_bank;
  downstream::DetectionDataset train;
  downstream::DetectionDataset test;
};

Benchmark build_benchmark(const BenchmarkProfile& p);

struct ArmResult {
  double avg_map = 0.0;
  std::vector<double> map;  // per protocol threshold
  std::vector<double> val_loss;
  std::size_t train_size = 0;
};

struct SeedOutcome {
  std::uint64_t seed = 0;
  std::map<double, ArmResult> ltp;      // keyed by train fraction
  std::map<double, ArmResult> scratch;
  double ltp_final_encoder_diversity = 0.0;
  double scratch_final_encoder_diversity = 0.0;
  std::vector<double> pretrain_loss;
  double seconds = 0.0;
};

// Seed drives model initialization, pre-training conditions/synthesis order
// and fine-tuning data order; the benchmark data itself is fixed by the
// profile. Diversity is measured on the fraction-1.0 models.
SeedOutcome run_seed(const BenchmarkProfile& p, const Benchmark& bench, std::uint64_t seed,
                     const std::function<void(const std::string&)>& progress = {});

nlohmann::json outcome_to_json(const SeedOutcome& o);

}  // namespace ltp::experiment
