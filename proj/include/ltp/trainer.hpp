#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "ltp/downstream.hpp"
#include "ltp/evalkit.hpp"
#include "ltp/featbank.hpp"
#include "ltp/matching.hpp"
#include "ltp/nn/checkpoint.hpp"
#include "ltp/nn/model.hpp"
#include "ltp/pretext.hpp"
#include "ltp/synthesis.hpp"

namespace ltp::trainer {

enum class Phase { Pretrain, Finetune };
std::string to_string(Phase p);

struct ScheduleConfig {
  enum class Kind { CosineWarmup, Step };
  Kind kind = Kind::CosineWarmup;
  int warmup_epochs = 5;
  std::vector<int> milestones;  // epochs, strictly increasing (step schedule)
  double factor = 0.1;
  bool operator==(const ScheduleConfig&) const = default;
};

struct TrainConfig {
  Phase phase = Phase::Pretrain;
  int batch_size = 32;
  int epochs = 15;
  double base_lr = 1e-4;
  ScheduleConfig schedule;
  double p_cond = 0.5;
  bool allow_joint = false;
  std::uint64_t seed = 0;
  double train_fraction = 1.0;
  double weight_decay = 1e-4;
  double grad_clip = 0.1;        // global gradient norm; <= 0 disables
  int samples_per_epoch = 2000;  // pre-training only
  matching::LossConfig loss;

  static TrainConfig pretrain_desk();
  static TrainConfig finetune_desk();
  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

nlohmann::json train_config_to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

// Learning rate at optimizer step `step` (0-based).
double lr_at(long step, const TrainConfig& cfg, long steps_per_epoch);

// ---- Optimizer ---------------------------------------------------------------
struct AdamParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One AdamW update of a flat parameter block; `t` is the 1-based step count.
//   m = b1 m + (1 - b1) g;  v = b2 v + (1 - b2) g^2
//   p -= lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps) + lr * wd * p
void adamw_update(std::span<double> p, std::span<const double> g, std::span<double> m, std::span<double> v, long t,
                  double lr, double weight_decay, const AdamParams& hp = {});

struct OptimizerState {
  std::vector<std::vector<double>> m;  // aligned with ParameterSet::items()
  std::vector<std::vector<double>> v;
  long t = 0;
};

OptimizerState make_optimizer_state(const nn::ParameterSet& params);
void optimizer_step(nn::ParameterSet& params, OptimizerState& state, double lr, double weight_decay);
// Rescales all gradients so their global l2 norm is at most max_norm; returns
// the norm before clipping.
double clip_grad_norm(nn::ParameterSet& params, double max_norm);

// ---- Data ------------------------------------------------------------------
// Indices of ceil(fraction * n) items: a prefix of a seeded permutation, so
// smaller fractions are nested in larger ones. Returned in ascending order.
std::vector<std::size_t> data_fraction_split(std::size_t n, double fraction, std::uint64_t seed);
downstream::DetectionDataset data_fraction_subset(const downstream::DetectionDataset& ds, double fraction,
                                                  std::uint64_t seed);

std::vector<matching::Target> video_targets(const downstream::Video& v);
// Filtered, class-agnostic targets of a conditioned pre-training sample.
std::vector<matching::Target> pretext_targets(const synthesis::SynthesizedSample& s, const pretext::Condition& c);

// ---- Losses ----------------------------------------------------------------
// Pre-training requires a task-encoder model; N_target is derived from its
// input width and the synthesis N_max.
nn::Tensor pretrain_sample_loss(const nn::DetectionTransformer& model, const synthesis::SynthesizedSample& s,
                                const pretext::Condition& c, int max_instances, const matching::LossConfig& cfg);
nn::Tensor finetune_sample_loss(const nn::DetectionTransformer& model, const downstream::Video& v,
                                const matching::LossConfig& cfg);
double validation_loss(const nn::DetectionTransformer& model, const downstream::DetectionDataset& ds,
                       const matching::LossConfig& cfg);

// ---- Loops -----------------------------------------------------------------
struct LogRecord {
  long step = 0;
  int epoch = 0;
  double loss = 0.0;
  double lr = 0.0;
  std::string phase;
  bool operator==(const LogRecord&) const = default;
};

struct RunOptions {
  std::filesystem::path out_dir;  // empty: no checkpoints or logs on disk
  bool resume = false;
  int stop_after_epochs = -1;  // simulate an interruption after this many epochs
  const downstream::DetectionDataset* validation = nullptr;
  std::function<void(const LogRecord&)> on_step;
  std::function<void(int epoch, double train_loss, std::optional<double> val_loss)> on_epoch;
};

struct TrainResult {
  nn::DetectionTransformer model;
  OptimizerState optimizer;
  int epochs_done = 0;
  long steps_done = 0;
  std::vector<LogRecord> log;
  std::vector<double> epoch_loss;
  std::vector<double> val_loss;
  std::size_t train_size = 0;
};

// Per step: synthesize, sample conditions, filter, relabel, condition queries,
// forward, match, loss, AdamW. Epoch e uses synthesis indices
// [e * samples_per_epoch, (e + 1) * samples_per_epoch).
TrainResult pretrain(const featbank::FeatureBank& bank, const synthesis::SynthesisParams& synth,
                     const nn::ModelConfig& model_cfg, const TrainConfig& cfg, const RunOptions& opts = {});

// Model used for fine-tuning: downstream class count, no task encoder.
nn::ModelConfig finetune_model_config(nn::ModelConfig base, int num_classes);
// Loads every tensor of `state` except the classification head and the task
// encoder; returns the loaded names.
std::vector<std::string> warm_start(nn::DetectionTransformer& model, const nn::StateDict& state);

// `init` null trains from scratch with the same schedule and data order.
TrainResult finetune(const nn::StateDict* init, const nn::ModelConfig& base, const downstream::DetectionDataset& train,
                     const TrainConfig& cfg, const RunOptions& opts = {});

// ---- Checkpoints -------------------------------------------------------------
// <dir>/checkpoint.json + weights.bin: model and optimizer tensors plus meta
// {phase, model_config, train_config, epochs_done, steps_done, adam_t,
// epoch_loss, val_loss, extra}.
void save_checkpoint(const std::filesystem::path& dir, const TrainResult& r, const TrainConfig& cfg,
                     const nlohmann::json& extra = nlohmann::json::object());

struct LoadedModel {
  nn::ModelConfig config;
  nn::StateDict state;
  nlohmann::json meta;
};
LoadedModel load_model(const std::filesystem::path& dir);
nn::DetectionTransformer instantiate(const LoadedModel& m);

// ---- Inference -----------------------------------------------------------------
// Every non-background class of every query becomes a detection scored by its
// probability; intervals are in feature steps, clipped to the video.
std::vector<evalkit::Detection> detect(const nn::DetectionTransformer& model, const downstream::DetectionDataset& ds);
std::vector<evalkit::GroundTruth> ground_truth(const downstream::DetectionDataset& ds);
std::map<int, double> video_lengths(const downstream::DetectionDataset& ds);

std::vector<nn::AttentionRecord> capture_attention(const nn::DetectionTransformer& model,
                                                   const downstream::DetectionDataset& ds, std::size_t max_videos);

}  // namespace ltp::trainer
