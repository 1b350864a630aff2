#include "ltp/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <numeric>

namespace ltp::trainer {

using nlohmann::json;
using nn::Tensor;

std::string to_string(Phase p) { return p == Phase::Pretrain ? "pretrain" : "finetune"; }

TrainConfig TrainConfig::pretrain_desk() { return TrainConfig{}; }

TrainConfig TrainConfig::finetune_desk() {
  TrainConfig c;
  c.phase = Phase::Finetune;
  c.batch_size = 16;
  c.epochs = 20;
  c.p_cond = 0.0;
  return c;
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (epochs < 0) throw ConfigError("epochs must be nonnegative");
  if (!(base_lr >= 0.0) || !std::isfinite(base_lr)) throw ConfigError("base_lr must be a finite nonnegative number");
  if (p_cond < 0.0 || p_cond > 1.0) throw ConfigError("p_cond must lie in [0, 1]");
  if (!(train_fraction > 0.0 && train_fraction <= 1.0)) throw ConfigError("train_fraction must lie in (0, 1]");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be nonnegative");
  if (phase == Phase::Pretrain && samples_per_epoch < 1) throw ConfigError("samples_per_epoch must be positive");
  if (schedule.kind == ScheduleConfig::Kind::CosineWarmup && schedule.warmup_epochs < 0) {
    throw ConfigError("warmup_epochs must be nonnegative");
  }
  if (schedule.kind == ScheduleConfig::Kind::Step) {
    if (!(schedule.factor > 0.0 && schedule.factor < 1.0)) throw ConfigError("step factor must lie in (0, 1)");
    for (std::size_t i = 1; i < schedule.milestones.size(); ++i) {
      if (schedule.milestones[i] <= schedule.milestones[i - 1]) throw ConfigError("milestones must increase strictly");
    }
  }
  if (loss.background_weight < 0.0) throw ConfigError("background_weight must be nonnegative");
  loss.weights.validate();
}

json train_config_to_json(const TrainConfig& c) {
  return {{"phase", to_string(c.phase)},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"base_lr", c.base_lr},
          {"schedule",
           {{"kind", c.schedule.kind == ScheduleConfig::Kind::Step ? "step" : "cosine_warmup"},
            {"warmup_epochs", c.schedule.warmup_epochs},
            {"milestones", c.schedule.milestones},
            {"factor", c.schedule.factor}}},
          {"p_cond", c.p_cond},
          {"allow_joint", c.allow_joint},
          {"seed", c.seed},
          {"train_fraction", c.train_fraction},
          {"weight_decay", c.weight_decay},
          {"grad_clip", c.grad_clip},
          {"samples_per_epoch", c.samples_per_epoch},
          {"loss",
           {{"cls", c.loss.weights.cls},
            {"l1", c.loss.weights.l1},
            {"iou", c.loss.weights.iou},
            {"background_weight", c.loss.background_weight},
            {"aux_layers", c.loss.aux_layers}}}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  const auto phase = j.at("phase").get<std::string>();
  if (phase != "pretrain" && phase != "finetune") throw ConfigError("unknown phase " + phase);
  c.phase = phase == "pretrain" ? Phase::Pretrain : Phase::Finetune;
  c.batch_size = j.at("batch_size").get<int>();
  c.epochs = j.at("epochs").get<int>();
  c.base_lr = j.at("base_lr").get<double>();
  const auto& s = j.at("schedule");
  const auto kind = s.at("kind").get<std::string>();
  if (kind != "step" && kind != "cosine_warmup") throw ConfigError("unknown schedule " + kind);
  c.schedule.kind = kind == "step" ? ScheduleConfig::Kind::Step : ScheduleConfig::Kind::CosineWarmup;
  c.schedule.warmup_epochs = s.at("warmup_epochs").get<int>();
  c.schedule.milestones = s.at("milestones").get<std::vector<int>>();
  c.schedule.factor = s.at("factor").get<double>();
  c.p_cond = j.at("p_cond").get<double>();
  c.allow_joint = j.at("allow_joint").get<bool>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.train_fraction = j.at("train_fraction").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.grad_clip = j.at("grad_clip").get<double>();
  c.samples_per_epoch = j.at("samples_per_epoch").get<int>();
  const auto& l = j.at("loss");
  c.loss.weights = {l.at("cls").get<double>(), l.at("l1").get<double>(), l.at("iou").get<double>()};
  c.loss.background_weight = l.at("background_weight").get<double>();
  c.loss.aux_layers = l.value("aux_layers", false);
  return c;
}

double lr_at(long step, const TrainConfig& cfg, long steps_per_epoch) {
  if (step < 0) throw DomainError("negative step");
  if (steps_per_epoch < 1) throw DomainError("steps_per_epoch must be positive");
  const auto& s = cfg.schedule;
  if (s.kind == ScheduleConfig::Kind::Step) {
    const long epoch = step / steps_per_epoch;
    double lr = cfg.base_lr;
    for (int m : s.milestones) {
      if (epoch >= m) lr *= s.factor;
    }
    return lr;
  }
  const long warmup = static_cast<long>(s.warmup_epochs) * steps_per_epoch;
  const long total = static_cast<long>(cfg.epochs) * steps_per_epoch;
  if (step < warmup) return cfg.base_lr * static_cast<double>(step + 1) / static_cast<double>(warmup);
  if (total <= warmup) return cfg.base_lr;
  const double progress =
      std::clamp(static_cast<double>(step - warmup) / static_cast<double>(total - warmup), 0.0, 1.0);
  return cfg.base_lr * 0.5 * (1.0 + std::cos(M_PI * progress));
}

void adamw_update(std::span<double> p, std::span<const double> g, std::span<double> m, std::span<double> v, long t,
                  double lr, double weight_decay, const AdamParams& hp) {
  if (p.size() != g.size() || p.size() != m.size() || p.size() != v.size()) throw ShapeError("adamw: size mismatch");
  if (t < 1) throw DomainError("adamw: step count starts at 1");
  const double c1 = 1.0 - std::pow(hp.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(hp.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < p.size(); ++i) {
    m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * g[i];
    v[i] = hp.beta2 * v[i] + (1.0 - hp.beta2) * g[i] * g[i];
    const double update = (m[i] / c1) / (std::sqrt(v[i] / c2) + hp.eps);
    p[i] -= lr * update + lr * weight_decay * p[i];
  }
}

OptimizerState make_optimizer_state(const nn::ParameterSet& params) {
  OptimizerState s;
  for (const auto& [name, t] : params.items()) {
    s.m.emplace_back(t.size(), 0.0);
    s.v.emplace_back(t.size(), 0.0);
  }
  return s;
}

void optimizer_step(nn::ParameterSet& params, OptimizerState& state, double lr, double weight_decay) {
  auto& items = params.items();
  if (state.m.size() != items.size()) throw ShapeError("optimizer state does not match parameters");
  ++state.t;
  for (std::size_t i = 0; i < items.size(); ++i) {
    Tensor t = items[i].second;
    const auto g = t.grad();
    adamw_update(t.mutable_value(), g, state.m[i], state.v[i], state.t, lr, weight_decay);
  }
}

double clip_grad_norm(nn::ParameterSet& params, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, t] : params.items()) {
    for (double g : t.node()->grad) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double f = max_norm / norm;
    for (const auto& [name, t] : params.items()) {
      for (double& g : t.node()->grad) g *= f;
    }
  }
  return norm;
}

std::vector<std::size_t> data_fraction_split(std::size_t n, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw DomainError("fraction must lie in (0, 1]");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng = make_rng(seed, 0xF7AC);
  std::shuffle(perm.begin(), perm.end(), rng);
  // Guard against fraction * n landing a hair above an integer.
  const auto k = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9));
  perm.resize(std::min(k, n));
  std::sort(perm.begin(), perm.end());
  return perm;
}

downstream::DetectionDataset data_fraction_subset(const downstream::DetectionDataset& ds, double fraction,
                                                  std::uint64_t seed) {
  downstream::DetectionDataset out = ds;
  out.videos.clear();
  for (std::size_t i : data_fraction_split(ds.videos.size(), fraction, seed)) out.videos.push_back(ds.videos[i]);
  return out;
}

namespace {

matching::Interval normalized(const Span& s, int len) {
  return matching::Interval::from_bounds(static_cast<double>(s.start) / len, static_cast<double>(s.end) / len);
}

}  // namespace

std::vector<matching::Target> video_targets(const downstream::Video& v) {
  std::vector<matching::Target> out;
  for (const auto& a : v.instances) out.push_back({a.category, normalized(a.interval, v.length())});
  return out;
}

std::vector<matching::Target> pretext_targets(const synthesis::SynthesizedSample& s, const pretext::Condition& c) {
  std::vector<matching::Target> out;
  for (const auto& a : pretext::filter_targets(s.instances, c)) out.push_back({a.category, normalized(a.interval, s.length())});
  return matching::binary_relabel(std::move(out));
}

namespace {

Tensor set_loss(const nn::DetectionSet& set, const std::vector<matching::Target>& gts, const matching::LossConfig& cfg) {
  const auto assignment = matching::match(gts, set, cfg.weights);
  return matching::detr_loss(gts, set, assignment, cfg);
}

// Each layer is matched independently, as in the final-layer loss.
Tensor model_loss(const nn::DetectionTransformer& model, const FeatureMatrix& features, const Tensor& queries,
                  const std::vector<matching::Target>& gts, const matching::LossConfig& cfg) {
  if (!cfg.aux_layers) return set_loss(model.forward(features, queries, nullptr), gts, cfg);
  std::vector<Tensor> terms;
  for (const auto& set : model.forward_layers(features, queries)) terms.push_back(set_loss(set, gts, cfg));
  return nn::add_all(terms);
}

}  // namespace

Tensor pretrain_sample_loss(const nn::DetectionTransformer& model, const synthesis::SynthesizedSample& s,
                            const pretext::Condition& c, int max_instances, const matching::LossConfig& cfg) {
  const auto& enc = model.task_encoder();
  const int n_target = static_cast<int>(enc.input_dim()) - (2 * max_instances + 1) - 5;
  const auto cv = pretext::encode_condition(c, n_target, max_instances);
  const Tensor q = pretext::condition_queries(model.queries(), cv, enc);
  return model_loss(model, s.features, q, pretext_targets(s, c), cfg);
}

Tensor finetune_sample_loss(const nn::DetectionTransformer& model, const downstream::Video& v,
                            const matching::LossConfig& cfg) {
  return model_loss(model, v.features, model.queries(), video_targets(v), cfg);
}

double validation_loss(const nn::DetectionTransformer& model, const downstream::DetectionDataset& ds,
                       const matching::LossConfig& cfg) {
  if (ds.videos.empty()) throw UsageError("validation set is empty");
  nn::NoGradGuard guard;
  double s = 0.0;
  for (const auto& v : ds.videos) s += finetune_sample_loss(model, v, cfg).item();
  return s / static_cast<double>(ds.videos.size());
}

// ---- Checkpoints -------------------------------------------------------------

void save_checkpoint(const std::filesystem::path& dir, const TrainResult& r, const TrainConfig& cfg,
                     const json& extra) {
  nn::TensorFile f;
  const auto& items = r.model.parameters().items();
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& [name, t] = items[i];
    std::vector<double> vals(t.value().begin(), t.value().end());
    f.tensors["model/" + name] = {t.rows(), t.cols(), std::move(vals)};
    if (i < r.optimizer.m.size()) {
      f.tensors["adam_m/" + name] = {t.rows(), t.cols(), r.optimizer.m[i]};
      f.tensors["adam_v/" + name] = {t.rows(), t.cols(), r.optimizer.v[i]};
    }
  }
  f.meta = {{"phase", to_string(cfg.phase)},
            {"model_config", nn::model_config_to_json(r.model.config())},
            {"train_config", train_config_to_json(cfg)},
            {"epochs_done", r.epochs_done},
            {"steps_done", r.steps_done},
            {"adam_t", r.optimizer.t},
            {"epoch_loss", r.epoch_loss},
            {"val_loss", r.val_loss},
            {"train_size", r.train_size},
            {"rng", {{"seed", cfg.seed}, {"next_epoch", r.epochs_done}}},
            {"extra", extra}};
  nn::save_tensor_file(dir, f);
}

LoadedModel load_model(const std::filesystem::path& dir) {
  const auto f = nn::load_tensor_file(dir);
  LoadedModel m;
  m.meta = f.meta;
  try {
    m.config = nn::model_config_from_json(f.meta.at("model_config"));
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("checkpoint lacks a model config: ") + e.what());
  }
  for (const auto& [name, arr] : f.tensors) {
    if (name.rfind("model/", 0) == 0) m.state.emplace(name.substr(6), arr);
  }
  return m;
}

nn::DetectionTransformer instantiate(const LoadedModel& m) {
  nn::DetectionTransformer model(m.config);
  model.parameters().load(m.state, true);
  return model;
}

namespace {

std::filesystem::path checkpoint_dir(const RunOptions& o) { return o.out_dir / "checkpoint"; }
std::filesystem::path log_path(const RunOptions& o) { return o.out_dir / "train_log.jsonl"; }

json log_json(const LogRecord& r) {
  return {{"step", r.step}, {"epoch", r.epoch}, {"loss", r.loss}, {"lr", r.lr}, {"phase", r.phase}};
}

void write_log(const RunOptions& o, const std::vector<LogRecord>& log) {
  std::string text;
  for (const auto& r : log) text += log_json(r).dump() + "\n";
  write_text_atomic(log_path(o), text);
}

std::vector<LogRecord> read_log(const RunOptions& o) {
  std::vector<LogRecord> out;
  std::ifstream in(log_path(o));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = json::parse(line);
    out.push_back({j.at("step").get<long>(), j.at("epoch").get<int>(), j.at("loss").get<double>(),
                   j.at("lr").get<double>(), j.at("phase").get<std::string>()});
  }
  return out;
}

// Restores model, optimizer and history from <out_dir>/checkpoint when resuming.
bool try_resume(TrainResult& r, const TrainConfig& cfg, const RunOptions& o) {
  if (!o.resume || o.out_dir.empty()) return false;
  if (!std::filesystem::exists(checkpoint_dir(o) / "checkpoint.json")) return false;
  const auto f = nn::load_tensor_file(checkpoint_dir(o));
  try {
    if (train_config_from_json(f.meta.at("train_config")) != cfg) {
      throw CheckpointError("resume: training config differs from the checkpoint's");
    }
    if (nn::model_config_from_json(f.meta.at("model_config")) != r.model.config()) {
      throw CheckpointError("resume: model config differs from the checkpoint's");
    }
    nn::StateDict model_state;
    for (const auto& [name, arr] : f.tensors) {
      if (name.rfind("model/", 0) == 0) model_state.emplace(name.substr(6), arr);
    }
    r.model.parameters().load(model_state, true);
    const auto& items = r.model.parameters().items();
    for (std::size_t i = 0; i < items.size(); ++i) {
      r.optimizer.m[i] = f.tensors.at("adam_m/" + items[i].first).values;
      r.optimizer.v[i] = f.tensors.at("adam_v/" + items[i].first).values;
    }
    r.optimizer.t = f.meta.at("adam_t").get<long>();
    r.epochs_done = f.meta.at("epochs_done").get<int>();
    r.steps_done = f.meta.at("steps_done").get<long>();
    r.epoch_loss = f.meta.at("epoch_loss").get<std::vector<double>>();
    r.val_loss = f.meta.at("val_loss").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("resume: malformed checkpoint meta: ") + e.what());
  } catch (const std::out_of_range&) {
    throw CheckpointError("resume: checkpoint lacks optimizer moments");
  }
  for (const auto& rec : read_log(o)) {
    if (rec.epoch < r.epochs_done) r.log.push_back(rec);
  }
  return true;
}

using Item = std::function<Tensor()>;

// Shared epoch/step driver. `make_batch(epoch, b)` returns the per-sample loss
// closures of batch b.
void run_loop(TrainResult& r, const TrainConfig& cfg, long steps_per_epoch,
              const std::function<std::vector<Item>(int, long)>& make_batch, const RunOptions& o, const json& extra) {
  if (!o.out_dir.empty()) std::filesystem::create_directories(o.out_dir);
  auto& params = r.model.parameters();
  for (int epoch = r.epochs_done; epoch < cfg.epochs; ++epoch) {
    if (o.stop_after_epochs >= 0 && epoch >= o.stop_after_epochs) break;
    double epoch_sum = 0.0;
    for (long b = 0; b < steps_per_epoch; ++b) {
      const auto items = make_batch(epoch, b);
      const double lr = lr_at(r.steps_done, cfg, steps_per_epoch);
      const double inv = 1.0 / static_cast<double>(items.size());
      double batch_loss = 0.0;
      for (std::size_t k = 0; k < items.size(); ++k) {
        auto fail = [&](const std::string& loss_text) {
          const json diag = {{"phase", to_string(cfg.phase)}, {"epoch", epoch},  {"step", r.steps_done},
                             {"batch", b},                    {"item", k},      {"seed", cfg.seed},
                             {"loss", loss_text},             {"lr", lr}};
          if (!o.out_dir.empty()) write_text_atomic(o.out_dir / "diagnostic.json", diag.dump(2) + "\n");
          throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                              std::to_string(r.steps_done) + ", batch item " + std::to_string(k) + " (seed " +
                              std::to_string(cfg.seed) + ")");
        };
        Tensor loss;
        try {
          loss = items[k]();
        } catch (const DomainError& e) {
          // Non-finite network outputs surface first as matching costs.
          if (std::string(e.what()).find("non-finite") == std::string::npos) throw;
          fail(e.what());
        }
        const double v = loss.item();
        if (!std::isfinite(v)) fail(std::to_string(v));
        nn::scale(loss, inv).backward();
        batch_loss += v * inv;
      }
      clip_grad_norm(params, cfg.grad_clip);
      optimizer_step(params, r.optimizer, lr, cfg.weight_decay);
      params.zero_grad();
      LogRecord rec{r.steps_done, epoch, batch_loss, lr, to_string(cfg.phase)};
      r.log.push_back(rec);
      if (o.on_step) o.on_step(rec);
      ++r.steps_done;
      epoch_sum += batch_loss;
    }
    r.epoch_loss.push_back(epoch_sum / static_cast<double>(steps_per_epoch));
    std::optional<double> val;
    if (o.validation) {
      val = validation_loss(r.model, *o.validation, cfg.loss);
      r.val_loss.push_back(*val);
    }
    r.epochs_done = epoch + 1;
    if (o.on_epoch) o.on_epoch(epoch, r.epoch_loss.back(), val);
    if (!o.out_dir.empty()) {
      save_checkpoint(checkpoint_dir(o), r, cfg, extra);
      write_log(o, r.log);
    }
  }
}

}  // namespace

TrainResult pretrain(const featbank::FeatureBank& bank, const synthesis::SynthesisParams& synth,
                     const nn::ModelConfig& model_cfg, const TrainConfig& cfg, const RunOptions& opts) {
  if (cfg.phase != Phase::Pretrain) throw ConfigError("pretrain requires phase=pretrain");
  cfg.validate();
  synth.validate(bank);
  const int width = pretext::condition_width(bank.num_categories(), synth.max_instances);
  if (model_cfg.task_input_dim != width) {
    throw ConfigError("task_input_dim " + std::to_string(model_cfg.task_input_dim) + " should be " +
                      std::to_string(width) + " for this bank");
  }
  if (model_cfg.num_classes != 1) throw ConfigError("pre-training uses a single foreground class");

  TrainResult r{nn::DetectionTransformer(model_cfg), {}, 0, 0, {}, {}, {}, 0};
  r.optimizer = make_optimizer_state(r.model.parameters());
  r.train_size = static_cast<std::size_t>(cfg.samples_per_epoch);
  try_resume(r, cfg, opts);

  const long n = cfg.samples_per_epoch;
  const long bs = cfg.batch_size;
  const long steps = (n + bs - 1) / bs;
  const pretext::ConditionSampling sampling{cfg.p_cond, cfg.allow_joint};
  const std::uint64_t cond_seed = mix64(cfg.seed, 0xC0D1);

  auto make_batch = [&](int epoch, long b) {
    const std::uint64_t first = static_cast<std::uint64_t>(epoch) * static_cast<std::uint64_t>(n) +
                                static_cast<std::uint64_t>(b * bs);
    const auto count = static_cast<std::size_t>(std::min(bs, n - b * bs));
    auto samples = std::make_shared<std::vector<synthesis::SynthesizedSample>>(
        synthesis::synthesize_many(bank, synth, first, count, true));
    std::vector<Item> items;
    for (std::size_t k = 0; k < count; ++k) {
      Rng rng = make_rng(cond_seed, first + k);
      const auto cond = pretext::sample_condition((*samples)[k], sampling, rng);
      items.push_back([&, samples, k, cond] {
        return pretrain_sample_loss(r.model, (*samples)[k], cond, synth.max_instances, cfg.loss);
      });
    }
    return items;
  };
  const json extra = {{"synthesis",
                       {{"target_len", synth.target_len},
                        {"num_background", synth.num_background},
                        {"targets_min", synth.targets_min},
                        {"targets_max", synth.targets_max},
                        {"crop_min", synth.crop_min},
                        {"crop_max", synth.crop_max},
                        {"max_instances", synth.max_instances},
                        {"seed", synth.seed}}}};
  run_loop(r, cfg, steps, make_batch, opts, extra);
  return r;
}

nn::ModelConfig finetune_model_config(nn::ModelConfig base, int num_classes) {
  if (num_classes < 1) throw ConfigError("downstream set needs at least one class");
  base.num_classes = num_classes;
  base.task_input_dim = 0;
  return base;
}

std::vector<std::string> warm_start(nn::DetectionTransformer& model, const nn::StateDict& state) {
  nn::StateDict trunk;
  for (const auto& [name, arr] : state) {
    if (!nn::is_class_head_parameter(name) && !nn::is_task_encoder_parameter(name)) trunk.emplace(name, arr);
  }
  return model.parameters().load(trunk, false);
}

TrainResult finetune(const nn::StateDict* init, const nn::ModelConfig& base, const downstream::DetectionDataset& train,
                     const TrainConfig& cfg, const RunOptions& opts) {
  if (cfg.phase != Phase::Finetune) throw ConfigError("finetune requires phase=finetune");
  cfg.validate();
  const auto model_cfg = finetune_model_config(base, train.num_classes);
  TrainResult r{nn::DetectionTransformer(model_cfg), {}, 0, 0, {}, {}, {}, 0};
  if (init) warm_start(r.model, *init);
  r.optimizer = make_optimizer_state(r.model.parameters());

  const auto subset = data_fraction_subset(train, cfg.train_fraction, cfg.seed);
  if (subset.videos.empty()) throw ConfigError("training subset is empty");
  r.train_size = subset.videos.size();
  try_resume(r, cfg, opts);

  const long n = static_cast<long>(subset.videos.size());
  const long bs = cfg.batch_size;
  const long steps = (n + bs - 1) / bs;
  std::vector<std::size_t> order;
  int order_epoch = -1;

  auto make_batch = [&](int epoch, long b) {
    if (order_epoch != epoch) {
      order.resize(static_cast<std::size_t>(n));
      std::iota(order.begin(), order.end(), 0);
      Rng rng = make_rng(mix64(cfg.seed, 0x0DE5), static_cast<std::uint64_t>(epoch));
      std::shuffle(order.begin(), order.end(), rng);
      order_epoch = epoch;
    }
    std::vector<Item> items;
    for (long k = b * bs; k < std::min(n, (b + 1) * bs); ++k) {
      const auto& video = subset.videos[order[static_cast<std::size_t>(k)]];
      items.push_back([&r, &video, &cfg] { return finetune_sample_loss(r.model, video, cfg.loss); });
    }
    return items;
  };
  const json extra = {{"warm_start", init != nullptr}, {"train_videos", r.train_size}};
  run_loop(r, cfg, steps, make_batch, opts, extra);
  return r;
}

// ---- Inference -----------------------------------------------------------------

std::vector<evalkit::Detection> detect(const nn::DetectionTransformer& model, const downstream::DetectionDataset& ds) {
  nn::NoGradGuard guard;
  std::vector<evalkit::Detection> out;
  for (std::size_t vi = 0; vi < ds.videos.size(); ++vi) {
    const auto& v = ds.videos[vi];
    const auto set = model.forward(v.features, model.queries(), nullptr);
    const double len = v.length();
    for (std::size_t j = 0; j < set.size(); ++j) {
      const double c = set.boxes.at(j, 0);
      const double w = set.boxes.at(j, 1);
      const double s = std::clamp(c - 0.5 * w, 0.0, 1.0) * len;
      const double e = std::clamp(c + 0.5 * w, 0.0, 1.0) * len;
      if (!(e > s)) continue;
      for (std::size_t k = 0; k < set.num_classes(); ++k) {
        out.push_back({static_cast<int>(vi), static_cast<int>(k), {s, e}, set.class_probs.at(j, k)});
      }
    }
  }
  return out;
}

std::vector<evalkit::GroundTruth> ground_truth(const downstream::DetectionDataset& ds) {
  std::vector<evalkit::GroundTruth> out;
  for (std::size_t vi = 0; vi < ds.videos.size(); ++vi) {
    for (const auto& a : ds.videos[vi].instances) {
      out.push_back({static_cast<int>(vi), a.category, {double(a.interval.start), double(a.interval.end)}});
    }
  }
  return out;
}

std::map<int, double> video_lengths(const downstream::DetectionDataset& ds) {
  std::map<int, double> out;
  for (std::size_t vi = 0; vi < ds.videos.size(); ++vi) out[static_cast<int>(vi)] = ds.videos[vi].length();
  return out;
}

std::vector<nn::AttentionRecord> capture_attention(const nn::DetectionTransformer& model,
                                                   const downstream::DetectionDataset& ds, std::size_t max_videos) {
  nn::NoGradGuard guard;
  std::vector<nn::AttentionRecord> out;
  const std::size_t n = std::min(max_videos, ds.videos.size());
  for (std::size_t vi = 0; vi < n; ++vi) {
    nn::AttentionTrace trace;
    model.forward(ds.videos[vi].features, model.queries(), &trace);
    auto recs = nn::trace_records(static_cast<int>(vi), trace);
    out.insert(out.end(), std::make_move_iterator(recs.begin()), std::make_move_iterator(recs.end()));
  }
  return out;
}

}  // namespace ltp::trainer
