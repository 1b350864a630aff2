#include <cmath>
#include <filesystem>
#include <limits>

#include "doctest.h"
#include "ltp/trainer.hpp"

using namespace ltp;
using namespace ltp::trainer;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("ltp_test_" + name);
  std::filesystem::remove_all(p);
  return p;
}

struct Fixture {
  featbank::FeatureBank bank;
  featbank::FeatureBank pre_bank;
  synthesis::SynthesisParams synth;
  downstream::DetectionDataset train;
  nn::ModelConfig model;

  Fixture() {
    featbank::BankConfig bc;
    bc.num_categories = 8;
    bc.feature_dim = 8;
    bc.clips_per_category = 4;
    bc.clip_len_min = 4;
    bc.clip_len_max = 8;
    bank = featbank::generate_bank(bc);
    pre_bank = bank.slice_categories(0, 5);
    synth.target_len = 24;
    synth.num_background = 4;
    synth.targets_max = 3;
    synth.max_instances = 4;
    downstream::DownstreamParams dp;
    dp.video_len = 24;
    dp.instances_max = 3;
    train = downstream::generate(bank.slice_categories(5, 3), pre_bank, dp, 0, 10);
    model.feature_dim = 8;
    model.hidden_dim = 8;
    model.num_queries = 4;
    model.encoder_layers = 1;
    model.decoder_layers = 2;
    model.heads = 2;
    model.ffn_dim = 16;
    model.num_classes = 1;
    model.task_input_dim = pretext::condition_width(5, synth.max_instances);
  }

  TrainConfig pre_cfg() const {
    TrainConfig c = TrainConfig::pretrain_desk();
    c.batch_size = 3;
    c.epochs = 2;
    c.samples_per_epoch = 6;
    c.schedule.warmup_epochs = 1;
    c.base_lr = 1e-3;
    c.seed = 5;
    return c;
  }

  TrainConfig ft_cfg() const {
    TrainConfig c = TrainConfig::finetune_desk();
    c.batch_size = 4;
    c.epochs = 2;
    c.schedule.warmup_epochs = 1;
    c.base_lr = 1e-3;
    c.seed = 6;
    return c;
  }
};

}  // namespace

TEST_CASE("cosine warmup schedule") {
  TrainConfig c;
  c.base_lr = 0.01;
  c.epochs = 10;
  c.schedule.warmup_epochs = 2;
  const long spe = 7;
  CHECK(lr_at(0, c, spe) == doctest::Approx(0.01 / 14));
  CHECK(lr_at(13, c, spe) == doctest::Approx(0.01));
  CHECK(lr_at(14, c, spe) == doctest::Approx(0.01));
  CHECK(lr_at(14 + 28, c, spe) == doctest::Approx(0.005));
  CHECK(lr_at(70, c, spe) == doctest::Approx(0.0).epsilon(1e-15));
  for (long s = 14; s < 70; ++s) CHECK(lr_at(s + 1, c, spe) <= lr_at(s, c, spe));
  CHECK_THROWS_AS(lr_at(-1, c, spe), DomainError);
}

TEST_CASE("step schedule") {
  TrainConfig c;
  c.base_lr = 1.0;
  c.schedule.kind = ScheduleConfig::Kind::Step;
  c.schedule.milestones = {80, 100};
  c.schedule.factor = 0.1;
  CHECK(lr_at(79 * 5, c, 5) == 1.0);
  CHECK(lr_at(90 * 5, c, 5) == doctest::Approx(0.1));
  CHECK(lr_at(100 * 5, c, 5) == doctest::Approx(0.01));
  c.schedule.milestones = {100, 80};
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("adamw closed forms") {
  SUBCASE("zero gradient and no decay is a no-op") {
    std::vector<double> p{0.5, -2.0}, g{0, 0}, m{0, 0}, v{0, 0};
    adamw_update(p, g, m, v, 1, 0.1, 0.0);
    CHECK(p == std::vector<double>{0.5, -2.0});
  }
  SUBCASE("decay alone shrinks by 1 - lr wd") {
    std::vector<double> p{0.5, -2.0}, g{0, 0}, m{0, 0}, v{0, 0};
    for (long t = 1; t <= 5; ++t) adamw_update(p, g, m, v, t, 0.1, 0.2);
    CHECK(p[0] == doctest::Approx(0.5 * std::pow(0.98, 5)).epsilon(1e-14));
    CHECK(p[1] == doctest::Approx(-2.0 * std::pow(0.98, 5)).epsilon(1e-14));
  }
  SUBCASE("first step has magnitude lr") {
    std::vector<double> p{0.0}, g{3.7}, m{0}, v{0};
    adamw_update(p, g, m, v, 1, 0.01, 0.0);
    CHECK(p[0] == doctest::Approx(-0.01 * 3.7 / (3.7 + 1e-8)).epsilon(1e-12));
  }
  SUBCASE("constant gradient steps approach lr") {
    std::vector<double> p{0.0}, g{-0.3}, m{0}, v{0};
    double prev = 0.0;
    for (long t = 1; t <= 2000; ++t) {
      adamw_update(p, g, m, v, t, 1e-3, 0.0);
      const double step = p[0] - prev;
      prev = p[0];
      // Bias-corrected moments of a constant are exact: every step is lr * g / (|g| + eps).
      CHECK(step == doctest::Approx(1e-3 * 0.3 / (0.3 + 1e-8)).epsilon(1e-9));
    }
  }
}

TEST_CASE("gradient clipping") {
  nn::ParameterSet ps;
  auto a = ps.add("a", nn::Tensor::parameter(1, 2, {1.0, 1.0}));
  nn::sum(nn::scale(a, 3.0)).backward();
  CHECK(clip_grad_norm(ps, 0.1) == doctest::Approx(std::sqrt(18.0)));
  const auto g = a.grad();
  CHECK(std::hypot(g[0], g[1]) == doctest::Approx(0.1));
}

TEST_CASE("data fraction split") {
  CHECK(data_fraction_split(100, 0.5, 1).size() == 50u);
  CHECK(data_fraction_split(10, 0.25, 1).size() == 3u);
  CHECK(data_fraction_split(10, 0.3, 1).size() == 3u);
  const auto all = data_fraction_split(17, 1.0, 3);
  for (std::size_t i = 0; i < 17; ++i) CHECK(all[i] == i);
  const auto small = data_fraction_split(40, 0.1, 9);
  const auto mid = data_fraction_split(40, 0.5, 9);
  for (auto i : small) CHECK(std::find(mid.begin(), mid.end(), i) != mid.end());
  CHECK(data_fraction_split(40, 0.5, 9) == mid);
  CHECK_FALSE(data_fraction_split(40, 0.5, 10) == mid);
  CHECK_THROWS_AS(data_fraction_split(10, 0.0, 1), DomainError);
  CHECK_THROWS_AS(data_fraction_split(10, 1.5, 1), DomainError);
}

TEST_CASE("config json round trip") {
  auto c = TrainConfig::finetune_desk();
  c.schedule.kind = ScheduleConfig::Kind::Step;
  c.schedule.milestones = {3, 5};
  c.loss.aux_layers = true;
  CHECK(train_config_from_json(train_config_to_json(c)) == c);
  auto j = train_config_to_json(c);
  j["phase"] = "warmup";
  CHECK_THROWS_AS(train_config_from_json(j), ConfigError);
}

TEST_CASE("pretraining is deterministic and resumes bit-exactly") {
  Fixture f;
  const auto a = pretrain(f.pre_bank, f.synth, f.model, f.pre_cfg());
  const auto b = pretrain(f.pre_bank, f.synth, f.model, f.pre_cfg());
  CHECK(a.model.parameters().state() == b.model.parameters().state());
  CHECK(a.epoch_loss.size() == 2u);
  CHECK(a.steps_done == 4);
  for (const auto& r : a.log) CHECK(std::isfinite(r.loss));

  const auto dir = temp_dir("resume");
  RunOptions o;
  o.out_dir = dir;
  o.stop_after_epochs = 1;
  const auto half = pretrain(f.pre_bank, f.synth, f.model, f.pre_cfg(), o);
  CHECK(half.epochs_done == 1);
  CHECK(std::filesystem::exists(dir / "checkpoint" / "checkpoint.json"));
  o.stop_after_epochs = -1;
  o.resume = true;
  const auto rest = pretrain(f.pre_bank, f.synth, f.model, f.pre_cfg(), o);
  CHECK(rest.epochs_done == 2);
  CHECK(rest.model.parameters().state() == a.model.parameters().state());
  CHECK(rest.optimizer.m == a.optimizer.m);
  CHECK(rest.epoch_loss == a.epoch_loss);
  CHECK(std::filesystem::exists(dir / "train_log.jsonl"));

  SUBCASE("resume with a different config is refused") {
    auto other = f.pre_cfg();
    other.base_lr = 5e-4;
    CHECK_THROWS_AS(pretrain(f.pre_bank, f.synth, f.model, other, o), CheckpointError);
  }
}

TEST_CASE("pretraining requires a matching task encoder") {
  Fixture f;
  auto m = f.model;
  m.task_input_dim = 0;
  CHECK_THROWS_AS(pretrain(f.pre_bank, f.synth, m, f.pre_cfg()), ConfigError);
}

TEST_CASE("warm start") {
  Fixture f;
  const auto pre = pretrain(f.pre_bank, f.synth, f.model, f.pre_cfg());
  const auto state = pre.model.parameters().state();
  auto cfg = f.ft_cfg();
  cfg.epochs = 0;
  const auto ft = finetune(&state, f.model, f.train, cfg);
  const auto after = ft.model.parameters().state();
  CHECK(ft.model.config().num_classes == 3);
  CHECK_FALSE(ft.model.has_task_encoder());
  CHECK(after.at("class_head.weight").rows == 8u);
  CHECK(after.at("class_head.weight").cols == 4u);
  for (const auto& [name, arr] : after) {
    if (nn::is_class_head_parameter(name)) continue;
    CHECK(arr == state.at(name));
  }
  auto wide = f.model;
  wide.hidden_dim = 16;
  wide.ffn_dim = 16;
  CHECK_THROWS_AS(finetune(&state, wide, f.train, cfg), CheckpointError);
}

TEST_CASE("scratch and warm start share the data order") {
  Fixture f;
  const auto pre = pretrain(f.pre_bank, f.synth, f.model, f.pre_cfg());
  const auto state = pre.model.parameters().state();
  auto cfg = f.ft_cfg();
  cfg.train_fraction = 0.5;
  const auto warm = finetune(&state, f.model, f.train, cfg);
  const auto cold = finetune(nullptr, f.model, f.train, cfg);
  CHECK(warm.train_size == 5u);
  CHECK(cold.train_size == 5u);
  CHECK(warm.steps_done == cold.steps_done);
  REQUIRE(warm.log.size() == cold.log.size());
  for (std::size_t i = 0; i < warm.log.size(); ++i) CHECK(warm.log[i].lr == cold.log[i].lr);
}

TEST_CASE("non-finite loss aborts with a diagnostic") {
  Fixture f;
  auto bad = f.train;
  bad.videos[0].features.data[0] = std::numeric_limits<float>::quiet_NaN();
  auto cfg = f.ft_cfg();
  cfg.batch_size = 100;
  const auto dir = temp_dir("nan");
  RunOptions o;
  o.out_dir = dir;
  CHECK_THROWS_AS(finetune(nullptr, f.model, bad, cfg, o), TrainingError);
  CHECK(std::filesystem::exists(dir / "diagnostic.json"));
}

TEST_CASE("checkpoint load and inference outputs") {
  Fixture f;
  const auto dir = temp_dir("ckpt");
  RunOptions o;
  o.out_dir = dir;
  const auto r = finetune(nullptr, f.model, f.train, f.ft_cfg(), o);
  const auto loaded = load_model(dir / "checkpoint");
  const auto model = instantiate(loaded);
  CHECK(model.parameters().state() == r.model.parameters().state());
  const auto dets = detect(model, f.train);
  CHECK(dets.size() == f.train.videos.size() * 4 * 3);
  for (const auto& d : dets) {
    CHECK(d.segment.start >= 0.0);
    CHECK(d.segment.end <= 24.0);
  }
  CHECK(ground_truth(f.train).size() > 0u);
  const auto recs = capture_attention(model, f.train, 2);
  CHECK(recs.size() == 2u * (1 + 2 * 2));
  CHECK_THROWS_AS(load_model(dir / "missing"), CheckpointError);
}
