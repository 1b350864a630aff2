#include "cli.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "ltp/analysis.hpp"
#include "ltp/dataset_io.hpp"
#include "ltp/experiment.hpp"
#include "ltp/featbank.hpp"
#include "ltp/trainer.hpp"

namespace ltp::cli {

using nlohmann::json;
namespace fs = std::filesystem;

json invocation_to_json(const Invocation& inv) {
  return {{"command", inv.command},
          {"options", inv.options},
          {"config", inv.config},
          {"threads", inv.threads},
          {"out", inv.out.string()}};
}

Invocation invocation_from_json(const json& j) {
  Invocation inv;
  try {
    inv.command = j.at("command").get<std::string>();
    inv.options = j.at("options").get<std::map<std::string, std::string>>();
    inv.config = j.at("config");
    inv.threads = j.at("threads").get<int>();
    inv.out = j.at("out").get<std::string>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed run manifest: ") + e.what());
  }
  return inv;
}

void apply_override(json& tree, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  std::string pointer = "/" + assignment.substr(0, eq);
  std::replace(pointer.begin(), pointer.end(), '.', '/');
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  const json::json_pointer ptr(pointer);
  if (!tree.contains(ptr)) throw ConfigError("unknown config key '" + assignment.substr(0, eq) + "'");
  tree[ptr] = value;
}

namespace {

// ---- helpers -------------------------------------------------------------------

const std::string& opt(const Invocation& inv, const std::string& name) {
  auto it = inv.options.find(name);
  if (it == inv.options.end() || it->second.empty()) {
    throw UsageError(inv.command + ": missing required option --" + name);
  }
  return it->second;
}

bool has_opt(const Invocation& inv, const std::string& name) {
  auto it = inv.options.find(name);
  return it != inv.options.end() && !it->second.empty();
}

bool flag(const Invocation& inv, const std::string& name) {
  auto it = inv.options.find(name);
  return it != inv.options.end() && it->second == "true";
}

fs::path require_dir(const std::string& path, const std::string& what) {
  if (!fs::exists(path)) throw LookupError(what + " not found: " + path);
  return fs::path(path);
}

std::string iso_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json seeds_of(const json& config) {
  return {{"bank", config.at("bank").at("seed")},
          {"synthesis", config.at("synthesis").at("seed")},
          {"downstream", config.at("downstream").at("seed")},
          {"model_init", config.at("model").at("init_seed")},
          {"pretrain", config.at("pretrain").at("seed")},
          {"finetune", config.at("finetune").at("seed")}};
}

json input_paths(const Invocation& inv) {
  json in = json::object();
  for (const char* key : {"bank", "data", "init", "checkpoint"}) {
    if (has_opt(inv, key)) in[key] = inv.options.at(key);
  }
  return in;
}

void write_manifest(const Invocation& inv, const std::string& started, double seconds, const json& results) {
  json m = invocation_to_json(inv);
  m["seeds"] = seeds_of(inv.config);
  m["inputs"] = input_paths(inv);
  m["tool_version"] = kToolVersion;
  m["wall_clock"] = {{"started", started}, {"seconds", seconds}};
  json outputs = json::array();
  if (fs::exists(inv.out)) {
    std::vector<std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(inv.out)) {
      if (e.is_regular_file() && e.path().filename() != "run_manifest.json") {
        files.push_back(fs::relative(e.path(), inv.out).string());
      }
    }
    std::sort(files.begin(), files.end());
    outputs = files;
  }
  m["outputs"] = outputs;
  m["results"] = results;
  fs::create_directories(inv.out);
  write_text_atomic(inv.out / "run_manifest.json", m.dump(2) + "\n");
}

experiment::BenchmarkProfile profile_of(const Invocation& inv) {
  auto p = experiment::profile_from_json(inv.config);
  p.validate();
  return p;
}

// A run directory (with checkpoint/) or the checkpoint directory itself.
fs::path checkpoint_path(const std::string& path) {
  const fs::path p(path);
  if (fs::exists(p / "checkpoint" / "checkpoint.json")) return p / "checkpoint";
  if (fs::exists(p / "checkpoint.json")) return p;
  throw CheckpointError("no checkpoint at " + path);
}

// A gen-downstream directory (train/, test/) or a dataset directory.
fs::path dataset_path(const std::string& path, const char* split) {
  const fs::path p(path);
  if (fs::exists(p / split / "dataset_manifest.json")) return p / split;
  if (fs::exists(p / "dataset_manifest.json")) return p;
  throw LookupError("no dataset at " + path);
}

// ---- commands --------------------------------------------------------------------

json cmd_gen_bank(const Invocation& inv) {
  const auto p = profile_of(inv);
  const auto bank = featbank::generate_bank(p.bank);
  featbank::save_bank(bank, inv.out);
  return {{"categories", bank.num_categories()}, {"clips", bank.total_clips()}};
}

json cmd_synth(const Invocation& inv) {
  const auto p = profile_of(inv);
  const auto full = featbank::load_bank(require_dir(opt(inv, "bank"), "bank"));
  const auto bank = full.slice_categories(0, std::min(p.pretrain_categories, full.num_categories()));
  const std::size_t count =
      has_opt(inv, "count") ? std::stoul(opt(inv, "count")) : static_cast<std::size_t>(p.pretrain.samples_per_epoch);
  const std::uint64_t first = has_opt(inv, "first") ? std::stoull(opt(inv, "first")) : 0;
  dataset_io::PretextDataset ds;
  ds.samples = synthesis::synthesize_many(bank, p.synth, first, count, true);
  const pretext::ConditionSampling sampling{p.pretrain.p_cond, p.pretrain.allow_joint};
  const std::uint64_t cond_seed = mix64(p.pretrain.seed, 0xC0D1);
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    Rng rng = make_rng(cond_seed, first + i);
    ds.conditions.push_back(pretext::sample_condition(ds.samples[i], sampling, rng));
  }
  ds.meta = {{"first", first}, {"synthesis_seed", p.synth.seed}, {"p_cond", p.pretrain.p_cond}};
  dataset_io::save_pretext(inv.out, ds);
  return {{"samples", ds.samples.size()}};
}

json cmd_gen_downstream(const Invocation& inv) {
  const auto p = profile_of(inv);
  const auto full = featbank::load_bank(require_dir(opt(inv, "bank"), "bank"));
  const int held_out = full.num_categories() - p.pretrain_categories;
  if (held_out < 1) throw ConfigError("bank has no categories beyond pretrain_categories");
  const auto background = full.slice_categories(0, p.pretrain_categories);
  const auto actions = full.slice_categories(p.pretrain_categories, held_out);
  const auto train = downstream::generate(actions, background, p.down, 0, static_cast<std::size_t>(p.train_videos));
  const auto test = downstream::generate(actions, background, p.down, static_cast<std::uint64_t>(p.train_videos),
                                         static_cast<std::size_t>(p.test_videos));
  const json meta = {{"first_category", p.pretrain_categories}, {"downstream_seed", p.down.seed}};
  dataset_io::save_detection(inv.out / "train", train, meta);
  dataset_io::save_detection(inv.out / "test", test, meta);
  return {{"train_videos", train.videos.size()}, {"test_videos", test.videos.size()}, {"classes", held_out}};
}

trainer::RunOptions run_options(const Invocation& inv) {
  trainer::RunOptions o;
  o.out_dir = inv.out;
  o.resume = flag(inv, "resume");
  if (has_opt(inv, "stop-after-epochs")) o.stop_after_epochs = std::stoi(opt(inv, "stop-after-epochs"));
  o.on_epoch = [](int epoch, double loss, std::optional<double> val) {
    std::cerr << "epoch " << epoch + 1 << " loss " << loss;
    if (val) std::cerr << " val " << *val;
    std::cerr << '\n';
  };
  return o;
}

json cmd_pretrain(const Invocation& inv) {
  const auto p = profile_of(inv);
  const auto full = featbank::load_bank(require_dir(opt(inv, "bank"), "bank"));
  const auto bank = full.slice_categories(0, std::min(p.pretrain_categories, full.num_categories()));
  nn::ModelConfig mc = p.model;
  mc.feature_dim = bank.feature_dim();
  mc.num_classes = 1;
  mc.task_input_dim = pretext::condition_width(bank.num_categories(), p.synth.max_instances);
  const auto r = trainer::pretrain(bank, p.synth, mc, p.pretrain, run_options(inv));
  return {{"epochs_done", r.epochs_done}, {"steps_done", r.steps_done}, {"epoch_loss", r.epoch_loss}};
}

json cmd_finetune(const Invocation& inv) {
  const auto p = profile_of(inv);
  const auto train = dataset_io::load_detection(dataset_path(opt(inv, "data"), "train"));
  std::optional<downstream::DetectionDataset> val;
  if (fs::exists(fs::path(opt(inv, "data")) / "test" / "dataset_manifest.json")) {
    val = dataset_io::load_detection(fs::path(opt(inv, "data")) / "test");
  }
  auto cfg = p.finetune;
  if (has_opt(inv, "train-fraction")) cfg.train_fraction = std::stod(opt(inv, "train-fraction"));
  const bool scratch = flag(inv, "scratch");
  if (scratch == has_opt(inv, "init")) throw UsageError("finetune needs exactly one of --init or --scratch");

  nn::ModelConfig base = p.model;
  base.feature_dim = train.feature_dim;
  std::optional<trainer::LoadedModel> init;
  if (!scratch) {
    init = trainer::load_model(checkpoint_path(opt(inv, "init")));
    base = init->config;
    if (base.feature_dim != train.feature_dim) throw CheckpointError("checkpoint feature dim differs from dataset");
  }
  auto opts = run_options(inv);
  if (val) opts.validation = &*val;
  const auto r = trainer::finetune(init ? &init->state : nullptr, base, train, cfg, opts);
  return {{"train_fraction", cfg.train_fraction},
          {"train_size", r.train_size},
          {"scratch", scratch},
          {"epochs_done", r.epochs_done},
          {"epoch_loss", r.epoch_loss},
          {"val_loss", r.val_loss}};
}

json cmd_eval(const Invocation& inv) {
  const auto p = profile_of(inv);
  const auto loaded = trainer::load_model(checkpoint_path(opt(inv, "checkpoint")));
  const auto model = trainer::instantiate(loaded);
  const auto test = dataset_io::load_detection(dataset_path(opt(inv, "data"), "test"));
  const auto protocol = has_opt(inv, "protocol") ? evalkit::protocol_from_string(opt(inv, "protocol")) : p.protocol;
  const auto thetas = evalkit::thresholds(protocol);
  const auto dets = trainer::detect(model, test);
  const auto gts = trainer::ground_truth(test);
  evalkit::EvalReport rep;
  rep.protocol = protocol;
  rep.table = evalkit::map_over_thresholds(dets, gts, thetas);
  rep.buckets = evalkit::detad_sensitivity(dets, gts, trainer::video_lengths(test), thetas);
  fs::create_directories(inv.out);
  evalkit::write_detections(inv.out / "predictions.jsonl", dets);
  evalkit::write_ground_truth(inv.out / "ground_truth.jsonl", gts);
  evalkit::write_report(inv.out, rep);

  // Run descriptors for report: fraction and warm start of the evaluated model.
  json run = {{"train_fraction", 1.0}, {"warm_start", false}, {"train_size", nullptr}};
  const auto& meta = loaded.meta;
  if (meta.contains("train_config")) run["train_fraction"] = meta["train_config"].value("train_fraction", 1.0);
  if (meta.contains("extra")) run["warm_start"] = meta["extra"].value("warm_start", false);
  if (meta.contains("train_size")) run["train_size"] = meta["train_size"];
  run["phase"] = meta.value("phase", "");
  write_text_atomic(inv.out / "run_info.json", run.dump(2) + "\n");
  return {{"protocol", evalkit::to_string(protocol)}, {"average_map", rep.table.average}};
}

json cmd_analyze(const Invocation& inv) {
  const auto p = profile_of(inv);
  const auto model = trainer::instantiate(trainer::load_model(checkpoint_path(opt(inv, "checkpoint"))));
  const auto test = dataset_io::load_detection(dataset_path(opt(inv, "data"), "test"));
  const std::size_t videos = has_opt(inv, "videos") ? std::stoul(opt(inv, "videos")) : p.analysis_videos;
  const auto records = trainer::capture_attention(model, test, videos);
  nn::save_attention_dump(inv.out / "attention", records);
  const auto rep = analysis::layer_diversity_profile(records);
  analysis::write_report(inv.out, rep);
  return {{"layers", rep.layers.size()}, {"final_encoder_mean", rep.final_encoder_mean()}};
}

json cmd_report(const Invocation& inv) {
  std::vector<std::string> dirs;
  {
    std::stringstream ss(opt(inv, "runs"));
    std::string d;
    while (std::getline(ss, d, '\n')) {
      if (!d.empty()) dirs.push_back(d);
    }
  }
  struct Row {
    std::string id;
    double fraction;
    bool warm;
    json report;
  };
  std::vector<Row> rows;
  std::string protocol;
  for (const auto& d : dirs) {
    const fs::path dir(d);
    if (!fs::exists(dir / "eval_report.json")) throw LookupError("no eval_report.json in " + d);
    const auto text = read_file(dir / "eval_report.json");
    const json rep = json::parse(text.begin(), text.end());
    json info = json::object();
    if (fs::exists(dir / "run_info.json")) {
      const auto t = read_file(dir / "run_info.json");
      info = json::parse(t.begin(), t.end());
    }
    const auto proto = rep.at("protocol").get<std::string>();
    if (!protocol.empty() && proto != protocol) {
      throw UsageError("runs use different protocols: " + protocol + " vs " + proto + " (" + d + ")");
    }
    protocol = proto;
    rows.push_back({fs::absolute(dir).lexically_normal().filename().string(), info.value("train_fraction", 1.0),
                    info.value("warm_start", false), rep});
  }
  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    if (a.fraction != b.fraction) return a.fraction < b.fraction;
    return a.id < b.id;
  });
  const auto proto = evalkit::protocol_from_string(protocol);
  const auto points = evalkit::report_points(proto);
  std::ostringstream csv;
  csv << "run_id,train_fraction,warm_start";
  for (double pt : points) {
    char b[16];
    std::snprintf(b, sizeof b, "map@%.2f", pt);
    csv << ',' << b;
  }
  csv << ",avg_map\n";
  json out = json::array();
  for (const auto& r : rows) {
    const auto th = r.report.at("thresholds").get<std::vector<double>>();
    const auto mp = r.report.at("map").get<std::vector<double>>();
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4f", r.fraction);
    csv << r.id << ',' << buf << ',' << (r.warm ? "ltp" : "scratch");
    json entry = {{"run_id", r.id}, {"train_fraction", r.fraction}, {"warm_start", r.warm}};
    for (double pt : points) {
      for (std::size_t i = 0; i < th.size(); ++i) {
        if (std::abs(th[i] - pt) < 1e-9) {
          std::snprintf(buf, sizeof buf, "%.6f", mp[i]);
          csv << ',' << buf;
        }
      }
    }
    const double avg = r.report.at("average").get<double>();
    std::snprintf(buf, sizeof buf, "%.6f", avg);
    csv << ',' << buf << '\n';
    entry["map"] = mp;
    entry["thresholds"] = th;
    entry["average"] = avg;
    out.push_back(entry);
  }
  fs::create_directories(inv.out);
  write_text_atomic(inv.out / "report.csv", csv.str());
  write_text_atomic(inv.out / "report.json", json({{"protocol", protocol}, {"runs", out}}).dump(2) + "\n");
  return {{"runs", rows.size()}};
}

json cmd_benchmark(const Invocation& inv) {
  const auto p = profile_of(inv);
  std::vector<std::uint64_t> seeds;
  {
    std::stringstream ss(has_opt(inv, "seeds") ? opt(inv, "seeds") : std::string("1,2,3"));
    std::string s;
    while (std::getline(ss, s, ',')) seeds.push_back(std::stoull(s));
  }
  const auto bench = experiment::build_benchmark(p);
  json outcomes = json::array();
  for (auto seed : seeds) {
    const auto o = experiment::run_seed(p, bench, seed, [](const std::string& s) { std::cerr << s << '\n'; });
    outcomes.push_back(experiment::outcome_to_json(o));
    fs::create_directories(inv.out);
    write_text_atomic(inv.out / "benchmark.json", json({{"outcomes", outcomes}}).dump(2) + "\n");
  }
  return {{"seeds", seeds}};
}

json dispatch(const Invocation& inv) {
  const auto& c = inv.command;
  if (c == "gen-bank") return cmd_gen_bank(inv);
  if (c == "synth") return cmd_synth(inv);
  if (c == "gen-downstream") return cmd_gen_downstream(inv);
  if (c == "pretrain") return cmd_pretrain(inv);
  if (c == "finetune") return cmd_finetune(inv);
  if (c == "eval") return cmd_eval(inv);
  if (c == "analyze") return cmd_analyze(inv);
  if (c == "report") return cmd_report(inv);
  if (c == "benchmark") return cmd_benchmark(inv);
  throw UsageError("unknown command " + c);
}

// Which seeds --seed sets for each command.
void apply_seed(json& config, const std::string& command, std::uint64_t seed) {
  if (command == "gen-bank") config["bank"]["seed"] = seed;
  if (command == "synth") config["synthesis"]["seed"] = seed;
  if (command == "gen-downstream") config["downstream"]["seed"] = seed;
  if (command == "pretrain") {
    config["pretrain"]["seed"] = seed;
    config["model"]["init_seed"] = seed;
  }
  if (command == "finetune") {
    config["finetune"]["seed"] = seed;
    config["model"]["init_seed"] = seed;
  }
}

}  // namespace

void execute(const Invocation& inv) {
  if (inv.out.empty()) throw UsageError(inv.command + ": --out is required");
  if (inv.threads < 1) throw UsageError("--threads must be positive");
  omp_set_num_threads(inv.threads);
  const std::string started = iso_now();
  const auto t0 = std::chrono::steady_clock::now();
  write_manifest(inv, started, 0.0, nullptr);
  const json results = dispatch(inv);
  write_manifest(inv, started, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), results);
}

namespace {

int execute_guarded(const Invocation& inv) {
  try {
    execute(inv);
    return kOk;
  } catch (const TrainingError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kUsage;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const LookupError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << '\n';
    return kUsage;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << " (byte " << e.byte_offset() << ")\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "runtime failure: " << e.what() << '\n';
    if (!inv.out.empty()) {
      try {
        fs::create_directories(inv.out);
        write_text_atomic(inv.out / "diagnostic.json",
                          json({{"error", e.what()}, {"invocation", invocation_to_json(inv)}}).dump(2) + "\n");
      } catch (...) {
      }
    }
    return kRuntime;
  }
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Long-term pre-training pipeline for temporal action detection"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  struct Common {
    std::string config, profile = "desk", out, seed;
    std::vector<std::string> sets;
    int threads = 1;
  };
  Common common;
  std::map<std::string, std::string> values;
  std::vector<std::string> runs;
  bool scratch = false, resume = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "JSON config file merged over the profile");
    sub->add_option("--profile", common.profile, "Base profile")->check(CLI::IsMember({"desk", "paper", "acceptance"}));
    sub->add_option("--set", common.sets, "Override a config key: dotted.key=value");
    sub->add_option("--seed", common.seed, "Seed for this command's stochastic stage");
    sub->add_option("--out", common.out, "Output directory")->required();
    sub->add_option("--threads", common.threads, "OpenMP threads (1 gives the reference behavior)");
  };
  auto add_value = [&](CLI::App* sub, const std::string& name, const std::string& help, bool required = false) {
    auto* o = sub->add_option("--" + name, values[name], help);
    if (required) o->required();
  };

  auto* gen_bank = app.add_subcommand("gen-bank", "Generate a synthetic trimmed-clip feature bank");
  add_common(gen_bank);
  auto* synth = app.add_subcommand("synth", "Synthesize a conditioned pre-training dataset");
  add_common(synth);
  add_value(synth, "bank", "Bank directory", true);
  add_value(synth, "count", "Number of samples");
  add_value(synth, "first", "First sample index");
  auto* gen_down = app.add_subcommand("gen-downstream", "Generate the downstream detection benchmark");
  add_common(gen_down);
  add_value(gen_down, "bank", "Bank directory", true);
  auto* pretrain = app.add_subcommand("pretrain", "Pre-train on synthesized pretext tasks");
  add_common(pretrain);
  add_value(pretrain, "bank", "Bank directory", true);
  pretrain->add_flag("--resume", resume, "Continue from the checkpoint in --out");
  add_value(pretrain, "stop-after-epochs", "Stop early after this many epochs");
  auto* finetune = app.add_subcommand("finetune", "Fine-tune on the downstream benchmark");
  add_common(finetune);
  add_value(finetune, "data", "gen-downstream directory", true);
  add_value(finetune, "init", "Pre-training run or checkpoint directory");
  add_value(finetune, "train-fraction", "Fraction of training videos in (0, 1]");
  finetune->add_flag("--scratch", scratch, "Train from random initialization");
  finetune->add_flag("--resume", resume, "Continue from the checkpoint in --out");
  add_value(finetune, "stop-after-epochs", "Stop early after this many epochs");
  auto* eval = app.add_subcommand("eval", "Evaluate mAP and sensitivity buckets");
  add_common(eval);
  add_value(eval, "checkpoint", "Run or checkpoint directory", true);
  add_value(eval, "data", "Dataset directory", true);
  add_value(eval, "protocol", "thumos_style or anet_style");
  auto* analyze = app.add_subcommand("analyze", "Per-layer attention diversity");
  add_common(analyze);
  add_value(analyze, "checkpoint", "Run or checkpoint directory", true);
  add_value(analyze, "data", "Dataset directory", true);
  add_value(analyze, "videos", "Number of videos to profile");
  auto* report = app.add_subcommand("report", "Merge eval outputs into one comparison table");
  add_common(report);
  report->add_option("runs", runs, "Eval output directories")->required();
  auto* bench = app.add_subcommand("benchmark", "LTP vs scratch over several seeds");
  add_common(bench);
  add_value(bench, "seeds", "Comma-separated seeds");
  auto* replay = app.add_subcommand("replay", "Re-execute a run from its manifest");
  std::string manifest_path, replay_out;
  int replay_threads = 1;
  replay->add_option("--manifest", manifest_path, "run_manifest.json to replay")->required();
  replay->add_option("--out", replay_out, "New output directory")->required();
  replay->add_option("--threads", replay_threads, "OpenMP threads");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  if (!rev.empty()) rev.pop_back();  // program name
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  CLI::App* sub = app.get_subcommands().front();
  Invocation inv;
  if (sub == replay) {
    try {
      const auto text = read_file(manifest_path);
      inv = invocation_from_json(json::parse(text.begin(), text.end()));
    } catch (const json::parse_error& e) {
      std::cerr << "format error: " << manifest_path << ": " << e.what() << '\n';
      return kUsage;
    } catch (const Error& e) {
      std::cerr << "error: " << e.what() << '\n';
      return kUsage;
    }
    inv.out = replay_out;
    inv.threads = replay_threads;
    return execute_guarded(inv);
  }

  inv.command = sub->get_name();
  inv.out = common.out;
  inv.threads = common.threads;
  for (const auto& [k, v] : values) {
    if (!v.empty()) inv.options[k] = v;
  }
  if (scratch) inv.options["scratch"] = "true";
  if (resume) inv.options["resume"] = "true";
  if (!common.seed.empty()) inv.options["seed"] = common.seed;
  if (!runs.empty()) {
    std::string joined;
    for (const auto& r : runs) joined += r + "\n";
    inv.options["runs"] = joined;
  }
  // Inputs are recorded as absolute paths so a manifest replays from anywhere.
  for (const char* key : {"bank", "data", "init", "checkpoint"}) {
    auto it = inv.options.find(key);
    if (it != inv.options.end()) it->second = fs::absolute(it->second).lexically_normal().string();
  }

  try {
    json config = experiment::profile_to_json(experiment::BenchmarkProfile::by_name(common.profile));
    if (!common.config.empty()) {
      if (!fs::exists(common.config)) throw ConfigError("config file not found: " + common.config);
      const auto text = read_file(common.config);
      json patch = json::parse(text.begin(), text.end(), nullptr, false);
      if (patch.is_discarded() || !patch.is_object()) {
        throw ConfigError("config file is not a JSON object: " + common.config);
      }
      config.merge_patch(patch);
    }
    for (const auto& s : common.sets) apply_override(config, s);
    if (!common.seed.empty()) apply_seed(config, inv.command, std::stoull(common.seed));
    experiment::profile_from_json(config).validate();
    inv.config = config;
  } catch (const Error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kUsage;
  }
  return execute_guarded(inv);
}

int run(int argc, const char* const* argv) {
  std::vector<std::string> args(argv, argv + argc);
  return run(args);
}

}  // namespace ltp::cli
