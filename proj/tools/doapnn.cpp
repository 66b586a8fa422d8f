// Copyright 2026 The doapnn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// doapnn: simulate | train | evaluate | baseline | report
//
// Every subcommand resolves one Config: the --config file first, then
// --set key=value pairs, then dedicated flags. The resolved config is
// echoed into each artifact written under --out.

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "doapnn.hpp"

namespace fs = std::filesystem;
using namespace doapnn;

namespace {

// Flags that shadow config keys.
class Overrides {
 public:
  void add(CLI::App* app, const std::string& flag, const std::string& key,
           const std::string& help) {
    auto value = std::make_unique<std::string>();
    opts_.push_back({key, app->add_option(flag, *value, help + " [" + key + "]"),
                     std::move(value)});
  }
  void apply(Config& c) const {
    for (const auto& o : opts_)
      if (o.opt->count() > 0) c.set(o.key, *o.value);
  }

 private:
  struct Item {
    std::string key;
    CLI::Option* opt;
    std::unique_ptr<std::string> value;
  };
  std::vector<Item> opts_;
};

struct Common {
  std::string config_path;
  std::string out;
  std::vector<std::string> sets;
  bool quiet = false;
  Overrides flags;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config_path, "key = value config file")
      ->check(CLI::ExistingFile);
  app->add_option("--out", c.out, "output directory");
  app->add_option("--set", c.sets, "override any config key (key=value)");
  app->add_flag("--quiet", c.quiet, "no progress on stderr");
  c.flags.add(app, "--seed", "seed", "base seed");
}

// Every key the tools read, with its default, so the echo is complete.
Config defaults() {
  return Config::parse(R"(
seed = 0
threads = 1
[data]
tasks = 5
utterances = 10
angle_step = 5
seconds = 1
source = synthetic
synth_kind = white
interp = sinc
[room]
absorption_lo = 0.2
absorption_hi = 0.8
tmax_lo = 0.2
tmax_hi = 0.6
[train]
strategy = pnn
epochs = 100
patience = 20
batch_size = 16
lr = 0.001
lr_step = 20
lr_gamma = 0.5
weight_decay = 0.01
tolerance = 5
head_policy = frozen
eval_split = test
[net]
conv1 = 32
conv2 = 64
width = 64
blocks = 5
)");
}

Config resolve(const Common& c) {
  Config cfg = defaults();
  if (!c.config_path.empty()) cfg.merge(Config::load(c.config_path));
  for (const auto& s : c.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0)
      throw UsageError("--set expects key=value, got '" + s + "'");
    cfg.set(s.substr(0, eq), s.substr(eq + 1));
  }
  c.flags.apply(cfg);
  return cfg;
}

fs::path require_out(const Common& c) {
  if (c.out.empty()) throw UsageError("--out is required");
  fs::create_directories(c.out);
  return c.out;
}

DelayInterp interp_from(const std::string& s) {
  if (s == "sinc") return DelayInterp::kSinc;
  if (s == "nearest") return DelayInterp::kNearest;
  throw ConfigError("unknown delay interpolation '" + s + "'");
}

std::vector<std::string> list_corpus(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError(dir.string() + ": not a directory");
  std::vector<std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    auto ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
    if (e.is_regular_file() && ext == ".wav") files.push_back(e.path().string());
  }
  std::sort(files.begin(), files.end());
  return files;
}

DatasetPlan plan_from(const Config& c) {
  DatasetPlan p;
  p.seed = c.get_u64("seed", 0);
  if (c.has("data.spacings"))
    p.spacings = c.get_doubles("data.spacings", {});
  else
    p.spacings = default_spacings(static_cast<int>(c.get_int("data.tasks", 5)));
  p.utterances = static_cast<int>(c.get_int("data.utterances", 10));
  p.angle_step = static_cast<int>(c.get_int("data.angle_step", 5));
  p.seconds = c.get_double("data.seconds", 1.0);
  const auto source = c.get("data.source", "synthetic");
  if (source == "corpus") {
    p.corpus = list_corpus(c.require("data.corpus"));
  } else if (source != "synthetic") {
    throw ConfigError("data.source must be synthetic or corpus");
  }
  p.synth_kind = synth_kind_from_string(c.get("data.synth_kind", "white"));
  p.interp = interp_from(c.get("data.interp", "sinc"));
  p.threads = static_cast<int>(c.get_int("threads", 1));
  p.sampler.absorption_lo = c.get_double("room.absorption_lo", p.sampler.absorption_lo);
  p.sampler.absorption_hi = c.get_double("room.absorption_hi", p.sampler.absorption_hi);
  p.sampler.tmax_lo = c.get_double("room.tmax_lo", p.sampler.tmax_lo);
  p.sampler.tmax_hi = c.get_double("room.tmax_hi", p.sampler.tmax_hi);
  return p;
}

TrainConfig train_from(const Config& c) {
  TrainConfig t;
  t.seed = c.get_u64("seed", 0);
  t.strategy = strategy_from_string(c.get("train.strategy", "pnn"));
  t.epochs = static_cast<int>(c.get_int("train.epochs", 100));
  t.patience = static_cast<int>(c.get_int("train.patience", 20));
  t.batch_size = static_cast<int>(c.get_int("train.batch_size", 16));
  t.schedule.base_lr = c.get_double("train.lr", 1e-3);
  t.schedule.step_size = static_cast<int>(c.get_int("train.lr_step", 20));
  t.schedule.gamma = c.get_double("train.lr_gamma", 0.5);
  t.adamw.weight_decay = c.get_double("train.weight_decay", 0.01);
  t.tolerance = c.get_double("train.tolerance", 5.0);
  t.head_policy = head_policy_from_string(c.get("train.head_policy", "frozen"));
  t.eval_split = split_from_string(c.get("train.eval_split", "test"));
  t.threads = static_cast<int>(c.get_int("threads", 1));
  t.net.conv1 = static_cast<int>(c.get_int("net.conv1", 32));
  t.net.conv2 = static_cast<int>(c.get_int("net.conv2", 64));
  t.net.width = static_cast<int>(c.get_int("net.width", 64));
  t.net.blocks = static_cast<int>(c.get_int("net.blocks", 5));
  t.validate();
  return t;
}

std::vector<TaskData> tasks_from(const Config& c) {
  const StftParams stft;
  if (c.has("data.dir"))
    return load_tasks(c.require("data.dir"), stft, static_cast<int>(c.get_int("threads", 1)));
  return generate_tasks(plan_from(c), stft);
}

int cmd_simulate(const Common& common) {
  const Config c = resolve(common);
  const auto out = require_out(common);
  const auto plan = plan_from(c);
  const auto recs = write_dataset(plan, out);
  write_text(out / "config.txt", c.to_text());
  std::cout << "records=" << recs.size() << " tasks=" << plan.spacings.size()
            << " manifest=" << (out / kManifestName).string() << "\n";
  return 0;
}

int cmd_train(const Common& common) {
  const Config c = resolve(common);
  const auto out = require_out(common);
  const TrainConfig tc = train_from(c);
  const auto tasks = tasks_from(c);
  RunHooks hooks;
  if (!common.quiet) {
    hooks.on_stage_begin = [](int stage, int task) {
      std::cerr << "stage " << stage << (task ? " task " + std::to_string(task) : " joint")
                << "\n";
    };
    hooks.on_epoch = [](const EpochRecord& e) {
      std::cerr << "  epoch " << e.epoch << " train " << fmt_num(e.train_loss, "%.6f")
                << " val " << fmt_num(e.val_loss, "%.6f") << " lr " << fmt_num(e.lr) << "\n";
    };
  }
  hooks.on_stage_end = [&](const StageRecord& st, const ProgressiveModel<float>& m) {
    save_checkpoint(m, (out / ("stage_" + std::to_string(st.stage) + ".ckpt")).string(), c);
  };
  const auto result = run_sequence(tasks, tc, hooks);
  write_run(out, result.ledger, c);
  std::cout << kTableHeader << "\n"
            << table_row(ledger_json(result.ledger, c)) << "\n";
  return 0;
}

int cmd_evaluate(const Common& common, const std::string& ckpt_path, int task_filter) {
  const Config c = resolve(common);
  const auto ck = load_checkpoint(ckpt_path);
  const auto tasks = tasks_from(c);
  const auto split = split_from_string(c.get("train.eval_split", "test"));
  const bool pnn = ck.meta.get("train.strategy", "pnn") == "pnn";
  const int threads = static_cast<int>(c.get_int("threads", 1));
  std::string csv = std::string(kEvalCsvHeader) + "\n";
  Json rows = Json::array();
  for (const auto& t : tasks) {
    if (task_filter > 0 && t.task_id != task_filter) continue;
    const int route = pnn ? t.task_id : 1;
    if (route > static_cast<int>(ck.model.num_columns())) continue;
    const auto e = evaluate_task(ck.model, route, t, split, threads);
    csv += eval_csv_row("model", t.task_id, t.spacing, e.report) + "\n";
    Json j = report_json(e.report);
    j["task_id"] = t.task_id;
    j["spacing"] = t.spacing;
    j["loss"] = e.loss;
    rows.push_back(j);
  }
  if (rows.empty()) throw RoutingError("checkpoint has no column for the requested tasks");
  std::cout << csv;
  if (!common.out.empty()) {
    const auto out = require_out(common);
    write_text(out / "eval.csv", csv);
    write_text(out / "eval.json",
               Json{{"config", config_json(c)}, {"split", to_string(split)},
                    {"reports", rows}}.dump(2) + "\n");
  }
  return 0;
}

int cmd_baseline(const Common& common, const std::string& method, int task_filter) {
  const Config c = resolve(common);
  if (method != "gcc-phat" && method != "srp-phat")
    throw UsageError("baseline method must be gcc-phat or srp-phat");
  const fs::path dir = c.require("data.dir");
  auto recs = read_manifest(dir / kManifestName);
  check_manifest(recs, dir);
  const auto split = split_from_string(c.get("train.eval_split", "test"));
  std::erase_if(recs, [&](const ManifestRecord& r) {
    return r.split != split || (task_filter > 0 && r.task_id != task_filter);
  });
  if (recs.empty()) throw DataError("no manifest records match the split/task filter");
  std::vector<int> pred(recs.size());
  parallel_for(recs.size(), static_cast<int>(c.get_int("threads", 1)), [&](std::size_t i) {
    const auto w = read_wav((dir / recs[i].audio_path).string(), 16000);
    if (w.channels.size() != 2) throw DataError(recs[i].audio_path + ": expected 2 channels");
    const std::span<const float> x1 = w.channels[0], x2 = w.channels[1];
    pred[i] = method == "gcc-phat" ? gcc_phat_doa(x1, x2, recs[i].spacing)
                                   : srp_phat_doa(x1, x2, recs[i].spacing);
  });
  std::map<int, std::pair<std::vector<int>, std::vector<int>>> by_task;
  std::map<int, double> spacing;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    by_task[recs[i].task_id].first.push_back(pred[i]);
    by_task[recs[i].task_id].second.push_back(recs[i].azimuth);
    spacing[recs[i].task_id] = recs[i].spacing;
  }
  std::string csv = std::string(kEvalCsvHeader) + "\n";
  Json rows = Json::array();
  for (const auto& [task, pt] : by_task) {
    const auto r = evaluate(pt.first, pt.second);
    csv += eval_csv_row(method, task, spacing[task], r) + "\n";
    Json j = report_json(r);
    j["task_id"] = task;
    j["spacing"] = spacing[task];
    rows.push_back(j);
  }
  std::cout << csv;
  if (!common.out.empty()) {
    const auto out = require_out(common);
    write_text(out / (method + ".csv"), csv);
    write_text(out / (method + ".json"),
               Json{{"config", config_json(c)}, {"method", method},
                    {"split", to_string(split)}, {"reports", rows}}.dump(2) + "\n");
  }
  return 0;
}

int cmd_report(const Common& common, const std::vector<std::string>& ledgers) {
  const Config c = resolve(common);
  const auto out = require_out(common);
  if (ledgers.empty()) throw UsageError("report needs at least one --ledger");
  std::string table = std::string(kTableHeader) + "\n";
  std::string curves = std::string(kCurvesHeader) + "\n";
  Json all = Json::array();
  for (const auto& l : ledgers) {
    fs::path p = l;
    if (fs::is_directory(p)) p /= "ledger.json";
    const auto j = read_json(p);
    table += table_row(j) + "\n";
    curves += accuracy_curves_rows(j);
    Json row;
    row["method"] = j.at("strategy");
    row["ledger"] = p.string();
    row["final"] = Json::array();
    for (const auto& f : final_evals(j)) {
      Json r = report_json(f.report);
      r["task_id"] = f.task_id;
      r["spacing"] = f.spacing;
      row["final"].push_back(r);
    }
    row["params"] = j.at("stages").back().at("total_params");
    all.push_back(row);
  }
  write_text(out / "table.csv", table);
  write_text(out / "accuracy_curves.csv", curves);
  write_text(out / "table.json",
             Json{{"config", config_json(c)}, {"methods", all}}.dump(2) + "\n");
  std::cout << table;
  return 0;
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  std::replace(s.begin(), s.end(), '"', '\'');
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  doapnn::tune_allocator();
  CLI::App app{"doapnn: microphone-array DOA with progressive networks"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "doapnn 1.0");

  Common common;
  auto* sim = app.add_subcommand("simulate", "render a multi-spacing dataset");
  add_common(sim, common);
  common.flags.add(sim, "--tasks", "data.tasks", "number of spacings (0.05 m + 0.01 m steps)");
  common.flags.add(sim, "--spacings", "data.spacings", "explicit comma-separated spacings");
  common.flags.add(sim, "--angles-step", "data.angle_step", "azimuth grid step in degrees");
  common.flags.add(sim, "--utterances", "data.utterances", "source utterances per task");
  common.flags.add(sim, "--seconds", "data.seconds", "segment length");
  common.flags.add(sim, "--source", "data.source", "synthetic or corpus");
  common.flags.add(sim, "--synth-kind", "data.synth_kind", "white or speech-shaped");
  common.flags.add(sim, "--corpus", "data.corpus", "directory of 16 kHz WAV files");
  common.flags.add(sim, "--threads", "threads", "worker threads");

  auto* train = app.add_subcommand("train", "run one strategy over the task sequence");
  add_common(train, common);
  common.flags.add(train, "--data", "data.dir", "dataset directory from simulate");
  common.flags.add(train, "--strategy", "train.strategy", "finetune|joint|multicondition|pnn");
  common.flags.add(train, "--tolerance", "train.tolerance", "angular tolerance in degrees");
  common.flags.add(train, "--head-policy", "train.head_policy", "frozen or trainable");
  common.flags.add(train, "--epochs", "train.epochs", "max epochs per stage");
  common.flags.add(train, "--patience", "train.patience", "early-stopping patience");
  common.flags.add(train, "--batch-size", "train.batch_size", "batch size");
  common.flags.add(train, "--lr", "train.lr", "base learning rate");
  common.flags.add(train, "--tasks", "data.tasks", "tasks when generating in memory");
  common.flags.add(train, "--utterances", "data.utterances", "utterances when generating in memory");
  common.flags.add(train, "--threads", "threads", "evaluation threads");

  std::string ckpt;
  int task_filter = 0;
  auto* eval = app.add_subcommand("evaluate", "score a checkpoint on a dataset split");
  add_common(eval, common);
  eval->add_option("--checkpoint", ckpt, "checkpoint file")->required()->check(CLI::ExistingFile);
  eval->add_option("--task", task_filter, "only this task id");
  common.flags.add(eval, "--data", "data.dir", "dataset directory");
  common.flags.add(eval, "--split", "train.eval_split", "train|val|test");
  common.flags.add(eval, "--threads", "threads", "worker threads");

  std::string method;
  auto* base = app.add_subcommand("baseline", "learning-free GCC-PHAT / SRP-PHAT");
  add_common(base, common);
  base->add_option("--method", method, "gcc-phat or srp-phat")
      ->required()
      ->check(CLI::IsMember({"gcc-phat", "srp-phat"}));
  base->add_option("--task", task_filter, "only this task id");
  common.flags.add(base, "--data", "data.dir", "dataset directory");
  common.flags.add(base, "--split", "train.eval_split", "train|val|test");
  common.flags.add(base, "--threads", "threads", "worker threads");

  std::vector<std::string> ledgers;
  auto* rep = app.add_subcommand("report", "ledgers to table.csv and accuracy curves");
  add_common(rep, common);
  rep->add_option("--ledger", ledgers, "run directory or ledger.json (repeatable)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error category=usage message=\"" << one_line(e.what()) << "\"\n";
    return 2;
  }

  try {
    if (*sim) return cmd_simulate(common);
    if (*train) return cmd_train(common);
    if (*eval) return cmd_evaluate(common, ckpt, task_filter);
    if (*base) return cmd_baseline(common, method, task_filter);
    if (*rep) return cmd_report(common, ledgers);
  } catch (const UsageError& e) {
    std::cerr << "error category=usage message=\"" << one_line(e.what()) << "\"\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error category=" << e.category() << " message=\"" << one_line(e.what())
              << "\"\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error category=internal message=\"" << one_line(e.what()) << "\"\n";
    return 1;
  }
  return 2;
}
