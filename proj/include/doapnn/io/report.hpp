// Copyright 2026 The doapnn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Run artifacts. Everything except timing.json is a pure function of the
// config and seed, so two identical runs produce identical files.

#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "doapnn/errors.hpp"
#include "doapnn/harness.hpp"
#include "doapnn/io/config.hpp"
#include "doapnn/spectrum.hpp"

namespace doapnn {

using Json = nlohmann::ordered_json;

inline std::string fmt_num(double v, const char* f = "%.10g") {
  char buf[40];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

inline Json config_json(const Config& c) {
  Json j = Json::object();
  for (const auto& [k, v] : c.values()) j[k] = v;
  return j;
}

inline Json report_json(const EvalReport& r) {
  return Json{{"mae", r.mae}, {"acc5", r.acc5}, {"acc10", r.acc10},
              {"acc15", r.acc15}, {"n", r.n}};
}

inline EvalReport report_from_json(const Json& j) {
  EvalReport r;
  r.mae = j.at("mae").get<double>();
  r.acc5 = j.at("acc5").get<double>();
  r.acc10 = j.at("acc10").get<double>();
  r.acc15 = j.at("acc15").get<double>();
  r.n = j.at("n").get<std::size_t>();
  return r;
}

inline Json ledger_json(const RunLedger& l, const Config& echo) {
  Json j;
  j["format"] = "doapnn-ledger-1";
  j["strategy"] = to_string(l.config.strategy);
  j["seed"] = l.config.seed;
  j["model_seed"] = l.config.model_seed();
  j["eval_split"] = to_string(l.config.eval_split);
  j["config"] = config_json(echo);
  j["tasks"] = Json::array();
  for (const auto& t : l.tasks)
    j["tasks"].push_back({{"task_id", t.task_id}, {"spacing", t.spacing}});
  j["stages"] = Json::array();
  for (const auto& s : l.stages) {
    Json st;
    st["stage"] = s.stage;
    st["trained_tasks"] = s.trained_tasks;
    st["seed"] = s.seed;
    st["initial_train_loss"] = s.fit.initial_train_loss;
    st["final_train_loss"] = s.fit.epochs.empty() ? 0.0 : s.fit.epochs.back().train_loss;
    st["epochs_run"] = s.fit.epochs.size();
    st["best_epoch"] = s.fit.best_epoch;
    st["best_val_loss"] = s.fit.best_val_loss;
    st["stopped_early"] = s.fit.stopped_early;
    st["new_params"] = s.new_params;
    st["total_params"] = s.total_params;
    st["cumulative_loss"] = s.cumulative_loss;
    st["evals"] = Json::array();
    for (const auto& e : s.evals) {
      Json ev = report_json(e.report);
      ev["task_id"] = e.task_id;
      ev["loss"] = e.loss;
      st["evals"].push_back(ev);
    }
    j["stages"].push_back(st);
  }
  return j;
}

inline std::string curves_csv(const RunLedger& l) {
  std::string s = "stage,epoch,train_loss,val_loss,lr\n";
  for (const auto& st : l.stages)
    for (const auto& e : st.fit.epochs)
      s += std::to_string(st.stage) + "," + std::to_string(e.epoch) + "," +
           fmt_num(e.train_loss) + "," + fmt_num(e.val_loss) + "," + fmt_num(e.lr) + "\n";
  return s;
}

inline Json timing_json(const RunLedger& l) {
  Json j;
  j["stage_seconds"] = l.stage_seconds;
  double total = 0;
  for (double v : l.stage_seconds) total += v;
  j["total_seconds"] = total;
  return j;
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw FormatError(p.string() + ": cannot open for writing");
  out << text;
  if (!out) throw FormatError(p.string() + ": write failed");
}

inline Json read_json(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw DataError(p.string() + ": cannot open");
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw FormatError(p.string() + ": " + e.what());
  }
}

// ledger.json, curves.csv, timing.json and config.txt under dir.
inline void write_run(const std::filesystem::path& dir, const RunLedger& l,
                      const Config& echo) {
  std::filesystem::create_directories(dir);
  write_text(dir / "ledger.json", ledger_json(l, echo).dump(2) + "\n");
  write_text(dir / "curves.csv", curves_csv(l));
  write_text(dir / "timing.json", timing_json(l).dump(2) + "\n");
  write_text(dir / "config.txt", echo.to_text());
}

// ---------------------------------------------------------------------------
// Tables derived from ledger.json.

inline const char* kEvalCsvHeader = "method,task_id,spacing,mae,acc5,acc10,acc15,n";

inline std::string eval_csv_row(const std::string& method, int task_id, double spacing,
                                const EvalReport& r) {
  return method + "," + std::to_string(task_id) + "," + fmt_num(spacing, "%.4g") + "," +
         fmt_num(r.mae, "%.4f") + "," + fmt_num(r.acc5, "%.4f") + "," +
         fmt_num(r.acc10, "%.4f") + "," + fmt_num(r.acc15, "%.4f") + "," +
         std::to_string(r.n);
}

struct FinalEval {
  int task_id = 0;
  double spacing = 0;
  EvalReport report;
};

// Each task's report at the end of the run: the last stage for sequential
// and joint runs, the diagonal for multicondition.
inline std::vector<FinalEval> final_evals(const Json& ledger) {
  std::vector<FinalEval> out;
  const auto& stages = ledger.at("stages");
  if (stages.empty()) throw DataError("ledger has no stages");
  auto spacing_of = [&](int id) {
    for (const auto& t : ledger.at("tasks"))
      if (t.at("task_id").get<int>() == id) return t.at("spacing").get<double>();
    throw DataError("ledger has no task " + std::to_string(id));
  };
  if (ledger.at("strategy").get<std::string>() == "multicondition") {
    for (const auto& s : stages)
      for (const auto& e : s.at("evals"))
        out.push_back({e.at("task_id").get<int>(), spacing_of(e.at("task_id").get<int>()),
                       report_from_json(e)});
  } else {
    for (const auto& e : stages.back().at("evals"))
      out.push_back({e.at("task_id").get<int>(), spacing_of(e.at("task_id").get<int>()),
                     report_from_json(e)});
  }
  return out;
}

inline const char* kTableHeader = "method,mae,acc5,acc10,acc15,params";

inline std::string table_row(const Json& ledger) {
  const auto finals = final_evals(ledger);
  std::vector<EvalReport> rs;
  for (const auto& f : finals) rs.push_back(f.report);
  const auto pooled = pool_reports(rs);
  const auto params = ledger.at("stages").back().at("total_params").get<std::size_t>();
  return ledger.at("strategy").get<std::string>() + "," + fmt_num(pooled.mae, "%.4f") +
         "," + fmt_num(pooled.acc5, "%.4f") + "," + fmt_num(pooled.acc10, "%.4f") + "," +
         fmt_num(pooled.acc15, "%.4f") + "," + std::to_string(params);
}

// One row per (method, stage, task): the forgetting matrix in long form.
// Filtering on the last stage gives the per-spacing accuracy curve.
inline std::string accuracy_curves_rows(const Json& ledger) {
  std::string s;
  const auto method = ledger.at("strategy").get<std::string>();
  for (const auto& st : ledger.at("stages"))
    for (const auto& e : st.at("evals")) {
      const int id = e.at("task_id").get<int>();
      double spacing = 0;
      for (const auto& t : ledger.at("tasks"))
        if (t.at("task_id").get<int>() == id) spacing = t.at("spacing").get<double>();
      s += method + "," + std::to_string(st.at("stage").get<int>()) + "," +
           std::to_string(id) + "," + fmt_num(spacing, "%.4g") + "," +
           fmt_num(e.at("mae").get<double>(), "%.4f") + "," +
           fmt_num(e.at("acc5").get<double>(), "%.4f") + "," +
           fmt_num(e.at("acc10").get<double>(), "%.4f") + "," +
           fmt_num(e.at("acc15").get<double>(), "%.4f") + "\n";
    }
  return s;
}
inline const char* kCurvesHeader = "method,stage,task_id,spacing,mae,acc5,acc10,acc15";

}  // namespace doapnn
