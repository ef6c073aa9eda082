#pragma once

// Run directories: config snapshot, parameters, per-epoch history and the
// final test report. Shared by the command-line tool and the acceptance suite.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>

#include "json.hpp"
#include "mobllm/archive.hpp"
#include "mobllm/config.hpp"
#include "mobllm/model.hpp"
#include "mobllm/trainer.hpp"

namespace mobllm {

namespace fs = std::filesystem;

// Exclusive ownership of a run directory for the lifetime of the object.
class RunLock {
 public:
  explicit RunLock(const fs::path& dir) : path_(dir / ".lock") {
    fs::create_directories(dir);
    FILE* f = std::fopen(path_.string().c_str(), "wx");
    if (f == nullptr) throw ArgumentError("run directory " + dir.string() + " is locked by another process");
    std::fclose(f);
  }
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;
  ~RunLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }

 private:
  fs::path path_;
};

inline nlohmann::json report_json(const MetricReport& r) {
  nlohmann::json j = {{"task", task_name(r.task)}, {"samples", r.samples}, {"loss", r.loss}};
  if (r.task == Task::tp) {
    j["mae_minutes"] = r.mae;
    j["rmse_minutes"] = r.rmse;
  } else {
    j["acc@1"] = r.acc1;
    j["acc@5"] = r.acc5;
    j["acc@20"] = r.acc20;
    j["mrr"] = r.mrr;
  }
  return j;
}

inline std::string report_table(const MetricReport& r) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(4);
  if (r.task == Task::tp) {
    out << "task\tsamples\tMAE(min)\tRMSE(min)\n" << task_name(r.task) << '\t' << r.samples << '\t' << r.mae << '\t' << r.rmse << '\n';
  } else {
    out << "task\tsamples\tAcc@1\tAcc@5\tAcc@20\tMRR\n"
        << task_name(r.task) << '\t' << r.samples << '\t' << r.acc1 << '\t' << r.acc5 << '\t' << r.acc20 << '\t' << r.mrr << '\n';
  }
  return out.str();
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct RunOutcome {
  TrainResult result;
  MetricReport test;
  std::string config_hash;
};

// Trains on the archive's split (optionally a few-shot prefix of it) and
// fills `dir`. Every file written is a function of the config and the data.
inline RunOutcome run_training(const RunConfig& cfg, const DatasetArchive& data, const fs::path& dir,
                               std::optional<double> fraction = std::nullopt, bool quiet = true) {
  cfg.validate();
  if (!data.split) throw DataError("archive has no split; run preprocess or synth first");
  data::DatasetSplit split = *data.split;
  if (fraction) split = data::few_shot_subset(split, *fraction);

  const Task task = cfg.task();
  if (task == Task::tul && data.vocab.users.size() < 2) throw DataError("task tul needs an archive with at least 2 users");
  if (task == Task::lp && data.vocab.pois.size() < 2) throw DataError("task lp needs an archive with at least 2 POIs");
  MobilityModel model(data.vocab, cfg.model());
  model.set_normalizer(fit_normalizer(data.sequences, split.train));
  Trainer trainer(model, data.sequences);
  const auto train_set = make_examples(task, data.sequences, split.train);
  const auto valid_set = make_examples(task, data.sequences, split.valid);
  const auto test_set = make_examples(task, data.sequences, split.test);
  const TrainConfig tc = cfg.training();

  RunLock lock(dir);
  RunOutcome outcome;
  outcome.config_hash = cfg.hash();
  write_text(dir / "config.txt", cfg.serialize());

  std::ofstream jsonl(dir / "history.jsonl", std::ios::binary);
  std::ofstream tsv(dir / "history.tsv", std::ios::binary);
  tsv << "epoch\ttrain_loss\tvalid_loss\tvalid_metric\timproved\n";
  tsv << std::setprecision(10);
  outcome.result = trainer.train(train_set, valid_set, tc, [&](const EpochRecord& rec) {
    nlohmann::json line = {{"epoch", rec.epoch},
                           {"train_loss", rec.train_loss},
                           {"valid", report_json(rec.valid)},
                           {"improved", rec.improved},
                           {"config_hash", outcome.config_hash},
                           {"seed", tc.seed}};
    jsonl << line.dump() << '\n';
    tsv << rec.epoch << '\t' << rec.train_loss << '\t' << rec.valid.loss << '\t' << rec.valid.selection_score() << '\t'
        << (rec.improved ? 1 : 0) << '\n';
    if (!quiet)
      std::fprintf(stderr, "epoch %d  train_loss %.5f  valid %s %.5f%s\n", rec.epoch, rec.train_loss,
                   task == Task::tp ? "MAE" : "MRR", task == Task::tp ? rec.valid.mae : rec.valid.mrr,
                   rec.improved ? "  *" : "");
  });
  jsonl.close();
  tsv.close();

  {
    std::ofstream params(dir / "params.bin", std::ios::binary);
    save_parameters(params, model.store());
  }
  outcome.test = trainer.evaluate(test_set, tc.batch_size, tc.tp_loss);
  nlohmann::json run = {{"config_hash", outcome.config_hash},
                        {"seed", tc.seed},
                        {"task", task_name(task)},
                        {"ablate", cfg.ablation().names()},
                        {"normalizer", {{"a", model.normalizer().a}, {"b", model.normalizer().b}}},
                        {"best_epoch", outcome.result.best_epoch},
                        {"epochs_run", outcome.result.history.size()},
                        {"train_samples", train_set.size()}};
  if (fraction) run["fraction"] = *fraction;
  write_text(dir / "run.json", run.dump(1) + "\n");
  nlohmann::json report = {{"config_hash", outcome.config_hash}, {"seed", tc.seed}, {"split", "test"},
                           {"metrics", report_json(outcome.test)}};
  write_text(dir / "report.json", report.dump(1) + "\n");
  write_text(dir / "report.txt", report_table(outcome.test));
  return outcome;
}

// Rebuilds the model of a finished run and scores the test split.
inline MetricReport run_evaluation(const fs::path& dir, const DatasetArchive& data) {
  if (!fs::exists(dir / "params.bin")) throw DataError("run directory " + dir.string() + " has no parameters");
  RunConfig cfg;
  std::istringstream text(read_text(dir / "config.txt"));
  cfg.merge_text(text, (dir / "config.txt").string());
  if (!data.split) throw DataError("archive has no split");
  const auto run = nlohmann::json::parse(read_text(dir / "run.json"));
  MobilityModel model(data.vocab, cfg.model());
  model.set_normalizer({run.at("normalizer").at("a").get<double>(), run.at("normalizer").at("b").get<double>()});
  std::ifstream params(dir / "params.bin", std::ios::binary);
  load_parameters(params, model.store());
  Trainer trainer(model, data.sequences);
  const TrainConfig tc = cfg.training();
  return trainer.evaluate(make_examples(cfg.task(), data.sequences, data.split->test), tc.batch_size, tc.tp_loss);
}

}  // namespace mobllm
