// mobllm: preprocess, synth, train, eval, fewshot and ablate commands.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mobllm/run.hpp"
#include "mobllm/synthetic.hpp"

namespace fs = std::filesystem;
using namespace mobllm;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kDivergence = 3 };

struct Options {
  std::string data;
  std::string task;
  std::optional<long long> seed;
  std::string config;
  std::vector<std::string> ablate;
  std::optional<double> fraction;
  std::string out;
  std::string run;
  std::vector<std::string> set;
  bool verbose = false;
};

RunConfig resolve(const Options& o) {
  RunConfig cfg;
  if (!o.config.empty()) cfg.merge_file(o.config);
  for (const auto& kv : o.set) {
    std::istringstream line(kv);
    cfg.merge_text(line, "--set");
  }
  if (!o.task.empty()) cfg.set("train.task", o.task);
  if (!o.ablate.empty()) {
    std::string joined;
    for (const auto& a : o.ablate) joined += (joined.empty() ? "" : ",") + a;
    cfg.set("train.ablate", joined);
  }
  return cfg;
}

std::string seed_text(long long s) { return std::to_string(s); }

std::string fraction_name(double f) {
  std::ostringstream s;
  s << "frac-" << f;
  return s.str();
}

void print_summary(const DatasetArchive& a) {
  std::size_t samples = 0;
  for (const auto& s : a.sequences) samples += s.records.size();
  std::cout << "sequences\t" << a.sequences.size() << "\ncheckins\t" << samples << "\nusers\t" << a.vocab.users.size()
            << "\npois\t" << a.vocab.pois.size() << '\n';
  if (a.split)
    std::cout << "split\t" << a.split->train.size() << '/' << a.split->valid.size() << '/' << a.split->test.size() << '\n';
}

int cmd_preprocess(const Options& o) {
  RunConfig cfg = resolve(o);
  if (o.seed) cfg.set("data.seed", seed_text(*o.seed));
  cfg.validate();
  if (!fs::exists(o.data)) throw DataError("input " + o.data + " does not exist");
  auto parsed = data::parse_checkin_file(o.data, cfg.columns());
  for (const auto& e : parsed.errors) std::cerr << o.data << ':' << e.line << ": " << e.message << '\n';
  auto result = data::preprocess(parsed.rows, cfg.preprocess());
  DatasetArchive archive{std::move(result.vocab), std::move(result.sequences), std::nullopt, 0};
  archive.split_seed = static_cast<std::uint64_t>(cfg.get_int("data.seed"));
  archive.split = data::split_dataset(archive.sequences.size(), archive.split_seed, cfg.split_ratio());
  write_archive(o.out, archive);
  print_summary(archive);
  return kOk;
}

int cmd_synth(const Options& o) {
  RunConfig cfg = resolve(o);
  if (o.seed) cfg.set("synth.seed", seed_text(*o.seed));
  cfg.validate();
  auto corpus = data::generate_synthetic(cfg.synthetic());
  DatasetArchive archive{std::move(corpus.vocab), std::move(corpus.sequences), std::nullopt, 0};
  archive.split_seed = static_cast<std::uint64_t>(cfg.get_int("data.seed"));
  archive.split = data::split_dataset(archive.sequences.size(), archive.split_seed, cfg.split_ratio());
  write_archive(o.out, archive);
  print_summary(archive);
  return kOk;
}

int cmd_train(const Options& o) {
  RunConfig cfg = resolve(o);
  if (o.seed) cfg.set("train.seed", seed_text(*o.seed));
  const DatasetArchive archive = read_archive(o.data);
  const auto outcome = run_training(cfg, archive, o.out, o.fraction, !o.verbose);
  std::cout << report_table(outcome.test);
  return kOk;
}

int cmd_eval(const Options& o) {
  const DatasetArchive archive = read_archive(o.data);
  const fs::path dir = o.run;
  const MetricReport report = run_evaluation(dir, archive);
  std::cout << report_table(report);
  RunConfig cfg;
  std::istringstream text(read_text(dir / "config.txt"));
  cfg.merge_text(text);
  nlohmann::json doc = {{"config_hash", cfg.hash()}, {"seed", cfg.get_int("train.seed")}, {"split", "test"},
                        {"metrics", report_json(report)}};
  write_text(dir / "eval.json", doc.dump(1) + "\n");
  return kOk;
}

// Plot-ready summary: one row per run with the test metrics.
void write_summary(const fs::path& path, const std::string& key, const std::vector<std::pair<std::string, MetricReport>>& rows) {
  std::ostringstream out;
  out << key << "\tsamples\tacc@1\tacc@5\tacc@20\tmrr\tmae_minutes\trmse_minutes\n";
  out.precision(10);
  for (const auto& [name, r] : rows)
    out << name << '\t' << r.samples << '\t' << r.acc1 << '\t' << r.acc5 << '\t' << r.acc20 << '\t' << r.mrr << '\t' << r.mae
        << '\t' << r.rmse << '\n';
  write_text(path, out.str());
}

int cmd_fewshot(const Options& o) {
  RunConfig cfg = resolve(o);
  if (o.seed) cfg.set("train.seed", seed_text(*o.seed));
  cfg.validate();
  const DatasetArchive archive = read_archive(o.data);
  std::vector<double> fractions = o.fraction ? std::vector<double>{*o.fraction} : cfg.get_double_list("fewshot.fractions");
  std::vector<std::pair<std::string, MetricReport>> rows;
  fs::create_directories(o.out);
  for (double f : fractions) {
    const std::string name = fraction_name(f);
    std::cerr << "fewshot " << name << '\n';
    const auto outcome = run_training(cfg, archive, fs::path(o.out) / name, f, !o.verbose);
    std::cout << name << '\n' << report_table(outcome.test);
    rows.emplace_back(name, outcome.test);
  }
  write_summary(fs::path(o.out) / "fewshot.tsv", "fraction", rows);
  return kOk;
}

int cmd_ablate(const Options& o) {
  RunConfig base = resolve(o);
  base.set("train.ablate", "");
  if (o.seed) base.set("train.seed", seed_text(*o.seed));
  base.validate();
  const DatasetArchive archive = read_archive(o.data);
  std::vector<std::string> flags = o.ablate.empty() ? std::vector<std::string>{"no_htpp", "no_vimn", "no_ppel", "no_llm"} : o.ablate;
  flags.insert(flags.begin(), "full");
  std::vector<std::pair<std::string, MetricReport>> rows;
  fs::create_directories(o.out);
  for (const auto& flag : flags) {
    RunConfig cfg = base;
    if (flag != "full") cfg.set("train.ablate", flag);
    std::cerr << "ablate " << flag << '\n';
    const auto outcome = run_training(cfg, archive, fs::path(o.out) / flag, o.fraction, !o.verbose);
    std::cout << flag << '\n' << report_table(outcome.test);
    rows.emplace_back(flag, outcome.test);
  }
  write_summary(fs::path(o.out) / "ablation.tsv", "variant", rows);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mobility modelling toolkit: location, user and time prediction over check-in sequences"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "key=value config file")->check(CLI::ExistingFile);
    sub->add_option("--set", o.set, "override one config key (key=value), repeatable");
  };
  auto training = [&](CLI::App* sub) {
    common(sub);
    sub->add_option("--data", o.data, "dataset archive")->required();
    sub->add_option("--task", o.task, "lp, tul or tp")->check(CLI::IsMember({"lp", "tul", "tp"}));
    sub->add_option("--seed", o.seed, "training seed");
    sub->add_option("--ablate", o.ablate, "ablation flag, repeatable")
        ->check(CLI::IsMember({"no_htpp", "no_vimn", "no_ppel", "no_llm"}));
    sub->add_option("--fraction", o.fraction, "few-shot prefix of the training split")->check(CLI::Range(0.0, 1.0));
    sub->add_option("--out", o.out, "output directory")->required();
    sub->add_flag("--verbose,-v", o.verbose, "print per-epoch progress");
  };

  auto* pre = app.add_subcommand("preprocess", "filter, sessionize and split a raw check-in file");
  common(pre);
  pre->add_option("--data", o.data, "raw check-in file")->required();
  pre->add_option("--seed", o.seed, "split seed");
  pre->add_option("--out", o.out, "archive path")->required();

  auto* syn = app.add_subcommand("synth", "write the deterministic synthetic corpus");
  common(syn);
  syn->add_option("--seed", o.seed, "generator seed");
  syn->add_option("--out", o.out, "archive path")->required();

  auto* train = app.add_subcommand("train", "train one model into a run directory");
  training(train);
  auto* few = app.add_subcommand("fewshot", "train on each few-shot prefix fraction");
  training(few);
  auto* abl = app.add_subcommand("ablate", "train the full model and each ablation");
  training(abl);

  auto* ev = app.add_subcommand("eval", "score a trained run on the test split");
  ev->add_option("--data", o.data, "dataset archive")->required();
  ev->add_option("--run", o.run, "run directory")->required()->check(CLI::ExistingDirectory);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*pre) return cmd_preprocess(o);
    if (*syn) return cmd_synth(o);
    if (*train) return cmd_train(o);
    if (*few) return cmd_fewshot(o);
    if (*abl) return cmd_ablate(o);
    if (*ev) return cmd_eval(o);
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kDivergence;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  } catch (const LookupError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  }
  return kUsage;
}
