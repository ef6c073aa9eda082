#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "mobllm/autodiff.hpp"
#include "mobllm/checkin_data.hpp"
#include "mobllm/metrics.hpp"
#include "mobllm/model.hpp"
#include "mobllm/optim.hpp"

namespace mobllm {

// One supervised sample: the first `prefix` records of a sequence.
struct Example {
  std::size_t sequence = 0;
  int prefix = 0;
  int user = 0;
  int target_poi = -1;
  double target_dt = 0.0;  // seconds, at least 1
};

// LP and TP predict record n from records 1..n-1; TUL reads the whole sequence.
inline std::vector<Example> make_examples(Task task, const std::vector<data::CheckinSequence>& sequences,
                                          std::span<const std::size_t> indices) {
  std::vector<Example> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) {
    const auto& seq = sequences.at(i);
    const int n = static_cast<int>(seq.records.size());
    if (n < 2) throw DataError("sequence " + std::to_string(i) + " has fewer than 2 records");
    Example e;
    e.sequence = i;
    e.user = seq.user_id;
    if (task == Task::tul) {
      e.prefix = n;
    } else {
      e.prefix = n - 1;
      e.target_poi = seq.records.back().poi_id;
      e.target_dt = std::max<double>(1.0, static_cast<double>(seq.records.back().delta_t));
    }
    out.push_back(e);
  }
  return out;
}

// Inter-event times of every non-initial record in the given sequences.
inline LogTimeNormalizer fit_normalizer(const std::vector<data::CheckinSequence>& sequences,
                                        std::span<const std::size_t> indices) {
  std::vector<double> taus;
  for (std::size_t i : indices)
    for (std::size_t k = 1; k < sequences.at(i).records.size(); ++k)
      taus.push_back(std::max<double>(1.0, static_cast<double>(sequences[i].records[k].delta_t)));
  return LogTimeNormalizer::fit(taus);
}

struct MetricReport {
  Task task = Task::lp;
  std::size_t samples = 0;
  double loss = 0.0;
  double acc1 = 0.0, acc5 = 0.0, acc20 = 0.0, mrr = 0.0;  // LP, TUL
  double mae = 0.0, rmse = 0.0;                            // TP, minutes

  // Higher is better.
  double selection_score() const { return task == Task::tp ? -mae : mrr; }
  bool operator==(const MetricReport&) const = default;
};

struct TrainConfig {
  double learning_rate = 1e-3;
  int max_epochs = 100;
  int patience = 10;
  int batch_size = 64;
  std::uint64_t seed = 1;
  TpLoss tp_loss = TpLoss::mae;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  MetricReport valid;
  bool improved = false;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  MetricReport best_valid;
};

class Trainer {
 public:
  Trainer(MobilityModel& model, const std::vector<data::CheckinSequence>& sequences)
      : model_(model), sequences_(sequences) {}

  // Loss of one example on the tape (1 x 1).
  ad::Var example_loss(const PoiEmbeddings& emb, const Example& ex, TpLoss tp_loss) const {
    const auto enc = encode(emb, ex);
    switch (model_.task()) {
      case Task::lp: return ad::scale(ad::element(ad::log_softmax_rows(model_.logits(enc)), 0, ex.target_poi), -1.0);
      case Task::tul: return ad::scale(ad::element(ad::log_softmax_rows(model_.logits(enc)), 0, ex.user), -1.0);
      case Task::tp: {
        const auto m = model_.mixture(enc);
        if (tp_loss == TpLoss::nll) return ad::scale(mixture_log_density(m, ex.target_dt, model_.normalizer()), -1.0);
        ad::Var diff = ad::add_scalar(mixture_expectation(m, model_.normalizer()), -ex.target_dt);
        return ad::abs(diff);
      }
    }
    throw ArgumentError("unknown task");
  }

  // One optimizer step on a batch; returns the mean loss.
  double step(std::span<const Example> batch, Adam& opt, TpLoss tp_loss) {
    GradBuffer grads;
    ad::Tape tape(&grads);
    const auto emb = batch_embeddings(tape, batch);
    std::vector<ad::Var> losses;
    for (const auto& ex : batch) losses.push_back(example_loss(emb, ex, tp_loss));
    ad::Var total = ad::scale(ad::sum(ad::concat_rows(losses)), 1.0 / static_cast<double>(batch.size()));
    const double value = total.scalar();
    if (!std::isfinite(value)) throw DivergenceError("non-finite training loss");
    tape.backward(total);
    for (const Parameter& p : model_.store())
      if (const Matrix* g = grads.find(p); g != nullptr && !g->allFinite())
        throw DivergenceError("non-finite gradient for " + p.name);
    opt.step(model_.store(), grads);
    return value;
  }

  MetricReport evaluate(std::span<const Example> examples, int batch_size = 64, TpLoss tp_loss = TpLoss::mae) const {
    MetricReport rep;
    rep.task = model_.task();
    rep.samples = examples.size();
    if (examples.empty()) return rep;
    std::vector<int> ranks;
    std::vector<double> predicted, truth;
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < examples.size(); start += static_cast<std::size_t>(batch_size)) {
      const auto batch = examples.subspan(start, std::min<std::size_t>(static_cast<std::size_t>(batch_size), examples.size() - start));
      ad::Tape tape;
      const auto emb = batch_embeddings(tape, batch);
      for (const auto& ex : batch) {
        const auto enc = encode(emb, ex);
        if (rep.task == Task::tp) {
          const auto m = model_.mixture(enc);
          const double pred = mixture_expectation(m, model_.normalizer()).scalar();
          predicted.push_back(pred);
          truth.push_back(ex.target_dt);
          loss_sum += tp_loss == TpLoss::mae ? std::abs(pred - ex.target_dt)
                                             : -mixture_log_density(m, ex.target_dt, model_.normalizer()).scalar();
        } else {
          const RowVector logits = model_.logits(enc).value();
          const int target = rep.task == Task::lp ? ex.target_poi : ex.user;
          ranks.push_back(rank_of(logits, target));
          const double m = logits.maxCoeff();
          loss_sum += m + std::log((logits.array() - m).exp().sum()) - logits(target);
        }
      }
    }
    rep.loss = loss_sum / static_cast<double>(examples.size());
    if (rep.task == Task::tp) {
      const auto e = mae_rmse(predicted, truth);
      rep.mae = e.mae;
      rep.rmse = e.rmse;
    } else {
      rep.acc1 = acc_at_k(ranks, 1);
      rep.acc5 = acc_at_k(ranks, 5);
      rep.acc20 = acc_at_k(ranks, 20);
      rep.mrr = mrr(ranks);
    }
    return rep;
  }

  // Mini-batch training with early stopping on the validation metric; the
  // best-validation parameters are restored at the end.
  TrainResult train(const std::vector<Example>& train_set, const std::vector<Example>& valid_set, const TrainConfig& cfg,
                    const std::function<void(const EpochRecord&)>& on_epoch = {}) {
    if (cfg.max_epochs < 1 || cfg.batch_size < 1 || cfg.patience < 0 || !(cfg.learning_rate > 0.0))
      throw ConfigError("invalid training configuration");
    if (train_set.empty()) throw DataError("empty training set");
    Adam opt(AdamConfig{cfg.learning_rate});
    Rng rng(cfg.seed);
    std::vector<Example> order = train_set;
    TrainResult result;
    double best = -std::numeric_limits<double>::infinity();
    auto best_params = model_.store().snapshot();
    int stale = 0;
    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
      rng.shuffle(order);
      double loss_sum = 0.0;
      std::size_t batches = 0;
      for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
        const std::size_t len = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), order.size() - start);
        loss_sum += step(std::span<const Example>(order).subspan(start, len), opt, cfg.tp_loss);
        ++batches;
      }
      EpochRecord rec;
      rec.epoch = epoch;
      rec.train_loss = loss_sum / static_cast<double>(batches);
      rec.valid = evaluate(valid_set.empty() ? train_set : valid_set, cfg.batch_size, cfg.tp_loss);
      const double score = rec.valid.selection_score();
      rec.improved = score > best;
      if (rec.improved) {
        best = score;
        best_params = model_.store().snapshot();
        result.best_epoch = epoch;
        result.best_valid = rec.valid;
        stale = 0;
      } else {
        ++stale;
      }
      result.history.push_back(rec);
      if (on_epoch) on_epoch(rec);
      if (!rec.improved && stale >= cfg.patience) break;
    }
    model_.store().restore(best_params);
    return result;
  }

 private:
  PoiEmbeddings batch_embeddings(ad::Tape& tape, std::span<const Example> batch) const {
    std::vector<int> pois;
    for (const auto& ex : batch) {
      const auto& recs = sequences_.at(ex.sequence).records;
      for (int k = 0; k < ex.prefix; ++k) pois.push_back(recs[static_cast<std::size_t>(k)].poi_id);
    }
    return model_.embed_pois(tape, pois);
  }

  EncodedSequence encode(const PoiEmbeddings& emb, const Example& ex) const {
    const auto& recs = sequences_.at(ex.sequence).records;
    return model_.encode(emb, ex.user, std::span<const data::CheckinRecord>(recs.data(), static_cast<std::size_t>(ex.prefix)));
  }

  MobilityModel& model_;
  const std::vector<data::CheckinSequence>& sequences_;
};

}  // namespace mobllm
