#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mobllm/backbone.hpp"
#include "mobllm/checkin_data.hpp"
#include "mobllm/heads.hpp"
#include "mobllm/htpp.hpp"
#include "mobllm/layers.hpp"
#include "mobllm/metrics.hpp"
#include "mobllm/ppel.hpp"
#include "mobllm/vimn.hpp"

namespace mobllm {

struct Ablation {
  bool no_htpp = false;
  bool no_vimn = false;
  bool no_ppel = false;
  bool no_llm = false;

  void set(std::string_view flag) {
    if (flag == "no_htpp") no_htpp = true;
    else if (flag == "no_vimn") no_vimn = true;
    else if (flag == "no_ppel") no_ppel = true;
    else if (flag == "no_llm") no_llm = true;
    else throw ArgumentError("unknown ablation '" + std::string(flag) + "'");
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    if (no_htpp) out.emplace_back("no_htpp");
    if (no_vimn) out.emplace_back("no_vimn");
    if (no_ppel) out.emplace_back("no_ppel");
    if (no_llm) out.emplace_back("no_llm");
    return out;
  }

  bool operator==(const Ablation&) const = default;
};

struct ModelConfig {
  Task task = Task::lp;
  std::uint64_t seed = 1;
  PpelConfig ppel;
  VimnConfig vimn;
  HtppConfig htpp;
  BackboneConfig backbone;
  HeadConfig heads;
  Ablation ablation;
  std::string prompt_dir;  // empty: built-in word lists
};

// PPE rows for the POIs of one batch.
struct PoiEmbeddings {
  ad::Var table;
  std::map<int, int> row;
};

struct EncodedSequence {
  ad::Var h;
  AssembledInput input;
  AlphaBeta out;
  std::optional<PromptSelection> selection;
};

class MobilityModel {
 public:
  MobilityModel(const data::Vocabulary& vocab, ModelConfig cfg) : cfg_(normalised(std::move(cfg))), rng_(cfg_.seed) {
    if (vocab.pois.empty() || vocab.users.empty()) throw DataError("model: empty vocabulary");
    ppel_.emplace(store_, vocab, cfg_.ppel, rng_);
    vimn_.emplace(store_, cfg_.vimn, rng_);
    fc_ = Linear::make(store_, "novimn.fc", cfg_.ppel.d + cfg_.vimn.time.width() + 1, cfg_.vimn.hidden, rng_);
    auto words = cfg_.prompt_dir.empty() ? default_prompt_words() : load_prompt_words(cfg_.prompt_dir);
    htpp_.emplace(store_, cfg_.htpp, rng_, std::move(words));
    users_ = &store_.add("user.embed", rng_.normal_matrix(static_cast<Eigen::Index>(vocab.users.size()), cfg_.vimn.hidden,
                                                         1.0 / std::sqrt(static_cast<double>(cfg_.vimn.hidden))));
    backbone_.emplace(store_, cfg_.backbone, cfg_.vimn.hidden, rng_);
    switch (cfg_.task) {
      case Task::lp: lp_.emplace(store_, cfg_.vimn.hidden, static_cast<int>(vocab.pois.size()), cfg_.heads.pooling, rng_); break;
      case Task::tul: tul_.emplace(store_, cfg_.vimn.hidden, static_cast<int>(vocab.users.size()), rng_); break;
      case Task::tp: tp_.emplace(store_, cfg_.vimn.hidden, cfg_.heads.k_mix, cfg_.heads.pooling, rng_); break;
    }
    apply_ablation(cfg_.ablation);
  }

  MobilityModel(const MobilityModel&) = delete;
  MobilityModel& operator=(const MobilityModel&) = delete;

  const ModelConfig& config() const { return cfg_; }
  Task task() const { return cfg_.task; }
  ParameterStore& store() { return store_; }
  const ParameterStore& store() const { return store_; }
  Ppel& ppel() { return *ppel_; }
  const Vimn& vimn() const { return *vimn_; }
  const PromptPool& htpp() const { return *htpp_; }
  Backbone& backbone() { return *backbone_; }
  const Linear& fc() const { return fc_; }
  Parameter& user_table() { return *users_; }
  const LogTimeNormalizer& normalizer() const { return norm_; }
  void set_normalizer(LogTimeNormalizer n) { norm_ = n; }

  // Freezing follows the base rules, then every ablated component is frozen
  // and disconnected from the forward pass.
  void apply_ablation(const Ablation& flags) {
    cfg_.ablation = flags;
    for (Parameter& p : store_) p.trainable = true;
    ppel_->e_cat_token().trainable = cfg_.ppel.train_tokens;
    for (int d = 0; d < kPromptDomains; ++d) htpp_->values(d).trainable = cfg_.htpp.train_values;
    backbone_->apply_freeze_mask();
    if (cfg_.task == Task::tul) users_->trainable = false;
    if (flags.no_ppel)
      for (Parameter* p : ppel_->semantic_parameters()) p->trainable = false;
    if (flags.no_vimn)
      for (Parameter* p : vimn_->parameters()) p->trainable = false;
    else
      fc_.set_trainable(false);
    if (flags.no_htpp)
      for (Parameter* p : htpp_->parameters()) p->trainable = false;
  }

  PoiEmbeddings embed_pois(ad::Tape& tape, std::span<const int> pois) const {
    PoiEmbeddings e;
    std::vector<int> unique;
    for (int p : pois)
      if (e.row.emplace(p, 0).second) unique.push_back(p);
    std::sort(unique.begin(), unique.end());
    for (std::size_t i = 0; i < unique.size(); ++i) e.row[unique[i]] = static_cast<int>(i);
    e.table = cfg_.ablation.no_ppel ? ad::gather_rows(tape, ppel_->e_poi(), unique) : ppel_->table(tape, unique);
    return e;
  }

  EncodedSequence encode(const PoiEmbeddings& emb, int user, std::span<const data::CheckinRecord> records) const {
    if (records.empty()) throw ArgumentError("encode: empty sequence");
    ad::Tape& tape = emb.table.tape();
    std::vector<int> rows;
    std::vector<double> times, deltas;
    for (const auto& r : records) {
      auto it = emb.row.find(r.poi_id);
      if (it == emb.row.end()) throw LookupError("encode: POI missing from batch embeddings");
      rows.push_back(it->second);
      times.push_back(static_cast<double>(r.timestamp));
      deltas.push_back(static_cast<double>(r.delta_t));
    }
    ad::Var s = ad::select_rows(emb.table, rows);
    EncodedSequence out;
    if (cfg_.ablation.no_vimn) {
      Matrix side(s.rows(), cfg_.vimn.time.width() + 1);
      for (Eigen::Index i = 0; i < s.rows(); ++i) {
        side.row(i).head(cfg_.vimn.time.width()) = periodic_encode(times[static_cast<std::size_t>(i)], cfg_.vimn.time);
        side(i, cfg_.vimn.time.width()) = interval_encode(deltas[static_cast<std::size_t>(i)], cfg_.vimn.delta_unit);
      }
      out.h = fc_(ad::concat_cols({s, tape.constant(std::move(side))}));
    } else {
      out.h = vimn_->encode(s, times, deltas);
    }
    std::optional<ad::Var> prompts;
    if (!cfg_.ablation.no_htpp) {
      out.selection = htpp_->select(out.h.value());
      prompts = htpp_->prompt_tokens(tape, *out.selection);
    }
    std::optional<ad::Var> user_row;
    if (cfg_.task != Task::tul) {
      const int one[] = {user};
      user_row = ad::gather_rows(tape, *users_, one);
    }
    out.input = assemble_input(out.h, user_row, prompts);
    out.out = backbone_->forward(out.input);
    return out;
  }

  // Class logits (LP, TUL) as 1 x classes.
  ad::Var logits(const EncodedSequence& e) const {
    if (cfg_.task == Task::lp) return lp_->logits(require_beta(e));
    if (cfg_.task == Task::tul) return tul_->logits(e.out.alpha, e.out.beta);
    throw ArgumentError("logits: task has no class head");
  }

  MixtureVars mixture(const EncodedSequence& e) const {
    if (cfg_.task != Task::tp) throw ArgumentError("mixture: task is not tp");
    return tp_->params(require_beta(e));
  }

  // Trainable parameter count.
  std::size_t trainable_count() const { return store_.trainable_count(); }

 private:
  static ModelConfig normalised(ModelConfig cfg) {
    cfg.vimn.d = cfg.ppel.d;
    cfg.htpp.width = cfg.vimn.hidden;
    if (cfg.ablation.no_llm) cfg.backbone.variant = BackboneVariant::transformer;
    return cfg;
  }

  static const ad::Var& require_beta(const EncodedSequence& e) {
    if (!e.out.beta) throw ConfigError("head needs beta tokens but the input has none");
    return *e.out.beta;
  }

  ModelConfig cfg_;
  Rng rng_;
  ParameterStore store_;
  std::optional<Ppel> ppel_;
  std::optional<Vimn> vimn_;
  Linear fc_;
  std::optional<PromptPool> htpp_;
  Parameter* users_ = nullptr;
  std::optional<Backbone> backbone_;
  std::optional<LpHead> lp_;
  std::optional<TulHead> tul_;
  std::optional<TpHead> tp_;
  LogTimeNormalizer norm_;
};

}  // namespace mobllm
