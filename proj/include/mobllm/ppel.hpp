#pragma once

// POI point-wise embedding: attention from the POI's id vector over its
// matched category words, plus the embedding of its geohash cell.

#include <algorithm>
#include <cmath>
#include <map>
#include <span>
#include <vector>

#include "mobllm/autodiff.hpp"
#include "mobllm/checkin_data.hpp"
#include "mobllm/geohash.hpp"
#include "mobllm/parameters.hpp"
#include "mobllm/rng.hpp"

namespace mobllm {

struct PpelConfig {
  int d = 256;
  int geo_precision = 6;
  bool train_tokens = false;
};

class Ppel {
 public:
  Ppel(ParameterStore& store, const data::Vocabulary& vocab, const PpelConfig& cfg, Rng& rng)
      : cfg_(cfg), geo_(store, {cfg.geo_precision, cfg.d}, "ppel.geo"), geo_param_(&geo_.parameter()) {
    if (cfg.d < 1) throw ConfigError("ppel.d must be positive");
    const auto d = static_cast<Eigen::Index>(cfg.d);
    const auto pool = static_cast<Eigen::Index>(vocab.category_pool.size());
    if (pool == 0) throw ConfigError("empty category pool");
    const double sd = 1.0 / std::sqrt(static_cast<double>(d));
    e_poi_ = &store.add("ppel.e_poi", rng.normal_matrix(static_cast<Eigen::Index>(vocab.pois.size()), d, sd));
    e_cat_id_ = &store.add("ppel.e_cat_id", rng.normal_matrix(pool, d, sd));
    Matrix tokens(pool, d);
    for (Eigen::Index w = 0; w < pool; ++w) tokens.row(w) = word_vector(vocab.category_pool[static_cast<std::size_t>(w)], d);
    e_cat_token_ = &store.add("ppel.e_cat_token", std::move(tokens), cfg.train_tokens);
    w_q_ = &store.add("ppel.w_q", rng.normal_matrix(d, d, sd));
    w_k_ = &store.add("ppel.w_k", rng.normal_matrix(d, d, sd));
    w_v_ = &store.add("ppel.w_v", rng.normal_matrix(d, d, sd));
    words_.reserve(vocab.pois.size());
    cells_.reserve(vocab.pois.size());
    for (const auto& p : vocab.pois) {
      if (p.word_ids.empty()) throw ConfigError("POI " + p.key + " has no matched category words");
      for (int w : p.word_ids)
        if (w < 0 || w >= pool) throw ConfigError("POI " + p.key + " references an unknown category word");
      words_.push_back(p.word_ids);
      cells_.push_back(geo_.cell_row(p.lat, p.lon));
    }
  }

  int poi_count() const { return static_cast<int>(words_.size()); }
  int width() const { return cfg_.d; }
  const std::vector<int>& words(int poi) const { return words_.at(checked(poi)); }
  int cell(int poi) const { return cells_.at(checked(poi)); }

  // PPE rows for the given POIs (repeats allowed), one tape pass.
  ad::Var table(ad::Tape& tape, std::span<const int> pois) const {
    std::map<int, int> local;
    for (int p : pois)
      for (int w : words_.at(checked(p))) local.emplace(w, 0);
    std::vector<int> union_words;
    for (auto& [w, slot] : local) {
      slot = static_cast<int>(union_words.size());
      union_words.push_back(w);
    }
    const auto n = static_cast<Eigen::Index>(pois.size());
    const auto m = static_cast<Eigen::Index>(union_words.size());
    Matrix mask = Matrix::Constant(n, m, -std::numeric_limits<double>::infinity());
    std::vector<int> cell_rows;
    for (Eigen::Index i = 0; i < n; ++i) {
      const int p = pois[static_cast<std::size_t>(i)];
      for (int w : words_[static_cast<std::size_t>(p)]) mask(i, local.at(w)) = 0.0;
      cell_rows.push_back(cells_[static_cast<std::size_t>(p)]);
    }
    ad::Var q = ad::matmul(ad::gather_rows(tape, *e_poi_, pois), tape.param(*w_q_));
    ad::Var k = ad::matmul(ad::gather_rows(tape, *e_cat_id_, union_words), tape.param(*w_k_));
    ad::Var v = ad::matmul(ad::gather_rows(tape, *e_cat_token_, union_words), tape.param(*w_v_));
    ad::Var logits = ad::scale(ad::matmul(q, ad::transpose(k)), 1.0 / std::sqrt(static_cast<double>(cfg_.d)));
    ad::Var attn = ad::softmax_rows(ad::add(logits, tape.constant(std::move(mask))));
    return ad::add(ad::matmul(attn, v), ad::gather_rows(tape, geo_.parameter(), cell_rows));
  }

  ad::Var embed(ad::Tape& tape, int poi) const {
    const int one[] = {poi};
    return table(tape, one);
  }

  RowVector compute_ppe(int poi) const {
    ad::Tape tape;
    return embed(tape, poi).value();
  }

  // Softmax weights over the POI's matched words, in word_ids order.
  RowVector attention_weights(int poi) const {
    const auto& w = words_.at(checked(poi));
    ad::Tape tape;
    ad::Var q = ad::matmul(ad::gather_rows(tape, *e_poi_, {poi}), tape.param(*w_q_));
    ad::Var k = ad::matmul(ad::gather_rows(tape, *e_cat_id_, w), tape.param(*w_k_));
    ad::Var logits = ad::scale(ad::matmul(q, ad::transpose(k)), 1.0 / std::sqrt(static_cast<double>(cfg_.d)));
    return ad::softmax_rows(logits).value();
  }

  Parameter& e_poi() const { return *e_poi_; }
  Parameter& e_cat_id() const { return *e_cat_id_; }
  Parameter& e_cat_token() const { return *e_cat_token_; }
  Parameter& w_q() const { return *w_q_; }
  Parameter& w_k() const { return *w_k_; }
  Parameter& w_v() const { return *w_v_; }
  geo::GeoEmbeddingTable& geo() { return geo_; }
  const geo::GeoEmbeddingTable& geo() const { return geo_; }

  // Everything except E_poi; the tensors a plain per-POI vector replaces.
  std::vector<Parameter*> semantic_parameters() const {
    return {e_cat_id_, e_cat_token_, w_q_, w_k_, w_v_, geo_param_};
  }

 private:
  std::size_t checked(int poi) const {
    if (poi < 0 || poi >= poi_count()) throw LookupError("unknown POI id " + std::to_string(poi));
    return static_cast<std::size_t>(poi);
  }

  PpelConfig cfg_;
  geo::GeoEmbeddingTable geo_;
  Parameter* geo_param_ = nullptr;
  Parameter* e_poi_ = nullptr;
  Parameter* e_cat_id_ = nullptr;
  Parameter* e_cat_token_ = nullptr;
  Parameter* w_q_ = nullptr;
  Parameter* w_k_ = nullptr;
  Parameter* w_v_ = nullptr;
  std::vector<std::vector<int>> words_;
  std::vector<int> cells_;
};

}  // namespace mobllm
