#pragma once

// Small hand-built vocabularies and desk-sized model settings for tests.

#include <string>
#include <vector>

#include "mobllm/checkin_data.hpp"
#include "mobllm/model.hpp"
#include "mobllm/rng.hpp"

namespace mobllm::testing {

// Pool of `words` names; POI i matches words[i] (entries index the pool).
inline data::Vocabulary tiny_vocab(const std::vector<std::vector<int>>& words, int pool = 6, int users = 3) {
  data::Vocabulary v;
  for (int w = 0; w < pool; ++w) v.category_pool.push_back("word" + std::to_string(w));
  for (std::size_t i = 0; i < words.size(); ++i) {
    data::PoiInfo p;
    p.key = "poi" + std::to_string(i);
    p.lat = 30.0 + 0.01 * static_cast<double>(i);
    p.lon = 120.0 + 0.013 * static_cast<double>(i);
    p.word_ids = words[i];
    v.pois.push_back(p);
  }
  for (int u = 0; u < users; ++u) v.users.push_back("user" + std::to_string(u));
  return v;
}

inline void randomize(Parameter& p, std::uint64_t seed, double sd = 0.5) {
  Rng rng(seed);
  p.value = rng.normal_matrix(p.value.rows(), p.value.cols(), sd);
}

// Every parameter, trainable or not, redrawn from N(0, sd^2).
inline void randomize_all(ParameterStore& store, std::uint64_t seed, double sd = 0.5) {
  std::uint64_t k = 0;
  for (Parameter& p : store) randomize(p, seed * 1000003 + (k++), sd);
}

inline ModelConfig tiny_model(Task task, int width = 8) {
  ModelConfig m;
  m.task = task;
  m.ppel.d = width;
  m.vimn.hidden = width;
  m.vimn.r = 3;
  m.vimn.fuse_hidden = width;
  m.htpp.k = 2;
  m.backbone.layers = 2;
  m.backbone.heads = 2;
  m.backbone.ffn_mult = 2;
  m.heads.k_mix = 3;
  return m;
}

// A few short sequences over the tiny vocabulary.
inline std::vector<data::CheckinSequence> tiny_sequences(int pois, int users, int count, std::uint64_t seed, int len = 5) {
  Rng rng(seed);
  std::vector<data::CheckinSequence> out;
  for (int s = 0; s < count; ++s) {
    data::CheckinSequence seq;
    seq.user_id = s % users;
    std::int64_t t = 1262304000 + static_cast<std::int64_t>(rng.index(86400 * 30));
    for (int k = 0; k < len; ++k) {
      std::int64_t dt = 0;
      if (k > 0) {
        dt = 60 + static_cast<std::int64_t>(rng.index(7200));
        t += dt;
      }
      seq.records.push_back({static_cast<int>(rng.index(static_cast<std::size_t>(pois))), t, dt});
    }
    out.push_back(std::move(seq));
  }
  return out;
}

}  // namespace mobllm::testing
