#pragma once

// Travel-preference prompt pool: three word domains, cosine scores of the
// visiting intentions against derived keys, top-K value selection per domain.

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "mobllm/autodiff.hpp"
#include "mobllm/parameters.hpp"
#include "mobllm/rng.hpp"

namespace mobllm {

inline constexpr int kPromptDomains = 3;
inline constexpr int kPromptWords = 16;
inline const std::array<std::string, kPromptDomains> kPromptDomainNames = {"occupation", "activity", "lifestyle"};

enum class Aggregation { sum, mean };

// Mirrors data/prompt_pool/*.txt.
inline std::array<std::vector<std::string>, kPromptDomains> default_prompt_words() {
  return {{
      {"Student", "Teacher", "Engineer", "Nurse", "Doctor", "Artist", "Musician", "Chef", "Driver", "Lawyer",
       "Programmer", "Farmer", "Journalist", "Scientist", "Salesperson", "Retiree"},
      {"Dining", "Shopping", "Commuting", "Studying", "Working", "Exercising", "Sightseeing", "Nightlife", "Worship",
       "Healthcare", "Socializing", "Traveling", "Entertainment", "Outdoors", "Errands", "Relaxing"},
      {"Homebody", "Explorer", "Foodie", "Workaholic", "Athletic", "Cultured", "Frugal", "Luxurious", "Nocturnal",
       "Earlybird", "Familyoriented", "Sociable", "Solitary", "Spontaneous", "Routine", "Ecofriendly"},
  }};
}

// One file per domain (<dir>/<domain>.txt), 16 non-empty lines each.
inline std::array<std::vector<std::string>, kPromptDomains> load_prompt_words(const std::filesystem::path& dir) {
  std::array<std::vector<std::string>, kPromptDomains> out;
  for (int d = 0; d < kPromptDomains; ++d) {
    const auto path = dir / (kPromptDomainNames[static_cast<std::size_t>(d)] + ".txt");
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open prompt pool file " + path.string());
    std::string line;
    while (std::getline(in, line)) {
      while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t')) line.pop_back();
      const auto start = line.find_first_not_of(" \t");
      if (start == std::string::npos) continue;
      out[static_cast<std::size_t>(d)].push_back(line.substr(start));
    }
    if (out[static_cast<std::size_t>(d)].size() != kPromptWords)
      throw ConfigError(path.string() + ": expected 16 words, found " +
                        std::to_string(out[static_cast<std::size_t>(d)].size()));
  }
  return out;
}

// Cosine similarity; 0 when either vector has zero norm.
inline double score(const RowVector& h, const RowVector& key) {
  if (h.size() != key.size()) throw ArgumentError("score: width mismatch");
  const double nh = h.norm(), nk = key.norm();
  if (nh == 0.0 || nk == 0.0) return 0.0;
  return h.dot(key) / (nh * nk);
}

// Per key: sum (or mean) over rows of H of score(h_i, key).
inline RowVector aggregate_scores(const Matrix& h, const Matrix& keys, Aggregation mode = Aggregation::sum) {
  if (h.rows() < 1) throw ArgumentError("aggregate_scores: empty H");
  if (h.cols() != keys.cols()) throw ArgumentError("aggregate_scores: width mismatch");
  ad::Tape tape;
  RowVector agg = ad::cosine_rows(tape.constant(h), tape.constant(keys)).value().colwise().sum();
  if (mode == Aggregation::mean) agg /= static_cast<double>(h.rows());
  return agg;
}

// Indices of the K largest scores, best first; ties go to the lower index.
inline std::vector<int> select_topk(const RowVector& scores, int k) {
  if (k < 1 || k > scores.size()) throw ArgumentError("select_topk: K out of range");
  std::vector<int> idx(static_cast<std::size_t>(scores.size()));
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return scores(a) > scores(b); });
  idx.resize(static_cast<std::size_t>(k));
  return idx;
}

struct PromptSelection {
  std::array<std::vector<int>, kPromptDomains> indices;
  std::array<RowVector, kPromptDomains> scores;  // aggregated, per pool word
};

struct HtppConfig {
  int width = 256;
  int k = 4;
  Aggregation aggregation = Aggregation::sum;
  bool train_values = false;
};

class PromptPool {
 public:
  PromptPool(ParameterStore& store, const HtppConfig& cfg, Rng& rng,
             std::array<std::vector<std::string>, kPromptDomains> words = default_prompt_words())
      : cfg_(cfg), words_(std::move(words)) {
    if (cfg.k < 1 || cfg.k > kPromptWords) throw ConfigError("htpp.K must be in [1, 16]");
    const Eigen::Index w = cfg.width;
    for (int d = 0; d < kPromptDomains; ++d) {
      const auto& list = words_[static_cast<std::size_t>(d)];
      if (list.size() != kPromptWords) throw ConfigError("prompt domain needs exactly 16 words");
      Matrix v(kPromptWords, w);
      for (int m = 0; m < kPromptWords; ++m) v.row(m) = word_vector(list[static_cast<std::size_t>(m)], w);
      const std::string name = "htpp." + kPromptDomainNames[static_cast<std::size_t>(d)];
      values_[static_cast<std::size_t>(d)] = &store.add(name + ".values", std::move(v), cfg.train_values);
      w_key_[static_cast<std::size_t>(d)] =
          &store.add(name + ".w_key", rng.normal_matrix(w, w, 1.0 / std::sqrt(static_cast<double>(w))));
    }
  }

  const HtppConfig& config() const { return cfg_; }
  const std::vector<std::string>& words(int domain) const { return words_.at(static_cast<std::size_t>(domain)); }
  Parameter& values(int domain) const { return *values_.at(static_cast<std::size_t>(domain)); }
  Parameter& key_matrix(int domain) const { return *w_key_.at(static_cast<std::size_t>(domain)); }

  // k_m = V_m W_key (row convention), 16 x width.
  Matrix derive_keys(int domain) const { return values(domain).value * key_matrix(domain).value; }

  ad::Var derive_keys(ad::Tape& tape, int domain) const {
    return ad::matmul(tape.param(values(domain)), tape.param(key_matrix(domain)));
  }

  PromptSelection select(const Matrix& h) const {
    PromptSelection sel;
    for (int d = 0; d < kPromptDomains; ++d) {
      sel.scores[static_cast<std::size_t>(d)] = aggregate_scores(h, derive_keys(d), cfg_.aggregation);
      sel.indices[static_cast<std::size_t>(d)] = select_topk(sel.scores[static_cast<std::size_t>(d)], cfg_.k);
    }
    return sel;
  }

  // 3K x width, domain-major then score rank.
  ad::Var prompt_tokens(ad::Tape& tape, const PromptSelection& sel) const {
    std::vector<ad::Var> parts;
    for (int d = 0; d < kPromptDomains; ++d)
      parts.push_back(ad::gather_rows(tape, values(d), sel.indices[static_cast<std::size_t>(d)]));
    return ad::concat_rows(parts);
  }

  std::vector<Parameter*> parameters() const {
    std::vector<Parameter*> ps;
    for (int d = 0; d < kPromptDomains; ++d) {
      ps.push_back(values_[static_cast<std::size_t>(d)]);
      ps.push_back(w_key_[static_cast<std::size_t>(d)]);
    }
    return ps;
  }

 private:
  HtppConfig cfg_;
  std::array<std::vector<std::string>, kPromptDomains> words_;
  std::array<Parameter*, kPromptDomains> values_{};
  std::array<Parameter*, kPromptDomains> w_key_{};
};

}  // namespace mobllm
