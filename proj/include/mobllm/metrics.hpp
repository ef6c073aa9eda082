#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "mobllm/error.hpp"
#include "mobllm/mixture.hpp"

namespace mobllm {

enum class Task { lp, tul, tp };

inline std::string_view task_name(Task t) {
  switch (t) {
    case Task::lp: return "lp";
    case Task::tul: return "tul";
    case Task::tp: return "tp";
  }
  return "?";
}

inline Task parse_task(std::string_view s) {
  if (s == "lp" || s == "LP") return Task::lp;
  if (s == "tul" || s == "TUL") return Task::tul;
  if (s == "tp" || s == "TP") return Task::tp;
  throw ArgumentError("unknown task '" + std::string(s) + "' (expected lp, tul or tp)");
}

// Class indices by descending score; equal scores keep index order.
inline std::vector<int> ranking(const Eigen::RowVectorXd& scores) {
  std::vector<int> idx(static_cast<std::size_t>(scores.size()));
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return scores(a) > scores(b); });
  return idx;
}

// 1-based position of target under the same ordering as ranking().
inline int rank_of(const Eigen::RowVectorXd& scores, int target) {
  if (target < 0 || target >= scores.size()) throw ArgumentError("rank_of: target out of range");
  int rank = 1;
  for (Eigen::Index j = 0; j < scores.size(); ++j)
    if (scores(j) > scores(target) || (scores(j) == scores(target) && j < target)) ++rank;
  return rank;
}

inline int position_in(const std::vector<int>& ranked, int target) {
  for (std::size_t i = 0; i < ranked.size(); ++i)
    if (ranked[i] == target) return static_cast<int>(i) + 1;
  throw ArgumentError("target missing from ranking");
}

inline double acc_at_k(const std::vector<std::vector<int>>& rankings, const std::vector<int>& targets, int k) {
  if (k < 1) throw ArgumentError("acc_at_k: k must be at least 1");
  if (rankings.size() != targets.size()) throw ArgumentError("acc_at_k: length mismatch");
  if (targets.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const auto& r = rankings[i];
    const auto end = r.begin() + std::min<std::ptrdiff_t>(k, static_cast<std::ptrdiff_t>(r.size()));
    if (std::find(r.begin(), end, targets[i]) != end) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(targets.size());
}

inline double mrr(const std::vector<std::vector<int>>& rankings, const std::vector<int>& targets) {
  if (rankings.size() != targets.size()) throw ArgumentError("mrr: length mismatch");
  if (targets.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) sum += 1.0 / position_in(rankings[i], targets[i]);
  return sum / static_cast<double>(targets.size());
}

// Rank-based forms used by evaluation.
inline double acc_at_k(const std::vector<int>& ranks, int k) {
  if (k < 1) throw ArgumentError("acc_at_k: k must be at least 1");
  if (ranks.empty()) return 0.0;
  std::size_t hits = 0;
  for (int r : ranks) hits += r <= k ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(ranks.size());
}

inline double mrr(const std::vector<int>& ranks) {
  if (ranks.empty()) return 0.0;
  double sum = 0.0;
  for (int r : ranks) sum += 1.0 / r;
  return sum / static_cast<double>(ranks.size());
}

struct ErrorPair {
  double mae = 0.0;
  double rmse = 0.0;
};

// Inputs in seconds, results in minutes.
inline ErrorPair mae_rmse(const std::vector<double>& predicted, const std::vector<double>& truth) {
  if (predicted.size() != truth.size()) throw ArgumentError("mae_rmse: length mismatch");
  if (predicted.empty()) return {};
  double abs_sum = 0.0, sq_sum = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double e = (predicted[i] - truth[i]) / 60.0;
    abs_sum += std::abs(e);
    sq_sum += e * e;
  }
  const double n = static_cast<double>(predicted.size());
  return {abs_sum / n, std::sqrt(sq_sum / n)};
}

// -log p(target), averaged over the batch. Rows of probs are distributions.
inline double loss_classification(const Eigen::MatrixXd& probs, const std::vector<int>& targets) {
  if (probs.rows() != static_cast<Eigen::Index>(targets.size()) || targets.empty())
    throw ArgumentError("loss: batch size mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i] < 0 || targets[i] >= probs.cols()) throw ArgumentError("loss: target out of range");
    sum -= std::log(probs(static_cast<Eigen::Index>(i), targets[i]));
  }
  return sum / static_cast<double>(targets.size());
}

inline double loss_lp(const Eigen::MatrixXd& probs, const std::vector<int>& targets) {
  return loss_classification(probs, targets);
}
inline double loss_tul(const Eigen::MatrixXd& probs, const std::vector<int>& targets) {
  return loss_classification(probs, targets);
}

enum class TpLoss { mae, nll };

inline double loss_tp(const MixtureParams& p, const LogTimeNormalizer& norm, double target_dt, TpLoss mode) {
  if (!(target_dt > 0.0)) throw ArgumentError("loss_tp: target interval must be positive");
  if (mode == TpLoss::mae) return std::abs(mixture_expectation(p, norm) - target_dt);
  return -mixture_log_density(target_dt, denormalize(p, norm));
}

}  // namespace mobllm
