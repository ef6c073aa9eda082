#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mobllm/checkin_data.hpp"
#include "mobllm/rng.hpp"

namespace mobllm::data {

struct SyntheticSpec {
  int users = 50;
  int pois = 200;
  int sequences = 2000;
  std::uint64_t seed = 7;
  int min_len = 6;
  int max_len = 14;
  // Users are dealt round-robin into groups that share one cyclic route; 0
  // gives every user a route of their own.
  int groups = 10;
  int route_min = 4;
  int route_max = 7;
  // Personal stops spliced into each user's copy of the group route.
  int private_stops = 1;
  // Chance that a visit follows the route rather than detouring to a place
  // drawn from the corpus-wide popularity distribution.
  double follow_prob = 0.85;
  // Zipf exponent of POI popularity; route stops and detours draw from it.
  double popularity = 1.0;
  // Per-group typical gap between visits, drawn log-uniformly; each user's
  // pace deviates from it by a log-normal factor.
  double min_gap_seconds = 900.0;
  double max_gap_seconds = 21600.0;
  double pace_log_sigma = 0.25;
  double gap_log_sigma = 0.3;
  // Sequences start near a per-group hour of day, shifted per user.
  double user_hour_sigma = 1.5;
  double start_sigma_hours = 1.0;
};

struct SyntheticCorpus {
  std::vector<CheckinSequence> sequences;
  Vocabulary vocab;
};

// Groups of users walk a shared cyclic route with a few personal stops, each
// at a pace and time of day close to the group's, with occasional detours to
// popular places. Neither the next place nor the walker can be read off one visit.
inline SyntheticCorpus generate_synthetic(const SyntheticSpec& spec) {
  if (spec.users < 1 || spec.pois < 1 || spec.sequences < 1) throw ArgumentError("synthetic counts must be >= 1");
  if (spec.min_len < 2 || spec.max_len < spec.min_len) throw ArgumentError("synthetic sequence lengths must satisfy 2 <= min <= max");
  if (spec.route_min < 1 || spec.route_max < spec.route_min || spec.groups < 0 || spec.private_stops < 0)
    throw ArgumentError("synthetic route settings must satisfy 1 <= route_min <= route_max, groups and private_stops >= 0");
  if (spec.popularity < 0.0 || spec.follow_prob < 0.0 || spec.follow_prob > 1.0)
    throw ArgumentError("synthetic popularity must be >= 0 and follow_prob in [0, 1]");
  if (!(spec.min_gap_seconds > 0.0) || spec.max_gap_seconds < spec.min_gap_seconds || spec.gap_log_sigma < 0.0 ||
      spec.pace_log_sigma < 0.0 || spec.user_hour_sigma < 0.0 || spec.start_sigma_hours < 0.0)
    throw ArgumentError("synthetic gap settings must be positive and ordered");
  Rng rng(spec.seed);
  SyntheticCorpus corpus;
  const auto& pool = category_word_pool();
  corpus.vocab.category_pool = pool;

  for (int p = 0; p < spec.pois; ++p) {
    PoiInfo poi;
    poi.key = "p" + std::to_string(p);
    poi.lat = 30.0 + 0.3 * rng.uniform();
    poi.lon = 120.0 + 0.3 * rng.uniform();
    poi.category_text = pool[rng.index(pool.size())];
    if (rng.uniform() < 0.3) poi.category_text += " " + pool[rng.index(pool.size())];
    poi.word_ids = match_categories(poi.category_text, pool);
    corpus.vocab.pois.push_back(std::move(poi));
  }

  std::vector<double> popularity(static_cast<std::size_t>(spec.pois));
  for (int p = 0; p < spec.pois; ++p) popularity[static_cast<std::size_t>(p)] = std::pow(1.0 + p, -spec.popularity);
  // Weighted draw; zero weights are never chosen.
  const auto draw = [&](const std::vector<double>& w) {
    double total = 0.0;
    for (double x : w) total += x;
    double u = rng.uniform() * total;
    std::size_t last = 0;
    for (std::size_t p = 0; p < w.size(); ++p) {
      if (w[p] <= 0.0) continue;
      last = p;
      u -= w[p];
      if (u < 0.0) return p;
    }
    return last;
  };
  // Up to `count` distinct POIs not already in `taken`.
  const auto draw_distinct = [&](int count, std::vector<int> taken) {
    std::vector<double> left = popularity;
    for (int p : taken) left[static_cast<std::size_t>(p)] = 0.0;
    std::vector<int> out;
    for (int k = 0; k < count && static_cast<int>(taken.size()) < spec.pois; ++k) {
      const int p = static_cast<int>(draw(left));
      left[static_cast<std::size_t>(p)] = 0.0;
      taken.push_back(p);
      out.push_back(p);
    }
    return out;
  };

  const int group_count = spec.groups > 0 ? std::min(spec.groups, spec.users) : spec.users;
  struct Group {
    std::vector<int> route;
    double gap = 0.0;
    double hour = 0.0;
  };
  std::vector<Group> groups;
  for (int g = 0; g < group_count; ++g) {
    Group group;
    const int span = spec.route_min + static_cast<int>(rng.index(static_cast<std::size_t>(spec.route_max - spec.route_min + 1)));
    group.route = draw_distinct(span, {});
    group.gap = std::exp(rng.uniform(std::log(spec.min_gap_seconds), std::log(spec.max_gap_seconds)));
    group.hour = rng.uniform(0.0, 24.0);
    groups.push_back(std::move(group));
  }

  struct Walker {
    std::vector<int> route;
    double gap = 0.0;
    double start_hour = 0.0;
  };
  std::vector<Walker> walkers;
  for (int u = 0; u < spec.users; ++u) {
    corpus.vocab.users.push_back("u" + std::to_string(u));
    Walker w;
    const Group& group = groups[static_cast<std::size_t>(u % group_count)];
    w.route = group.route;
    for (int p : draw_distinct(spec.private_stops, w.route))
      w.route.insert(w.route.begin() + static_cast<std::ptrdiff_t>(rng.index(w.route.size() + 1)), p);
    w.gap = group.gap * std::exp(spec.pace_log_sigma * rng.normal());
    w.start_hour = group.hour + spec.user_hour_sigma * rng.normal();
    walkers.push_back(std::move(w));
  }

  const std::int64_t epoch = 1262304000;  // 2010-01-01T00:00:00Z
  for (int s = 0; s < spec.sequences; ++s) {
    const int u = s % spec.users;
    const Walker& w = walkers[static_cast<std::size_t>(u)];
    const std::size_t route_len = w.route.size();
    CheckinSequence seq;
    seq.user_id = u;
    const int length = spec.min_len + static_cast<int>(rng.index(static_cast<std::size_t>(spec.max_len - spec.min_len + 1)));
    std::size_t pos = rng.index(route_len);
    const double hour = w.start_hour + spec.start_sigma_hours * rng.normal();
    const double day_hour = std::fmod(std::fmod(hour, 24.0) + 24.0, 24.0);
    std::int64_t t = epoch + 86400 * static_cast<std::int64_t>(rng.index(100)) + std::llround(day_hour * 3600.0);
    for (int k = 0; k < length; ++k) {
      std::int64_t dt = 0;
      int poi = w.route[pos];
      if (k > 0) {
        if (rng.uniform() < spec.follow_prob) {
          pos = (pos + 1) % route_len;
          poi = w.route[pos];
        } else {
          poi = static_cast<int>(draw(popularity));
        }
        dt = std::max<std::int64_t>(1, std::llround(w.gap * std::exp(spec.gap_log_sigma * rng.normal())));
        t += dt;
      }
      seq.records.push_back({poi, t, dt});
    }
    corpus.sequences.push_back(std::move(seq));
  }
  return corpus;
}

}  // namespace mobllm::data
