#pragma once

// Check-in records, file parsing, preprocessing filters, vocabularies and
// train/validation/test splits.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "mobllm/category_pool.hpp"
#include "mobllm/error.hpp"
#include "mobllm/rng.hpp"

namespace mobllm::data {

struct RawCheckin {
  std::string user_key;
  std::int64_t timestamp = 0;
  double lat = 0.0;
  double lon = 0.0;
  std::string poi_key;
  std::string category_text;

  bool operator==(const RawCheckin&) const = default;
};

struct CheckinRecord {
  int poi_id = 0;
  std::int64_t timestamp = 0;
  std::int64_t delta_t = 0;

  bool operator==(const CheckinRecord&) const = default;
};

struct CheckinSequence {
  int user_id = 0;
  std::vector<CheckinRecord> records;

  std::size_t size() const { return records.size(); }
  bool operator==(const CheckinSequence&) const = default;
};

struct PoiInfo {
  std::string key;
  double lat = 0.0;
  double lon = 0.0;
  std::string category_text;
  std::vector<int> word_ids;

  bool operator==(const PoiInfo&) const = default;
};

struct Vocabulary {
  std::vector<PoiInfo> pois;
  std::vector<std::string> users;
  std::vector<std::string> category_pool;

  std::size_t poi_count() const { return pois.size(); }
  std::size_t user_count() const { return users.size(); }
  bool operator==(const Vocabulary&) const = default;
};

struct DatasetSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> valid;
  std::vector<std::size_t> test;
  std::optional<double> few_shot_fraction;

  bool operator==(const DatasetSplit&) const = default;
};

// ---------------------------------------------------------------------------
// Category matching

namespace detail {

inline std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

// Connectives carry no category signal.
inline bool is_stop_word(std::string_view t) {
  static const std::unordered_set<std::string_view> stop = {"and", "the", "of", "for", "in", "at", "on", "n", "s", "a", "or", "to"};
  return t.size() < 2 || stop.contains(t);
}

// Broad head nouns ("Coffee Shop", "Food Place"). They only count when the
// text has nothing more specific.
inline bool is_generic_word(std::string_view t) {
  static const std::unordered_set<std::string_view> generic = {
      "shop", "shops", "store", "stores", "place", "places", "spot", "spots", "other", "general",
      "center", "centre", "area", "service", "services", "venue", "joint", "building", "site", "location"};
  return generic.contains(t);
}

inline void match_token(const std::string& token, const std::vector<std::string>& lowered_pool, std::set<int>& out) {
  bool exact = false;
  for (std::size_t i = 0; i < lowered_pool.size(); ++i) {
    if (lowered_pool[i] == token) {
      out.insert(static_cast<int>(i));
      exact = true;
    }
  }
  if (exact) return;
  for (std::size_t i = 0; i < lowered_pool.size(); ++i) {
    const std::string& w = lowered_pool[i];
    const bool token_in_word = token.size() >= 3 && w.find(token) != std::string::npos;
    const bool word_in_token = w.size() >= 4 && token.find(w) != std::string::npos;
    if (token_in_word || word_in_token) out.insert(static_cast<int>(i));
  }
}

}  // namespace detail

// IDs of pool words matching free-form category text. Each token tries a
// case-insensitive exact match, then a substring match in either direction.
// Generic head nouns are consulted only when no specific token matched.
// Unmatched or empty text returns the whole pool (the fallback bucket), so
// the POI's attention spreads over every word.
inline std::vector<int> match_categories(std::string_view category_text, const std::vector<std::string>& pool) {
  std::vector<std::string> lowered;
  lowered.reserve(pool.size());
  for (const auto& w : pool) lowered.push_back(detail::lower(w));

  std::vector<std::string> specific, generic;
  for (auto& t : detail::tokenize(category_text)) {
    if (detail::is_stop_word(t)) continue;
    (detail::is_generic_word(t) ? generic : specific).push_back(std::move(t));
  }
  std::set<int> found;
  for (const auto& t : specific) detail::match_token(t, lowered, found);
  if (found.empty())
    for (const auto& t : generic) detail::match_token(t, lowered, found);
  if (found.empty()) {
    std::vector<int> all(pool.size());
    std::iota(all.begin(), all.end(), 0);
    return all;
  }
  return {found.begin(), found.end()};
}

inline bool is_fallback_match(const std::vector<int>& ids, const std::vector<std::string>& pool) {
  return ids.size() == pool.size() && pool.size() > 1;
}

// ---------------------------------------------------------------------------
// Parsing

struct ColumnSpec {
  int user = 0;
  int time = 1;
  int lat = 2;
  int lon = 3;
  int poi = 4;
  int category = 5;  // -1 when the file carries no category column
  char delimiter = '\0';  // '\0' autodetects tab, else comma
  bool has_header = false;
};

struct ParseDiagnostic {
  std::size_t line = 0;
  std::string message;
};

struct ParseResult {
  std::vector<RawCheckin> rows;
  std::vector<ParseDiagnostic> errors;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split(std::string_view line, char delim) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(delim, start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::optional<std::int64_t> parse_int(std::string_view s) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::optional<double> parse_double(std::string_view s) {
  if (s.empty()) return std::nullopt;
  std::string buf(s);
  char* end = nullptr;
  const double v = std::strtod(buf.c_str(), &end);
  if (end != buf.c_str() + buf.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

}  // namespace detail

// Integer epoch seconds, or ISO-8601 "YYYY-MM-DD[T ]HH:MM:SS[.fff][Z|+HH:MM|-HH:MM]".
// The result is UTC seconds.
inline std::optional<std::int64_t> parse_timestamp(std::string_view s) {
  s = detail::trim(s);
  if (auto v = detail::parse_int(s)) return v;
  if (s.size() < 19 || s[4] != '-' || s[7] != '-' || (s[10] != 'T' && s[10] != ' ') || s[13] != ':' || s[16] != ':')
    return std::nullopt;
  auto num = [&](std::size_t pos, std::size_t len) { return detail::parse_int(s.substr(pos, len)); };
  auto y = num(0, 4), mo = num(5, 2), d = num(8, 2), h = num(11, 2), mi = num(14, 2), se = num(17, 2);
  if (!y || !mo || !d || !h || !mi || !se) return std::nullopt;
  using namespace std::chrono;
  const year_month_day ymd{year{static_cast<int>(*y)}, month{static_cast<unsigned>(*mo)}, day{static_cast<unsigned>(*d)}};
  if (!ymd.ok() || *h > 23 || *mi > 59 || *se > 60) return std::nullopt;
  std::int64_t secs = sys_days{ymd}.time_since_epoch().count() * 86400 + *h * 3600 + *mi * 60 + *se;
  std::size_t pos = 19;
  if (pos < s.size() && s[pos] == '.') {
    ++pos;
    while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) ++pos;
  }
  if (pos == s.size()) return secs;
  if (s[pos] == 'Z' && pos + 1 == s.size()) return secs;
  if ((s[pos] == '+' || s[pos] == '-') && s.size() == pos + 6 && s[pos + 3] == ':') {
    auto oh = num(pos + 1, 2), om = num(pos + 4, 2);
    if (!oh || !om) return std::nullopt;
    const std::int64_t offset = *oh * 3600 + *om * 60;
    return s[pos] == '+' ? secs - offset : secs + offset;
  }
  return std::nullopt;
}

// Parses delimited text. Rows with bad values are skipped and reported with
// their 1-based line number. A file whose first data row lacks a required
// column is rejected outright.
inline ParseResult parse_checkins(std::istream& in, const ColumnSpec& spec = {}) {
  ParseResult result;
  const int required = std::max({spec.user, spec.time, spec.lat, spec.lon, spec.poi});
  std::string line;
  std::size_t line_no = 0;
  char delim = spec.delimiter;
  bool first_data_row = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) continue;
    if (delim == '\0') delim = line.find('\t') != std::string::npos ? '\t' : ',';
    if (first_data_row && spec.has_header) {
      first_data_row = false;
      continue;
    }
    const auto fields = detail::split(line, delim);
    if (static_cast<int>(fields.size()) <= required) {
      if (first_data_row)
        throw ParseError("line " + std::to_string(line_no) + ": missing required column (expected at least " +
                         std::to_string(required + 1) + " fields, found " + std::to_string(fields.size()) + ")");
      result.errors.push_back({line_no, "too few fields"});
      continue;
    }
    first_data_row = false;
    RawCheckin row;
    row.user_key = std::string(fields[static_cast<std::size_t>(spec.user)]);
    row.poi_key = std::string(fields[static_cast<std::size_t>(spec.poi)]);
    if (spec.category >= 0 && spec.category < static_cast<int>(fields.size()))
      row.category_text = std::string(fields[static_cast<std::size_t>(spec.category)]);
    auto ts = parse_timestamp(fields[static_cast<std::size_t>(spec.time)]);
    auto lat = detail::parse_double(fields[static_cast<std::size_t>(spec.lat)]);
    auto lon = detail::parse_double(fields[static_cast<std::size_t>(spec.lon)]);
    if (row.user_key.empty() || row.poi_key.empty()) {
      result.errors.push_back({line_no, "empty user or location id"});
      continue;
    }
    if (!ts || *ts < 0) {
      result.errors.push_back({line_no, "bad timestamp"});
      continue;
    }
    if (!lat || !lon) {
      result.errors.push_back({line_no, "bad coordinate"});
      continue;
    }
    if (*lat < -90.0 || *lat > 90.0 || *lon < -180.0 || *lon > 180.0) {
      result.errors.push_back({line_no, "coordinate out of range"});
      continue;
    }
    row.timestamp = *ts;
    row.lat = *lat;
    row.lon = *lon;
    result.rows.push_back(std::move(row));
  }
  return result;
}

inline ParseResult parse_checkin_file(const std::string& path, const ColumnSpec& spec = {}) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  return parse_checkins(in, spec);
}

// ---------------------------------------------------------------------------
// Preprocessing

struct PreprocessConfig {
  int max_history_days = 120;
  int min_user_records = 10;
  int min_poi_visits = 10;
  double session_gap_hours = 24.0;
  int max_seq_len = 64;
};

struct PreprocessResult {
  std::vector<CheckinSequence> sequences;
  Vocabulary vocab;
};

namespace detail {

// Cuts one user's time-sorted rows into sessions, then into chunks of at most
// max_len. Returns the chunks as lists of row indices.
inline std::vector<std::vector<std::size_t>> sessionize(const std::vector<std::size_t>& rows,
                                                        const std::vector<RawCheckin>& raw,
                                                        const PreprocessConfig& cfg) {
  std::vector<std::vector<std::size_t>> chunks;
  const auto gap = static_cast<std::int64_t>(std::llround(cfg.session_gap_hours * 3600.0));
  std::vector<std::size_t> session;
  auto flush = [&] {
    for (std::size_t at = 0; at < session.size(); at += static_cast<std::size_t>(cfg.max_seq_len)) {
      const auto end = std::min(session.size(), at + static_cast<std::size_t>(cfg.max_seq_len));
      chunks.emplace_back(session.begin() + static_cast<std::ptrdiff_t>(at), session.begin() + static_cast<std::ptrdiff_t>(end));
    }
    session.clear();
  };
  for (std::size_t r : rows) {
    if (!session.empty() && raw[r].timestamp - raw[session.back()].timestamp > gap) flush();
    session.push_back(r);
  }
  flush();
  return chunks;
}

}  // namespace detail

// Applies the history window, the user/POI frequency thresholds and session
// cutting repeatedly until nothing changes, then reindexes users and POIs
// densely in order of first appearance.
inline PreprocessResult preprocess(const std::vector<RawCheckin>& raw, const PreprocessConfig& cfg = {},
                                   const std::vector<std::string>& pool = category_word_pool()) {
  if (cfg.max_seq_len < 2) throw ConfigError("max_seq_len must be at least 2");
  if (cfg.min_user_records < 0 || cfg.min_poi_visits < 0 || cfg.max_history_days <= 0)
    throw ConfigError("preprocess thresholds must be non-negative and the history window positive");

  // Users in first-appearance order, each with time-sorted row indices (ties keep file order).
  std::vector<std::string> user_order;
  std::unordered_map<std::string, std::vector<std::size_t>> by_user;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    auto [it, inserted] = by_user.try_emplace(raw[i].user_key);
    if (inserted) user_order.push_back(raw[i].user_key);
    it->second.push_back(i);
  }
  std::vector<std::vector<std::size_t>> rows_of;
  rows_of.reserve(user_order.size());
  for (const auto& u : user_order) {
    auto rows = std::move(by_user[u]);
    std::stable_sort(rows.begin(), rows.end(), [&](std::size_t a, std::size_t b) { return raw[a].timestamp < raw[b].timestamp; });
    rows_of.push_back(std::move(rows));
  }

  const std::int64_t window = static_cast<std::int64_t>(cfg.max_history_days) * 86400;
  std::vector<std::vector<std::vector<std::size_t>>> chunks_of(rows_of.size());
  bool changed = true;
  while (changed) {
    changed = false;
    // History window, then user threshold.
    for (auto& rows : rows_of) {
      if (rows.empty()) continue;
      const std::int64_t last = raw[rows.back()].timestamp;
      const auto first_kept = std::find_if(rows.begin(), rows.end(), [&](std::size_t r) { return raw[r].timestamp >= last - window; });
      if (first_kept != rows.begin()) {
        rows.erase(rows.begin(), first_kept);
        changed = true;
      }
      if (static_cast<int>(rows.size()) < cfg.min_user_records) {
        rows.clear();
        changed = true;
      }
    }
    // POI threshold.
    std::unordered_map<std::string_view, int> visits;
    for (const auto& rows : rows_of)
      for (std::size_t r : rows) ++visits[raw[r].poi_key];
    for (auto& rows : rows_of) {
      const auto before = rows.size();
      std::erase_if(rows, [&](std::size_t r) { return visits[raw[r].poi_key] < cfg.min_poi_visits; });
      changed = changed || rows.size() != before;
    }
    // Sessions; single-record chunks are discarded.
    for (std::size_t u = 0; u < rows_of.size(); ++u) {
      auto chunks = detail::sessionize(rows_of[u], raw, cfg);
      std::vector<std::size_t> kept;
      std::vector<std::vector<std::size_t>> kept_chunks;
      for (auto& c : chunks) {
        if (c.size() < 2) continue;
        kept.insert(kept.end(), c.begin(), c.end());
        kept_chunks.push_back(std::move(c));
      }
      if (kept.size() != rows_of[u].size()) {
        rows_of[u] = std::move(kept);
        changed = true;
      }
      chunks_of[u] = std::move(kept_chunks);
    }
  }

  // Dense reindexing in file order of first retained appearance.
  std::vector<char> retained(raw.size(), 0);
  for (const auto& rows : rows_of)
    for (std::size_t r : rows) retained[r] = 1;
  PreprocessResult out;
  out.vocab.category_pool = pool;
  std::unordered_map<std::string, int> user_id, poi_id;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (!retained[i]) continue;
    const RawCheckin& row = raw[i];
    if (!user_id.contains(row.user_key)) {
      user_id.emplace(row.user_key, static_cast<int>(out.vocab.users.size()));
      out.vocab.users.push_back(row.user_key);
    }
    if (auto it = poi_id.find(row.poi_key); it == poi_id.end()) {
      poi_id.emplace(row.poi_key, static_cast<int>(out.vocab.pois.size()));
      out.vocab.pois.push_back({row.poi_key, row.lat, row.lon, row.category_text, {}});
    } else if (out.vocab.pois[static_cast<std::size_t>(it->second)].category_text.empty() && !row.category_text.empty()) {
      out.vocab.pois[static_cast<std::size_t>(it->second)].category_text = row.category_text;
    }
  }
  if (out.vocab.users.empty()) throw DataError("empty dataset");
  for (auto& poi : out.vocab.pois) poi.word_ids = match_categories(poi.category_text, pool);

  // Sequences ordered by dense user id, then time.
  std::vector<std::size_t> order;
  for (std::size_t u = 0; u < rows_of.size(); ++u)
    if (!rows_of[u].empty()) order.push_back(u);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return user_id.at(user_order[a]) < user_id.at(user_order[b]);
  });
  for (std::size_t u : order) {
    for (const auto& chunk : chunks_of[u]) {
      CheckinSequence seq;
      seq.user_id = user_id.at(user_order[u]);
      for (std::size_t k = 0; k < chunk.size(); ++k) {
        const RawCheckin& row = raw[chunk[k]];
        const std::int64_t dt = k == 0 ? 0 : row.timestamp - raw[chunk[k - 1]].timestamp;
        seq.records.push_back({poi_id.at(row.poi_key), row.timestamp, dt});
      }
      out.sequences.push_back(std::move(seq));
    }
  }
  return out;
}

// Rebuilds raw rows from processed sequences (used to check idempotence and to
// re-run preprocessing on an archive).
inline std::vector<RawCheckin> to_raw(const std::vector<CheckinSequence>& sequences, const Vocabulary& vocab) {
  std::vector<RawCheckin> out;
  for (const auto& seq : sequences)
    for (const auto& rec : seq.records) {
      const PoiInfo& p = vocab.pois.at(static_cast<std::size_t>(rec.poi_id));
      out.push_back({vocab.users.at(static_cast<std::size_t>(seq.user_id)), rec.timestamp, p.lat, p.lon, p.key, p.category_text});
    }
  return out;
}

// ---------------------------------------------------------------------------
// Splits

struct SplitRatio {
  int train = 6;
  int valid = 2;
  int test = 2;
};

inline SplitRatio parse_split_ratio(std::string_view text) {
  SplitRatio r;
  std::vector<int> parts;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto pos = text.find(':', start);
    auto v = detail::parse_int(detail::trim(text.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (!v || *v < 0) throw ConfigError("bad split ratio: " + std::string(text));
    parts.push_back(static_cast<int>(*v));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  if (parts.size() != 3 || parts[0] + parts[1] + parts[2] == 0) throw ConfigError("bad split ratio: " + std::string(text));
  r.train = parts[0];
  r.valid = parts[1];
  r.test = parts[2];
  return r;
}

// Global shuffle of sample indices, then a ratio split. Remainder samples go
// round-robin to train, valid, test.
inline DatasetSplit split_dataset(std::size_t sequence_count, std::uint64_t seed, SplitRatio ratio = {}) {
  if (sequence_count < 5) throw DataError("need at least 5 sequences to split, have " + std::to_string(sequence_count));
  std::vector<std::size_t> idx(sequence_count);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  rng.shuffle(idx);
  const std::size_t total = static_cast<std::size_t>(ratio.train + ratio.valid + ratio.test);
  std::size_t sizes[3] = {sequence_count * static_cast<std::size_t>(ratio.train) / total,
                          sequence_count * static_cast<std::size_t>(ratio.valid) / total,
                          sequence_count * static_cast<std::size_t>(ratio.test) / total};
  std::size_t remainder = sequence_count - sizes[0] - sizes[1] - sizes[2];
  for (std::size_t k = 0; remainder > 0; k = (k + 1) % 3, --remainder) ++sizes[k];
  DatasetSplit split;
  split.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(sizes[0]));
  split.valid.assign(idx.begin() + static_cast<std::ptrdiff_t>(sizes[0]), idx.begin() + static_cast<std::ptrdiff_t>(sizes[0] + sizes[1]));
  split.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(sizes[0] + sizes[1]), idx.end());
  return split;
}

// Number of leading samples kept for a fraction: ceil(fraction * n), with
// products that land on an integer up to rounding noise taken exactly.
inline std::size_t few_shot_count(std::size_t n, double fraction) {
  const double x = fraction * static_cast<double>(n);
  const double nearest = std::round(x);
  const double k = std::abs(x - nearest) < 1e-9 ? nearest : std::ceil(x);
  return std::min(n, static_cast<std::size_t>(k));
}

inline DatasetSplit few_shot_subset(const DatasetSplit& split, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ArgumentError("few-shot fraction must be in (0, 1]");
  DatasetSplit out = split;
  out.train.resize(few_shot_count(split.train.size(), fraction));
  out.few_shot_fraction = fraction;
  return out;
}

}  // namespace mobllm::data
