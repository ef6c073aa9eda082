#pragma once

// Processed-dataset archive: vocabularies, sequences and split indices in one
// JSON document tagged "mobllm-ds/1".

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include "json.hpp"
#include "mobllm/checkin_data.hpp"

namespace mobllm {

inline constexpr const char* kArchiveFormat = "mobllm-ds/1";

struct DatasetArchive {
  data::Vocabulary vocab;
  std::vector<data::CheckinSequence> sequences;
  std::optional<data::DatasetSplit> split;
  std::uint64_t split_seed = 0;

  bool operator==(const DatasetArchive&) const = default;
};

inline nlohmann::json archive_to_json(const DatasetArchive& a) {
  using nlohmann::json;
  json pois = json::array();
  for (const auto& p : a.vocab.pois)
    pois.push_back({{"key", p.key}, {"lat", p.lat}, {"lon", p.lon}, {"category", p.category_text}, {"words", p.word_ids}});
  json seqs = json::array();
  for (const auto& s : a.sequences) {
    json recs = json::array();
    for (const auto& r : s.records) recs.push_back({r.poi_id, r.timestamp, r.delta_t});
    seqs.push_back({{"user", s.user_id}, {"records", std::move(recs)}});
  }
  json doc = {{"format", kArchiveFormat},
              {"category_pool", a.vocab.category_pool},
              {"users", a.vocab.users},
              {"pois", std::move(pois)},
              {"sequences", std::move(seqs)}};
  if (a.split) {
    doc["split"] = {{"seed", a.split_seed}, {"train", a.split->train}, {"valid", a.split->valid}, {"test", a.split->test}};
  }
  return doc;
}

inline DatasetArchive archive_from_json(const nlohmann::json& doc) {
  try {
    if (!doc.is_object() || doc.value("format", "") != kArchiveFormat)
      throw DataError(std::string("not a ") + kArchiveFormat + " archive");
    DatasetArchive a;
    a.vocab.category_pool = doc.at("category_pool").get<std::vector<std::string>>();
    a.vocab.users = doc.at("users").get<std::vector<std::string>>();
    for (const auto& p : doc.at("pois")) {
      a.vocab.pois.push_back({p.at("key").get<std::string>(), p.at("lat").get<double>(), p.at("lon").get<double>(),
                              p.at("category").get<std::string>(), p.at("words").get<std::vector<int>>()});
    }
    const auto n_users = static_cast<int>(a.vocab.users.size());
    const auto n_pois = static_cast<int>(a.vocab.pois.size());
    for (const auto& s : doc.at("sequences")) {
      data::CheckinSequence seq;
      seq.user_id = s.at("user").get<int>();
      if (seq.user_id < 0 || seq.user_id >= n_users) throw DataError("archive: user id out of range");
      for (const auto& r : s.at("records")) {
        data::CheckinRecord rec{r.at(0).get<int>(), r.at(1).get<std::int64_t>(), r.at(2).get<std::int64_t>()};
        if (rec.poi_id < 0 || rec.poi_id >= n_pois) throw DataError("archive: POI id out of range");
        seq.records.push_back(rec);
      }
      a.sequences.push_back(std::move(seq));
    }
    if (doc.contains("split")) {
      const auto& sp = doc.at("split");
      data::DatasetSplit split;
      split.train = sp.at("train").get<std::vector<std::size_t>>();
      split.valid = sp.at("valid").get<std::vector<std::size_t>>();
      split.test = sp.at("test").get<std::vector<std::size_t>>();
      for (const auto* part : {&split.train, &split.valid, &split.test})
        for (std::size_t i : *part)
          if (i >= a.sequences.size()) throw DataError("archive: split index out of range");
      a.split = std::move(split);
      a.split_seed = sp.at("seed").get<std::uint64_t>();
    }
    return a;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed archive: ") + e.what());
  }
}

inline std::string archive_to_string(const DatasetArchive& a) { return archive_to_json(a).dump(1) + "\n"; }

inline void write_archive(const std::filesystem::path& path, const DatasetArchive& a) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << archive_to_string(a);
  if (!out) throw DataError("failed writing " + path.string());
}

inline DatasetArchive read_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open archive " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return archive_from_json(doc);
}

}  // namespace mobllm
