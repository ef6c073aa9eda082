#pragma once

#include <array>
#include <cmath>
#include <string>
#include <string_view>
#include <unordered_map>

#include "mobllm/error.hpp"
#include "mobllm/parameters.hpp"

namespace mobllm::geo {

inline constexpr std::string_view kBase32 = "0123456789bcdefghjkmnpqrstuvwxyz";

struct GeohashConfig {
  int precision = 6;
  Eigen::Index embed_dim = 256;
};

struct DecodedCell {
  double lat = 0.0;
  double lon = 0.0;
  double lat_err = 0.0;
  double lon_err = 0.0;
};

inline void check_coordinates(double lat, double lon) {
  if (!(lat >= -90.0 && lat <= 90.0)) throw ArgumentError("latitude out of range: " + std::to_string(lat));
  if (!(lon >= -180.0 && lon <= 180.0)) throw ArgumentError("longitude out of range: " + std::to_string(lon));
}

// Standard base32 geohash; bit 0 refines longitude, bit 1 latitude, and so on.
inline std::string encode(double lat, double lon, int precision) {
  check_coordinates(lat, lon);
  if (precision < 1 || precision > 12) throw ArgumentError("geohash precision must be in [1, 12]");
  double lat_lo = -90.0, lat_hi = 90.0;
  double lon_lo = -180.0, lon_hi = 180.0;
  std::string out;
  out.reserve(static_cast<std::size_t>(precision));
  bool even = true;
  int bit = 0, ch = 0;
  while (static_cast<int>(out.size()) < precision) {
    if (even) {
      const double mid = (lon_lo + lon_hi) / 2.0;
      if (lon >= mid) {
        ch = (ch << 1) | 1;
        lon_lo = mid;
      } else {
        ch <<= 1;
        lon_hi = mid;
      }
    } else {
      const double mid = (lat_lo + lat_hi) / 2.0;
      if (lat >= mid) {
        ch = (ch << 1) | 1;
        lat_lo = mid;
      } else {
        ch <<= 1;
        lat_hi = mid;
      }
    }
    even = !even;
    if (++bit == 5) {
      out.push_back(kBase32[static_cast<std::size_t>(ch)]);
      bit = 0;
      ch = 0;
    }
  }
  return out;
}

inline DecodedCell decode(std::string_view hash) {
  if (hash.empty()) throw ParseError("empty geohash");
  double lat_lo = -90.0, lat_hi = 90.0;
  double lon_lo = -180.0, lon_hi = 180.0;
  bool even = true;
  for (char c : hash) {
    const auto pos = kBase32.find(c);
    if (pos == std::string_view::npos) throw ParseError(std::string("invalid geohash character '") + c + "'");
    for (int b = 4; b >= 0; --b) {
      const bool on = ((pos >> b) & 1u) != 0;
      double& lo = even ? lon_lo : lat_lo;
      double& hi = even ? lon_hi : lat_hi;
      const double mid = (lo + hi) / 2.0;
      (on ? lo : hi) = mid;
      even = !even;
    }
  }
  return {(lat_lo + lat_hi) / 2.0, (lon_lo + lon_hi) / 2.0, (lat_hi - lat_lo) / 2.0, (lon_hi - lon_lo) / 2.0};
}

// One trainable vector per geohash cell, appended on first sight. The table
// grows only while data is being prepared; training sees a fixed row count.
class GeoEmbeddingTable {
 public:
  GeoEmbeddingTable(ParameterStore& store, GeohashConfig cfg, std::string name = "geo.cells")
      : cfg_(cfg), table_(&store.add(std::move(name), Matrix::Zero(0, cfg.embed_dim))) {
    if (cfg.precision < 1 || cfg.precision > 12) throw ConfigError("geohash precision must be in [1, 12]");
    if (cfg.embed_dim <= 0) throw ConfigError("geohash embed_dim must be positive");
  }

  const GeohashConfig& config() const { return cfg_; }
  const Parameter& parameter() const { return *table_; }
  Parameter& parameter() { return *table_; }
  std::size_t cell_count() const { return index_.size(); }

  // Row index for the cell containing (lat, lon); new cells start at zero.
  int cell_row(double lat, double lon) {
    std::string cell = encode(lat, lon, cfg_.precision);
    if (auto it = index_.find(cell); it != index_.end()) return it->second;
    const int row = static_cast<int>(table_->value.rows());
    table_->value.conservativeResize(row + 1, Eigen::NoChange);
    table_->value.row(row).setZero();
    index_.emplace(std::move(cell), row);
    return row;
  }

  // Lookup without growth.
  int find_row(double lat, double lon) const {
    auto it = index_.find(encode(lat, lon, cfg_.precision));
    return it == index_.end() ? -1 : it->second;
  }

  RowVector embed(double lat, double lon) { return table_->value.row(cell_row(lat, lon)); }

 private:
  GeohashConfig cfg_;
  Parameter* table_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace mobllm::geo
