#pragma once

// Flat key=value run configuration. Keys carry a section prefix
// ("vimn.r"); a "[section]" line prefixes the keys that follow it.

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mobllm/checkin_data.hpp"
#include "mobllm/model.hpp"
#include "mobllm/rng.hpp"
#include "mobllm/synthetic.hpp"
#include "mobllm/trainer.hpp"

namespace mobllm {

class RunConfig {
 public:
  RunConfig() : values_(defaults()) {}

  static const std::map<std::string, std::string>& defaults() {
    static const std::map<std::string, std::string> d = {
        {"data.max_history_days", "120"},
        {"data.min_user_records", "10"},
        {"data.min_poi_visits", "10"},
        {"data.session_gap_hours", "24"},
        {"data.max_seq_len", "64"},
        {"data.split_ratio", "6:2:2"},
        {"data.seed", "1"},
        {"data.columns", "user,time,lat,lon,poi,category"},
        {"data.delimiter", "auto"},
        {"data.has_header", "false"},
        {"geo.precision", "6"},
        {"ppel.d", "256"},
        {"ppel.train_tokens", "false"},
        {"vimn.r", "4"},
        {"vimn.hidden", "256"},
        {"vimn.periods", "3600,86400,604800"},
        {"vimn.delta_unit", "seconds"},
        {"vimn.fuse_hidden", "0"},
        {"htpp.K", "4"},
        {"htpp.aggregation", "sum"},
        {"htpp.pool_dir", ""},
        {"htpp.train_values", "false"},
        {"backbone.layers", "4"},
        {"backbone.heads", "4"},
        {"backbone.F", "0"},
        {"backbone.U", "0"},
        {"backbone.variant", "transformer"},
        {"backbone.width", "0"},
        {"backbone.ffn_mult", "4"},
        {"heads.pooling", "mean"},
        {"heads.k_mix", "16"},
        {"train.task", "lp"},
        {"train.learning_rate", "0.001"},
        {"train.max_epochs", "100"},
        {"train.patience", "10"},
        {"train.batch_size", "64"},
        {"train.seed", "1"},
        {"train.tp_loss", "mae"},
        {"train.ablate", ""},
        {"fewshot.fractions", "0.01,0.05,0.2"},
        {"synth.users", "50"},
        {"synth.pois", "200"},
        {"synth.sequences", "2000"},
        {"synth.seed", "7"},
        {"synth.min_len", "6"},
        {"synth.max_len", "14"},
        {"synth.groups", "10"},
        {"synth.private_stops", "1"},
        {"synth.follow_prob", "0.85"},
        {"synth.popularity", "1"},
    };
    return d;
  }

  void set(const std::string& key, const std::string& value) {
    if (!defaults().contains(key)) throw ConfigError("unknown config key '" + key + "'");
    values_[key] = value;
  }

  const std::string& get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    return it->second;
  }

  long long get_int(const std::string& key) const {
    const std::string& v = get(key);
    long long out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError(key + ": expected an integer, got '" + v + "'");
    return out;
  }

  double get_double(const std::string& key) const { return parse_double(key, get(key)); }

  bool get_bool(const std::string& key) const {
    const std::string v = data::detail::lower(get(key));
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError(key + ": expected a boolean, got '" + get(key) + "'");
  }

  std::vector<std::string> get_list(const std::string& key) const {
    std::vector<std::string> out;
    std::stringstream ss(get(key));
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (!item.empty()) out.push_back(item);
    }
    return out;
  }

  std::vector<double> get_double_list(const std::string& key) const {
    std::vector<double> out;
    for (const auto& s : get_list(key)) out.push_back(parse_double(key, s));
    return out;
  }

  void merge_text(std::istream& in, const std::string& origin = "config") {
    std::string line, section;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      line = trim(line);
      if (line.empty()) continue;
      if (line.front() == '[' && line.back() == ']') {
        section = trim(line.substr(1, line.size() - 2));
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key=value");
      std::string key = trim(line.substr(0, eq));
      if (!section.empty()) key = section + "." + key;
      try {
        set(key, trim(line.substr(eq + 1)));
      } catch (const ConfigError& e) {
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
      }
    }
  }

  void merge_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    merge_text(in, path.string());
  }

  // Sorted key=value lines; the exact text a run directory stores.
  std::string serialize() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
    return out;
  }

  std::string hash() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(serialize())));
    return buf;
  }

  Task task() const { return parse_task(get("train.task")); }

  data::PreprocessConfig preprocess() const {
    data::PreprocessConfig c;
    c.max_history_days = static_cast<int>(get_int("data.max_history_days"));
    c.min_user_records = static_cast<int>(get_int("data.min_user_records"));
    c.min_poi_visits = static_cast<int>(get_int("data.min_poi_visits"));
    c.session_gap_hours = get_double("data.session_gap_hours");
    c.max_seq_len = static_cast<int>(get_int("data.max_seq_len"));
    return c;
  }

  data::ColumnSpec columns() const {
    data::ColumnSpec c;
    const auto names = get_list("data.columns");
    c.category = -1;
    bool seen[5] = {false, false, false, false, false};
    for (std::size_t i = 0; i < names.size(); ++i) {
      const int col = static_cast<int>(i);
      const std::string& n = names[i];
      if (n == "user") c.user = col, seen[0] = true;
      else if (n == "time") c.time = col, seen[1] = true;
      else if (n == "lat") c.lat = col, seen[2] = true;
      else if (n == "lon") c.lon = col, seen[3] = true;
      else if (n == "poi") c.poi = col, seen[4] = true;
      else if (n == "category") c.category = col;
      else if (n != "skip") throw ConfigError("data.columns: unknown column '" + n + "'");
    }
    for (bool s : seen)
      if (!s) throw ConfigError("data.columns must name user, time, lat, lon and poi");
    const std::string& delim = get("data.delimiter");
    if (delim == "auto") c.delimiter = '\0';
    else if (delim == "tab" || delim == "\\t") c.delimiter = '\t';
    else if (delim == "comma" || delim == ",") c.delimiter = ',';
    else throw ConfigError("data.delimiter must be auto, tab or comma");
    c.has_header = get_bool("data.has_header");
    return c;
  }

  data::SplitRatio split_ratio() const { return data::parse_split_ratio(get("data.split_ratio")); }

  data::SyntheticSpec synthetic() const {
    data::SyntheticSpec s;
    s.users = static_cast<int>(get_int("synth.users"));
    s.pois = static_cast<int>(get_int("synth.pois"));
    s.sequences = static_cast<int>(get_int("synth.sequences"));
    s.seed = static_cast<std::uint64_t>(get_int("synth.seed"));
    s.min_len = static_cast<int>(get_int("synth.min_len"));
    s.max_len = static_cast<int>(get_int("synth.max_len"));
    s.follow_prob = get_double("synth.follow_prob");
    s.popularity = get_double("synth.popularity");
    s.groups = static_cast<int>(get_int("synth.groups"));
    s.private_stops = static_cast<int>(get_int("synth.private_stops"));
    return s;
  }

  Ablation ablation() const {
    Ablation a;
    for (const auto& f : get_list("train.ablate")) a.set(f);
    return a;
  }

  ModelConfig model() const {
    ModelConfig m;
    m.task = task();
    m.seed = static_cast<std::uint64_t>(get_int("train.seed"));
    m.ppel.d = static_cast<int>(get_int("ppel.d"));
    m.ppel.geo_precision = static_cast<int>(get_int("geo.precision"));
    m.ppel.train_tokens = get_bool("ppel.train_tokens");
    m.vimn.r = static_cast<int>(get_int("vimn.r"));
    m.vimn.hidden = static_cast<int>(get_int("vimn.hidden"));
    m.vimn.fuse_hidden = static_cast<int>(get_int("vimn.fuse_hidden"));
    m.vimn.time.periods = get_double_list("vimn.periods");
    const std::string& unit = get("vimn.delta_unit");
    if (unit == "seconds") m.vimn.delta_unit = 1.0;
    else if (unit == "minutes") m.vimn.delta_unit = 60.0;
    else if (unit == "hours") m.vimn.delta_unit = 3600.0;
    else throw ConfigError("vimn.delta_unit must be seconds, minutes or hours");
    m.htpp.k = static_cast<int>(get_int("htpp.K"));
    const std::string& agg = get("htpp.aggregation");
    if (agg == "sum") m.htpp.aggregation = Aggregation::sum;
    else if (agg == "mean") m.htpp.aggregation = Aggregation::mean;
    else throw ConfigError("htpp.aggregation must be sum or mean");
    m.htpp.train_values = get_bool("htpp.train_values");
    m.prompt_dir = get("htpp.pool_dir");
    m.backbone.layers = static_cast<int>(get_int("backbone.layers"));
    m.backbone.heads = static_cast<int>(get_int("backbone.heads"));
    m.backbone.frozen = static_cast<int>(get_int("backbone.F"));
    m.backbone.unfrozen_attention = static_cast<int>(get_int("backbone.U"));
    m.backbone.width = static_cast<int>(get_int("backbone.width"));
    m.backbone.ffn_mult = static_cast<int>(get_int("backbone.ffn_mult"));
    const std::string& variant = get("backbone.variant");
    if (variant == "transformer" || variant == "small-transformer") m.backbone.variant = BackboneVariant::transformer;
    else if (variant == "identity" || variant == "identity-passthrough") m.backbone.variant = BackboneVariant::identity;
    else throw ConfigError("backbone.variant must be transformer or identity");
    const std::string& pooling = get("heads.pooling");
    if (pooling == "mean") m.heads.pooling = Pooling::mean;
    else if (pooling == "last") m.heads.pooling = Pooling::last;
    else throw ConfigError("heads.pooling must be mean or last");
    m.heads.k_mix = static_cast<int>(get_int("heads.k_mix"));
    m.ablation = ablation();
    return m;
  }

  TrainConfig training() const {
    TrainConfig t;
    t.learning_rate = get_double("train.learning_rate");
    t.max_epochs = static_cast<int>(get_int("train.max_epochs"));
    t.patience = static_cast<int>(get_int("train.patience"));
    t.batch_size = static_cast<int>(get_int("train.batch_size"));
    t.seed = static_cast<std::uint64_t>(get_int("train.seed"));
    const std::string& loss = get("train.tp_loss");
    if (loss == "mae") t.tp_loss = TpLoss::mae;
    else if (loss == "nll") t.tp_loss = TpLoss::nll;
    else throw ConfigError("train.tp_loss must be mae or nll");
    return t;
  }

  // Builds every typed view once so a bad value fails before any work starts.
  void validate() const {
    (void)preprocess();
    (void)columns();
    (void)split_ratio();
    (void)synthetic();
    (void)model();
    (void)training();
    for (double f : get_double_list("fewshot.fractions"))
      if (!(f > 0.0 && f <= 1.0)) throw ConfigError("fewshot.fractions must lie in (0, 1]");
  }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

  static double parse_double(const std::string& key, const std::string& v) {
    std::istringstream in(v);
    in.imbue(std::locale::classic());
    double out = 0.0;
    if (!(in >> out) || !(in >> std::ws).eof()) throw ConfigError(key + ": expected a number, got '" + v + "'");
    return out;
  }

  std::map<std::string, std::string> values_;
};

}  // namespace mobllm
