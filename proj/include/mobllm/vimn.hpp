#pragma once

// Visiting-intention memory network: an interval-gated recurrent cell over
// periodic time encodings, then gated fusion of the last r cycles.

#include <cmath>
#include <deque>
#include <numbers>
#include <span>
#include <vector>

#include "mobllm/autodiff.hpp"
#include "mobllm/layers.hpp"
#include "mobllm/parameters.hpp"
#include "mobllm/rng.hpp"

namespace mobllm {

struct TimeEncodingConfig {
  std::vector<double> periods = {3600.0, 86400.0, 604800.0};

  void validate() const {
    if (periods.empty()) throw ConfigError("vimn.periods must not be empty");
    for (std::size_t i = 0; i < periods.size(); ++i) {
      if (!(periods[i] > 0.0)) throw ConfigError("vimn.periods must be positive");
      if (i > 0 && !(periods[i] > periods[i - 1])) throw ConfigError("vimn.periods must be strictly increasing");
    }
  }
  int width() const { return 2 * static_cast<int>(periods.size()); }
};

// [cos w1 t, sin w1 t, cos w2 t, ...] with w = 2 pi / period.
inline RowVector periodic_encode(double t, const TimeEncodingConfig& cfg = {}) {
  if (!(t >= 0.0)) throw ArgumentError("periodic_encode: negative timestamp");
  RowVector out(cfg.width());
  for (std::size_t k = 0; k < cfg.periods.size(); ++k) {
    const double angle = std::fmod(t, cfg.periods[k]) * (2.0 * std::numbers::pi / cfg.periods[k]);
    out(static_cast<Eigen::Index>(2 * k)) = std::cos(angle);
    out(static_cast<Eigen::Index>(2 * k + 1)) = std::sin(angle);
  }
  return out;
}

// log(1 + dt / unit).
inline double interval_encode(double delta_t, double unit = 1.0) {
  if (!(delta_t >= 0.0)) throw ArgumentError("interval_encode: negative interval");
  return std::log1p(delta_t / unit);
}

struct VimnConfig {
  int d = 256;         // PPE width
  int hidden = 256;    // output width L_E
  int r = 4;
  int fuse_hidden = 0;  // 0: same as the concatenated window width
  double delta_unit = 1.0;
  TimeEncodingConfig time;
};

class Vimn {
 public:
  struct State {
    RowVector hidden;
    std::deque<RowVector> z;  // oldest first, at most r
    std::deque<RowVector> s;
  };

  Vimn(ParameterStore& store, const VimnConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg.time.validate();
    if (cfg.d < 1 || cfg.hidden < 1) throw ConfigError("vimn widths must be positive");
    if (cfg.r < 1) throw ConfigError("vimn.r must be at least 1");
    if (!(cfg.delta_unit > 0.0)) throw ConfigError("vimn.delta_unit must be positive");
    const Eigen::Index h = cfg.hidden, d = cfg.d, k2 = cfg.time.width();
    const Eigen::Index cat = window_width();
    const Eigen::Index f1 = cfg.fuse_hidden > 0 ? cfg.fuse_hidden : cat;
    w_in = &store.add("vimn.w_in", rng.normal_matrix(k2, h, 1.0 / std::sqrt(static_cast<double>(k2))));
    w_f = &store.add("vimn.w_f", rng.normal_matrix(1, h, 0.1));
    b_f = &store.add("vimn.b_f", Matrix::Zero(1, h));
    update = Linear::make(store, "vimn.update", h, h, rng);
    gate_x = Linear::make(store, "vimn.gate_x", d, d, rng);
    gate_z = Linear::make(store, "vimn.gate_z", h, h, rng);
    mlp1 = Linear::make(store, "vimn.mlp1", cat, f1, rng);
    mlp2 = Linear::make(store, "vimn.mlp2", f1, cat, rng);
    norm = LayerNorm::make(store, "vimn.norm", cat);
    out = Linear::make(store, "vimn.out", cat, h, rng);
  }

  const VimnConfig& config() const { return cfg_; }
  Eigen::Index window_width() const { return static_cast<Eigen::Index>(cfg_.r) * (cfg_.d + cfg_.hidden); }

  std::vector<Parameter*> parameters() const {
    std::vector<Parameter*> ps = {w_in, w_f, b_f};
    for (const Linear* l : {&update, &gate_x, &gate_z, &mlp1, &mlp2, &out}) {
      ps.push_back(l->weight);
      ps.push_back(l->bias);
    }
    ps.push_back(norm.gain);
    ps.push_back(norm.bias);
    return ps;
  }

  // sigma(dT * W_f + b_f) for a column of encoded intervals (n x 1) -> n x hidden.
  ad::Var forget_gate(const ad::Var& encoded_intervals) const {
    ad::Tape& t = encoded_intervals.tape();
    return ad::sigmoid(ad::add_row(ad::matmul(encoded_intervals, t.param(*w_f)), t.param(*b_f)));
  }

  RowVector forget_gate(double encoded_interval) const {
    ad::Tape t;
    return forget_gate(t.constant(Matrix::Constant(1, 1, encoded_interval))).value();
  }

  State initial_state() const { return {RowVector::Zero(cfg_.hidden), {}, {}}; }

  // z = sigma(T(t) W_in + tanh(H W_u + b_u) .* forget(dT)); H <- z.
  RowVector gru_step(State& state, double t, double encoded_interval) const {
    ad::Tape tape;
    ad::Var z = cell(tape.constant(periodic_encode(t, cfg_.time) * w_in->value),
                     forget_gate(tape.constant(Matrix::Constant(1, 1, encoded_interval))), tape.constant(state.hidden));
    state.hidden = z.value();
    push(state.z, state.hidden);
    return state.hidden;
  }

  // Streaming form: consume one record and return its intention vector.
  RowVector step(State& state, const RowVector& ppe, double t, double delta_t) const {
    push(state.s, ppe);
    gru_step(state, t, interval_encode(delta_t, cfg_.delta_unit));
    ad::Tape tape;
    return fuse_window(padded(tape, state.z, cfg_.hidden), padded(tape, state.s, cfg_.d)).value();
  }

  // One position: z_window (r x hidden) and s_window (r x d), oldest row first.
  ad::Var fuse_window(const ad::Var& z_window, const ad::Var& s_window) const {
    if (z_window.rows() != cfg_.r || s_window.rows() != cfg_.r || z_window.cols() != cfg_.hidden ||
        s_window.cols() != cfg_.d)
      throw ConfigError("fuse_window: window shape mismatch");
    ad::Var xg = ad::mul(s_window, ad::sigmoid(gate_x(s_window)));
    ad::Var zg = ad::mul(z_window, ad::sigmoid(gate_z(z_window)));
    std::vector<ad::Var> parts;
    for (Eigen::Index i = 0; i < cfg_.r; ++i) parts.push_back(ad::slice_rows(xg, i, 1));
    for (Eigen::Index i = 0; i < cfg_.r; ++i) parts.push_back(ad::slice_rows(zg, i, 1));
    return fuse_concat(ad::concat_cols(parts));
  }

  // All positions at once; S is n x d, Z is n x hidden. Row i fuses records i-r+1..i.
  ad::Var fuse_all(const ad::Var& s, const ad::Var& z) const {
    const Eigen::Index n = s.rows();
    if (z.rows() != n || s.cols() != cfg_.d || z.cols() != cfg_.hidden) throw ConfigError("fuse_all: shape mismatch");
    ad::Tape& t = s.tape();
    ad::Var xg = ad::mul(s, ad::sigmoid(gate_x(s)));
    ad::Var zg = ad::mul(z, ad::sigmoid(gate_z(z)));
    const Eigen::Index pad = cfg_.r - 1;
    if (pad > 0) {
      xg = ad::concat_rows({t.constant(Matrix::Zero(pad, cfg_.d)), xg});
      zg = ad::concat_rows({t.constant(Matrix::Zero(pad, cfg_.hidden)), zg});
    }
    std::vector<ad::Var> parts;
    for (Eigen::Index j = 0; j < cfg_.r; ++j) parts.push_back(ad::slice_rows(xg, j, n));
    for (Eigen::Index j = 0; j < cfg_.r; ++j) parts.push_back(ad::slice_rows(zg, j, n));
    return fuse_concat(ad::concat_cols(parts));
  }

  // Recurrent outputs z_1..z_n for times t_i and raw intervals dt_i.
  ad::Var recur(ad::Tape& tape, std::span<const double> times, std::span<const double> deltas) const {
    const auto n = static_cast<Eigen::Index>(times.size());
    if (n < 1 || deltas.size() != times.size()) throw ArgumentError("vimn: need n >= 1 aligned times and intervals");
    Matrix enc(n, cfg_.time.width());
    Matrix dt(n, 1);
    for (Eigen::Index i = 0; i < n; ++i) {
      enc.row(i) = periodic_encode(times[static_cast<std::size_t>(i)], cfg_.time);
      dt(i, 0) = interval_encode(deltas[static_cast<std::size_t>(i)], cfg_.delta_unit);
    }
    ad::Var drive = ad::matmul(tape.constant(std::move(enc)), tape.param(*w_in));
    ad::Var gates = forget_gate(tape.constant(std::move(dt)));
    std::vector<ad::Var> zs;
    ad::Var h = tape.constant(Matrix::Zero(1, cfg_.hidden));
    for (Eigen::Index i = 0; i < n; ++i) {
      h = cell(ad::slice_rows(drive, i, 1), ad::slice_rows(gates, i, 1), h);
      zs.push_back(h);
    }
    return ad::concat_rows(zs);
  }

  // H = [h_1..h_n] for PPE rows S (n x d).
  ad::Var encode(const ad::Var& s, std::span<const double> times, std::span<const double> deltas) const {
    if (s.rows() != static_cast<Eigen::Index>(times.size())) throw ArgumentError("vimn: PPE rows and records differ");
    return fuse_all(s, recur(s.tape(), times, deltas));
  }

  Parameter* w_in = nullptr;
  Parameter* w_f = nullptr;
  Parameter* b_f = nullptr;
  Linear update, gate_x, gate_z, mlp1, mlp2, out;
  LayerNorm norm;

 private:
  ad::Var cell(const ad::Var& drive, const ad::Var& gate, const ad::Var& h) const {
    return ad::sigmoid(ad::add(drive, ad::mul(ad::tanh(update(h)), gate)));
  }

  ad::Var fuse_concat(const ad::Var& cat) const {
    ad::Var h2 = ad::relu(mlp2(ad::relu(mlp1(cat))));
    return out(ad::add(norm(h2), cat));
  }

  void push(std::deque<RowVector>& buf, const RowVector& v) const {
    buf.push_back(v);
    if (static_cast<int>(buf.size()) > cfg_.r) buf.pop_front();
  }

  ad::Var padded(ad::Tape& tape, const std::deque<RowVector>& buf, Eigen::Index width) const {
    Matrix m = Matrix::Zero(cfg_.r, width);
    const auto offset = static_cast<Eigen::Index>(cfg_.r) - static_cast<Eigen::Index>(buf.size());
    for (std::size_t i = 0; i < buf.size(); ++i) m.row(offset + static_cast<Eigen::Index>(i)) = buf[i];
    return tape.constant(std::move(m));
  }

  VimnConfig cfg_;
};

}  // namespace mobllm
