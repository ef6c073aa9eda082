#pragma once

// Causal pre-norm transformer over [H; U_i; prompts], split into alpha/beta,
// with a layer-wise freezing schedule.

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "mobllm/autodiff.hpp"
#include "mobllm/layers.hpp"
#include "mobllm/parameters.hpp"
#include "mobllm/rng.hpp"

namespace mobllm {

enum class BackboneVariant { transformer, identity };

struct BackboneConfig {
  int layers = 4;
  int heads = 4;
  int width = 0;  // 0: same as the token width
  int frozen = 0;     // F
  int unfrozen_attention = 0;  // U
  int ffn_mult = 4;
  BackboneVariant variant = BackboneVariant::transformer;
};

struct LayerFreeze {
  bool attention = true;
  bool ffn = true;
};

// Layers [0, F) frozen; layers [L-U, L) train attention only; the rest train fully.
inline std::vector<LayerFreeze> freeze_mask(const BackboneConfig& cfg) {
  if (cfg.layers < 0 || cfg.frozen < 0 || cfg.unfrozen_attention < 0)
    throw ConfigError("backbone layer counts must be non-negative");
  if (cfg.frozen + cfg.unfrozen_attention > cfg.layers) throw ConfigError("backbone.F + backbone.U exceeds backbone.layers");
  std::vector<LayerFreeze> mask(static_cast<std::size_t>(cfg.layers));
  for (int l = 0; l < cfg.layers; ++l) {
    if (l < cfg.frozen) mask[static_cast<std::size_t>(l)] = {false, false};
    else if (l >= cfg.layers - cfg.unfrozen_attention) mask[static_cast<std::size_t>(l)] = {true, false};
  }
  return mask;
}

struct AssembledInput {
  ad::Var tokens;
  Eigen::Index n = 0;
  bool has_user = false;
  Eigen::Index prompt_rows = 0;
};

// [H; U_i; prompts]; the user row and the prompts are optional.
inline AssembledInput assemble_input(const ad::Var& h, const std::optional<ad::Var>& user,
                                     const std::optional<ad::Var>& prompts) {
  if (h.rows() < 1) throw ArgumentError("assemble_input: empty H");
  std::vector<ad::Var> parts = {h};
  if (user) {
    if (user->rows() != 1 || user->cols() != h.cols()) throw ConfigError("assemble_input: user row shape");
    parts.push_back(*user);
  }
  if (prompts) {
    if (prompts->cols() != h.cols()) throw ConfigError("assemble_input: prompt width");
    parts.push_back(*prompts);
  }
  return {ad::concat_rows(parts), h.rows(), user.has_value(), prompts ? prompts->rows() : 0};
}

struct AlphaBeta {
  ad::Var alpha;
  std::optional<ad::Var> beta;  // empty when the input had no tail rows
};

inline AlphaBeta split_alpha_beta(const ad::Var& out, Eigen::Index n) {
  if (n < 1 || n > out.rows()) throw ArgumentError("split: bad boundary");
  AlphaBeta ab{ad::slice_rows(out, 0, n), std::nullopt};
  if (out.rows() > n) ab.beta = ad::slice_rows(out, n, out.rows() - n);
  return ab;
}

class Backbone {
 public:
  struct Layer {
    LayerNorm ln1;
    Linear q, k, v, o;
    LayerNorm ln2;
    Linear ff1, ff2;
  };

  Backbone(ParameterStore& store, const BackboneConfig& cfg, int token_width, Rng& rng)
      : cfg_(cfg), token_width_(token_width) {
    const int w = cfg.width > 0 ? cfg.width : token_width;
    cfg_.width = w;
    if (cfg.variant == BackboneVariant::identity) return;
    if (cfg.heads < 1 || w % cfg.heads != 0) throw ConfigError("backbone width must be divisible by heads");
    if ((w / cfg.heads) % 2 != 0) throw ConfigError("backbone head width must be even for rotary positions");
    if (cfg.ffn_mult < 1) throw ConfigError("backbone.ffn_mult must be positive");
    const auto mask = freeze_mask(cfg);
    if (w != token_width) {
      adapter_in = Linear::make(store, "backbone.adapter_in", token_width, w, rng);
      adapter_out = Linear::make(store, "backbone.adapter_out", w, token_width, rng);
    }
    for (int l = 0; l < cfg.layers; ++l) {
      const std::string p = "backbone.layer" + std::to_string(l);
      Layer layer{LayerNorm::make(store, p + ".ln1", w),
                  Linear::make(store, p + ".q", w, w, rng, false),
                  Linear::make(store, p + ".k", w, w, rng, false),
                  Linear::make(store, p + ".v", w, w, rng, false),
                  Linear::make(store, p + ".o", w, w, rng, false),
                  LayerNorm::make(store, p + ".ln2", w),
                  Linear::make(store, p + ".ff1", w, static_cast<Eigen::Index>(w) * cfg.ffn_mult, rng),
                  Linear::make(store, p + ".ff2", static_cast<Eigen::Index>(w) * cfg.ffn_mult, w, rng)};
      layers_.push_back(layer);
      set_layer_trainable(l, mask[static_cast<std::size_t>(l)]);
    }
    final_norm = LayerNorm::make(store, "backbone.final_ln", w);
  }

  const BackboneConfig& config() const { return cfg_; }
  const std::vector<Layer>& layers() const { return layers_; }

  static std::vector<Parameter*> attention_parameters(const Layer& l) {
    return {l.ln1.gain, l.ln1.bias, l.q.weight, l.k.weight, l.v.weight, l.o.weight};
  }
  static std::vector<Parameter*> ffn_parameters(const Layer& l) {
    return {l.ln2.gain, l.ln2.bias, l.ff1.weight, l.ff1.bias, l.ff2.weight, l.ff2.bias};
  }

  std::vector<Parameter*> parameters() const {
    std::vector<Parameter*> ps;
    for (const auto& l : layers_) {
      for (auto* p : attention_parameters(l)) ps.push_back(p);
      for (auto* p : ffn_parameters(l)) ps.push_back(p);
    }
    if (final_norm.gain != nullptr) ps.insert(ps.end(), {final_norm.gain, final_norm.bias});
    if (adapter_in.weight != nullptr)
      ps.insert(ps.end(), {adapter_in.weight, adapter_in.bias, adapter_out.weight, adapter_out.bias});
    return ps;
  }

  void set_layer_trainable(int layer, LayerFreeze f) {
    for (auto* p : attention_parameters(layers_.at(static_cast<std::size_t>(layer)))) p->trainable = f.attention;
    for (auto* p : ffn_parameters(layers_.at(static_cast<std::size_t>(layer)))) p->trainable = f.ffn;
  }

  // Reapplies the configured freeze mask to every layer.
  void apply_freeze_mask() {
    const auto mask = freeze_mask(cfg_);
    for (std::size_t l = 0; l < layers_.size(); ++l) set_layer_trainable(static_cast<int>(l), mask[l]);
  }

  ad::Var forward(const ad::Var& x) const {
    if (x.cols() != token_width_) throw ConfigError("backbone: token width mismatch");
    if (x.rows() < 1) throw ArgumentError("backbone: no tokens");
    if (cfg_.variant == BackboneVariant::identity) return x;
    ad::Var h = adapter_in.weight != nullptr ? adapter_in(x) : x;
    for (const Layer& l : layers_) {
      h = ad::add(h, attention(l, l.ln1(h)));
      h = ad::add(h, l.ff2(ad::relu(l.ff1(l.ln2(h)))));
    }
    h = final_norm(h);
    return adapter_out.weight != nullptr ? adapter_out(h) : h;
  }

  AlphaBeta forward(const AssembledInput& in) const { return split_alpha_beta(forward(in.tokens), in.n); }

  LayerNorm final_norm;
  Linear adapter_in, adapter_out;

 private:
  ad::Var attention(const Layer& l, const ad::Var& x) const {
    const Eigen::Index hd = cfg_.width / cfg_.heads;
    ad::Var q = l.q(x), k = l.k(x), v = l.v(x);
    std::vector<ad::Var> heads;
    for (int h = 0; h < cfg_.heads; ++h) {
      ad::Var qh = ad::rotary(ad::slice_cols(q, h * hd, hd), hd);
      ad::Var kh = ad::rotary(ad::slice_cols(k, h * hd, hd), hd);
      ad::Var scores = ad::scale(ad::matmul(qh, ad::transpose(kh)), 1.0 / std::sqrt(static_cast<double>(hd)));
      heads.push_back(ad::matmul(ad::causal_softmax_rows(scores), ad::slice_cols(v, h * hd, hd)));
    }
    return l.o(heads.size() == 1 ? heads.front() : ad::concat_cols(heads));
  }

  BackboneConfig cfg_;
  int token_width_;
  std::vector<Layer> layers_;
};

}  // namespace mobllm
