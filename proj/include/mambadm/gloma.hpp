#pragma once

#include <string>
#include <vector>

#include "mambadm/data.hpp"
#include "mambadm/mamba_block.hpp"
#include "mambadm/nn.hpp"

namespace mambadm {

enum class Variant { gloma, cmc, pmc, global_only, local_only };

inline Variant parse_variant(const std::string& s) {
  if (s == "gloma") return Variant::gloma;
  if (s == "cmc") return Variant::cmc;
  if (s == "pmc") return Variant::pmc;
  if (s == "global_only") return Variant::global_only;
  if (s == "local_only") return Variant::local_only;
  throw ConfigError("unknown model variant: " + s);
}

inline const char* to_string(Variant v) {
  switch (v) {
    case Variant::gloma: return "gloma";
    case Variant::cmc: return "cmc";
    case Variant::pmc: return "pmc";
    case Variant::global_only: return "global_only";
    case Variant::local_only: return "local_only";
  }
  return "?";
}

struct GlomaConfig {
  int d_model = 64;
  int n_layers = 3;
  int context_k = 10;   // K timesteps per window (3K tokens)
  int local_len = 6;    // l_s, sub-sequence length in tokens
  int n_state = 16;
  double dropout = 0.1;
  Variant variant = Variant::gloma;
  ActionSpace action;
  int state_dim = 1;
  bool use_timestep_embedding = false;
  bool learnable_d = false;
  ssm::InitScheme init = ssm::InitScheme::neg_ramp;
  int conv_width = 4;
  int expand = 1;
  bool delta_per_channel = false;
  ssm::ScanBackend backend = ssm::ScanBackend::sequential;
  int max_timestep = 4096;

  void validate() const {
    if (context_k < 1) throw ConfigError("config: K must be >= 1");
    if (local_len < 1 || local_len > 3 * context_k)
      throw ConfigError("config: l_s must be in [1, 3K]");
    if (dropout < 0.0 || dropout >= 1.0)
      throw ConfigError("config: dropout must be in [0, 1)");
    if (d_model < 1 || n_layers < 1 || n_state < 1 || state_dim < 1)
      throw ConfigError("config: dimensions must be positive");
    if (action.size < 1) throw ConfigError("config: empty action space");
  }
};

// Eq. for the local split: pad length and number of sub-sequences.
struct SplitSpec {
  Index pad_len = 0;
  Index n_sub = 0;
};

inline SplitSpec pad_split_lengths(Index total_tokens, Index l_s) {
  if (l_s < 1) throw InvalidParameterError("pad_split_lengths: l_s must be >= 1");
  SplitSpec s;
  s.pad_len = (l_s - (total_tokens % l_s)) % l_s;
  s.n_sub = (total_tokens + s.pad_len) / l_s;
  return s;
}

enum class TokenRole : std::uint8_t { rtg = 0, state = 1, action = 2 };

template <typename T>
struct TokenSequence {
  MatX<T> tokens;                      // (3K) x d
  std::vector<std::uint8_t> pad_mask;  // 1 = real token
  std::vector<TokenRole> roles;        // repeats rtg, state, action
};

namespace detail {

// Appends pad_len zero rows to every window block of t_tok rows.
template <typename T>
MatX<T> pad_windows(const MatX<T>& x, Index t_tok, Index n_seq, Index pad_len) {
  if (pad_len == 0) return x;
  const Index d = x.cols();
  MatX<T> out = MatX<T>::Zero(n_seq * (t_tok + pad_len), d);
  for (Index s = 0; s < n_seq; ++s)
    out.middleRows(s * (t_tok + pad_len), t_tok) = x.middleRows(s * t_tok, t_tok);
  return out;
}

template <typename T>
MatX<T> unpad_windows(const MatX<T>& x, Index t_tok, Index n_seq, Index pad_len) {
  if (pad_len == 0) return x;
  MatX<T> out(n_seq * t_tok, x.cols());
  for (Index s = 0; s < n_seq; ++s)
    out.middleRows(s * t_tok, t_tok) = x.middleRows(s * (t_tok + pad_len), t_tok);
  return out;
}

}  // namespace detail

// One fused layer: global Mamba over the full token sequence, a local mixer
// over l_s-token sub-sequences (Mamba for gloma/local_only, a causal
// depthwise conv for pmc, cascaded conv for cmc), dropout-gated addition,
// then a pre-norm FFN with residual.
template <typename T>
class GlomaLayer {
 public:
  struct Cache {
    typename nn::LayerNorm<T>::Cache lng, lnl, lnf;
    typename MambaBlock<T>::Cache mg, ml;
    MatX<T> conv_in;  // conv mixer input (pmc: normed tokens, cmc: f_global)
    MatX<T> drop_mask;
    MatX<T> xf;             // FFN input (post-norm)
    MatX<T> ffn_pre, ffn_h; // pre/post activation hidden
    MatX<T> ffn_drop_mask;
    Index t_tok = 0, n_seq = 0, l_s = 0, pad_len = 0;
  };

  void init(const std::string& prefix, const GlomaConfig& cfg, Rng& rng) {
    variant_ = cfg.variant;
    dropout_ = cfg.dropout;
    backend_ = cfg.backend;
    const Index d = cfg.d_model;

    typename MambaBlock<T>::Options mopt;
    mopt.d_model = d;
    mopt.n_state = cfg.n_state;
    mopt.expand = cfg.expand;
    mopt.conv_width = cfg.conv_width;
    mopt.delta_per_channel = cfg.delta_per_channel;
    mopt.learnable_d = cfg.learnable_d;
    mopt.init = cfg.init;

    if (has_global()) {
      ln_global.init(prefix + ".ln_global", d);
      mamba_global.init(prefix + ".global", mopt, rng);
    }
    if (has_local_mamba()) {
      ln_local.init(prefix + ".ln_local", d);
      mamba_local.init(prefix + ".local", mopt, rng);
    }
    if (variant_ == Variant::pmc) ln_local.init(prefix + ".ln_local", d);
    if (has_conv_mixer())
      conv_mixer.init(prefix + ".conv_mixer", d, cfg.conv_width, rng);

    ln_ffn.init(prefix + ".ln_ffn", d);
    ffn1.init(prefix + ".ffn1", d, 4 * d, rng);
    ffn2.init(prefix + ".ffn2", 4 * d, d, rng);
  }

  bool has_global() const { return variant_ != Variant::local_only; }
  bool has_local_mamba() const {
    return variant_ == Variant::gloma || variant_ == Variant::local_only;
  }
  bool has_conv_mixer() const {
    return variant_ == Variant::pmc || variant_ == Variant::cmc;
  }

  MatX<T> forward(const MatX<T>& x, Index t_tok, Index n_seq, Index l_s,
                  bool train, Rng* rng, Cache* cache) const {
    Cache local_cache;
    Cache& c = cache ? *cache : local_cache;
    c.t_tok = t_tok;
    c.n_seq = n_seq;
    c.l_s = l_s;

    MatX<T> fg;
    if (has_global()) {
      MatX<T> xg = ln_global.forward(x, &c.lng);
      fg = mamba_global.forward(xg, t_tok, backend_, cache ? &c.mg : nullptr);
    }

    MatX<T> fl;
    if (has_local_mamba()) {
      const SplitSpec sp = pad_split_lengths(t_tok, l_s);
      c.pad_len = sp.pad_len;
      MatX<T> xp = detail::pad_windows(x, t_tok, n_seq, sp.pad_len);
      MatX<T> xpl = ln_local.forward(xp, &c.lnl);
      MatX<T> flp =
          mamba_local.forward(xpl, l_s, backend_, cache ? &c.ml : nullptr);
      fl = detail::unpad_windows(flp, t_tok, n_seq, sp.pad_len);
    } else if (variant_ == Variant::pmc) {
      MatX<T> xl = ln_local.forward(x, &c.lnl);
      if (cache) c.conv_in = xl;
      fl = conv_mixer.forward(xl, t_tok);
    }

    MatX<T> fc;
    switch (variant_) {
      case Variant::gloma:
      case Variant::pmc:
        fc = fg + nn::dropout_forward(fl, dropout_, train, rng, &c.drop_mask);
        break;
      case Variant::global_only:
        fc = fg;
        break;
      case Variant::local_only:
        fc = nn::dropout_forward(fl, dropout_, train, rng, &c.drop_mask);
        break;
      case Variant::cmc:
        if (cache) c.conv_in = fg;
        fc = conv_mixer.forward(fg, t_tok);
        break;
    }

    MatX<T> xf = ln_ffn.forward(fc, &c.lnf);
    MatX<T> pre = ffn1.forward(xf);
    MatX<T> h = nn::apply_gelu(pre);
    MatX<T> f2 = ffn2.forward(h);
    MatX<T> f2d = nn::dropout_forward(f2, dropout_, train, rng, &c.ffn_drop_mask);
    if (cache) {
      c.xf = std::move(xf);
      c.ffn_pre = std::move(pre);
      c.ffn_h = std::move(h);
    }
    return f2d + fc;
  }

  MatX<T> backward(const Cache& c, const MatX<T>& gy) {
    MatX<T> gfc = gy;
    MatX<T> gf2 = nn::dropout_backward(gy, c.ffn_drop_mask);
    MatX<T> gh = ffn2.backward(c.ffn_h, gf2);
    MatX<T> gpre = gh.cwiseProduct(
        c.ffn_pre.unaryExpr([](T v) { return nn::gelu_grad(v); }));
    MatX<T> gxf = ffn1.backward(c.xf, gpre);
    gfc += ln_ffn.backward(c.lnf, gxf);

    MatX<T> gfg, gfl;
    switch (variant_) {
      case Variant::gloma:
      case Variant::pmc:
        gfg = gfc;
        gfl = nn::dropout_backward(gfc, c.drop_mask);
        break;
      case Variant::global_only:
        gfg = gfc;
        break;
      case Variant::local_only:
        gfl = nn::dropout_backward(gfc, c.drop_mask);
        break;
      case Variant::cmc:
        gfg = conv_mixer.backward(c.conv_in, c.t_tok, gfc);
        break;
    }

    MatX<T> gx = MatX<T>::Zero(c.n_seq * c.t_tok, gy.cols());
    if (has_local_mamba()) {
      MatX<T> gflp =
          detail::pad_windows(gfl, c.t_tok, c.n_seq, c.pad_len);  // zeros at pads
      MatX<T> gxpl = mamba_local.backward(c.ml, gflp);
      MatX<T> gxp = ln_local.backward(c.lnl, gxpl);
      gx += detail::unpad_windows(gxp, c.t_tok, c.n_seq, c.pad_len);
    } else if (variant_ == Variant::pmc) {
      MatX<T> gxl = conv_mixer.backward(c.conv_in, c.t_tok, gfl);
      gx += ln_local.backward(c.lnl, gxl);
    }
    if (has_global()) {
      MatX<T> gxg = mamba_global.backward(c.mg, gfg);
      gx += ln_global.backward(c.lng, gxg);
    }
    return gx;
  }

  void collect_params(ParamRefs<T>& out) {
    if (has_global()) {
      ln_global.collect_params(out);
      mamba_global.collect_params(out);
    }
    if (has_local_mamba() || variant_ == Variant::pmc)
      ln_local.collect_params(out);
    if (has_local_mamba()) mamba_local.collect_params(out);
    if (has_conv_mixer()) conv_mixer.collect_params(out);
    ln_ffn.collect_params(out);
    ffn1.collect_params(out);
    ffn2.collect_params(out);
  }

  nn::LayerNorm<T> ln_global, ln_local, ln_ffn;
  MambaBlock<T> mamba_global, mamba_local;
  nn::CausalDepthwiseConv<T> conv_mixer;
  nn::Linear<T> ffn1, ffn2;

 private:
  Variant variant_ = Variant::gloma;
  double dropout_ = 0.1;
  ssm::ScanBackend backend_ = ssm::ScanBackend::sequential;
};

// Return-conditioned action predictor: token embedding, stacked fusion
// layers, final norm, and an action head read at each state-token position.
template <typename T>
class GlomaModel {
 public:
  GlomaModel() = default;

  GlomaModel(const GlomaConfig& cfg, std::uint64_t init_seed) { init(cfg, init_seed); }

  void init(const GlomaConfig& cfg, std::uint64_t init_seed) {
    cfg.validate();
    cfg_ = cfg;
    Rng rng(init_seed);

    rtg_emb.init("emb.rtg", 1, cfg.d_model, rng);
    state_emb.init("emb.state", cfg.state_dim, cfg.d_model, rng);
    if (cfg.action.kind == ActionSpace::Kind::discrete) {
      action_table.setup("emb.action_table", cfg.action.size, cfg.d_model, true);
      action_table.fill_normal(rng, 0.02);
    } else {
      action_emb.init("emb.action", cfg.action.size, cfg.d_model, rng);
    }
    if (cfg.use_timestep_embedding) {
      timestep_table.setup("emb.timestep", cfg.max_timestep, cfg.d_model, false);
      timestep_table.fill_normal(rng, 0.02);
    }

    layers.resize(static_cast<std::size_t>(cfg.n_layers));
    for (int i = 0; i < cfg.n_layers; ++i)
      layers[static_cast<std::size_t>(i)].init("layer" + std::to_string(i), cfg,
                                               rng);
    ln_final.init("ln_final", cfg.d_model);
    head.init("head", cfg.d_model, cfg.action.size, rng);
  }

  const GlomaConfig& config() const { return cfg_; }

  ParamRefs<T> params() {
    ParamRefs<T> out;
    rtg_emb.collect_params(out);
    state_emb.collect_params(out);
    if (cfg_.action.kind == ActionSpace::Kind::discrete)
      out.push_back(&action_table);
    else
      action_emb.collect_params(out);
    if (cfg_.use_timestep_embedding) out.push_back(&timestep_table);
    for (auto& l : layers) l.collect_params(out);
    ln_final.collect_params(out);
    head.collect_params(out);
    return out;
  }

  // Interleaves <rtg, state, action> tokens for one window. Steps outside
  // the mask stay zero; an absent action leaves a zero token in its slot.
  TokenSequence<T> embed_trajectory(const TrainingWindow& w) const {
    const Index k = w.steps();
    check_window(w);
    const Index d = cfg_.d_model;
    TokenSequence<T> seq;
    seq.tokens = MatX<T>::Zero(3 * k, d);
    seq.pad_mask.assign(static_cast<std::size_t>(3 * k), 0);
    seq.roles.resize(static_cast<std::size_t>(3 * k));
    for (Index t = 0; t < k; ++t) {
      seq.roles[static_cast<std::size_t>(3 * t)] = TokenRole::rtg;
      seq.roles[static_cast<std::size_t>(3 * t + 1)] = TokenRole::state;
      seq.roles[static_cast<std::size_t>(3 * t + 2)] = TokenRole::action;
      if (!w.step_mask[static_cast<std::size_t>(t)]) continue;

      MatX<T> rtg_in(1, 1);
      rtg_in(0, 0) = static_cast<T>(w.rtg(t));
      seq.tokens.row(3 * t) = rtg_emb.forward(rtg_in).row(0);
      seq.pad_mask[static_cast<std::size_t>(3 * t)] = 1;

      MatX<T> s_in = w.states.row(t).template cast<T>();
      seq.tokens.row(3 * t + 1) = state_emb.forward(s_in).row(0);
      seq.pad_mask[static_cast<std::size_t>(3 * t + 1)] = 1;

      if (w.action_present[static_cast<std::size_t>(t)]) {
        if (cfg_.action.kind == ActionSpace::Kind::discrete) {
          const int a = w.actions_discrete[static_cast<std::size_t>(t)];
          seq.tokens.row(3 * t + 2) = action_table.value.row(a);
        } else {
          MatX<T> a_in = w.actions_continuous.row(t).template cast<T>();
          seq.tokens.row(3 * t + 2) = action_emb.forward(a_in).row(0);
        }
        seq.pad_mask[static_cast<std::size_t>(3 * t + 2)] = 1;
      }

      if (cfg_.use_timestep_embedding) {
        const int ts = w.timesteps[static_cast<std::size_t>(t)];
        if (ts < 0 || ts >= cfg_.max_timestep)
          throw DataError("timestep out of embedding range");
        for (Index off = 0; off < 3; ++off)
          if (seq.pad_mask[static_cast<std::size_t>(3 * t + off)])
            seq.tokens.row(3 * t + off) += timestep_table.value.row(ts);
      }
    }
    return seq;
  }

  struct ForwardCache {
    std::vector<TrainingWindow> windows;
    std::vector<typename GlomaLayer<T>::Cache> layer_caches;
    typename nn::LayerNorm<T>::Cache lnf;
    MatX<T> head_in;  // (B*K) x d rows at the state positions
    Index t_tok = 0, n_seq = 0, k_steps = 0;
  };

  // All windows must have the same number of steps. Returns per-step action
  // predictions, row-major over (window, step). l_s_override < 1 keeps the
  // configured local length; rollout passes the full token count.
  MatX<T> forward(const std::vector<TrainingWindow>& windows, bool train,
                  Rng* rng, ForwardCache* cache, Index l_s_override = -1) const {
    if (windows.empty()) throw ShapeError("forward: no windows");
    const Index k = windows.front().steps();
    for (const auto& w : windows)
      if (w.steps() != k) throw ShapeError("forward: window length mismatch");
    const Index t_tok = 3 * k;
    const Index n_seq = static_cast<Index>(windows.size());
    Index l_s = l_s_override >= 1 ? l_s_override : Index(cfg_.local_len);
    if (l_s > t_tok) l_s = t_tok;  // rollout windows shorter than 3K

    MatX<T> x(n_seq * t_tok, cfg_.d_model);
    for (Index s = 0; s < n_seq; ++s) {
      auto seq = embed_trajectory(windows[static_cast<std::size_t>(s)]);
      x.middleRows(s * t_tok, t_tok) = seq.tokens;
    }

    if (cache) {
      cache->windows = windows;
      cache->layer_caches.resize(layers.size());
      cache->t_tok = t_tok;
      cache->n_seq = n_seq;
      cache->k_steps = k;
    }
    for (std::size_t li = 0; li < layers.size(); ++li) {
      x = layers[li].forward(x, t_tok, n_seq, l_s, train, rng,
                             cache ? &cache->layer_caches[li] : nullptr);
    }
    MatX<T> xn = ln_final.forward(x, cache ? &cache->lnf : nullptr);

    MatX<T> head_in(n_seq * k, cfg_.d_model);
    for (Index s = 0; s < n_seq; ++s)
      for (Index t = 0; t < k; ++t)
        head_in.row(s * k + t) = xn.row(s * t_tok + 3 * t + 1);
    if (cache) cache->head_in = head_in;
    return head.forward(head_in);
  }

  // Backpropagates prediction gradients into every parameter.
  void backward(const ForwardCache& cache, const MatX<T>& gpreds) {
    const Index k = cache.k_steps;
    const Index t_tok = cache.t_tok;
    const Index n_seq = cache.n_seq;

    MatX<T> ghead_in = head.backward(cache.head_in, gpreds);
    MatX<T> gxn = MatX<T>::Zero(n_seq * t_tok, cfg_.d_model);
    for (Index s = 0; s < n_seq; ++s)
      for (Index t = 0; t < k; ++t)
        gxn.row(s * t_tok + 3 * t + 1) = ghead_in.row(s * k + t);

    MatX<T> gx = ln_final.backward(cache.lnf, gxn);
    for (std::size_t li = layers.size(); li-- > 0;)
      gx = layers[li].backward(cache.layer_caches[li], gx);

    for (Index s = 0; s < n_seq; ++s)
      embed_backward(cache.windows[static_cast<std::size_t>(s)],
                     gx.middleRows(s * t_tok, t_tok));
  }

  nn::Linear<T> rtg_emb, state_emb, action_emb;
  Param<T> action_table, timestep_table;
  std::vector<GlomaLayer<T>> layers;
  nn::LayerNorm<T> ln_final;
  nn::Linear<T> head;

 private:
  void check_window(const TrainingWindow& w) const {
    const Index k = w.steps();
    if (w.states.rows() != k || w.states.cols() != cfg_.state_dim)
      throw ShapeError("window: bad state shape");
    if (static_cast<Index>(w.step_mask.size()) != k ||
        static_cast<Index>(w.action_present.size()) != k)
      throw ShapeError("window: bad mask length");
    if (cfg_.action.kind == ActionSpace::Kind::discrete) {
      for (Index t = 0; t < k; ++t) {
        if (!w.step_mask[static_cast<std::size_t>(t)] ||
            !w.action_present[static_cast<std::size_t>(t)])
          continue;
        const int a = w.actions_discrete[static_cast<std::size_t>(t)];
        if (a < 0 || a >= cfg_.action.size)
          throw DataError("discrete action out of range: " + std::to_string(a));
      }
    } else if (static_cast<Index>(w.actions_continuous.rows()) != k ||
               w.actions_continuous.cols() != cfg_.action.size) {
      throw ShapeError("window: bad continuous action shape");
    }
  }

  void embed_backward(const TrainingWindow& w,
                      const Eigen::Ref<const MatX<T>>& gtokens) {
    const Index k = w.steps();
    for (Index t = 0; t < k; ++t) {
      if (!w.step_mask[static_cast<std::size_t>(t)]) continue;

      MatX<T> g_rtg = gtokens.row(3 * t);
      MatX<T> rtg_in(1, 1);
      rtg_in(0, 0) = static_cast<T>(w.rtg(t));
      rtg_emb.backward(rtg_in, g_rtg);

      MatX<T> g_state = gtokens.row(3 * t + 1);
      MatX<T> s_in = w.states.row(t).template cast<T>();
      state_emb.backward(s_in, g_state);

      if (w.action_present[static_cast<std::size_t>(t)]) {
        if (cfg_.action.kind == ActionSpace::Kind::discrete) {
          const int a = w.actions_discrete[static_cast<std::size_t>(t)];
          action_table.grad.row(a) += gtokens.row(3 * t + 2);
        } else {
          MatX<T> a_in = w.actions_continuous.row(t).template cast<T>();
          MatX<T> g_a = gtokens.row(3 * t + 2);
          action_emb.backward(a_in, g_a);
        }
      }

      if (cfg_.use_timestep_embedding) {
        const int ts = w.timesteps[static_cast<std::size_t>(t)];
        timestep_table.grad.row(ts) += gtokens.row(3 * t);
        timestep_table.grad.row(ts) += gtokens.row(3 * t + 1);
        if (w.action_present[static_cast<std::size_t>(t)])
          timestep_table.grad.row(ts) += gtokens.row(3 * t + 2);
      }
    }
  }

  GlomaConfig cfg_;
};

// Constructs the requested ablation variant.
template <typename T>
GlomaModel<T> build_variant(Variant kind, GlomaConfig cfg,
                            std::uint64_t init_seed) {
  cfg.variant = kind;
  return GlomaModel<T>(cfg, init_seed);
}

}  // namespace mambadm
