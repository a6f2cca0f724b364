#include "alt/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "alt/errors.hpp"
#include "alt/rng.hpp"

namespace alt::lm {

void ModelConfig::validate() const {
  if (vocab_size < 1) throw ValidationError("model.vocab_size must be >= 1");
  if (d_model < 1 || n_layers < 1 || n_heads < 1 || d_ff < 1 || max_seq_len < 1) {
    throw ValidationError("model dimensions must be positive");
  }
  if (d_model % n_heads != 0) {
    throw ValidationError("model.d_model (" + std::to_string(d_model) + ") must be divisible by model.n_heads (" +
                          std::to_string(n_heads) + ")");
  }
  if (prompt_position < 0 || prompt_position >= max_seq_len) {
    throw ValidationError("model.prompt_position must lie in [0, max_seq_len)");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ValidationError("model.dropout must lie in [0,1)");
  if (!(init_std > 0.0)) throw ValidationError("model.init_std must be > 0");
}

int ModelConfig::offset_for(int tokens_before_prompt) const {
  if (tokens_before_prompt > prompt_position) {
    throw ValidationError(std::to_string(tokens_before_prompt) + " feedback tokens do not fit before prompt_position " +
                          std::to_string(prompt_position));
  }
  return prompt_position - tokens_before_prompt;
}

nlohmann::json ModelConfig::to_json() const {
  return {{"vocab_size", vocab_size}, {"d_model", d_model},         {"n_layers", n_layers},
          {"n_heads", n_heads},       {"d_ff", d_ff},               {"max_seq_len", max_seq_len},
          {"prompt_position", prompt_position}, {"dropout", dropout},       {"init_std", init_std}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.d_model = j.value("d_model", c.d_model);
  c.n_layers = j.value("n_layers", c.n_layers);
  c.n_heads = j.value("n_heads", c.n_heads);
  c.d_ff = j.value("d_ff", c.d_ff);
  c.max_seq_len = j.value("max_seq_len", c.max_seq_len);
  c.prompt_position = j.value("prompt_position", c.prompt_position);
  c.dropout = j.value("dropout", c.dropout);
  c.init_std = j.value("init_std", c.init_std);
  return c;
}

std::size_t ParamLayout::add(std::string name, std::vector<std::size_t> shape) {
  std::size_t size = 1;
  for (const auto s : shape) size *= s;
  tensors_.push_back({std::move(name), std::move(shape), total_, size});
  total_ += size;
  return tensors_.back().offset;
}

ParamLayout::ParamLayout(const ModelConfig& cfg) {
  cfg.validate();
  const auto V = static_cast<std::size_t>(cfg.vocab_size);
  const auto d = static_cast<std::size_t>(cfg.d_model);
  const auto ff = static_cast<std::size_t>(cfg.d_ff);
  tok_emb = add("tok_emb", {V, d});
  pos_emb = add("pos_emb", {static_cast<std::size_t>(cfg.max_seq_len), d});
  for (int l = 0; l < cfg.n_layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    Layer L{};
    L.ln1_g = add(p + "ln1.g", {d});
    L.ln1_b = add(p + "ln1.b", {d});
    L.w_qkv = add(p + "attn.w_qkv", {d, 3 * d});
    L.b_qkv = add(p + "attn.b_qkv", {3 * d});
    L.w_o = add(p + "attn.w_o", {d, d});
    L.b_o = add(p + "attn.b_o", {d});
    L.ln2_g = add(p + "ln2.g", {d});
    L.ln2_b = add(p + "ln2.b", {d});
    L.w_fc = add(p + "mlp.w_fc", {d, ff});
    L.b_fc = add(p + "mlp.b_fc", {ff});
    L.w_proj = add(p + "mlp.w_proj", {ff, d});
    L.b_proj = add(p + "mlp.b_proj", {d});
    layers.push_back(L);
  }
  lnf_g = add("ln_f.g", {d});
  lnf_b = add("ln_f.b", {d});
  w_head = add("head.w", {d, V});
  b_head = add("head.b", {V});
}

const TensorInfo& ParamLayout::find(const std::string& name) const {
  for (const auto& t : tensors_) {
    if (t.name == name) return t;
  }
  throw ValidationError("unknown parameter tensor '" + name + "'");
}

template <typename T>
bool Parameters<T>::all_finite() const {
  return std::all_of(values.begin(), values.end(), [](T v) { return std::isfinite(v); });
}

template struct Parameters<float>;
template struct Parameters<double>;

Parameters<float> init_params(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Parameters<float> p(config);
  Rng rng(seed);
  const double resid_std = config.init_std / std::sqrt(2.0 * config.n_layers);
  for (const auto& t : p.layout.tensors()) {
    const auto ends_with = [&t](std::string_view s) {
      return t.name.size() >= s.size() && t.name.compare(t.name.size() - s.size(), s.size(), s) == 0;
    };
    float* v = p.values.data() + t.offset;
    if (ends_with(".g")) {
      std::fill(v, v + t.size, 1.0f);
    } else if (t.shape.size() == 1) {
      std::fill(v, v + t.size, 0.0f);
    } else {
      const double std = (ends_with("attn.w_o") || ends_with("mlp.w_proj")) ? resid_std : config.init_std;
      for (std::size_t i = 0; i < t.size; ++i) v[i] = static_cast<float>(rng.normal() * std);
    }
  }
  return p;
}

namespace {

constexpr double kLnEps = 1e-5;

template <typename T>
void linear_row(const T* x, int in, const T* w, const T* b, int out, T* y) {
  std::copy(b, b + out, y);
  for (int i = 0; i < in; ++i) {
    const T xi = x[i];
    const T* wi = w + static_cast<std::size_t>(i) * out;
    for (int j = 0; j < out; ++j) y[j] += xi * wi[j];
  }
}

template <typename T>
void linear_row_backward(const T* x, int in, const T* w, const T* dy, int out, T* dx, T* dw, T* db) {
  for (int j = 0; j < out; ++j) db[j] += dy[j];
  for (int i = 0; i < in; ++i) {
    const T xi = x[i];
    const T* wi = w + static_cast<std::size_t>(i) * out;
    T* dwi = dw + static_cast<std::size_t>(i) * out;
    T acc = 0;
    for (int j = 0; j < out; ++j) {
      dwi[j] += xi * dy[j];
      acc += dy[j] * wi[j];
    }
    dx[i] += acc;
  }
}

template <typename T>
void layernorm_row(const T* x, int d, const T* g, const T* b, T* y, T* xhat, T& rstd) {
  T mean = 0;
  for (int i = 0; i < d; ++i) mean += x[i];
  mean /= static_cast<T>(d);
  T var = 0;
  for (int i = 0; i < d; ++i) var += (x[i] - mean) * (x[i] - mean);
  var /= static_cast<T>(d);
  rstd = T(1) / std::sqrt(var + static_cast<T>(kLnEps));
  for (int i = 0; i < d; ++i) {
    xhat[i] = (x[i] - mean) * rstd;
    y[i] = xhat[i] * g[i] + b[i];
  }
}

template <typename T>
void layernorm_row_backward(const T* dy, int d, const T* g, const T* xhat, T rstd, T* dx, T* dg, T* db) {
  T mean1 = 0, mean2 = 0;
  for (int i = 0; i < d; ++i) {
    const T dxh = dy[i] * g[i];
    mean1 += dxh;
    mean2 += dxh * xhat[i];
    dg[i] += dy[i] * xhat[i];
    db[i] += dy[i];
  }
  mean1 /= static_cast<T>(d);
  mean2 /= static_cast<T>(d);
  for (int i = 0; i < d; ++i) dx[i] += rstd * (dy[i] * g[i] - mean1 - xhat[i] * mean2);
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)

template <typename T>
T gelu(T x) {
  const T inner = static_cast<T>(kGeluC) * (x + static_cast<T>(0.044715) * x * x * x);
  return static_cast<T>(0.5) * x * (T(1) + std::tanh(inner));
}

template <typename T>
T gelu_grad(T x) {
  const T inner = static_cast<T>(kGeluC) * (x + static_cast<T>(0.044715) * x * x * x);
  const T th = std::tanh(inner);
  const T dinner = static_cast<T>(kGeluC) * (T(1) + static_cast<T>(3 * 0.044715) * x * x);
  return static_cast<T>(0.5) * (T(1) + th) + static_cast<T>(0.5) * x * (T(1) - th * th) * dinner;
}

// Causal attention for query row t. Keys/values for row u live at
// kbase + u*stride + h*hd (resp. vbase). Probabilities for head h are written
// to probs + h*head_stride, entries 0..t.
template <typename T>
void attention_row(const T* q, const T* kbase, const T* vbase, std::size_t stride, int t, int heads, int hd,
                   T* probs, std::size_t head_stride, T* o) {
  const T scale = T(1) / std::sqrt(static_cast<T>(hd));
  for (int h = 0; h < heads; ++h) {
    const T* qh = q + h * hd;
    T* p = probs + static_cast<std::size_t>(h) * head_stride;
    T mx = -std::numeric_limits<T>::infinity();
    for (int u = 0; u <= t; ++u) {
      const T* ku = kbase + static_cast<std::size_t>(u) * stride + h * hd;
      T s = 0;
      for (int i = 0; i < hd; ++i) s += qh[i] * ku[i];
      p[u] = s * scale;
      mx = std::max(mx, p[u]);
    }
    T sum = 0;
    for (int u = 0; u <= t; ++u) {
      p[u] = std::exp(p[u] - mx);
      sum += p[u];
    }
    for (int u = 0; u <= t; ++u) p[u] /= sum;
    T* oh = o + h * hd;
    std::fill(oh, oh + hd, T(0));
    for (int u = 0; u <= t; ++u) {
      const T* vu = vbase + static_cast<std::size_t>(u) * stride + h * hd;
      const T pu = p[u];
      for (int i = 0; i < hd; ++i) oh[i] += pu * vu[i];
    }
  }
}

void fill_dropout_mask(std::vector<float>& mask, double rate, std::uint64_t seed, int layer, int branch, int n, int d) {
  mask.resize(static_cast<std::size_t>(n) * d);
  const float keep_scale = static_cast<float>(1.0 / (1.0 - rate));
  for (int t = 0; t < n; ++t) {
    Rng rng(mix_seed({seed, static_cast<std::uint64_t>(layer), static_cast<std::uint64_t>(branch),
                      static_cast<std::uint64_t>(t)}));
    for (int i = 0; i < d; ++i) mask[static_cast<std::size_t>(t) * d + i] = rng.uniform() < rate ? 0.0f : keep_scale;
  }
}

template <typename T>
void fill_dropout_mask(std::vector<T>& mask, const DropoutContext& ctx, int layer, int branch, int n, int d) {
  std::vector<float> tmp;
  fill_dropout_mask(tmp, ctx.rate, ctx.seed, layer, branch, n, d);
  mask.assign(tmp.begin(), tmp.end());
}

}  // namespace

template <typename T>
ForwardOutput<T> forward(const Parameters<T>& params, std::span<const TokenId> tokens, ForwardCache<T>* cache,
                         const DropoutContext* dropout, int position_offset) {
  const auto& cfg = params.config;
  const auto& L = params.layout;
  const int n = static_cast<int>(tokens.size());
  if (position_offset < 0) throw ValidationError("negative position offset");
  if (position_offset + n > cfg.max_seq_len) {
    throw ValidationError("sequence length " + std::to_string(n) + " at offset " + std::to_string(position_offset) +
                          " exceeds max_seq_len " + std::to_string(cfg.max_seq_len));
  }
  for (const auto id : tokens) {
    if (id < 0 || id >= cfg.vocab_size) throw ValidationError("token id " + std::to_string(id) + " out of range");
  }
  const int d = cfg.d_model, H = cfg.n_heads, hd = cfg.head_dim(), ff = cfg.d_ff, V = cfg.vocab_size;
  const bool use_dropout = dropout != nullptr && dropout->rate > 0.0;
  const T* P = params.values.data();

  ForwardCache<T> local;
  ForwardCache<T>& c = cache ? *cache : local;
  c.tokens.assign(tokens.begin(), tokens.end());
  c.position_offset = position_offset;
  c.layers.resize(static_cast<std::size_t>(cfg.n_layers));

  const std::size_t nd = static_cast<std::size_t>(n) * d;
  std::vector<T> x(nd);
  for (int t = 0; t < n; ++t) {
    const T* e = P + L.tok_emb + static_cast<std::size_t>(tokens[t]) * d;
    const T* pe = P + L.pos_emb + static_cast<std::size_t>(position_offset + t) * d;
    for (int i = 0; i < d; ++i) x[static_cast<std::size_t>(t) * d + i] = e[i] + pe[i];
  }

  std::vector<T> tmp(static_cast<std::size_t>(std::max(d, ff)));
  for (int l = 0; l < cfg.n_layers; ++l) {
    const auto& W = L.layers[static_cast<std::size_t>(l)];
    auto& C = c.layers[static_cast<std::size_t>(l)];
    C.x_in = x;
    C.xhat1.resize(nd);
    C.rstd1.resize(static_cast<std::size_t>(n));
    C.a.resize(nd);
    C.qkv.resize(nd * 3);
    C.att.assign(static_cast<std::size_t>(H) * n * n, T(0));
    C.o.resize(nd);
    C.x_mid.resize(nd);
    C.xhat2.resize(nd);
    C.rstd2.resize(static_cast<std::size_t>(n));
    C.m.resize(nd);
    C.pre.resize(static_cast<std::size_t>(n) * ff);
    C.act.resize(static_cast<std::size_t>(n) * ff);
    if (use_dropout) {
      fill_dropout_mask(C.mask_attn, *dropout, l, 0, n, d);
      fill_dropout_mask(C.mask_mlp, *dropout, l, 1, n, d);
    } else {
      C.mask_attn.clear();
      C.mask_mlp.clear();
    }

    for (int t = 0; t < n; ++t) {
      const std::size_t r = static_cast<std::size_t>(t) * d;
      layernorm_row(x.data() + r, d, P + W.ln1_g, P + W.ln1_b, C.a.data() + r, C.xhat1.data() + r, C.rstd1[t]);
      linear_row(C.a.data() + r, d, P + W.w_qkv, P + W.b_qkv, 3 * d, C.qkv.data() + 3 * r);
    }
    for (int t = 0; t < n; ++t) {
      const std::size_t r = static_cast<std::size_t>(t) * d;
      attention_row(C.qkv.data() + 3 * r, C.qkv.data() + d, C.qkv.data() + 2 * d, static_cast<std::size_t>(3 * d), t,
                    H, hd, C.att.data() + static_cast<std::size_t>(t) * n, static_cast<std::size_t>(n) * n,
                    C.o.data() + r);
      linear_row(C.o.data() + r, d, P + W.w_o, P + W.b_o, d, tmp.data());
      for (int i = 0; i < d; ++i) {
        const T branch = use_dropout ? tmp[i] * C.mask_attn[r + i] : tmp[i];
        C.x_mid[r + i] = x[r + i] + branch;
      }
      layernorm_row(C.x_mid.data() + r, d, P + W.ln2_g, P + W.ln2_b, C.m.data() + r, C.xhat2.data() + r, C.rstd2[t]);
      const std::size_t rf = static_cast<std::size_t>(t) * ff;
      linear_row(C.m.data() + r, d, P + W.w_fc, P + W.b_fc, ff, C.pre.data() + rf);
      for (int j = 0; j < ff; ++j) C.act[rf + j] = gelu(C.pre[rf + j]);
      linear_row(C.act.data() + rf, ff, P + W.w_proj, P + W.b_proj, d, tmp.data());
      for (int i = 0; i < d; ++i) {
        const T branch = use_dropout ? tmp[i] * C.mask_mlp[r + i] : tmp[i];
        x[r + i] = C.x_mid[r + i] + branch;
      }
    }
  }

  c.x_final = x;
  c.xhatf.resize(nd);
  c.rstdf.resize(static_cast<std::size_t>(n));
  c.f.resize(nd);
  ForwardOutput<T> out;
  out.length = n;
  out.vocab = V;
  out.logits.resize(static_cast<std::size_t>(n) * V);
  for (int t = 0; t < n; ++t) {
    const std::size_t r = static_cast<std::size_t>(t) * d;
    layernorm_row(x.data() + r, d, P + L.lnf_g, P + L.lnf_b, c.f.data() + r, c.xhatf.data() + r, c.rstdf[t]);
    linear_row(c.f.data() + r, d, P + L.w_head, P + L.b_head, V, out.logits.data() + static_cast<std::size_t>(t) * V);
  }
  return out;
}

template <typename T>
void backward(const Parameters<T>& params, const ForwardCache<T>& c, std::span<const T> dlogits,
              std::vector<T>& grads) {
  const auto& cfg = params.config;
  const auto& L = params.layout;
  const int n = static_cast<int>(c.tokens.size());
  const int d = cfg.d_model, H = cfg.n_heads, hd = cfg.head_dim(), ff = cfg.d_ff, V = cfg.vocab_size;
  if (dlogits.size() != static_cast<std::size_t>(n) * V) throw ValidationError("dlogits has the wrong size");
  if (grads.size() != params.values.size()) grads.assign(params.values.size(), T(0));
  const T* P = params.values.data();
  T* G = grads.data();
  const std::size_t nd = static_cast<std::size_t>(n) * d;

  // Head and final LayerNorm.
  std::vector<T> df(nd, T(0));
  std::vector<T> dx(nd, T(0));
  for (int t = 0; t < n; ++t) {
    const std::size_t r = static_cast<std::size_t>(t) * d;
    linear_row_backward(c.f.data() + r, d, P + L.w_head, dlogits.data() + static_cast<std::size_t>(t) * V, V,
                        df.data() + r, G + L.w_head, G + L.b_head);
    layernorm_row_backward(df.data() + r, d, P + L.lnf_g, c.xhatf.data() + r, c.rstdf[t], dx.data() + r, G + L.lnf_g,
                           G + L.lnf_b);
  }

  const T scale = T(1) / std::sqrt(static_cast<T>(hd));
  std::vector<T> dbranch(static_cast<std::size_t>(d));
  std::vector<T> dact(static_cast<std::size_t>(ff));
  for (int l = cfg.n_layers - 1; l >= 0; --l) {
    const auto& W = L.layers[static_cast<std::size_t>(l)];
    const auto& C = c.layers[static_cast<std::size_t>(l)];
    const bool dropped = !C.mask_attn.empty();

    // MLP branch: x = x_mid + proj(gelu(fc(ln2(x_mid)))).
    std::vector<T> dx_mid = dx;
    std::vector<T> dm(nd, T(0));
    for (int t = 0; t < n; ++t) {
      const std::size_t r = static_cast<std::size_t>(t) * d;
      const std::size_t rf = static_cast<std::size_t>(t) * ff;
      for (int i = 0; i < d; ++i) dbranch[i] = dropped ? dx[r + i] * C.mask_mlp[r + i] : dx[r + i];
      std::fill(dact.begin(), dact.end(), T(0));
      linear_row_backward(C.act.data() + rf, ff, P + W.w_proj, dbranch.data(), d, dact.data(), G + W.w_proj,
                          G + W.b_proj);
      for (int j = 0; j < ff; ++j) dact[j] *= gelu_grad(C.pre[rf + j]);
      linear_row_backward(C.m.data() + r, d, P + W.w_fc, dact.data(), ff, dm.data() + r, G + W.w_fc, G + W.b_fc);
      layernorm_row_backward(dm.data() + r, d, P + W.ln2_g, C.xhat2.data() + r, C.rstd2[t], dx_mid.data() + r,
                             G + W.ln2_g, G + W.ln2_b);
    }

    // Attention branch: x_mid = x_in + o_proj(attn(ln1(x_in))).
    std::vector<T> dx_in = dx_mid;
    std::vector<T> d_o(nd, T(0));
    for (int t = 0; t < n; ++t) {
      const std::size_t r = static_cast<std::size_t>(t) * d;
      for (int i = 0; i < d; ++i) dbranch[i] = dropped ? dx_mid[r + i] * C.mask_attn[r + i] : dx_mid[r + i];
      linear_row_backward(C.o.data() + r, d, P + W.w_o, dbranch.data(), d, d_o.data() + r, G + W.w_o, G + W.b_o);
    }
    std::vector<T> dqkv(nd * 3, T(0));
    std::vector<T> dp(static_cast<std::size_t>(n));
    for (int t = 0; t < n; ++t) {
      for (int h = 0; h < H; ++h) {
        const T* p = C.att.data() + (static_cast<std::size_t>(h) * n + t) * n;
        const T* doh = d_o.data() + static_cast<std::size_t>(t) * d + h * hd;
        const T* qh = C.qkv.data() + static_cast<std::size_t>(t) * 3 * d + h * hd;
        T dot = 0;
        for (int u = 0; u <= t; ++u) {
          const T* vu = C.qkv.data() + static_cast<std::size_t>(u) * 3 * d + 2 * d + h * hd;
          T s = 0;
          for (int i = 0; i < hd; ++i) s += doh[i] * vu[i];
          dp[u] = s;
          dot += p[u] * s;
        }
        T* dqh = dqkv.data() + static_cast<std::size_t>(t) * 3 * d + h * hd;
        for (int u = 0; u <= t; ++u) {
          const T ds = p[u] * (dp[u] - dot) * scale;
          const T* ku = C.qkv.data() + static_cast<std::size_t>(u) * 3 * d + d + h * hd;
          T* dku = dqkv.data() + static_cast<std::size_t>(u) * 3 * d + d + h * hd;
          T* dvu = dqkv.data() + static_cast<std::size_t>(u) * 3 * d + 2 * d + h * hd;
          for (int i = 0; i < hd; ++i) {
            dqh[i] += ds * ku[i];
            dku[i] += ds * qh[i];
            dvu[i] += p[u] * doh[i];
          }
        }
      }
    }
    std::vector<T> da(nd, T(0));
    for (int t = 0; t < n; ++t) {
      const std::size_t r = static_cast<std::size_t>(t) * d;
      linear_row_backward(C.a.data() + r, d, P + W.w_qkv, dqkv.data() + 3 * r, 3 * d, da.data() + r, G + W.w_qkv,
                          G + W.b_qkv);
      layernorm_row_backward(da.data() + r, d, P + W.ln1_g, C.xhat1.data() + r, C.rstd1[t], dx_in.data() + r,
                             G + W.ln1_g, G + W.ln1_b);
    }
    dx = std::move(dx_in);
  }

  for (int t = 0; t < n; ++t) {
    T* ge = G + L.tok_emb + static_cast<std::size_t>(c.tokens[static_cast<std::size_t>(t)]) * d;
    T* gp = G + L.pos_emb + static_cast<std::size_t>(c.position_offset + t) * d;
    for (int i = 0; i < d; ++i) {
      ge[i] += dx[static_cast<std::size_t>(t) * d + i];
      gp[i] += dx[static_cast<std::size_t>(t) * d + i];
    }
  }
}

template <typename T>
Decoder<T>::Decoder(const Parameters<T>& params, int position_offset) : params_(params), offset_(position_offset) {
  const auto& cfg = params.config;
  if (position_offset < 0 || position_offset >= cfg.max_seq_len) throw ValidationError("bad decoder position offset");
  const auto per_layer = static_cast<std::size_t>(cfg.max_seq_len) * cfg.d_model;
  keys_.assign(static_cast<std::size_t>(cfg.n_layers), std::vector<T>(per_layer));
  values_.assign(static_cast<std::size_t>(cfg.n_layers), std::vector<T>(per_layer));
  logits_.resize(static_cast<std::size_t>(cfg.vocab_size));
}

template <typename T>
std::span<const T> Decoder<T>::push(TokenId token) {
  const auto& cfg = params_.config;
  const auto& L = params_.layout;
  if (offset_ + length_ >= cfg.max_seq_len) throw ValidationError("decoder exceeded max_seq_len");
  if (token < 0 || token >= cfg.vocab_size) throw ValidationError("token id " + std::to_string(token) + " out of range");
  const int d = cfg.d_model, H = cfg.n_heads, hd = cfg.head_dim(), ff = cfg.d_ff, V = cfg.vocab_size;
  const T* P = params_.values.data();
  const int t = length_;

  std::vector<T> x(static_cast<std::size_t>(d)), a(x.size()), xhat(x.size()), qkv(x.size() * 3), o(x.size()),
      x_mid(x.size()), m(x.size()), tmp(static_cast<std::size_t>(std::max(d, ff))), pre(static_cast<std::size_t>(ff)),
      act(pre.size()), probs(static_cast<std::size_t>(H) * cfg.max_seq_len);
  T rstd;
  const T* e = P + L.tok_emb + static_cast<std::size_t>(token) * d;
  const T* pe = P + L.pos_emb + static_cast<std::size_t>(offset_ + t) * d;
  for (int i = 0; i < d; ++i) x[i] = e[i] + pe[i];

  for (int l = 0; l < cfg.n_layers; ++l) {
    const auto& W = L.layers[static_cast<std::size_t>(l)];
    auto& K = keys_[static_cast<std::size_t>(l)];
    auto& Vc = values_[static_cast<std::size_t>(l)];
    layernorm_row(x.data(), d, P + W.ln1_g, P + W.ln1_b, a.data(), xhat.data(), rstd);
    linear_row(a.data(), d, P + W.w_qkv, P + W.b_qkv, 3 * d, qkv.data());
    std::copy(qkv.begin() + d, qkv.begin() + 2 * d, K.begin() + static_cast<std::ptrdiff_t>(t) * d);
    std::copy(qkv.begin() + 2 * d, qkv.begin() + 3 * d, Vc.begin() + static_cast<std::ptrdiff_t>(t) * d);
    attention_row(qkv.data(), K.data(), Vc.data(), static_cast<std::size_t>(d), t, H, hd, probs.data(),
                  static_cast<std::size_t>(cfg.max_seq_len), o.data());
    linear_row(o.data(), d, P + W.w_o, P + W.b_o, d, tmp.data());
    for (int i = 0; i < d; ++i) x_mid[i] = x[i] + tmp[i];
    layernorm_row(x_mid.data(), d, P + W.ln2_g, P + W.ln2_b, m.data(), xhat.data(), rstd);
    linear_row(m.data(), d, P + W.w_fc, P + W.b_fc, ff, pre.data());
    for (int j = 0; j < ff; ++j) act[j] = gelu(pre[j]);
    linear_row(act.data(), ff, P + W.w_proj, P + W.b_proj, d, tmp.data());
    for (int i = 0; i < d; ++i) x[i] = x_mid[i] + tmp[i];
  }
  std::vector<T> f(static_cast<std::size_t>(d));
  layernorm_row(x.data(), d, P + L.lnf_g, P + L.lnf_b, f.data(), xhat.data(), rstd);
  linear_row(f.data(), d, P + L.w_head, P + L.b_head, V, logits_.data());
  ++length_;
  return logits_;
}

template ForwardOutput<float> forward(const Parameters<float>&, std::span<const TokenId>, ForwardCache<float>*,
                                      const DropoutContext*, int);
template ForwardOutput<double> forward(const Parameters<double>&, std::span<const TokenId>, ForwardCache<double>*,
                                       const DropoutContext*, int);
template void backward(const Parameters<float>&, const ForwardCache<float>&, std::span<const float>,
                       std::vector<float>&);
template void backward(const Parameters<double>&, const ForwardCache<double>&, std::span<const double>,
                       std::vector<double>&);
template class Decoder<float>;
template class Decoder<double>;

}  // namespace alt::lm
