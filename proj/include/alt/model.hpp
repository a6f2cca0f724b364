#pragma once

// Small pre-LayerNorm decoder-only transformer with hand-written reverse-mode
// gradients. Templated on the scalar type: float for training and sampling,
// double for gradient verification.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "alt/corpus.hpp"

namespace alt::lm {

struct ModelConfig {
  int vocab_size = 0;
  int d_model = 64;
  int n_layers = 2;
  int n_heads = 4;
  int d_ff = 256;
  int max_seq_len = 64;
  /// Absolute position of the first prompt token. Feedback and separator sit
  /// right-aligned in the slots before it; unused slots act as left padding.
  int prompt_position = 0;
  double dropout = 0.0;
  /// Std of the normal used for weight matrices and embeddings.
  double init_std = 0.02;

  void validate() const;
  int head_dim() const { return d_model / n_heads; }
  /// Absolute position of a sequence whose prompt starts `tokens_before_prompt`
  /// tokens in. Throws if those tokens do not fit before prompt_position.
  int offset_for(int tokens_before_prompt) const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
  bool operator==(const ModelConfig&) const = default;
};

struct TensorInfo {
  std::string name;
  std::vector<std::size_t> shape;
  std::size_t offset = 0;
  std::size_t size = 0;
};

/// Offsets of every named tensor inside the flat parameter vector.
/// Matrices are stored [in][out] row-major.
class ParamLayout {
 public:
  struct Layer {
    std::size_t ln1_g, ln1_b, w_qkv, b_qkv, w_o, b_o, ln2_g, ln2_b, w_fc, b_fc, w_proj, b_proj;
  };

  ParamLayout() = default;
  explicit ParamLayout(const ModelConfig& cfg);

  std::size_t total() const { return total_; }
  const std::vector<TensorInfo>& tensors() const { return tensors_; }
  const TensorInfo& find(const std::string& name) const;

  std::size_t tok_emb = 0, pos_emb = 0, lnf_g = 0, lnf_b = 0, w_head = 0, b_head = 0;
  std::vector<Layer> layers;

 private:
  std::size_t add(std::string name, std::vector<std::size_t> shape);
  std::vector<TensorInfo> tensors_;
  std::size_t total_ = 0;
};

template <typename T>
struct Parameters {
  ModelConfig config;
  ParamLayout layout;
  std::vector<T> values;

  Parameters() = default;
  explicit Parameters(const ModelConfig& cfg) : config(cfg), layout(cfg), values(layout.total(), T(0)) {}

  std::span<T> tensor(const std::string& name) {
    const auto& info = layout.find(name);
    return {values.data() + info.offset, info.size};
  }
  std::span<const T> tensor(const std::string& name) const {
    const auto& info = layout.find(name);
    return {values.data() + info.offset, info.size};
  }
  bool all_finite() const;

  template <typename U>
  Parameters<U> cast() const {
    Parameters<U> out(config);
    for (std::size_t i = 0; i < values.size(); ++i) out.values[i] = static_cast<U>(values[i]);
    return out;
  }
};

/// Scaled normal weights (init_std; residual output projections additionally
/// divided by sqrt(2*n_layers)), LayerNorm gains 1, all biases 0.
Parameters<float> init_params(const ModelConfig& config, std::uint64_t seed);

/// Inverted dropout on the attention and MLP residual branches. Masks are a
/// pure function of (seed, layer, branch, position, unit).
struct DropoutContext {
  double rate = 0.0;
  std::uint64_t seed = 0;
};

template <typename T>
struct ForwardCache;

template <typename T>
struct ForwardOutput {
  int length = 0;
  int vocab = 0;
  std::vector<T> logits;  // [length][vocab]

  std::span<const T> at(int pos) const {
    return {logits.data() + static_cast<std::size_t>(pos) * static_cast<std::size_t>(vocab),
            static_cast<std::size_t>(vocab)};
  }
};

/// Activations kept for backward(). Opaque outside model.cpp.
template <typename T>
struct ForwardCache {
  struct Layer {
    std::vector<T> x_in, xhat1, rstd1, a, qkv, att, o, x_mid, xhat2, rstd2, m, pre, act, mask_attn, mask_mlp;
  };
  std::vector<TokenId> tokens;
  int position_offset = 0;
  std::vector<Layer> layers;
  std::vector<T> x_final, xhatf, rstdf, f;
};

/// Logits for every position; position t depends only on tokens[0..t].
/// tokens[t] is embedded at absolute position position_offset + t.
template <typename T>
ForwardOutput<T> forward(const Parameters<T>& params, std::span<const TokenId> tokens, ForwardCache<T>* cache = nullptr,
                         const DropoutContext* dropout = nullptr, int position_offset = 0);

/// Accumulates d(loss)/d(params) into `grads` given d(loss)/d(logits).
template <typename T>
void backward(const Parameters<T>& params, const ForwardCache<T>& cache, std::span<const T> dlogits,
              std::vector<T>& grads);

/// Incremental decoder with a key/value cache. Produces logits bit-identical
/// to forward() at the same position.
template <typename T>
class Decoder {
 public:
  explicit Decoder(const Parameters<T>& params, int position_offset = 0);
  /// Appends one token and returns the logits at its position.
  std::span<const T> push(TokenId token);
  int length() const { return length_; }

 private:
  const Parameters<T>& params_;
  int offset_ = 0;
  int length_ = 0;
  std::vector<std::vector<T>> keys_, values_;  // per layer [max_seq_len][d_model]
  std::vector<T> logits_;
};

}  // namespace alt::lm
