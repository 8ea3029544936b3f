// Copyright 2026 The mdlm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mdlm/common.hpp"
#include "mdlm/lora.hpp"
#include "mdlm/rng.hpp"
#include "mdlm/tensor.hpp"
#include "mdlm/vocab.hpp"

namespace mdlm {

struct ModelConfig {
  int n_layers = 2;
  int d_model = 64;
  int n_heads = 4;
  int d_ffn = 256;
  int vocab_size = 0;
  int max_positions = 256;
  std::uint64_t seed = 0;
  /// Keys holding this id are excluded from attention. -1 disables.
  TokenId pad_id = SpecialIds{}.pad;

  void validate() const {
    if (n_layers < 1 || d_model < 1 || n_heads < 1 || d_ffn < 1 || max_positions < 1) {
      throw Error("model dimensions must be positive");
    }
    if (vocab_size < 2) throw Error("vocab_size must be at least 2");
    if (d_model % n_heads != 0) throw Error("d_model must be divisible by n_heads");
  }

  bool operator==(const ModelConfig&) const = default;
};

namespace names {
inline std::string layer(int l, const char* suffix) { return "layers." + std::to_string(l) + "." + suffix; }
}  // namespace names

/// Deterministic initialization: N(0, 0.02) for embeddings, projections and
/// the output head; layernorm scale 1 / shift 0; biases 0.
template <typename T>
ModelParameters<T> init_parameters(const ModelConfig& cfg) {
  cfg.validate();
  Rng rng(derive_seed(cfg.seed, {0x1417}));
  ModelParameters<T> p;
  auto normal = [&](Eigen::Index r, Eigen::Index c) {
    Matrix<T> m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(rng.normal(0.0, 0.02));
    return m;
  };
  auto ones = [](Eigen::Index c) { return Matrix<T>::Ones(1, c); };
  auto zeros = [](Eigen::Index c) { return Matrix<T>::Zero(1, c); };
  const int d = cfg.d_model;
  p.add("tok_emb", normal(cfg.vocab_size, d));
  p.add("pos_emb", normal(cfg.max_positions, d));
  for (int l = 0; l < cfg.n_layers; ++l) {
    p.add(names::layer(l, "ln1.scale"), ones(d));
    p.add(names::layer(l, "ln1.shift"), zeros(d));
    for (const char* proj : {"q", "k", "v", "o"}) {
      p.add(names::layer(l, (std::string("attn.W_") + proj).c_str()), normal(d, d));
      p.add(names::layer(l, (std::string("attn.b_") + proj).c_str()), zeros(d));
    }
    p.add(names::layer(l, "ln2.scale"), ones(d));
    p.add(names::layer(l, "ln2.shift"), zeros(d));
    p.add(names::layer(l, "mlp.W_up"), normal(d, cfg.d_ffn));
    p.add(names::layer(l, "mlp.b_up"), zeros(cfg.d_ffn));
    p.add(names::layer(l, "mlp.W_down"), normal(cfg.d_ffn, d));
    p.add(names::layer(l, "mlp.b_down"), zeros(d));
  }
  p.add("ln_f.scale", ones(d));
  p.add("ln_f.shift", zeros(d));
  p.add("head.W", normal(d, cfg.vocab_size));
  p.add("head.b", zeros(cfg.vocab_size));
  return p;
}

template <typename T>
struct LinearCache {
  Matrix<T> input;
  Matrix<T> keep;  // scaled dropout mask on the adapter path; empty when off
  Matrix<T> low;   // (input * keep) A^T
};

template <typename T>
struct LayerNormCache {
  Matrix<T> normalized;
  Eigen::Matrix<T, Eigen::Dynamic, 1> inv_std;
};

template <typename T>
struct LayerCache {
  LayerNormCache<T> ln1, ln2;
  LinearCache<T> q, k, v, o, up, down;
  Matrix<T> queries, keys, values;
  std::vector<Matrix<T>> attn;  // per head [L, L]
  Matrix<T> pre_gelu;
};

/// Activations retained by a forward pass for the matching backward pass.
template <typename T>
struct ForwardCache {
  std::vector<TokenId> ids;
  std::vector<LayerCache<T>> layers;
  LayerNormCache<T> ln_f;
  LinearCache<T> head;
};

/// Bidirectional pre-layernorm transformer encoder with a token head. When
/// a LoRA adapter is attached the base tensors are frozen and only the
/// adapter factors are trainable.
template <typename T>
class Encoder {
 public:
  using Mat = Matrix<T>;

  Encoder() = default;
  Encoder(ModelConfig cfg, ModelParameters<T> params) : cfg_(std::move(cfg)), params_(std::move(params)) {
    cfg_.validate();
    check_shapes();
  }

  static Encoder initialize(const ModelConfig& cfg) { return Encoder(cfg, init_parameters<T>(cfg)); }

  const ModelConfig& config() const { return cfg_; }
  ModelParameters<T>& parameters() { return params_; }
  const ModelParameters<T>& parameters() const { return params_; }

  bool has_adapter() const { return adapter_.has_value(); }
  LoraAdapter<T>* adapter() { return adapter_ ? &*adapter_ : nullptr; }
  const LoraAdapter<T>* adapter() const { return adapter_ ? &*adapter_ : nullptr; }
  void set_adapter(std::optional<LoraAdapter<T>> a) { adapter_ = std::move(a); }

  /// Trainable tensor names: the adapter factors when attached, otherwise
  /// every base tensor.
  std::vector<std::string> trainable_names() const { return adapter_ ? adapter_->tensors.names() : params_.names(); }

  Mat& tensor(const std::string& name) {
    if (adapter_ && adapter_->tensors.contains(name)) return adapter_->tensors.at(name);
    return params_.at(name);
  }

  Gradients<T> zero_gradients() const { return adapter_ ? adapter_->tensors.zeros_like() : params_.zeros_like(); }

  /// Eval-mode logits [L, V].
  Mat forward(const TokenSequence& tokens) const { return run_forward(tokens, nullptr, nullptr); }

  /// Training-mode forward that records activations. `dropout_rng` enables
  /// adapter dropout; pass nullptr for a deterministic pass.
  Mat forward(const TokenSequence& tokens, ForwardCache<T>& cache, Rng* dropout_rng) const {
    return run_forward(tokens, &cache, dropout_rng);
  }

  /// Accumulates d(loss)/d(tensor) into `grads` for every trainable tensor
  /// present in it, given d(loss)/d(logits).
  void backward(const TokenSequence& tokens, const ForwardCache<T>& cache, const Mat& dlogits, Gradients<T>& grads) const {
    if (tokens.ids != cache.ids) throw Error("backward called with inputs that differ from the cached forward pass");
    const auto L = static_cast<Eigen::Index>(tokens.size());
    if (dlogits.rows() != L || dlogits.cols() != cfg_.vocab_size) throw Error("logit gradient has the wrong shape");

    Mat dh = linear_backward("head.W", "head.b", cache.head, dlogits, grads);
    Mat dx = layernorm_backward("ln_f", cache.ln_f, dh, grads);

    const int d = cfg_.d_model;
    const int dh_size = d / cfg_.n_heads;
    const T scale = T(1) / std::sqrt(static_cast<T>(dh_size));
    for (int l = cfg_.n_layers - 1; l >= 0; --l) {
      const auto& lc = cache.layers[static_cast<std::size_t>(l)];
      // MLP branch.
      Mat dg = linear_backward(names::layer(l, "mlp.W_down"), names::layer(l, "mlp.b_down"), lc.down, dx, grads);
      Mat du = dg.cwiseProduct(lc.pre_gelu.unaryExpr([](T u) { return gelu_grad(u); }));
      Mat dh2 = linear_backward(names::layer(l, "mlp.W_up"), names::layer(l, "mlp.b_up"), lc.up, du, grads);
      dx += layernorm_backward(names::layer(l, "ln2"), lc.ln2, dh2, grads);

      // Attention branch.
      Mat dctx = linear_backward(names::layer(l, "attn.W_o"), names::layer(l, "attn.b_o"), lc.o, dx, grads);
      Mat dq = Mat::Zero(L, d), dk = Mat::Zero(L, d), dv = Mat::Zero(L, d);
      for (int h = 0; h < cfg_.n_heads; ++h) {
        const Mat& p = lc.attn[static_cast<std::size_t>(h)];
        const auto c0 = static_cast<Eigen::Index>(h * dh_size);
        auto qh = lc.queries.middleCols(c0, dh_size);
        auto kh = lc.keys.middleCols(c0, dh_size);
        auto vh = lc.values.middleCols(c0, dh_size);
        auto dctx_h = dctx.middleCols(c0, dh_size);
        Mat dp = dctx_h * vh.transpose();
        dv.middleCols(c0, dh_size).noalias() += p.transpose() * dctx_h;
        Eigen::Matrix<T, Eigen::Dynamic, 1> row_dot = (dp.cwiseProduct(p)).rowwise().sum();
        Mat ds = p.cwiseProduct(dp.colwise() - row_dot);
        dq.middleCols(c0, dh_size).noalias() += scale * (ds * kh);
        dk.middleCols(c0, dh_size).noalias() += scale * (ds.transpose() * qh);
      }
      Mat dh1 = linear_backward(names::layer(l, "attn.W_q"), names::layer(l, "attn.b_q"), lc.q, dq, grads);
      dh1 += linear_backward(names::layer(l, "attn.W_k"), names::layer(l, "attn.b_k"), lc.k, dk, grads);
      dh1 += linear_backward(names::layer(l, "attn.W_v"), names::layer(l, "attn.b_v"), lc.v, dv, grads);
      dx += layernorm_backward(names::layer(l, "ln1"), lc.ln1, dh1, grads);
    }

    if (auto* g = grads.find("tok_emb")) {
      for (Eigen::Index i = 0; i < L; ++i) g->row(tokens.ids[static_cast<std::size_t>(i)]) += dx.row(i);
    }
    if (auto* g = grads.find("pos_emb")) g->topRows(L) += dx;
  }

 private:
  static T gelu(T x) { return T(0.5) * x * (T(1) + std::erf(x / std::numbers::sqrt2_v<T>)); }
  static T gelu_grad(T x) {
    const T cdf = T(0.5) * (T(1) + std::erf(x / std::numbers::sqrt2_v<T>));
    const T pdf = std::exp(T(-0.5) * x * x) / std::sqrt(T(2) * std::numbers::pi_v<T>);
    return cdf + x * pdf;
  }

  void check_shapes() const {
    auto expect = [&](const std::string& name, Eigen::Index r, Eigen::Index c) {
      const auto& m = params_.at(name);
      if (m.rows() != r || m.cols() != c) {
        throw Error("tensor " + name + " has shape " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                    ", expected " + std::to_string(r) + "x" + std::to_string(c));
      }
    };
    const int d = cfg_.d_model;
    expect("tok_emb", cfg_.vocab_size, d);
    expect("pos_emb", cfg_.max_positions, d);
    for (int l = 0; l < cfg_.n_layers; ++l) {
      for (const char* proj : {"q", "k", "v", "o"}) {
        expect(names::layer(l, (std::string("attn.W_") + proj).c_str()), d, d);
        expect(names::layer(l, (std::string("attn.b_") + proj).c_str()), 1, d);
      }
      for (const char* ln : {"ln1", "ln2"}) {
        expect(names::layer(l, (std::string(ln) + ".scale").c_str()), 1, d);
        expect(names::layer(l, (std::string(ln) + ".shift").c_str()), 1, d);
      }
      expect(names::layer(l, "mlp.W_up"), d, cfg_.d_ffn);
      expect(names::layer(l, "mlp.b_up"), 1, cfg_.d_ffn);
      expect(names::layer(l, "mlp.W_down"), cfg_.d_ffn, d);
      expect(names::layer(l, "mlp.b_down"), 1, d);
    }
    expect("ln_f.scale", 1, d);
    expect("ln_f.shift", 1, d);
    expect("head.W", d, cfg_.vocab_size);
    expect("head.b", 1, cfg_.vocab_size);
  }

  Mat run_forward(const TokenSequence& tokens, ForwardCache<T>* cache, Rng* rng) const {
    const auto L = static_cast<Eigen::Index>(tokens.size());
    if (L > cfg_.max_positions) {
      throw Error("sequence of length " + std::to_string(L) + " exceeds max_positions " +
                  std::to_string(cfg_.max_positions));
    }
    const int d = cfg_.d_model;
    const auto& tok = params_.at("tok_emb");
    const auto& pos = params_.at("pos_emb");
    Mat x(L, d);
    for (Eigen::Index i = 0; i < L; ++i) {
      const TokenId id = tokens.ids[static_cast<std::size_t>(i)];
      if (id < 0 || id >= cfg_.vocab_size) throw Error("token id " + std::to_string(id) + " out of range");
      x.row(i) = tok.row(id) + pos.row(i);
    }
    if (cache) {
      cache->ids = tokens.ids;
      cache->layers.assign(static_cast<std::size_t>(cfg_.n_layers), LayerCache<T>{});
    }

    // Additive key mask: PAD keys get -inf.
    Eigen::Matrix<T, 1, Eigen::Dynamic> key_bias = Eigen::Matrix<T, 1, Eigen::Dynamic>::Zero(L);
    bool any_pad = false;
    for (Eigen::Index j = 0; j < L; ++j) {
      if (tokens.ids[static_cast<std::size_t>(j)] == cfg_.pad_id) {
        key_bias(j) = -std::numeric_limits<T>::infinity();
        any_pad = true;
      }
    }

    const int dh_size = d / cfg_.n_heads;
    const T scale = T(1) / std::sqrt(static_cast<T>(dh_size));
    for (int l = 0; l < cfg_.n_layers; ++l) {
      LayerCache<T>* lc = cache ? &cache->layers[static_cast<std::size_t>(l)] : nullptr;
      Mat h = layernorm_forward(names::layer(l, "ln1"), x, lc ? &lc->ln1 : nullptr);
      Mat q = linear_forward(names::layer(l, "attn.W_q"), names::layer(l, "attn.b_q"), h, lc ? &lc->q : nullptr, rng);
      Mat k = linear_forward(names::layer(l, "attn.W_k"), names::layer(l, "attn.b_k"), h, lc ? &lc->k : nullptr, rng);
      Mat v = linear_forward(names::layer(l, "attn.W_v"), names::layer(l, "attn.b_v"), h, lc ? &lc->v : nullptr, rng);
      Mat ctx(L, d);
      if (lc) lc->attn.resize(static_cast<std::size_t>(cfg_.n_heads));
      for (int hd = 0; hd < cfg_.n_heads; ++hd) {
        const auto c0 = static_cast<Eigen::Index>(hd * dh_size);
        Mat s = scale * (q.middleCols(c0, dh_size) * k.middleCols(c0, dh_size).transpose());
        if (any_pad) s.rowwise() += key_bias;
        softmax_rows(s);
        ctx.middleCols(c0, dh_size).noalias() = s * v.middleCols(c0, dh_size);
        if (lc) lc->attn[static_cast<std::size_t>(hd)] = std::move(s);
      }
      if (lc) {
        lc->queries = std::move(q);
        lc->keys = std::move(k);
        lc->values = std::move(v);
      }
      x += linear_forward(names::layer(l, "attn.W_o"), names::layer(l, "attn.b_o"), ctx, lc ? &lc->o : nullptr, rng);

      Mat h2 = layernorm_forward(names::layer(l, "ln2"), x, lc ? &lc->ln2 : nullptr);
      Mat u = linear_forward(names::layer(l, "mlp.W_up"), names::layer(l, "mlp.b_up"), h2, lc ? &lc->up : nullptr, rng);
      Mat g = u.unaryExpr([](T z) { return gelu(z); });
      if (lc) lc->pre_gelu = std::move(u);
      x += linear_forward(names::layer(l, "mlp.W_down"), names::layer(l, "mlp.b_down"), g, lc ? &lc->down : nullptr, rng);
    }
    Mat hf = layernorm_forward("ln_f", x, cache ? &cache->ln_f : nullptr);
    return linear_forward("head.W", "head.b", hf, cache ? &cache->head : nullptr, rng);
  }

  /// Row softmax; rows whose entries are all -inf become zero.
  static void softmax_rows(Mat& s) {
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
      const T mx = s.row(i).maxCoeff();
      if (!std::isfinite(mx)) {
        s.row(i).setZero();
        continue;
      }
      s.row(i) = (s.row(i).array() - mx).exp();
      s.row(i) /= s.row(i).sum();
    }
  }

  Mat layernorm_forward(const std::string& prefix, const Mat& x, LayerNormCache<T>* cache) const {
    const auto& g = params_.at(prefix + ".scale");
    const auto& b = params_.at(prefix + ".shift");
    const T eps = static_cast<T>(1e-5);
    Eigen::Matrix<T, Eigen::Dynamic, 1> mean = x.rowwise().mean();
    Mat centered = x.colwise() - mean;
    Eigen::Matrix<T, Eigen::Dynamic, 1> inv_std =
        ((centered.array().square().rowwise().sum() / static_cast<T>(x.cols())) + eps).rsqrt();
    Mat xhat = centered.array().colwise() * inv_std.array();
    Mat y = xhat.array().rowwise() * g.row(0).array();
    y.rowwise() += b.row(0);
    if (cache) {
      cache->normalized = std::move(xhat);
      cache->inv_std = std::move(inv_std);
    }
    return y;
  }

  Mat layernorm_backward(const std::string& prefix, const LayerNormCache<T>& c, const Mat& dy, Gradients<T>& grads) const {
    const auto& g = params_.at(prefix + ".scale");
    if (auto* dg = grads.find(prefix + ".scale")) dg->row(0) += dy.cwiseProduct(c.normalized).colwise().sum();
    if (auto* db = grads.find(prefix + ".shift")) db->row(0) += dy.colwise().sum();
    Mat dxhat = dy.array().rowwise() * g.row(0).array();
    const T n = static_cast<T>(dy.cols());
    Eigen::Matrix<T, Eigen::Dynamic, 1> mean_d = dxhat.rowwise().sum() / n;
    Eigen::Matrix<T, Eigen::Dynamic, 1> mean_dx = dxhat.cwiseProduct(c.normalized).rowwise().sum() / n;
    Mat dx = dxhat.colwise() - mean_d;
    dx.array() -= c.normalized.array().colwise() * mean_dx.array();
    return dx.array().colwise() * c.inv_std.array();
  }

  Mat linear_forward(const std::string& wname, const std::string& bname, const Mat& x, LinearCache<T>* cache,
                     Rng* rng) const {
    const auto& w = params_.at(wname);
    Mat y = x * w;
    y.rowwise() += params_.at(bname).row(0);
    if (adapter_ && adapter_->targets_tensor(wname)) {
      const auto& a = *adapter_->a(wname);
      const auto& b = *adapter_->b(wname);
      const double p = adapter_->config.dropout;
      Mat keep;
      Mat low;
      if (rng && p > 0.0) {
        keep.resize(x.rows(), x.cols());
        const T kept = static_cast<T>(1.0 / (1.0 - p));
        for (Eigen::Index i = 0; i < keep.size(); ++i) keep.data()[i] = rng->bernoulli(p) ? T(0) : kept;
        low = x.cwiseProduct(keep) * a.transpose();
      } else {
        low = x * a.transpose();
      }
      y.noalias() += adapter_->scaling() * (low * b.transpose());
      if (cache) {
        cache->keep = std::move(keep);
        cache->low = std::move(low);
      }
    }
    if (cache) cache->input = x;
    return y;
  }

  Mat linear_backward(const std::string& wname, const std::string& bname, const LinearCache<T>& c, const Mat& dy,
                      Gradients<T>& grads) const {
    const auto& w = params_.at(wname);
    if (auto* gw = grads.find(wname)) gw->noalias() += c.input.transpose() * dy;
    if (auto* gb = grads.find(bname)) gb->row(0) += dy.colwise().sum();
    Mat dx = dy * w.transpose();
    if (adapter_ && adapter_->targets_tensor(wname)) {
      const auto& a = *adapter_->a(wname);
      const auto& b = *adapter_->b(wname);
      const T s = adapter_->scaling();
      Mat dlow = s * (dy * b);
      if (auto* gb = grads.find(lora_b_name(wname))) gb->noalias() += s * (dy.transpose() * c.low);
      const bool dropped = c.keep.size() != 0;
      if (auto* ga = grads.find(lora_a_name(wname))) {
        if (dropped) {
          ga->noalias() += dlow.transpose() * c.input.cwiseProduct(c.keep);
        } else {
          ga->noalias() += dlow.transpose() * c.input;
        }
      }
      Mat din = dlow * a;
      if (dropped) din = din.cwiseProduct(c.keep);
      dx += din;
    }
    return dx;
  }

  ModelConfig cfg_;
  ModelParameters<T> params_;
  std::optional<LoraAdapter<T>> adapter_;
};

/// Row-wise softmax probabilities of a logit matrix, computed stably.
template <typename T>
Matrix<T> softmax(const Matrix<T>& logits) {
  Matrix<T> p(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const T mx = logits.row(i).maxCoeff();
    p.row(i) = (logits.row(i).array() - mx).exp();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

}  // namespace mdlm
