#pragma once

// Miniature transformer encoder-decoder, templated on the scalar type so the
// same code path serves f32 training and f64 finite-difference checks.
//
// Architecture: pre-norm residual blocks with RMS norms (gain only), bias-free
// projections, ReLU feed-forward, learned absolute position embeddings, and an
// embedding matrix tied between encoder input, decoder input, and the output
// projection. Input embeddings are scaled by sqrt(d_model); output logits by
// 1/sqrt(d_model), which keeps initial logits small enough that the initial
// loss sits at ln(vocab).

#include <cmath>
#include <cstdint>
#include <cstring>
#include <optional>
#include <string>
#include <type_traits>
#include <vector>

#include "d2t/common.hpp"
#include "d2t/tensor.hpp"
#include "d2t/tokenizer.hpp"

namespace d2t {

enum class SizeTag { Tiny, Small, Base, Custom };

inline const char* size_tag_name(SizeTag t) {
  switch (t) {
    case SizeTag::Tiny: return "tiny";
    case SizeTag::Small: return "small";
    case SizeTag::Base: return "base";
    case SizeTag::Custom: return "custom";
  }
  return "?";
}

inline SizeTag size_tag_from_string(std::string_view s) {
  if (s == "tiny") return SizeTag::Tiny;
  if (s == "small") return SizeTag::Small;
  if (s == "base") return SizeTag::Base;
  if (s == "custom") return SizeTag::Custom;
  throw ValidationError("unknown model size '" + std::string(s) +
                        "' (expected tiny, small, or base)");
}

struct ModelConfig {
  int layers = 2;  // per stack
  int d_model = 64;
  int n_heads = 4;
  int d_ff = 256;
  int vocab_size = 0;
  int max_len = 128;
  float dropout_rate = 0.0f;
  SizeTag size_tag = SizeTag::Custom;

  void validate() const {
    if (layers < 1) throw ValidationError("model config: layers must be >= 1");
    if (d_model < 1 || n_heads < 1 || d_ff < 1) {
      throw ValidationError("model config: dimensions must be positive");
    }
    if (d_model % n_heads != 0) {
      throw ValidationError("model config: d_model " + std::to_string(d_model) +
                            " not divisible by n_heads " + std::to_string(n_heads));
    }
    if (vocab_size < kNumReserved) {
      throw ValidationError("model config: vocab_size below reserved token count");
    }
    if (max_len < 2) throw ValidationError("model config: max_len must be >= 2");
    if (dropout_rate < 0.0f || dropout_rate >= 1.0f) {
      throw ValidationError("model config: dropout_rate must be in [0, 1)");
    }
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Desk-scale ladder standing in for the Small -> 3B family.
inline ModelConfig make_model_config(SizeTag tag, int vocab_size, int max_len = 128) {
  ModelConfig cfg;
  cfg.size_tag = tag;
  cfg.vocab_size = vocab_size;
  cfg.max_len = max_len;
  switch (tag) {
    case SizeTag::Tiny:
      cfg.layers = 2; cfg.d_model = 64; cfg.n_heads = 4; cfg.d_ff = 256;
      break;
    case SizeTag::Small:
      cfg.layers = 4; cfg.d_model = 128; cfg.n_heads = 8; cfg.d_ff = 512;
      break;
    case SizeTag::Base:
      cfg.layers = 6; cfg.d_model = 256; cfg.n_heads = 8; cfg.d_ff = 1024;
      break;
    case SizeTag::Custom:
      break;
  }
  cfg.validate();
  return cfg;
}

// ----------------------------- parameters -----------------------------

template <class S>
struct AttentionParams {
  Mat<S> wq, wk, wv, wo;  // all d_model x d_model
};

template <class S>
struct EncLayerParams {
  Vec<S> ln1, ln2;
  AttentionParams<S> attn;
  Mat<S> w1, w2;  // d_model x d_ff, d_ff x d_model
};

template <class S>
struct DecLayerParams {
  Vec<S> ln1, ln2, ln3;
  AttentionParams<S> self_attn, cross_attn;
  Mat<S> w1, w2;
};

template <class S>
struct Params {
  Mat<S> embedding;          // vocab x d_model, tied input/output
  Mat<S> enc_pos, dec_pos;   // max_len x d_model
  std::vector<EncLayerParams<S>> enc;
  std::vector<DecLayerParams<S>> dec;
  Vec<S> enc_final_ln, dec_final_ln;
};

// Enumerates every tensor in a fixed order; the order defines init draws,
// the checkpoint manifest, and gradient reductions.
template <class S, class F>
void visit_params(Params<S>& p, F&& f) {
  f("embedding", p.embedding);
  f("enc_pos", p.enc_pos);
  f("dec_pos", p.dec_pos);
  for (size_t i = 0; i < p.enc.size(); ++i) {
    const std::string pre = "enc." + std::to_string(i) + ".";
    auto& layer = p.enc[i];
    f(pre + "ln1", layer.ln1);
    f(pre + "attn.wq", layer.attn.wq);
    f(pre + "attn.wk", layer.attn.wk);
    f(pre + "attn.wv", layer.attn.wv);
    f(pre + "attn.wo", layer.attn.wo);
    f(pre + "ln2", layer.ln2);
    f(pre + "w1", layer.w1);
    f(pre + "w2", layer.w2);
  }
  f("enc_final_ln", p.enc_final_ln);
  for (size_t i = 0; i < p.dec.size(); ++i) {
    const std::string pre = "dec." + std::to_string(i) + ".";
    auto& layer = p.dec[i];
    f(pre + "ln1", layer.ln1);
    f(pre + "self.wq", layer.self_attn.wq);
    f(pre + "self.wk", layer.self_attn.wk);
    f(pre + "self.wv", layer.self_attn.wv);
    f(pre + "self.wo", layer.self_attn.wo);
    f(pre + "ln2", layer.ln2);
    f(pre + "cross.wq", layer.cross_attn.wq);
    f(pre + "cross.wk", layer.cross_attn.wk);
    f(pre + "cross.wv", layer.cross_attn.wv);
    f(pre + "cross.wo", layer.cross_attn.wo);
    f(pre + "ln3", layer.ln3);
    f(pre + "w1", layer.w1);
    f(pre + "w2", layer.w2);
  }
  f("dec_final_ln", p.dec_final_ln);
}

template <class S, class F>
void visit_params(const Params<S>& p, F&& f) {
  visit_params(const_cast<Params<S>&>(p), [&](const std::string& name, auto& m) {
    f(name, static_cast<const std::remove_reference_t<decltype(m)>&>(m));
  });
}

namespace detail {

template <class S>
void shape_params(Params<S>& p, const ModelConfig& cfg) {
  const int d = cfg.d_model;
  p.embedding.resize(cfg.vocab_size, d);
  p.enc_pos.resize(cfg.max_len, d);
  p.dec_pos.resize(cfg.max_len, d);
  p.enc.resize(cfg.layers);
  p.dec.resize(cfg.layers);
  for (auto& l : p.enc) {
    l.ln1.resize(d); l.ln2.resize(d);
    l.attn.wq.resize(d, d); l.attn.wk.resize(d, d);
    l.attn.wv.resize(d, d); l.attn.wo.resize(d, d);
    l.w1.resize(d, cfg.d_ff); l.w2.resize(cfg.d_ff, d);
  }
  for (auto& l : p.dec) {
    l.ln1.resize(d); l.ln2.resize(d); l.ln3.resize(d);
    l.self_attn.wq.resize(d, d); l.self_attn.wk.resize(d, d);
    l.self_attn.wv.resize(d, d); l.self_attn.wo.resize(d, d);
    l.cross_attn.wq.resize(d, d); l.cross_attn.wk.resize(d, d);
    l.cross_attn.wv.resize(d, d); l.cross_attn.wo.resize(d, d);
    l.w1.resize(d, cfg.d_ff); l.w2.resize(cfg.d_ff, d);
  }
  p.enc_final_ln.resize(d);
  p.dec_final_ln.resize(d);
}

}  // namespace detail

template <class S>
Params<S> zeros_like_params(const ModelConfig& cfg) {
  Params<S> p;
  detail::shape_params(p, cfg);
  visit_params(p, [](const std::string&, auto& m) { m.setZero(); });
  return p;
}

// Truncated-normal init with std 1/sqrt(fan_in); norm gains start at 1.
// Deterministic for a given (cfg, seed).
template <class S = float>
Params<S> init_params(const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  Params<S> p;
  detail::shape_params(p, cfg);
  Rng rng(Rng::mix(seed, 0x494E4954ull));  // "INIT"
  visit_params(p, [&](const std::string& name, auto& m) {
    const bool is_gain = name.find("ln") != std::string::npos;
    if (is_gain) {
      m.setOnes();
      return;
    }
    // fan_in: embedding and position tables feed d_model-wide activations;
    // projection matrices consume their row dimension.
    double fan_in = static_cast<double>(m.rows());
    if (name == "embedding" || name == "enc_pos" || name == "dec_pos") {
      fan_in = static_cast<double>(cfg.d_model);
    }
    const double stddev = 1.0 / std::sqrt(fan_in);
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        m(r, c) = static_cast<S>(rng.truncated_normal(stddev));
      }
    }
  });
  return p;
}

template <class S>
int64_t param_count(const Params<S>& p) {
  int64_t n = 0;
  visit_params(p, [&](const std::string&, const auto& m) { n += m.size(); });
  return n;
}

template <class S>
double global_grad_norm(const Params<S>& g) {
  double sum = 0.0;
  visit_params(g, [&](const std::string&, const auto& m) {
    sum += static_cast<double>(m.template cast<double>().squaredNorm());
  });
  return std::sqrt(sum);
}

namespace detail {

template <class S>
std::vector<std::pair<S*, int64_t>> tensor_list(Params<S>& p) {
  std::vector<std::pair<S*, int64_t>> v;
  visit_params(p, [&](const std::string&, auto& m) { v.emplace_back(m.data(), m.size()); });
  return v;
}

}  // namespace detail

// SGD update with gradient clipping at a global norm.
template <class S>
void sgd_step(Params<S>& p, const Params<S>& g, double lr, double clip_norm = 1.0) {
  double scale = 1.0;
  const double norm = global_grad_norm(g);
  if (clip_norm > 0.0 && norm > clip_norm) scale = clip_norm / norm;
  const S step = static_cast<S>(lr * scale);
  auto pt = detail::tensor_list(p);
  auto gt = detail::tensor_list(const_cast<Params<S>&>(g));
  for (size_t i = 0; i < pt.size(); ++i) {
    for (int64_t j = 0; j < pt[i].second; ++j) pt[i].first[j] -= step * gt[i].first[j];
  }
}

template <class S>
bool params_bitwise_equal(const Params<S>& a, const Params<S>& b) {
  auto at = detail::tensor_list(const_cast<Params<S>&>(a));
  auto bt = detail::tensor_list(const_cast<Params<S>&>(b));
  if (at.size() != bt.size()) return false;
  for (size_t i = 0; i < at.size(); ++i) {
    if (at[i].second != bt[i].second) return false;
    if (std::memcmp(at[i].first, bt[i].first,
                    static_cast<size_t>(at[i].second) * sizeof(S)) != 0) {
      return false;
    }
  }
  return true;
}

// ----------------------------- batches -----------------------------

struct Batch {
  int batch_size = 0;
  int src_len = 0;
  int tgt_len = 0;
  std::vector<int> src;        // batch_size * src_len, PAD padded
  std::vector<int> dec_in;     // batch_size * tgt_len, shifted right from PAD
  std::vector<int> target;     // batch_size * tgt_len, EOS terminated
  std::vector<uint8_t> loss_mask;  // 1 on real target positions
};

// Builds a padded batch. Targets arrive without EOS; it is appended here and
// the decoder input is the right-shift with PAD as the start symbol.
inline Batch make_batch(const std::vector<std::vector<int>>& sources,
                        const std::vector<std::vector<int>>& targets, const ModelConfig& cfg) {
  if (sources.empty() || sources.size() != targets.size()) {
    throw ValidationError("make_batch: sources/targets must be non-empty and aligned");
  }
  Batch b;
  b.batch_size = static_cast<int>(sources.size());
  for (size_t i = 0; i < sources.size(); ++i) {
    if (sources[i].empty()) throw ValidationError("make_batch: empty source sequence");
    if (static_cast<int>(sources[i].size()) > cfg.max_len) {
      throw ValidationError("make_batch: source length exceeds max_len");
    }
    if (static_cast<int>(targets[i].size()) + 1 > cfg.max_len) {
      throw ValidationError("make_batch: target length exceeds max_len");
    }
    b.src_len = std::max(b.src_len, static_cast<int>(sources[i].size()));
    b.tgt_len = std::max(b.tgt_len, static_cast<int>(targets[i].size()) + 1);
  }
  b.src.assign(static_cast<size_t>(b.batch_size) * b.src_len, kPadId);
  b.dec_in.assign(static_cast<size_t>(b.batch_size) * b.tgt_len, kPadId);
  b.target.assign(static_cast<size_t>(b.batch_size) * b.tgt_len, kPadId);
  b.loss_mask.assign(static_cast<size_t>(b.batch_size) * b.tgt_len, 0);
  for (int i = 0; i < b.batch_size; ++i) {
    const auto& s = sources[static_cast<size_t>(i)];
    const auto& t = targets[static_cast<size_t>(i)];
    for (size_t j = 0; j < s.size(); ++j) b.src[static_cast<size_t>(i) * b.src_len + j] = s[j];
    // dec_in = [PAD, t...]; target = [t..., EOS]
    for (size_t j = 0; j < t.size(); ++j) {
      b.dec_in[static_cast<size_t>(i) * b.tgt_len + j + 1] = t[j];
      b.target[static_cast<size_t>(i) * b.tgt_len + j] = t[j];
    }
    b.target[static_cast<size_t>(i) * b.tgt_len + t.size()] = kEosId;
    for (size_t j = 0; j <= t.size(); ++j) {
      b.loss_mask[static_cast<size_t>(i) * b.tgt_len + j] = 1;
    }
  }
  return b;
}

// ----------------------------- forward / backward -----------------------------

namespace detail {

inline constexpr double kRmsEps = 1e-6;
inline constexpr double kMaskNegative = -1e30;

template <class S>
struct RmsCache {
  Mat<S> out;   // normalized rows (before gain they are x*inv; out includes gain)
  Vec<S> inv;   // per-row 1/rms
};

// y_r = x_r * inv_r (*) gain
template <class S>
RmsCache<S> rms_norm(const Mat<S>& x, const Vec<S>& gain) {
  RmsCache<S> c;
  const auto d = static_cast<double>(x.cols());
  c.inv.resize(x.rows());
  c.out.resize(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double ms = static_cast<double>(x.row(r).template cast<double>().squaredNorm()) / d;
    const S inv = static_cast<S>(1.0 / std::sqrt(ms + kRmsEps));
    c.inv(r) = inv;
    c.out.row(r) = (x.row(r) * inv).cwiseProduct(gain.transpose());
  }
  return c;
}

// Accumulates dx and dgain for y = (x * inv) (*) gain.
template <class S>
void rms_norm_backward(const Mat<S>& x, const Vec<S>& gain, const RmsCache<S>& c,
                       const Mat<S>& dy, Mat<S>& dx_accum, Vec<S>& dgain_accum) {
  const auto d = static_cast<S>(x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const S inv = c.inv(r);
    // dgain += dy ⊙ x*inv
    dgain_accum += (dy.row(r).cwiseProduct(x.row(r)) * inv).transpose();
    const Eigen::Matrix<S, 1, Eigen::Dynamic> gdy =
        dy.row(r).cwiseProduct(gain.transpose());  // g ⊙ dy
    const S dot = gdy.cwiseProduct(x.row(r)).sum();
    dx_accum.row(r) += gdy * inv - x.row(r) * (inv * inv * inv * dot / d);
  }
}

template <class S>
struct AttnCache {
  Mat<S> norm_in;            // rows fed to q/k/v projections (query side)
  Mat<S> q, k, v;            // projected, full width
  std::vector<Mat<S>> probs;  // per (b*heads): Lq x Lk softmax
  Mat<S> ctx;                // concatenated head outputs, input to wo
};

// Scaled dot-product attention over a batch. `kv_in` supplies keys/values
// (equal to `norm_in` for self-attention, encoder memory for cross).
// key_valid masks key columns; causal additionally limits keys to j <= i.
template <class S>
AttnCache<S> attention_forward(const AttentionParams<S>& w, const Mat<S>& norm_in,
                               const Mat<S>& kv_in, int batch, int lq, int lk, int heads,
                               const std::vector<uint8_t>& key_valid, bool causal,
                               Mat<S>& out) {
  const int d = static_cast<int>(norm_in.cols());
  const int dh = d / heads;
  const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));

  AttnCache<S> c;
  c.norm_in = norm_in;
  c.q.noalias() = norm_in * w.wq;
  c.k.noalias() = kv_in * w.wk;
  c.v.noalias() = kv_in * w.wv;
  c.ctx.resize(static_cast<Eigen::Index>(batch) * lq, d);
  c.probs.resize(static_cast<size_t>(batch) * heads);

  for (int b = 0; b < batch; ++b) {
    for (int h = 0; h < heads; ++h) {
      const auto qh = c.q.middleRows(static_cast<Eigen::Index>(b) * lq, lq)
                          .middleCols(static_cast<Eigen::Index>(h) * dh, dh);
      const auto kh = c.k.middleRows(static_cast<Eigen::Index>(b) * lk, lk)
                          .middleCols(static_cast<Eigen::Index>(h) * dh, dh);
      const auto vh = c.v.middleRows(static_cast<Eigen::Index>(b) * lk, lk)
                          .middleCols(static_cast<Eigen::Index>(h) * dh, dh);
      Mat<S> scores(lq, lk);
      scores.noalias() = qh * kh.transpose();
      scores *= scale;
      for (int i = 0; i < lq; ++i) {
        for (int j = 0; j < lk; ++j) {
          const bool masked = (key_valid.empty() ? false
                                                 : key_valid[static_cast<size_t>(b) * lk + j] == 0) ||
                              (causal && j > i);
          if (masked) scores(i, j) = static_cast<S>(kMaskNegative);
        }
      }
      // row softmax
      for (int i = 0; i < lq; ++i) {
        const S row_max = scores.row(i).maxCoeff();
        Eigen::Array<S, 1, Eigen::Dynamic> e =
            (scores.row(i).array() - row_max).exp();
        const S denom = e.sum();
        scores.row(i) = (e / denom).matrix();
      }
      Mat<S>& probs = c.probs[static_cast<size_t>(b) * heads + h];
      probs = std::move(scores);
      c.ctx.middleRows(static_cast<Eigen::Index>(b) * lq, lq)
          .middleCols(static_cast<Eigen::Index>(h) * dh, dh)
          .noalias() = probs * vh;
    }
  }
  out.noalias() = c.ctx * w.wo;
  return c;
}

// Backward for attention_forward. Accumulates parameter grads into `gw`,
// query-side input grads into `dnorm_in`, and key/value-side input grads
// into `dkv_in` (same matrix as dnorm_in for self-attention).
template <class S>
void attention_backward(const AttentionParams<S>& w, AttentionParams<S>& gw,
                        const AttnCache<S>& c, const Mat<S>& kv_in, int batch, int lq, int lk,
                        int heads, const Mat<S>& dout, Mat<S>& dnorm_in, Mat<S>& dkv_in) {
  const int d = static_cast<int>(c.norm_in.cols());
  const int dh = d / heads;
  const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));

  gw.wo.noalias() += c.ctx.transpose() * dout;
  Mat<S> dctx;
  dctx.noalias() = dout * w.wo.transpose();

  Mat<S> dq = Mat<S>::Zero(c.q.rows(), c.q.cols());
  Mat<S> dk = Mat<S>::Zero(c.k.rows(), c.k.cols());
  Mat<S> dv = Mat<S>::Zero(c.v.rows(), c.v.cols());

  for (int b = 0; b < batch; ++b) {
    for (int h = 0; h < heads; ++h) {
      const Mat<S>& probs = c.probs[static_cast<size_t>(b) * heads + h];
      const auto qh = c.q.middleRows(static_cast<Eigen::Index>(b) * lq, lq)
                          .middleCols(static_cast<Eigen::Index>(h) * dh, dh);
      const auto kh = c.k.middleRows(static_cast<Eigen::Index>(b) * lk, lk)
                          .middleCols(static_cast<Eigen::Index>(h) * dh, dh);
      const auto vh = c.v.middleRows(static_cast<Eigen::Index>(b) * lk, lk)
                          .middleCols(static_cast<Eigen::Index>(h) * dh, dh);
      const auto dctx_h = dctx.middleRows(static_cast<Eigen::Index>(b) * lq, lq)
                              .middleCols(static_cast<Eigen::Index>(h) * dh, dh);

      dv.middleRows(static_cast<Eigen::Index>(b) * lk, lk)
          .middleCols(static_cast<Eigen::Index>(h) * dh, dh)
          .noalias() += probs.transpose() * dctx_h;

      Mat<S> dprobs;
      dprobs.noalias() = dctx_h * vh.transpose();
      // softmax backward: ds = p ⊙ (dp - rowsum(dp ⊙ p))
      Mat<S> dscores(lq, lk);
      for (int i = 0; i < lq; ++i) {
        const S dot = dprobs.row(i).cwiseProduct(probs.row(i)).sum();
        dscores.row(i) =
            probs.row(i).cwiseProduct(dprobs.row(i) - Eigen::Matrix<S, 1, Eigen::Dynamic>::
                                                          Constant(lk, dot));
      }
      dq.middleRows(static_cast<Eigen::Index>(b) * lq, lq)
          .middleCols(static_cast<Eigen::Index>(h) * dh, dh)
          .noalias() += dscores * kh * scale;
      dk.middleRows(static_cast<Eigen::Index>(b) * lk, lk)
          .middleCols(static_cast<Eigen::Index>(h) * dh, dh)
          .noalias() += dscores.transpose() * qh * scale;
    }
  }

  gw.wq.noalias() += c.norm_in.transpose() * dq;
  gw.wk.noalias() += kv_in.transpose() * dk;
  gw.wv.noalias() += kv_in.transpose() * dv;
  dnorm_in.noalias() += dq * w.wq.transpose();
  dkv_in.noalias() += dk * w.wk.transpose();
  dkv_in.noalias() += dv * w.wv.transpose();
}

}  // namespace detail

template <class S>
struct ForwardResult {
  S loss = S(0);
  int64_t masked_positions = 0;
  std::optional<Params<S>> grads;
};

// Runs the full encoder-decoder on a batch, returning the mean cross-entropy
// over unmasked target positions, with gradients for every parameter when
// `compute_grads` is set. `label_smoothing` mixes the one-hot target with a
// uniform distribution (0 = plain cross-entropy). Throws InternalError naming
// the offending tensor when the loss turns non-finite.
template <class S>
ForwardResult<S> forward_loss(const Params<S>& p, const ModelConfig& cfg, const Batch& batch,
                              bool compute_grads = true, double label_smoothing = 0.0) {
  using detail::AttnCache;
  using detail::RmsCache;

  const int B = batch.batch_size;
  const int Ls = batch.src_len;
  const int Lt = batch.tgt_len;
  const int d = cfg.d_model;
  const int H = cfg.n_heads;
  const S emb_scale = static_cast<S>(std::sqrt(static_cast<double>(d)));
  const S out_scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(d)));

  if (Ls > cfg.max_len || Lt > cfg.max_len) {
    throw ValidationError("forward_loss: batch sequence length exceeds max_len");
  }

  std::vector<uint8_t> src_valid(static_cast<size_t>(B) * Ls);
  for (size_t i = 0; i < src_valid.size(); ++i) src_valid[i] = batch.src[i] != kPadId ? 1 : 0;

  // ---- encoder ----
  Mat<S> x(static_cast<Eigen::Index>(B) * Ls, d);
  for (int b = 0; b < B; ++b) {
    for (int t = 0; t < Ls; ++t) {
      const int id = batch.src[static_cast<size_t>(b) * Ls + t];
      x.row(static_cast<Eigen::Index>(b) * Ls + t) =
          p.embedding.row(id) * emb_scale + p.enc_pos.row(t);
    }
  }

  struct EncLayerCache {
    Mat<S> x_in;
    RmsCache<S> n1;
    AttnCache<S> attn;
    Mat<S> x_mid;
    RmsCache<S> n2;
    Mat<S> hidden;
  };
  std::vector<EncLayerCache> enc_cache(static_cast<size_t>(cfg.layers));

  for (int l = 0; l < cfg.layers; ++l) {
    auto& c = enc_cache[static_cast<size_t>(l)];
    const auto& w = p.enc[static_cast<size_t>(l)];
    c.x_in = x;
    c.n1 = detail::rms_norm(c.x_in, w.ln1);
    Mat<S> attn_out;
    c.attn = detail::attention_forward(w.attn, c.n1.out, c.n1.out, B, Ls, Ls, H, src_valid,
                                       /*causal=*/false, attn_out);
    c.x_mid = c.x_in + attn_out;
    c.n2 = detail::rms_norm(c.x_mid, w.ln2);
    c.hidden.noalias() = (c.n2.out * w.w1).cwiseMax(S(0));
    x = c.x_mid;
    x.noalias() += c.hidden * w.w2;
  }
  const Mat<S> enc_pre_final = x;
  const RmsCache<S> enc_final = detail::rms_norm(enc_pre_final, p.enc_final_ln);
  const Mat<S>& memory = enc_final.out;

  // ---- decoder ----
  Mat<S> y(static_cast<Eigen::Index>(B) * Lt, d);
  for (int b = 0; b < B; ++b) {
    for (int t = 0; t < Lt; ++t) {
      const int id = batch.dec_in[static_cast<size_t>(b) * Lt + t];
      y.row(static_cast<Eigen::Index>(b) * Lt + t) =
          p.embedding.row(id) * emb_scale + p.dec_pos.row(t);
    }
  }

  struct DecLayerCache {
    Mat<S> x_in;
    RmsCache<S> n1;
    AttnCache<S> self_attn;
    Mat<S> x_mid1;
    RmsCache<S> n2;
    AttnCache<S> cross_attn;
    Mat<S> x_mid2;
    RmsCache<S> n3;
    Mat<S> hidden;
  };
  std::vector<DecLayerCache> dec_cache(static_cast<size_t>(cfg.layers));
  const std::vector<uint8_t> no_mask;

  for (int l = 0; l < cfg.layers; ++l) {
    auto& c = dec_cache[static_cast<size_t>(l)];
    const auto& w = p.dec[static_cast<size_t>(l)];
    c.x_in = y;
    c.n1 = detail::rms_norm(c.x_in, w.ln1);
    Mat<S> self_out;
    c.self_attn = detail::attention_forward(w.self_attn, c.n1.out, c.n1.out, B, Lt, Lt, H,
                                            no_mask, /*causal=*/true, self_out);
    c.x_mid1 = c.x_in + self_out;
    c.n2 = detail::rms_norm(c.x_mid1, w.ln2);
    Mat<S> cross_out;
    c.cross_attn = detail::attention_forward(w.cross_attn, c.n2.out, memory, B, Lt, Ls, H,
                                             src_valid, /*causal=*/false, cross_out);
    c.x_mid2 = c.x_mid1 + cross_out;
    c.n3 = detail::rms_norm(c.x_mid2, w.ln3);
    c.hidden.noalias() = (c.n3.out * w.w1).cwiseMax(S(0));
    y = c.x_mid2;
    y.noalias() += c.hidden * w.w2;
  }
  const Mat<S> dec_pre_final = y;
  const RmsCache<S> dec_final = detail::rms_norm(dec_pre_final, p.dec_final_ln);

  // ---- loss ----
  Mat<S> logits;
  logits.noalias() = dec_final.out * p.embedding.transpose() * out_scale;

  int64_t n_mask = 0;
  for (uint8_t m : batch.loss_mask) n_mask += m;
  if (n_mask == 0) throw ValidationError("forward_loss: loss mask is empty");

  if (label_smoothing < 0.0 || label_smoothing >= 1.0) {
    throw ValidationError("forward_loss: label_smoothing must be in [0, 1)");
  }
  const double eps = label_smoothing;
  const double uniform_w = eps / static_cast<double>(cfg.vocab_size);

  Mat<S> probs(logits.rows(), logits.cols());
  double loss_sum = 0.0;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const S row_max = logits.row(r).maxCoeff();
    Eigen::Array<S, 1, Eigen::Dynamic> e = (logits.row(r).array() - row_max).exp();
    const S denom = e.sum();
    probs.row(r) = (e / denom).matrix();
    if (batch.loss_mask[static_cast<size_t>(r)]) {
      const int tgt = batch.target[static_cast<size_t>(r)];
      const double lse = static_cast<double>(row_max) + std::log(static_cast<double>(denom));
      const double lp_target = static_cast<double>(logits(r, tgt)) - lse;
      loss_sum -= (1.0 - eps) * lp_target;
      if (eps > 0.0) {
        double lp_sum = 0.0;
        for (Eigen::Index v = 0; v < logits.cols(); ++v) {
          lp_sum += static_cast<double>(logits(r, v)) - lse;
        }
        loss_sum -= uniform_w * lp_sum;
      }
    }
  }

  ForwardResult<S> result;
  result.masked_positions = n_mask;
  result.loss = static_cast<S>(loss_sum / static_cast<double>(n_mask));
  if (!std::isfinite(static_cast<double>(result.loss))) {
    // Locate the first non-finite activation for the diagnostic.
    std::string where = "logits";
    if (!logits.allFinite()) where = "logits";
    if (!memory.allFinite()) where = "encoder output";
    if (!dec_final.out.allFinite()) where = "decoder output";
    throw InternalError("forward_loss: non-finite loss (first seen in " + where + ")");
  }
  if (!compute_grads) return result;

  // ---- backward ----
  Params<S> g = zeros_like_params<S>(cfg);

  Mat<S> dlogits = probs;
  const S inv_mask = static_cast<S>(1.0 / static_cast<double>(n_mask));
  for (Eigen::Index r = 0; r < dlogits.rows(); ++r) {
    if (batch.loss_mask[static_cast<size_t>(r)]) {
      if (eps > 0.0) dlogits.row(r).array() -= static_cast<S>(uniform_w);
      dlogits(r, batch.target[static_cast<size_t>(r)]) -= static_cast<S>(1.0 - eps);
      dlogits.row(r) *= inv_mask;
    } else {
      dlogits.row(r).setZero();
    }
  }

  Mat<S> d_dec_final_out;
  d_dec_final_out.noalias() = dlogits * p.embedding * out_scale;
  g.embedding.noalias() += dlogits.transpose() * dec_final.out * out_scale;

  Mat<S> dy = Mat<S>::Zero(static_cast<Eigen::Index>(B) * Lt, d);
  detail::rms_norm_backward(dec_pre_final, p.dec_final_ln, dec_final, d_dec_final_out, dy,
                            g.dec_final_ln);

  Mat<S> d_memory = Mat<S>::Zero(static_cast<Eigen::Index>(B) * Ls, d);

  for (int l = cfg.layers - 1; l >= 0; --l) {
    auto& c = dec_cache[static_cast<size_t>(l)];
    const auto& w = p.dec[static_cast<size_t>(l)];
    auto& gw = g.dec[static_cast<size_t>(l)];

    // feed-forward block: y = x_mid2 + relu(n3 * w1) * w2
    Mat<S> dhidden;
    dhidden.noalias() = dy * w.w2.transpose();
    dhidden = (c.hidden.array() > S(0)).template cast<S>().matrix().cwiseProduct(dhidden);
    gw.w2.noalias() += c.hidden.transpose() * dy;
    gw.w1.noalias() += c.n3.out.transpose() * dhidden;
    Mat<S> dn3;
    dn3.noalias() = dhidden * w.w1.transpose();
    Mat<S> dx_mid2 = dy;  // residual path
    detail::rms_norm_backward(c.x_mid2, w.ln3, c.n3, dn3, dx_mid2, gw.ln3);

    // cross-attention block: x_mid2 = x_mid1 + cross(n2, memory)
    Mat<S> dn2 = Mat<S>::Zero(static_cast<Eigen::Index>(B) * Lt, d);
    detail::attention_backward(w.cross_attn, gw.cross_attn, c.cross_attn, memory, B, Lt, Ls, H,
                               dx_mid2, dn2, d_memory);
    Mat<S> dx_mid1 = dx_mid2;
    detail::rms_norm_backward(c.x_mid1, w.ln2, c.n2, dn2, dx_mid1, gw.ln2);

    // self-attention block: x_mid1 = x_in + self(n1)
    Mat<S> dn1 = Mat<S>::Zero(static_cast<Eigen::Index>(B) * Lt, d);
    detail::attention_backward(w.self_attn, gw.self_attn, c.self_attn, c.n1.out, B, Lt, Lt, H,
                               dx_mid1, dn1, dn1);
    Mat<S> dx_in = dx_mid1;
    detail::rms_norm_backward(c.x_in, w.ln1, c.n1, dn1, dx_in, gw.ln1);
    dy = std::move(dx_in);
  }

  // decoder embeddings
  for (int b = 0; b < B; ++b) {
    for (int t = 0; t < Lt; ++t) {
      const int id = batch.dec_in[static_cast<size_t>(b) * Lt + t];
      g.embedding.row(id) += dy.row(static_cast<Eigen::Index>(b) * Lt + t) * emb_scale;
      g.dec_pos.row(t) += dy.row(static_cast<Eigen::Index>(b) * Lt + t);
    }
  }

  // encoder final norm
  Mat<S> dx_enc = Mat<S>::Zero(static_cast<Eigen::Index>(B) * Ls, d);
  detail::rms_norm_backward(enc_pre_final, p.enc_final_ln, enc_final, d_memory, dx_enc,
                            g.enc_final_ln);

  for (int l = cfg.layers - 1; l >= 0; --l) {
    auto& c = enc_cache[static_cast<size_t>(l)];
    const auto& w = p.enc[static_cast<size_t>(l)];
    auto& gw = g.enc[static_cast<size_t>(l)];

    Mat<S> dhidden;
    dhidden.noalias() = dx_enc * w.w2.transpose();
    dhidden = (c.hidden.array() > S(0)).template cast<S>().matrix().cwiseProduct(dhidden);
    gw.w2.noalias() += c.hidden.transpose() * dx_enc;
    gw.w1.noalias() += c.n2.out.transpose() * dhidden;
    Mat<S> dn2;
    dn2.noalias() = dhidden * w.w1.transpose();
    Mat<S> dx_mid = dx_enc;
    detail::rms_norm_backward(c.x_mid, w.ln2, c.n2, dn2, dx_mid, gw.ln2);

    Mat<S> dn1 = Mat<S>::Zero(static_cast<Eigen::Index>(B) * Ls, d);
    detail::attention_backward(w.attn, gw.attn, c.attn, c.n1.out, B, Ls, Ls, H, dx_mid, dn1,
                               dn1);
    Mat<S> dx_in = dx_mid;
    detail::rms_norm_backward(c.x_in, w.ln1, c.n1, dn1, dx_in, gw.ln1);
    dx_enc = std::move(dx_in);
  }

  for (int b = 0; b < B; ++b) {
    for (int t = 0; t < Ls; ++t) {
      const int id = batch.src[static_cast<size_t>(b) * Ls + t];
      g.embedding.row(id) += dx_enc.row(static_cast<Eigen::Index>(b) * Ls + t) * emb_scale;
      g.enc_pos.row(t) += dx_enc.row(static_cast<Eigen::Index>(b) * Ls + t);
    }
  }

  result.grads = std::move(g);
  return result;
}

}  // namespace d2t
