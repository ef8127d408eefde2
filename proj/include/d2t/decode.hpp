#pragma once

// Greedy and beam decoding over an incremental decoder session. The search
// routines are generic over the session type so tests can drive them with
// hand-set logits; TransformerSession implements the concept with cached
// keys/values for the real model.
//
// Conventions shared by both searches:
//   * max_len bounds the number of generated (non-EOS) tokens.
//   * a hypothesis finishes when EOS is generated; its score includes the
//     EOS log-probability. Output token lists never include EOS.
//   * ties break toward the lexicographically smallest id sequence (for
//     greedy: the lowest token id).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <vector>

#include "d2t/common.hpp"
#include "d2t/model.hpp"

namespace d2t {

// ----------------------------- transformer session -----------------------------

// Incremental decoder over a fixed source sequence. Construction runs the
// encoder once; each push() extends the decoder by one position, reusing
// cached self-attention keys/values. Copyable so beams can fork.
template <class S>
class TransformerSession {
 public:
  TransformerSession(const Params<S>& params, const ModelConfig& cfg,
                     const std::vector<int>& src_ids)
      : params_(&params), cfg_(&cfg) {
    cfg.validate();
    if (src_ids.empty()) throw ValidationError("decode: empty source");
    if (static_cast<int>(src_ids.size()) > cfg.max_len) {
      throw ValidationError("decode: source length exceeds max_len");
    }
    src_len_ = static_cast<int>(src_ids.size());
    encode_source(src_ids);
    layer_cache_.resize(static_cast<size_t>(cfg.layers));
    step_ = 0;
    advance(kPadId);  // decoder start symbol; yields logits for position 0
  }

  const std::vector<S>& logits() const { return logits_; }
  int steps() const { return step_; }

  void push(int token) {
    if (step_ >= cfg_->max_len) throw ValidationError("decode: exceeded max_len positions");
    advance(token);
  }

 private:
  struct LayerCache {
    Mat<S> self_k, self_v;    // grows one row per pushed position
    Mat<S> cross_k, cross_v;  // fixed, projected from encoder memory
  };

  void encode_source(const std::vector<int>& src_ids) {
    const int d = cfg_->d_model;
    const S emb_scale = static_cast<S>(std::sqrt(static_cast<double>(d)));
    Mat<S> x(src_len_, d);
    for (int t = 0; t < src_len_; ++t) {
      x.row(t) = params_->embedding.row(src_ids[static_cast<size_t>(t)]) * emb_scale +
                 params_->enc_pos.row(t);
    }
    const std::vector<uint8_t> valid(static_cast<size_t>(src_len_), 1);
    for (int l = 0; l < cfg_->layers; ++l) {
      const auto& w = params_->enc[static_cast<size_t>(l)];
      const auto n1 = detail::rms_norm(x, w.ln1);
      Mat<S> attn_out;
      detail::attention_forward(w.attn, n1.out, n1.out, 1, src_len_, src_len_, cfg_->n_heads,
                                valid, /*causal=*/false, attn_out);
      Mat<S> x_mid = x + attn_out;
      const auto n2 = detail::rms_norm(x_mid, w.ln2);
      Mat<S> hidden = (n2.out * w.w1).cwiseMax(S(0));
      x = x_mid;
      x.noalias() += hidden * w.w2;
    }
    memory_ = detail::rms_norm(x, params_->enc_final_ln).out;
  }

  // Single-row RMS norm matching the batched forward exactly.
  Eigen::Matrix<S, 1, Eigen::Dynamic> norm_row(const Eigen::Matrix<S, 1, Eigen::Dynamic>& x,
                                               const Vec<S>& gain) const {
    const double ms =
        static_cast<double>(x.template cast<double>().squaredNorm()) / x.cols();
    const S inv = static_cast<S>(1.0 / std::sqrt(ms + detail::kRmsEps));
    return (x * inv).cwiseProduct(gain.transpose());
  }

  void advance(int token) {
    const int d = cfg_->d_model;
    const int heads = cfg_->n_heads;
    const int dh = d / heads;
    const S emb_scale = static_cast<S>(std::sqrt(static_cast<double>(d)));
    const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));

    Eigen::Matrix<S, 1, Eigen::Dynamic> x =
        params_->embedding.row(token) * emb_scale + params_->dec_pos.row(step_);

    for (int l = 0; l < cfg_->layers; ++l) {
      const auto& w = params_->dec[static_cast<size_t>(l)];
      auto& cache = layer_cache_[static_cast<size_t>(l)];

      // self-attention over cached positions plus the current one
      const auto n1 = norm_row(x, w.ln1);
      Eigen::Matrix<S, 1, Eigen::Dynamic> q = n1 * w.self_attn.wq;
      Eigen::Matrix<S, 1, Eigen::Dynamic> k = n1 * w.self_attn.wk;
      Eigen::Matrix<S, 1, Eigen::Dynamic> v = n1 * w.self_attn.wv;
      cache.self_k.conservativeResize(step_ + 1, d);
      cache.self_v.conservativeResize(step_ + 1, d);
      cache.self_k.row(step_) = k;
      cache.self_v.row(step_) = v;

      Eigen::Matrix<S, 1, Eigen::Dynamic> ctx(d);
      for (int h = 0; h < heads; ++h) {
        const auto qh = q.middleCols(h * dh, dh);
        const auto kh = cache.self_k.middleCols(h * dh, dh);
        const auto vh = cache.self_v.middleCols(h * dh, dh);
        Vec<S> scores = (kh * qh.transpose()) * scale;  // (step_+1) x 1
        const S m = scores.maxCoeff();
        Eigen::Array<S, Eigen::Dynamic, 1> e = (scores.array() - m).exp();
        e /= e.sum();
        ctx.middleCols(h * dh, dh).noalias() = e.matrix().transpose() * vh;
      }
      x += ctx * w.self_attn.wo;

      // cross-attention over the encoder memory
      if (cache.cross_k.rows() == 0) {
        cache.cross_k.noalias() = memory_ * w.cross_attn.wk;
        cache.cross_v.noalias() = memory_ * w.cross_attn.wv;
      }
      const auto n2 = norm_row(x, w.ln2);
      Eigen::Matrix<S, 1, Eigen::Dynamic> qc = n2 * w.cross_attn.wq;
      Eigen::Matrix<S, 1, Eigen::Dynamic> cctx(d);
      for (int h = 0; h < heads; ++h) {
        const auto qh = qc.middleCols(h * dh, dh);
        const auto kh = cache.cross_k.middleCols(h * dh, dh);
        const auto vh = cache.cross_v.middleCols(h * dh, dh);
        Vec<S> scores = (kh * qh.transpose()) * scale;
        const S m = scores.maxCoeff();
        Eigen::Array<S, Eigen::Dynamic, 1> e = (scores.array() - m).exp();
        e /= e.sum();
        cctx.middleCols(h * dh, dh).noalias() = e.matrix().transpose() * vh;
      }
      x += cctx * w.cross_attn.wo;

      const auto n3 = norm_row(x, w.ln3);
      Eigen::Matrix<S, 1, Eigen::Dynamic> hidden = (n3 * w.w1).cwiseMax(S(0));
      x += hidden * w.w2;
    }

    const auto out = norm_row(x, params_->dec_final_ln);
    const S out_scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(d)));
    Eigen::Matrix<S, 1, Eigen::Dynamic> logits =
        out * params_->embedding.transpose() * out_scale;
    logits_.assign(logits.data(), logits.data() + logits.size());
    ++step_;
  }

  const Params<S>* params_;
  const ModelConfig* cfg_;
  int src_len_ = 0;
  int step_ = 0;
  Mat<S> memory_;
  std::vector<LayerCache> layer_cache_;
  std::vector<S> logits_;
};

// ----------------------------- search -----------------------------

namespace detail {

template <class S>
std::vector<double> log_softmax(const std::vector<S>& logits) {
  double mx = -std::numeric_limits<double>::infinity();
  for (S v : logits) mx = std::max(mx, static_cast<double>(v));
  double sum = 0.0;
  for (S v : logits) sum += std::exp(static_cast<double>(v) - mx);
  const double lse = mx + std::log(sum);
  std::vector<double> out(logits.size());
  for (size_t i = 0; i < logits.size(); ++i) out[i] = static_cast<double>(logits[i]) - lse;
  return out;
}

}  // namespace detail

// Appends the argmax token (ties -> lowest id) until EOS or max_len tokens.
template <class Session>
std::vector<int> greedy_search(Session session, int max_len) {
  std::vector<int> out;
  while (static_cast<int>(out.size()) < max_len) {
    const auto& logits = session.logits();
    int best = 0;
    for (size_t v = 1; v < logits.size(); ++v) {
      if (logits[v] > logits[best]) best = static_cast<int>(v);
    }
    if (best == kEosId) break;
    out.push_back(best);
    if (static_cast<int>(out.size()) >= max_len) break;
    session.push(best);
  }
  return out;
}

// Length-unnormalized log-probability beam search. At each step the top
// `width` candidates (over all live hypotheses and the full vocabulary) are
// kept; among them, EOS candidates retire to the finished pool and the rest
// form the next live set, so the beam shrinks as hypotheses finish. With
// width 1 this reduces exactly to greedy search. Returns the best hypothesis
// overall; an unfinished hypothesis at max_len only wins when it strictly
// dominates every finished one. Ties break toward the lexicographically
// smallest token sequence.
template <class Session>
std::vector<int> beam_search(const Session& start, int width, int max_len) {
  if (width < 1) throw ValidationError("beam_search: width must be >= 1");

  struct Hyp {
    std::vector<int> tokens;
    double score = 0.0;
    std::shared_ptr<Session> session;
  };
  const auto better = [](double sa, const std::vector<int>& ta, double sb,
                         const std::vector<int>& tb) {
    if (sa != sb) return sa > sb;
    return ta < tb;  // lexicographic
  };

  std::vector<Hyp> live;
  live.push_back({{}, 0.0, std::make_shared<Session>(start)});
  bool have_finished = false;
  std::vector<int> best_finished_tokens;
  double best_finished_score = -std::numeric_limits<double>::infinity();

  struct Cand {
    double score;
    size_t parent;
    int token;
  };

  for (int step = 0; step < max_len && !live.empty(); ++step) {
    std::vector<Cand> cands;
    std::vector<std::vector<double>> logprobs(live.size());
    for (size_t i = 0; i < live.size(); ++i) {
      logprobs[i] = detail::log_softmax(live[i].session->logits());
      for (size_t v = 0; v < logprobs[i].size(); ++v) {
        cands.push_back({live[i].score + logprobs[i][v], i, static_cast<int>(v)});
      }
    }
    const auto cand_less = [&](const Cand& a, const Cand& b) {
      if (a.score != b.score) return a.score > b.score;
      // lexicographic comparison of (parent tokens + token)
      const auto& ta = live[a.parent].tokens;
      const auto& tb = live[b.parent].tokens;
      const size_t n = std::min(ta.size(), tb.size());
      for (size_t k = 0; k < n; ++k) {
        if (ta[k] != tb[k]) return ta[k] < tb[k];
      }
      if (ta.size() != tb.size()) {
        // compare the shorter sequence's next token against the other's tail
        return ta.size() < tb.size() ? a.token <= tb[n] : ta[n] < b.token;
      }
      return a.token < b.token;
    };
    const size_t window = std::min(cands.size(), static_cast<size_t>(width));
    std::partial_sort(cands.begin(), cands.begin() + static_cast<long>(window), cands.end(),
                      cand_less);

    std::vector<Hyp> next;
    for (size_t c = 0; c < window; ++c) {
      const Cand& cand = cands[c];
      if (cand.token == kEosId) {
        std::vector<int> tokens = live[cand.parent].tokens;
        if (!have_finished ||
            better(cand.score, tokens, best_finished_score, best_finished_tokens)) {
          have_finished = true;
          best_finished_score = cand.score;
          best_finished_tokens = std::move(tokens);
        }
        continue;
      }
      Hyp h;
      h.tokens = live[cand.parent].tokens;
      h.tokens.push_back(cand.token);
      h.score = cand.score;
      if (step + 1 < max_len) {  // finished expanding otherwise; logits unneeded
        h.session = std::make_shared<Session>(*live[cand.parent].session);
        h.session->push(cand.token);
      }
      next.push_back(std::move(h));
    }
    live = std::move(next);
    // Scores only decrease with length; stop once no live hypothesis can
    // still beat the best finished one.
    if (have_finished && !live.empty() && live.front().score < best_finished_score) break;
  }

  const Hyp* best_live = nullptr;
  for (const Hyp& h : live) {
    if (best_live == nullptr ||
        better(h.score, h.tokens, best_live->score, best_live->tokens)) {
      best_live = &h;
    }
  }
  if (have_finished &&
      (best_live == nullptr || !better(best_live->score, best_live->tokens,
                                       best_finished_score, best_finished_tokens))) {
    return best_finished_tokens;
  }
  return best_live != nullptr ? best_live->tokens : std::vector<int>{};
}

// ----------------------------- model-level API -----------------------------

template <class S>
std::vector<int> greedy_decode(const Params<S>& p, const ModelConfig& cfg,
                               const std::vector<int>& src_ids, int max_len) {
  return greedy_search(TransformerSession<S>(p, cfg, src_ids), std::min(max_len, cfg.max_len));
}

template <class S>
std::vector<int> beam_decode(const Params<S>& p, const ModelConfig& cfg,
                             const std::vector<int>& src_ids, int width, int max_len) {
  return beam_search(TransformerSession<S>(p, cfg, src_ids), width,
                     std::min(max_len, cfg.max_len));
}

}  // namespace d2t
