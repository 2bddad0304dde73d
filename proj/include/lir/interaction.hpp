#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "lir/errors.hpp"
#include "lir/numerics.hpp"

namespace lir {

struct AffineLayer {
  MatD w;                  // out x in
  std::vector<double> b;   // out
};

inline void init_affine_uniform(AffineLayer& l, Rng& rng) {
  double bound = 1.0 / std::sqrt(static_cast<double>(l.w.cols));
  for (double& x : l.w.data) x = rng.uniform(-bound, bound);
  for (double& x : l.b) x = rng.uniform(-bound, bound);
}

/// Affine chain with ReLU between layers (none after the last).
inline std::vector<double> affine_chain_forward(std::span<const AffineLayer> layers,
                                                std::vector<double> x) {
  for (size_t li = 0; li < layers.size(); ++li) {
    const AffineLayer& l = layers[li];
    require(static_cast<int>(x.size()) == l.w.cols, errc::shape_mismatch,
            "layer " + std::to_string(li) + " expects input width " + std::to_string(l.w.cols));
    std::vector<double> y(l.w.rows);
    for (int r = 0; r < l.w.rows; ++r) {
      double acc = l.b[r];
      const double* wr = l.w.data.data() + static_cast<size_t>(r) * l.w.cols;
      for (int c = 0; c < l.w.cols; ++c) acc += wr[c] * x[c];
      y[r] = acc;
    }
    if (li + 1 < layers.size())
      for (double& v : y) v = v > 0.0 ? v : 0.0;
    x = std::move(y);
  }
  return x;
}

/// Per-token fusion-weight MLP for one modality. Output width is 1 per token;
/// combined with masked_softmax the weights sum to 1 over valid tokens.
struct WeightHead {
  std::vector<AffineLayer> layers;
  Modality side = Modality::text;

  int input_dim() const { return layers.empty() ? 0 : layers.front().w.cols; }

  void validate() const {
    require(!layers.empty(), errc::shape_mismatch, "weight head has no layers");
    require(layers.back().w.rows == 1, errc::shape_mismatch, "weight head must end in width 1");
    for (size_t i = 0; i + 1 < layers.size(); ++i)
      require(layers[i].w.rows == layers[i + 1].w.cols, errc::shape_mismatch,
              "weight head layer widths do not chain");
    for (const auto& l : layers)
      require(l.b.size() == static_cast<size_t>(l.w.rows), errc::shape_mismatch,
              "weight head bias width mismatch");
  }

  double token_logit(std::span<const float> token) const {
    std::vector<double> x(token.begin(), token.end());
    return affine_chain_forward(layers, std::move(x))[0];
  }

  static WeightHead zeros(Modality side, int dim, int depth = 2, int hidden = -1) {
    if (hidden <= 0) hidden = dim;
    WeightHead h;
    h.side = side;
    int in = dim;
    for (int i = 0; i < depth; ++i) {
      int out = (i + 1 == depth) ? 1 : hidden;
      h.layers.push_back({MatD(out, in), std::vector<double>(out, 0.0)});
      in = out;
    }
    return h;
  }

  static WeightHead random_init(Modality side, int dim, uint64_t seed, int depth = 2,
                                int hidden = -1) {
    WeightHead h = zeros(side, dim, depth, hidden);
    Rng rng(seed);
    for (auto& l : h.layers) init_affine_uniform(l, rng);
    return h;
  }
};

/// Softmax fusion weights for one token sequence: nonnegative, zero at masked
/// positions, summing to 1 over valid tokens.
inline std::vector<double> token_weights(const TokenMatrix& m, const WeightHead& head) {
  m.validate();
  head.validate();
  require(head.side == m.modality, errc::shape_mismatch,
          std::string("weight head side is ") + modality_name(head.side) + ", input is " +
              modality_name(m.modality));
  require(head.input_dim() == m.dim(), errc::shape_mismatch, "weight head width != token dim");
  std::vector<double> logits(m.n());
  for (int i = 0; i < m.n(); ++i) logits[i] = head.token_logit(m.tokens.row(i));
  return masked_softmax(logits, m.mask);
}

/// Multi-level single-vector pairs with normalized fusion weights.
struct HiLevels {
  struct Level {
    std::vector<double> text;
    std::vector<double> video;
  };
  std::vector<Level> levels;
  std::vector<double> weights;

  void validate() const {
    require(!levels.empty(), errc::shape_mismatch, "need at least one level");
    require(weights.size() == levels.size(), errc::shape_mismatch, "level/weight count mismatch");
    double sum = 0.0;
    for (double w : weights) {
      require(w >= 0.0, errc::config_error, "level weights must be nonnegative");
      sum += w;
    }
    require(std::abs(sum - 1.0) <= 1e-9, errc::config_error, "level weights must sum to 1");
  }
};

namespace detail {

inline double cosine(std::span<const double> a, std::span<const double> b, errc on_zero) {
  require(a.size() == b.size(), errc::shape_mismatch, "vector width mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  na = std::sqrt(na);
  nb = std::sqrt(nb);
  require(na > kZeroNormEps && nb > kZeroNormEps, on_zero, "zero vector in cosine");
  return dot / (na * nb);
}

inline std::vector<double> masked_mean_rows(const TokenMatrix& m) {
  std::vector<double> mean(m.dim(), 0.0);
  int count = 0;
  for (int i = 0; i < m.n(); ++i) {
    if (!m.mask[i]) continue;
    auto row = m.tokens.row(i);
    for (int c = 0; c < m.dim(); ++c) mean[c] += row[c];
    ++count;
  }
  require(count > 0, errc::all_masked, "no valid rows to pool");
  for (double& v : mean) v /= count;
  return mean;
}

}  // namespace detail

/// Global-vector dot product: cosine between the text global row (first valid
/// token) and the mask-aware mean of the video tokens.
inline double score_dp(const TokenMatrix& t, const TokenMatrix& v) {
  t.validate();
  v.validate();
  require(t.dim() == v.dim(), errc::shape_mismatch, "text/video dims differ");
  auto g = t.tokens.row(t.first_valid());
  std::vector<double> tg(g.begin(), g.end());
  std::vector<double> vm = detail::masked_mean_rows(v);
  return detail::cosine(tg, vm, errc::zero_norm_row);
}

/// Weighted sum of per-level cosines.
inline double score_hi(const HiLevels& levels) {
  levels.validate();
  double score = 0.0;
  for (size_t s = 0; s < levels.levels.size(); ++s)
    score += levels.weights[s] *
             detail::cosine(levels.levels[s].text, levels.levels[s].video, errc::degenerate_level);
  return score;
}

/// Scalar similarity network over the concatenated global vectors.
/// Layer widths: 2D -> D -> ... -> D -> 1, ReLU between layers.
struct MlpScorerParams {
  std::vector<AffineLayer> layers;

  void validate(int dim) const {
    require(layers.size() >= 2, errc::shape_mismatch, "mlp scorer needs at least 2 layers");
    require(layers.front().w.cols == 2 * dim, errc::shape_mismatch,
            "mlp scorer input width must be 2D");
    require(layers.back().w.rows == 1, errc::shape_mismatch, "mlp scorer must end in width 1");
    for (size_t i = 0; i + 1 < layers.size(); ++i)
      require(layers[i].w.rows == layers[i + 1].w.cols, errc::shape_mismatch,
              "mlp scorer layer widths do not chain");
  }

  static MlpScorerParams random_init(int dim, int depth, uint64_t seed) {
    MlpScorerParams p;
    Rng rng(seed);
    int in = 2 * dim;
    for (int i = 0; i < depth; ++i) {
      int out = (i + 1 == depth) ? 1 : dim;
      AffineLayer l{MatD(out, in), std::vector<double>(out, 0.0)};
      init_affine_uniform(l, rng);
      p.layers.push_back(std::move(l));
      in = out;
    }
    return p;
  }
};

inline double score_mlp(std::span<const double> t_global, std::span<const double> v_mean,
                        const MlpScorerParams& p) {
  require(t_global.size() == v_mean.size(), errc::shape_mismatch, "global vector widths differ");
  p.validate(static_cast<int>(t_global.size()));
  std::vector<double> x;
  x.reserve(t_global.size() + v_mean.size());
  x.insert(x.end(), t_global.begin(), t_global.end());
  x.insert(x.end(), v_mean.begin(), v_mean.end());
  return affine_chain_forward(p.layers, std::move(x))[0];
}

/// Cross-attention scorer: the token rows of both modalities are concatenated
/// and run through L multi-head attention blocks (no positional terms), then
/// the valid output rows are mean-pooled and mapped to a scalar.
struct XtiParams {
  struct Block {
    MatD wq, wk, wv, wo;  // each D x D
  };
  std::vector<Block> blocks;
  int heads = 1;
  std::vector<double> score_w;
  double score_b = 0.0;

  void validate(int dim) const {
    require(!blocks.empty(), errc::shape_mismatch, "xti needs at least one block");
    require(heads >= 1 && dim % heads == 0, errc::shape_mismatch, "dim must be divisible by heads");
    for (const auto& b : blocks)
      for (const MatD* m : {&b.wq, &b.wk, &b.wv, &b.wo})
        require(m->rows == dim && m->cols == dim, errc::shape_mismatch,
                "xti projections must be D x D");
    require(static_cast<int>(score_w.size()) == dim, errc::shape_mismatch,
            "score head width mismatch");
  }

  static XtiParams random_init(int dim, int depth, int heads, uint64_t seed) {
    XtiParams p;
    p.heads = heads;
    Rng rng(seed);
    double bound = 1.0 / std::sqrt(static_cast<double>(dim));
    for (int i = 0; i < depth; ++i) {
      Block b{MatD(dim, dim), MatD(dim, dim), MatD(dim, dim), MatD(dim, dim)};
      for (MatD* m : {&b.wq, &b.wk, &b.wv, &b.wo})
        for (double& x : m->data) x = rng.uniform(-bound, bound);
      p.blocks.push_back(std::move(b));
    }
    p.score_w.resize(dim);
    for (double& x : p.score_w) x = rng.uniform(-bound, bound);
    p.score_b = rng.uniform(-bound, bound);
    return p;
  }
};

namespace detail {

inline MatD matmul(const MatD& a, const MatD& b) {
  MatD out(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i)
    for (int k = 0; k < a.cols; ++k) {
      double av = a(i, k);
      if (av == 0.0) continue;
      for (int j = 0; j < b.cols; ++j) out(i, j) += av * b(k, j);
    }
  return out;
}

inline MatD attention_block(const MatD& x, const std::vector<uint8_t>& mask,
                            const XtiParams::Block& blk, int heads) {
  const int n = x.rows, d = x.cols, dh = d / heads;
  MatD q = matmul(x, blk.wq), k = matmul(x, blk.wk), v = matmul(x, blk.wv);
  MatD concat(n, d);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<double> logits(n);
  for (int h = 0; h < heads; ++h) {
    const int off = h * dh;
    for (int i = 0; i < n; ++i) {
      if (!mask[i]) continue;  // masked rows are not queries
      for (int j = 0; j < n; ++j) {
        if (!mask[j]) {
          logits[j] = 0.0;
          continue;
        }
        double dot = 0.0;
        for (int c = 0; c < dh; ++c) dot += q(i, off + c) * k(j, off + c);
        logits[j] = dot * scale;
      }
      std::vector<double> attn = masked_softmax(logits, mask);
      for (int c = 0; c < dh; ++c) {
        double acc = 0.0;
        for (int j = 0; j < n; ++j)
          if (mask[j]) acc += attn[j] * v(j, off + c);
        concat(i, off + c) = acc;
      }
    }
  }
  return matmul(concat, blk.wo);
}

}  // namespace detail

inline double score_xti(const TokenMatrix& t, const TokenMatrix& v, const XtiParams& p) {
  t.validate();
  v.validate();
  require(t.dim() == v.dim(), errc::shape_mismatch, "text/video dims differ");
  const int d = t.dim();
  p.validate(d);

  const int n = t.n() + v.n();
  MatD x(n, d);
  std::vector<uint8_t> mask(n);
  for (int i = 0; i < t.n(); ++i) {
    mask[i] = t.mask[i];
    auto row = t.tokens.row(i);
    for (int c = 0; c < d; ++c) x(i, c) = row[c];
  }
  for (int j = 0; j < v.n(); ++j) {
    mask[t.n() + j] = v.mask[j];
    auto row = v.tokens.row(j);
    for (int c = 0; c < d; ++c) x(t.n() + j, c) = row[c];
  }

  for (const auto& blk : p.blocks) x = detail::attention_block(x, mask, blk, p.heads);

  std::vector<double> pooled(d, 0.0);
  int count = 0;
  for (int i = 0; i < n; ++i) {
    if (!mask[i]) continue;
    for (int c = 0; c < d; ++c) pooled[c] += x(i, c);
    ++count;
  }
  require(count > 0, errc::all_masked, "no valid rows to pool");
  double score = p.score_b;
  for (int c = 0; c < d; ++c) score += p.score_w[c] * pooled[c] / count;
  return score;
}

enum class TiForm { sum, mean };
enum class ScorePath { t2v, v2t, both };

/// Pairwise interaction scores for a text batch against a video batch, with
/// optional per-pair argmax assignments (lowest index wins ties).
struct ScoreMatrix {
  int bt = 0;
  int bv = 0;
  std::vector<double> scores;                    // bt * bv
  bool has_argmax = false;
  std::vector<std::vector<int32_t>> t2v_argmax;  // [a*bv+b] -> per-text-token best video index
  std::vector<std::vector<int32_t>> v2t_argmax;  // [a*bv+b] -> per-video-token best text index

  double at(int a, int b) const { return scores[static_cast<size_t>(a) * bv + b]; }
  double& at(int a, int b) { return scores[static_cast<size_t>(a) * bv + b]; }
};

namespace detail {

inline void check_uniform_dim(std::span<const TokenMatrix> batch, int dim) {
  for (const auto& m : batch) {
    m.validate();
    require(m.dim() == dim, errc::shape_mismatch, "token dim differs across batch");
  }
}

struct PairMaxima {
  std::vector<double> t2v;      // per text token: max sim over valid video tokens
  std::vector<int32_t> t2v_ix;
  std::vector<double> v2t;      // per video token: max sim over valid text tokens
  std::vector<int32_t> v2t_ix;
};

/// Max similarities for one (text, video) pair of unit-normalized matrices.
/// Masked entries are treated as -inf, so a max over the other side is always
/// taken over valid tokens only.
inline PairMaxima pair_maxima(const TokenMatrix& t, const TokenMatrix& v) {
  const int nt = t.n(), nv = v.n(), d = t.dim();
  PairMaxima pm;
  pm.t2v.assign(nt, -std::numeric_limits<double>::infinity());
  pm.t2v_ix.assign(nt, -1);
  pm.v2t.assign(nv, -std::numeric_limits<double>::infinity());
  pm.v2t_ix.assign(nv, -1);
  for (int i = 0; i < nt; ++i) {
    auto trow = t.tokens.row(i);
    for (int j = 0; j < nv; ++j) {
      if (!v.mask[j]) continue;
      auto vrow = v.tokens.row(j);
      double dot = 0.0;
      for (int c = 0; c < d; ++c) dot += static_cast<double>(trow[c]) * vrow[c];
      if (dot > pm.t2v[i]) {
        pm.t2v[i] = dot;
        pm.t2v_ix[i] = j;
      }
      if (t.mask[i] && dot > pm.v2t[j]) {
        pm.v2t[j] = dot;
        pm.v2t_ix[j] = i;
      }
    }
  }
  return pm;
}

}  // namespace detail

/// Token-wise interaction over a batch (dual t2v/v2t max-similarity paths).
/// `sum` aggregates token maxima by summation; `mean` replaces each sum with a
/// mean over the side's valid tokens so scores stay in [-1, 1].
inline ScoreMatrix score_ti_batch(std::span<const TokenMatrix> T, std::span<const TokenMatrix> V,
                                  TiForm form = TiForm::mean, bool want_argmax = true) {
  require(!T.empty() && !V.empty(), errc::shape_mismatch, "empty batch");
  const int d = T.front().dim();
  detail::check_uniform_dim(T, d);
  detail::check_uniform_dim(V, d);

  std::vector<TokenMatrix> tn(T.begin(), T.end()), vn(V.begin(), V.end());
  for (auto& m : tn) l2_normalize_rows_inplace(m);
  for (auto& m : vn) l2_normalize_rows_inplace(m);

  ScoreMatrix out;
  out.bt = static_cast<int>(T.size());
  out.bv = static_cast<int>(V.size());
  out.scores.resize(static_cast<size_t>(out.bt) * out.bv);
  out.has_argmax = want_argmax;
  if (want_argmax) {
    out.t2v_argmax.resize(out.scores.size());
    out.v2t_argmax.resize(out.scores.size());
  }

  for (int a = 0; a < out.bt; ++a) {
    for (int b = 0; b < out.bv; ++b) {
      detail::PairMaxima pm = detail::pair_maxima(tn[a], vn[b]);
      double t2v = 0.0, v2t = 0.0;
      int ct = 0, cv = 0;
      for (int i = 0; i < tn[a].n(); ++i)
        if (tn[a].mask[i]) {
          t2v += pm.t2v[i];
          ++ct;
        }
      for (int j = 0; j < vn[b].n(); ++j)
        if (vn[b].mask[j]) {
          v2t += pm.v2t[j];
          ++cv;
        }
      if (form == TiForm::mean) {
        t2v /= ct;
        v2t /= cv;
      }
      out.at(a, b) = (t2v + v2t) / 2.0;
      if (want_argmax) {
        out.t2v_argmax[static_cast<size_t>(a) * out.bv + b] = std::move(pm.t2v_ix);
        out.v2t_argmax[static_cast<size_t>(a) * out.bv + b] = std::move(pm.v2t_ix);
      }
    }
  }
  return out;
}

/// Weighted token-wise interaction. Tokens are unit-normalized first and the
/// weight heads consume the normalized rows, so weights computed offline from
/// stored (normalized) tokens match weights computed online.
inline ScoreMatrix score_path(std::span<const TokenMatrix> T, std::span<const TokenMatrix> V,
                              const WeightHead& tw, const WeightHead& vw, ScorePath path,
                              bool want_argmax = true) {
  require(!T.empty() && !V.empty(), errc::shape_mismatch, "empty batch");
  const int d = T.front().dim();
  detail::check_uniform_dim(T, d);
  detail::check_uniform_dim(V, d);

  std::vector<TokenMatrix> tn(T.begin(), T.end()), vn(V.begin(), V.end());
  for (auto& m : tn) l2_normalize_rows_inplace(m);
  for (auto& m : vn) l2_normalize_rows_inplace(m);

  std::vector<std::vector<double>> twts(tn.size()), vwts(vn.size());
  for (size_t a = 0; a < tn.size(); ++a) twts[a] = token_weights(tn[a], tw);
  for (size_t b = 0; b < vn.size(); ++b) vwts[b] = token_weights(vn[b], vw);

  ScoreMatrix out;
  out.bt = static_cast<int>(T.size());
  out.bv = static_cast<int>(V.size());
  out.scores.resize(static_cast<size_t>(out.bt) * out.bv);
  out.has_argmax = want_argmax;
  if (want_argmax) {
    out.t2v_argmax.resize(out.scores.size());
    out.v2t_argmax.resize(out.scores.size());
  }

  for (int a = 0; a < out.bt; ++a) {
    for (int b = 0; b < out.bv; ++b) {
      detail::PairMaxima pm = detail::pair_maxima(tn[a], vn[b]);
      double t2v = 0.0, v2t = 0.0;
      for (int i = 0; i < tn[a].n(); ++i)
        if (tn[a].mask[i]) t2v += twts[a][i] * pm.t2v[i];
      for (int j = 0; j < vn[b].n(); ++j)
        if (vn[b].mask[j]) v2t += vwts[b][j] * pm.v2t[j];
      double s = 0.0;
      switch (path) {
        case ScorePath::t2v: s = t2v; break;
        case ScorePath::v2t: s = v2t; break;
        case ScorePath::both: s = (t2v + v2t) / 2.0; break;
      }
      out.at(a, b) = s;
      if (want_argmax) {
        out.t2v_argmax[static_cast<size_t>(a) * out.bv + b] = std::move(pm.t2v_ix);
        out.v2t_argmax[static_cast<size_t>(a) * out.bv + b] = std::move(pm.v2t_ix);
      }
    }
  }
  return out;
}

inline ScoreMatrix score_wti_batch(std::span<const TokenMatrix> T, std::span<const TokenMatrix> V,
                                   const WeightHead& tw, const WeightHead& vw,
                                   bool want_argmax = true) {
  return score_path(T, V, tw, vw, ScorePath::both, want_argmax);
}

}  // namespace lir
