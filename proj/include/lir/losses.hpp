#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "lir/errors.hpp"
#include "lir/interaction.hpp"
#include "lir/numerics.hpp"

namespace lir {

enum class CdcrMode { none, single, sequential };

inline const char* cdcr_mode_name(CdcrMode m) noexcept {
  switch (m) {
    case CdcrMode::none: return "none";
    case CdcrMode::single: return "single";
    case CdcrMode::sequential: return "sequential";
  }
  return "none";
}

struct LossConfig {
  double logit_scale = 100.0;  // multiplicative scale applied to scores before softmax
  double alpha = 0.06;         // off-diagonal decorrelation weight
  double lambda = 0.001;       // decorrelation weight in the total loss
  CdcrMode cdcr_mode = CdcrMode::none;

  void validate() const {
    require(logit_scale > 0.0, errc::config_error, "logit_scale must be positive");
    require(alpha >= 0.0, errc::config_error, "alpha must be nonnegative");
    require(lambda >= 0.0, errc::config_error, "lambda must be nonnegative");
  }
};

/// Symmetric contrastive loss over a square score matrix whose diagonal holds
/// the positive pairs: mean negative log-softmax of the diagonal, taken over
/// rows plus over columns.
inline double info_nce(const ScoreMatrix& s, const LossConfig& cfg) {
  cfg.validate();
  require(s.bt == s.bv, errc::non_square, "info_nce needs a square score matrix");
  const int b = s.bt;
  require(b >= 2, errc::non_square, "info_nce needs B >= 2");
  const double tau = cfg.logit_scale;

  double row_term = 0.0, col_term = 0.0;
  for (int i = 0; i < b; ++i) {
    double row_max = -std::numeric_limits<double>::infinity();
    double col_max = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < b; ++j) {
      row_max = std::max(row_max, tau * s.at(i, j));
      col_max = std::max(col_max, tau * s.at(j, i));
    }
    double row_sum = 0.0, col_sum = 0.0;
    for (int j = 0; j < b; ++j) {
      row_sum += std::exp(tau * s.at(i, j) - row_max);
      col_sum += std::exp(tau * s.at(j, i) - col_max);
    }
    row_term += (row_max + std::log(row_sum)) - tau * s.at(i, i);
    col_term += (col_max + std::log(col_sum)) - tau * s.at(i, i);
  }
  return row_term / b + col_term / b;
}

/// Cross-correlation of two column-standardized matrices with equal row count.
inline MatD cross_correlation(const MatD& a_std, const MatD& b_std) {
  require(a_std.rows == b_std.rows, errc::shape_mismatch, "row count mismatch");
  MatD c(a_std.cols, b_std.cols);
  for (int r = 0; r < a_std.rows; ++r)
    for (int i = 0; i < a_std.cols; ++i) {
      double av = a_std(r, i);
      for (int j = 0; j < b_std.cols; ++j) c(i, j) += av * b_std(r, j);
    }
  for (double& x : c.data) x /= a_std.rows;
  return c;
}

/// (1 - C_ii)^2 on the diagonal plus alpha * C_ij^2 off it.
inline double cdcr_penalty(const MatD& c, double alpha) {
  require(c.rows == c.cols, errc::non_square, "correlation matrix must be square");
  double on_diag = 0.0, off_diag = 0.0;
  for (int i = 0; i < c.rows; ++i)
    for (int j = 0; j < c.cols; ++j) {
      if (i == j) {
        double d = 1.0 - c(i, j);
        on_diag += d * d;
      } else {
        off_diag += c(i, j) * c(i, j);
      }
    }
  return on_diag + alpha * off_diag;
}

/// Decorrelation penalty between two batches of single-vector representations.
inline double cdcr_single(const MatD& et, const MatD& ev, const LossConfig& cfg) {
  cfg.validate();
  require(et.rows == ev.rows && et.cols == ev.cols, errc::shape_mismatch,
          "et/ev shapes differ");
  MatD c = cross_correlation(batch_standardize_columns(et), batch_standardize_columns(ev));
  return cdcr_penalty(c, cfg.alpha);
}

/// Diagonal (positive-pair) argmax assignments extracted from a batch scorer.
struct PositiveAssignments {
  std::vector<std::vector<int32_t>> t2v;  // per item: per text token, matched video index
  std::vector<std::vector<int32_t>> v2t;  // per item: per video token, matched text index

  static PositiveAssignments from_score_matrix(const ScoreMatrix& s) {
    require(s.bt == s.bv, errc::non_square, "assignments need a square score matrix");
    require(s.has_argmax, errc::assignment_mismatch, "score matrix carries no argmax data");
    PositiveAssignments out;
    out.t2v.reserve(s.bt);
    out.v2t.reserve(s.bt);
    for (int i = 0; i < s.bt; ++i) {
      out.t2v.push_back(s.t2v_argmax[static_cast<size_t>(i) * s.bv + i]);
      out.v2t.push_back(s.v2t_argmax[static_cast<size_t>(i) * s.bv + i]);
    }
    return out;
  }
};

namespace detail {

inline void gather_matched_rows(std::span<const TokenMatrix> own,
                                std::span<const TokenMatrix> other,
                                const std::vector<std::vector<int32_t>>& match, MatD& own_rows,
                                MatD& matched_rows) {
  const int d = own.front().dim();
  int total = 0;
  for (const auto& m : own) total += m.valid_count();
  own_rows = MatD(total, d);
  matched_rows = MatD(total, d);
  int r = 0;
  for (size_t b = 0; b < own.size(); ++b) {
    require(match[b].size() == static_cast<size_t>(own[b].n()), errc::assignment_mismatch,
            "assignment length != token count");
    for (int i = 0; i < own[b].n(); ++i) {
      if (!own[b].mask[i]) continue;
      int32_t j = match[b][i];
      require(j >= 0 && j < other[b].n() && other[b].mask[j], errc::assignment_mismatch,
              "assignment references a masked or out-of-range token");
      auto orow = own[b].tokens.row(i);
      auto mrow = other[b].tokens.row(j);
      for (int c = 0; c < d; ++c) {
        own_rows(r, c) = orow[c];
        matched_rows(r, c) = mrow[c];
      }
      ++r;
    }
  }
}

}  // namespace detail

/// Decorrelation penalty over token-level representations: every valid token is
/// paired with its best-matching token's feature on the other side, the two
/// gathered batches are standardized and cross-correlated, and the averaged
/// correlation matrix is penalized as in cdcr_single. The correlation is
/// divided by the gathered row count, so a perfectly correlated gather has a
/// unit diagonal.
inline double cdcr_sequential(std::span<const TokenMatrix> T, std::span<const TokenMatrix> V,
                              const PositiveAssignments& assign, const LossConfig& cfg) {
  cfg.validate();
  require(T.size() == V.size() && !T.empty(), errc::shape_mismatch,
          "cdcr_sequential needs equal-sized batches");
  require(assign.t2v.size() == T.size() && assign.v2t.size() == V.size(),
          errc::assignment_mismatch, "assignment batch size mismatch");

  MatD text_rows, video_for_text, video_rows, text_for_video;
  detail::gather_matched_rows(T, V, assign.t2v, text_rows, video_for_text);
  detail::gather_matched_rows(V, T, assign.v2t, video_rows, text_for_video);

  MatD c1 = cross_correlation(batch_standardize_columns(text_rows),
                              batch_standardize_columns(video_for_text));
  MatD c2 = cross_correlation(batch_standardize_columns(text_for_video),
                              batch_standardize_columns(video_rows));
  MatD c(c1.rows, c1.cols);
  for (size_t i = 0; i < c.data.size(); ++i) c.data[i] = (c1.data[i] + c2.data[i]) / 2.0;
  return cdcr_penalty(c, cfg.alpha);
}

namespace detail {

/// Global vectors used by the single-vector decorrelation mode: the text
/// global row and the mask-aware video mean, matching what score_dp compares.
inline void global_vectors(std::span<const TokenMatrix> T, std::span<const TokenMatrix> V,
                           MatD& et, MatD& ev) {
  const int d = T.front().dim();
  et = MatD(static_cast<int>(T.size()), d);
  ev = MatD(static_cast<int>(V.size()), d);
  for (size_t i = 0; i < T.size(); ++i) {
    auto row = T[i].tokens.row(T[i].first_valid());
    for (int c = 0; c < d; ++c) et(static_cast<int>(i), c) = row[c];
  }
  for (size_t i = 0; i < V.size(); ++i) {
    std::vector<double> mean = masked_mean_rows(V[i]);
    for (int c = 0; c < d; ++c) ev(static_cast<int>(i), c) = mean[c];
  }
}

}  // namespace detail

/// info_nce plus lambda times the mode-selected decorrelation term.
inline double total_loss(const ScoreMatrix& s, std::span<const TokenMatrix> T,
                         std::span<const TokenMatrix> V, const PositiveAssignments* assign,
                         const LossConfig& cfg) {
  double loss = info_nce(s, cfg);
  if (cfg.cdcr_mode == CdcrMode::none || cfg.lambda == 0.0) return loss;
  if (cfg.cdcr_mode == CdcrMode::single) {
    MatD et, ev;
    detail::global_vectors(T, V, et, ev);
    return loss + cfg.lambda * cdcr_single(et, ev, cfg);
  }
  require(assign != nullptr, errc::assignment_mismatch,
          "sequential cdcr needs argmax assignments");
  return loss + cfg.lambda * cdcr_sequential(T, V, *assign, cfg);
}

/// Gradients for the two weight heads plus the loss components they were
/// computed from.
struct WtiLossReport {
  double total = 0.0;
  double info_nce = 0.0;
  double cdcr = 0.0;
  std::vector<AffineLayer> tw_grad;
  std::vector<AffineLayer> vw_grad;
};

namespace detail {

inline std::vector<AffineLayer> zero_like(const std::vector<AffineLayer>& layers) {
  std::vector<AffineLayer> out;
  out.reserve(layers.size());
  for (const auto& l : layers)
    out.push_back({MatD(l.w.rows, l.w.cols), std::vector<double>(l.b.size(), 0.0)});
  return out;
}

struct HeadForwardCache {
  // acts[t][l] = input to layer l for token t (acts[t][0] is the token itself)
  std::vector<std::vector<std::vector<double>>> acts;
  std::vector<double> logits;
};

inline HeadForwardCache head_forward_cached(const TokenMatrix& m, const WeightHead& head) {
  HeadForwardCache cache;
  cache.acts.resize(m.n());
  cache.logits.resize(m.n());
  for (int t = 0; t < m.n(); ++t) {
    auto row = m.tokens.row(t);
    std::vector<double> x(row.begin(), row.end());
    cache.acts[t].push_back(x);
    for (size_t li = 0; li < head.layers.size(); ++li) {
      const AffineLayer& l = head.layers[li];
      std::vector<double> y(l.w.rows);
      for (int r = 0; r < l.w.rows; ++r) {
        double acc = l.b[r];
        const double* wr = l.w.data.data() + static_cast<size_t>(r) * l.w.cols;
        for (int c = 0; c < l.w.cols; ++c) acc += wr[c] * x[c];
        y[r] = acc;
      }
      if (li + 1 < head.layers.size()) {
        for (double& v : y) v = v > 0.0 ? v : 0.0;
        cache.acts[t].push_back(y);
      } else {
        cache.logits[t] = y[0];
      }
      x = std::move(y);
    }
  }
  return cache;
}

/// Accumulates d loss / d params for one token given d loss / d logit.
inline void head_backward_token(const WeightHead& head, const HeadForwardCache& cache, int t,
                                double dlogit, std::vector<AffineLayer>& grad) {
  std::vector<double> delta{dlogit};
  for (int li = static_cast<int>(head.layers.size()) - 1; li >= 0; --li) {
    const AffineLayer& l = head.layers[li];
    const std::vector<double>& in = cache.acts[t][li];
    AffineLayer& g = grad[li];
    for (int r = 0; r < l.w.rows; ++r) {
      double dr = delta[r];
      if (dr == 0.0) continue;
      g.b[r] += dr;
      double* gw = g.w.data.data() + static_cast<size_t>(r) * l.w.cols;
      for (int c = 0; c < l.w.cols; ++c) gw[c] += dr * in[c];
    }
    if (li == 0) break;
    std::vector<double> prev(l.w.cols, 0.0);
    for (int r = 0; r < l.w.rows; ++r) {
      double dr = delta[r];
      if (dr == 0.0) continue;
      const double* wr = l.w.data.data() + static_cast<size_t>(r) * l.w.cols;
      for (int c = 0; c < l.w.cols; ++c) prev[c] += dr * wr[c];
    }
    // ReLU subgradient: zero where the activation was clamped
    for (int c = 0; c < l.w.cols; ++c)
      if (cache.acts[t][li][c] <= 0.0) prev[c] = 0.0;
    delta = std::move(prev);
  }
}

}  // namespace detail

/// Total loss and its gradients with respect to both weight heads, for a batch
/// whose diagonal holds the positive pairs. Argmax assignments are treated as
/// locally constant (lowest-index subgradient at ties), and the decorrelation
/// term does not depend on the heads, so only the contrastive term contributes
/// to the gradient.
inline WtiLossReport grad_wti_heads(std::span<const TokenMatrix> T,
                                    std::span<const TokenMatrix> V, const WeightHead& tw,
                                    const WeightHead& vw, const LossConfig& cfg) {
  cfg.validate();
  require(T.size() == V.size() && T.size() >= 2, errc::non_square,
          "training batch must be square with B >= 2");
  const int b = static_cast<int>(T.size());
  const int d = T.front().dim();
  detail::check_uniform_dim(T, d);
  detail::check_uniform_dim(V, d);

  std::vector<TokenMatrix> tn(T.begin(), T.end()), vn(V.begin(), V.end());
  for (auto& m : tn) l2_normalize_rows_inplace(m);
  for (auto& m : vn) l2_normalize_rows_inplace(m);

  // Head forwards with caches, then softmax weights.
  std::vector<detail::HeadForwardCache> tcache(b), vcache(b);
  std::vector<std::vector<double>> twts(b), vwts(b);
  for (int i = 0; i < b; ++i) {
    tcache[i] = detail::head_forward_cached(tn[i], tw);
    vcache[i] = detail::head_forward_cached(vn[i], vw);
    twts[i] = masked_softmax(tcache[i].logits, tn[i].mask);
    vwts[i] = masked_softmax(vcache[i].logits, vn[i].mask);
  }

  // Pairwise maxima and the score matrix.
  std::vector<detail::PairMaxima> pm(static_cast<size_t>(b) * b);
  ScoreMatrix s;
  s.bt = s.bv = b;
  s.scores.resize(static_cast<size_t>(b) * b);
  s.has_argmax = true;
  s.t2v_argmax.resize(s.scores.size());
  s.v2t_argmax.resize(s.scores.size());
  for (int a = 0; a < b; ++a)
    for (int c = 0; c < b; ++c) {
      detail::PairMaxima& p = pm[static_cast<size_t>(a) * b + c];
      p = detail::pair_maxima(tn[a], vn[c]);
      double t2v = 0.0, v2t = 0.0;
      for (int i = 0; i < tn[a].n(); ++i)
        if (tn[a].mask[i]) t2v += twts[a][i] * p.t2v[i];
      for (int j = 0; j < vn[c].n(); ++j)
        if (vn[c].mask[j]) v2t += vwts[c][j] * p.v2t[j];
      s.at(a, c) = (t2v + v2t) / 2.0;
      s.t2v_argmax[static_cast<size_t>(a) * b + c] = p.t2v_ix;
      s.v2t_argmax[static_cast<size_t>(a) * b + c] = p.v2t_ix;
    }

  WtiLossReport report;
  report.info_nce = info_nce(s, cfg);
  if (cfg.cdcr_mode == CdcrMode::single) {
    MatD et, ev;
    detail::global_vectors(tn, vn, et, ev);
    report.cdcr = cdcr_single(et, ev, cfg);
  } else if (cfg.cdcr_mode == CdcrMode::sequential) {
    PositiveAssignments assign = PositiveAssignments::from_score_matrix(s);
    report.cdcr = cdcr_sequential(tn, vn, assign, cfg);
  }
  report.total = report.info_nce + (cfg.cdcr_mode == CdcrMode::none ? 0.0 : cfg.lambda * report.cdcr);

  // d info_nce / d score: row and column softmaxes against the diagonal.
  const double tau = cfg.logit_scale;
  MatD dscore(b, b);
  {
    for (int i = 0; i < b; ++i) {
      double m = -std::numeric_limits<double>::infinity();
      for (int j = 0; j < b; ++j) m = std::max(m, tau * s.at(i, j));
      double z = 0.0;
      for (int j = 0; j < b; ++j) z += std::exp(tau * s.at(i, j) - m);
      for (int j = 0; j < b; ++j) {
        double p = std::exp(tau * s.at(i, j) - m) / z;
        dscore(i, j) += (tau / b) * (p - (i == j ? 1.0 : 0.0));
      }
    }
    for (int j = 0; j < b; ++j) {
      double m = -std::numeric_limits<double>::infinity();
      for (int i = 0; i < b; ++i) m = std::max(m, tau * s.at(i, j));
      double z = 0.0;
      for (int i = 0; i < b; ++i) z += std::exp(tau * s.at(i, j) - m);
      for (int i = 0; i < b; ++i) {
        double p = std::exp(tau * s.at(i, j) - m) / z;
        dscore(i, j) += (tau / b) * (p - (i == j ? 1.0 : 0.0));
      }
    }
  }

  // d loss / d weights, then back through softmax and the MLPs.
  report.tw_grad = detail::zero_like(tw.layers);
  report.vw_grad = detail::zero_like(vw.layers);
  for (int a = 0; a < b; ++a) {
    std::vector<double> gw(tn[a].n(), 0.0);
    for (int c = 0; c < b; ++c) {
      const detail::PairMaxima& p = pm[static_cast<size_t>(a) * b + c];
      double g = dscore(a, c) / 2.0;
      for (int i = 0; i < tn[a].n(); ++i)
        if (tn[a].mask[i]) gw[i] += g * p.t2v[i];
    }
    double inner = 0.0;
    for (int i = 0; i < tn[a].n(); ++i)
      if (tn[a].mask[i]) inner += twts[a][i] * gw[i];
    for (int i = 0; i < tn[a].n(); ++i) {
      if (!tn[a].mask[i]) continue;
      double dlogit = twts[a][i] * (gw[i] - inner);
      detail::head_backward_token(tw, tcache[a], i, dlogit, report.tw_grad);
    }
  }
  for (int c = 0; c < b; ++c) {
    std::vector<double> gw(vn[c].n(), 0.0);
    for (int a = 0; a < b; ++a) {
      const detail::PairMaxima& p = pm[static_cast<size_t>(a) * b + c];
      double g = dscore(a, c) / 2.0;
      for (int j = 0; j < vn[c].n(); ++j)
        if (vn[c].mask[j]) gw[j] += g * p.v2t[j];
    }
    double inner = 0.0;
    for (int j = 0; j < vn[c].n(); ++j)
      if (vn[c].mask[j]) inner += vwts[c][j] * gw[j];
    for (int j = 0; j < vn[c].n(); ++j) {
      if (!vn[c].mask[j]) continue;
      double dlogit = vwts[c][j] * (gw[j] - inner);
      detail::head_backward_token(vw, vcache[c], j, dlogit, report.vw_grad);
    }
  }
  return report;
}

/// Forward-only counterpart of grad_wti_heads, for finite differencing.
inline double wti_total_loss(std::span<const TokenMatrix> T, std::span<const TokenMatrix> V,
                             const WeightHead& tw, const WeightHead& vw, const LossConfig& cfg) {
  ScoreMatrix s = score_wti_batch(T, V, tw, vw, /*want_argmax=*/true);
  PositiveAssignments assign = PositiveAssignments::from_score_matrix(s);
  std::vector<TokenMatrix> tn(T.begin(), T.end()), vn(V.begin(), V.end());
  for (auto& m : tn) l2_normalize_rows_inplace(m);
  for (auto& m : vn) l2_normalize_rows_inplace(m);
  return total_loss(s, tn, vn, &assign, cfg);
}

inline size_t head_param_count(const WeightHead& h) {
  size_t n = 0;
  for (const auto& l : h.layers) n += l.w.data.size() + l.b.size();
  return n;
}

inline std::vector<double> flatten_head(const WeightHead& h) {
  std::vector<double> out;
  out.reserve(head_param_count(h));
  for (const auto& l : h.layers) {
    out.insert(out.end(), l.w.data.begin(), l.w.data.end());
    out.insert(out.end(), l.b.begin(), l.b.end());
  }
  return out;
}

inline std::vector<double> flatten_grads(const std::vector<AffineLayer>& layers) {
  std::vector<double> out;
  for (const auto& l : layers) {
    out.insert(out.end(), l.w.data.begin(), l.w.data.end());
    out.insert(out.end(), l.b.begin(), l.b.end());
  }
  return out;
}

inline void set_head_params(WeightHead& h, std::span<const double> flat) {
  size_t pos = 0;
  for (auto& l : h.layers) {
    for (double& x : l.w.data) x = flat[pos++];
    for (double& x : l.b) x = flat[pos++];
  }
  require(pos == flat.size(), errc::shape_mismatch, "flat parameter size mismatch");
}

/// Gradient-check summary: worst relative disagreement between central finite
/// differences and the supplied analytic gradient.
struct GradReport {
  double max_rel_error = 0.0;
  int worst_index = -1;
  double step = 0.0;
};

inline GradReport fd_check(const std::function<double(const std::vector<double>&)>& loss_fn,
                           std::vector<double> params, std::span<const double> analytic,
                           double step) {
  require(step > 0.0, errc::config_error, "fd step must be positive");
  require(params.size() == analytic.size(), errc::shape_mismatch,
          "analytic gradient size mismatch");
  GradReport report;
  report.step = step;
  for (size_t i = 0; i < params.size(); ++i) {
    double saved = params[i];
    params[i] = saved + step;
    double up = loss_fn(params);
    params[i] = saved - step;
    double down = loss_fn(params);
    params[i] = saved;
    double fd = (up - down) / (2.0 * step);
    double rel = std::abs(fd - analytic[i]) / std::max({std::abs(fd), std::abs(analytic[i]), 1e-6});
    if (rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_index = static_cast<int>(i);
    }
  }
  return report;
}

}  // namespace lir
