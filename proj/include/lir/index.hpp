#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "lir/errors.hpp"
#include "lir/flops.hpp"
#include "lir/interaction.hpp"
#include "lir/io.hpp"
#include "lir/numerics.hpp"

namespace lir {

struct IndexedDoc {
  uint32_t id = 0;
  MatF tokens;                 // unit-normalized rows, masked rows zeroed
  std::vector<uint8_t> mask;
  std::vector<float> weights;  // precomputed fusion weights (empty if not built)
};

/// Immutable retrieval index: normalized video token rows plus, when built
/// with a video weight head, their precomputed fusion weights. Query-time
/// weighted scoring never re-runs the video head.
class IndexShard {
 public:
  int dim() const { return dim_; }
  size_t size() const { return docs_.size(); }
  bool has_weights() const { return has_weights_; }
  const IndexedDoc& doc(size_t i) const { return docs_[i]; }
  const std::vector<IndexedDoc>& docs() const { return docs_; }
  const drle::Manifest& manifest() const { return manifest_; }

  bool supports(Mechanism m) const {
    if (m == Mechanism::hi) return false;  // no level structure in a token shard
    if (m == Mechanism::wti) return has_weights_;
    return true;
  }

 private:
  int dim_ = 0;
  bool has_weights_ = false;
  std::vector<IndexedDoc> docs_;
  drle::Manifest manifest_;

  friend IndexShard build_index(std::span<const TokenMatrix>, const WeightHead*,
                                const drle::Manifest&);
  friend IndexShard load_shard(const std::string&);
};

/// Normalizes every document and, when a video weight head is given, computes
/// its fusion weights once. The head consumes the normalized rows, so stored
/// weights can be reproduced from stored tokens.
inline IndexShard build_index(std::span<const TokenMatrix> docs, const WeightHead* vw = nullptr,
                              const drle::Manifest& manifest = {}) {
  IndexShard shard;
  shard.manifest_ = manifest;
  shard.has_weights_ = vw != nullptr;
  if (docs.empty()) {
    shard.dim_ = vw ? vw->input_dim() : 1;
    return shard;
  }
  shard.dim_ = docs.front().dim();
  shard.docs_.reserve(docs.size());
  for (const TokenMatrix& d : docs) {
    require(d.dim() == shard.dim_, errc::shape_mismatch, "document dim differs across corpus");
    TokenMatrix norm = l2_normalize_rows(d);
    IndexedDoc idoc;
    idoc.id = d.id;
    idoc.mask = norm.mask;
    if (vw) {
      norm.modality = vw->side;
      std::vector<double> w = token_weights(norm, *vw);
      idoc.weights.assign(w.begin(), w.end());
    }
    idoc.tokens = std::move(norm.tokens);
    shard.docs_.push_back(std::move(idoc));
  }
  return shard;
}

struct ScoredDoc {
  uint32_t id = 0;
  double score = 0.0;
};

struct RetrievalResult {
  uint32_t query_id = 0;
  std::vector<ScoredDoc> ranked;       // nonincreasing score, ties by ascending id
  std::optional<int> rank_of_truth;    // 1-based rank of the labeled document
};

/// Extra parameters needed by head-bearing mechanisms at query time.
struct QueryHeads {
  const WeightHead* tw = nullptr;        // text weight head (wti)
  const MlpScorerParams* mlp = nullptr;  // mlp scorer parameters
  const XtiParams* xti = nullptr;        // cross-attention parameters
};

namespace detail {

inline std::vector<double> doc_mean_rows(const IndexedDoc& d, int dim) {
  std::vector<double> mean(dim, 0.0);
  int count = 0;
  for (int i = 0; i < d.tokens.rows; ++i) {
    if (!d.mask[i]) continue;
    auto row = d.tokens.row(i);
    for (int c = 0; c < dim; ++c) mean[c] += row[c];
    ++count;
  }
  for (double& v : mean) v /= count;
  return mean;
}

/// Dual-path max-similarity scan against one stored document.
/// q must be unit-normalized. Returns (t2v_acc, v2t_acc) where each token's
/// maximum is weighted by tweight/vweight (uniform weights give TI-mean).
inline std::pair<double, double> scan_maxsim(const TokenMatrix& q, const IndexedDoc& d,
                                             std::span<const double> tweight,
                                             std::span<const float> vweight) {
  const int nt = q.n(), nv = d.tokens.rows, dim = q.dim();
  double t2v = 0.0;
  std::vector<double> colmax(nv, -std::numeric_limits<double>::infinity());
  for (int i = 0; i < nt; ++i) {
    if (!q.mask[i]) continue;
    auto trow = q.tokens.row(i);
    double rowmax = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < nv; ++j) {
      if (!d.mask[j]) continue;
      auto vrow = d.tokens.row(j);
      double dot = 0.0;
      for (int c = 0; c < dim; ++c) dot += static_cast<double>(trow[c]) * vrow[c];
      if (dot > rowmax) rowmax = dot;
      if (dot > colmax[j]) colmax[j] = dot;
    }
    t2v += tweight[i] * rowmax;
  }
  double v2t = 0.0;
  for (int j = 0; j < nv; ++j)
    if (d.mask[j]) v2t += static_cast<double>(vweight[j]) * colmax[j];
  return {t2v, v2t};
}

struct ScanContext {
  Mechanism mechanism;
  const IndexShard* shard;
  TokenMatrix query;                   // normalized
  std::vector<double> text_weights;  // wti
  std::vector<double> uniform_t;     // ti
  std::vector<double> t_global;      // dp / mlp
  const QueryHeads* heads;
};

inline double score_one_doc(const ScanContext& ctx, const IndexedDoc& d) {
  const int dim = ctx.shard->dim();
  switch (ctx.mechanism) {
    case Mechanism::dp: {
      std::vector<double> mean = doc_mean_rows(d, dim);
      double dot = 0.0, nm = 0.0;
      for (int c = 0; c < dim; ++c) {
        dot += ctx.t_global[c] * mean[c];
        nm += mean[c] * mean[c];
      }
      nm = std::sqrt(nm);
      require(nm > kZeroNormEps, errc::zero_norm_row, "document pools to a zero vector");
      return dot / nm;  // t_global is unit-norm already
    }
    case Mechanism::mlp: {
      std::vector<double> mean = doc_mean_rows(d, dim);
      return score_mlp(ctx.t_global, mean, *ctx.heads->mlp);
    }
    case Mechanism::xti: {
      TokenMatrix v;
      v.id = d.id;
      v.tokens = d.tokens;
      v.mask = d.mask;
      v.modality = Modality::video;
      return score_xti(ctx.query, v, *ctx.heads->xti);
    }
    case Mechanism::ti: {
      int nv_valid = 0;
      for (uint8_t m : d.mask) nv_valid += m ? 1 : 0;
      std::vector<float> vw(d.mask.size(), 0.0f);
      for (size_t j = 0; j < d.mask.size(); ++j)
        if (d.mask[j]) vw[j] = 1.0f / static_cast<float>(nv_valid);
      auto [t2v, v2t] = scan_maxsim(ctx.query, d, ctx.uniform_t, vw);
      return (t2v + v2t) / 2.0;
    }
    case Mechanism::wti: {
      auto [t2v, v2t] = scan_maxsim(ctx.query, d, ctx.text_weights, d.weights);
      return (t2v + v2t) / 2.0;
    }
    case Mechanism::hi:
      break;
  }
  raise(errc::config_error, "mechanism not servable from a token shard");
}

}  // namespace detail

/// Exact top-k scan of the shard. Deterministic for fixed inputs regardless of
/// the worker count: per-document scores are independent, and the final
/// ordering breaks ties by ascending document id.
inline RetrievalResult query_topk(const TokenMatrix& q, const IndexShard& shard, int k,
                                  Mechanism mechanism, const QueryHeads& heads = {},
                                  std::optional<uint32_t> truth_id = std::nullopt,
                                  int threads = 1) {
  require(k >= 1, errc::config_error, "k must be >= 1");
  q.validate();
  RetrievalResult result;
  result.query_id = q.id;
  if (shard.size() == 0) return result;
  require(q.dim() == shard.dim(), errc::dim_mismatch, "query dim != shard dim");
  require(shard.supports(mechanism), errc::config_error,
          std::string("shard cannot serve mechanism ") + mechanism_name(mechanism));

  detail::ScanContext ctx;
  ctx.mechanism = mechanism;
  ctx.shard = &shard;
  ctx.query = l2_normalize_rows(q);
  ctx.heads = &heads;
  switch (mechanism) {
    case Mechanism::wti:
      require(heads.tw != nullptr, errc::config_error, "wti query needs a text weight head");
      ctx.text_weights = token_weights(ctx.query, *heads.tw);
      break;
    case Mechanism::ti: {
      int nt_valid = ctx.query.valid_count();
      ctx.uniform_t.assign(ctx.query.n(), 0.0);
      for (int i = 0; i < ctx.query.n(); ++i)
        if (ctx.query.mask[i]) ctx.uniform_t[i] = 1.0 / nt_valid;
      break;
    }
    case Mechanism::dp:
    case Mechanism::mlp: {
      auto row = ctx.query.tokens.row(ctx.query.first_valid());
      ctx.t_global.assign(row.begin(), row.end());
      if (mechanism == Mechanism::mlp)
        require(heads.mlp != nullptr, errc::config_error, "mlp query needs scorer parameters");
      break;
    }
    case Mechanism::xti:
      require(heads.xti != nullptr, errc::config_error, "xti query needs block parameters");
      break;
    case Mechanism::hi:
      break;
  }

  const size_t n = shard.size();
  std::vector<double> scores(n);
  auto scan_range = [&](size_t lo, size_t hi) {
    for (size_t i = lo; i < hi; ++i) scores[i] = detail::score_one_doc(ctx, shard.doc(i));
  };
  if (threads <= 1 || n < 2) {
    scan_range(0, n);
  } else {
    int nw = std::min<int>(threads, static_cast<int>(n));
    std::vector<std::thread> workers;
    size_t chunk = (n + nw - 1) / nw;
    for (int w = 0; w < nw; ++w) {
      size_t lo = w * chunk, hi = std::min(n, lo + chunk);
      if (lo >= hi) break;
      workers.emplace_back(scan_range, lo, hi);
    }
    for (auto& t : workers) t.join();
  }

  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return shard.doc(a).id < shard.doc(b).id;
  });

  size_t take = std::min<size_t>(static_cast<size_t>(k), n);
  result.ranked.reserve(take);
  for (size_t r = 0; r < take; ++r)
    result.ranked.push_back({shard.doc(order[r]).id, scores[order[r]]});
  if (truth_id) {
    for (size_t r = 0; r < n; ++r)
      if (shard.doc(order[r]).id == *truth_id) {
        result.rank_of_truth = static_cast<int>(r) + 1;
        break;
      }
  }
  return result;
}

struct BenchResult {
  Mechanism mechanism = Mechanism::dp;
  size_t docs = 0;
  size_t queries = 0;
  int repetitions = 0;
  double p50_ms = 0.0;
  double p95_ms = 0.0;
  double docs_per_sec = 0.0;
  FlopReport model;
};

/// Times full scans of the shard. Latencies are per-query wall-clock times
/// pooled over repetitions; the cost-model report is attached so measured
/// ratios can be compared against modeled ones.
inline BenchResult bench(const IndexShard& shard, std::span<const TokenMatrix> queries,
                         Mechanism mechanism, int repetitions, const QueryHeads& heads = {},
                         int threads = 1) {
  require(shard.size() > 0, errc::config_error, "bench needs a nonempty shard");
  require(!queries.empty(), errc::config_error, "bench needs at least one query");
  require(repetitions >= 3, errc::config_error, "bench needs at least 3 repetitions");

  BenchResult r;
  r.mechanism = mechanism;
  r.docs = shard.size();
  r.queries = queries.size();
  r.repetitions = repetitions;

  FlopParams fp;
  fp.n = shard.size();
  fp.d = static_cast<uint64_t>(shard.dim());
  fp.n_t = static_cast<uint64_t>(queries.front().valid_count());
  fp.n_v = static_cast<uint64_t>(shard.doc(0).tokens.rows);
  if (heads.xti) fp.layers = static_cast<uint64_t>(heads.xti->blocks.size());
  if (heads.mlp) fp.layers = static_cast<uint64_t>(heads.mlp->layers.size());
  r.model = flop_count(mechanism, fp);

  query_topk(queries.front(), shard, 10, mechanism, heads, std::nullopt, threads);  // warmup

  std::vector<double> lat_ms;
  lat_ms.reserve(static_cast<size_t>(repetitions) * queries.size());
  double total_s = 0.0;
  for (int rep = 0; rep < repetitions; ++rep) {
    for (const TokenMatrix& q : queries) {
      auto t0 = std::chrono::steady_clock::now();
      query_topk(q, shard, 10, mechanism, heads, std::nullopt, threads);
      auto t1 = std::chrono::steady_clock::now();
      double ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
      lat_ms.push_back(ms);
      total_s += ms / 1000.0;
    }
  }
  std::sort(lat_ms.begin(), lat_ms.end());
  auto pct = [&](double p) {
    size_t ix = static_cast<size_t>(std::ceil(p / 100.0 * lat_ms.size()));
    return lat_ms[std::min(lat_ms.size() - 1, ix == 0 ? 0 : ix - 1)];
  };
  r.p50_ms = pct(50.0);
  r.p95_ms = pct(95.0);
  r.docs_per_sec = total_s > 0.0 ? static_cast<double>(r.docs) * lat_ms.size() / total_s : 0.0;
  return r;
}

inline void save_shard(const IndexShard& shard, const std::string& path) {
  drle::File f;
  f.dim = shard.dim();
  f.has_weights = shard.has_weights();
  f.manifest = shard.manifest();
  f.docs.reserve(shard.size());
  for (const IndexedDoc& d : shard.docs()) f.docs.push_back({d.id, d.tokens, d.mask, d.weights});
  drle::write_file(path, f);
}

inline IndexShard load_shard(const std::string& path) {
  drle::File f = drle::read_file(path);
  IndexShard shard;
  shard.dim_ = f.dim;
  shard.has_weights_ = f.has_weights;
  shard.manifest_ = std::move(f.manifest);
  shard.docs_.reserve(f.docs.size());
  for (auto& r : f.docs) {
    // An index shard stores unit rows (masked rows zeroed); reject files that
    // were never built into an index, e.g. raw generator output.
    for (int i = 0; i < r.tokens.rows; ++i) {
      double sq = 0.0;
      for (float x : r.tokens.row(i)) sq += static_cast<double>(x) * x;
      double norm = std::sqrt(sq);
      if (r.mask[i])
        require(std::abs(norm - 1.0) <= 1e-3, errc::format_error,
                "token rows are not unit-normalized; not an index shard");
      else
        require(norm <= 1e-6, errc::format_error, "masked rows must be zeroed in a shard");
    }
    shard.docs_.push_back({r.id, std::move(r.tokens), std::move(r.mask), std::move(r.weights)});
  }
  return shard;
}

}  // namespace lir
