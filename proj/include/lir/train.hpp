#pragma once

#include <cstdint>
#include <vector>

#include "lir/datagen.hpp"
#include "lir/errors.hpp"
#include "lir/eval.hpp"
#include "lir/index.hpp"
#include "lir/interaction.hpp"
#include "lir/losses.hpp"

namespace lir {

struct TrainConfig {
  int epochs = 8;
  int batch_size = 32;
  double step_size = 0.05;
  double holdout_fraction = 0.2;
  int head_depth = 2;
  int head_hidden = -1;  // -1: same as dim
  uint64_t seed = 0;
  LossConfig loss;

  void validate() const {
    require(epochs >= 1 && batch_size >= 2, errc::config_error, "epochs >= 1, batch_size >= 2");
    require(step_size >= 0.0, errc::config_error, "step_size must be >= 0");
    require(holdout_fraction > 0.0 && holdout_fraction < 1.0, errc::config_error,
            "holdout_fraction must be in (0,1)");
    loss.validate();
  }
};

struct TrainStep {
  int step = 0;
  double total = 0.0;
  double info_nce = 0.0;
  double cdcr = 0.0;
};

struct TrainReport {
  std::vector<TrainStep> steps;   // minibatch losses, recorded before each update
  double eval_info_nce_initial = 0.0;  // fixed evaluation batch, before training
  double eval_info_nce_final = 0.0;    // same batch, after training
  Metrics dp, ti, wti;            // held-out retrieval quality per mechanism
  WeightHead text_head, video_head;
  uint64_t seed = 0;
};

namespace detail {

template <typename T>
void shuffle_indices(std::vector<T>& v, Rng& rng) {
  for (size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

inline void apply_gradient(WeightHead& head, const std::vector<AffineLayer>& grad, double step) {
  for (size_t li = 0; li < head.layers.size(); ++li) {
    for (size_t i = 0; i < head.layers[li].w.data.size(); ++i)
      head.layers[li].w.data[i] -= step * grad[li].w.data[i];
    for (size_t i = 0; i < head.layers[li].b.size(); ++i)
      head.layers[li].b[i] -= step * grad[li].b[i];
  }
}

}  // namespace detail

/// Minibatch gradient descent on the two weight heads. Deterministic per seed:
/// the split, the head initialization, and the batch order all derive from it.
inline TrainReport train_heads(const Corpus& corpus, const TrainConfig& cfg) {
  cfg.validate();
  const int dim = corpus.videos.front().dim();
  require(corpus.videos.size() == corpus.queries.size(), errc::shape_mismatch,
          "corpus must pair one query per video");

  // Normalize once; heads and scorers consume unit rows throughout.
  std::vector<TokenMatrix> videos, queries;
  videos.reserve(corpus.videos.size());
  queries.reserve(corpus.queries.size());
  for (const auto& v : corpus.videos) videos.push_back(l2_normalize_rows(v));
  for (const auto& q : corpus.queries) queries.push_back(l2_normalize_rows(q));

  Rng split_rng(mix_seed(cfg.seed, 0));
  std::vector<int> order(videos.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  detail::shuffle_indices(order, split_rng);
  size_t val_count = static_cast<size_t>(cfg.holdout_fraction * order.size());
  require(val_count >= 1 && val_count < order.size(), errc::config_error,
          "holdout split is empty");
  std::vector<int> val(order.begin(), order.begin() + val_count);
  std::vector<int> train(order.begin() + val_count, order.end());
  require(train.size() >= static_cast<size_t>(cfg.batch_size), errc::config_error,
          "train split smaller than one batch");

  TrainReport report;
  report.seed = cfg.seed;
  report.text_head = WeightHead::random_init(Modality::text, dim, mix_seed(cfg.seed, 1),
                                             cfg.head_depth, cfg.head_hidden);
  report.video_head = WeightHead::random_init(Modality::video, dim, mix_seed(cfg.seed, 2),
                                              cfg.head_depth, cfg.head_hidden);

  auto gather = [&](const std::vector<int>& ix, size_t lo, size_t n, std::vector<TokenMatrix>& T,
                    std::vector<TokenMatrix>& V) {
    T.clear();
    V.clear();
    for (size_t i = lo; i < lo + n; ++i) {
      T.push_back(queries[ix[i]]);
      V.push_back(videos[ix[i]]);
    }
  };

  // Fixed evaluation batch for before/after loss comparison.
  std::vector<TokenMatrix> eval_t, eval_v;
  gather(train, 0, std::min<size_t>(train.size(), cfg.batch_size), eval_t, eval_v);
  auto eval_info_nce = [&]() {
    ScoreMatrix s = score_wti_batch(eval_t, eval_v, report.text_head, report.video_head,
                                    /*want_argmax=*/false);
    return info_nce(s, cfg.loss);
  };
  report.eval_info_nce_initial = eval_info_nce();

  Rng batch_rng(mix_seed(cfg.seed, 3));
  int step = 0;
  const size_t batches_per_epoch = train.size() / cfg.batch_size;
  std::vector<TokenMatrix> bt, bv;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    detail::shuffle_indices(train, batch_rng);
    for (size_t b = 0; b < batches_per_epoch; ++b) {
      gather(train, b * cfg.batch_size, cfg.batch_size, bt, bv);
      WtiLossReport rep = grad_wti_heads(bt, bv, report.text_head, report.video_head, cfg.loss);
      report.steps.push_back({step, rep.total, rep.info_nce, rep.cdcr});
      detail::apply_gradient(report.text_head, rep.tw_grad, cfg.step_size);
      detail::apply_gradient(report.video_head, rep.vw_grad, cfg.step_size);
      ++step;
    }
  }
  report.eval_info_nce_final = eval_info_nce();

  // Held-out retrieval metrics through the index path.
  std::vector<TokenMatrix> val_videos;
  for (int ix : val) val_videos.push_back(videos[ix]);
  IndexShard shard = build_index(val_videos, &report.video_head);
  QueryHeads heads;
  heads.tw = &report.text_head;
  std::vector<RetrievalResult> dp_res, ti_res, wti_res;
  for (int ix : val) {
    uint32_t truth = corpus.truth[ix];
    dp_res.push_back(query_topk(queries[ix], shard, 10, Mechanism::dp, {}, truth));
    ti_res.push_back(query_topk(queries[ix], shard, 10, Mechanism::ti, {}, truth));
    wti_res.push_back(query_topk(queries[ix], shard, 10, Mechanism::wti, heads, truth));
  }
  report.dp = evaluate(dp_res);
  report.ti = evaluate(ti_res);
  report.wti = evaluate(wti_res);
  return report;
}

}  // namespace lir
