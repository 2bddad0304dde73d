#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "lir/errors.hpp"
#include "lir/numerics.hpp"

namespace lir {

/// Synthetic corpus layout: each video is a concatenation of scene segments
/// drawn around distinct latent directions, and each query clusters around the
/// realized tokens of exactly one scene of its target video.
struct CorpusConfig {
  int num_docs = 1000;
  int scenes_min = 1;
  int scenes_max = 4;
  int tokens_per_scene = 3;
  int text_tokens = 32;   // includes the leading global row
  int video_tokens = 12;  // capacity; shorter videos are mask-padded
  int dim = 512;
  double noise_sigma = 0.2;       // expected noise norm added to each token
  double distractor_overlap = 0;  // probability a scene reuses an existing latent
  uint64_t seed = 0;

  void validate() const {
    require(num_docs >= 1, errc::config_error, "num_docs must be >= 1");
    require(scenes_min >= 1 && scenes_max >= scenes_min, errc::config_error,
            "bad scenes_per_doc range");
    require(tokens_per_scene >= 1, errc::config_error, "tokens_per_scene must be >= 1");
    require(scenes_max * tokens_per_scene <= video_tokens, errc::config_error,
            "scenes_max * tokens_per_scene exceeds video_tokens");
    require(text_tokens >= 2, errc::config_error, "text_tokens must be >= 2");
    require(dim >= 1, errc::config_error, "dim must be >= 1");
    require(noise_sigma >= 0.0, errc::config_error, "noise_sigma must be >= 0");
    require(distractor_overlap >= 0.0 && distractor_overlap <= 1.0, errc::config_error,
            "distractor_overlap must be in [0,1]");
  }

  std::string describe() const {
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "docs=%d scenes=[%d,%d] tps=%d nt=%d nv=%d d=%d sigma=%g overlap=%g seed=%llu",
                  num_docs, scenes_min, scenes_max, tokens_per_scene, text_tokens, video_tokens,
                  dim, noise_sigma, distractor_overlap,
                  static_cast<unsigned long long>(seed));
    return buf;
  }
};

struct Corpus {
  std::vector<TokenMatrix> videos;
  std::vector<TokenMatrix> queries;
  std::vector<uint32_t> truth;  // truth[q] = target video id for queries[q]
  // generator metadata, kept for oracle checks
  std::vector<std::vector<std::vector<double>>> scene_latents;  // [doc][scene][dim]
  std::vector<int> query_scene;                                 // [q] = scene index in target
};

namespace detail {

/// Fresh latent direction, Gram-Schmidt-orthogonalized against the pool while
/// the dimension allows; plain random unit vectors afterwards.
inline std::vector<double> fresh_latent(Rng& rng, int dim,
                                        const std::vector<std::vector<double>>& pool) {
  while (true) {
    std::vector<double> v(dim);
    for (double& x : v) x = rng.normal();
    if (pool.size() < static_cast<size_t>(dim)) {
      for (const auto& u : pool) {
        double proj = 0.0;
        for (int c = 0; c < dim; ++c) proj += v[c] * u[c];
        for (int c = 0; c < dim; ++c) v[c] -= proj * u[c];
      }
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm <= 1e-8) continue;  // essentially impossible; redraw
    for (double& x : v) x /= norm;
    return v;
  }
}

inline void add_noise(std::vector<double>& v, Rng& rng, double sigma) {
  if (sigma == 0.0) return;
  double per_coord = sigma / std::sqrt(static_cast<double>(v.size()));
  for (double& x : v) x += per_coord * rng.normal();
}

}  // namespace detail

inline Corpus gen_corpus(const CorpusConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  Corpus corpus;
  corpus.videos.reserve(cfg.num_docs);
  corpus.queries.reserve(cfg.num_docs);
  corpus.scene_latents.resize(cfg.num_docs);

  std::vector<std::vector<double>> pool;  // every latent created so far

  for (int doc = 0; doc < cfg.num_docs; ++doc) {
    int scenes = cfg.scenes_min +
                 static_cast<int>(rng.below(static_cast<uint64_t>(cfg.scenes_max - cfg.scenes_min + 1)));
    auto& latents = corpus.scene_latents[doc];
    latents.reserve(scenes);
    for (int s = 0; s < scenes; ++s) {
      bool reuse = !pool.empty() && rng.uniform() < cfg.distractor_overlap;
      if (reuse) {
        latents.push_back(pool[rng.below(pool.size())]);
      } else {
        latents.push_back(detail::fresh_latent(rng, cfg.dim, pool));
        pool.push_back(latents.back());
      }
    }

    TokenMatrix video;
    video.id = static_cast<uint32_t>(doc);
    video.modality = Modality::video;
    video.tokens = MatF(cfg.video_tokens, cfg.dim);
    video.mask.assign(cfg.video_tokens, 0);
    int row = 0;
    for (int s = 0; s < scenes; ++s)
      for (int t = 0; t < cfg.tokens_per_scene; ++t, ++row) {
        std::vector<double> tok = latents[s];
        detail::add_noise(tok, rng, cfg.noise_sigma);
        for (int c = 0; c < cfg.dim; ++c) video.tokens(row, c) = static_cast<float>(tok[c]);
        video.mask[row] = 1;
      }
    corpus.videos.push_back(std::move(video));
  }

  for (int doc = 0; doc < cfg.num_docs; ++doc) {
    const TokenMatrix& video = corpus.videos[doc];
    int scenes = static_cast<int>(corpus.scene_latents[doc].size());
    int target_scene = static_cast<int>(rng.below(static_cast<uint64_t>(scenes)));
    corpus.query_scene.push_back(target_scene);

    TokenMatrix query;
    query.id = static_cast<uint32_t>(doc);
    query.modality = Modality::text;
    query.tokens = MatF(cfg.text_tokens, cfg.dim);
    query.mask.assign(cfg.text_tokens, 1);

    // cluster tokens are noisy copies of the target scene's realized tokens
    std::vector<double> mean(cfg.dim, 0.0);
    for (int i = 1; i < cfg.text_tokens; ++i) {
      int src = target_scene * cfg.tokens_per_scene +
                static_cast<int>(rng.below(static_cast<uint64_t>(cfg.tokens_per_scene)));
      std::vector<double> tok(cfg.dim);
      for (int c = 0; c < cfg.dim; ++c) tok[c] = video.tokens(src, c);
      detail::add_noise(tok, rng, cfg.noise_sigma);
      for (int c = 0; c < cfg.dim; ++c) {
        query.tokens(i, c) = static_cast<float>(tok[c]);
        mean[c] += tok[c];
      }
    }
    // the global row stands in for a pooled sentence vector
    double norm = 0.0;
    for (int c = 0; c < cfg.dim; ++c) {
      mean[c] /= (cfg.text_tokens - 1);
      norm += mean[c] * mean[c];
    }
    norm = std::sqrt(norm);
    require(norm > kZeroNormEps, errc::config_error, "degenerate query cluster");
    for (int c = 0; c < cfg.dim; ++c) query.tokens(0, c) = static_cast<float>(mean[c] / norm);

    corpus.queries.push_back(std::move(query));
    corpus.truth.push_back(static_cast<uint32_t>(doc));
  }
  return corpus;
}

}  // namespace lir
