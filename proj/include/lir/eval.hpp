#pragma once

#include <algorithm>
#include <span>
#include <vector>

#include "lir/errors.hpp"
#include "lir/index.hpp"

namespace lir {

struct Metrics {
  double r_at_1 = 0.0;   // percentages
  double r_at_5 = 0.0;
  double r_at_10 = 0.0;
  double mdr = 0.0;      // median rank (lower median for even counts)
  double mnr = 0.0;      // mean rank
};

inline Metrics evaluate(std::span<const RetrievalResult> results) {
  require(!results.empty(), errc::missing_truth, "no results to evaluate");
  std::vector<int> ranks;
  ranks.reserve(results.size());
  for (const auto& r : results) {
    require(r.rank_of_truth.has_value(), errc::missing_truth,
            "result for query " + std::to_string(r.query_id) + " carries no truth rank");
    ranks.push_back(*r.rank_of_truth);
  }
  Metrics m;
  double n = static_cast<double>(ranks.size());
  long sum = 0;
  for (int r : ranks) {
    if (r <= 1) m.r_at_1 += 1.0;
    if (r <= 5) m.r_at_5 += 1.0;
    if (r <= 10) m.r_at_10 += 1.0;
    sum += r;
  }
  m.r_at_1 *= 100.0 / n;
  m.r_at_5 *= 100.0 / n;
  m.r_at_10 *= 100.0 / n;
  std::sort(ranks.begin(), ranks.end());
  m.mdr = ranks[(ranks.size() - 1) / 2];
  m.mnr = static_cast<double>(sum) / n;
  return m;
}

}  // namespace lir
