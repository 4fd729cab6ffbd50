#include "acdmcp/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace acdmcp::stats {

Summary summarize(std::span<const double> values) {
  Summary s;
  s.n = values.size();
  if (s.n == 0) return s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(s.n);
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  s.min = *lo;
  s.max = *hi;
  if (s.n > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(s.n - 1));
  }
  return s;
}

WilcoxonResult wilcoxon_signed_rank_greater(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("wilcoxon: samples must be paired");
  struct Diff {
    double mag;
    bool positive;
  };
  std::vector<Diff> d;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x[i] - y[i];
    if (v != 0.0) d.push_back({std::abs(v), v > 0.0});
  }
  WilcoxonResult r;
  r.n = d.size();
  if (d.empty()) return r;
  std::sort(d.begin(), d.end(), [](const Diff& a, const Diff& b) { return a.mag < b.mag; });

  // Doubled mid-ranks keep everything integral.
  std::vector<int> rank2(d.size());
  for (std::size_t i = 0; i < d.size();) {
    std::size_t j = i;
    while (j + 1 < d.size() && d[j + 1].mag == d[i].mag) ++j;
    const int mid2 = static_cast<int>(i + j + 2);  // 2 * average of (i+1 .. j+1)
    for (std::size_t k = i; k <= j; ++k) rank2[k] = mid2;
    i = j + 1;
  }
  int observed2 = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d[i].positive) observed2 += rank2[i];
  }
  r.w_plus = observed2 / 2.0;

  // Null: each rank is positive with probability 1/2 independently.
  const int total2 = std::accumulate(rank2.begin(), rank2.end(), 0);
  std::vector<double> dist(static_cast<std::size_t>(total2) + 1, 0.0);
  dist[0] = 1.0;
  int reach = 0;
  for (int rk : rank2) {
    for (int s = reach; s >= 0; --s) {
      if (dist[static_cast<std::size_t>(s)] != 0.0) dist[static_cast<std::size_t>(s + rk)] += dist[static_cast<std::size_t>(s)];
    }
    reach += rk;
  }
  const double all = std::ldexp(1.0, static_cast<int>(d.size()));
  double tail = 0.0;
  for (int s = observed2; s <= total2; ++s) tail += dist[static_cast<std::size_t>(s)];
  r.p_value = tail / all;
  return r;
}

}  // namespace acdmcp::stats
