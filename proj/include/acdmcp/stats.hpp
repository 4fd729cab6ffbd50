#pragma once

#include <cstddef>
#include <span>

namespace acdmcp::stats {

struct Summary {
  std::size_t n = 0;
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation (n - 1), 0 for n < 2
  double min = 0.0;
  double max = 0.0;
};

Summary summarize(std::span<const double> values);

struct WilcoxonResult {
  std::size_t n = 0;      // non-zero differences
  double w_plus = 0.0;    // sum of ranks of positive differences
  double p_value = 1.0;   // one-sided, alternative: x > y
};

// Exact one-sided Wilcoxon signed-rank test on paired samples. Zero
// differences are dropped; tied magnitudes get mid-ranks and the null
// distribution is enumerated over the actual rank set.
WilcoxonResult wilcoxon_signed_rank_greater(std::span<const double> x, std::span<const double> y);

}  // namespace acdmcp::stats
