#pragma once
/*
 * Cluster-head competence metrics.
 *
 * Every function here is pure. Indices (REI, NDI) and link terms are mapped
 * into [0,1]; the CHCV family combines them as weighted averages whose weights
 * (impact factors) sum to one. Comparators implement the successive tie-break
 * chains used when two scores are equal within kTieEpsilon.
 */

#include <compare>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>

#include "acdmcp/types.hpp"

namespace acdmcp::metric {

inline constexpr double kTieEpsilon = 1e-9;
inline constexpr double kWeightSumTolerance = 1e-9;
inline constexpr double kReiFloor = 0.001;

// Raised for configuration-level misuse (non-positive thresholds, bad weights).
class MetricError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Raised when a mean link reliability is requested for a node with no links.
class IsolatedNodeError : public MetricError {
 public:
  IsolatedNodeError() : MetricError("isolated node: no links to average") {}
};

struct EnergyState {
  double e_re = 0.0;  // residual energy, >= 0
  double e_th = 1.0;  // threshold energy, > 0
  friend bool operator==(const EnergyState&, const EnergyState&) = default;
};

struct ImpactFactors {
  double rei = 1.0 / 3.0;
  double ndi = 1.0 / 3.0;
  double link = 1.0 / 3.0;
  double zeta = 0.0;  // hop-distance weight, multi-hop form only

  // rei + ndi + link == 1 (election / direct join form).
  [[nodiscard]] bool valid_three_term() const;
  // rei + ndi + link + zeta == 1 (multi-hop form).
  [[nodiscard]] bool valid_four_term() const;

  // Legend order used by the sweep configuration: (REI, link, NDI) in percent.
  static ImpactFactors from_percent(double rei_pct, double link_pct, double ndi_pct);

  // Multi-hop weights derived from a three-term set: the three weights are
  // scaled by (1 - zeta) and zeta is appended.
  [[nodiscard]] ImpactFactors with_hop_weight(double zeta) const;

  [[nodiscard]] std::string label() const;
  friend bool operator==(const ImpactFactors&, const ImpactFactors&) = default;
};

void validate_three_term(const ImpactFactors& ifs);
void validate_four_term(const ImpactFactors& ifs);

// Packet-reception counters kept per neighbor and power level.
struct LinkStats {
  std::uint64_t sent = 0;   // packets this node transmitted that the neighbor could hear
  std::uint64_t heard = 0;  // packets received from the neighbor
  std::uint64_t acked = 0;  // own packets the neighbor reports having received
  friend bool operator==(const LinkStats&, const LinkStats&) = default;
};

// Packet reception ratio received/sent clamped to [0,1]; 0 when nothing was sent.
[[nodiscard]] double packet_reception_ratio(std::uint64_t received, std::uint64_t sent);

struct CandidateProfile {
  NodeId node_id = 0;
  double e_re = 0.0;
  std::uint32_t degree = 0;
  double link_term = 0.0;  // MLR_in, LR_out or ELR depending on the phase
  std::uint32_t hops = 1;  // zeta for member chains, hops-to-sink for routing
  friend bool operator==(const CandidateProfile&, const CandidateProfile&) = default;
};

struct ScoredCandidate {
  CandidateProfile profile;
  double score = 0.0;
  friend bool operator==(const ScoredCandidate&, const ScoredCandidate&) = default;
};

struct TieBreakPolicy {
  std::uint32_t ideg = 4;
  bool higher_nid_wins = true;
  friend bool operator==(const TieBreakPolicy&, const TieBreakPolicy&) = default;
};

// Residual energy index.
[[nodiscard]] double compute_rei(const EnergyState& energy);

// Node degree index. degree == 0 yields 0.0 so an isolated node can never win.
[[nodiscard]] double compute_ndi(std::uint32_t degree, std::uint32_t ideg);

// Mean of per-link reliabilities; throws IsolatedNodeError on an empty list.
[[nodiscard]] double compute_mlr(std::span<const double> per_link_reliability);

// End-to-end reliability: product over the path. The empty path has ELR 1.0.
[[nodiscard]] double compute_elr(std::span<const double> path_link_reliability);

[[nodiscard]] double chcv_election(double rei, double ndi, double mlr_in, const ImpactFactors& ifs);
[[nodiscard]] double chcv_join(double rei, double ndi, double lr_out, const ImpactFactors& ifs);
[[nodiscard]] double chcv_multihop(double rei, double ndi, double elr, std::uint32_t hops,
                                   const ImpactFactors& ifs);

// Preference of degree a over degree b relative to the ideal degree.
// greater => a preferred.
[[nodiscard]] std::strong_ordering compare_degree(std::uint32_t a, std::uint32_t b, std::uint32_t ideg);

// All comparators return greater when a is preferred over b. They are total
// orders over candidates with distinct node ids.
//
// election:   score, MLR_in, E_re, degree (ideal-degree rule), NID
// join:       score, LR_out, degree, E_re, NID
// transitive: score, ELR_out, fewer hops, degree, E_re, NID
// iccom:      score, ELR, fewer hops to sink, E_re, NID
[[nodiscard]] std::strong_ordering compare_election_candidates(const ScoredCandidate& a,
                                                               const ScoredCandidate& b,
                                                               const TieBreakPolicy& policy);
[[nodiscard]] std::strong_ordering compare_join_offers(const ScoredCandidate& a, const ScoredCandidate& b,
                                                       const TieBreakPolicy& policy);
[[nodiscard]] std::strong_ordering compare_transitive_offers(const ScoredCandidate& a,
                                                             const ScoredCandidate& b,
                                                             const TieBreakPolicy& policy);
[[nodiscard]] std::strong_ordering compare_iccom_offers(const ScoredCandidate& a, const ScoredCandidate& b,
                                                        const TieBreakPolicy& policy);

// Convenience scorers building the phase-specific CHCV of a profile.
[[nodiscard]] double score_for_election(const CandidateProfile& p, double e_th, std::uint32_t ideg,
                                        const ImpactFactors& ifs);
[[nodiscard]] double score_for_join(const CandidateProfile& p, double e_th, std::uint32_t ideg,
                                    const ImpactFactors& ifs);
[[nodiscard]] double score_for_multihop(const CandidateProfile& p, double e_th, std::uint32_t ideg,
                                        const ImpactFactors& ifs);

}  // namespace acdmcp::metric
