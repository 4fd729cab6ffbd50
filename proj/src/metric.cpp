#include "acdmcp/metric.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace acdmcp::metric {

namespace {

// Higher value preferred; values within kTieEpsilon tie.
std::strong_ordering prefer_higher(double a, double b) {
  if (std::fabs(a - b) <= kTieEpsilon) return std::strong_ordering::equal;
  return a > b ? std::strong_ordering::greater : std::strong_ordering::less;
}

std::strong_ordering prefer_fewer(std::uint32_t a, std::uint32_t b) { return b <=> a; }

std::strong_ordering prefer_nid(NodeId a, NodeId b, bool higher_wins) {
  return higher_wins ? (a <=> b) : (b <=> a);
}

bool in_unit(double x) { return x >= 0.0 && x <= 1.0; }

}  // namespace

bool ImpactFactors::valid_three_term() const {
  return in_unit(rei) && in_unit(ndi) && in_unit(link) &&
         std::fabs(rei + ndi + link - 1.0) <= kWeightSumTolerance;
}

bool ImpactFactors::valid_four_term() const {
  return in_unit(rei) && in_unit(ndi) && in_unit(link) && in_unit(zeta) &&
         std::fabs(rei + ndi + link + zeta - 1.0) <= kWeightSumTolerance;
}

ImpactFactors ImpactFactors::from_percent(double rei_pct, double link_pct, double ndi_pct) {
  const double total = rei_pct + link_pct + ndi_pct;
  if (total <= 0.0) throw MetricError("impact factor percentages must be positive");
  ImpactFactors ifs{rei_pct / total, ndi_pct / total, link_pct / total, 0.0};
  if (std::fabs(total - 100.0) > 1e-6) {
    throw MetricError("impact factor percentages must sum to 100, got " + std::to_string(total));
  }
  return ifs;
}

ImpactFactors ImpactFactors::with_hop_weight(double z) const {
  if (!in_unit(z) || z >= 1.0) throw MetricError("hop weight must lie in [0,1)");
  const double scale = 1.0 - z;
  return ImpactFactors{rei * scale, ndi * scale, link * scale, z};
}

std::string ImpactFactors::label() const {
  std::ostringstream os;
  os << std::lround(rei * 100) << "/" << std::lround(link * 100) << "/" << std::lround(ndi * 100);
  return os.str();
}

void validate_three_term(const ImpactFactors& ifs) {
  if (!ifs.valid_three_term()) {
    throw MetricError("impact factors (rei, ndi, link) must each lie in [0,1] and sum to 1");
  }
}

void validate_four_term(const ImpactFactors& ifs) {
  if (!ifs.valid_four_term()) {
    throw MetricError("impact factors (rei, ndi, link, zeta) must each lie in [0,1] and sum to 1");
  }
}

double packet_reception_ratio(std::uint64_t received, std::uint64_t sent) {
  if (sent == 0) return 0.0;
  const double r = static_cast<double>(received) / static_cast<double>(sent);
  return r > 1.0 ? 1.0 : r;
}

double compute_rei(const EnergyState& energy) {
  if (!(energy.e_th > 0.0)) throw MetricError("threshold energy must be positive");
  if (energy.e_re > energy.e_th) {
    const double ratio = (energy.e_re - energy.e_th) / energy.e_th;
    return ratio > 1.0 ? 1.0 : ratio;
  }
  return kReiFloor;
}

double compute_ndi(std::uint32_t degree, std::uint32_t ideg) {
  if (ideg == 0) throw MetricError("ideal degree must be at least 1");
  if (degree == 0) return 0.0;
  if (degree == ideg) return 1.0;
  if (degree > ideg) return static_cast<double>(ideg) / static_cast<double>(degree);
  return static_cast<double>(degree) / static_cast<double>(ideg);
}

double compute_mlr(std::span<const double> per_link_reliability) {
  if (per_link_reliability.empty()) throw IsolatedNodeError();
  const double sum = std::accumulate(per_link_reliability.begin(), per_link_reliability.end(), 0.0);
  return sum / static_cast<double>(per_link_reliability.size());
}

double compute_elr(std::span<const double> path_link_reliability) {
  double product = 1.0;
  for (double lr : path_link_reliability) product *= lr;
  return product;
}

double chcv_election(double rei, double ndi, double mlr_in, const ImpactFactors& ifs) {
  return rei * ifs.rei + ndi * ifs.ndi + mlr_in * ifs.link;
}

double chcv_join(double rei, double ndi, double lr_out, const ImpactFactors& ifs) {
  return rei * ifs.rei + ndi * ifs.ndi + lr_out * ifs.link;
}

double chcv_multihop(double rei, double ndi, double elr, std::uint32_t hops, const ImpactFactors& ifs) {
  if (hops == 0) throw MetricError("hop distance must be at least 1");
  return rei * ifs.rei + ndi * ifs.ndi + elr * ifs.link + (1.0 / static_cast<double>(hops)) * ifs.zeta;
}

std::strong_ordering compare_degree(std::uint32_t a, std::uint32_t b, std::uint32_t ideg) {
  if (a == b) return std::strong_ordering::equal;
  if (a == ideg) return std::strong_ordering::greater;
  if (b == ideg) return std::strong_ordering::less;
  if (a < ideg && b < ideg) return a <=> b;
  // Both above, or straddling: the lower degree is closer to (or below) IDEG.
  return b <=> a;
}

std::strong_ordering compare_election_candidates(const ScoredCandidate& a, const ScoredCandidate& b,
                                                 const TieBreakPolicy& policy) {
  if (auto c = prefer_higher(a.score, b.score); c != 0) return c;
  if (auto c = prefer_higher(a.profile.link_term, b.profile.link_term); c != 0) return c;
  if (auto c = prefer_higher(a.profile.e_re, b.profile.e_re); c != 0) return c;
  if (auto c = compare_degree(a.profile.degree, b.profile.degree, policy.ideg); c != 0) return c;
  return prefer_nid(a.profile.node_id, b.profile.node_id, policy.higher_nid_wins);
}

std::strong_ordering compare_join_offers(const ScoredCandidate& a, const ScoredCandidate& b,
                                         const TieBreakPolicy& policy) {
  if (auto c = prefer_higher(a.score, b.score); c != 0) return c;
  if (auto c = prefer_higher(a.profile.link_term, b.profile.link_term); c != 0) return c;
  if (auto c = compare_degree(a.profile.degree, b.profile.degree, policy.ideg); c != 0) return c;
  if (auto c = prefer_higher(a.profile.e_re, b.profile.e_re); c != 0) return c;
  return prefer_nid(a.profile.node_id, b.profile.node_id, policy.higher_nid_wins);
}

std::strong_ordering compare_transitive_offers(const ScoredCandidate& a, const ScoredCandidate& b,
                                               const TieBreakPolicy& policy) {
  if (auto c = prefer_higher(a.score, b.score); c != 0) return c;
  if (auto c = prefer_higher(a.profile.link_term, b.profile.link_term); c != 0) return c;
  if (auto c = prefer_fewer(a.profile.hops, b.profile.hops); c != 0) return c;
  if (auto c = compare_degree(a.profile.degree, b.profile.degree, policy.ideg); c != 0) return c;
  if (auto c = prefer_higher(a.profile.e_re, b.profile.e_re); c != 0) return c;
  return prefer_nid(a.profile.node_id, b.profile.node_id, policy.higher_nid_wins);
}

std::strong_ordering compare_iccom_offers(const ScoredCandidate& a, const ScoredCandidate& b,
                                          const TieBreakPolicy& policy) {
  if (auto c = prefer_higher(a.score, b.score); c != 0) return c;
  if (auto c = prefer_higher(a.profile.link_term, b.profile.link_term); c != 0) return c;
  if (auto c = prefer_fewer(a.profile.hops, b.profile.hops); c != 0) return c;
  if (auto c = prefer_higher(a.profile.e_re, b.profile.e_re); c != 0) return c;
  return prefer_nid(a.profile.node_id, b.profile.node_id, policy.higher_nid_wins);
}

double score_for_election(const CandidateProfile& p, double e_th, std::uint32_t ideg, const ImpactFactors& ifs) {
  return chcv_election(compute_rei({p.e_re, e_th}), compute_ndi(p.degree, ideg), p.link_term, ifs);
}

double score_for_join(const CandidateProfile& p, double e_th, std::uint32_t ideg, const ImpactFactors& ifs) {
  return chcv_join(compute_rei({p.e_re, e_th}), compute_ndi(p.degree, ideg), p.link_term, ifs);
}

double score_for_multihop(const CandidateProfile& p, double e_th, std::uint32_t ideg, const ImpactFactors& ifs) {
  return chcv_multihop(compute_rei({p.e_re, e_th}), compute_ndi(p.degree, ideg), p.link_term, p.hops, ifs);
}

}  // namespace acdmcp::metric
