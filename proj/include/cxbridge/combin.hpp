#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace cxbridge::combin {

using Mask = std::uint32_t;

inline constexpr unsigned kMaxGround = 24;
inline constexpr unsigned kMaxDpGround = 20;

inline unsigned popcount(Mask m) { return static_cast<unsigned>(__builtin_popcount(m)); }

inline Mask full_mask(unsigned n) { return n >= 32 ? ~Mask{0} : (Mask{1} << n) - 1; }

/// Family of subsets of {0, ..., N-1} stored as sorted, distinct bitmasks.
class SubsetFamily {
 public:
  explicit SubsetFamily(unsigned ground, std::vector<Mask> members = {});

  static SubsetFamily upset(unsigned ground, Mask i);
  static SubsetFamily cube(unsigned ground);
  static SubsetFamily where(unsigned ground, const std::function<bool(Mask)>& pred);

  unsigned ground() const noexcept { return ground_; }
  const std::vector<Mask>& members() const noexcept { return members_; }
  std::size_t size() const noexcept { return members_.size(); }
  bool empty() const noexcept { return members_.empty(); }
  bool contains(Mask m) const;
  /// Every member of this family is a member of `other`.
  bool subset_of(const SubsetFamily& other) const;

  bool operator==(const SubsetFamily&) const = default;

 private:
  unsigned ground_;
  std::vector<Mask> members_;
};

/// True when J lies in the upper set H_I, i.e. I is a subset of J.
inline bool upset_membership(Mask i, Mask j) { return (i & j) == i; }

/// mu_p(family) under the Bernoulli(p) product measure, summed by popcount
/// class so that only N + 1 floating terms are added.
double mu_p(const SubsetFamily& family, double p);
double mu_p(unsigned ground, const std::function<bool(Mask)>& pred, double p);
/// Closed form p^|I|.
double mu_p_upset(Mask i, double p);

struct BlockedOptions {
  std::uint64_t work_cap = std::uint64_t{1} << 34;  ///< bound on table updates
  unsigned threads = 1;
};

/// A^(q): masks that are not contained in the union of any q members of A.
///
/// Level k of the table marks the masks coverable by k members. Only the
/// maximal members of A take part, since the table is closed under subsets.
/// Throws ResourceError when N > 20 or the work estimate exceeds the cap.
SubsetFamily blocked_qfold(const SubsetFamily& a, unsigned q, const BlockedOptions& options = {});

struct PSmallCertificate {
  std::vector<Mask> cover;  ///< the family of masks I
  double p = 0.5;
  double weight = 0.0;      ///< sum of p^|I|
};

/// Independent check: every member of `s` contains some I of the cover and the
/// recomputed weight is at most one half.
bool verify_certificate(const PSmallCertificate& cert, const SubsetFamily& s);

struct CoverResult {
  std::vector<Mask> cover;
  double weight = 0.0;
  bool complete = false;  ///< branch and bound finished within its budget
  std::uint64_t nodes = 0;
};

/// Candidate masks for covering `s`: members and their intersections, closed
/// under pairwise AND up to `cap` entries.
std::vector<Mask> cover_candidates(const SubsetFamily& s, std::size_t cap = std::size_t{1} << 16);

/// Greedy cover: repeatedly takes the candidate with the smallest weight per
/// newly covered member, ties to the smaller mask.
CoverResult greedy_cover(const SubsetFamily& s, double p);

/// Minimum-weight cover by branch and bound, seeded with the greedy cover.
/// `complete` is false when `budget` search nodes did not suffice, in which
/// case the best cover found so far is returned.
CoverResult min_weight_cover(const SubsetFamily& s, double p, std::uint64_t budget);

/// Sound but incomplete p-smallness search: exact search for N <= 12,
/// greedy above. Returns a verified certificate or nothing.
std::optional<PSmallCertificate> psmall_search(const SubsetFamily& s, double p, std::uint64_t budget = 1'000'000);

struct ProbeReport {
  double mu = 0.0;            ///< mu_p(A)
  double threshold = 0.0;     ///< 1 - 1/q
  bool hypothesis_met = false;
  std::size_t blocked_size = 0;
  double target_p = 0.0;      ///< p^L
  std::optional<PSmallCertificate> certificate;
  std::string outcome;        ///< hypothesis_not_met, certified or no_certificate_found
};

/// Exploratory check of "mu_p(A) >= 1 - 1/q implies A^(q) is p^L-small".
/// A missing certificate is reported as such, never as a counterexample.
ProbeReport corollary_probe(const SubsetFamily& a, double p, unsigned q, unsigned l,
                            std::uint64_t budget = 1'000'000, const BlockedOptions& options = {});

}  // namespace cxbridge::combin
