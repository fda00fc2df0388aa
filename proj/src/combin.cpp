#include "cxbridge/combin.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <unordered_set>

#include "cxbridge/errors.hpp"
#include "cxbridge/parallel.hpp"

namespace cxbridge::combin {

namespace {

void check_p(double p) {
  if (!(p > 0.0 && p < 1.0)) throw InputError("p must lie in (0, 1)");
}

// sum_k count[k] p^k (1 - p)^(n - k)
double by_popcount(const std::array<std::uint64_t, kMaxGround + 1>& count, unsigned n, double p) {
  double acc = 0.0;
  for (unsigned k = 0; k <= n; ++k)
    if (count[k]) acc += static_cast<double>(count[k]) * std::pow(p, k) * std::pow(1.0 - p, n - k);
  return acc;
}

// sum of p^|I| over the cover, grouped by popcount
double cover_weight(const std::vector<Mask>& cover, double p) {
  std::array<std::uint64_t, 33> count{};
  for (Mask m : cover) ++count[popcount(m)];
  double acc = 0.0;
  for (unsigned k = 0; k < count.size(); ++k)
    if (count[k]) acc += static_cast<double>(count[k]) * std::pow(p, k);
  return acc;
}

struct Bits {
  std::vector<std::uint64_t> words;

  explicit Bits(std::size_t n = 0) : words((n + 63) / 64, 0) {}
  void set(std::size_t i) { words[i / 64] |= std::uint64_t{1} << (i % 64); }
  bool test(std::size_t i) const { return (words[i / 64] >> (i % 64)) & 1; }
  void merge(const Bits& o) {
    for (std::size_t w = 0; w < words.size(); ++w) words[w] |= o.words[w];
  }
  std::size_t gain(const Bits& covered) const {
    std::size_t n = 0;
    for (std::size_t w = 0; w < words.size(); ++w) n += __builtin_popcountll(words[w] & ~covered.words[w]);
    return n;
  }
};

struct CoverProblem {
  std::vector<Mask> candidates;
  std::vector<double> weight;
  std::vector<Bits> covers;  // per candidate, members it covers

  CoverProblem(const SubsetFamily& s, double p) : candidates(cover_candidates(s)) {
    const auto& mem = s.members();
    for (Mask c : candidates) {
      weight.push_back(std::pow(p, popcount(c)));
      Bits b(mem.size());
      for (std::size_t e = 0; e < mem.size(); ++e)
        if (upset_membership(c, mem[e])) b.set(e);
      covers.push_back(std::move(b));
    }
  }
};

}  // namespace

SubsetFamily::SubsetFamily(unsigned ground, std::vector<Mask> members) : ground_(ground), members_(std::move(members)) {
  if (ground > kMaxGround) throw InputError("ground set larger than 24");
  const Mask top = full_mask(ground);
  for (Mask m : members_)
    if (m & ~top) throw InputError("mask outside the ground set");
  std::sort(members_.begin(), members_.end());
  members_.erase(std::unique(members_.begin(), members_.end()), members_.end());
}

SubsetFamily SubsetFamily::upset(unsigned ground, Mask i) {
  return where(ground, [i](Mask j) { return upset_membership(i, j); });
}

SubsetFamily SubsetFamily::cube(unsigned ground) {
  return where(ground, [](Mask) { return true; });
}

SubsetFamily SubsetFamily::where(unsigned ground, const std::function<bool(Mask)>& pred) {
  if (ground > kMaxGround) throw InputError("ground set larger than 24");
  std::vector<Mask> out;
  for (Mask m = 0; m <= full_mask(ground); ++m) {
    if (pred(m)) out.push_back(m);
    if (m == full_mask(ground)) break;
  }
  return SubsetFamily(ground, std::move(out));
}

bool SubsetFamily::contains(Mask m) const { return std::binary_search(members_.begin(), members_.end(), m); }

bool SubsetFamily::subset_of(const SubsetFamily& other) const {
  return std::includes(other.members_.begin(), other.members_.end(), members_.begin(), members_.end());
}

double mu_p(const SubsetFamily& family, double p) {
  check_p(p);
  std::array<std::uint64_t, kMaxGround + 1> count{};
  for (Mask m : family.members()) ++count[popcount(m)];
  return by_popcount(count, family.ground(), p);
}

double mu_p(unsigned ground, const std::function<bool(Mask)>& pred, double p) {
  check_p(p);
  if (ground > kMaxGround) throw InputError("ground set larger than 24");
  std::array<std::uint64_t, kMaxGround + 1> count{};
  const Mask top = full_mask(ground);
  for (Mask m = 0;; ++m) {
    if (pred(m)) ++count[popcount(m)];
    if (m == top) break;
  }
  return by_popcount(count, ground, p);
}

double mu_p_upset(Mask i, double p) {
  check_p(p);
  return std::pow(p, popcount(i));
}

SubsetFamily blocked_qfold(const SubsetFamily& a, unsigned q, const BlockedOptions& options) {
  if (q == 0) throw InputError("q must be at least 1");
  const unsigned n = a.ground();
  if (n > kMaxDpGround) throw ResourceError("blocked_qfold table needs N <= 20");
  const std::size_t size = std::size_t{1} << n;

  // down[x]: x is contained in some member
  std::vector<char> down(size, 0);
  for (Mask m : a.members()) down[m] = 1;
  for (unsigned b = 0; b < n; ++b)
    for (std::size_t x = 0; x < size; ++x)
      if (!(x >> b & 1) && down[x | (std::size_t{1} << b)]) down[x] = 1;
  std::vector<Mask> maximal;
  for (Mask m : a.members()) {
    bool top = true;
    for (unsigned b = 0; b < n && top; ++b)
      if (!(m >> b & 1) && down[m | (Mask{1} << b)]) top = false;
    if (top) maximal.push_back(m);
  }

  const double work = static_cast<double>(q) * static_cast<double>(maximal.size()) * static_cast<double>(size);
  if (work > static_cast<double>(options.work_cap)) throw ResourceError("blocked_qfold work cap exceeded");

  std::vector<char> prev(size, 0), cur(size, 0);
  prev[0] = 1;
  for (unsigned k = 1; k <= q; ++k) {
    parallel_for(size, options.threads, [&](std::size_t b, std::size_t e) {
      for (std::size_t x = b; x < e; ++x) {
        char hit = 0;
        for (Mask y : maximal)
          if (prev[x & ~static_cast<std::size_t>(y)]) {
            hit = 1;
            break;
          }
        cur[x] = hit;
      }
    });
    std::swap(prev, cur);
  }

  std::vector<Mask> out;
  for (std::size_t x = 0; x < size; ++x)
    if (!prev[x]) out.push_back(static_cast<Mask>(x));
  return SubsetFamily(n, std::move(out));
}

bool verify_certificate(const PSmallCertificate& cert, const SubsetFamily& s) {
  if (!(cert.p > 0.0 && cert.p < 1.0)) return false;
  const Mask top = full_mask(s.ground());
  for (Mask i : cert.cover)
    if (i & ~top) return false;
  for (Mask x : s.members()) {
    const bool covered =
        std::any_of(cert.cover.begin(), cert.cover.end(), [x](Mask i) { return upset_membership(i, x); });
    if (!covered) return false;
  }
  return cover_weight(cert.cover, cert.p) <= 0.5;
}

std::vector<Mask> cover_candidates(const SubsetFamily& s, std::size_t cap) {
  const auto& mem = s.members();
  std::unordered_set<Mask> seen(mem.begin(), mem.end());
  std::deque<Mask> frontier(mem.begin(), mem.end());
  while (!frontier.empty() && seen.size() < cap) {
    const Mask c = frontier.front();
    frontier.pop_front();
    for (Mask m : mem) {
      const Mask meet = c & m;
      if (seen.insert(meet).second) {
        frontier.push_back(meet);
        if (seen.size() >= cap) break;
      }
    }
  }
  std::vector<Mask> out(seen.begin(), seen.end());
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

CoverResult greedy(const CoverProblem& prob, std::size_t members) {
  CoverResult r;
  Bits covered(members);
  std::size_t left = members;
  while (left > 0) {
    std::size_t best = prob.candidates.size();
    double best_ratio = 0.0;
    std::size_t best_gain = 0;
    for (std::size_t c = 0; c < prob.candidates.size(); ++c) {
      const std::size_t g = prob.covers[c].gain(covered);
      if (g == 0) continue;
      const double ratio = prob.weight[c] / static_cast<double>(g);
      if (best == prob.candidates.size() || ratio < best_ratio) {
        best = c;
        best_ratio = ratio;
        best_gain = g;
      }
    }
    r.cover.push_back(prob.candidates[best]);
    covered.merge(prob.covers[best]);
    left -= best_gain;
  }
  return r;
}

class BranchAndBound {
 public:
  BranchAndBound(const CoverProblem& prob, std::size_t members, double p, std::uint64_t budget)
      : prob_(prob), members_(members), p_(p), budget_(budget), options_(members), min_weight_(members, 0.0) {
    for (std::size_t c = 0; c < prob.candidates.size(); ++c)
      for (std::size_t e = 0; e < members; ++e)
        if (prob.covers[c].test(e)) options_[e].push_back(c);
    for (std::size_t e = 0; e < members; ++e) {
      auto& o = options_[e];
      std::stable_sort(o.begin(), o.end(), [&](std::size_t x, std::size_t y) { return prob.weight[x] < prob.weight[y]; });
      min_weight_[e] = prob.weight[o.front()];
    }
  }

  CoverResult run(CoverResult incumbent) {
    best_ = incumbent.cover;
    best_weight_ = cover_weight(best_, p_);
    Bits covered(members_);
    std::vector<Mask> chosen;
    search(covered, 0.0, chosen);
    CoverResult r;
    r.cover = best_;
    r.complete = !exhausted_;
    r.nodes = nodes_;
    return r;
  }

 private:
  void search(Bits& covered, double weight, std::vector<Mask>& chosen) {
    if (exhausted_) return;
    if (++nodes_ > budget_) {
      exhausted_ = true;
      return;
    }
    std::size_t pick = members_;
    double bound = 0.0;
    for (std::size_t e = 0; e < members_; ++e) {
      if (covered.test(e)) continue;
      bound = std::max(bound, min_weight_[e]);
      if (pick == members_ || options_[e].size() < options_[pick].size()) pick = e;
    }
    if (pick == members_) {
      if (weight < best_weight_) {
        best_weight_ = weight;
        best_ = chosen;
      }
      return;
    }
    if (weight + bound >= best_weight_) return;
    for (std::size_t c : options_[pick]) {
      if (weight + prob_.weight[c] >= best_weight_) break;
      Bits next = covered;
      next.merge(prob_.covers[c]);
      chosen.push_back(prob_.candidates[c]);
      search(next, weight + prob_.weight[c], chosen);
      chosen.pop_back();
      if (exhausted_) return;
    }
  }

  const CoverProblem& prob_;
  std::size_t members_;
  double p_;
  std::uint64_t budget_;
  std::vector<std::vector<std::size_t>> options_;
  std::vector<double> min_weight_;
  std::vector<Mask> best_;
  double best_weight_ = 0.0;
  std::uint64_t nodes_ = 0;
  bool exhausted_ = false;
};

}  // namespace

CoverResult greedy_cover(const SubsetFamily& s, double p) {
  check_p(p);
  const CoverProblem prob(s, p);
  auto r = greedy(prob, s.size());
  r.weight = cover_weight(r.cover, p);
  r.complete = false;
  return r;
}

CoverResult min_weight_cover(const SubsetFamily& s, double p, std::uint64_t budget) {
  check_p(p);
  const CoverProblem prob(s, p);
  const CoverResult seed = greedy(prob, s.size());
  auto r = BranchAndBound(prob, s.size(), p, budget).run(seed);
  std::sort(r.cover.begin(), r.cover.end());
  r.weight = cover_weight(r.cover, p);
  return r;
}

std::optional<PSmallCertificate> psmall_search(const SubsetFamily& s, double p, std::uint64_t budget) {
  check_p(p);
  const CoverResult r = s.ground() <= 12 ? min_weight_cover(s, p, budget) : greedy_cover(s, p);
  PSmallCertificate cert{r.cover, p, r.weight};
  if (!verify_certificate(cert, s)) return std::nullopt;
  return cert;
}

ProbeReport corollary_probe(const SubsetFamily& a, double p, unsigned q, unsigned l, std::uint64_t budget,
                            const BlockedOptions& options) {
  check_p(p);
  if (q == 0) throw InputError("q must be at least 1");
  if (l == 0) throw InputError("L must be at least 1");
  ProbeReport rep;
  rep.mu = mu_p(a, p);
  rep.threshold = 1.0 - 1.0 / static_cast<double>(q);
  rep.hypothesis_met = rep.mu >= rep.threshold;
  const SubsetFamily blocked = blocked_qfold(a, q, options);
  rep.blocked_size = blocked.size();
  rep.target_p = std::pow(p, l);
  rep.certificate = psmall_search(blocked, rep.target_p, budget);
  if (!rep.hypothesis_met)
    rep.outcome = "hypothesis_not_met";
  else
    rep.outcome = rep.certificate ? "certified" : "no_certificate_found";
  return rep;
}

}  // namespace cxbridge::combin
