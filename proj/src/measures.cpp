#include "cxbridge/measures.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "cxbridge/errors.hpp"

namespace cxbridge {

namespace {

double max_norm_distance(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) d = std::max(d, std::abs(a[k] - b[k]));
  return d;
}

}  // namespace

DiscreteMeasure::DiscreteMeasure(std::size_t dim, std::vector<double> atoms,
                                 std::vector<double> weights)
    : dim_(dim), atoms_(std::move(atoms)), weights_(std::move(weights)) {
  if (dim_ == 0) throw InputError("measure dimension must be positive");
  if (weights_.empty()) throw InputError("measure needs at least one atom");
  if (atoms_.size() != dim_ * weights_.size())
    throw InputError("atom array does not match dim * number of weights");
  double total = 0.0;
  for (double p : weights_) {
    if (!(p > 0.0) || !std::isfinite(p)) throw InputError("weights must be positive and finite");
    total += p;
  }
  if (std::abs(total - 1.0) > kMassTol)
    throw InputError("weights must sum to one (off by " + std::to_string(total - 1.0) + ")");
  for (double x : atoms_)
    if (!std::isfinite(x)) throw InputError("atoms must be finite");
  for (std::size_t i = 0; i < size(); ++i)
    for (std::size_t j = i + 1; j < size(); ++j)
      if (max_norm_distance(atom(i), atom(j)) <= kAtomSeparation)
        throw InputError("atoms " + std::to_string(i) + " and " + std::to_string(j) +
                         " coincide");
}

DiscreteMeasure DiscreteMeasure::from_rows(const std::vector<std::vector<double>>& atoms,
                                           std::vector<double> weights) {
  if (atoms.empty()) throw InputError("measure needs at least one atom");
  const std::size_t dim = atoms.front().size();
  std::vector<double> flat;
  flat.reserve(dim * atoms.size());
  for (const auto& row : atoms) {
    if (row.size() != dim) throw InputError("ragged atom rows");
    flat.insert(flat.end(), row.begin(), row.end());
  }
  return DiscreteMeasure(dim, std::move(flat), std::move(weights));
}

DiscreteMeasure DiscreteMeasure::dirac(std::size_t dim) {
  return DiscreteMeasure(dim, std::vector<double>(dim, 0.0), {1.0});
}

std::vector<double> DiscreteMeasure::barycenter() const {
  std::vector<double> b(dim_, 0.0);
  for (std::size_t i = 0; i < size(); ++i)
    for (std::size_t d = 0; d < dim_; ++d) b[d] += weights_[i] * atoms_[i * dim_ + d];
  return b;
}

bool DiscreteMeasure::is_centered(double tol) const {
  const auto b = barycenter();
  return std::sqrt(std::inner_product(b.begin(), b.end(), b.begin(), 0.0)) <= tol;
}

double DiscreteMeasure::second_moment() const {
  double s = 0.0;
  for (std::size_t i = 0; i < size(); ++i)
    for (double x : atom(i)) s += weights_[i] * x * x;
  return s;
}

NormalizedMeasure normalize_and_merge(std::size_t dim,
                                      const std::vector<std::vector<double>>& atoms,
                                      const std::vector<double>& weights) {
  if (dim == 0) throw InputError("dim must be positive");
  if (atoms.size() != weights.size())
    throw InputError("atoms and weights have different lengths");
  if (atoms.empty()) throw InputError("measure needs at least one atom");
  double total = 0.0;
  for (double p : weights) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw InputError("weights must be nonnegative");
    total += p;
  }
  if (!(total > 0.0)) throw InputError("weights sum to zero");

  std::vector<std::vector<double>> kept;
  std::vector<double> mass;
  std::size_t merged = 0;
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    if (atoms[i].size() != dim) throw InputError("atom " + std::to_string(i) + " has wrong length");
    if (weights[i] == 0.0) continue;
    auto hit = std::find_if(kept.begin(), kept.end(), [&](const std::vector<double>& a) {
      return max_norm_distance(a, atoms[i]) <= DiscreteMeasure::kAtomSeparation;
    });
    if (hit != kept.end()) {
      mass[static_cast<std::size_t>(hit - kept.begin())] += weights[i];
      ++merged;
    } else {
      kept.push_back(atoms[i]);
      mass.push_back(weights[i]);
    }
  }
  if (total != 1.0) {
    for (double& p : mass) p /= total;
    // Absorb the last rounding residue so the sum is one to machine precision.
    const double s = std::accumulate(mass.begin(), mass.end(), 0.0);
    auto big = std::max_element(mass.begin(), mass.end());
    *big += 1.0 - s;
  }
  return {DiscreteMeasure::from_rows(kept, std::move(mass)), total - 1.0, merged};
}

GaussianReference::GaussianReference(std::size_t dim_, double scale_) : dim(dim_), scale(scale_) {
  if (dim == 0) throw InputError("reference dimension must be positive");
  if (!(scale > 0.0 && scale <= 1.0)) throw InputError("reference scale must lie in (0, 1]");
}

Partition::Partition(std::vector<std::vector<std::size_t>> cells, std::size_t universe)
    : cells_(std::move(cells)), universe_(universe) {
  if (cells_.empty()) throw InputError("empty partition");
  std::vector<char> seen(universe_, 0);
  std::size_t count = 0;
  for (const auto& cell : cells_)
    for (std::size_t idx : cell) {
      if (idx >= universe_) throw InputError("partition index out of range");
      if (seen[idx]) throw InputError("partition cells overlap at index " + std::to_string(idx));
      seen[idx] = 1;
      ++count;
    }
  if (count != universe_) throw InputError("partition does not cover every index");
}

Partition Partition::singletons(std::size_t universe) {
  std::vector<std::vector<std::size_t>> cells(universe);
  for (std::size_t i = 0; i < universe; ++i) cells[i] = {i};
  return Partition(std::move(cells), universe);
}

Partition Partition::whole(std::size_t universe) {
  std::vector<std::size_t> all(universe);
  std::iota(all.begin(), all.end(), std::size_t{0});
  return Partition({std::move(all)}, universe);
}

DiscreteMeasure center(const DiscreteMeasure& measure) {
  const auto b = measure.barycenter();
  std::vector<double> atoms(measure.atoms().begin(), measure.atoms().end());
  for (std::size_t i = 0; i < measure.size(); ++i)
    for (std::size_t d = 0; d < measure.dim(); ++d) atoms[i * measure.dim() + d] -= b[d];
  return DiscreteMeasure(measure.dim(), std::move(atoms),
                         std::vector<double>(measure.weights().begin(), measure.weights().end()));
}

DiscreteMeasure coarsen_cx(const DiscreteMeasure& measure, const Partition& partition) {
  if (partition.universe() != measure.size())
    throw InputError("partition universe does not match the number of atoms");
  const std::size_t n = measure.dim();
  std::vector<std::vector<double>> atoms;
  std::vector<double> weights;
  for (const auto& cell : partition.cells()) {
    if (cell.empty()) continue;
    double mass = 0.0;
    std::vector<double> bary(n, 0.0);
    for (std::size_t i : cell) {
      mass += measure.weight(i);
      for (std::size_t d = 0; d < n; ++d) bary[d] += measure.weight(i) * measure.atom(i)[d];
    }
    for (double& v : bary) v /= mass;
    if (cell.size() == 1) {
      // keep singleton atoms bit-exact
      auto a = measure.atom(cell.front());
      bary.assign(a.begin(), a.end());
    }
    atoms.push_back(std::move(bary));
    weights.push_back(mass);
  }
  // Cells with coinciding barycenters collapse into one atom.
  std::vector<std::vector<double>> merged_atoms;
  std::vector<double> merged_weights;
  for (std::size_t c = 0; c < atoms.size(); ++c) {
    auto hit = std::find_if(merged_atoms.begin(), merged_atoms.end(), [&](const auto& a) {
      return max_norm_distance(a, atoms[c]) <= DiscreteMeasure::kAtomSeparation;
    });
    if (hit != merged_atoms.end()) {
      merged_weights[static_cast<std::size_t>(hit - merged_atoms.begin())] += weights[c];
    } else {
      merged_atoms.push_back(atoms[c]);
      merged_weights.push_back(weights[c]);
    }
  }
  return DiscreteMeasure::from_rows(merged_atoms, std::move(merged_weights));
}

}  // namespace cxbridge
