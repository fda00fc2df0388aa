#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>

#include <json.hpp>

#include "cxbridge/combin.hpp"
#include "cxbridge/entropic.hpp"
#include "cxbridge/measures.hpp"

namespace cxbridge {

/// Optional "decompose" block. Unset fields fall back to the run config.
struct DecomposeBlock {
  std::optional<std::size_t> steps;
  std::optional<std::size_t> count;
  std::optional<std::uint64_t> seed;
  std::size_t map_points = 4097;
};

/// Optional "comb" block: a family on {0..ground-1} and probe parameters.
struct CombBlock {
  combin::SubsetFamily family{1};
  double p = 0.5;
  unsigned q = 2;
  unsigned l = 1;
  std::uint64_t budget = 1'000'000;
};

/// A loaded instance file.
///
/// Schema: {"dim", "atoms", "weights", "scale" = 1, "slack" = 0.05, "fit",
/// "decompose", "comb"}. Unknown keys are rejected at every level; weights
/// are normalized and near-duplicate atoms merged.
struct Instance {
  DiscreteMeasure measure = DiscreteMeasure::dirac(1);
  double weight_correction = 0.0;
  std::size_t merged_atoms = 0;
  double scale = 1.0;
  double slack = 0.05;
  FitConfig fit;
  bool fit_accuracy_set = false;
  std::optional<DecomposeBlock> decompose;
  std::optional<CombBlock> comb;
};

Instance parse_instance(const nlohmann::json& doc);
Instance load_instance(const std::string& path);

/// Reads a JSON document from a file; throws InputError on I/O or parse errors.
nlohmann::json read_json_file(const std::string& path);

/// Family given as a list of subsets ([[0, 2], [1]]) or hex masks (["0x5"]).
combin::SubsetFamily parse_family(const nlohmann::json& members, unsigned ground);

/// Potentials file {"U": [...], "V": [[...], ...]} as written by fit-coupling.
DualPotentials parse_potentials(const nlohmann::json& doc, const DiscreteMeasure& measure);
nlohmann::ordered_json potentials_json(const DualPotentials& pot);

}  // namespace cxbridge
