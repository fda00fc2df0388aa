#include "cxbridge/instance.hpp"

#include <cmath>
#include <fstream>
#include <initializer_list>
#include <set>

#include "cxbridge/errors.hpp"

namespace cxbridge {

using nlohmann::json;

namespace {

void allow_keys(const json& obj, std::initializer_list<const char*> keys, const std::string& where) {
  if (!obj.is_object()) throw InputError(where + " must be an object");
  const std::set<std::string> known(keys.begin(), keys.end());
  for (const auto& item : obj.items())
    if (!known.count(item.key())) throw InputError("unknown key '" + item.key() + "' in " + where);
}

double number(const json& v, const std::string& what) {
  if (!v.is_number()) throw InputError(what + " must be a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) throw InputError(what + " must be finite");
  return x;
}

std::uint64_t count(const json& v, const std::string& what) {
  if (!v.is_number_integer() || v.get<std::int64_t>() < 0) throw InputError(what + " must be a nonnegative integer");
  return v.get<std::uint64_t>();
}

std::vector<double> numbers(const json& v, const std::string& what) {
  if (!v.is_array()) throw InputError(what + " must be an array");
  std::vector<double> out;
  for (const auto& x : v) out.push_back(number(x, what + " entry"));
  return out;
}

FitConfig parse_fit(const json& j, double slack, bool& accuracy_set) {
  allow_keys(j, {"grad_tol", "norm_cap", "max_iters", "accuracy"}, "fit");
  FitConfig cfg;
  cfg.slack = slack;
  if (j.contains("grad_tol")) cfg.grad_tol = number(j["grad_tol"], "fit.grad_tol");
  if (j.contains("norm_cap")) cfg.norm_cap = number(j["norm_cap"], "fit.norm_cap");
  if (j.contains("max_iters")) cfg.max_iters = count(j["max_iters"], "fit.max_iters");
  if (j.contains("accuracy")) {
    if (!j["accuracy"].is_string()) throw InputError("fit.accuracy must be a string");
    cfg.accuracy = parse_accuracy(j["accuracy"].get<std::string>());
    accuracy_set = true;
  }
  cfg.validate();
  return cfg;
}

DecomposeBlock parse_decompose(const json& j) {
  allow_keys(j, {"steps", "count", "seed", "map_points"}, "decompose");
  DecomposeBlock b;
  if (j.contains("steps")) b.steps = count(j["steps"], "decompose.steps");
  if (j.contains("count")) b.count = count(j["count"], "decompose.count");
  if (j.contains("seed")) b.seed = count(j["seed"], "decompose.seed");
  if (j.contains("map_points")) b.map_points = count(j["map_points"], "decompose.map_points");
  if (b.map_points < 3) throw InputError("decompose.map_points must be at least 3");
  return b;
}

CombBlock parse_comb(const json& j) {
  allow_keys(j, {"ground", "family", "p", "q", "L", "budget"}, "comb");
  if (!j.contains("ground") || !j.contains("family")) throw InputError("comb needs 'ground' and 'family'");
  const auto ground = count(j["ground"], "comb.ground");
  if (ground > combin::kMaxGround) throw InputError("comb.ground must be at most 24");
  CombBlock b;
  b.family = parse_family(j["family"], static_cast<unsigned>(ground));
  if (j.contains("p")) b.p = number(j["p"], "comb.p");
  if (j.contains("q")) b.q = static_cast<unsigned>(count(j["q"], "comb.q"));
  if (j.contains("L")) b.l = static_cast<unsigned>(count(j["L"], "comb.L"));
  if (j.contains("budget")) b.budget = count(j["budget"], "comb.budget");
  if (!(b.p > 0.0 && b.p < 1.0)) throw InputError("comb.p must lie in (0, 1)");
  if (b.q == 0 || b.l == 0) throw InputError("comb.q and comb.L must be positive");
  return b;
}

}  // namespace

combin::SubsetFamily parse_family(const json& members, unsigned ground) {
  if (!members.is_array()) throw InputError("family must be an array");
  std::vector<combin::Mask> masks;
  for (const auto& member : members) {
    combin::Mask m = 0;
    if (member.is_string()) {
      const auto text = member.get<std::string>();
      std::size_t used = 0;
      unsigned long v = 0;
      try {
        v = std::stoul(text, &used, 16);
      } catch (const std::exception&) {
        throw InputError("bad hex mask '" + text + "'");
      }
      if (used != text.size() || v > combin::full_mask(ground)) throw InputError("bad hex mask '" + text + "'");
      m = static_cast<combin::Mask>(v);
    } else if (member.is_array()) {
      for (const auto& e : member) {
        const auto k = count(e, "family element");
        if (k >= ground) throw InputError("family element outside the ground set");
        m |= combin::Mask{1} << k;
      }
    } else {
      throw InputError("family members must be lists or hex strings");
    }
    masks.push_back(m);
  }
  return combin::SubsetFamily(ground, std::move(masks));
}

Instance parse_instance(const json& doc) {
  allow_keys(doc, {"dim", "atoms", "weights", "scale", "slack", "fit", "decompose", "comb"}, "instance");
  for (const char* key : {"dim", "atoms", "weights"})
    if (!doc.contains(key)) throw InputError(std::string("instance is missing '") + key + "'");
  const auto dim = count(doc["dim"], "dim");
  if (dim == 0) throw InputError("dim must be positive");
  if (!doc["atoms"].is_array()) throw InputError("atoms must be an array");
  std::vector<std::vector<double>> atoms;
  for (const auto& a : doc["atoms"]) atoms.push_back(numbers(a, "atom"));
  const auto weights = numbers(doc["weights"], "weights");

  Instance inst;
  auto loaded = normalize_and_merge(dim, atoms, weights);
  inst.measure = std::move(loaded.measure);
  inst.weight_correction = loaded.weight_correction;
  inst.merged_atoms = loaded.merged_atoms;
  if (doc.contains("scale")) inst.scale = number(doc["scale"], "scale");
  if (doc.contains("slack")) inst.slack = number(doc["slack"], "slack");
  if (!(inst.scale > 0.0 && inst.scale <= 1.0)) throw InputError("scale must lie in (0, 1]");
  if (!(inst.slack > 0.0 && inst.slack < 1.0)) throw InputError("slack must lie in (0, 1)");
  inst.fit.slack = inst.slack;
  if (doc.contains("fit")) inst.fit = parse_fit(doc["fit"], inst.slack, inst.fit_accuracy_set);
  if (doc.contains("decompose")) inst.decompose = parse_decompose(doc["decompose"]);
  if (doc.contains("comb")) inst.comb = parse_comb(doc["comb"]);
  return inst;
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw InputError("'" + path + "' is not valid JSON: " + e.what());
  }
}

Instance load_instance(const std::string& path) { return parse_instance(read_json_file(path)); }

DualPotentials parse_potentials(const json& doc, const DiscreteMeasure& measure) {
  if (!doc.is_object() || !doc.contains("U") || !doc.contains("V")) throw InputError("potentials need 'U' and 'V'");
  const auto u = numbers(doc["U"], "U");
  if (!doc["V"].is_array()) throw InputError("V must be an array");
  const std::size_t m = measure.size(), n = measure.dim();
  if (u.size() != m || doc["V"].size() != m) throw InputError("potentials do not match the number of atoms");
  auto pot = DualPotentials::zeros(m, n);
  pot.U = u;
  for (std::size_t i = 0; i < m; ++i) {
    const auto v = numbers(doc["V"][i], "V row");
    if (v.size() != n) throw InputError("V row has the wrong dimension");
    std::copy(v.begin(), v.end(), pot.V.begin() + static_cast<std::ptrdiff_t>(i * n));
  }
  return pot;
}

nlohmann::ordered_json potentials_json(const DualPotentials& pot) {
  nlohmann::ordered_json out;
  out["U"] = pot.U;
  auto rows = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < pot.atoms; ++i) {
    const auto s = pot.slope(i);
    rows.push_back(std::vector<double>(s.begin(), s.end()));
  }
  out["V"] = rows;
  return out;
}

}  // namespace cxbridge
