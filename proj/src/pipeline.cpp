#include "cxbridge/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <sstream>

#include "cxbridge/decompose1d.hpp"
#include "cxbridge/errors.hpp"
#include "cxbridge/stats.hpp"

namespace cxbridge {

namespace {

int severity(int code) {
  switch (code) {
    case exit_code::ok: return 0;
    case exit_code::inconclusive: return 1;
    case exit_code::not_dominated: return 2;
    default: return 3;
  }
}

std::uint64_t parse_unsigned(const std::string& text, const std::string& what) {
  if (text.empty() || !std::all_of(text.begin(), text.end(), [](unsigned char c) { return std::isdigit(c); }))
    throw InputError(what + " must be a nonnegative integer, got '" + text + "'");
  try {
    return std::stoull(text);
  } catch (const std::exception&) {
    throw InputError(what + " is out of range");
  }
}

template <class T>
T pick(const char* key, const std::optional<T>& flag, const std::optional<T>& env, const std::optional<T>& file,
       T fallback, std::map<std::string, std::string>& source) {
  if (flag) {
    source[key] = "flag";
    return *flag;
  }
  if (env) {
    source[key] = "env";
    return *env;
  }
  if (file) {
    source[key] = "file";
    return *file;
  }
  source[key] = "default";
  return fallback;
}

ojson mean_json(const MeanEstimate& e) { return {{"mean", e.mean}, {"std_error", e.std_error}, {"count", e.count}}; }

ojson ks_json(std::vector<double> values, std::uint64_t seed) {
  if (values.size() < 100) return nullptr;
  const auto r = ks_test_unsorted(std::move(values));
  return {{"statistic", r.statistic}, {"p_value", r.p_value}, {"count", r.count}, {"seed", seed}};
}

bool within(const MeanEstimate& e, double target, double ses) {
  return std::abs(e.mean - target) <= ses * e.std_error + 1e-12;
}

std::string hex_mask(combin::Mask m) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "0x%x", m);
  return buf;
}

ojson quadrature_json(const QuadratureRule& q) {
  ojson j;
  j["kind"] = q.kind == QuadratureKind::tensor_gauss ? "tensor_gauss" : "monte_carlo";
  j["nodes"] = q.size();
  j["moment_tol"] = q.moment_tol;
  if (q.kind == QuadratureKind::monte_carlo) j["seed"] = q.seed;
  return j;
}

}  // namespace

int worse_exit(int a, int b) { return severity(b) > severity(a) ? b : a; }

ConfigLayer env_layer(const std::function<const char*(const char*)>& lookup) {
  ConfigLayer layer;
  if (const char* s = lookup("CXBRIDGE_SEED")) layer.seed = parse_unsigned(s, "CXBRIDGE_SEED");
  if (const char* t = lookup("CXBRIDGE_THREADS")) {
    const auto n = parse_unsigned(t, "CXBRIDGE_THREADS");
    if (n == 0 || n > 4096) throw InputError("CXBRIDGE_THREADS must lie in [1, 4096]");
    layer.threads = static_cast<unsigned>(n);
  }
  return layer;
}

ConfigLayer env_layer() {
  return env_layer([](const char* name) { return std::getenv(name); });
}

ConfigLayer file_layer(const Instance& instance) {
  ConfigLayer layer;
  if (instance.decompose) {
    layer.steps = instance.decompose->steps;
    layer.decompose_count = instance.decompose->count;
    layer.seed = instance.decompose->seed;
  }
  if (instance.fit_accuracy_set) layer.accuracy = instance.fit.accuracy;
  return layer;
}

ResolvedConfig config_resolve(const ConfigLayer& flags, const ConfigLayer& env, const ConfigLayer& file) {
  ResolvedConfig r;
  const RunConfig d;
  auto& v = r.values;
  v.seed = pick("seed", flags.seed, env.seed, file.seed, d.seed, r.source);
  v.threads = pick("threads", flags.threads, env.threads, file.threads, d.threads, r.source);
  v.sample_count = pick("sample_count", flags.sample_count, env.sample_count, file.sample_count, d.sample_count, r.source);
  v.decompose_count =
      pick("decompose_count", flags.decompose_count, env.decompose_count, file.decompose_count, d.decompose_count, r.source);
  v.steps = pick("steps", flags.steps, env.steps, file.steps, d.steps, r.source);
  v.accuracy = pick("accuracy", flags.accuracy, env.accuracy, file.accuracy, d.accuracy, r.source);
  if (v.threads == 0) throw InputError("threads must be positive");
  return r;
}

ojson ResolvedConfig::to_json() const {
  ojson j;
  j["seed"] = values.seed;
  j["threads"] = values.threads;
  j["sample_count"] = values.sample_count;
  j["decompose_count"] = values.decompose_count;
  j["steps"] = values.steps;
  j["accuracy"] = to_string(values.accuracy);
  ojson src;
  for (const auto& [k, s] : source) src[k] = s;
  j["source"] = src;
  return j;
}

std::size_t emit_samples(const std::string& path, const std::vector<std::string>& header,
                         const std::vector<double>& values) {
  if (header.empty() || values.size() % header.size() != 0) throw InputError("sample table is ragged");
  const bool to_stdout = path == "-";
  std::FILE* f = to_stdout ? stdout : std::fopen(path.c_str(), "w");
  if (!f) throw IoError("cannot write '" + path + "'");
  for (std::size_t c = 0; c < header.size(); ++c) std::fprintf(f, c ? ",%s" : "%s", header[c].c_str());
  std::fputc('\n', f);
  const std::size_t cols = header.size();
  const std::size_t rows = values.size() / cols;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) std::fprintf(f, c ? ",%.17g" : "%.17g", values[r * cols + c]);
    std::fputc('\n', f);
  }
  const bool failed = std::ferror(f) != 0;
  if ((to_stdout ? std::fflush(f) : std::fclose(f)) != 0 || failed) throw IoError("error while writing '" + path + "'");
  return rows;
}

std::string to_string(Stage s) {
  switch (s) {
    case Stage::check: return "check";
    case Stage::fit: return "fit";
    case Stage::sample: return "sample";
    case Stage::decompose: return "decompose";
    case Stage::comb: return "comb";
  }
  return "?";
}

std::vector<Stage> parse_stages(const std::string& list) {
  bool want[5] = {false, false, false, false, false};
  std::stringstream in(list);
  std::string name;
  while (std::getline(in, name, ',')) {
    if (name == "check") want[0] = true;
    else if (name == "fit") want[1] = true;
    else if (name == "sample") want[2] = true;
    else if (name == "decompose") want[3] = true;
    else if (name == "comb") want[4] = true;
    else if (name == "all") std::fill(std::begin(want), std::end(want), true);
    else throw InputError("unknown stage '" + name + "'");
  }
  // prerequisites
  if (want[2] || want[3]) want[1] = true;
  if (want[1]) want[0] = true;
  std::vector<Stage> out;
  for (int s = 0; s < 5; ++s)
    if (want[s]) out.push_back(static_cast<Stage>(s));
  return out;
}

StageOutcome stage_check(const Instance& instance, const RunConfig& config, ScaleSearchResult* scale_out) {
  const auto& mu = instance.measure;
  const QuadratureRule quad = build_quadrature(mu.dim(), instance.scale, config.accuracy);
  const double tol = default_slack_tol(quad);
  const auto verdict = lp_martingale_feasible(mu, quad, tol);
  ScaleSearchOptions so;
  so.accuracy = config.accuracy;
  const auto scale = max_dominated_scale(mu, so);
  if (scale_out) *scale_out = scale;

  StageOutcome out;
  out.status = to_string(verdict.status);
  out.exit = verdict.status == Verdict::dominated       ? exit_code::ok
             : verdict.status == Verdict::not_dominated ? exit_code::not_dominated
                                                        : exit_code::inconclusive;
  auto& b = out.body;
  b["reference_scale"] = instance.scale;
  b["scale"] = scale.scale;
  b["dominated_at_unit_scale"] = scale.dominated;
  b["scale_tol"] = so.tol;
  b["slack_tol"] = tol;
  b["quadrature"] = quadrature_json(quad);
  b["infeasibility"] = verdict.infeasibility;
  b["iterations"] = verdict.iterations;
  if (verdict.residuals) {
    const auto& r = *verdict.residuals;
    b["residuals"] = {{"row", r.row}, {"column", r.column}, {"barycenter", r.barycenter}, {"min_entry", r.min_entry}};
  } else {
    b["residuals"] = nullptr;
  }
  if (verdict.separator) {
    auto w = potentials_json(verdict.separator->direction);
    w["gap"] = verdict.separator->gap;
    b["witness"] = w;
  } else {
    b["witness"] = nullptr;
  }
  auto trace = ojson::array();
  for (const auto& p : scale.trace) trace.push_back({{"scale", p.scale}, {"status", to_string(p.status)}});
  b["scale_trace"] = trace;
  if (!verdict.note.empty()) b["note"] = verdict.note;
  return out;
}

StageOutcome stage_fit(const Instance& instance, const RunConfig& config, std::optional<double> rho_star, bool force,
                       DualPotentials* potentials_out) {
  const auto& mu = instance.measure;
  FitConfig fc = instance.fit;
  fc.accuracy = config.accuracy;
  StageOutcome out;
  const double limit = (1.0 - instance.slack) * instance.scale;
  ojson gate;
  gate["limit"] = limit;
  gate["forced"] = force;
  if (!force) {
    if (!rho_star) {
      ScaleSearchOptions so;
      so.accuracy = config.accuracy;
      const auto s = max_dominated_scale(mu, so);
      rho_star = s.dominated ? s.scale : INFINITY;
    }
    gate["rho_star"] = std::isfinite(*rho_star) ? ojson(*rho_star) : ojson(nullptr);
    gate["passed"] = *rho_star <= limit;
    if (*rho_star > limit) {
      out.status = "gated";
      out.exit = exit_code::not_dominated;
      out.body["gate"] = gate;
      out.body["note"] = "threshold scale exceeds (1 - slack) * scale";
      return out;
    }
  }
  const auto fit = fit_potentials(mu, GaussianReference(mu.dim(), instance.scale), fc);
  if (potentials_out) *potentials_out = fit.potentials;
  const auto& r = fit.report;
  out.status = to_string(r.status);
  out.exit = r.status == FitStatus::converged                 ? exit_code::ok
             : r.status == FitStatus::not_dominated_suspected ? exit_code::not_dominated
                                                              : exit_code::inconclusive;
  auto& b = out.body;
  b["gate"] = gate;
  b["g"] = r.g;
  b["grad_norm"] = r.grad_norm;
  b["iterations"] = r.iterations;
  b["gradient_steps"] = r.gradient_steps;
  b["residuals"] = {{"max_mass", r.residuals.max_mass},
                    {"max_mean", r.residuals.max_mean},
                    {"identity", r.residuals.identity},
                    {"mass", r.residuals.mass},
                    {"mean", r.residuals.mean}};
  b["config"] = {{"slack", fc.slack},
                 {"grad_tol", fc.grad_tol},
                 {"norm_cap", fc.norm_cap},
                 {"max_iters", fc.max_iters},
                 {"accuracy", to_string(fc.accuracy)}};
  b["potentials"] = potentials_json(fit.potentials);
  return out;
}

StageOutcome stage_sample(const Instance& instance, const RunConfig& config, const DualPotentials& potentials,
                          const std::optional<std::string>& csv_path) {
  const auto& mu = instance.measure;
  const std::size_t n = mu.dim(), m = mu.size();
  const auto sample = sample_posterior(potentials, mu, GaussianReference(n, instance.scale), config.sample_count,
                                       config.seed, config.threads);
  StageOutcome out;
  bool ok = true;
  auto labels = ojson::array();
  for (std::size_t i = 0; i < m; ++i) {
    std::vector<std::vector<double>> coords(n);
    for (std::size_t d = 0; d < sample.size(); ++d)
      if (sample.labels[d] == i)
        for (std::size_t c = 0; c < n; ++c) coords[c].push_back(sample.points[d * n + c]);
    const std::size_t hits = coords[0].size();
    const double p = mu.weight(i);
    const double freq = static_cast<double>(hits) / static_cast<double>(sample.size());
    ojson entry;
    entry["atom"] = std::vector<double>(mu.atom(i).begin(), mu.atom(i).end());
    entry["weight"] = p;
    entry["count"] = hits;
    entry["frequency"] = freq;
    auto means = ojson::array();
    double worst = 0.0;
    if (hits >= 2) {
      for (std::size_t c = 0; c < n; ++c) {
        const auto e = mean_estimate(coords[c]);
        means.push_back(mean_json(e));
        if (e.std_error > 0.0) worst = std::max(worst, std::abs(e.mean - mu.atom(i)[c]) / e.std_error);
      }
      ok = ok && worst <= 4.0;
    }
    entry["conditional_mean"] = means;
    entry["max_z"] = worst;
    labels.push_back(entry);
  }
  // statistical checks are reported, not enforced: they fail at their
  // nominal rate on correct output
  out.status = "ok";
  auto& b = out.body;
  b["checks_passed"] = ok;
  b["seed"] = config.seed;
  b["count"] = sample.size();
  b["labels"] = labels;
  if (csv_path) {
    std::vector<std::string> header{"label"};
    for (std::size_t c = 0; c < n; ++c) header.push_back("y_" + std::to_string(c + 1));
    std::vector<double> values;
    values.reserve(sample.size() * (n + 1));
    for (std::size_t d = 0; d < sample.size(); ++d) {
      values.push_back(static_cast<double>(sample.labels[d]));
      for (std::size_t c = 0; c < n; ++c) values.push_back(sample.points[d * n + c]);
    }
    b["csv"] = {{"path", *csv_path}, {"rows", emit_samples(*csv_path, header, values)}};
  }
  return out;
}

StageOutcome stage_decompose(const Instance& instance, const RunConfig& config, const DualPotentials* unit_potentials,
                             const std::optional<std::string>& csv_path) {
  const auto& mu = instance.measure;
  if (mu.dim() != 1) throw InputError("the three-Gaussian decomposition needs dimension one");
  StageOutcome out;
  auto& b = out.body;
  DualPotentials pot = DualPotentials::zeros(mu.size(), 1);
  if (unit_potentials) {
    pot = *unit_potentials;
  } else {
    FitConfig fc = instance.fit;
    fc.accuracy = config.accuracy;
    const auto fit = fit_potentials(mu, GaussianReference(1, 1.0), fc);
    b["unit_fit"] = {{"status", to_string(fit.report.status)}, {"grad_norm", fit.report.grad_norm}};
    if (fit.report.status != FitStatus::converged) {
      out.status = "fit_failed";
      out.exit = fit.report.status == FitStatus::not_dominated_suspected ? exit_code::not_dominated
                                                                         : exit_code::inconclusive;
      return out;
    }
    pot = fit.potentials;
  }
  const std::size_t map_points = instance.decompose ? instance.decompose->map_points : 4097;
  const ThreeGaussianSampler sampler(mu, pot, config.steps, map_points);
  const auto draws = sampler.batch(config.decompose_count, config.seed, config.threads);
  const std::size_t count = draws.size();

  std::vector<double> ys, zs, ss, xs_prod, res;
  std::size_t exited = 0;
  for (const auto& d : draws) {
    ys.push_back(d.y);
    zs.push_back(d.z);
    ss.push_back(d.s);
    xs_prod.push_back(d.x * d.s);
    res.push_back(d.residual);
    exited += d.exited ? 1 : 0;
  }
  bool ok = true;
  b["seed"] = config.seed;
  b["count"] = count;
  b["steps"] = config.steps;
  b["map_points"] = map_points;
  ojson ks;
  ks["y"] = ks_json(ys, config.seed);
  ks["z"] = ks_json(zs, config.seed);
  ks["s"] = ks_json(ss, config.seed);
  for (const char* k : {"y", "z", "s"})
    if (!ks[k].is_null()) ok = ok && ks[k]["p_value"].get<double>() >= 0.01;
  b["ks"] = ks;

  double second = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) second += mu.weight(i) * mu.atom(i)[0] * mu.atom(i)[0];
  if (count >= 2) {
    const auto exs = mean_estimate(xs_prod);
    ojson cov = mean_json(exs);
    cov["target"] = second;
    cov["within_4se"] = within(exs, second, 4.0);
    ok = ok && within(exs, second, 4.0);
    b["covariance_identity"] = cov;

    double yy = 0.0, zz = 0.0, yz = 0.0;
    for (std::size_t d = 0; d < count; ++d) {
      yy += ys[d] * ys[d];
      zz += zs[d] * zs[d];
      yz += ys[d] * zs[d];
    }
    const double inv = 1.0 / static_cast<double>(count);
    b["moments"] = {{"mean_yy", yy * inv}, {"mean_zz", zz * inv}, {"mean_yz", yz * inv}};
  }
  auto labels = ojson::array();
  const auto mean_err = sampler.mean_errors();
  for (std::size_t i = 0; i < mu.size(); ++i) {
    std::vector<double> s_i;
    for (const auto& d : draws)
      if (d.label == i) s_i.push_back(d.s);
    ojson entry;
    entry["atom"] = mu.atom(i)[0];
    entry["count"] = s_i.size();
    entry["map_mean_error"] = mean_err[i];
    entry["map_max_slope"] = sampler.map(i).max_slope();
    if (s_i.size() >= 2) {
      const auto e = mean_estimate(s_i);
      entry["conditional_mean_s"] = mean_json(e);
      entry["within_4se"] = within(e, mu.atom(i)[0], 4.0);
      ok = ok && within(e, mu.atom(i)[0], 4.0);
    }
    labels.push_back(entry);
  }
  b["labels"] = labels;
  if (!res.empty()) {
    std::sort(res.begin(), res.end());
    b["residual"] = {{"median", res[res.size() / 2]}, {"max", res.back()}};
  }
  b["exited"] = exited;
  if (csv_path) {
    std::vector<double> values;
    values.reserve(count * 5);
    for (const auto& d : draws) values.insert(values.end(), {d.x, d.y, d.z, d.s, d.residual});
    b["csv"] = {{"path", *csv_path}, {"rows", emit_samples(*csv_path, {"x", "y", "z", "s", "residual"}, values)}};
  }
  b["checks_passed"] = ok;
  out.status = "ok";
  return out;
}

StageOutcome stage_comb(const Instance& instance) {
  StageOutcome out;
  if (!instance.comb) {
    out.status = "skipped";
    out.body["note"] = "instance has no comb block";
    return out;
  }
  const auto& c = *instance.comb;
  const auto rep = combin::corollary_probe(c.family, c.p, c.q, c.l, c.budget);
  auto& b = out.body;
  b["ground"] = c.family.ground();
  b["members"] = c.family.size();
  b["p"] = c.p;
  b["q"] = c.q;
  b["L"] = c.l;
  b["mu"] = rep.mu;
  b["threshold"] = rep.threshold;
  b["hypothesis_met"] = rep.hypothesis_met;
  b["blocked_size"] = rep.blocked_size;
  b["target_p"] = rep.target_p;
  if (rep.certificate) {
    auto cover = ojson::array();
    for (auto m : rep.certificate->cover) cover.push_back(hex_mask(m));
    b["certificate"] = {{"cover", cover}, {"weight", rep.certificate->weight}, {"verified", true}};
  } else {
    b["certificate"] = nullptr;
  }
  out.status = rep.outcome;
  return out;
}

ojson instance_summary(const Instance& instance) {
  const auto& mu = instance.measure;
  ojson j;
  j["dim"] = mu.dim();
  j["atoms"] = mu.size();
  auto rows = ojson::array();
  for (std::size_t i = 0; i < mu.size(); ++i) rows.push_back(std::vector<double>(mu.atom(i).begin(), mu.atom(i).end()));
  j["support"] = rows;
  j["weights"] = std::vector<double>(mu.weights().begin(), mu.weights().end());
  j["weight_correction"] = instance.weight_correction;
  j["merged_atoms"] = instance.merged_atoms;
  j["scale"] = instance.scale;
  j["slack"] = instance.slack;
  return j;
}

PipelineReport run_pipeline(const Instance& instance, const PipelineOptions& options) {
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  const RunConfig& cfg = options.config.values;
  PipelineReport rep;
  auto& report = rep.report;
  report["instance"] = instance_summary(instance);
  report["config"] = options.config.to_json();
  ojson stages = ojson::object();
  ojson timing = ojson::object();

  std::optional<ScaleSearchResult> scale;
  std::optional<DualPotentials> potentials;
  bool check_failed = false, fit_failed = false;

  for (Stage stage : options.stages) {
    const auto t0 = clock::now();
    StageOutcome out;
    try {
      switch (stage) {
        case Stage::check: {
          ScaleSearchResult s;
          out = stage_check(instance, cfg, &s);
          scale = s;
          check_failed = out.exit == exit_code::not_dominated;
          break;
        }
        case Stage::fit: {
          if (check_failed) {
            out.status = "skipped";
            out.body["note"] = "check stage reported not_dominated";
            fit_failed = true;
            break;
          }
          DualPotentials pot;
          std::optional<double> rho;
          if (scale) rho = scale->dominated ? scale->scale : INFINITY;
          out = stage_fit(instance, cfg, rho, options.force_fit, &pot);
          fit_failed = out.exit != exit_code::ok;
          if (!fit_failed) potentials = pot;
          break;
        }
        case Stage::sample:
          if (!potentials) {
            out.status = "skipped";
            out.body["note"] = "no converged fit";
            break;
          }
          out = stage_sample(instance, cfg, *potentials, options.sample_csv);
          break;
        case Stage::decompose:
          if (instance.measure.dim() != 1) {
            out.status = "skipped";
            out.body["note"] = "the decomposition is one-dimensional";
            break;
          }
          if (fit_failed || !potentials) {
            out.status = "skipped";
            out.body["note"] = "no converged fit";
            break;
          }
          out = stage_decompose(instance, cfg, instance.scale == 1.0 ? &*potentials : nullptr, options.decompose_csv);
          break;
        case Stage::comb:
          out = stage_comb(instance);
          break;
      }
    } catch (const InputError& e) {
      out = StageOutcome{"input_error", exit_code::input_error, {{"error", e.what()}}};
    } catch (const IoError& e) {
      out = StageOutcome{"io_error", exit_code::input_error, {{"error", e.what()}}};
    } catch (const ResourceError& e) {
      out = StageOutcome{"resource_cap", exit_code::inconclusive, {{"error", e.what()}}};
    }
    ojson entry;
    entry["status"] = out.status;
    entry["exit_code"] = out.exit;
    for (auto it = out.body.begin(); it != out.body.end(); ++it) entry[it.key()] = it.value();
    stages[to_string(stage)] = entry;
    timing[to_string(stage)] = std::chrono::duration<double>(clock::now() - t0).count();
    rep.exit = worse_exit(rep.exit, out.exit);
  }
  report["stages"] = stages;
  report["exit_code"] = rep.exit;
  timing["total"] = std::chrono::duration<double>(clock::now() - start).count();
  report["timing"] = timing;
  return rep;
}

}  // namespace cxbridge
