#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "cxbridge/combin.hpp"
#include "cxbridge/errors.hpp"
#include "cxbridge/instance.hpp"
#include "cxbridge/pipeline.hpp"

using namespace cxbridge;

namespace {

// Flags shared by the instance-driven subcommands.
struct CommonFlags {
  std::string instance;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::optional<std::string> accuracy;
  std::string out = "-";

  void add(CLI::App* app, bool with_out = true) {
    app->add_option("instance", instance, "instance JSON file")->required()->check(CLI::ExistingFile);
    app->add_option("--seed", seed, "random seed (env CXBRIDGE_SEED, default 0)");
    app->add_option("--threads", threads, "worker threads (env CXBRIDGE_THREADS, default 1)")
        ->check(CLI::Range(1u, 4096u));
    app->add_option("--accuracy", accuracy, "quadrature tier: fast, standard or high (default high)")
        ->check(CLI::IsMember({"fast", "standard", "high"}));
    if (with_out) app->add_option("--out", out, "output file, - for stdout")->capture_default_str();
  }

  ConfigLayer layer() const {
    ConfigLayer l;
    l.seed = seed;
    l.threads = threads;
    if (accuracy) l.accuracy = parse_accuracy(*accuracy);
    return l;
  }
};

void write_text(const std::string& path, const std::string& text) {
  if (path == "-") {
    std::cout << text << std::flush;
    return;
  }
  std::ofstream f(path);
  if (!f) throw IoError("cannot write '" + path + "'");
  f << text;
  if (!f.flush()) throw IoError("error while writing '" + path + "'");
}

void write_json(const std::string& path, const ojson& j) { write_text(path, j.dump(2) + "\n"); }

ojson stage_json(const StageOutcome& s) {
  ojson j;
  j["status"] = s.status;
  j["exit_code"] = s.exit;
  for (auto it = s.body.begin(); it != s.body.end(); ++it) j[it.key()] = it.value();
  return j;
}

combin::SubsetFamily read_family(const std::string& text, unsigned ground) {
  const auto doc = !text.empty() && text[0] == '@' ? read_json_file(text.substr(1)) : [&] {
    try {
      return nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw InputError(std::string("family is not valid JSON: ") + e.what());
    }
  }();
  return parse_family(doc, ground);
}

ojson cover_json(const std::vector<combin::Mask>& cover) {
  auto arr = ojson::array();
  for (auto m : cover) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "0x%x", m);
    arr.push_back(buf);
  }
  return arr;
}

int run(int argc, char** argv) {
  CLI::App app{"Convex-order domination, entropic martingale couplings and three-Gaussian decompositions"};
  app.require_subcommand(1);
  int code = exit_code::ok;

  // check-order
  CommonFlags check_flags;
  auto* check = app.add_subcommand("check-order", "convex-order verdict against scale * N(0, I)");
  check_flags.add(check);
  check->callback([&] {
    const auto inst = load_instance(check_flags.instance);
    const auto cfg = config_resolve(check_flags.layer(), env_layer(), file_layer(inst));
    const auto out = stage_check(inst, cfg.values);
    write_json(check_flags.out, stage_json(out));
    code = out.exit;
  });

  // fit-coupling
  CommonFlags fit_flags;
  bool gate = false;
  auto* fit = app.add_subcommand("fit-coupling", "fit the entropic dual potentials");
  fit_flags.add(fit);
  fit->add_flag("--gate", gate, "require threshold scale <= (1 - slack) * scale before fitting");
  fit->callback([&] {
    const auto inst = load_instance(fit_flags.instance);
    const auto cfg = config_resolve(fit_flags.layer(), env_layer(), file_layer(inst));
    DualPotentials pot;
    const auto out = stage_fit(inst, cfg.values, std::nullopt, !gate, &pot);
    ojson doc;
    if (out.body.contains("potentials")) {
      doc["U"] = out.body["potentials"]["U"];
      doc["V"] = out.body["potentials"]["V"];
    }
    auto report = stage_json(out);
    report.erase("potentials");
    doc["report"] = report;
    write_json(fit_flags.out, doc);
    code = out.exit;
  });

  // sample-coupling
  CommonFlags sample_flags;
  std::optional<std::size_t> sample_n;
  std::optional<std::string> potentials_path, sample_summary;
  auto* sample = app.add_subcommand("sample-coupling", "draw labeled points (label, y) from the fitted coupling");
  sample_flags.add(sample);
  sample->add_option("--n", sample_n, "number of draws (default 10000)");
  sample->add_option("--potentials", potentials_path, "potentials JSON from fit-coupling (fitted when absent)");
  sample->add_option("--summary", sample_summary, "write the per-label summary JSON here");
  sample->callback([&] {
    const auto inst = load_instance(sample_flags.instance);
    auto flags = sample_flags.layer();
    flags.sample_count = sample_n;
    const auto cfg = config_resolve(flags, env_layer(), file_layer(inst));
    DualPotentials pot;
    if (potentials_path) {
      pot = parse_potentials(read_json_file(*potentials_path), inst.measure);
    } else {
      const auto fitted = stage_fit(inst, cfg.values, std::nullopt, true, &pot);
      if (fitted.exit != exit_code::ok) {
        std::cerr << "fit " << fitted.status << "\n";
        code = fitted.exit;
        return;
      }
    }
    const auto out = stage_sample(inst, cfg.values, pot, sample_flags.out);
    if (sample_summary) write_json(*sample_summary, stage_json(out));
    code = out.exit;
  });

  // decompose
  CommonFlags dec_flags;
  std::optional<std::size_t> dec_n, dec_steps;
  std::optional<std::string> dec_summary;
  auto* dec = app.add_subcommand("decompose", "sample (x, y, z) with x + y + z standard normal (dimension one)");
  dec_flags.add(dec);
  dec->add_option("--n", dec_n, "number of draws (default 10000)");
  dec->add_option("--steps", dec_steps, "Brownian steps, a power of two (default 4096)");
  dec->add_option("--summary", dec_summary, "write the summary JSON (KS statistics, conditional means) here");
  dec->callback([&] {
    const auto inst = load_instance(dec_flags.instance);
    auto flags = dec_flags.layer();
    flags.decompose_count = dec_n;
    flags.steps = dec_steps;
    const auto cfg = config_resolve(flags, env_layer(), file_layer(inst));
    const auto out = stage_decompose(inst, cfg.values, nullptr, dec_flags.out);
    if (dec_summary) write_json(*dec_summary, stage_json(out));
    code = out.exit;
  });

  // comb
  auto* comb = app.add_subcommand("comb", "set-family tools on {0, ..., N-1}");
  comb->require_subcommand(1);
  unsigned ground = 0;
  std::string family_text;
  double p = 0.5;
  unsigned q = 2, l = 1;
  std::uint64_t budget = 1'000'000;
  std::string comb_out = "-";
  auto family_opts = [&](CLI::App* sub) {
    sub->add_option("--ground", ground, "ground set size N")->required()->check(CLI::Range(0u, 24u));
    sub->add_option("--family", family_text, "JSON list of subsets or hex masks, or @file")->required();
    sub->add_option("--out", comb_out, "output file, - for stdout")->capture_default_str();
  };
  auto* mu = comb->add_subcommand("mu", "mu_p of the family");
  family_opts(mu);
  mu->add_option("--p", p, "Bernoulli parameter")->capture_default_str();
  mu->callback([&] {
    const auto fam = read_family(family_text, ground);
    write_json(comb_out, {{"ground", ground}, {"members", fam.size()}, {"p", p}, {"mu", combin::mu_p(fam, p)}});
  });
  auto* blocked = comb->add_subcommand("blocked", "A^(q): masks not covered by any q members");
  family_opts(blocked);
  blocked->add_option("--q", q, "number of covering members")->capture_default_str()->check(CLI::PositiveNumber);
  blocked->callback([&] {
    const auto fam = read_family(family_text, ground);
    const auto b = combin::blocked_qfold(fam, q);
    write_json(comb_out, {{"ground", ground}, {"q", q}, {"size", b.size()}, {"members", cover_json(b.members())}});
  });
  auto* psmall = comb->add_subcommand("psmall", "search for a p-smallness certificate");
  family_opts(psmall);
  psmall->add_option("--p", p, "Bernoulli parameter")->capture_default_str();
  psmall->add_option("--budget", budget, "branch-and-bound node budget")->capture_default_str();
  psmall->callback([&] {
    const auto fam = read_family(family_text, ground);
    const auto cert = combin::psmall_search(fam, p, budget);
    ojson j{{"ground", ground}, {"p", p}, {"found", cert.has_value()}};
    if (cert) j["certificate"] = {{"cover", cover_json(cert->cover)}, {"weight", cert->weight}, {"verified", true}};
    write_json(comb_out, j);
  });
  auto* probe = comb->add_subcommand("probe", "check the hypothesis and search a p^L-small cover of A^(q)");
  family_opts(probe);
  probe->add_option("--p", p, "Bernoulli parameter")->capture_default_str();
  probe->add_option("--q", q, "number of covering members")->capture_default_str()->check(CLI::PositiveNumber);
  probe->add_option("--L", l, "exponent of the target smallness p^L")->capture_default_str()->check(CLI::PositiveNumber);
  probe->add_option("--budget", budget, "branch-and-bound node budget")->capture_default_str();
  probe->callback([&] {
    Instance inst;
    inst.comb = CombBlock{read_family(family_text, ground), p, q, l, budget};
    write_json(comb_out, stage_json(stage_comb(inst)));
  });

  // pipeline
  CommonFlags pipe_flags;
  std::string stages = "all";
  bool force = false;
  std::optional<std::size_t> pipe_n, pipe_dec_n, pipe_steps;
  std::optional<std::string> samples_csv, decompose_csv;
  auto* pipe = app.add_subcommand("pipeline", "check -> fit -> sample -> decompose (+ comb) with a JSON report");
  pipe_flags.add(pipe);
  pipe->add_option("--stages", stages, "comma-separated stages: check, fit, sample, decompose, comb or all")
      ->capture_default_str();
  pipe->add_flag("--force", force, "fit even when the threshold scale exceeds (1 - slack) * scale");
  pipe->add_option("--n", pipe_n, "posterior draws (default 10000)");
  pipe->add_option("--decompose-n", pipe_dec_n, "decomposition draws (default 10000)");
  pipe->add_option("--steps", pipe_steps, "Brownian steps, a power of two (default 4096)");
  pipe->add_option("--samples-csv", samples_csv, "write posterior draws here");
  pipe->add_option("--decompose-csv", decompose_csv, "write decomposition draws here");
  pipe->callback([&] {
    const auto inst = load_instance(pipe_flags.instance);
    auto flags = pipe_flags.layer();
    flags.sample_count = pipe_n;
    flags.decompose_count = pipe_dec_n;
    flags.steps = pipe_steps;
    PipelineOptions opts;
    opts.stages = parse_stages(stages);
    opts.config = config_resolve(flags, env_layer(), file_layer(inst));
    opts.force_fit = force;
    opts.sample_csv = samples_csv;
    opts.decompose_csv = decompose_csv;
    const auto rep = run_pipeline(inst, opts);
    write_json(pipe_flags.out, rep.report);
    code = rep.exit;
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? exit_code::ok : exit_code::input_error;
  }
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return exit_code::input_error;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return exit_code::input_error;
  } catch (const ResourceError& e) {
    std::cerr << "resource cap: " << e.what() << "\n";
    return exit_code::inconclusive;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code::inconclusive;
  }
}
