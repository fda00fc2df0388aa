#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cxbridge/cxorder.hpp"
#include "cxbridge/instance.hpp"

namespace cxbridge {

using ojson = nlohmann::ordered_json;

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int not_dominated = 1;
inline constexpr int input_error = 2;
inline constexpr int inconclusive = 3;
}  // namespace exit_code

/// The more severe of two exit codes: input errors, then not_dominated, then
/// inconclusive, then success.
int worse_exit(int a, int b);

struct RunConfig {
  std::uint64_t seed = 0;
  unsigned threads = 1;
  std::size_t sample_count = 10000;
  std::size_t decompose_count = 10000;
  std::size_t steps = 4096;
  Accuracy accuracy = Accuracy::high;
};

/// One source of settings; unset fields defer to the next layer.
struct ConfigLayer {
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::optional<std::size_t> sample_count;
  std::optional<std::size_t> decompose_count;
  std::optional<std::size_t> steps;
  std::optional<Accuracy> accuracy;
};

/// CXBRIDGE_SEED and CXBRIDGE_THREADS. Throws InputError on values that are
/// not nonnegative integers.
ConfigLayer env_layer(const std::function<const char*(const char*)>& lookup);
ConfigLayer env_layer();

/// Settings carried by an instance file (decompose block, fit accuracy).
ConfigLayer file_layer(const Instance& instance);

struct ResolvedConfig {
  RunConfig values;
  std::map<std::string, std::string> source;  ///< key -> flag, env, file or default

  ojson to_json() const;
};

/// Precedence flags > env > file > defaults.
ResolvedConfig config_resolve(const ConfigLayer& flags, const ConfigLayer& env, const ConfigLayer& file);

/// Writes a header line and `values.size() / header.size()` rows with %.17g,
/// so that parsing the file back gives the same doubles. The path "-" means
/// standard output. Returns the row count.
std::size_t emit_samples(const std::string& path, const std::vector<std::string>& header,
                         const std::vector<double>& values);

enum class Stage { check, fit, sample, decompose, comb };

std::string to_string(Stage s);
/// Comma-separated names ("all" for every stage). Prerequisites are added
/// (sample and decompose need fit, fit needs check) and the result is in
/// dependency order.
std::vector<Stage> parse_stages(const std::string& list);

struct StageOutcome {
  std::string status;
  int exit = exit_code::ok;
  ojson body = ojson::object();
};

/// Convex-order verdict at the instance scale plus the threshold scale.
StageOutcome stage_check(const Instance& instance, const RunConfig& config, ScaleSearchResult* scale_out = nullptr);

/// Fits potentials against scale * N(0, I). Unless `force` is set the fit
/// runs only when the threshold scale is at most (1 - slack) * scale; the
/// threshold is computed here when `rho_star` is absent.
StageOutcome stage_fit(const Instance& instance, const RunConfig& config, std::optional<double> rho_star, bool force,
                       DualPotentials* potentials_out = nullptr);

StageOutcome stage_sample(const Instance& instance, const RunConfig& config, const DualPotentials& potentials,
                          const std::optional<std::string>& csv_path = std::nullopt);

/// Three-Gaussian decomposition (dimension one). `unit_potentials` must be
/// fitted against N(0, 1); when absent they are fitted here.
StageOutcome stage_decompose(const Instance& instance, const RunConfig& config,
                             const DualPotentials* unit_potentials,
                             const std::optional<std::string>& csv_path = std::nullopt);

StageOutcome stage_comb(const Instance& instance);

struct PipelineOptions {
  std::vector<Stage> stages{Stage::check, Stage::fit, Stage::sample, Stage::decompose, Stage::comb};
  ResolvedConfig config;
  bool force_fit = false;
  std::optional<std::string> sample_csv;
  std::optional<std::string> decompose_csv;
};

struct PipelineReport {
  ojson report;
  int exit = exit_code::ok;
};

/// Runs the requested stages in order. A stage whose prerequisite failed is
/// recorded as skipped. Wall-clock times are kept under the "timing" key only.
PipelineReport run_pipeline(const Instance& instance, const PipelineOptions& options);

ojson instance_summary(const Instance& instance);

}  // namespace cxbridge
