#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "attnaudit/audit.hpp"
#include "attnaudit/corpus.hpp"
#include "attnaudit/lr_baseline.hpp"
#include "attnaudit/models.hpp"
#include "attnaudit/training.hpp"

namespace attnaudit {

/// Everything a pipeline run depends on besides input files.
struct RunConfig {
  std::uint64_t seed = 0;
  std::filesystem::path out = "run";

  std::string data_source = "synthetic";  // synthetic | jsonl
  SyntheticCorpusParams synthetic;        // seed is derived from `seed`
  std::filesystem::path jsonl_path;
  std::size_t min_count = 1;
  std::filesystem::path embeddings = "none";

  EncoderConfig encoder;
  TrainConfig train;
  LrConfig lr;

  Split audit_split = Split::test;
  std::size_t permutations = 100;
  GradientMeasure grad_measure = GradientMeasure::gradient_times_input;
  bool logodds_abs = true;
  AdversarialConfig adversarial;
  std::size_t jobs = 1;

  void validate() const;
  nlohmann::json to_json() const;
  /// Rejects unknown keys at every level; missing keys keep their defaults.
  static RunConfig from_json(const nlohmann::json& j);
  /// Hash of the canonical JSON form, excluding output directory and job count.
  std::string hash() const;
};

/// Exit codes of run_cli.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

/// Entry point of the attnaudit executable. `args` includes the program name.
/// Failures print one "error[CODE]: message" line to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace attnaudit
