#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>


#include "attnaudit/training.hpp"
#include "attnaudit/util.hpp"

namespace attnaudit {

std::string html_escape(std::string_view text);
std::string html_unescape(std::string_view text);

// ---------------------------------------------------------------------------
// Density scatter plots

struct ScatterSpec {
  std::string x_field;
  std::string y_field;
  double x_min = 0.0, x_max = 1.0;
  double y_min = 0.0, y_max = 1.0;
  std::size_t x_bins = 50;
  std::size_t y_bins = 50;
  std::string class_field;  // empty: one plot for all rows
  std::string title;
  std::string x_label;
  std::string y_label;

  void validate() const;
};

/// Row-major [y_bins][x_bins] counts. Values outside the range land in the
/// edge bins; rows with a non-numeric x or y are skipped.
struct Histogram2D {
  std::size_t x_bins = 0;
  std::size_t y_bins = 0;
  std::vector<std::size_t> counts;
  std::size_t skipped = 0;

  std::size_t at(std::size_t xi, std::size_t yi) const { return counts[yi * x_bins + xi]; }
  std::size_t total() const;
};

/// Bins the rows whose class field equals `class_value` (all rows when nullopt).
Histogram2D bin_points(const CsvTable& table, const ScatterSpec& spec,
                       const std::optional<std::string>& class_value = std::nullopt);

struct ScatterPlot {
  std::string class_value;  // empty when the spec has no class field
  std::string svg;
};

/// One plot per distinct class value (sorted), or a single plot.
/// Throws ValidationError when a named field is missing.
std::vector<ScatterPlot> render_scatter(const CsvTable& table, const ScatterSpec& spec);

/// Each shaded bin as (x bin, y bin, count), read back from an emitted SVG.
std::vector<std::array<std::size_t, 3>> parse_scatter_bins(std::string_view svg);

// ---------------------------------------------------------------------------
// Token heatmaps

struct HeatmapDoc {
  std::string id;
  std::vector<std::string> tokens;
  std::vector<double> diffs;  // counterfactual minus original attention
  double yhat_original = 0.0;
  double yhat_counterfactual = 0.0;
};

/// Red background where the counterfactual attention is higher, blue where it
/// is lower, intensity |diff| relative to the document maximum.
std::string render_heatmap(const HeatmapDoc& doc);
/// Complete HTML page wrapping rendered fragments.
std::string heatmap_page(std::string_view title, const std::vector<std::string>& fragments);
/// Token texts of every heatmap fragment in `html`, in document order.
std::vector<std::vector<std::string>> parse_heatmap_tokens(std::string_view html);

/// One HeatmapDoc per line of an adversarial JSONL sidecar.
std::vector<HeatmapDoc> heatmaps_from_adversarial_jsonl(std::string_view text);

// ---------------------------------------------------------------------------
// Summary table

std::string eval_result_json(const EvalResult& result);
EvalResult parse_eval_result(std::string_view text);

struct VariantResult {
  std::string name;
  std::optional<EvalResult> result;  // nullopt: variant was not run
};

struct SummaryTable {
  std::string csv;
  std::string html;
  std::vector<std::string> warnings;
  std::size_t rows = 0;
};

/// Columns: variant,auc_<label>...,macro_auc. Missing variants are omitted
/// with a warning. Throws ValidationError when split hashes or label counts differ.
SummaryTable summary_table(const std::vector<VariantResult>& variants);

// ---------------------------------------------------------------------------
// Manifests

struct ManifestEntry {
  std::string path;  // relative to the manifest root, '/' separated
  std::string hash;
};

struct Manifest {
  std::string stage;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::vector<ManifestEntry> inputs;
  std::vector<ManifestEntry> artifacts;

  /// Records `file` relative to `root` with its content hash.
  void add_input(const std::filesystem::path& root, const std::filesystem::path& file);
  void add_artifact(const std::filesystem::path& root, const std::filesystem::path& file);
  std::string to_json() const;
  static Manifest from_json(std::string_view text);
};

struct ReportOutcome {
  Manifest manifest;
  std::vector<std::string> warnings;
};

/// Renders every figure, heatmap and table whose inputs exist under `run_dir`
/// into `out_dir` and writes out_dir/manifest.json.
ReportOutcome render_report(const std::filesystem::path& run_dir,
                            const std::filesystem::path& out_dir);

}  // namespace attnaudit
