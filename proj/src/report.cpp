#include "attnaudit/report.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <set>

#include <nlohmann/json.hpp>

namespace attnaudit {

namespace fs = std::filesystem;

std::string html_escape(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&#39;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string html_unescape(std::string_view text) {
  static const std::pair<std::string_view, char> kEntities[] = {
      {"&amp;", '&'}, {"&lt;", '<'}, {"&gt;", '>'}, {"&quot;", '"'}, {"&#39;", '\''}};
  std::string out;
  for (std::size_t i = 0; i < text.size();) {
    bool matched = false;
    if (text[i] == '&')
      for (const auto& [entity, c] : kEntities)
        if (text.substr(i, entity.size()) == entity) {
          out += c;
          i += entity.size();
          matched = true;
          break;
        }
    if (!matched) out += text[i++];
  }
  return out;
}

// ---------------------------------------------------------------------------

void ScatterSpec::validate() const {
  if (!std::isfinite(x_min) || !std::isfinite(x_max) || !std::isfinite(y_min) ||
      !std::isfinite(y_max) || !(x_min < x_max) || !(y_min < y_max))
    throw ValidationError("scatter ranges must be finite and non-empty");
  if (x_bins == 0 || y_bins == 0) throw ValidationError("scatter bin counts must be positive");
}

std::size_t Histogram2D::total() const {
  std::size_t s = 0;
  for (auto c : counts) s += c;
  return s;
}

namespace {

std::optional<double> numeric(const std::string& field) {
  if (field.empty()) return std::nullopt;
  try {
    const double v = parse_double(field);
    if (!std::isfinite(v)) return std::nullopt;
    return v;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

std::size_t bin_index(double v, double lo, double hi, std::size_t bins) {
  const double u = (v - lo) / (hi - lo) * static_cast<double>(bins);
  if (!(u > 0.0)) return 0;
  return std::min(bins - 1, static_cast<std::size_t>(u));
}

constexpr double kPlot = 400.0;
constexpr double kLeft = 60.0, kTop = 40.0, kBottom = 50.0, kRight = 20.0;

std::string fmt(double v) { return format_fixed(v, 2); }

}  // namespace

Histogram2D bin_points(const CsvTable& table, const ScatterSpec& spec,
                       const std::optional<std::string>& class_value) {
  spec.validate();
  const std::size_t xc = table.column(spec.x_field), yc = table.column(spec.y_field);
  const std::optional<std::size_t> cc =
      spec.class_field.empty() ? std::nullopt : std::optional(table.column(spec.class_field));
  Histogram2D h;
  h.x_bins = spec.x_bins;
  h.y_bins = spec.y_bins;
  h.counts.assign(spec.x_bins * spec.y_bins, 0);
  for (const auto& row : table.rows) {
    if (class_value && cc && row.at(*cc) != *class_value) continue;
    const auto x = numeric(row.at(xc)), y = numeric(row.at(yc));
    if (!x || !y) {
      ++h.skipped;
      continue;
    }
    const std::size_t xi = bin_index(*x, spec.x_min, spec.x_max, spec.x_bins);
    const std::size_t yi = bin_index(*y, spec.y_min, spec.y_max, spec.y_bins);
    ++h.counts[yi * spec.x_bins + xi];
  }
  return h;
}

namespace {

std::string scatter_svg(const Histogram2D& h, const ScatterSpec& spec, const std::string& title) {
  const double w = kLeft + kPlot + kRight, ht = kTop + kPlot + kBottom;
  const double cw = kPlot / static_cast<double>(h.x_bins), ch = kPlot / static_cast<double>(h.y_bins);
  std::size_t peak = 0;
  for (auto c : h.counts) peak = std::max(peak, c);

  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(w) + "\" height=\"" +
                  fmt(ht) + "\" viewBox=\"0 0 " + fmt(w) + " " + fmt(ht) + "\">\n";
  s += "<rect x=\"0\" y=\"0\" width=\"" + fmt(w) + "\" height=\"" + fmt(ht) + "\" fill=\"white\"/>\n";
  s += "<text x=\"" + fmt(kLeft + kPlot / 2) + "\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">" +
       html_escape(title) + "</text>\n";
  for (std::size_t yi = 0; yi < h.y_bins; ++yi)
    for (std::size_t xi = 0; xi < h.x_bins; ++xi) {
      const std::size_t c = h.at(xi, yi);
      if (c == 0) continue;
      // Darker for denser bins; the lightest non-empty shade stays visible.
      const double t = 0.15 + 0.85 * static_cast<double>(c) / static_cast<double>(peak);
      const int g = static_cast<int>(std::lround(255.0 * (1.0 - t)));
      s += "<rect class=\"bin\" data-x=\"" + std::to_string(xi) + "\" data-y=\"" + std::to_string(yi) +
           "\" data-count=\"" + std::to_string(c) + "\" x=\"" + fmt(kLeft + cw * static_cast<double>(xi)) +
           "\" y=\"" + fmt(kTop + kPlot - ch * static_cast<double>(yi + 1)) + "\" width=\"" + fmt(cw) +
           "\" height=\"" + fmt(ch) + "\" fill=\"rgb(" + std::to_string(g) + "," + std::to_string(g) +
           ",255)\"/>\n";
    }
  const std::string x0 = fmt(kLeft), x1 = fmt(kLeft + kPlot), y0 = fmt(kTop + kPlot), y1 = fmt(kTop);
  s += "<line class=\"axis\" x1=\"" + x0 + "\" y1=\"" + y0 + "\" x2=\"" + x1 + "\" y2=\"" + y0 +
       "\" stroke=\"black\"/>\n";
  s += "<line class=\"axis\" x1=\"" + x0 + "\" y1=\"" + y0 + "\" x2=\"" + x0 + "\" y2=\"" + y1 +
       "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double f = k / 4.0;
    const double xv = spec.x_min + f * (spec.x_max - spec.x_min);
    const double yv = spec.y_min + f * (spec.y_max - spec.y_min);
    s += "<text x=\"" + fmt(kLeft + f * kPlot) + "\" y=\"" + fmt(kTop + kPlot + 16) +
         "\" text-anchor=\"middle\" font-size=\"10\">" + format_fixed(xv, 2) + "</text>\n";
    s += "<text x=\"" + fmt(kLeft - 6) + "\" y=\"" + fmt(kTop + kPlot - f * kPlot + 3) +
         "\" text-anchor=\"end\" font-size=\"10\">" + format_fixed(yv, 2) + "</text>\n";
  }
  s += "<text x=\"" + fmt(kLeft + kPlot / 2) + "\" y=\"" + fmt(ht - 10) +
       "\" text-anchor=\"middle\" font-size=\"12\">" +
       html_escape(spec.x_label.empty() ? spec.x_field : spec.x_label) + "</text>\n";
  s += "<text x=\"14\" y=\"" + fmt(kTop + kPlot / 2) + "\" text-anchor=\"middle\" font-size=\"12\" " +
       "transform=\"rotate(-90 14 " + fmt(kTop + kPlot / 2) + ")\">" +
       html_escape(spec.y_label.empty() ? spec.y_field : spec.y_label) + "</text>\n";
  s += "</svg>\n";
  return s;
}

std::string attribute(std::string_view tag, std::string_view name) {
  const std::string key = " " + std::string(name) + "=\"";
  const auto p = tag.find(key);
  if (p == std::string_view::npos) return {};
  const auto start = p + key.size();
  return std::string(tag.substr(start, tag.find('"', start) - start));
}

}  // namespace

std::vector<ScatterPlot> render_scatter(const CsvTable& table, const ScatterSpec& spec) {
  spec.validate();
  table.column(spec.x_field);
  table.column(spec.y_field);
  std::vector<ScatterPlot> out;
  if (spec.class_field.empty()) {
    out.push_back({"", scatter_svg(bin_points(table, spec), spec, spec.title)});
    return out;
  }
  const std::size_t cc = table.column(spec.class_field);
  std::set<std::string> classes;
  for (const auto& row : table.rows) classes.insert(row.at(cc));
  for (const auto& c : classes)
    out.push_back({c, scatter_svg(bin_points(table, spec, c), spec,
                                  spec.title + " (" + spec.class_field + "=" + c + ")")});
  if (out.empty()) out.push_back({"", scatter_svg(bin_points(table, spec), spec, spec.title)});
  return out;
}

std::vector<std::array<std::size_t, 3>> parse_scatter_bins(std::string_view svg) {
  std::vector<std::array<std::size_t, 3>> bins;
  for (std::size_t p = svg.find("<rect class=\"bin\""); p != std::string_view::npos;
       p = svg.find("<rect class=\"bin\"", p + 1)) {
    const auto tag = svg.substr(p, svg.find('>', p) - p);
    bins.push_back({std::stoul(attribute(tag, "data-x")), std::stoul(attribute(tag, "data-y")),
                    std::stoul(attribute(tag, "data-count"))});
  }
  return bins;
}

// ---------------------------------------------------------------------------

std::string render_heatmap(const HeatmapDoc& doc) {
  if (doc.tokens.size() != doc.diffs.size())
    throw ValidationError("heatmap tokens and differences differ in length");
  double peak = 0.0;
  for (double d : doc.diffs) {
    if (!(d >= -1.0 && d <= 1.0)) throw ValidationError("heatmap differences must lie in [-1, 1]");
    peak = std::max(peak, std::abs(d));
  }
  std::string s = "<div class=\"heatmap\" data-id=\"" + html_escape(doc.id) + "\">\n<p class=\"tokens\">";
  for (std::size_t t = 0; t < doc.tokens.size(); ++t) {
    const double d = doc.diffs[t];
    const double i = peak > 0.0 ? std::abs(d) / peak : 0.0;
    const int fade = static_cast<int>(std::lround(255.0 * (1.0 - i)));
    const std::string color = d > 0.0   ? "rgb(255," + std::to_string(fade) + "," + std::to_string(fade) + ")"
                              : d < 0.0 ? "rgb(" + std::to_string(fade) + "," + std::to_string(fade) + ",255)"
                                        : "rgb(255,255,255)";
    if (t) s += ' ';
    s += "<span class=\"tok\" style=\"background-color:" + color + "\" data-diff=\"" +
         format_double(d) + "\">" + html_escape(doc.tokens[t]) + "</span>";
  }
  s += "</p>\n<p class=\"yhat\">original y&#770; = " + format_fixed(doc.yhat_original, 4) +
       ", counterfactual y&#770; = " + format_fixed(doc.yhat_counterfactual, 4) + "</p>\n</div>\n";
  return s;
}

std::string heatmap_page(std::string_view title, const std::vector<std::string>& fragments) {
  std::string s = "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n<title>" +
                  html_escape(title) + "</title>\n<style>\n"
                  ".heatmap { margin: 1em 0; font-family: monospace; line-height: 1.8; }\n"
                  ".tok { padding: 1px 2px; }\n</style>\n</head>\n<body>\n<h1>" +
                  html_escape(title) + "</h1>\n";
  for (const auto& f : fragments) s += f;
  s += "</body>\n</html>\n";
  return s;
}

std::vector<std::vector<std::string>> parse_heatmap_tokens(std::string_view html) {
  std::vector<std::vector<std::string>> docs;
  const std::string_view open = "<span class=\"tok\"", close = "</span>";
  for (std::size_t d = html.find("<div class=\"heatmap\""); d != std::string_view::npos;) {
    const std::size_t next = html.find("<div class=\"heatmap\"", d + 1);
    const std::string_view body = html.substr(d, next == std::string_view::npos ? html.size() - d : next - d);
    std::vector<std::string> tokens;
    for (std::size_t p = body.find(open); p != std::string_view::npos; p = body.find(open, p + 1)) {
      const std::size_t start = body.find('>', p) + 1;
      tokens.push_back(html_unescape(body.substr(start, body.find(close, start) - start)));
    }
    docs.push_back(std::move(tokens));
    d = next;
  }
  return docs;
}

namespace {

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace

std::vector<HeatmapDoc> heatmaps_from_adversarial_jsonl(std::string_view text) {
  std::vector<HeatmapDoc> docs;
  std::size_t line_no = 0;
  for (std::size_t start = 0; start < text.size();) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      HeatmapDoc d;
      d.id = j.at("id").get<std::string>();
      d.tokens = j.at("tokens").get<std::vector<std::string>>();
      const auto orig = j.at("original").get<std::vector<double>>();
      const auto adv = j.at("adversarial").get<std::vector<double>>();
      if (orig.size() != adv.size()) throw ValidationError("attention vectors differ in length");
      for (std::size_t t = 0; t < orig.size(); ++t) d.diffs.push_back(adv[t] - orig[t]);
      d.yhat_original = mean(j.at("yhat").get<std::vector<double>>());
      d.yhat_counterfactual = mean(j.at("yhat_adversarial").get<std::vector<double>>());
      docs.push_back(std::move(d));
    } catch (const std::exception& e) {
      throw ValidationError("adversarial sidecar line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return docs;
}

// ---------------------------------------------------------------------------

std::string eval_result_json(const EvalResult& r) {
  nlohmann::json j;
  j["auc"] = r.auc;
  j["macro_auc"] = r.macro_auc;
  j["positives"] = r.positives;
  j["instances"] = r.instances;
  j["split_hash"] = r.split_hash;
  return j.dump(2) + "\n";
}

EvalResult parse_eval_result(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    EvalResult r;
    r.auc = j.at("auc").get<std::vector<double>>();
    r.macro_auc = j.at("macro_auc").get<double>();
    r.positives = j.at("positives").get<std::vector<std::size_t>>();
    r.instances = j.at("instances").get<std::size_t>();
    r.split_hash = j.at("split_hash").get<std::string>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed evaluation result: ") + e.what());
  }
}

SummaryTable summary_table(const std::vector<VariantResult>& variants) {
  SummaryTable t;
  const EvalResult* first = nullptr;
  for (const auto& v : variants) {
    if (!v.result) {
      t.warnings.push_back("variant '" + v.name + "' has no evaluation; row omitted");
      continue;
    }
    if (!first) {
      first = &*v.result;
    } else {
      if (v.result->split_hash != first->split_hash)
        throw ValidationError("variant '" + v.name + "' was evaluated on a different test split");
      if (v.result->auc.size() != first->auc.size())
        throw ValidationError("variant '" + v.name + "' has a different label count");
    }
  }
  const std::size_t L = first ? first->auc.size() : 0;
  std::vector<std::string> header{"variant"};
  for (std::size_t l = 0; l < L; ++l) header.push_back("auc_" + std::to_string(l));
  header.push_back("macro_auc");
  t.csv = csv_line(header);
  t.html = "<table class=\"summary\">\n<tr>";
  for (const auto& h : header) t.html += "<th>" + html_escape(h) + "</th>";
  t.html += "</tr>\n";
  for (const auto& v : variants) {
    if (!v.result) continue;
    std::vector<std::string> row{v.name};
    for (double a : v.result->auc) row.push_back(format_fixed(a, 4));
    row.push_back(format_fixed(v.result->macro_auc, 4));
    t.csv += csv_line(row);
    t.html += "<tr>";
    for (const auto& c : row) t.html += "<td>" + html_escape(c) + "</td>";
    t.html += "</tr>\n";
    ++t.rows;
  }
  t.html += "</table>\n";
  return t;
}

// ---------------------------------------------------------------------------

namespace {

ManifestEntry entry_for(const fs::path& root, const fs::path& file) {
  return {fs::relative(file, root).generic_string(), file_hash(file)};
}

nlohmann::json entries_json(const std::vector<ManifestEntry>& entries) {
  auto sorted = entries;
  std::sort(sorted.begin(), sorted.end(),
            [](const ManifestEntry& a, const ManifestEntry& b) { return a.path < b.path; });
  nlohmann::json j = nlohmann::json::array();
  for (const auto& e : sorted) j.push_back({{"path", e.path}, {"hash", e.hash}});
  return j;
}

std::vector<ManifestEntry> entries_from(const nlohmann::json& j) {
  std::vector<ManifestEntry> out;
  for (const auto& e : j) out.push_back({e.at("path").get<std::string>(), e.at("hash").get<std::string>()});
  return out;
}

}  // namespace

void Manifest::add_input(const fs::path& root, const fs::path& file) {
  inputs.push_back(entry_for(root, file));
}

void Manifest::add_artifact(const fs::path& root, const fs::path& file) {
  artifacts.push_back(entry_for(root, file));
}

std::string Manifest::to_json() const {
  nlohmann::json j;
  j["stage"] = stage;
  j["config_hash"] = config_hash;
  j["seed"] = seed;
  j["inputs"] = entries_json(inputs);
  j["artifacts"] = entries_json(artifacts);
  return j.dump(2) + "\n";
}

Manifest Manifest::from_json(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    Manifest m;
    m.stage = j.at("stage").get<std::string>();
    m.config_hash = j.at("config_hash").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.inputs = entries_from(j.at("inputs"));
    m.artifacts = entries_from(j.at("artifacts"));
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed manifest: ") + e.what());
  }
}

// ---------------------------------------------------------------------------

namespace {

struct FigureSource {
  const char* file;  // under run_dir/audit
  const char* name;  // figure file stem
  ScatterSpec spec;
};

std::vector<FigureSource> figure_sources() {
  const double ln2 = std::log(2.0);
  std::vector<FigureSource> f;
  f.push_back({"permute.csv", "permute",
               {"median_dy", "max_attn", 0.0, 1.0, 0.0, 1.0, 50, 50, "label",
                "Permutation: median output change vs max attention", "median |dy|", "max attention"}});
  f.push_back({"adversarial.csv", "adversarial",
               {"eps_max_jsd", "max_attn", 0.0, ln2, 0.0, 1.0, 50, 50, "",
                "Adversarial attention: eps-max JSD vs max attention", "eps-max JSD", "max attention"}});
  f.push_back({"gradients.csv", "gradients",
               {"tau", "p_approx", -1.0, 1.0, 0.0, 1.0, 50, 50, "",
                "Attention vs gradient attribution: Kendall tau", "tau", "p (normal approx.)"}});
  f.push_back({"logodds_swap.csv", "logodds_swap",
               {"jsd", "dy", 0.0, ln2, 0.0, 1.0, 50, 50, "",
                "Log-odds attention swap: JSD vs output change", "JSD(alpha, alpha_LO)", "|dy|"}});
  return f;
}

std::string class_suffix(const std::string& c) {
  std::string s;
  for (char ch : c) s += std::isalnum(static_cast<unsigned char>(ch)) ? ch : '_';
  return s;
}

constexpr std::size_t kHeatmapDocs = 25;

}  // namespace

ReportOutcome render_report(const fs::path& run_dir, const fs::path& out_dir) {
  ReportOutcome outcome;
  Manifest& m = outcome.manifest;
  m.stage = "report";
  const fs::path audit = run_dir / "audit";

  for (const auto& src : figure_sources()) {
    const fs::path csv_path = audit / src.file;
    if (!fs::exists(csv_path)) {
      outcome.warnings.push_back(std::string("no ") + src.file + "; figure skipped");
      continue;
    }
    m.add_input(run_dir, csv_path);
    const CsvTable table = parse_csv(read_file(csv_path));
    for (const auto& plot : render_scatter(table, src.spec)) {
      const std::string stem =
          plot.class_value.empty() ? src.name : std::string(src.name) + "_class" + class_suffix(plot.class_value);
      const fs::path svg = out_dir / "figures" / (stem + ".svg");
      write_file(svg, plot.svg);
      m.add_artifact(out_dir, svg);
    }
  }

  const fs::path sidecar = audit / "adversarial.jsonl";
  if (fs::exists(sidecar)) {
    m.add_input(run_dir, sidecar);
    auto docs = heatmaps_from_adversarial_jsonl(read_file(sidecar));
    auto spread = [](const HeatmapDoc& d) {
      double s = 0.0;
      for (double x : d.diffs) s += std::abs(x);
      return s;
    };
    std::stable_sort(docs.begin(), docs.end(), [&](const HeatmapDoc& a, const HeatmapDoc& b) {
      const double sa = spread(a), sb = spread(b);
      return sa != sb ? sa > sb : a.id < b.id;
    });
    if (docs.size() > kHeatmapDocs) docs.resize(kHeatmapDocs);
    std::vector<std::string> fragments;
    for (const auto& d : docs) fragments.push_back(render_heatmap(d));
    const fs::path html = out_dir / "heatmaps" / "adversarial.html";
    write_file(html, heatmap_page("Adversarial minus original attention", fragments));
    m.add_artifact(out_dir, html);
  } else {
    outcome.warnings.push_back("no adversarial.jsonl; heatmaps skipped");
  }

  std::vector<VariantResult> variants;
  for (const char* name : {"attentive", "inattentive", "logodds-swap", "logodds-trained", "lr"}) {
    const fs::path p = run_dir / "eval" / (std::string(name) + ".json");
    VariantResult v{name, std::nullopt};
    if (fs::exists(p)) {
      m.add_input(run_dir, p);
      v.result = parse_eval_result(read_file(p));
    }
    variants.push_back(std::move(v));
  }
  const SummaryTable table = summary_table(variants);
  outcome.warnings.insert(outcome.warnings.end(), table.warnings.begin(), table.warnings.end());
  const fs::path csv = out_dir / "tables" / "summary.csv";
  const fs::path html = out_dir / "tables" / "summary.html";
  write_file(csv, table.csv);
  write_file(html, heatmap_page("Test AUC by model variant", {table.html}));
  m.add_artifact(out_dir, csv);
  m.add_artifact(out_dir, html);

  write_file(out_dir / "manifest.json", m.to_json());
  return outcome;
}

}  // namespace attnaudit
