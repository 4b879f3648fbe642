#include "attnaudit/cli.hpp"

#include <functional>
#include <iostream>
#include <memory>
#include <optional>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "attnaudit/report.hpp"
#include "attnaudit/util.hpp"

namespace attnaudit {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

// Calls fn(key, value) for each member; fn returns false for unknown keys.
void strict_object(const json& j, const std::string& where,
                   const std::function<bool(const std::string&, const json&)>& fn) {
  if (!j.is_object()) throw ValidationError(where + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!fn(it.key(), it.value()))
      throw ValidationError("unknown config key '" + where + "." + it.key() + "'");
}

std::string label_rule_name(LabelRule r) {
  return r == LabelRule::any_trigger ? "any_trigger" : "per_trigger";
}

LabelRule parse_label_rule(const std::string& s) {
  if (s == "any_trigger") return LabelRule::any_trigger;
  if (s == "per_trigger") return LabelRule::per_trigger;
  throw ValidationError("unknown label rule '" + s + "'");
}

}  // namespace

void RunConfig::validate() const {
  if (data_source != "synthetic" && data_source != "jsonl")
    throw ValidationError("data.source must be 'synthetic' or 'jsonl'");
  if (data_source == "jsonl" && jsonl_path.empty())
    throw ValidationError("data.jsonl.path is required for a jsonl source");
  if (min_count == 0) throw ValidationError("data.min_count must be >= 1");
  if (out.empty()) throw ValidationError("out must not be empty");
  encoder.validate();
  train.validate();
  if (!(lr.l2 >= 0.0)) throw ValidationError("lr.l2 must be >= 0");
  if (!(lr.tolerance > 0.0)) throw ValidationError("lr.tolerance must be positive");
  if (permutations == 0) throw ValidationError("audit.permutations must be positive");
  adversarial.validate();
  if (jobs == 0) throw ValidationError("jobs must be >= 1");
}

json RunConfig::to_json() const {
  json j;
  j["seed"] = seed;
  j["out"] = out.generic_string();
  j["jobs"] = jobs;
  j["data"] = {{"source", data_source},
               {"synthetic",
                {{"n_docs", synthetic.n_docs},
                 {"doc_len", synthetic.doc_len},
                 {"vocab_size", synthetic.vocab_size},
                 {"trigger_words", synthetic.trigger_words},
                 {"label_rule", label_rule_name(synthetic.label_rule)}}},
               {"jsonl", {{"path", jsonl_path.generic_string()}}},
               {"min_count", min_count},
               {"embeddings", embeddings.generic_string()}};
  j["encoder"] = encoder.to_json();
  j["train"] = {{"learning_rate", train.learning_rate}, {"beta1", train.beta1},
                {"beta2", train.beta2},                 {"adam_eps", train.adam_eps},
                {"l2", train.l2},                       {"batch_size", train.batch_size},
                {"max_epochs", train.max_epochs},       {"patience", train.patience},
                {"clip_norm", train.clip_norm}};
  j["lr"] = {{"l2", lr.l2}, {"tolerance", lr.tolerance}, {"max_iterations", lr.max_iterations}};
  j["audit"] = {{"split", split_name(audit_split)},
                {"permutations", permutations},
                {"grad_measure", gradient_measure_name(grad_measure)},
                {"logodds_abs", logodds_abs},
                {"adversarial",
                 {{"eps", adversarial.eps},
                  {"restarts", adversarial.restarts},
                  {"steps", adversarial.steps},
                  {"step_size", adversarial.step_size},
                  {"penalty", adversarial.penalty}}}};
  return j;
}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig c;
  try {
    strict_object(j, "config", [&](const std::string& k, const json& v) {
      if (k == "seed") c.seed = v.get<std::uint64_t>();
      else if (k == "out") c.out = v.get<std::string>();
      else if (k == "jobs") c.jobs = v.get<std::size_t>();
      else if (k == "encoder") c.encoder = EncoderConfig::from_json(v);
      else if (k == "data") {
        strict_object(v, "data", [&](const std::string& k, const json& v) {
          if (k == "source") c.data_source = v.get<std::string>();
          else if (k == "min_count") c.min_count = v.get<std::size_t>();
          else if (k == "embeddings") c.embeddings = v.get<std::string>();
          else if (k == "jsonl") {
            strict_object(v, "data.jsonl", [&](const std::string& k, const json& v) {
              if (k != "path") return false;
              c.jsonl_path = v.get<std::string>();
              return true;
            });
          } else if (k == "synthetic") {
            auto& s = c.synthetic;
            strict_object(v, "data.synthetic", [&](const std::string& k, const json& v) {
              if (k == "n_docs") s.n_docs = v.get<std::size_t>();
              else if (k == "doc_len") s.doc_len = v.get<std::size_t>();
              else if (k == "vocab_size") s.vocab_size = v.get<std::size_t>();
              else if (k == "trigger_words") s.trigger_words = v.get<std::vector<std::string>>();
              else if (k == "label_rule") s.label_rule = parse_label_rule(v.get<std::string>());
              else return false;
              return true;
            });
          } else return false;
          return true;
        });
      } else if (k == "train") {
        auto& t = c.train;
        strict_object(v, "train", [&](const std::string& k, const json& v) {
          if (k == "learning_rate") t.learning_rate = v.get<double>();
          else if (k == "beta1") t.beta1 = v.get<double>();
          else if (k == "beta2") t.beta2 = v.get<double>();
          else if (k == "adam_eps") t.adam_eps = v.get<double>();
          else if (k == "l2") t.l2 = v.get<double>();
          else if (k == "batch_size") t.batch_size = v.get<std::size_t>();
          else if (k == "max_epochs") t.max_epochs = v.get<std::size_t>();
          else if (k == "patience") t.patience = v.get<std::size_t>();
          else if (k == "clip_norm") t.clip_norm = v.get<double>();
          else return false;
          return true;
        });
      } else if (k == "lr") {
        strict_object(v, "lr", [&](const std::string& k, const json& v) {
          if (k == "l2") c.lr.l2 = v.get<double>();
          else if (k == "tolerance") c.lr.tolerance = v.get<double>();
          else if (k == "max_iterations") c.lr.max_iterations = v.get<std::size_t>();
          else return false;
          return true;
        });
      } else if (k == "audit") {
        strict_object(v, "audit", [&](const std::string& k, const json& v) {
          if (k == "split") c.audit_split = parse_split(v.get<std::string>());
          else if (k == "permutations") c.permutations = v.get<std::size_t>();
          else if (k == "grad_measure") c.grad_measure = parse_gradient_measure(v.get<std::string>());
          else if (k == "logodds_abs") c.logodds_abs = v.get<bool>();
          else if (k == "adversarial") {
            auto& a = c.adversarial;
            strict_object(v, "audit.adversarial", [&](const std::string& k, const json& v) {
              if (k == "eps") a.eps = v.get<double>();
              else if (k == "restarts") a.restarts = v.get<std::size_t>();
              else if (k == "steps") a.steps = v.get<std::size_t>();
              else if (k == "step_size") a.step_size = v.get<double>();
              else if (k == "penalty") a.penalty = v.get<double>();
              else return false;
              return true;
            });
          } else return false;
          return true;
        });
      } else return false;
      return true;
    });
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  return c;
}

std::string RunConfig::hash() const {
  json j = to_json();
  j.erase("out");  // results do not depend on location or thread count
  j.erase("jobs");
  return hex64(fnv1a64(j.dump()));
}

// ---------------------------------------------------------------------------
// Pipeline stages. Paths are relative to the run directory.

namespace {

const fs::path kCorpus = "data/corpus.jsonl";
const fs::path kVocab = "data/vocab.json";
const fs::path kLrModel = "models/lr.json";
const fs::path kLogOdds = "tables/logodds.csv";

std::string variant_name(AttentionKind a) {
  switch (a) {
    case AttentionKind::additive: return "attentive";
    case AttentionKind::none: return "inattentive";
    case AttentionKind::frozen_external: return "logodds-trained";
  }
  return "attentive";
}

fs::path checkpoint_path(const std::string& variant) { return "models/" + variant + ".ckpt"; }

class Stage {
 public:
  Stage(const RunConfig& config, std::string name, std::ostream& out, std::ostream& err)
      : config_(config), root_(config.out), out_(out), err_(err) {
    manifest_.stage = std::move(name);
    manifest_.config_hash = config.hash();
    manifest_.seed = config.seed;
  }

  fs::path path(const fs::path& rel) const { return root_ / rel; }

  std::string input(const fs::path& rel) {
    const fs::path p = path(rel);
    if (!fs::exists(p))
      throw std::runtime_error("missing input " + p.generic_string() + " (run the producing stage first)");
    manifest_.add_input(root_, p);
    return read_file(p);
  }

  void external_input(const fs::path& p) {
    if (!fs::exists(p)) throw std::runtime_error("missing input " + p.generic_string());
    manifest_.add_input(root_, p);
  }

  void write(const fs::path& rel, std::string_view contents) {
    write_file(path(rel), contents);
    manifest_.add_artifact(root_, path(rel));
  }

  void adopt(const Manifest& m, const fs::path& base) {
    for (const auto& a : m.artifacts)
      manifest_.artifacts.push_back(
          {(fs::relative(base, root_) / a.path).generic_string(), a.hash});
  }

  void warn(const std::string& msg) { err_ << "warning: " << msg << "\n"; }

  Dataset dataset() {
    const Vocabulary vocab = Vocabulary::from_json(input(kVocab));
    JsonlOptions options;
    options.vocabulary = &vocab;
    options.min_count = config_.min_count;
    Dataset d = parse_jsonl(input(kCorpus), options);
    d.validate();
    return d;
  }

  EmbeddingMatrix embeddings(const Dataset& d, std::size_t dim) {
    if (config_.embeddings != "none" && !config_.embeddings.empty()) external_input(config_.embeddings);
    return load_embeddings(config_.embeddings, d.vocabulary, dim,
                           derive_seed(config_.seed, "embeddings"));
  }

  Manifest finish() {
    const fs::path m = path(fs::path("manifests") / (file_stem() + ".json"));
    write_file(m, manifest_.to_json());
    out_ << manifest_.stage << ": " << manifest_.artifacts.size() << " artifacts\n";
    return manifest_;
  }

  const RunConfig& config() const { return config_; }

 private:
  std::string file_stem() const {
    std::string s = manifest_.stage;
    for (char& c : s)
      if (c == ' ') c = '-';
    return s;
  }

  const RunConfig& config_;
  fs::path root_;
  std::ostream& out_;
  std::ostream& err_;
  Manifest manifest_;
};

using StageFn = std::function<Manifest(const RunConfig&, std::ostream&, std::ostream&)>;

Manifest gen_data(const RunConfig& c, std::ostream& out, std::ostream& err) {
  Stage s(c, "gen-data", out, err);
  Dataset d;
  if (c.data_source == "synthetic") {
    SyntheticCorpusParams p = c.synthetic;
    p.seed = derive_seed(c.seed, "gen-data");
    d = generate_synthetic_corpus(p);
  } else {
    s.external_input(c.jsonl_path);
    JsonlOptions options;
    options.min_count = c.min_count;
    d = load_jsonl(c.jsonl_path, options);
  }
  d.validate();
  s.write(kCorpus, to_jsonl(d));
  return s.finish();
}

Manifest build_vocabulary(const RunConfig& c, std::ostream& out, std::ostream& err) {
  Stage s(c, "build-vocab", out, err);
  JsonlOptions options;
  options.min_count = c.min_count;
  const Dataset d = parse_jsonl(s.input(kCorpus), options);
  s.write(kVocab, d.vocabulary.to_json());
  return s.finish();
}

void write_eval(Stage& s, const std::string& variant, const EvalResult& r) {
  s.write("eval/" + variant + ".json", eval_result_json(r));
}

Manifest train_neural(const RunConfig& c, std::ostream& out, std::ostream& err) {
  const std::string variant = variant_name(c.encoder.attention);
  Stage s(c, "train " + variant, out, err);
  if (c.encoder.attention == AttentionKind::frozen_external)
    throw ValidationError("use train-logodds for log-odds attention");
  const Dataset d = s.dataset();
  EncoderConfig ec = c.encoder;
  ec.label_count = d.label_count;
  const Model init = Model::initialize(ec, s.embeddings(d, ec.embedding_dim),
                                       derive_seed(c.seed, "init:" + variant), d.vocabulary.hash());
  TrainConfig tc = c.train;
  tc.seed = derive_seed(c.seed, "train:" + variant);
  const TrainResult r = train(init, d, tc);
  s.write(checkpoint_path(variant), r.model.to_checkpoint());
  s.write("logs/" + variant + ".csv", r.log.to_csv());
  write_eval(s, variant, evaluate(r.model, d, Split::test));
  return s.finish();
}

Manifest train_lr_stage(const RunConfig& c, std::ostream& out, std::ostream& err) {
  Stage s(c, "train-lr", out, err);
  const Dataset d = s.dataset();
  const LRModel m = train_lr(d, c.lr);
  for (std::size_t l = 0; l < m.converged.size(); ++l)
    if (!m.converged[l]) s.warn("LR label " + std::to_string(l) + " stopped before reaching tolerance");
  s.write(kLrModel, m.to_json());
  s.write(kLogOdds, LogOddsTable::from_model(m).to_csv(d.vocabulary));
  write_eval(s, "lr", evaluate_lr(m, d, Split::test));
  return s.finish();
}

Manifest train_logodds_stage(const RunConfig& c, std::ostream& out, std::ostream& err) {
  Stage s(c, "train-logodds", out, err);
  const Dataset d = s.dataset();
  const auto table = LogOddsTable::from_model(LRModel::from_json(s.input(kLrModel)));
  TrainConfig tc = c.train;
  tc.seed = derive_seed(c.seed, "train:logodds-trained");
  const TrainResult r = train_with_frozen_logodds(
      d, table, c.encoder, tc, s.embeddings(d, c.encoder.embedding_dim),
      derive_seed(c.seed, "init:logodds-trained"), c.logodds_abs);
  s.write(checkpoint_path("logodds-trained"), r.model.to_checkpoint());
  s.write("logs/logodds-trained.csv", r.log.to_csv());
  write_eval(s, "logodds-trained", evaluate(r.model, d, Split::test, logodds_provider(table, c.logodds_abs)));
  return s.finish();
}

Model attentive_model(Stage& s) {
  const Model m = Model::from_checkpoint(s.input(checkpoint_path("attentive")));
  if (m.config().attention != AttentionKind::additive)
    throw ValidationError("audits need a model with additive attention");
  return m;
}

Manifest audit_gradients(const RunConfig& c, std::ostream& out, std::ostream& err) {
  Stage s(c, "audit gradients", out, err);
  const Dataset d = s.dataset();
  const Model m = attentive_model(s);
  s.write("audit/gradients.csv",
          gradients_csv(run_gradient_audit(m, d, c.audit_split, c.grad_measure, c.jobs)));
  return s.finish();
}

Manifest audit_permute(const RunConfig& c, std::ostream& out, std::ostream& err) {
  Stage s(c, "audit permute", out, err);
  const Dataset d = s.dataset();
  const Model m = attentive_model(s);
  s.write("audit/permute.csv",
          permutation_csv(run_permutation_audit(m, d, c.audit_split, c.permutations,
                                                derive_seed(c.seed, "audit:permute"), c.jobs)));
  return s.finish();
}

Manifest audit_adversarial(const RunConfig& c, std::ostream& out, std::ostream& err) {
  Stage s(c, "audit adversarial", out, err);
  const Dataset d = s.dataset();
  const Model m = attentive_model(s);
  const auto records = run_adversarial_audit(m, d, c.audit_split, c.adversarial,
                                             derive_seed(c.seed, "audit:adversarial"), c.jobs);
  s.write("audit/adversarial.csv", adversarial_csv(records));
  s.write("audit/adversarial.jsonl", adversarial_jsonl(records, d.vocabulary));
  return s.finish();
}

Manifest audit_logodds(const RunConfig& c, std::ostream& out, std::ostream& err) {
  Stage s(c, "audit logodds", out, err);
  const Dataset d = s.dataset();
  const Model m = attentive_model(s);
  const auto table = LogOddsTable::from_model(LRModel::from_json(s.input(kLrModel)));
  const SwapResult r = logodds_swap_eval(m, d, c.audit_split, table, c.logodds_abs, c.jobs);
  s.write("audit/logodds_swap.csv", swap_csv(r.records));
  write_eval(s, "logodds-swap", r.swapped);
  return s.finish();
}

Manifest report_stage(const RunConfig& c, std::ostream& out, std::ostream& err) {
  Stage s(c, "report", out, err);
  const ReportOutcome r = render_report(c.out, c.out / "report");
  for (const auto& w : r.warnings) s.warn(w);
  s.adopt(r.manifest, c.out / "report");
  return s.finish();
}

Manifest run_all(const RunConfig& c, std::ostream& out, std::ostream& err) {
  Stage s(c, "all", out, err);
  RunConfig inattentive = c;
  inattentive.encoder.attention = AttentionKind::none;
  RunConfig attentive = c;
  attentive.encoder.attention = AttentionKind::additive;
  const std::vector<std::pair<const RunConfig*, StageFn>> stages{
      {&c, gen_data},           {&c, build_vocabulary},     {&attentive, train_neural},
      {&inattentive, train_neural}, {&c, train_lr_stage},   {&c, train_logodds_stage},
      {&c, audit_gradients},    {&c, audit_permute},        {&c, audit_adversarial},
      {&c, audit_logodds},      {&c, report_stage}};
  for (const auto& [config, fn] : stages) s.adopt(fn(*config, out, err), c.out);
  return s.finish();
}

RunConfig load_config(const std::string& path) {
  if (path.empty()) return {};
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ValidationError("config " + path + ": " + e.what());
  }
  return RunConfig::from_json(j);
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Train attention text classifiers and audit their attention weights.", "attnaudit"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path, out_dir, encoder, attention, grad_measure, logodds_abs;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> jobs;
  std::optional<double> eps;
  app.add_option("--config", config_path, "JSON run configuration");
  app.add_option("--seed", seed, "Global seed");
  app.add_option("--out", out_dir, "Run directory");
  app.add_option("--encoder", encoder, "Encoder")->check(CLI::IsMember({"bilstm", "cnn", "proj"}));
  app.add_option("--attention", attention, "Attention for `train`")
      ->check(CLI::IsMember({"additive", "none"}));
  app.add_option("--jobs", jobs, "Worker threads for audits");
  app.add_option("--eps", eps, "Adversarial output-change budget");
  app.add_option("--grad-measure", grad_measure, "Gradient attribution measure")
      ->check(CLI::IsMember({"gxi", "l2"}));
  app.add_option("--logodds-abs", logodds_abs, "Use |beta| for log-odds attention")
      ->check(CLI::IsMember({"true", "false"}));

  std::vector<std::pair<CLI::App*, StageFn>> commands;
  auto command = [&](CLI::App* parent, const char* name, const char* help, StageFn fn) {
    CLI::App* sub = parent->add_subcommand(name, help);
    sub->fallthrough();
    commands.emplace_back(sub, std::move(fn));
    return sub;
  };
  command(&app, "gen-data", "Generate or import the corpus", gen_data);
  command(&app, "build-vocab", "Build the vocabulary from the train split", build_vocabulary);
  command(&app, "train", "Train an attentive or inattentive model", train_neural);
  command(&app, "train-lr", "Train the bag-of-words logistic regression", train_lr_stage);
  command(&app, "train-logodds", "Train a model with frozen log-odds attention", train_logodds_stage);
  CLI::App* audit = app.add_subcommand("audit", "Run one attention audit");
  audit->require_subcommand(1);
  audit->fallthrough();
  command(audit, "gradients", "Kendall tau between attention and gradient attribution", audit_gradients);
  command(audit, "permute", "Output change under permuted attention", audit_permute);
  command(audit, "adversarial", "Maximally different attention within an output budget", audit_adversarial);
  command(audit, "logodds", "Swap in log-odds attention at test time", audit_logodds);
  command(&app, "report", "Render figures, heatmaps and tables", report_stage);
  command(&app, "all", "Run the full pipeline", run_all);

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error[USAGE]: " << e.what() << "\n" << app.help();
    return kExitValidation;
  }

  try {
    RunConfig config = load_config(config_path);
    if (seed) config.seed = *seed;
    if (!out_dir.empty()) config.out = out_dir;
    if (!encoder.empty()) config.encoder.kind = parse_encoder(encoder);
    if (!attention.empty()) config.encoder.attention = parse_attention(attention);
    if (jobs) config.jobs = *jobs;
    if (eps) config.adversarial.eps = *eps;
    if (!grad_measure.empty()) config.grad_measure = parse_gradient_measure(grad_measure);
    if (!logodds_abs.empty()) config.logodds_abs = logodds_abs == "true";
    config.validate();
    for (const auto& [sub, fn] : commands)
      if (sub->parsed()) {
        write_file(config.out / "config.json", config.to_json().dump(2) + "\n");
        fn(config, out, err);
      }
  } catch (const ValidationError& e) {
    err << "error[VALIDATION]: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error[RUNTIME]: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace attnaudit
