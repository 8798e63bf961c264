#include "hiermil/pipeline.hpp"

#include <algorithm>
#include <filesystem>

#include <json.hpp>

#include "hiermil/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace hiermil {

PipelineConfig::PipelineConfig() {
  for (const char* s : {"none", "generic", "closest-sources",
                        "closest-ancestor", "visual", "best-oracle"}) {
    strategies.push_back(TransferStrategy::parse(s));
  }
  for (int i = 0; i <= 10; ++i) {
    lambda_candidates.push_back(static_cast<double>(i) / 10.0);
  }
  emit = {"table", "csv"};
}

namespace {

// Strict field access: every key must be known, every value well-typed.
// Paths in errors look like "config.mil.train.epochs".
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  ~Section() = default;

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError(path_ + "." + key + ": unknown field");
    }
  }

  bool has(const char* key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  // json::get would quietly truncate 2.5 to an int, so the type of the
  // stored value is checked explicitly before any conversion.
  void number(const char* key, double* out) {
    if (const json* v = checked(key, &json::is_number, "a number")) {
      *out = v->get<double>();
    }
  }
  void integer(const char* key, int* out) {
    if (const json* v =
            checked(key, &json::is_number_integer, "an integer")) {
      *out = v->get<int>();
    }
  }
  void text(const char* key, std::string* out) {
    if (const json* v = checked(key, &json::is_string, "a string")) {
      *out = v->get<std::string>();
    }
  }
  void boolean(const char* key, bool* out) {
    if (const json* v = checked(key, &json::is_boolean, "a boolean")) {
      *out = v->get<bool>();
    }
  }

  const json& raw(const char* key) {
    seen_.insert(key);
    return j_.at(key);
  }

  const json& json_ref() const { return j_; }
  const std::string& path() const { return path_; }

 private:
  const json* checked(const char* key, bool (json::*pred)() const noexcept,
                      const char* type_name) {
    if (!has(key)) return nullptr;
    const json& v = j_.at(key);
    if (!(v.*pred)()) {
      throw ConfigError(path_ + "." + key + ": expected " + type_name);
    }
    return &v;
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void parse_train(const json& j, const std::string& path, TrainConfig* cfg) {
  Section s(j, path);
  s.number("regularization_strength", &cfg->regularization_strength);
  s.integer("epochs", &cfg->epochs);
  if (s.has("learning_rate")) {
    Section lr(j.at("learning_rate"), path + ".learning_rate");
    lr.number("initial", &cfg->learning_rate.initial);
    lr.text("decay", &cfg->learning_rate.decay);
    lr.finish();
  }
  s.integer("negative_subsample_cap", &cfg->negative_subsample_cap);
  s.finish();
}

void parse_gen(const json& j, const std::string& path, GenConfig* cfg) {
  Section s(j, path);
  s.integer("num_source_classes", &cfg->num_source_classes);
  s.integer("num_target_classes", &cfg->num_target_classes);
  s.integer("hierarchy_branching", &cfg->hierarchy_branching);
  s.integer("images_per_class", &cfg->images_per_class);
  s.integer("proposals_per_image", &cfg->proposals_per_image);
  s.integer("feature_dim", &cfg->feature_dim);
  s.number("class_separation", &cfg->class_separation);
  s.number("feature_noise", &cfg->feature_noise);
  s.number("distractor_fraction", &cfg->distractor_fraction);
  s.number("proposal_jitter", &cfg->proposal_jitter);
  s.number("semantic_feature_sharing", &cfg->semantic_feature_sharing);
  s.number("context_signal", &cfg->context_signal);
  s.number("noisy_objectness_sigma", &cfg->noisy_objectness_sigma);
  s.finish();
}

void parse_bank(const json& j, const std::string& path, BankConfig* cfg) {
  Section s(j, path);
  s.number("positive_iou", &cfg->positive_iou);
  s.number("negative_iou", &cfg->negative_iou);
  if (s.has("train")) parse_train(j.at("train"), path + ".train", &cfg->train);
  s.finish();
}

void parse_mil(const json& j, const std::string& path, MilConfig* cfg) {
  Section s(j, path);
  s.number("lambda", &cfg->lambda);
  s.integer("num_folds", &cfg->num_folds);
  s.integer("max_iterations", &cfg->max_iterations);
  s.number("min_changed_fraction", &cfg->min_changed_fraction);
  s.number("init_boundary_fraction", &cfg->init_boundary_fraction);
  if (s.has("train")) parse_train(j.at("train"), path + ".train", &cfg->train);
  s.finish();
}

json train_to_json(const TrainConfig& cfg) {
  return json{{"regularization_strength", cfg.regularization_strength},
              {"epochs", cfg.epochs},
              {"learning_rate",
               json{{"initial", cfg.learning_rate.initial},
                    {"decay", cfg.learning_rate.decay}}},
              {"negative_subsample_cap", cfg.negative_subsample_cap}};
}

}  // namespace

PipelineConfig parse_pipeline_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  PipelineConfig cfg;
  Section s(j, "config");
  if (s.has("seed")) {
    const json& v = j.at("seed");
    if (!v.is_number_unsigned()) {
      throw ConfigError("config.seed: expected a non-negative integer");
    }
    cfg.seed = v.get<std::uint64_t>();
  }
  if (s.has("gen")) parse_gen(j.at("gen"), "config.gen", &cfg.gen);
  if (s.has("bank")) {
    parse_bank(j.at("bank"), "config.bank", &cfg.experiment.bank);
  }
  if (s.has("mil")) parse_mil(j.at("mil"), "config.mil", &cfg.experiment.mil);
  if (s.has("strategies")) {
    const json& arr = j.at("strategies");
    if (!arr.is_array() || arr.empty()) {
      throw ConfigError("config.strategies: expected a non-empty array");
    }
    cfg.strategies.clear();
    for (const json& item : arr) {
      if (!item.is_string()) {
        throw ConfigError("config.strategies: expected strategy strings");
      }
      cfg.strategies.push_back(TransferStrategy::parse(item.get<std::string>()));
    }
  }
  if (s.has("lambda_by_strategy")) {
    const json& obj = j.at("lambda_by_strategy");
    if (!obj.is_object()) {
      throw ConfigError("config.lambda_by_strategy: expected an object");
    }
    for (const auto& [key, value] : obj.items()) {
      TransferStrategy::parse(key);  // reject unknown strategy spellings
      if (!value.is_number()) {
        throw ConfigError("config.lambda_by_strategy." + key +
                          ": expected a number");
      }
      cfg.experiment.lambda_by_strategy[key] = value.get<double>();
    }
  }
  if (s.has("lambda_candidates")) {
    const json& arr = j.at("lambda_candidates");
    if (!arr.is_array() || arr.empty()) {
      throw ConfigError("config.lambda_candidates: expected a non-empty array");
    }
    cfg.lambda_candidates.clear();
    for (const json& item : arr) {
      if (!item.is_number()) {
        throw ConfigError("config.lambda_candidates: expected numbers");
      }
      cfg.lambda_candidates.push_back(item.get<double>());
    }
  }
  {
    double nms = cfg.experiment.nms_iou;
    s.number("nms_iou", &nms);
    cfg.experiment.nms_iou = nms;
    bool parallel = cfg.experiment.parallel;
    s.boolean("parallel", &parallel);
    cfg.experiment.parallel = parallel;
  }
  if (s.has("emit")) {
    const json& arr = j.at("emit");
    if (!arr.is_array()) throw ConfigError("config.emit: expected an array");
    cfg.emit.clear();
    for (const json& item : arr) {
      const std::string e = item.is_string() ? item.get<std::string>() : "";
      if (e != "table" && e != "csv" && e != "similarity_plot_data") {
        throw ConfigError("config.emit: unknown artifact '" + e + "'");
      }
      cfg.emit.insert(e);
    }
  }
  s.finish();
  resolve_seeds(&cfg);
  return cfg;
}

PipelineConfig load_pipeline_config(const std::string& path) {
  return parse_pipeline_config(read_file(path));
}

void resolve_seeds(PipelineConfig* cfg) {
  cfg->gen.rng_seed = cfg->seed;
  cfg->experiment.bank.train.rng_seed = derive_seed(cfg->seed, "bank");
  cfg->experiment.mil.rng_seed = derive_seed(cfg->seed, "mil");
}

std::string pipeline_config_to_json(const PipelineConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  j["gen"] = json{{"num_source_classes", cfg.gen.num_source_classes},
                  {"num_target_classes", cfg.gen.num_target_classes},
                  {"hierarchy_branching", cfg.gen.hierarchy_branching},
                  {"images_per_class", cfg.gen.images_per_class},
                  {"proposals_per_image", cfg.gen.proposals_per_image},
                  {"feature_dim", cfg.gen.feature_dim},
                  {"class_separation", cfg.gen.class_separation},
                  {"feature_noise", cfg.gen.feature_noise},
                  {"distractor_fraction", cfg.gen.distractor_fraction},
                  {"proposal_jitter", cfg.gen.proposal_jitter},
                  {"semantic_feature_sharing", cfg.gen.semantic_feature_sharing},
                  {"context_signal", cfg.gen.context_signal},
                  {"noisy_objectness_sigma", cfg.gen.noisy_objectness_sigma}};
  j["bank"] = json{{"positive_iou", cfg.experiment.bank.positive_iou},
                   {"negative_iou", cfg.experiment.bank.negative_iou},
                   {"train", train_to_json(cfg.experiment.bank.train)}};
  j["mil"] = json{{"lambda", cfg.experiment.mil.lambda},
                  {"num_folds", cfg.experiment.mil.num_folds},
                  {"max_iterations", cfg.experiment.mil.max_iterations},
                  {"min_changed_fraction", cfg.experiment.mil.min_changed_fraction},
                  {"init_boundary_fraction", cfg.experiment.mil.init_boundary_fraction},
                  {"train", train_to_json(cfg.experiment.mil.train)}};
  json strategies = json::array();
  for (const TransferStrategy& s : cfg.strategies) {
    strategies.push_back(s.to_string());
  }
  j["strategies"] = strategies;
  j["lambda_by_strategy"] = cfg.experiment.lambda_by_strategy;
  j["lambda_candidates"] = cfg.lambda_candidates;
  j["nms_iou"] = cfg.experiment.nms_iou;
  j["parallel"] = cfg.experiment.parallel;
  j["emit"] = cfg.emit;
  return j.dump(2) + "\n";
}

void cmd_gen(const PipelineConfig& cfg, const std::string& out_dir) {
  save_dataset(out_dir, generate(cfg.gen));
}

namespace {

Dataset dataset_for(const PipelineConfig& cfg, const std::string& dataset_dir) {
  return dataset_dir.empty() ? generate(cfg.gen) : load_dataset(dataset_dir);
}

json trace_to_json(const MilResult& result) {
  json trace = json::array();
  for (const MilIterationStats& s : result.trace) {
    trace.push_back(json{{"changed_count", s.changed_count},
                         {"mean_selected_score", s.mean_selected_score}});
  }
  return trace;
}

void write_strategy_artifacts(const std::string& run_dir,
                              const StrategyRun& run,
                              const EvalReport& report) {
  const std::string safe = run.strategy.to_string();
  for (const auto& [cls, result] : run.per_class) {
    const std::string name = report.class_names.at(cls);

    json trace;
    trace["class"] = name;
    trace["strategy"] = safe;
    trace["lambda"] = run.lambda;
    trace["iterations"] = trace_to_json(result);
    if (run.oracle) {
      trace["oracle_source"] = run.oracle_pick.at(cls);
    }
    write_file_atomic(run_dir + "/traces/" + safe + "/" + name + ".json",
                      trace.dump(2) + "\n");

    json sel;
    sel["class"] = name;
    sel["strategy"] = safe;
    json images = json::object();
    for (const auto& [id, proposal] : result.selections) {
      const BoundingBox& b = result.final_boxes.at(id);
      images[id] = json{{"proposal", proposal},
                        {"box", {b.x_min, b.y_min, b.x_max, b.y_max}}};
    }
    sel["images"] = images;
    write_file_atomic(run_dir + "/selections/" + safe + "/" + name + ".json",
                      sel.dump(2) + "\n");
  }
}

void write_similarity_artifacts(const std::string& out_dir, const Dataset& d,
                                const std::map<ClassId, double>& corloc_none,
                                const std::map<ClassId, double>& corloc_generic) {
  const std::vector<double> ic =
      information_content(d.hierarchy, source_box_counts(d.train_source));
  const SimilarityTable table = similarity_improvement_table(
      corloc_none, corloc_generic, d.hierarchy, ic);

  json j;
  j["note"] =
      "information content uses one pseudo-count per leaf so that "
      "annotation-free classes keep a finite value";
  j["pearson_r"] = table.pearson_r;
  json rows = json::array();
  std::string csv = "target,max_lin_similarity,corloc_delta\n";
  for (const SimilarityRow& row : table.rows) {
    const std::string& name = d.hierarchy.node(row.target).name;
    rows.push_back(json{{"target", name},
                        {"max_lin_similarity", row.max_lin_similarity},
                        {"corloc_delta", row.corloc_delta}});
    csv += name + "," + format_double(row.max_lin_similarity) + "," +
           format_double(row.corloc_delta) + "\n";
  }
  j["rows"] = rows;
  write_file_atomic(out_dir + "/similarity_table.json", j.dump(2) + "\n");
  write_file_atomic(out_dir + "/similarity_table.csv", csv);
}

std::map<ClassId, double> column_corloc(const EvalColumn& column) {
  std::map<ClassId, double> out;
  for (const auto& [cls, eval] : column.per_class) {
    out[cls] = eval.corloc_05.value_or(0.0);
  }
  return out;
}

void write_run_manifest(const std::string& out_dir, const PipelineConfig& cfg,
                        const Dataset& d, const std::string& dataset_dir,
                        const ScorerBank& bank) {
  json m;
  m["format"] = "hiermil-run";
  m["version"] = 1;
  m["rng_algorithm"] = kRngAlgorithm;
  m["seed"] = cfg.seed;
  m["derived_seeds"] = json{{"gen", cfg.gen.rng_seed},
                            {"bank", cfg.experiment.bank.train.rng_seed},
                            {"mil", cfg.experiment.mil.rng_seed}};
  m["dataset"] = json{{"source", dataset_dir.empty() ? "generated" : dataset_dir},
                      {"config_digest", d.config_digest},
                      {"hierarchy_digest", d.hierarchy.digest()}};
  m["bank_digest"] = bank_digest(bank);
  write_file_atomic(out_dir + "/run_manifest.json", m.dump(2) + "\n");
}

}  // namespace

void cmd_train_bank(const PipelineConfig& cfg, const std::string& dataset_dir,
                    const std::string& out_dir) {
  const Dataset d = dataset_for(cfg, dataset_dir);
  const ScorerBank bank =
      train_bank(d.hierarchy, d.train_source, cfg.experiment.bank);
  save_bank(out_dir, bank, cfg.experiment.bank);
}

ExperimentResult cmd_run(const PipelineConfig& cfg,
                         const std::string& dataset_dir,
                         const std::string& bank_dir,
                         const std::string& out_dir) {
  const Dataset d = dataset_for(cfg, dataset_dir);

  const ScorerBank* prebuilt = nullptr;
  ScorerBank loaded;
  if (!bank_dir.empty()) {
    loaded = load_bank(bank_dir);
    if (loaded.hierarchy_digest != d.hierarchy.digest()) {
      throw DataError("bank was trained on a different hierarchy");
    }
    prebuilt = &loaded;
  }

  ExperimentResult result =
      run_experiment(d, cfg.strategies, cfg.experiment, prebuilt);

  RunPaths paths{out_dir};
  fs::create_directories(out_dir);
  write_file_atomic(paths.resolved_config(), pipeline_config_to_json(cfg));
  write_run_manifest(out_dir, cfg, d, dataset_dir, result.bank);
  write_file_atomic(paths.report_json(), report_to_json(result.report));
  if (cfg.emit.count("table")) {
    write_file_atomic(paths.report_text(), render_report_text(result.report));
  }
  if (cfg.emit.count("csv")) {
    write_file_atomic(paths.report_csv(), report_to_csv(result.report));
  }
  for (const StrategyRun& run : result.runs) {
    write_strategy_artifacts(out_dir, run, result.report);
    if (run.oracle) {
      json picks = json::object();
      for (const auto& [cls, src] : run.oracle_pick) {
        picks[result.report.class_names.at(cls)] = d.hierarchy.node(src).name;
      }
      write_file_atomic(out_dir + "/oracle_picks.json", picks.dump(2) + "\n");
    }
  }
  if (cfg.emit.count("similarity_plot_data")) {
    const EvalColumn* none = nullptr;
    const EvalColumn* generic = nullptr;
    for (const EvalColumn& col : result.report.columns) {
      if (col.label == "none") none = &col;
      if (col.label == "generic") generic = &col;
    }
    if (!none || !generic) {
      throw ConfigError(
          "emit similarity_plot_data needs both 'none' and 'generic' among "
          "the strategies");
    }
    write_similarity_artifacts(out_dir, d, column_corloc(*none),
                               column_corloc(*generic));
  }
  return result;
}

LambdaSelection cmd_select_lambda(const PipelineConfig& cfg,
                                  const std::string& dataset_dir,
                                  const std::string& strategy,
                                  const std::string& out_file) {
  const Dataset d = dataset_for(cfg, dataset_dir);
  const TransferStrategy s = TransferStrategy::parse(strategy);
  const LambdaSelection selection =
      select_lambda(d, cfg.experiment.bank, s, cfg.lambda_candidates,
                    cfg.experiment.mil);
  if (!out_file.empty()) {
    json j;
    j["strategy"] = s.to_string();
    j["best_lambda"] = selection.best;
    json scores = json::array();
    for (const auto& [lambda, corloc] : selection.corloc_by_lambda) {
      scores.push_back(json{{"lambda", lambda}, {"corloc_05", corloc}});
    }
    j["corloc_by_lambda"] = scores;
    write_file_atomic(out_file, j.dump(2) + "\n");
  }
  return selection;
}

void cmd_analyze(const PipelineConfig& cfg, const std::string& dataset_dir,
                 const std::string& out_dir) {
  const Dataset d = dataset_for(cfg, dataset_dir);

  std::vector<TransferStrategy> strategies{
      TransferStrategy::parse("none"), TransferStrategy::parse("generic"),
      TransferStrategy::parse("best-oracle")};
  const ExperimentResult result =
      run_experiment(d, strategies, cfg.experiment);

  fs::create_directories(out_dir);
  write_similarity_artifacts(out_dir, d,
                             column_corloc(result.report.columns[0]),
                             column_corloc(result.report.columns[1]));

  json oracle;
  for (const auto& [cls, src] : result.runs[2].oracle_pick) {
    oracle[result.report.class_names.at(cls)] =
        json{{"source", d.hierarchy.node(src).name},
             {"corloc_05",
              result.report.columns[2].per_class.at(cls).corloc_05.value_or(0.0)}};
  }
  json j;
  j["median_closest_source_count"] = median_closest_source_count(d.hierarchy);
  j["per_target"] = oracle;
  write_file_atomic(out_dir + "/best_source.json", j.dump(2) + "\n");
  write_file_atomic(out_dir + "/report.json", report_to_json(result.report));
}

std::string cmd_report(const std::string& report_json_path) {
  return render_report_text(report_from_json(read_file(report_json_path)));
}

}  // namespace hiermil
