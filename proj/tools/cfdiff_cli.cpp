// cfdiff: command-line driver for explaining model adaptations.
//
// Every command resolves its settings from built-in defaults, an optional
// --config JSON file and explicit flags (in increasing priority), writes its
// outputs atomically into the output directory together with a manifest.json
// holding the resolved settings, and can be replayed with --config manifest.json.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cfdiff/cfdiff.hpp"

namespace fs = std::filesystem;
using namespace cfdiff;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitEmpty = 2;

void log_stage(const std::string& msg) { std::cerr << "[cfdiff] " << msg << "\n"; }

/// Settings of one command: defaults < config file < flags.
class Settings {
 public:
  Settings(std::string command, Json defaults) : command_(std::move(command)), values_(std::move(defaults)) {}

  void merge_file(const std::string& path) {
    Json j = load_json(path);
    if (j.is_object() && j.contains("config") && j.contains("command")) {
      if (j["command"] != command_)
        throw InvalidArgument("config file was written by '" + j["command"].get<std::string>() + "', not '" +
                              command_ + "'");
      j = j["config"];
    }
    if (!j.is_object()) throw InvalidArgument("config file must hold a JSON object");
    for (const auto& [key, value] : j.items()) {
      if (!values_.contains(key)) throw InvalidArgument("unknown config key '" + key + "' for " + command_);
      values_[key] = value;
    }
  }

  template <class T>
  void set(const std::string& key, const std::optional<T>& flag) {
    if (flag) values_[key] = *flag;
  }

  template <class T>
  T get(const std::string& key) const {
    try {
      return values_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw InvalidArgument("setting '" + key + "' is missing or has the wrong type");
    }
  }

  void put(const std::string& key, Json value) { values_[key] = std::move(value); }

  bool is_null(const std::string& key) const { return values_.at(key).is_null(); }

  Json manifest() const { return Json{{"command", command_}, {"config", values_}}; }

 private:
  std::string command_;
  Json values_;
};

struct Common {
  std::optional<std::string> config;
  std::optional<std::string> out;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "JSON settings file (a manifest.json is accepted)");
  app->add_option("--out", c.out, "Output directory (default: $CFDIFF_OUTPUT_DIR)");
}

void apply_common(Settings& s, const Common& c) {
  if (c.config) s.merge_file(*c.config);
  s.set("out", c.out);
}

std::string require_out(const Settings& s) {
  std::string out;
  if (!s.is_null("out")) out = s.get<std::string>("out");
  if (out.empty()) {
    if (const char* env = std::getenv("CFDIFF_OUTPUT_DIR"); env && *env) out = env;
  }
  if (out.empty()) throw CLI::RequiredError("--out");
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out)) throw IoError("cannot create output directory '" + out + "'");
  return out;
}

std::string path_in(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

void write_manifest(const std::string& dir, const Settings& s) { save_json(path_in(dir, "manifest.json"), s.manifest()); }

Task task_of(const Model& m) { return m.is_classifier() ? Task::classification : Task::regression; }

Dataset load_for_model(const Settings& s, const std::string& key, const Model& m) {
  Dataset d = load_csv(s.get<std::string>(key), s.get<std::string>("label"), task_of(m));
  if (d.n_features() != m.n_features)
    throw InvalidArgument("dataset '" + s.get<std::string>(key) + "' has " + std::to_string(d.n_features()) +
                          " features, the model expects " + std::to_string(m.n_features));
  return d;
}

TargetSpec target_from(const Settings& s) {
  const auto kind = s.get<std::string>("target");
  if (kind == "flip") return FlipTarget{};
  if (kind == "class") return ClassTarget{s.get<std::size_t>("target_class")};
  if (kind == "interval") return IntervalTarget{s.get<double>("target_center"), s.get<double>("target_deviation")};
  throw InvalidArgument("target must be flip, class or interval");
}

CfSolverConfig cf_config_from(const Settings& s) {
  CfSolverConfig cfg;
  cfg.margin = s.get<double>("margin");
  cfg.max_iters = s.get<std::size_t>("cf_max_iters");
  cfg.distance_order = s.get<int>("distance_order");
  if (cfg.distance_order != 1 && cfg.distance_order != 2) throw InvalidArgument("distance_order must be 1 or 2");
  cfg.validate();
  return cfg;
}

Json cf_defaults() {
  return Json{{"margin", kDefaultMargin}, {"cf_max_iters", 500}, {"distance_order", 2}};
}

struct CfFlags {
  std::optional<double> margin;
  std::optional<std::size_t> cf_max_iters;
  std::optional<int> distance_order;
};

void add_cf_flags(CLI::App* app, CfFlags& f) {
  app->add_option("--margin", f.margin, "Overshoot past the decision boundary");
  app->add_option("--cf-max-iters", f.cf_max_iters, "Iteration budget per penalty level of the gradient solver");
  app->add_option("--distance-order", f.distance_order, "Counterfactual distance: 1 or 2");
}

void apply_cf_flags(Settings& s, const CfFlags& f) {
  s.set("margin", f.margin);
  s.set("cf_max_iters", f.cf_max_iters);
  s.set("distance_order", f.distance_order);
}

Json merged(Json a, const Json& b) {
  for (const auto& [k, v] : b.items()) a[k] = v;
  return a;
}

// ---------------------------------------------------------------------------
// gen-data

struct GenDataFlags {
  Common common;
  std::optional<std::string> scenario;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> samples_per_class, eval_samples, batch1_samples, batch2_samples, test_samples;
  std::optional<double> sigma2;
  bool dump_spec = false;
};

Settings gen_data_settings(const GenDataFlags& f) {
  Settings s("gen-data", Json{{"scenario", "blobs"},
                              {"seed", nullptr},
                              {"samples_per_class", BlobSpec{}.samples_per_class},
                              {"sigma2", BlobSpec{}.sigma2},
                              {"eval_samples", BlobSpec{}.eval_samples},
                              {"batch1_samples", CreditSpec{}.batch1_samples},
                              {"batch2_samples", CreditSpec{}.batch2_samples},
                              {"test_samples", CreditSpec{}.test_samples},
                              {"out", nullptr}});
  apply_common(s, f.common);
  s.set("scenario", f.scenario);
  s.set("seed", f.seed);
  s.set("samples_per_class", f.samples_per_class);
  s.set("sigma2", f.sigma2);
  s.set("eval_samples", f.eval_samples);
  s.set("batch1_samples", f.batch1_samples);
  s.set("batch2_samples", f.batch2_samples);
  s.set("test_samples", f.test_samples);
  return s;
}

int run_gen_data(const GenDataFlags& f) {
  Settings s = gen_data_settings(f);
  const auto scenario = s.get<std::string>("scenario");
  if (scenario == "blobs") {
    BlobSpec spec;
    if (!s.is_null("seed")) spec.seed = s.get<std::uint64_t>("seed");
    s.put("seed", spec.seed);
    spec.samples_per_class = s.get<std::size_t>("samples_per_class");
    spec.sigma2 = s.get<double>("sigma2");
    spec.eval_samples = s.get<std::size_t>("eval_samples");
    spec.validate();
    if (f.dump_spec) {
      std::cout << dump_json(to_json(spec));
      return kExitOk;
    }
    const auto out = require_out(s);
    const auto data = generate_gaussian_blobs(spec);
    log_stage("generated gaussian blobs (seed " + std::to_string(spec.seed) + ")");
    write_file_atomic(path_in(out, "batch1.csv"), to_csv(data.batch1));
    write_file_atomic(path_in(out, "batch2.csv"), to_csv(data.batch2));
    write_file_atomic(path_in(out, "eval.csv"), to_csv(data.eval));
    save_json(path_in(out, "spec.json"), to_json(spec));
    write_manifest(out, s);
  } else if (scenario == "credit") {
    CreditSpec spec;
    if (!s.is_null("seed")) spec.seed = s.get<std::uint64_t>("seed");
    s.put("seed", spec.seed);
    spec.batch1_samples = s.get<std::size_t>("batch1_samples");
    spec.batch2_samples = s.get<std::size_t>("batch2_samples");
    spec.test_samples = s.get<std::size_t>("test_samples");
    if (f.dump_spec) {
      std::cout << dump_json(to_json(spec));
      return kExitOk;
    }
    const auto out = require_out(s);
    const auto data = generate_credit(spec);
    log_stage("generated credit data (seed " + std::to_string(spec.seed) + ")");
    write_file_atomic(path_in(out, "batch1.csv"), to_csv(data.batch1));
    write_file_atomic(path_in(out, "batch2.csv"), to_csv(data.batch2));
    write_file_atomic(path_in(out, "test.csv"), to_csv(data.test));
    save_json(path_in(out, "spec.json"), to_json(spec));
    write_manifest(out, s);
  } else {
    throw InvalidArgument("scenario must be blobs or credit");
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// train

struct TrainFlags {
  Common common;
  std::optional<std::string> data, family, label;
  std::optional<double> l2;
  std::optional<std::size_t> max_depth, min_samples_leaf;
};

int run_train(const TrainFlags& f) {
  Settings s("train", Json{{"data", nullptr},
                           {"family", "gaussian_nb"},
                           {"label", "y"},
                           {"l2", FitOptions{}.l2},
                           {"max_depth", TreeConfig{}.max_depth},
                           {"min_samples_leaf", TreeConfig{}.min_samples_leaf},
                           {"out", nullptr}});
  apply_common(s, f.common);
  s.set("data", f.data);
  s.set("family", f.family);
  s.set("label", f.label);
  s.set("l2", f.l2);
  s.set("max_depth", f.max_depth);
  s.set("min_samples_leaf", f.min_samples_leaf);
  if (s.is_null("data")) throw CLI::RequiredError("--data");

  const Family family = family_from_string(s.get<std::string>("family"));
  const Task task = family == Family::linear_regression ? Task::regression : Task::classification;
  const Dataset data = load_csv(s.get<std::string>("data"), s.get<std::string>("label"), task);
  FitOptions opts;
  opts.l2 = s.get<double>("l2");
  opts.tree.max_depth = s.get<std::size_t>("max_depth");
  opts.tree.min_samples_leaf = s.get<std::size_t>("min_samples_leaf");
  const auto out = require_out(s);
  const Model m = fit(family, data, std::nullopt, opts);
  log_stage("trained " + to_string(family) + " on " + std::to_string(data.size()) + " rows");
  save_model(path_in(out, "model.json"), m);
  write_manifest(out, s);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// adapt

struct AdaptFlags {
  Common common;
  std::optional<std::string> model, data, label;
  std::optional<double> C, proximity_weight;
  std::optional<std::size_t> max_iters;
};

Json adapt_defaults() {
  const AdaptationConfig a;
  return Json{{"model", nullptr},
              {"data", nullptr},
              {"label", "y"},
              {"C", a.C},
              {"proximity_weight", a.proximity_weight},
              {"max_iters", a.max_iters},
              {"out", nullptr}};
}

void apply_adapt_flags(Settings& s, const AdaptFlags& f) {
  apply_common(s, f.common);
  s.set("model", f.model);
  s.set("data", f.data);
  s.set("label", f.label);
  s.set("C", f.C);
  s.set("proximity_weight", f.proximity_weight);
  s.set("max_iters", f.max_iters);
  if (s.is_null("model")) throw CLI::RequiredError("--model");
  if (s.is_null("data")) throw CLI::RequiredError("--data");
}

AdaptationConfig adapt_config_from(const Settings& s) {
  AdaptationConfig cfg;
  cfg.C = s.get<double>("C");
  cfg.proximity_weight = s.get<double>("proximity_weight");
  cfg.max_iters = s.get<std::size_t>("max_iters");
  cfg.validate();
  return cfg;
}

Json adapt_summary(const AdaptResult& r) {
  return Json{{"objective_before", r.objective_before},
              {"objective_after", r.objective_after},
              {"iterations", r.iterations},
              {"converged", r.converged}};
}

int run_adapt(const AdaptFlags& f) {
  Settings s("adapt", adapt_defaults());
  apply_adapt_flags(s, f);
  const Model h = load_model(s.get<std::string>("model"));
  const Dataset data = load_for_model(s, "data", h);
  const AdaptationConfig cfg = adapt_config_from(s);
  const auto out = require_out(s);
  const AdaptResult r = adapt(h, data, cfg);
  log_stage("adapted " + to_string(h.family) + " to " + std::to_string(data.size()) + " rows");
  if (!r.converged) log_stage("warning: optimizer reached max_iters before converging");
  save_model(path_in(out, "model.json"), r.model);
  save_json(path_in(out, "adapt_report.json"), adapt_summary(r));
  write_manifest(out, s);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// explain-diff and rank-interest

struct DiffFlags {
  Common common;
  CfFlags cf;
  std::optional<std::string> model_old, model_new, data, label, target, interest;
  std::optional<std::size_t> target_class, top_k;
  std::optional<double> target_center, target_deviation, regression_tolerance, epsilon;
};

Json diff_defaults() {
  return merged(Json{{"model_old", nullptr},
                     {"model_new", nullptr},
                     {"data", nullptr},
                     {"label", "y"},
                     {"target", "flip"},
                     {"target_class", 0},
                     {"target_center", 0.0},
                     {"target_deviation", 0.0},
                     {"regression_tolerance", nullptr},
                     {"top_k", 0},
                     {"interest", "gradient_cosine"},
                     {"epsilon", InterestConfig{}.epsilon},
                     {"out", nullptr}},
                cf_defaults());
}

void apply_diff_flags(Settings& s, const DiffFlags& f) {
  apply_common(s, f.common);
  apply_cf_flags(s, f.cf);
  s.set("model_old", f.model_old);
  s.set("model_new", f.model_new);
  s.set("data", f.data);
  s.set("label", f.label);
  s.set("target", f.target);
  s.set("target_class", f.target_class);
  s.set("target_center", f.target_center);
  s.set("target_deviation", f.target_deviation);
  s.set("regression_tolerance", f.regression_tolerance);
  s.set("top_k", f.top_k);
  s.set("interest", f.interest);
  s.set("epsilon", f.epsilon);
  if (s.is_null("model_old")) throw CLI::RequiredError("--model-old");
  if (s.is_null("model_new")) throw CLI::RequiredError("--model-new");
  if (s.is_null("data")) throw CLI::RequiredError("--data");
}

InterestConfig interest_config_from(const Settings& s) {
  InterestConfig ic;
  ic.method = interest_method_from_string(s.get<std::string>("interest"));
  ic.epsilon = s.get<double>("epsilon");
  ic.cf = cf_config_from(s);
  ic.validate();
  return ic;
}

void require_compatible(const Model& h, const Model& h_new) {
  if (h.n_features != h_new.n_features || h.is_classifier() != h_new.is_classifier() || h.n_classes != h_new.n_classes)
    throw InvalidArgument("incompatible models: feature count or task differs");
}

/// Rows both models predict correctly, in ascending order.
std::vector<std::size_t> correct_rows(const Model& h, const Model& h_new, const Dataset& data, double tol) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < data.size(); ++i)
    if (correctly_predicted(h, data.features[i], data.labels[i], tol) &&
        correctly_predicted(h_new, data.features[i], data.labels[i], tol))
      rows.push_back(i);
  return rows;
}

int run_explain_diff(const DiffFlags& f) {
  Settings s("explain-diff", diff_defaults());
  apply_diff_flags(s, f);
  const Model h = load_model(s.get<std::string>("model_old"));
  const Model h_new = load_model(s.get<std::string>("model_new"));
  require_compatible(h, h_new);
  const Dataset data = load_for_model(s, "data", h);
  DiffOptions opts;
  opts.cf = cf_config_from(s);
  if (!s.is_null("regression_tolerance")) opts.regression_tolerance = s.get<double>("regression_tolerance");
  const TargetSpec target = target_from(s);
  const auto top_k = s.get<std::size_t>("top_k");
  const InterestConfig ic = interest_config_from(s);
  const auto out = require_out(s);

  std::vector<RankedSample> ranking;
  if (top_k > 0) {
    if (!h.is_classifier()) throw InvalidArgument("interest ranking needs classifiers");
    const auto rows = correct_rows(h, h_new, data, opts.regression_tolerance);
    if (!rows.empty()) {
      const std::size_t k = std::min(top_k, rows.size());
      if (k < top_k) log_stage("only " + std::to_string(k) + " rows are predicted correctly by both models");
      ranking = rank_samples(data, h, h_new, k, ic, rows);
      for (const auto& r : ranking) opts.subset.push_back(r.index);
    }
    log_stage("ranked " + std::to_string(rows.size()) + " rows by " + to_string(ic.method));
  }

  DiffReport report;
  if (top_k > 0 && opts.subset.empty()) {
    report.feature_names = data.feature_names;
    for (std::size_t i = 0; i < data.size(); ++i) report.skipped.push_back({i, "not predicted correctly by both models"});
    aggregate(report, data.n_features());
  } else {
    report = explain_model_differences(h, h_new, data, target, opts);
  }
  log_stage("compared " + std::to_string(report.per_sample.size()) + " samples, skipped " +
            std::to_string(report.skipped.size()));
  Json j = to_json(report);
  if (top_k > 0) j["ranking"] = to_json(ranking);
  save_json(path_in(out, "diff_report.json"), j);
  write_file_atomic(path_in(out, "diff_plotdata.csv"), plotdata_csv(report));
  if (top_k > 0) write_file_atomic(path_in(out, "ranking.csv"), ranking_csv(ranking));
  write_manifest(out, s);
  if (report.per_sample.empty()) {
    log_stage("every sample was skipped");
    return kExitEmpty;
  }
  return kExitOk;
}

struct RankFlags {
  Common common;
  CfFlags cf;
  std::optional<std::string> model_old, model_new, data, label, interest;
  std::optional<std::size_t> k;
  std::optional<double> epsilon;
  std::optional<bool> only_correct;
};

int run_rank_interest(const RankFlags& f) {
  Settings s("rank-interest", merged(Json{{"model_old", nullptr},
                                          {"model_new", nullptr},
                                          {"data", nullptr},
                                          {"label", "y"},
                                          {"k", 10},
                                          {"interest", "gradient_cosine"},
                                          {"epsilon", InterestConfig{}.epsilon},
                                          {"only_correct", false},
                                          {"out", nullptr}},
                                     cf_defaults()));
  apply_common(s, f.common);
  apply_cf_flags(s, f.cf);
  s.set("model_old", f.model_old);
  s.set("model_new", f.model_new);
  s.set("data", f.data);
  s.set("label", f.label);
  s.set("k", f.k);
  s.set("interest", f.interest);
  s.set("epsilon", f.epsilon);
  s.set("only_correct", f.only_correct);
  if (s.is_null("model_old")) throw CLI::RequiredError("--model-old");
  if (s.is_null("model_new")) throw CLI::RequiredError("--model-new");
  if (s.is_null("data")) throw CLI::RequiredError("--data");

  const Model h = load_model(s.get<std::string>("model_old"));
  const Model h_new = load_model(s.get<std::string>("model_new"));
  require_compatible(h, h_new);
  if (!h.is_classifier()) throw InvalidArgument("interest ranking needs classifiers");
  const Dataset data = load_for_model(s, "data", h);
  const InterestConfig ic = interest_config_from(s);
  const auto out = require_out(s);
  std::vector<std::size_t> rows;
  if (s.get<bool>("only_correct")) {
    rows = correct_rows(h, h_new, data, 0.0);
    if (rows.empty()) {
      save_json(path_in(out, "ranking.json"), Json::array());
      write_file_atomic(path_in(out, "ranking.csv"), ranking_csv({}));
      write_manifest(out, s);
      log_stage("no row is predicted correctly by both models");
      return kExitEmpty;
    }
  }
  const auto ranking = rank_samples(data, h, h_new, s.get<std::size_t>("k"), ic, rows);
  log_stage("ranked by " + to_string(ic.method));
  save_json(path_in(out, "ranking.json"), to_json(ranking));
  write_file_atomic(path_in(out, "ranking.csv"), ranking_csv(ranking));
  write_manifest(out, s);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// adapt-persistent

struct PersistFlags {
  AdaptFlags adapt;
  std::optional<std::string> constraints, build, build_data, feature, ball_p;
  std::optional<double> c_prime, step, ball_lambda;
  std::optional<std::size_t> steps, ball_samples, max_rows;
  std::optional<int> select_class;
  std::optional<std::uint64_t> seed;
};

std::vector<PersistenceConstraint> build_constraints(const Settings& s, const Model& h, const Dataset& fallback,
                                                     const ConstrainedAdaptConfig& cfg) {
  const auto how = s.get<std::string>("build");
  if (how == "none") return {};
  const Dataset src = s.is_null("build_data") ? fallback : load_for_model(s, "build_data", h);
  const int select = s.get<int>("select_class");
  const auto max_rows = s.get<std::size_t>("max_rows");
  std::vector<PersistenceConstraint> out;
  std::size_t used = 0;
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (max_rows > 0 && used >= max_rows) break;
    const auto& x = src.features[i];
    const Label y = predict(h, x);
    if (select >= 0 && y != static_cast<double>(select)) continue;
    ++used;
    const auto origin = static_cast<std::int64_t>(i);
    if (how == "robustness") {
      const std::size_t feature = src.feature_index(s.get<std::string>("feature"));
      const auto shifts = feature_steps(src.n_features(), feature, s.get<double>("step"), s.get<std::size_t>("steps"));
      const auto cs = build_robustness_constraints(x, y, shifts, origin);
      out.insert(out.end(), cs.begin(), cs.end());
    } else if (how == "ball") {
      const auto cs = build_ball_constraints(x, y, cfg, origin);
      out.insert(out.end(), cs.begin(), cs.end());
    } else if (how == "persistent_cf") {
      out.push_back(build_persistent_cf_constraint(x, h, origin));
    } else if (how == "persistent_pp") {
      const Vector zeros(src.n_features(), 0.0);
      out.push_back(build_persistent_pp_constraint(x, h, zeros, 1e-9, origin));
    } else {
      throw InvalidArgument("build must be none, robustness, ball, persistent_cf or persistent_pp");
    }
  }
  return out;
}

int run_adapt_persistent(const PersistFlags& f) {
  const ConstrainedAdaptConfig d;
  Settings s("adapt-persistent", merged(adapt_defaults(), Json{{"constraints", nullptr},
                                                               {"C_prime", d.C_prime},
                                                               {"build", "none"},
                                                               {"build_data", nullptr},
                                                               {"select_class", -1},
                                                               {"max_rows", 0},
                                                               {"feature", ""},
                                                               {"step", 0.5},
                                                               {"steps", 10},
                                                               {"ball_lambda", d.ball_lambda},
                                                               {"ball_p", to_string(d.ball_p)},
                                                               {"ball_samples", d.ball_samples},
                                                               {"seed", d.seed}}));
  apply_adapt_flags(s, f.adapt);
  s.set("constraints", f.constraints);
  s.set("C_prime", f.c_prime);
  s.set("build", f.build);
  s.set("build_data", f.build_data);
  s.set("select_class", f.select_class);
  s.set("max_rows", f.max_rows);
  s.set("feature", f.feature);
  s.set("step", f.step);
  s.set("steps", f.steps);
  s.set("ball_lambda", f.ball_lambda);
  s.set("ball_p", f.ball_p);
  s.set("ball_samples", f.ball_samples);
  s.set("seed", f.seed);

  const Model h = load_model(s.get<std::string>("model"));
  const Dataset data = load_for_model(s, "data", h);
  ConstrainedAdaptConfig cfg;
  cfg.base = adapt_config_from(s);
  cfg.C = cfg.base.C;
  cfg.C_prime = s.get<double>("C_prime");
  cfg.ball_lambda = s.get<double>("ball_lambda");
  cfg.ball_p = ball_norm_from_string(s.get<std::string>("ball_p"));
  cfg.ball_samples = s.get<std::size_t>("ball_samples");
  cfg.seed = s.get<std::uint64_t>("seed");
  cfg.validate();

  std::vector<PersistenceConstraint> constraints;
  if (!s.is_null("constraints")) constraints = constraints_from_json(load_json(s.get<std::string>("constraints")));
  const auto built = build_constraints(s, h, data, cfg);
  constraints.insert(constraints.end(), built.begin(), built.end());
  const auto out = require_out(s);
  log_stage("adapting with " + std::to_string(constraints.size()) + " persistence constraints");
  const auto r = adapt_with_constraints(h, data, constraints, cfg);
  for (const auto& w : r.report.warnings) log_stage("warning: " + w);
  save_model(path_in(out, "model.json"), r.adaptation.model);
  Json rep = to_json(r.report);
  rep["adaptation"] = adapt_summary(r.adaptation);
  save_json(path_in(out, "satisfaction_report.json"), rep);
  save_json(path_in(out, "constraints.json"), constraints_to_json(constraints));
  write_manifest(out, s);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// verify-theory

struct TheoryFlags {
  Common common;
  std::optional<std::size_t> trials;
  std::optional<std::vector<std::size_t>> dims;
  std::optional<std::uint64_t> seed;
  std::optional<double> tolerance;
};

int run_verify_theory(const TheoryFlags& f) {
  Settings s("verify-theory", Json{{"trials", 1000},
                                   {"dims", Json::array({2, 5, 20})},
                                   {"seed", 0},
                                   {"tolerance", 1e-9},
                                   {"out", nullptr}});
  apply_common(s, f.common);
  s.set("trials", f.trials);
  s.set("dims", f.dims);
  s.set("seed", f.seed);
  s.set("tolerance", f.tolerance);
  const auto out = require_out(s);
  const auto seed = s.get<std::uint64_t>("seed");
  const double tol = s.get<double>("tolerance");
  Json reports = Json::array();
  bool ok = true;
  for (std::size_t d : s.get<std::vector<std::size_t>>("dims")) {
    const auto r = theory::verify_theorems(s.get<std::size_t>("trials"), d, seed + d);
    const bool pass = r.max_abs_error < tol && r.violations == 0;
    ok = ok && pass;
    Json j = to_json(r);
    j["pass"] = pass;
    reports.push_back(std::move(j));
    log_stage("d=" + std::to_string(d) + ": " + (pass ? "pass" : "FAIL"));
  }
  save_json(path_in(out, "theory_report.json"), Json{{"tolerance", tol}, {"pass", ok}, {"runs", reports}});
  write_manifest(out, s);
  return ok ? kExitOk : kExitError;
}

// ---------------------------------------------------------------------------
// cf

struct CfCmdFlags {
  Common common;
  CfFlags cf;
  std::optional<std::string> model, data, label, kind, target;
  std::optional<std::size_t> row, target_class;
  std::optional<std::vector<double>> x, defaults;
  std::optional<double> target_center, target_deviation;
};

int run_cf(const CfCmdFlags& f) {
  Settings s("cf", merged(Json{{"model", nullptr},
                               {"data", nullptr},
                               {"label", "y"},
                               {"row", nullptr},
                               {"x", nullptr},
                               {"kind", "counterfactual"},
                               {"target", "flip"},
                               {"target_class", 0},
                               {"target_center", 0.0},
                               {"target_deviation", 0.0},
                               {"defaults", nullptr},
                               {"out", nullptr}},
                          cf_defaults()));
  apply_common(s, f.common);
  apply_cf_flags(s, f.cf);
  s.set("model", f.model);
  s.set("data", f.data);
  s.set("label", f.label);
  s.set("row", f.row);
  s.set("x", f.x);
  s.set("kind", f.kind);
  s.set("target", f.target);
  s.set("target_class", f.target_class);
  s.set("target_center", f.target_center);
  s.set("target_deviation", f.target_deviation);
  s.set("defaults", f.defaults);
  if (s.is_null("model")) throw CLI::RequiredError("--model");

  const Model m = load_model(s.get<std::string>("model"));
  Vector x;
  Json record{{"family", to_string(m.family)}};
  if (!s.is_null("x")) {
    x = s.get<Vector>("x");
  } else {
    if (s.is_null("data") || s.is_null("row")) throw InvalidArgument("give either --x or both --data and --row");
    const Dataset data = load_for_model(s, "data", m);
    const auto row = s.get<std::size_t>("row");
    if (row >= data.size()) throw InvalidArgument("row " + std::to_string(row) + " is out of range");
    x = data.features[row];
    record["row"] = row;
  }
  check_dim(m, x);
  record["prediction"] = predict(m, x);

  const auto kind = s.get<std::string>("kind");
  if (kind == "counterfactual") {
    const TargetSpec spec = target_from(s);
    Target target;
    if (std::holds_alternative<FlipTarget>(spec)) target = ClassTarget{detail::binary_flip(m, x)};
    else target = resolve_target(spec, 0.0);
    record["counterfactual"] = to_json(counterfactual(m, x, target, cf_config_from(s)));
  } else if (kind == "pertinent_positive") {
    const Vector defaults = s.is_null("defaults") ? Vector(x.size(), 0.0) : s.get<Vector>("defaults");
    record["pertinent_positive"] = to_json(pertinent_positive(m, x, defaults));
  } else {
    throw InvalidArgument("kind must be counterfactual or pertinent_positive");
  }
  std::cout << dump_json(record);
  const bool has_out = !s.is_null("out") || (std::getenv("CFDIFF_OUTPUT_DIR") && *std::getenv("CFDIFF_OUTPUT_DIR"));
  if (has_out) {
    const auto out = require_out(s);
    save_json(path_in(out, "cf.json"), record);
    write_manifest(out, s);
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Explain model adaptations with counterfactual explanations"};
  app.require_subcommand(1);

  GenDataFlags gen;
  auto* c_gen = app.add_subcommand("gen-data", "Generate the synthetic blobs or credit datasets");
  add_common(c_gen, gen.common);
  c_gen->add_option("--scenario", gen.scenario, "blobs or credit");
  c_gen->add_option("--seed", gen.seed, "Generator seed");
  c_gen->add_option("--samples-per-class", gen.samples_per_class, "Blobs: samples per class and batch");
  c_gen->add_option("--sigma2", gen.sigma2, "Blobs: isotropic variance");
  c_gen->add_option("--eval-samples", gen.eval_samples, "Blobs: eval set size");
  c_gen->add_option("--batch1-samples", gen.batch1_samples, "Credit: batch 1 size");
  c_gen->add_option("--batch2-samples", gen.batch2_samples, "Credit: batch 2 size");
  c_gen->add_option("--test-samples", gen.test_samples, "Credit: test set size");
  c_gen->add_flag("--dump-spec", gen.dump_spec, "Print the resolved generator spec as JSON and exit");

  TrainFlags train;
  auto* c_train = app.add_subcommand("train", "Fit a model to a CSV dataset");
  add_common(c_train, train.common);
  c_train->add_option("--data", train.data, "Training CSV");
  c_train->add_option("--family", train.family,
                      "linear_classifier, logistic_regression, linear_regression, gaussian_nb or decision_tree");
  c_train->add_option("--label", train.label, "Label column (default y)");
  c_train->add_option("--l2", train.l2, "Ridge penalty of the logistic fit");
  c_train->add_option("--max-depth", train.max_depth, "Tree depth limit");
  c_train->add_option("--min-samples-leaf", train.min_samples_leaf, "Minimum rows per tree leaf");

  AdaptFlags adapt_f;
  auto add_adapt_options = [](CLI::App* c, AdaptFlags& a) {
    add_common(c, a.common);
    c->add_option("--model", a.model, "Model JSON to adapt");
    c->add_option("--data", a.data, "New data CSV");
    c->add_option("--label", a.label, "Label column (default y)");
    c->add_option("--C", a.C, "Weight of the new-data loss");
    c->add_option("--proximity-weight", a.proximity_weight, "Weight of the closeness-to-old-model term");
    c->add_option("--max-iters", a.max_iters, "Optimizer iteration limit");
  };
  auto* c_adapt = app.add_subcommand("adapt", "Adapt a model to new data");
  add_adapt_options(c_adapt, adapt_f);

  DiffFlags diff;
  auto* c_diff = app.add_subcommand("explain-diff", "Compare counterfactual explanations of two models");
  add_common(c_diff, diff.common);
  add_cf_flags(c_diff, diff.cf);
  c_diff->add_option("--model-old", diff.model_old, "Model before adaptation");
  c_diff->add_option("--model-new", diff.model_new, "Model after adaptation");
  c_diff->add_option("--data", diff.data, "Labeled CSV of samples to explain");
  c_diff->add_option("--label", diff.label, "Label column (default y)");
  c_diff->add_option("--target", diff.target, "flip, class or interval");
  c_diff->add_option("--target-class", diff.target_class, "Class for --target class");
  c_diff->add_option("--target-center", diff.target_center, "Center for --target interval");
  c_diff->add_option("--target-deviation", diff.target_deviation, "Allowed deviation for --target interval");
  c_diff->add_option("--regression-tolerance", diff.regression_tolerance,
                     "Regression rows count as correct within this absolute error");
  c_diff->add_option("--top-k", diff.top_k, "Only explain the k most interesting samples (0 = all)");
  c_diff->add_option("--interest", diff.interest, "exact_euclid, exact_cosine or gradient_cosine");
  c_diff->add_option("--epsilon", diff.epsilon, "Relaxation of the interest cosine");

  RankFlags rank;
  auto* c_rank = app.add_subcommand("rank-interest", "Rank samples by how much two models' explanations disagree");
  add_common(c_rank, rank.common);
  add_cf_flags(c_rank, rank.cf);
  c_rank->add_option("--model-old", rank.model_old, "Model before adaptation");
  c_rank->add_option("--model-new", rank.model_new, "Model after adaptation");
  c_rank->add_option("--data", rank.data, "CSV of candidate samples");
  c_rank->add_option("--label", rank.label, "Label column (default y)");
  c_rank->add_option("-k,--k", rank.k, "Number of samples to return");
  c_rank->add_option("--interest", rank.interest, "exact_euclid, exact_cosine or gradient_cosine");
  c_rank->add_option("--epsilon", rank.epsilon, "Relaxation of the interest cosine");
  c_rank->add_option("--only-correct", rank.only_correct, "Rank only rows both models predict correctly");

  PersistFlags persist;
  auto* c_persist = app.add_subcommand("adapt-persistent", "Adapt a model under persistence constraints");
  add_adapt_options(c_persist, persist.adapt);
  c_persist->add_option("--constraints", persist.constraints, "Constraints JSON: list of {x, y, kind, origin}");
  c_persist->add_option("--c-prime", persist.c_prime, "Weight of the constraint loss");
  c_persist->add_option("--build", persist.build, "none, robustness, ball, persistent_cf or persistent_pp");
  c_persist->add_option("--build-data", persist.build_data, "CSV the constraints are built from (default --data)");
  c_persist->add_option("--select-class", persist.select_class,
                        "Build only from rows the base model assigns to this class (-1 = all)");
  c_persist->add_option("--max-rows", persist.max_rows, "Build from at most this many rows (0 = all)");
  c_persist->add_option("--feature", persist.feature, "Robustness: feature to shift");
  c_persist->add_option("--step", persist.step, "Robustness: shift per step");
  c_persist->add_option("--steps", persist.steps, "Robustness: number of shifts");
  c_persist->add_option("--ball-lambda", persist.ball_lambda, "Ball: radius");
  c_persist->add_option("--ball-p", persist.ball_p, "Ball: norm, 1, 2 or inf");
  c_persist->add_option("--ball-samples", persist.ball_samples, "Ball: samples per row");
  c_persist->add_option("--seed", persist.seed, "Ball: sampling seed");

  TheoryFlags theory_f;
  auto* c_theory = app.add_subcommand("verify-theory", "Randomized check of the linear-model results");
  add_common(c_theory, theory_f.common);
  c_theory->add_option("--trials", theory_f.trials, "Trials per dimension");
  c_theory->add_option("--dims", theory_f.dims, "Dimensions to test");
  c_theory->add_option("--seed", theory_f.seed, "Base seed");
  c_theory->add_option("--tolerance", theory_f.tolerance, "Allowed cosine error");

  CfCmdFlags cf;
  auto* c_cf = app.add_subcommand("cf", "Counterfactual or pertinent positive of one sample");
  add_common(c_cf, cf.common);
  add_cf_flags(c_cf, cf.cf);
  c_cf->add_option("--model", cf.model, "Model JSON");
  c_cf->add_option("--data", cf.data, "CSV holding the sample");
  c_cf->add_option("--label", cf.label, "Label column (default y)");
  c_cf->add_option("--row", cf.row, "Row index in --data");
  c_cf->add_option("--x", cf.x, "The sample itself, comma separated")->delimiter(',');
  c_cf->add_option("--kind", cf.kind, "counterfactual or pertinent_positive");
  c_cf->add_option("--target", cf.target, "flip, class or interval");
  c_cf->add_option("--target-class", cf.target_class, "Class for --target class");
  c_cf->add_option("--target-center", cf.target_center, "Center for --target interval");
  c_cf->add_option("--target-deviation", cf.target_deviation, "Allowed deviation for --target interval");
  c_cf->add_option("--defaults", cf.defaults, "Pertinent positive default values, comma separated")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitError;
  }

  try {
    if (c_gen->parsed()) return run_gen_data(gen);
    if (c_train->parsed()) return run_train(train);
    if (c_adapt->parsed()) return run_adapt(adapt_f);
    if (c_diff->parsed()) return run_explain_diff(diff);
    if (c_rank->parsed()) return run_rank_interest(rank);
    if (c_persist->parsed()) return run_adapt_persistent(persist);
    if (c_theory->parsed()) return run_verify_theory(theory_f);
    if (c_cf->parsed()) return run_cf(cf);
  } catch (const CLI::RequiredError& e) {
    std::cerr << "error: " << e.what() << "\n\n";
    for (auto* sub : app.get_subcommands()) std::cerr << sub->help();
    return kExitError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
