#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "cfdiff/counterfactual.hpp"
#include "cfdiff/dataset.hpp"
#include "cfdiff/diff.hpp"
#include "cfdiff/error.hpp"
#include "cfdiff/interest.hpp"
#include "cfdiff/model.hpp"
#include "cfdiff/persistence.hpp"
#include "cfdiff/theory.hpp"

// JSON and CSV serialization. Doubles are written in shortest round-trip form,
// so a model survives save/load bit for bit.

namespace cfdiff {

using Json = nlohmann::ordered_json;

inline constexpr int kModelFormatVersion = 1;

namespace detail {

template <class T>
T get_field(const Json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw InvalidArgument(std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw InvalidArgument(std::string("field '") + key + "' has the wrong type");
  }
}

inline Json linear_to_json(const LinearParams& p) { return Json{{"w", p.w}, {"b", p.b}}; }

inline LinearParams linear_from_json(const Json& j) {
  return {get_field<Vector>(j, "w"), get_field<double>(j, "b")};
}

inline Json gnb_to_json(const GaussianNbParams& p) {
  Json classes = Json::array();
  for (const auto& c : p.classes) classes.push_back(Json{{"mass", c.mass}, {"mean", c.mean}, {"var", c.var}});
  return Json{{"var_smoothing", p.var_smoothing}, {"classes", classes}};
}

inline GaussianNbParams gnb_from_json(const Json& j) {
  GaussianNbParams p;
  p.var_smoothing = get_field<double>(j, "var_smoothing");
  for (const auto& c : get_field<Json>(j, "classes"))
    p.classes.push_back({get_field<double>(c, "mass"), get_field<Vector>(c, "mean"), get_field<Vector>(c, "var")});
  return p;
}

inline Json tree_to_json(const TreeParams& p) {
  Json nodes = Json::array();
  for (const auto& n : p.nodes)
    nodes.push_back(Json{{"feature", n.feature}, {"threshold", n.threshold}, {"left", n.left}, {"right", n.right},
                         {"label", n.label}});
  return Json{{"max_depth", p.config.max_depth},
              {"min_samples_leaf", p.config.min_samples_leaf},
              {"nodes", nodes},
              {"train_x", p.train_x},
              {"train_y", p.train_y},
              {"train_w", p.train_w}};
}

inline TreeParams tree_from_json(const Json& j) {
  TreeParams p;
  p.config.max_depth = get_field<std::size_t>(j, "max_depth");
  p.config.min_samples_leaf = get_field<std::size_t>(j, "min_samples_leaf");
  for (const auto& n : get_field<Json>(j, "nodes"))
    p.nodes.push_back({get_field<int>(n, "feature"), get_field<double>(n, "threshold"), get_field<int>(n, "left"),
                       get_field<int>(n, "right"), get_field<int>(n, "label")});
  p.train_x = get_field<std::vector<Vector>>(j, "train_x");
  p.train_y = get_field<std::vector<Label>>(j, "train_y");
  p.train_w = get_field<Vector>(j, "train_w");
  return p;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Models

inline Json model_to_json(const Model& m) {
  Json j{{"format", "cfdiff-model"},
         {"version", kModelFormatVersion},
         {"family", to_string(m.family)},
         {"n_features", m.n_features},
         {"n_classes", m.n_classes}};
  if (const auto* p = std::get_if<LinearParams>(&m.params)) j["params"] = detail::linear_to_json(*p);
  else if (const auto* g = std::get_if<GaussianNbParams>(&m.params)) j["params"] = detail::gnb_to_json(*g);
  else j["params"] = detail::tree_to_json(m.tree());
  return j;
}

inline Model model_from_json(const Json& j) {
  if (detail::get_field<std::string>(j, "format") != "cfdiff-model") throw InvalidArgument("not a cfdiff model file");
  const int version = detail::get_field<int>(j, "version");
  if (version != kModelFormatVersion)
    throw InvalidArgument("unsupported model format version " + std::to_string(version));
  const Family family = family_from_string(detail::get_field<std::string>(j, "family"));
  const auto n_features = detail::get_field<std::size_t>(j, "n_features");
  const auto n_classes = detail::get_field<std::size_t>(j, "n_classes");
  const Json& params = detail::get_field<Json>(j, "params");
  Model m;
  switch (family) {
    case Family::linear_classifier:
    case Family::logistic_regression:
    case Family::linear_regression: {
      LinearParams p = detail::linear_from_json(params);
      m.family = family;
      m.n_features = p.w.size();
      m.n_classes = family == Family::linear_regression ? 0 : 2;
      m.params = std::move(p);
      break;
    }
    case Family::gaussian_nb: m = make_gaussian_nb(detail::gnb_from_json(params)); break;
    case Family::decision_tree: {
      TreeParams tp = detail::tree_from_json(params);
      m = make_tree(tp.nodes, n_features, n_classes);
      std::get<TreeParams>(m.params) = std::move(tp);
      break;
    }
  }
  if (m.n_features != n_features || m.n_classes != n_classes)
    throw InvalidArgument("model header does not match its parameters");
  return m;
}

// ---------------------------------------------------------------------------
// Files

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes to a sibling temporary file and renames it over `path`.
inline void write_file_atomic(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  const fs::path tmp = target.parent_path() / (target.filename().string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + tmp.string() + "'");
    out << content;
    out.flush();
    if (!out) throw IoError("write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot rename onto '" + path + "'");
  }
}

inline std::string dump_json(const Json& j) { return j.dump(2) + "\n"; }

inline Json parse_json(const std::string& text, const std::string& what) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw InvalidArgument("invalid JSON in " + what + ": " + e.what());
  }
}

inline Json load_json(const std::string& path) { return parse_json(read_file(path), "'" + path + "'"); }

inline void save_json(const std::string& path, const Json& j) { write_file_atomic(path, dump_json(j)); }

inline Model load_model(const std::string& path) { return model_from_json(load_json(path)); }

inline void save_model(const std::string& path, const Model& m) { save_json(path, model_to_json(m)); }

// ---------------------------------------------------------------------------
// Specs and results

inline Json to_json(const BlobSpec& s) {
  Json means = Json::array();
  for (const auto& batch : s.class_means) {
    Json b = Json::array();
    for (const auto& m : batch) b.push_back(Json::array({m[0], m[1]}));
    means.push_back(b);
  }
  return Json{{"class_means", means},
              {"sigma2", s.sigma2},
              {"samples_per_class", s.samples_per_class},
              {"seed", s.seed},
              {"eval_samples", s.eval_samples},
              {"eval_lo", Json::array({s.eval_lo[0], s.eval_lo[1]})},
              {"eval_hi", Json::array({s.eval_hi[0], s.eval_hi[1]})}};
}

inline Json to_json(const CreditSpec& s) {
  return Json{{"batch1_samples", s.batch1_samples}, {"batch2_samples", s.batch2_samples},
              {"test_samples", s.test_samples},     {"amount_max", s.amount_max},
              {"batch1_cutoff", s.batch1_cutoff},   {"batch2_cutoff", s.batch2_cutoff},
              {"batch2_reaccept", s.batch2_reaccept}, {"seed", s.seed}};
}

inline Json to_json(const Target& t) {
  if (const auto* c = std::get_if<ClassTarget>(&t)) return Json{{"class", c->cls}};
  const auto& iv = std::get<IntervalTarget>(t);
  return Json{{"center", iv.center}, {"deviation", iv.deviation}};
}

inline Json to_json(const CounterfactualResult& r) {
  return Json{{"x", r.x_orig},   {"x_cf", r.x_cf},   {"delta", r.delta},
              {"target", to_json(r.target)}, {"valid", r.valid}, {"solver", to_string(r.solver)},
              {"iterations", r.iterations}};
}

inline Json to_json(const PertinentPositiveResult& r) {
  return Json{{"x_pp", r.x_pp},
              {"on_features", r.on_features},
              {"defaults", r.defaults},
              {"epsilon", r.epsilon},
              {"valid", r.valid}};
}

inline Json to_json(const DiffReport& r) {
  Json samples = Json::array();
  for (const auto& d : r.per_sample) {
    Json s{{"index", d.index},         {"x", d.x},
           {"delta_old", d.delta_old}, {"delta_new", d.delta_new},
           {"psi", d.psi},             {"psi_euclid", d.psi_euclid}};
    s["psi_cosine"] = d.psi_cosine ? Json(*d.psi_cosine) : Json(nullptr);
    s["both_valid"] = d.both_valid;
    samples.push_back(std::move(s));
  }
  Json skipped = Json::array();
  for (const auto& s : r.skipped) skipped.push_back(Json{{"index", s.index}, {"reason", s.reason}});
  return Json{{"feature_names", r.feature_names},
              {"n_compared", r.per_sample.size()},
              {"n_skipped", r.skipped.size()},
              {"mean_psi", r.mean_psi},
              {"mean_abs_delta_change", r.mean_abs_delta_change},
              {"per_sample", samples},
              {"skipped", skipped}};
}

inline Json to_json(const std::vector<RankedSample>& ranking) {
  Json out = Json::array();
  for (const auto& r : ranking) out.push_back(Json{{"index", r.index}, {"score", r.score}});
  return out;
}

inline Json to_json(const PersistenceConstraint& c) {
  return Json{{"x", c.x}, {"y", c.y}, {"kind", to_string(c.kind)}, {"origin", c.origin}};
}

inline Json constraints_to_json(const std::vector<PersistenceConstraint>& cs) {
  Json out = Json::array();
  for (const auto& c : cs) out.push_back(to_json(c));
  return out;
}

inline std::vector<PersistenceConstraint> constraints_from_json(const Json& j) {
  if (!j.is_array()) throw InvalidArgument("constraints file must hold a JSON array");
  std::vector<PersistenceConstraint> out;
  for (const auto& c : j) {
    PersistenceConstraint pc;
    pc.x = detail::get_field<Vector>(c, "x");
    pc.y = detail::get_field<double>(c, "y");
    pc.kind = c.contains("kind") ? constraint_kind_from_string(detail::get_field<std::string>(c, "kind"))
                                 : ConstraintKind::robustness_shift;
    pc.origin = c.contains("origin") ? detail::get_field<std::int64_t>(c, "origin") : -1;
    out.push_back(std::move(pc));
  }
  return out;
}

inline Json to_json(const SatisfactionReport& r) {
  Json outcomes = Json::array();
  for (const auto& o : r.outcomes)
    outcomes.push_back(Json{{"origin", o.origin}, {"kind", to_string(o.kind)}, {"satisfied", o.satisfied}});
  return Json{{"fraction_satisfied", r.fraction_satisfied}, {"warnings", r.warnings}, {"constraints", outcomes}};
}

inline Json to_json(const theory::TheoremReport& r) {
  return Json{{"trials", r.trials},
              {"dims", r.dims},
              {"seed", r.seed},
              {"cosine_max_abs_error", r.max_abs_error},
              {"bound_violations", r.violations},
              {"bound_worst_margin", r.worst_margin}};
}

// ---------------------------------------------------------------------------
// CSV

/// feature,mean_psi,mean_abs_change
inline std::string plotdata_csv(const DiffReport& r) {
  std::string out = "feature,mean_psi,mean_abs_change\n";
  for (std::size_t j = 0; j < r.mean_psi.size(); ++j) {
    const std::string name = j < r.feature_names.size() ? r.feature_names[j] : "f" + std::to_string(j);
    out += name + "," + format_double(r.mean_psi[j]) + "," + format_double(r.mean_abs_delta_change[j]) + "\n";
  }
  return out;
}

/// index,score
inline std::string ranking_csv(const std::vector<RankedSample>& ranking) {
  std::string out = "index,score\n";
  for (const auto& r : ranking) out += std::to_string(r.index) + "," + format_double(r.score) + "\n";
  return out;
}

}  // namespace cfdiff
