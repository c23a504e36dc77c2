#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cfdiff/error.hpp"
#include "cfdiff/linalg.hpp"
#include "cfdiff/random.hpp"

namespace cfdiff {

enum class Task { classification, regression };

inline std::string to_string(Task t) {
  return t == Task::classification ? "classification" : "regression";
}

inline Task task_from_string(std::string_view s) {
  if (s == "classification") return Task::classification;
  if (s == "regression") return Task::regression;
  throw InvalidArgument("unknown task '" + std::string(s) + "'");
}

/// Class index (stored as an integral double) or a real regression target.
using Label = double;

/// Labeled samples, one row per sample.
struct Dataset {
  std::vector<Vector> features;
  std::vector<Label> labels;
  std::vector<std::string> feature_names;
  Task task = Task::classification;

  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }
  std::size_t n_features() const { return feature_names.size(); }

  /// Highest class index + 1; zero for an empty or regression dataset.
  std::size_t n_classes() const {
    if (task != Task::classification) return 0;
    double hi = -1.0;
    for (Label y : labels) hi = std::max(hi, y);
    return static_cast<std::size_t>(hi + 1.0);
  }

  std::size_t feature_index(std::string_view name) const {
    auto it = std::find(feature_names.begin(), feature_names.end(), name);
    if (it == feature_names.end()) throw InvalidArgument("unknown feature '" + std::string(name) + "'");
    return static_cast<std::size_t>(it - feature_names.begin());
  }

  void push_back(Vector x, Label y) {
    features.push_back(std::move(x));
    labels.push_back(y);
  }

  /// Empty dataset with the same schema.
  Dataset like() const { return Dataset{{}, {}, feature_names, task}; }

  /// Throws if any invariant is violated.
  void validate() const {
    if (features.size() != labels.size()) throw InvalidArgument("feature rows and labels differ in count");
    for (const auto& row : features) {
      if (row.size() != feature_names.size()) throw InvalidArgument("row width does not match feature names");
      if (!all_finite(row)) throw InvalidArgument("non-finite feature value");
    }
    for (Label y : labels) {
      if (!std::isfinite(y)) throw InvalidArgument("non-finite label");
      if (task == Task::classification && (y < 0.0 || y != std::floor(y)))
        throw InvalidArgument("classification labels must be non-negative integers");
    }
  }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      return out;
    }
    out.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
}

inline bool parse_double(std::string_view s, double& out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

}  // namespace detail

/// Shortest decimal that round-trips to the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

/// Parses comma-separated numeric data with a header row. The label column is
/// removed from the feature matrix; the remaining column order is preserved.
inline Dataset parse_csv(std::istream& in, std::string_view label_column, Task task) {
  std::string line;
  if (!std::getline(in, line) || detail::trim(line).empty()) throw IoError("empty CSV file");
  std::vector<std::string> header;
  for (auto cell : detail::split_commas(line)) header.emplace_back(cell);
  std::ptrdiff_t label_idx = -1;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == label_column) {
      if (label_idx >= 0) throw IoError("duplicate label column '" + std::string(label_column) + "'");
      label_idx = static_cast<std::ptrdiff_t>(i);
    }
  }
  if (label_idx < 0) throw IoError("label column not found: '" + std::string(label_column) + "'");

  Dataset data;
  data.task = task;
  for (std::size_t i = 0; i < header.size(); ++i)
    if (static_cast<std::ptrdiff_t>(i) != label_idx) data.feature_names.push_back(header[i]);

  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    ++row;
    const auto cells = detail::split_commas(line);
    if (cells.size() != header.size())
      throw IoError("row " + std::to_string(row) + ": expected " + std::to_string(header.size()) +
                    " cells, found " + std::to_string(cells.size()));
    Vector x;
    x.reserve(header.size() - 1);
    Label y = 0.0;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      double v = 0.0;
      if (!detail::parse_double(cells[c], v) || !std::isfinite(v))
        throw IoError("parse error at row " + std::to_string(row) + ", column " + header[c] +
                      ": '" + std::string(cells[c]) + "'");
      if (static_cast<std::ptrdiff_t>(c) == label_idx)
        y = v;
      else
        x.push_back(v);
    }
    data.push_back(std::move(x), y);
  }
  data.validate();
  return data;
}

inline Dataset load_csv(const std::string& path, std::string_view label_column, Task task) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  return parse_csv(in, label_column, task);
}

inline void write_csv(std::ostream& out, const Dataset& data, std::string_view label_column = "y") {
  for (const auto& name : data.feature_names) out << name << ',';
  out << label_column << '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (double v : data.features[i]) out << format_double(v) << ',';
    out << format_double(data.labels[i]) << '\n';
  }
}

inline std::string to_csv(const Dataset& data, std::string_view label_column = "y") {
  std::ostringstream os;
  write_csv(os, data, label_column);
  return os.str();
}

/// Rows with `feature <= threshold` go to the first part, the rest to the second.
inline std::pair<Dataset, Dataset> split_by_threshold(const Dataset& data, std::string_view feature,
                                                      double threshold) {
  const std::size_t f = data.feature_index(feature);
  std::pair<Dataset, Dataset> parts{data.like(), data.like()};
  for (std::size_t i = 0; i < data.size(); ++i) {
    auto& dst = data.features[i][f] <= threshold ? parts.first : parts.second;
    dst.push_back(data.features[i], data.labels[i]);
  }
  return parts;
}

inline Dataset concat(const Dataset& a, const Dataset& b) {
  if (a.feature_names != b.feature_names || a.task != b.task)
    throw InvalidArgument("concat: incompatible datasets");
  Dataset out = a;
  for (std::size_t i = 0; i < b.size(); ++i) out.push_back(b.features[i], b.labels[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic generators

using Point2 = std::array<double, 2>;

/// Two-class, two-feature, two-batch Gaussian blobs with isotropic covariance.
struct BlobSpec {
  /// class_means[batch][class]
  std::array<std::array<Point2, 2>, 2> class_means{{{{{-2.0, 0.0}, {2.0, 0.0}}},
                                                    {{{-0.5, -2.5}, {0.5, 2.5}}}}};
  double sigma2 = 1.0;
  std::size_t samples_per_class = 100;
  std::uint64_t seed = 42;
  std::size_t eval_samples = 200;
  /// Eval points are uniform over [eval_lo, eval_hi].
  Point2 eval_lo{-1.0, -3.0};
  Point2 eval_hi{1.0, 3.0};

  void validate() const {
    if (!(sigma2 > 0.0)) throw InvalidArgument("BlobSpec: sigma2 must be positive");
    if (samples_per_class == 0) throw InvalidArgument("BlobSpec: samples_per_class must be positive");
    for (int d = 0; d < 2; ++d)
      if (!(eval_lo[d] <= eval_hi[d])) throw InvalidArgument("BlobSpec: empty eval box");
  }

  /// Class label in batch 2 whose mean is closest to p (ties go to class 0).
  int current_concept_label(const Point2& p) const {
    auto sq = [&](const Point2& m) {
      return (p[0] - m[0]) * (p[0] - m[0]) + (p[1] - m[1]) * (p[1] - m[1]);
    };
    return sq(class_means[1][1]) < sq(class_means[1][0]) ? 1 : 0;
  }
};

struct BlobData {
  Dataset batch1;
  Dataset batch2;
  Dataset eval;
};

/// Draws batch 1, batch 2 and the eval set, in that order, from one stream.
/// Eval labels follow the batch-2 concept (nearest batch-2 class mean).
inline BlobData generate_gaussian_blobs(const BlobSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const double sd = std::sqrt(spec.sigma2);
  const std::vector<std::string> names{"x1", "x2"};
  BlobData out{{{}, {}, names, Task::classification},
               {{}, {}, names, Task::classification},
               {{}, {}, names, Task::classification}};
  for (int batch = 0; batch < 2; ++batch) {
    Dataset& dst = batch == 0 ? out.batch1 : out.batch2;
    for (int cls = 0; cls < 2; ++cls) {
      const Point2& m = spec.class_means[batch][cls];
      for (std::size_t i = 0; i < spec.samples_per_class; ++i) {
        const double a = rng.normal(m[0], sd);
        const double b = rng.normal(m[1], sd);
        dst.push_back({a, b}, cls);
      }
    }
  }
  for (std::size_t i = 0; i < spec.eval_samples; ++i) {
    const Point2 p{rng.uniform(spec.eval_lo[0], spec.eval_hi[0]), rng.uniform(spec.eval_lo[1], spec.eval_hi[1])};
    out.eval.push_back({p[0], p[1]}, spec.current_concept_label(p));
  }
  return out;
}

/// Loan-approval style data: a credit amount plus four uninformative features.
/// Label 1 = accept, 0 = reject. Batch 1 rejects every amount at or above
/// `batch1_cutoff`; batch 2 additionally accepts amounts above `batch2_reaccept`,
/// so that raising the amount can turn a rejection into an acceptance.
struct CreditSpec {
  std::size_t batch1_samples = 200;
  std::size_t batch2_samples = 400;
  std::size_t test_samples = 300;
  double amount_max = 10.0;
  double batch1_cutoff = 5.0;
  double batch2_cutoff = 4.0;
  double batch2_reaccept = 7.0;
  std::uint64_t seed = 7;
};

struct CreditData {
  Dataset batch1;
  Dataset batch2;
  /// Half drawn from each batch's concept.
  Dataset test;
};

inline CreditData generate_credit(const CreditSpec& spec) {
  Rng rng(spec.seed);
  const std::vector<std::string> names{"amount", "noise1", "noise2", "noise3", "noise4"};
  auto draw = [&](Dataset& dst, std::size_t n, bool second_concept) {
    for (std::size_t i = 0; i < n; ++i) {
      Vector x(5);
      x[0] = rng.uniform(0.0, spec.amount_max);
      for (std::size_t j = 1; j < 5; ++j) x[j] = rng.normal();
      const bool accept = second_concept ? (x[0] < spec.batch2_cutoff || x[0] > spec.batch2_reaccept)
                                         : (x[0] < spec.batch1_cutoff);
      dst.push_back(std::move(x), accept ? 1.0 : 0.0);
    }
  };
  CreditData out{{{}, {}, names, Task::classification},
                 {{}, {}, names, Task::classification},
                 {{}, {}, names, Task::classification}};
  draw(out.batch1, spec.batch1_samples, false);
  draw(out.batch2, spec.batch2_samples, true);
  draw(out.test, spec.test_samples / 2, false);
  draw(out.test, spec.test_samples - spec.test_samples / 2, true);
  return out;
}

}  // namespace cfdiff
