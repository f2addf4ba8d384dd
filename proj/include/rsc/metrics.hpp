#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "rsc/binary_io.hpp"
#include "rsc/error.hpp"

namespace rsc {

/// counts[t][p] = number of samples of true class t predicted as p.
struct ConfusionMatrix {
  std::vector<std::vector<std::uint64_t>> counts;
  std::vector<std::string> class_names;

  explicit ConfusionMatrix(std::size_t classes = 0, std::vector<std::string> names = {})
      : counts(classes, std::vector<std::uint64_t>(classes, 0)), class_names(std::move(names)) {
    if (class_names.empty())
      for (std::size_t c = 0; c < classes; ++c) class_names.push_back("class" + std::to_string(c));
  }

  std::size_t classes() const noexcept { return counts.size(); }

  std::uint64_t total() const {
    std::uint64_t n = 0;
    for (const auto& row : counts)
      for (auto v : row) n += v;
    return n;
  }

  std::uint64_t row_total(std::size_t t) const {
    std::uint64_t n = 0;
    for (auto v : counts[t]) n += v;
    return n;
  }

  std::uint64_t col_total(std::size_t p) const {
    std::uint64_t n = 0;
    for (const auto& row : counts) n += row[p];
    return n;
  }

  std::uint64_t trace() const {
    std::uint64_t n = 0;
    for (std::size_t c = 0; c < classes(); ++c) n += counts[c][c];
    return n;
  }

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

inline ConfusionMatrix confusion(const std::vector<std::size_t>& predictions, const std::vector<std::size_t>& truths,
                                 std::size_t classes, std::vector<std::string> names = {}) {
  if (predictions.size() != truths.size()) throw ShapeError("predictions and truths differ in length");
  ConfusionMatrix cm(classes, std::move(names));
  for (std::size_t i = 0; i < truths.size(); ++i) {
    if (truths[i] >= classes || predictions[i] >= classes)
      throw RangeError("label " + std::to_string(std::max(truths[i], predictions[i])) + " out of range for " +
                       std::to_string(classes) + " classes");
    ++cm.counts[truths[i]][predictions[i]];
  }
  return cm;
}

/// trace / total.
inline double accuracy(const ConfusionMatrix& cm) {
  const auto n = cm.total();
  if (n == 0) throw DomainError("accuracy of an empty confusion matrix is undefined");
  return static_cast<double>(cm.trace()) / static_cast<double>(n);
}

/// Per ground-truth class:
///   recall          = counts[c][c] / row_c
///   within_class_fp = 1 - recall (share of class c classified as anything
///                     else; the reading under which per-class shares and
///                     error rates recombine into overall accuracy)
///   conventional_fpr = false alarms for c / true negatives of c
struct ClassRates {
  double recall = 0;
  double within_class_fp = 0;
  double conventional_fpr = 0;
  double share = 0;  // row_c / total
};

inline std::vector<ClassRates> per_class_rates(const ConfusionMatrix& cm) {
  const auto total = cm.total();
  std::vector<ClassRates> out;
  for (std::size_t c = 0; c < cm.classes(); ++c) {
    const auto row = cm.row_total(c);
    if (row == 0) throw DomainError("class '" + cm.class_names[c] + "' has no true samples; rates undefined");
    ClassRates r;
    r.recall = static_cast<double>(cm.counts[c][c]) / static_cast<double>(row);
    r.within_class_fp = 1.0 - r.recall;
    const auto negatives = total - row;
    const auto false_alarms = cm.col_total(c) - cm.counts[c][c];
    r.conventional_fpr = negatives ? static_cast<double>(false_alarms) / static_cast<double>(negatives) : 0.0;
    r.share = static_cast<double>(row) / static_cast<double>(total);
    out.push_back(r);
  }
  return out;
}

/// Overall accuracy recombined from class shares and within-class error
/// rates: 1 - sum_c share_c * fp_c.
inline double accuracy_from_shares(const std::vector<double>& shares, const std::vector<double>& within_class_fp) {
  if (shares.size() != within_class_fp.size()) throw ShapeError("shares and rates differ in length");
  double err = 0.0;
  for (std::size_t c = 0; c < shares.size(); ++c) err += shares[c] * within_class_fp[c];
  return 1.0 - err;
}

/// Collapses classes: groups[g] lists the original classes merged into new
/// class g. Groups must partition the class set.
inline ConfusionMatrix merge_classes(const ConfusionMatrix& cm, const std::vector<std::vector<std::size_t>>& groups) {
  std::vector<int> group_of(cm.classes(), -1);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (groups[g].empty()) throw DomainError("merge group " + std::to_string(g) + " is empty");
    for (auto c : groups[g]) {
      if (c >= cm.classes()) throw DomainError("merge group refers to unknown class " + std::to_string(c));
      if (group_of[c] != -1) throw DomainError("class " + std::to_string(c) + " appears in two merge groups");
      group_of[c] = static_cast<int>(g);
    }
  }
  for (std::size_t c = 0; c < cm.classes(); ++c)
    if (group_of[c] == -1) throw DomainError("class " + std::to_string(c) + " is not in any merge group");
  std::vector<std::string> names;
  for (const auto& grp : groups) {
    std::string n;
    for (std::size_t i = 0; i < grp.size(); ++i) n += (i ? "+" : "") + cm.class_names[grp[i]];
    names.push_back(n);
  }
  ConfusionMatrix out(groups.size(), std::move(names));
  for (std::size_t t = 0; t < cm.classes(); ++t)
    for (std::size_t p = 0; p < cm.classes(); ++p)
      out.counts[static_cast<std::size_t>(group_of[t])][static_cast<std::size_t>(group_of[p])] += cm.counts[t][p];
  return out;
}

struct BoxStats {
  double median = 0;
  double q25 = 0;
  double q75 = 0;
  std::size_t n = 0;
};

/// Quantile at probability p: linear interpolation at rank (n - 1) * p of
/// the sorted values.
inline double quantile_sorted(const std::vector<double>& sorted, double p) {
  const double rank = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(rank));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = rank - static_cast<double>(lo);
  return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

inline BoxStats box_stats(std::vector<double> values) {
  if (values.empty()) throw DomainError("box statistics of an empty list are undefined");
  std::sort(values.begin(), values.end());
  return {quantile_sorted(values, 0.5), quantile_sorted(values, 0.25), quantile_sorted(values, 0.75), values.size()};
}

inline std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

/// `class,true_count,recall,within_class_fp,conventional_fpr` per class plus
/// `overall,<total>,<accuracy>,,`. Classes without true samples get empty
/// rate fields.
inline std::string metrics_csv(const ConfusionMatrix& cm) {
  std::string out = "class,true_count,recall,within_class_fp,conventional_fpr\n";
  const auto total = cm.total();
  for (std::size_t c = 0; c < cm.classes(); ++c) {
    const auto row = cm.row_total(c);
    out += cm.class_names[c] + "," + std::to_string(row) + ",";
    if (row == 0) {
      out += ",,\n";
      continue;
    }
    const double recall = static_cast<double>(cm.counts[c][c]) / static_cast<double>(row);
    const auto negatives = total - row;
    const auto false_alarms = cm.col_total(c) - cm.counts[c][c];
    const double fpr = negatives ? static_cast<double>(false_alarms) / static_cast<double>(negatives) : 0.0;
    out += fixed6(recall) + "," + fixed6(1.0 - recall) + "," + fixed6(fpr) + "\n";
  }
  out += "overall," + std::to_string(total) + "," + (total ? fixed6(accuracy(cm)) : std::string()) + ",,\n";
  return out;
}

/// Square count table with a `true\predicted` header row.
inline std::string confusion_csv(const ConfusionMatrix& cm) {
  std::string out = "true\\predicted";
  for (const auto& n : cm.class_names) out += "," + n;
  out += "\n";
  for (std::size_t t = 0; t < cm.classes(); ++t) {
    out += cm.class_names[t];
    for (auto v : cm.counts[t]) out += "," + std::to_string(v);
    out += "\n";
  }
  return out;
}

}  // namespace rsc
