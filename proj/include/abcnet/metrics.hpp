// Copyright 2026 The ABCNet-CPP Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "abcnet/tensor.hpp"

namespace abcnet::metrics {

inline constexpr std::uint8_t kIgnoreLabel = 255;

/// Rows are reference classes, columns predicted classes.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::int64_t classes);
  static ConfusionMatrix from_counts(std::int64_t classes, std::vector<std::int64_t> counts);

  /// Adds one count per pixel; pixels whose reference or prediction is
  /// kIgnoreLabel are skipped.
  void accumulate(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> reference);
  ConfusionMatrix& operator+=(const ConfusionMatrix& other);

  std::int64_t classes() const { return k_; }
  std::int64_t at(std::int64_t ref, std::int64_t pred) const {
    return counts_[static_cast<std::size_t>(ref * k_ + pred)];
  }
  const std::vector<std::int64_t>& counts() const { return counts_; }
  std::int64_t total() const;
  std::int64_t trace() const;
  std::int64_t row_sum(std::int64_t ref) const;
  std::int64_t col_sum(std::int64_t pred) const;
  /// Class occurs in the reference or the prediction.
  bool present(std::int64_t c) const { return row_sum(c) + col_sum(c) > 0; }

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::int64_t k_;
  std::vector<std::int64_t> counts_;
};

/// trace / total.
double overall_accuracy(const ConfusionMatrix& cm);
/// TP / (TP + FP + FN) per class; NaN for classes absent from both axes.
std::vector<double> iou_per_class(const ConfusionMatrix& cm);
/// Mean IoU over present classes.
double miou(const ConfusionMatrix& cm);

struct F1Scores {
  /// NaN for absent classes; 0 when precision + recall is 0.
  std::vector<double> per_class;
  double mean = 0.0;
};
F1Scores f1_scores(const ConfusionMatrix& cm);

struct KappaResult {
  double kappa = 0.0;
  double variance = 0.0;
};

/// Cohen's kappa with the large-sample variance of Fleiss, Cohen and Everitt:
///   v = [t1(1-t1)/(1-t2)^2 + 2(1-t1)(2 t1 t2 - t3)/(1-t2)^3
///        + (1-t1)^2 (t4 - 4 t2^2)/(1-t2)^4] / n
/// with t1 = p_o, t2 = p_e, t3 = sum_i p_ii (p_i+ + p_+i),
/// t4 = sum_ij p_ij (p_j+ + p_+i)^2.
KappaResult kappa(const ConfusionMatrix& cm);

struct ZTest {
  double z = 0.0;
  bool significant = false;
};

inline constexpr double kSignificanceThreshold = 1.96;

/// z = (k1 - k2) / sqrt(v1 + v2); significant when |z| > 1.96.
ZTest kappa_z_test(const KappaResult& a, const KappaResult& b);

struct NamedKappa {
  std::string name;
  KappaResult result;
};

struct ZMatrix {
  std::vector<std::string> names;
  /// Upper triangle: cell (i, j) for j > i holds z(results[j], results[i]).
  std::vector<std::vector<double>> z;

  std::string to_csv() const;
  std::string to_text() const;
};

ZMatrix pairwise_z_matrix(const std::vector<NamedKappa>& results);

/// Class rows (IoU, precision, recall, F1) followed by a summary row.
std::string report_csv(const ConfusionMatrix& cm, const std::vector<std::string>& class_names = {});
std::string report_text(const ConfusionMatrix& cm, const std::vector<std::string>& class_names = {});

}  // namespace abcnet::metrics
