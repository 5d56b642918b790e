// Copyright 2026 The ABCNet-CPP Authors
// SPDX-License-Identifier: Apache-2.0

#include "abcnet/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "abcnet/csv.hpp"

namespace abcnet::metrics {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void require_nonempty(const ConfusionMatrix& cm, const char* what) {
  if (cm.total() == 0) throw UndefinedMetricError(std::string(what) + " of an empty confusion matrix");
}

std::string class_label(const std::vector<std::string>& names, std::int64_t c) {
  if (c < static_cast<std::int64_t>(names.size())) return names[static_cast<std::size_t>(c)];
  return "class" + std::to_string(c);
}

}  // namespace

ConfusionMatrix::ConfusionMatrix(std::int64_t classes) : k_(classes) {
  if (classes < 1 || classes >= kIgnoreLabel) {
    throw ContractError("class count must be in [1, 255), got " + std::to_string(classes));
  }
  counts_.assign(static_cast<std::size_t>(classes * classes), 0);
}

ConfusionMatrix ConfusionMatrix::from_counts(std::int64_t classes, std::vector<std::int64_t> counts) {
  ConfusionMatrix cm(classes);
  if (static_cast<std::int64_t>(counts.size()) != classes * classes) {
    throw DimensionError("expected " + std::to_string(classes * classes) + " counts");
  }
  for (std::int64_t c : counts)
    if (c < 0) throw ContractError("confusion counts must be nonnegative");
  cm.counts_ = std::move(counts);
  return cm;
}

void ConfusionMatrix::accumulate(std::span<const std::uint8_t> predicted,
                                 std::span<const std::uint8_t> reference) {
  if (predicted.size() != reference.size()) {
    throw ShapeError("masks differ in size: " + std::to_string(predicted.size()) + " vs " +
                     std::to_string(reference.size()));
  }
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const std::uint8_t p = predicted[i], r = reference[i];
    if (p == kIgnoreLabel || r == kIgnoreLabel) continue;
    if (p >= k_ || r >= k_) {
      throw LabelError("label " + std::to_string(std::max(p, r)) + " outside [0, " +
                       std::to_string(k_) + ")");
    }
    ++counts_[static_cast<std::size_t>(r * k_ + p)];
  }
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  if (other.k_ != k_) throw DimensionError("cannot merge matrices of different class counts");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  return *this;
}

std::int64_t ConfusionMatrix::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::int64_t{0});
}

std::int64_t ConfusionMatrix::trace() const {
  std::int64_t t = 0;
  for (std::int64_t c = 0; c < k_; ++c) t += at(c, c);
  return t;
}

std::int64_t ConfusionMatrix::row_sum(std::int64_t ref) const {
  std::int64_t s = 0;
  for (std::int64_t c = 0; c < k_; ++c) s += at(ref, c);
  return s;
}

std::int64_t ConfusionMatrix::col_sum(std::int64_t pred) const {
  std::int64_t s = 0;
  for (std::int64_t r = 0; r < k_; ++r) s += at(r, pred);
  return s;
}

double overall_accuracy(const ConfusionMatrix& cm) {
  require_nonempty(cm, "overall accuracy");
  return static_cast<double>(cm.trace()) / static_cast<double>(cm.total());
}

std::vector<double> iou_per_class(const ConfusionMatrix& cm) {
  require_nonempty(cm, "IoU");
  std::vector<double> out;
  for (std::int64_t c = 0; c < cm.classes(); ++c) {
    const std::int64_t tp = cm.at(c, c);
    const std::int64_t denom = cm.row_sum(c) + cm.col_sum(c) - tp;
    out.push_back(denom == 0 ? kNaN : static_cast<double>(tp) / static_cast<double>(denom));
  }
  return out;
}

double miou(const ConfusionMatrix& cm) {
  const std::vector<double> iou = iou_per_class(cm);
  double s = 0.0;
  int n = 0;
  for (double v : iou) {
    if (std::isnan(v)) continue;
    s += v;
    ++n;
  }
  if (n == 0) throw UndefinedMetricError("mIoU: every class is empty");
  return s / n;
}

F1Scores f1_scores(const ConfusionMatrix& cm) {
  require_nonempty(cm, "F1");
  F1Scores out;
  double s = 0.0;
  int n = 0;
  for (std::int64_t c = 0; c < cm.classes(); ++c) {
    if (!cm.present(c)) {
      out.per_class.push_back(kNaN);
      continue;
    }
    const double tp = static_cast<double>(cm.at(c, c));
    const double rows = static_cast<double>(cm.row_sum(c));
    const double cols = static_cast<double>(cm.col_sum(c));
    const double precision = cols > 0 ? tp / cols : 0.0;
    const double recall = rows > 0 ? tp / rows : 0.0;
    const double f1 = precision + recall > 0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    out.per_class.push_back(f1);
    s += f1;
    ++n;
  }
  out.mean = s / n;
  return out;
}

KappaResult kappa(const ConfusionMatrix& cm) {
  require_nonempty(cm, "kappa");
  const std::int64_t k = cm.classes();
  const double n = static_cast<double>(cm.total());
  std::vector<double> row(static_cast<std::size_t>(k)), col(static_cast<std::size_t>(k));
  for (std::int64_t c = 0; c < k; ++c) {
    row[static_cast<std::size_t>(c)] = static_cast<double>(cm.row_sum(c)) / n;
    col[static_cast<std::size_t>(c)] = static_cast<double>(cm.col_sum(c)) / n;
  }
  double t1 = 0.0, t2 = 0.0, t3 = 0.0, t4 = 0.0;
  for (std::int64_t i = 0; i < k; ++i) {
    const auto ii = static_cast<std::size_t>(i);
    const double pii = static_cast<double>(cm.at(i, i)) / n;
    t1 += pii;
    t2 += row[ii] * col[ii];
    t3 += pii * (row[ii] + col[ii]);
    for (std::int64_t j = 0; j < k; ++j) {
      const auto jj = static_cast<std::size_t>(j);
      const double pij = static_cast<double>(cm.at(i, j)) / n;
      const double m = row[jj] + col[ii];
      t4 += pij * m * m;
    }
  }
  if (1.0 - t2 <= 0.0) throw UndefinedMetricError("kappa: chance agreement is 1");
  KappaResult r;
  const double q = 1.0 - t2;
  r.kappa = (t1 - t2) / q;
  const double v = t1 * (1.0 - t1) / (q * q) +
                   2.0 * (1.0 - t1) * (2.0 * t1 * t2 - t3) / (q * q * q) +
                   (1.0 - t1) * (1.0 - t1) * (t4 - 4.0 * t2 * t2) / (q * q * q * q);
  // roundoff can push a zero variance slightly negative
  r.variance = std::max(0.0, v / n);
  return r;
}

ZTest kappa_z_test(const KappaResult& a, const KappaResult& b) {
  if (a.variance < 0.0 || b.variance < 0.0) throw ContractError("kappa variances must be >= 0");
  const double denom = std::sqrt(a.variance + b.variance);
  ZTest t;
  if (denom == 0.0) {
    if (a.kappa == b.kappa) return t;
    throw DegenerateError("kappa z-test: zero variance with unequal kappas");
  }
  t.z = (a.kappa - b.kappa) / denom;
  t.significant = std::abs(t.z) > kSignificanceThreshold;
  return t;
}

ZMatrix pairwise_z_matrix(const std::vector<NamedKappa>& results) {
  if (results.size() < 2) throw ContractError("pairwise z matrix needs at least two entries");
  ZMatrix m;
  const std::size_t n = results.size();
  m.z.assign(n, std::vector<double>(n, kNaN));
  for (std::size_t i = 0; i < n; ++i) {
    m.names.push_back(results[i].name);
    for (std::size_t j = i + 1; j < n; ++j) {
      m.z[i][j] = kappa_z_test(results[j].result, results[i].result).z;
    }
  }
  return m;
}

std::string ZMatrix::to_csv() const {
  std::vector<std::string> header{""};
  header.insert(header.end(), names.begin(), names.end());
  std::string out = csv::row(header);
  for (std::size_t i = 0; i < names.size(); ++i) {
    std::vector<std::string> r{names[i]};
    for (std::size_t j = 0; j < names.size(); ++j) r.push_back(csv::number(z[i][j]));
    out += csv::row(r);
  }
  return out;
}

std::string ZMatrix::to_text() const {
  std::string out;
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%-16s", "");
  out += buf;
  for (const auto& n : names) {
    std::snprintf(buf, sizeof(buf), " %12.12s", n.c_str());
    out += buf;
  }
  out += '\n';
  for (std::size_t i = 0; i < names.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%-16.16s", names[i].c_str());
    out += buf;
    for (std::size_t j = 0; j < names.size(); ++j) {
      if (std::isnan(z[i][j])) {
        std::snprintf(buf, sizeof(buf), " %12s", "-");
      } else {
        std::snprintf(buf, sizeof(buf), " %12.3f", z[i][j]);
      }
      out += buf;
    }
    out += '\n';
  }
  return out;
}

std::string report_csv(const ConfusionMatrix& cm, const std::vector<std::string>& class_names) {
  std::string out = csv::row({"class", "iou", "precision", "recall", "f1"});
  const auto iou = iou_per_class(cm);
  const auto f1 = f1_scores(cm);
  for (std::int64_t c = 0; c < cm.classes(); ++c) {
    const double tp = static_cast<double>(cm.at(c, c));
    const double rows = static_cast<double>(cm.row_sum(c)), cols = static_cast<double>(cm.col_sum(c));
    out += csv::row({class_label(class_names, c), csv::number(iou[static_cast<std::size_t>(c)]),
                     csv::number(cols > 0 ? tp / cols : kNaN),
                     csv::number(rows > 0 ? tp / rows : kNaN),
                     csv::number(f1.per_class[static_cast<std::size_t>(c)])});
  }
  KappaResult k{std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
  try {
    k = kappa(cm);
  } catch (const UndefinedMetricError&) {
  }
  out += csv::row({"summary", "miou", "oa", "mean_f1", "kappa", "kappa_variance"});
  out += csv::row({"", csv::number(miou(cm)), csv::number(overall_accuracy(cm)), csv::number(f1.mean),
                   csv::number(k.kappa), csv::number(k.variance)});
  return out;
}

std::string report_text(const ConfusionMatrix& cm, const std::vector<std::string>& class_names) {
  const auto iou = iou_per_class(cm);
  const auto f1 = f1_scores(cm);
  std::string out;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-20s %8s %8s\n", "class", "F1", "IoU");
  out += buf;
  for (std::int64_t c = 0; c < cm.classes(); ++c) {
    std::snprintf(buf, sizeof(buf), "%-20.20s %8.4f %8.4f\n", class_label(class_names, c).c_str(),
                  f1.per_class[static_cast<std::size_t>(c)], iou[static_cast<std::size_t>(c)]);
    out += buf;
  }
  KappaResult k{};
  bool has_kappa = true;
  try {
    k = kappa(cm);
  } catch (const UndefinedMetricError&) {
    has_kappa = false;
  }
  std::snprintf(buf, sizeof(buf), "Mean F1 %.4f  OA %.4f  mIoU %.4f", f1.mean, overall_accuracy(cm),
                miou(cm));
  out += buf;
  if (has_kappa) {
    std::snprintf(buf, sizeof(buf), "  kappa %.4f (var %.3g)", k.kappa, k.variance);
    out += buf;
  }
  out += '\n';
  return out;
}

}  // namespace abcnet::metrics
