#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "treegraph/error.hpp"

namespace tg {

// C x C confusion matrix, rows = ground truth, columns = prediction.
struct ConfusionMatrix {
  int classes = 0;
  std::vector<std::int64_t> cells;

  explicit ConfusionMatrix(int c = 0) : classes(c), cells(static_cast<std::size_t>(c) * c, 0) {}

  std::int64_t& at(int truth, int pred) {
    return cells[static_cast<std::size_t>(truth) * classes + pred];
  }
  std::int64_t at(int truth, int pred) const {
    return cells[static_cast<std::size_t>(truth) * classes + pred];
  }
  void add(int truth, int pred) {
    if (truth < 0 || truth >= classes || pred < 0 || pred >= classes)
      throw ContractError("confusion matrix: label out of range");
    ++at(truth, pred);
  }
  std::int64_t total() const {
    std::int64_t t = 0;
    for (auto v : cells) t += v;
    return t;
  }
  std::int64_t row_sum(int i) const {
    std::int64_t t = 0;
    for (int j = 0; j < classes; ++j) t += at(i, j);
    return t;
  }
  std::int64_t col_sum(int j) const {
    std::int64_t t = 0;
    for (int i = 0; i < classes; ++i) t += at(i, j);
    return t;
  }
};

// Evaluation summary: accuracy family in percent, kappa in [-1,1].
struct MetricsReport {
  ConfusionMatrix confusion;
  double oa = 0.0;
  double ba = 0.0;
  double kappa = 0.0;
  std::vector<double> per_class_precision;
  std::vector<std::string> warnings;
  double epoch_time_s = 0.0;
  std::size_t parameter_count = 0;
};

// OA, BA, per-class precision and Cohen's kappa from a confusion matrix.
// Classes absent from both truth and prediction contribute zero recall and
// precision, with a warning rather than NaN.
inline MetricsReport metrics_from_confusion(const ConfusionMatrix& cm) {
  MetricsReport r;
  r.confusion = cm;
  const int c = cm.classes;
  const std::int64_t total = cm.total();
  if (c == 0 || total == 0) throw ContractError("metrics: empty confusion matrix");

  std::int64_t diag = 0;
  for (int i = 0; i < c; ++i) diag += cm.at(i, i);
  r.oa = 100.0 * static_cast<double>(diag) / static_cast<double>(total);

  double recall_sum = 0.0;
  r.per_class_precision.resize(static_cast<std::size_t>(c), 0.0);
  for (int i = 0; i < c; ++i) {
    const std::int64_t rs = cm.row_sum(i);
    const std::int64_t cs = cm.col_sum(i);
    if (rs == 0 && cs == 0)
      r.warnings.push_back("class " + std::to_string(i) +
                           " absent from truth and prediction; counted as 0");
    if (rs > 0) recall_sum += static_cast<double>(cm.at(i, i)) / static_cast<double>(rs);
    else if (cs == 0) recall_sum += 0.0;
    if (cs > 0)
      r.per_class_precision[static_cast<std::size_t>(i)] =
          100.0 * static_cast<double>(cm.at(i, i)) / static_cast<double>(cs);
  }
  r.ba = 100.0 * recall_sum / static_cast<double>(c);

  const double n = static_cast<double>(total);
  const double po = static_cast<double>(diag) / n;
  double pe = 0.0;
  for (int i = 0; i < c; ++i)
    pe += static_cast<double>(cm.row_sum(i)) * static_cast<double>(cm.col_sum(i)) / (n * n);
  if (1.0 - pe < 1e-15)
    r.kappa = po >= 1.0 - 1e-15 ? 1.0 : 0.0;  // degenerate marginals
  else
    r.kappa = (po - pe) / (1.0 - pe);
  return r;
}

inline void save_confusion_csv(const ConfusionMatrix& cm,
                               const std::vector<std::string>& class_names,
                               const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write confusion csv: " + path);
  os << "truth\\pred";
  for (int j = 0; j < cm.classes; ++j)
    os << ',' << (j < static_cast<int>(class_names.size()) ? class_names[j] : std::to_string(j));
  os << '\n';
  for (int i = 0; i < cm.classes; ++i) {
    os << (i < static_cast<int>(class_names.size()) ? class_names[i] : std::to_string(i));
    for (int j = 0; j < cm.classes; ++j) os << ',' << cm.at(i, j);
    os << '\n';
  }
}

// Row-wise softmax for (B,C) logits; not part of the autodiff graph.
inline std::vector<double> softmax_rows(const std::vector<float>& logits, int b, int c) {
  std::vector<double> out(logits.size());
  for (int i = 0; i < b; ++i) {
    const float* row = logits.data() + static_cast<std::size_t>(i) * c;
    double m = row[0];
    for (int j = 1; j < c; ++j) m = std::max(m, static_cast<double>(row[j]));
    double z = 0.0;
    for (int j = 0; j < c; ++j) z += std::exp(static_cast<double>(row[j]) - m);
    for (int j = 0; j < c; ++j)
      out[static_cast<std::size_t>(i) * c + j] = std::exp(static_cast<double>(row[j]) - m) / z;
  }
  return out;
}

inline int argmax_row(const float* row, int c) {
  int best = 0;
  for (int j = 1; j < c; ++j)
    if (row[j] > row[best]) best = j;
  return best;
}

}  // namespace tg
