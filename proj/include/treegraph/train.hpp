#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "treegraph/augment.hpp"
#include "treegraph/dataset.hpp"
#include "treegraph/metrics.hpp"
#include "treegraph/model.hpp"

namespace tg {

// ---------------------------------------------------------------------------
// weighted cross entropy

// Mean over the batch of w[y_i] * (-log softmax(logits_i)[y_i]), stabilized
// by max subtraction. Plain mean (divide by B), so scaling a class weight
// scales that class's contribution proportionally.
template <typename Real>
BasicTensor<Real> weighted_cross_entropy(const BasicTensor<Real>& logits,
                                         const std::vector<int>& labels,
                                         const std::vector<Real>& weights) {
  if (logits.rank() != 2)
    throw ShapeError("weighted_cross_entropy: logits must be (B,C), got " +
                     shape_str(logits.shape()));
  const int B = logits.dim(0), C = logits.dim(1);
  if (static_cast<int>(labels.size()) != B)
    throw ShapeError("weighted_cross_entropy: label count mismatch");
  if (static_cast<int>(weights.size()) != C)
    throw ShapeError("weighted_cross_entropy: weight count mismatch");
  for (int y : labels)
    if (y < 0 || y >= C)
      throw ContractError("weighted_cross_entropy: label " + std::to_string(y) +
                          " out of range [0," + std::to_string(C) + ")");

  auto probs = std::make_shared<std::vector<Real>>(logits.size());
  const Real* x = logits.data();
  double loss = 0.0;
  for (int i = 0; i < B; ++i) {
    const Real* row = x + static_cast<std::size_t>(i) * C;
    double m = row[0];
    for (int j = 1; j < C; ++j) m = std::max(m, static_cast<double>(row[j]));
    double z = 0.0;
    for (int j = 0; j < C; ++j) z += std::exp(static_cast<double>(row[j]) - m);
    const double lse = m + std::log(z);
    for (int j = 0; j < C; ++j)
      (*probs)[static_cast<std::size_t>(i) * C + j] =
          static_cast<Real>(std::exp(static_cast<double>(row[j]) - m) / z);
    loss += static_cast<double>(weights[static_cast<std::size_t>(labels[i])]) *
            (lse - static_cast<double>(row[labels[i]]));
  }
  loss /= static_cast<double>(B);

  auto nx = logits.node();
  auto lb = std::make_shared<std::vector<int>>(labels);
  auto wt = std::make_shared<std::vector<Real>>(weights);
  return make_op<Real>({1}, {static_cast<Real>(loss)}, {nx},
                       [nx, probs, lb, wt, B, C](TensorNode<Real>& n) {
                         const Real g = n.grad[0];
                         Real* gx = nx->grad_data();
                         for (int i = 0; i < B; ++i) {
                           const int y = (*lb)[static_cast<std::size_t>(i)];
                           const Real scale =
                               g * (*wt)[static_cast<std::size_t>(y)] / static_cast<Real>(B);
                           Real* grow = gx + static_cast<std::size_t>(i) * C;
                           const Real* prow = probs->data() + static_cast<std::size_t>(i) * C;
                           for (int j = 0; j < C; ++j) grow[j] += scale * prow[j];
                           grow[y] -= scale;
                         }
                       });
}

// ---------------------------------------------------------------------------
// Adam with bias correction; weight decay enters as classic L2 on the
// gradient side (g += wd * theta) before the moment updates.

template <typename Real>
class Adam {
 public:
  Adam(Real weight_decay = Real(0), Real beta1 = Real(0.9), Real beta2 = Real(0.999),
       Real eps = Real(1e-8))
      : wd_(weight_decay), b1_(beta1), b2_(beta2), eps_(eps) {}

  void step(ParamRegistry<Real>& reg, Real lr) {
    auto& params = reg.params();
    if (m_.empty()) {
      m_.resize(params.size());
      v_.resize(params.size());
      for (std::size_t i = 0; i < params.size(); ++i) {
        m_[i].assign(params[i].tensor.size(), Real(0));
        v_[i].assign(params[i].tensor.size(), Real(0));
      }
    }
    ++t_;
    const Real bc1 = Real(1) - static_cast<Real>(std::pow(static_cast<double>(b1_), t_));
    const Real bc2 = Real(1) - static_cast<Real>(std::pow(static_cast<double>(b2_), t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& p = params[i].tensor;
      Real* theta = p.data();
      auto g = p.grad();
      Real* m = m_[i].data();
      Real* v = v_[i].data();
      for (std::size_t j = 0; j < p.size(); ++j) {
        const Real grad = g[j] + wd_ * theta[j];
        m[j] = b1_ * m[j] + (Real(1) - b1_) * grad;
        v[j] = b2_ * v[j] + (Real(1) - b2_) * grad * grad;
        const Real mhat = m[j] / bc1;
        const Real vhat = v[j] / bc2;
        theta[j] -= lr * mhat / (std::sqrt(vhat) + eps_);
      }
    }
  }

  long steps() const { return t_; }

 private:
  Real wd_, b1_, b2_, eps_;
  long t_ = 0;
  std::vector<std::vector<Real>> m_, v_;
};

// ---------------------------------------------------------------------------
// training loop

struct TrainConfig {
  int batch_size = 16;
  double lr = 1e-3;
  double weight_decay = 1e-4;
  int epochs = 300;
  double eta_min = 1e-3;  // note: equal to lr this makes the schedule constant
  std::uint64_t seed = 0;
  bool augment = false;
  AugmentConfig aug;
  bool use_class_weights = true;

  void validate() const {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(lr > 0)) throw ConfigError("lr must be positive");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (!(eta_min >= 0)) throw ConfigError("eta_min must be >= 0");
  }
};

// Cosine annealing: eta_min + (lr - eta_min)(1 + cos(pi * epoch/epochs)) / 2.
inline double cosine_lr(int epoch, const TrainConfig& cfg) {
  if (epoch < 0 || epoch > cfg.epochs)
    throw ContractError("cosine_lr: epoch out of range");
  return cfg.eta_min + 0.5 * (cfg.lr - cfg.eta_min) *
                           (1.0 + std::cos(M_PI * static_cast<double>(epoch) /
                                           static_cast<double>(cfg.epochs)));
}

// In-memory dataset with a fixed per-sample point count.
struct CloudDataset {
  std::vector<PointCloudSample> samples;
  std::vector<std::string> class_names;

  int num_classes() const { return static_cast<int>(class_names.size()); }
  std::size_t size() const { return samples.size(); }
  std::size_t points_per_sample() const {
    return samples.empty() ? 0 : samples[0].points.count();
  }

  std::vector<std::int64_t> label_counts() const {
    std::vector<std::int64_t> counts(static_cast<std::size_t>(num_classes()), 0);
    for (const auto& s : samples) {
      if (s.label < 0 || s.label >= num_classes())
        throw ContractError("dataset label out of range");
      ++counts[static_cast<std::size_t>(s.label)];
    }
    return counts;
  }
};

// Assembles (B,3,N) channel-major batch tensors from N x 3 sample matrices.
template <typename Real>
BasicTensor<Real> make_batch(const CloudDataset& ds, const std::vector<std::size_t>& idx) {
  if (idx.empty()) throw ContractError("make_batch: empty index list");
  const int n = static_cast<int>(ds.points_per_sample());
  const int b = static_cast<int>(idx.size());
  std::vector<Real> v(static_cast<std::size_t>(b) * 3 * n);
  for (int i = 0; i < b; ++i) {
    const auto& pts = ds.samples[idx[static_cast<std::size_t>(i)]].points;
    if (static_cast<int>(pts.count()) != n)
      throw ContractError("make_batch: inconsistent point counts");
    for (int c = 0; c < 3; ++c)
      for (int j = 0; j < n; ++j)
        v[((static_cast<std::size_t>(i) * 3) + c) * n + j] = static_cast<Real>(pts.at(j, c));
  }
  return BasicTensor<Real>::from_data({b, 3, n}, std::move(v));
}

// Eval-mode pass over a dataset; batch-norm statistics stay frozen and
// dropout is off, so results are deterministic.
template <typename Real>
MetricsReport evaluate(Model<Real>& model, const CloudDataset& ds, int batch_size = 16) {
  if (ds.size() == 0) throw ContractError("evaluate: empty dataset");
  const auto t0 = std::chrono::steady_clock::now();
  NoGradGuard ng;
  ConfusionMatrix cm(ds.num_classes());
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t off = 0; off < order.size(); off += static_cast<std::size_t>(batch_size)) {
    const std::size_t hi = std::min(order.size(), off + static_cast<std::size_t>(batch_size));
    std::vector<std::size_t> idx(order.begin() + off, order.begin() + hi);
    auto logits = model.forward(make_batch<Real>(ds, idx), /*training=*/false);
    const int c = logits.dim(1);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      std::vector<float> row(static_cast<std::size_t>(c));
      for (int j = 0; j < c; ++j)
        row[static_cast<std::size_t>(j)] =
            static_cast<float>(logits.data()[i * static_cast<std::size_t>(c) + j]);
      cm.add(ds.samples[idx[i]].label, argmax_row(row.data(), c));
    }
  }
  auto report = metrics_from_confusion(cm);
  report.parameter_count = model.parameter_count();
  report.epoch_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

struct EpochStats {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double test_oa = 0.0;
  double test_ba = 0.0;
  double test_kappa = 0.0;
  double epoch_time_s = 0.0;  // forward+backward+step wall time, I/O excluded
};

struct TrainResult {
  std::vector<EpochStats> history;
  int best_epoch = -1;
  double best_oa = -1.0;
  std::filesystem::path checkpoint_path;
  std::filesystem::path csv_path;
};

// Returns false to stop training early (the best checkpoint so far is kept).
template <typename Real>
using EpochCallback = std::function<bool(int epoch, Model<Real>& model, const EpochStats&)>;

inline void write_history_csv(const std::vector<EpochStats>& history,
                              const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write csv: " + path.string());
  os << "epoch,lr,train_loss,test_oa,test_ba,test_kappa,epoch_time_s\n";
  char buf[256];
  for (const auto& e : history) {
    std::snprintf(buf, sizeof(buf), "%d,%.10g,%.10g,%.10g,%.10g,%.10g,%.6g\n", e.epoch, e.lr,
                  e.train_loss, e.test_oa, e.test_ba, e.test_kappa, e.epoch_time_s);
    os << buf;
  }
}

// Deterministic weighted-loss training loop. Class weights come from the
// train split only; the checkpoint with the best test OA is retained.
template <typename Real>
TrainResult train(Model<Real>& model, const CloudDataset& train_ds, const CloudDataset& test_ds,
                  const TrainConfig& cfg, const std::filesystem::path& out_dir,
                  EpochCallback<Real> callback = nullptr) {
  cfg.validate();
  if (train_ds.size() == 0) throw ContractError("train: empty train split");
  std::filesystem::create_directories(out_dir);

  std::vector<Real> weights(static_cast<std::size_t>(train_ds.num_classes()), Real(1));
  if (cfg.use_class_weights) {
    const auto cw = compute_class_weights(train_ds.label_counts());
    for (std::size_t i = 0; i < cw.weights.size(); ++i)
      weights[i] = static_cast<Real>(cw.weights[i]);
  }

  std::mt19937 rng(static_cast<std::uint32_t>(cfg.seed ^ 0x9e3779b9u));
  model.seed_dropout(cfg.seed ^ 0x7f4a7c15u);
  Adam<Real> opt(static_cast<Real>(cfg.weight_decay));

  TrainResult result;
  result.checkpoint_path = out_dir / "best.tgnw";
  result.csv_path = out_dir / "metrics.csv";

  std::vector<std::size_t> order(train_ds.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cosine_lr(epoch, cfg);
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0.0;
    std::size_t batches = 0;
    double compute_s = 0.0;
    for (std::size_t off = 0; off < order.size(); off += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t hi = std::min(order.size(), off + static_cast<std::size_t>(cfg.batch_size));
      std::vector<std::size_t> idx(order.begin() + off, order.begin() + hi);
      auto batch = make_batch<Real>(train_ds, idx);
      if (cfg.augment) batch = augment_batch(batch, cfg.aug, rng);
      std::vector<int> labels;
      labels.reserve(idx.size());
      for (auto i : idx) labels.push_back(train_ds.samples[i].label);

      const auto t0 = std::chrono::steady_clock::now();
      model.registry().zero_grad();
      auto logits = model.forward(batch, /*training=*/true);
      auto loss = weighted_cross_entropy(logits, labels, weights);
      const double loss_val = static_cast<double>(loss.item());
      if (!std::isfinite(loss_val))
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(batches) + " (first sample index " +
                            std::to_string(idx[0]) + ")");
      loss.backward();
      opt.step(model.registry(), static_cast<Real>(lr));
      compute_s += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

      loss_sum += loss_val;
      ++batches;
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.lr = lr;
    stats.train_loss = loss_sum / static_cast<double>(batches);
    stats.epoch_time_s = compute_s;
    if (test_ds.size() > 0) {
      auto report = evaluate(model, test_ds, cfg.batch_size);
      stats.test_oa = report.oa;
      stats.test_ba = report.ba;
      stats.test_kappa = report.kappa;
    }
    result.history.push_back(stats);

    if (stats.test_oa > result.best_oa) {
      result.best_oa = stats.test_oa;
      result.best_epoch = epoch;
      model.save(result.checkpoint_path);
    }

    if (callback && !callback(epoch, model, stats)) break;
  }

  if (result.best_epoch < 0) {  // no test split: keep the final weights
    result.best_epoch = static_cast<int>(result.history.size()) - 1;
    model.save(result.checkpoint_path);
  }
  write_history_csv(result.history, result.csv_path);
  {
    std::ofstream os(out_dir / "model.cfg");
    os << config_to_kv(model.config());
  }
  return result;
}

}  // namespace tg
