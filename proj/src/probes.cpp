// Copyright 2026 The tssaudit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "tssaudit/probes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <thread>

#include "tssaudit/error.hpp"
#include "tssaudit/rng.hpp"

namespace tssaudit {
namespace {

void check_rows(const RowMatrix& x, std::span<const int> labels, const char* what) {
  if (static_cast<std::size_t>(x.rows()) != labels.size()) {
    throw ShapeError(std::string(what) + ": " + std::to_string(x.rows()) + " rows but " +
                     std::to_string(labels.size()) + " labels");
  }
}

template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  const std::size_t workers =
      std::min<std::size_t>(std::max(1u, std::thread::hardware_concurrency()), n / 64 + 1);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

int num_classes(std::span<const int> a, std::span<const int> b) {
  int hi = -1;
  for (int v : a) hi = std::max(hi, v);
  for (int v : b) hi = std::max(hi, v);
  for (int v : a) {
    if (v < 0) throw TaskError("class labels must be non-negative");
  }
  for (int v : b) {
    if (v < 0) throw TaskError("class labels must be non-negative");
  }
  return hi + 1;
}

double mean_loss(const Eigen::MatrixXd& w, const Eigen::VectorXd& b, const RowMatrix& x,
                 std::span<const int> y) {
  double total = 0.0;
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    Eigen::VectorXd z = w * x.row(r).transpose() + b;
    const double m = z.maxCoeff();
    const double lse = m + std::log((z.array() - m).exp().sum());
    total += lse - z(y[static_cast<std::size_t>(r)]);
  }
  return x.rows() ? total / static_cast<double>(x.rows()) : 0.0;
}

RowMatrix apply_standardization(const RowMatrix& x, const Eigen::VectorXd& mean,
                                const Eigen::VectorXd& scale) {
  RowMatrix out = x.rowwise() - mean.transpose();
  out.array().rowwise() *= scale.transpose().array();
  return out;
}

}  // namespace

std::string_view to_string(Classifier c) {
  switch (c) {
    case Classifier::ncc: return "ncc";
    case Classifier::knn: return "knn";
    case Classifier::lp: return "lp";
  }
  return "ncc";
}

// --------------------------------------------------------------------------- NCC

NccModel ncc_fit(const RowMatrix& x, std::span<const int> labels) {
  check_rows(x, labels, "ncc_fit");
  if (labels.empty()) throw TaskError("ncc_fit: empty training set");
  std::set<int> ids(labels.begin(), labels.end());
  NccModel model;
  model.class_ids.assign(ids.begin(), ids.end());
  model.centroids = RowMatrix::Zero(static_cast<Eigen::Index>(ids.size()), x.cols());
  std::vector<std::size_t> counts(ids.size(), 0);
  for (std::size_t r = 0; r < labels.size(); ++r) {
    const auto c = static_cast<std::size_t>(
        std::lower_bound(model.class_ids.begin(), model.class_ids.end(), labels[r]) -
        model.class_ids.begin());
    model.centroids.row(static_cast<Eigen::Index>(c)) += x.row(static_cast<Eigen::Index>(r));
    ++counts[c];
  }
  for (std::size_t c = 0; c < counts.size(); ++c) {
    model.centroids.row(static_cast<Eigen::Index>(c)) /= static_cast<double>(counts[c]);
  }
  return model;
}

int ncc_predict_one(const NccModel& model, const Eigen::VectorXd& x) {
  if (x.size() != model.centroids.cols()) throw ShapeError("ncc_predict: dimension mismatch");
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < model.centroids.rows(); ++c) {
    const double d = (model.centroids.row(c).transpose() - x).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<std::size_t>(c);
    }
  }
  return model.class_ids[best];
}

std::vector<int> ncc_predict(const NccModel& model, const RowMatrix& queries) {
  std::vector<int> out(static_cast<std::size_t>(queries.rows()));
  for (Eigen::Index r = 0; r < queries.rows(); ++r) {
    out[static_cast<std::size_t>(r)] = ncc_predict_one(model, Eigen::VectorXd(queries.row(r).transpose()));
  }
  return out;
}

// --------------------------------------------------------------------------- KNN

int knn_predict_one(const RowMatrix& train, std::span<const int> labels,
                const Eigen::VectorXd& x, int k) {
  if (k <= 0) throw ParameterError("knn: k must be positive");
  check_rows(train, labels, "knn");
  if (static_cast<std::size_t>(train.rows()) < static_cast<std::size_t>(k)) {
    throw ParameterError("knn: training set smaller than k");
  }
  if (x.size() != train.cols()) throw ShapeError("knn: dimension mismatch");

  std::vector<std::pair<double, std::size_t>> dist(static_cast<std::size_t>(train.rows()));
  for (Eigen::Index r = 0; r < train.rows(); ++r) {
    dist[static_cast<std::size_t>(r)] = {(train.row(r).transpose() - x).squaredNorm(),
                                         static_cast<std::size_t>(r)};
  }
  const auto kk = static_cast<std::size_t>(k);
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(kk), dist.end());

  struct Vote {
    int label;
    std::size_t count;
    double nearest;
  };
  std::vector<Vote> votes;
  for (std::size_t i = 0; i < kk; ++i) {
    const int label = labels[dist[i].second];
    auto it = std::find_if(votes.begin(), votes.end(),
                           [&](const Vote& v) { return v.label == label; });
    if (it == votes.end()) {
      votes.push_back({label, 1, dist[i].first});
    } else {
      ++it->count;  // neighbours arrive nearest first
    }
  }
  const auto winner = std::min_element(votes.begin(), votes.end(), [](const Vote& a, const Vote& b) {
    if (a.count != b.count) return a.count > b.count;
    if (a.nearest != b.nearest) return a.nearest < b.nearest;
    return a.label < b.label;
  });
  return winner->label;
}

std::vector<int> knn_predict(const RowMatrix& train, std::span<const int> labels,
                             const RowMatrix& queries, int k) {
  if (k <= 0) throw ParameterError("knn: k must be positive");
  check_rows(train, labels, "knn");
  if (static_cast<std::size_t>(train.rows()) < static_cast<std::size_t>(k)) {
    throw ParameterError("knn: training set smaller than k");
  }
  if (queries.rows() > 0 && queries.cols() != train.cols()) {
    throw ShapeError("knn: dimension mismatch");
  }
  std::vector<int> out(static_cast<std::size_t>(queries.rows()));
  parallel_for(out.size(), [&](std::size_t q) {
    out[q] = knn_predict_one(train, labels, Eigen::VectorXd(queries.row(static_cast<Eigen::Index>(q)).transpose()), k);
  });
  return out;
}

// --------------------------------------------------------------------------- LP

Eigen::VectorXd LinearProbe::logits(const Eigen::VectorXd& x) const {
  if (x.size() != weights.cols()) {
    throw ShapeError("lp_predict: expected dimension " + std::to_string(weights.cols()) +
                     ", got " + std::to_string(x.size()));
  }
  if (feature_mean) {
    Eigen::VectorXd z = (x - *feature_mean).cwiseProduct(*feature_scale);
    return weights * z + bias;
  }
  return weights * x + bias;
}

Eigen::VectorXd softmax(const Eigen::Ref<const Eigen::VectorXd>& logits) {
  Eigen::VectorXd e = (logits.array() - logits.maxCoeff()).exp();
  return e / e.sum();
}

LossGradient cross_entropy_gradient(const Eigen::MatrixXd& weights, const Eigen::VectorXd& bias,
                                    const RowMatrix& x, std::span<const int> labels) {
  check_rows(x, labels, "cross_entropy_gradient");
  if (x.cols() != weights.cols() || bias.size() != weights.rows()) {
    throw ShapeError("cross_entropy_gradient: shape mismatch");
  }
  const Eigen::Index n = x.rows();
  if (n == 0) throw TaskError("cross_entropy_gradient: empty batch");
  // logits: n x C
  Eigen::MatrixXd z = x * weights.transpose();
  z.rowwise() += bias.transpose();
  LossGradient out;
  Eigen::MatrixXd g(n, weights.rows());
  double loss = 0.0;
  for (Eigen::Index r = 0; r < n; ++r) {
    const double m = z.row(r).maxCoeff();
    Eigen::RowVectorXd e = (z.row(r).array() - m).exp();
    const double s = e.sum();
    const int y = labels[static_cast<std::size_t>(r)];
    if (y < 0 || y >= weights.rows()) throw TaskError("label out of range [0, C)");
    loss += m + std::log(s) - z(r, y);
    g.row(r) = e / s;
    g(r, y) -= 1.0;
  }
  const double inv = 1.0 / static_cast<double>(n);
  out.loss = loss * inv;
  out.grad_weights = g.transpose() * x * inv;
  out.grad_bias = g.colwise().sum().transpose() * inv;
  return out;
}

LinearProbe lp_train(const RowMatrix& train_x, std::span<const int> train_y,
                     const RowMatrix& val_x, std::span<const int> val_y,
                     const LpConfig& config) {
  if (config.epochs <= 0) throw ParameterError("lp_train: epochs must be positive");
  if (config.batch_size == 0) throw ParameterError("lp_train: batch size must be positive");
  if (!(config.learning_rate > 0.0)) throw ParameterError("lp_train: learning rate must be > 0");
  check_rows(train_x, train_y, "lp_train (train)");
  check_rows(val_x, val_y, "lp_train (val)");
  if (train_y.empty() || val_y.empty()) throw TaskError("lp_train: empty train or val set");
  if (val_x.cols() != train_x.cols()) throw ShapeError("lp_train: train/val dimension mismatch");
  const int c = num_classes(train_y, val_y);
  if (c < 2) throw TaskError("lp_train: need at least 2 classes");

  LinearProbe probe;
  RowMatrix xs, vs;
  const RowMatrix* xt = &train_x;
  const RowMatrix* xv = &val_x;
  if (config.standardize) {
    Eigen::VectorXd mean = train_x.colwise().mean().transpose();
    Eigen::VectorXd sd =
        ((train_x.rowwise() - mean.transpose()).array().square().colwise().mean().sqrt())
            .transpose();
    Eigen::VectorXd scale = sd.unaryExpr([](double s) { return s > 1e-12 ? 1.0 / s : 1.0; });
    xs = apply_standardization(train_x, mean, scale);
    vs = apply_standardization(val_x, mean, scale);
    xt = &xs;
    xv = &vs;
    probe.feature_mean = mean;
    probe.feature_scale = scale;
  }

  const Eigen::Index d = train_x.cols();
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(c, d);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(c);
  Eigen::MatrixXd mw = w, vw = w;
  Eigen::VectorXd mb = b, vb = b;
  double beta1_t = 1.0, beta2_t = 1.0;

  std::vector<std::size_t> order(train_y.size());
  std::iota(order.begin(), order.end(), 0);
  double best_val = std::numeric_limits<double>::infinity();
  RowMatrix batch;
  std::vector<int> batch_y;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), rng);
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      batch.resize(static_cast<Eigen::Index>(end - start), d);
      batch_y.resize(end - start);
      for (std::size_t i = start; i < end; ++i) {
        batch.row(static_cast<Eigen::Index>(i - start)) =
            xt->row(static_cast<Eigen::Index>(order[i]));
        batch_y[i - start] = train_y[order[i]];
      }
      auto lg = cross_entropy_gradient(w, b, batch, batch_y);
      if (!std::isfinite(lg.loss)) {
        throw DivergenceError("lp_train: non-finite loss at epoch " + std::to_string(epoch) +
                              ", batch " + std::to_string(batch_index));
      }
      beta1_t *= config.beta1;
      beta2_t *= config.beta2;
      const double c1 = 1.0 - beta1_t, c2 = 1.0 - beta2_t;
      mw = config.beta1 * mw + (1.0 - config.beta1) * lg.grad_weights;
      vw = config.beta2 * vw + (1.0 - config.beta2) * lg.grad_weights.cwiseAbs2();
      mb = config.beta1 * mb + (1.0 - config.beta1) * lg.grad_bias;
      vb = config.beta2 * vb + (1.0 - config.beta2) * lg.grad_bias.cwiseAbs2();
      w.array() -= config.learning_rate * (mw.array() / c1) /
                   ((vw.array() / c2).sqrt() + config.epsilon);
      b.array() -= config.learning_rate * (mb.array() / c1) /
                   ((vb.array() / c2).sqrt() + config.epsilon);
    }
    EpochLog log;
    log.epoch = epoch;
    log.train_loss = mean_loss(w, b, *xt, train_y);
    log.val_loss = mean_loss(w, b, *xv, val_y);
    if (!std::isfinite(log.train_loss) || !std::isfinite(log.val_loss)) {
      throw DivergenceError("lp_train: non-finite loss at epoch " + std::to_string(epoch) +
                            ", batch " + std::to_string(batch_index - 1) + " (end-of-epoch pass)");
    }
    probe.training_log.push_back(log);
    if (log.val_loss < best_val) {
      best_val = log.val_loss;
      probe.selected_epoch = epoch;
      probe.weights = w;
      probe.bias = b;
    }
  }
  return probe;
}

int lp_predict_one(const LinearProbe& probe, const Eigen::VectorXd& x) {
  const Eigen::VectorXd z = probe.logits(x);
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < z.size(); ++i) {
    if (z(i) > z(best)) best = i;
  }
  return static_cast<int>(best);
}

std::vector<int> lp_predict(const LinearProbe& probe, const RowMatrix& queries) {
  std::vector<int> out(static_cast<std::size_t>(queries.rows()));
  for (Eigen::Index r = 0; r < queries.rows(); ++r) {
    out[static_cast<std::size_t>(r)] = lp_predict_one(probe, Eigen::VectorXd(queries.row(r).transpose()));
  }
  return out;
}

// --------------------------------------------------------------------------- reports

ProbeReport make_report(Classifier classifier, std::span<const int> truth,
                        std::span<const int> predicted, std::uint64_t seed) {
  if (truth.size() != predicted.size()) throw ShapeError("make_report: length mismatch");
  std::set<int> ids(truth.begin(), truth.end());
  ids.insert(predicted.begin(), predicted.end());
  ProbeReport rep;
  rep.classifier = classifier;
  rep.seed = seed;
  rep.class_ids.assign(ids.begin(), ids.end());
  const std::size_t c = rep.class_ids.size();
  rep.confusion.assign(c, std::vector<std::size_t>(c, 0));
  auto pos = [&](int label) {
    return static_cast<std::size_t>(
        std::lower_bound(rep.class_ids.begin(), rep.class_ids.end(), label) -
        rep.class_ids.begin());
  };
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ++rep.confusion[pos(truth[i])][pos(predicted[i])];
    if (truth[i] == predicted[i]) ++correct;
  }
  rep.n_test = truth.size();
  rep.accuracy = truth.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(truth.size());
  rep.per_class_recall.resize(c);
  for (std::size_t i = 0; i < c; ++i) {
    const auto row = std::accumulate(rep.confusion[i].begin(), rep.confusion[i].end(),
                                     std::size_t{0});
    rep.per_class_recall[i] =
        row ? static_cast<double>(rep.confusion[i][i]) / static_cast<double>(row) : 0.0;
  }
  return rep;
}

double mean_of(std::span<const double> v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double population_stddev(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size()));
}

SitePredictionResult run_site_prediction(const EmbeddingTable& table, std::uint64_t seed,
                                         const SitePredictionConfig& config) {
  const auto sites = table.site_labels();
  SitePredictionResult out;
  auto sub = subsample_per_site(table, config.budget_per_site, derive_seed(seed, "site/subsample"));
  out.sampled = std::move(sub.rows);
  out.warnings = std::move(sub.warnings);
  out.split = patient_split(table, config.fractions, derive_seed(seed, "site/split"), out.sampled);

  auto labels_of = [&](const std::vector<std::size_t>& rows) {
    std::vector<int> y(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) y[i] = sites[rows[i]];
    return y;
  };
  const RowMatrix xtr = table.gather(out.split.train);
  const RowMatrix xval = table.gather(out.split.val);
  const RowMatrix xte = table.gather(out.split.test);
  const auto ytr = labels_of(out.split.train);
  const auto yval = labels_of(out.split.val);
  const auto yte = labels_of(out.split.test);

  const auto ncc = ncc_fit(xtr, ytr);
  out.reports[Classifier::ncc] = make_report(Classifier::ncc, yte, ncc_predict(ncc, xte), seed);
  out.reports[Classifier::knn] =
      make_report(Classifier::knn, yte, knn_predict(xtr, ytr, xte, config.k), seed);

  LpConfig lp = config.lp;
  lp.seed = derive_seed(seed, "site/lp");
  out.probe = lp_train(xtr, ytr, xval, yval, lp);
  out.reports[Classifier::lp] = make_report(Classifier::lp, yte, lp_predict(out.probe, xte), seed);
  return out;
}

std::vector<BiasOutcome> run_bias_experiment(const EmbeddingTable& table, std::uint64_t seed,
                                             const BiasExperimentConfig& config) {
  if (config.repetitions < 1) throw ParameterError("repetitions must be >= 1");
  const auto splits = build_bias_splits(table, derive_seed(seed, "bias/splits"), config.splits);
  return run_bias_experiment(table, splits, seed, config);
}

std::vector<BiasOutcome> run_bias_experiment(const EmbeddingTable& table,
                                             std::span<const BiasSplit> splits,
                                             std::uint64_t seed,
                                             const BiasExperimentConfig& config) {
  if (config.repetitions < 1) throw ParameterError("repetitions must be >= 1");
  const auto classes = table.class_labels();
  auto labels_of = [&](const std::vector<std::size_t>& rows) {
    std::vector<int> y(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) y[i] = classes[rows[i]];
    return y;
  };
  const std::uint64_t base = derive_seed(seed, "bias/lp");
  std::vector<BiasOutcome> out;
  for (const auto& bs : splits) {
    const RowMatrix xtr = table.gather(bs.split.train);
    const RowMatrix xval = table.gather(bs.split.val);
    const RowMatrix xte = table.gather(bs.split.test);
    const auto ytr = labels_of(bs.split.train);
    const auto yval = labels_of(bs.split.val);
    const auto yte = labels_of(bs.split.test);
    BiasOutcome outcome;
    outcome.spec = bs.spec;
    for (int rep = 0; rep < config.repetitions; ++rep) {
      LpConfig lp = config.lp;
      lp.seed = base + static_cast<std::uint64_t>(rep);
      const auto probe = lp_train(xtr, ytr, xval, yval, lp);
      outcome.accuracies.push_back(
          make_report(Classifier::lp, yte, lp_predict(probe, xte), lp.seed).accuracy);
    }
    outcome.mean = mean_of(outcome.accuracies);
    outcome.stddev = population_stddev(outcome.accuracies);
    out.push_back(std::move(outcome));
  }
  return out;
}

}  // namespace tssaudit
