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

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tssaudit/embstore.hpp"
#include "tssaudit/splitter.hpp"

namespace tssaudit {

enum class Classifier { ncc, knn, lp };
std::string_view to_string(Classifier c);

// ---------------------------------------------------------------------------
// Nearest centroid

struct NccModel {
  RowMatrix centroids;        // C x D, one row per entry of class_ids
  std::vector<int> class_ids;  // ascending
};

NccModel ncc_fit(const RowMatrix& x, std::span<const int> labels);
int ncc_predict_one(const NccModel& model, const Eigen::VectorXd& x);
std::vector<int> ncc_predict(const NccModel& model, const RowMatrix& queries);

// ---------------------------------------------------------------------------
// k nearest neighbours (exact, brute force)

/// Majority vote over the k Euclidean-nearest rows (distance ties at the
/// boundary go to the lower row index). Vote ties go to the tied class with
/// the closest member, then to the lowest class id.
int knn_predict_one(const RowMatrix& train, std::span<const int> labels,
                const Eigen::VectorXd& x, int k = 5);
/// Batched queries; data-parallel over queries, results independent of
/// thread count.
std::vector<int> knn_predict(const RowMatrix& train, std::span<const int> labels,
                             const RowMatrix& queries, int k = 5);

// ---------------------------------------------------------------------------
// Linear probe: single linear layer + softmax cross-entropy, minibatch Adam.

struct LpConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 128;
  int epochs = 20;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  bool standardize = false;  // z-score features with train statistics
  std::uint64_t seed = 0;
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;  // full-pass mean cross-entropy after the epoch
  double val_loss = 0.0;
};

struct LinearProbe {
  Eigen::MatrixXd weights;  // C x D
  Eigen::VectorXd bias;     // C
  std::vector<EpochLog> training_log;
  int selected_epoch = 0;  // index into training_log with lowest val loss
  // Present when trained with standardize = true.
  std::optional<Eigen::VectorXd> feature_mean;
  std::optional<Eigen::VectorXd> feature_scale;

  std::size_t num_classes() const { return static_cast<std::size_t>(weights.rows()); }
  Eigen::VectorXd logits(const Eigen::VectorXd& x) const;
};

/// Numerically stable softmax.
Eigen::VectorXd softmax(const Eigen::Ref<const Eigen::VectorXd>& logits);

struct LossGradient {
  double loss = 0.0;  // mean cross-entropy over the rows
  Eigen::MatrixXd grad_weights;
  Eigen::VectorXd grad_bias;
};

/// Mean softmax cross-entropy of labels (in [0, C)) and its analytic
/// gradient with respect to weights and bias.
LossGradient cross_entropy_gradient(const Eigen::MatrixXd& weights, const Eigen::VectorXd& bias,
                                    const RowMatrix& x, std::span<const int> labels);

/// Trains for `config.epochs` epochs and returns the weights of the epoch
/// with the lowest validation loss. Labels must lie in [0, C) with C >= 2,
/// where C = 1 + the largest label seen.
LinearProbe lp_train(const RowMatrix& train_x, std::span<const int> train_y,
                     const RowMatrix& val_x, std::span<const int> val_y,
                     const LpConfig& config);

/// Argmax of the logits; ties go to the lowest class index.
int lp_predict_one(const LinearProbe& probe, const Eigen::VectorXd& x);
std::vector<int> lp_predict(const LinearProbe& probe, const RowMatrix& queries);

// ---------------------------------------------------------------------------
// Reports and experiment drivers

struct ProbeReport {
  Classifier classifier = Classifier::ncc;
  std::vector<int> class_ids;                           // row/col labels of the matrix
  std::vector<std::vector<std::size_t>> confusion;      // [true][predicted]
  std::vector<double> per_class_recall;                 // NaN-free: 0 for empty classes
  std::size_t n_test = 0;
  double accuracy = 0.0;
  std::uint64_t seed = 0;
};

ProbeReport make_report(Classifier classifier, std::span<const int> truth,
                        std::span<const int> predicted, std::uint64_t seed);

struct SitePredictionConfig {
  std::size_t budget_per_site = 50000;
  std::array<double, 3> fractions = {0.6, 0.1, 0.3};
  int k = 5;
  LpConfig lp{};
};

struct SitePredictionResult {
  std::vector<std::size_t> sampled;  // rows kept by the per-site subsample
  GroupedSplit split;
  std::map<Classifier, ProbeReport> reports;
  LinearProbe probe;
  std::vector<std::string> warnings;
};

/// Source-site prediction: per-site subsample, patient split, then NCC,
/// KNN and LP trained on train (LP validated on val) and scored on test.
SitePredictionResult run_site_prediction(const EmbeddingTable& table, std::uint64_t seed,
                                         const SitePredictionConfig& config = {});

struct BiasOutcome {
  BiasSpec spec;
  std::vector<double> accuracies;  // one per repetition
  double mean = 0.0;
  double stddev = 0.0;  // population standard deviation
};

struct BiasExperimentConfig {
  int repetitions = 5;
  BiasConfig splits{};
  LpConfig lp{};
};

/// Tumor-vs-normal LP on each of the four biased compositions, repeated
/// with seeds base + repetition index on identical splits.
std::vector<BiasOutcome> run_bias_experiment(const EmbeddingTable& table, std::uint64_t seed,
                                             const BiasExperimentConfig& config = {});
std::vector<BiasOutcome> run_bias_experiment(const EmbeddingTable& table,
                                             std::span<const BiasSplit> splits,
                                             std::uint64_t seed,
                                             const BiasExperimentConfig& config);

double mean_of(std::span<const double> v);
double population_stddev(std::span<const double> v);

}  // namespace tssaudit
