#pragma once

#include <string>
#include <utility>
#include <vector>

#include "scone/neuralnet.hpp"
#include "scone/rng.hpp"

namespace scone {

/// Labelled pair: label 0 = similar (same landmark under both central
/// keypoints), label 1 = dissimilar.
struct ConstellationPair {
    Constellation x1, x2;
    int label = 1;
};

struct TrainConfig {
    double margin = 1.0;
    int batch_size = 16;
    double pos_fraction = 0.5;
    double learning_rate = 1e-3;
    int epochs = 50;
    int steps_per_epoch = 8;
    uint64_t seed = 1;
    int k = 10;
};

/// Key = value file with keys matching the TrainConfig field names.
TrainConfig load_train_config(const std::string& path);

struct EpochStats {
    double mean_loss = 0.0;
    double mean_d_sim = 0.0;
    double mean_d_dissim = 0.0;
    double val_precision = 0.0;
};

struct TrainHistory {
    std::vector<EpochStats> epochs;
    int best_epoch = -1;
    double best_val_precision = 0.0;
};

/// CSV with header "epoch,mean_loss,mean_d_sim,mean_d_dissim,val_precision".
void write_history_csv(const TrainHistory& history, const std::string& path);

double embedding_distance(const Eigen::VectorXd& e1, const Eigen::VectorXd& e2);

struct LossGrad {
    double loss = 0.0;
    Eigen::VectorXd grad_e1, grad_e2;
};

/// Contrastive loss and its exact embedding gradients:
///   similar:    L = D^2 / 2
///   dissimilar: L = max(0, margin - D)^2 / 2
/// with the zero subgradient at the D = 0 kink of the dissimilar branch.
LossGrad contrastive_loss(const Eigen::VectorXd& e1, const Eigen::VectorXd& e2, int label,
                          double margin);

/// One mini-batch with ceil(pos_fraction * batch_size) similar pairs (two
/// observations of one landmark in distinct frames) and dissimilar pairs for
/// the rest. Uniform within each category. Throws "insufficient-data".
std::vector<ConstellationPair> sample_pairs(const Dataset& dataset, const TrainConfig& config,
                                            Rng& rng);

/// Mini-batch training of the shared-weight embedding network with Adam.
/// Deterministic given config.seed; returns the checkpoint with the best
/// validation precision and the per-epoch history.
std::pair<EmbeddingModel, TrainHistory> train(const Dataset& train_set, const Dataset& val_set,
                                              const TrainConfig& config);

} // namespace scone
