#pragma once

#include <Eigen/Dense>
#include <vector>

#include "scone/neuralnet.hpp"

namespace scone {

// Column-batched counterpart of the serial forward/backward in neuralnet.hpp.
// One column per constellation; the heavy descriptor-MLP work becomes a
// handful of large matrix products. The serial path is the reference the
// batched kernels are tested against.

struct BatchDenseTrace {
    Eigen::MatrixXd x, z;
};

struct BatchMlpTrace {
    std::array<BatchDenseTrace, 3> layers;
};

struct BatchLstmDirTrace {
    std::vector<Eigen::MatrixXd> x, i, f, g, o, c, tanh_c, h;
};

struct BatchTrace {
    bool valid = false;
    int k = 0;
    int m = 0;
    Eigen::MatrixXd input;                                // (514+516k) x m
    BatchMlpTrace desc_mlp;                               // all (k+1)m descriptor columns
    std::array<std::array<BatchLstmDirTrace, 2>, 2> lstm; // [layer][0=fwd, 1=bwd]
    BatchMlpTrace nn_head, final_head;
    Eigen::MatrixXd embedding;                            // 48 x m
};

/// Batched forward over assembled inputs (one column each, uniform k).
/// Returns 48 x m embeddings; column order is preserved.
Eigen::MatrixXd forward_batch(const EmbeddingModel& model, const Eigen::MatrixXd& X, int k,
                              BatchTrace* trace = nullptr);

/// Accumulates gradients of sum_j embedding_j . upstream_j into `grads`.
void backward_batch(const EmbeddingModel& model, const BatchTrace& trace,
                    const Eigen::MatrixXd& upstream, Gradients& grads);

/// Embeds a set of uniform-k constellations in column batches.
Eigen::MatrixXd embed_constellations(const EmbeddingModel& model,
                                     const std::vector<Constellation>& cs);

} // namespace scone
