#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "scone/constellation.hpp"

namespace scone {

// Canonical self-normalizing constants.
inline constexpr double kSeluLambda = 1.05070098735548;
inline constexpr double kSeluAlpha = 1.67326324235438;

inline double selu(double x) {
    return x > 0 ? kSeluLambda * x : kSeluLambda * kSeluAlpha * (std::exp(x) - 1.0);
}

inline double selu_grad(double x) {
    return x > 0 ? kSeluLambda : kSeluLambda * kSeluAlpha * std::exp(x);
}

enum class Activation { selu, identity };

struct DenseLayer {
    Eigen::MatrixXd W; // out x in
    Eigen::VectorXd b; // out
    Activation activation = Activation::selu;
};

/// activation(Wx + b). Throws "shape-mismatch" on a wrong input length.
Eigen::VectorXd dense_forward(const DenseLayer& layer, const Eigen::VectorXd& x);

/// One LSTM direction: classic cell with sigmoid input/forget/output gates,
/// tanh candidate and tanh cell output.
struct LstmDirection {
    Eigen::MatrixXd W_i, W_f, W_g, W_o; // hidden x input
    Eigen::MatrixXd U_i, U_f, U_g, U_o; // hidden x hidden
    Eigen::VectorXd b_i, b_f, b_g, b_o; // hidden
};

struct BiLstmLayer {
    LstmDirection fwd, bwd;
};

// Fixed architecture dimensions.
inline constexpr int kDescEmbedDims = 32;
inline constexpr int kGeometryDims = 4;
inline constexpr int kStepDims = kDescEmbedDims + kGeometryDims; // 36
inline constexpr int kLstmHidden = 32;
inline constexpr int kBiLstmOut = 2 * kLstmHidden;               // 64
inline constexpr int kNeighborhoodDims = 32;
inline constexpr int kCentralCatDims = kNeighborhoodDims + kDescEmbedDims + 2; // 66
inline constexpr int kEmbeddingDims = 48;

struct ModelParams {
    std::array<DenseLayer, 3> descriptor_mlp;  // 512 -> 512 -> 256 -> 32
    std::array<BiLstmLayer, 2> bilstm;         // 36 -> 2x32, then 64 -> 2x32
    std::array<DenseLayer, 3> nn_head;         // 64 -> 64 -> 64 -> 32
    std::array<DenseLayer, 3> final_head;      // 66 -> 64 -> 64 -> 48, identity last
};

/// Parameter gradients, shape-isomorphic to the model by construction.
using Gradients = ModelParams;

struct EmbeddingModel {
    ModelParams params;
    GeometryNormalization norm;
    int trained_k = 0; // k used at training time; 0 until trained
};

/// Visits every parameter tensor with a stable name, in a fixed order. The
/// order defines the checkpoint layout and the initialization draw sequence.
template <class Params, class F>
void for_each_tensor(Params& p, F&& f) {
    auto dense_block = [&](const char* prefix, auto& layers) {
        for (size_t i = 0; i < layers.size(); ++i) {
            const std::string base = std::string(prefix) + "." + std::to_string(i) + ".";
            f(base + "W", layers[i].W);
            f(base + "b", layers[i].b);
        }
    };
    auto lstm_dir = [&](const std::string& base, auto& d) {
        f(base + "W_i", d.W_i);
        f(base + "W_f", d.W_f);
        f(base + "W_g", d.W_g);
        f(base + "W_o", d.W_o);
        f(base + "U_i", d.U_i);
        f(base + "U_f", d.U_f);
        f(base + "U_g", d.U_g);
        f(base + "U_o", d.U_o);
        f(base + "b_i", d.b_i);
        f(base + "b_f", d.b_f);
        f(base + "b_g", d.b_g);
        f(base + "b_o", d.b_o);
    };
    dense_block("descriptor_mlp", p.descriptor_mlp);
    for (size_t l = 0; l < p.bilstm.size(); ++l) {
        const std::string base = "bilstm." + std::to_string(l) + ".";
        lstm_dir(base + "fwd.", p.bilstm[l].fwd);
        lstm_dir(base + "bwd.", p.bilstm[l].bwd);
    }
    dense_block("nn_head", p.nn_head);
    dense_block("final_head", p.final_head);
}

// --- forward/backward caches (serial reference path) ---

struct DenseTrace {
    Eigen::VectorXd x; // layer input
    Eigen::VectorXd z; // preactivation
};

struct MlpTrace {
    std::array<DenseTrace, 3> layers;
};

struct LstmDirTrace {
    // All indexed by the direction's own consumption order.
    std::vector<Eigen::VectorXd> x, i, f, g, o, c, tanh_c, h;
};

struct ForwardTrace {
    bool valid = false;
    int k = 0;
    Eigen::VectorXd input;
    MlpTrace central_mlp;
    std::vector<MlpTrace> neighbor_mlp;               // one per neighbour
    std::array<std::array<LstmDirTrace, 2>, 2> lstm;  // [layer][0=fwd, 1=bwd]
    Eigen::VectorXd bilstm_out;                       // 64
    MlpTrace nn_head;
    MlpTrace final_head;
    Eigen::VectorXd embedding;                        // 48
};

/// Runs the two-layer bidirectional stack over a sequence of 36-vectors and
/// returns the concatenated final hidden states of layer 2 (forward first).
/// Throws "empty-sequence" for an empty input.
Eigen::VectorXd bilstm_forward(const std::array<BiLstmLayer, 2>& stack,
                               const std::vector<Eigen::VectorXd>& seq);

/// Serial reference forward pass over an assembled flat input (see
/// assemble_input for the layout). Fills `trace` for a later backward pass
/// when given.
Eigen::VectorXd forward_input(const EmbeddingModel& model, const Eigen::VectorXd& input,
                              int k, ForwardTrace* trace = nullptr);

/// 48-dimensional constellation embedding.
Eigen::VectorXd embed_constellation(const EmbeddingModel& model, const Constellation& c);

/// Zero gradients with the same shapes as `params`.
Gradients zero_like(const ModelParams& params);

/// Accumulates d(embedding . upstream) / d(every parameter) into `grads`,
/// backpropagating through both LSTM directions and layers. Requires the
/// trace of a prior forward pass; throws "missing-cache" otherwise.
void backward_input(const EmbeddingModel& model, const ForwardTrace& trace,
                    const Eigen::VectorXd& upstream, Gradients& grads);

/// Seeded deterministic initialization: fan-in-scaled normal weights
/// (std = 1/sqrt(fan_in)), zero biases except LSTM forget biases at 1.
EmbeddingModel init_model(uint64_t seed);

/// Versioned binary checkpoint, magic "SCONE1". Named tensors are stored as
/// name length / name / rows / cols / row-major doubles, little-endian;
/// normalization constants ride along as named 1x1 scalars.
void save_model(const EmbeddingModel& model, const std::string& path);
EmbeddingModel load_model(const std::string& path);

} // namespace scone
