#include "scone/neuralnet_batch.hpp"

#include "scone/error.hpp"

namespace scone {

namespace {

Eigen::MatrixXd apply_activation(Activation act, const Eigen::MatrixXd& z) {
    if (act == Activation::identity) return z;
    return (z.array() > 0)
        .select(kSeluLambda * z.array(), kSeluLambda * kSeluAlpha * (z.array().exp() - 1.0))
        .matrix();
}

Eigen::MatrixXd activation_grad(Activation act, const Eigen::MatrixXd& z) {
    if (act == Activation::identity) return Eigen::MatrixXd::Ones(z.rows(), z.cols());
    return (z.array() > 0)
        .select(Eigen::ArrayXXd::Constant(z.rows(), z.cols(), kSeluLambda),
                kSeluLambda * kSeluAlpha * z.array().exp())
        .matrix();
}

Eigen::MatrixXd mlp_forward(const std::array<DenseLayer, 3>& layers, Eigen::MatrixXd x,
                            BatchMlpTrace* trace) {
    for (int l = 0; l < 3; ++l) {
        const DenseLayer& layer = layers[l];
        Eigen::MatrixXd z = layer.W * x;
        z.colwise() += layer.b;
        if (trace) {
            trace->layers[l].x = std::move(x);
            trace->layers[l].z = z;
        }
        x = apply_activation(layer.activation, z);
    }
    return x;
}

Eigen::MatrixXd mlp_backward(const std::array<DenseLayer, 3>& layers, const BatchMlpTrace& trace,
                             Eigen::MatrixXd d, std::array<DenseLayer, 3>& grads) {
    for (int l = 2; l >= 0; --l) {
        const Eigen::MatrixXd dz =
            d.cwiseProduct(activation_grad(layers[l].activation, trace.layers[l].z));
        grads[l].W.noalias() += dz * trace.layers[l].x.transpose();
        grads[l].b += dz.rowwise().sum();
        d.noalias() = layers[l].W.transpose() * dz;
    }
    return d;
}

// One direction over xs in consumption order; returns final hidden (32 x m).
Eigen::MatrixXd lstm_run(const LstmDirection& d, const std::vector<Eigen::MatrixXd>& xs,
                         BatchLstmDirTrace& trace) {
    const int hidden = static_cast<int>(d.b_i.size());
    const int steps = static_cast<int>(xs.size());
    const int m = static_cast<int>(xs[0].cols());
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(hidden, m);
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(hidden, m);
    trace.x.resize(steps);
    trace.i.resize(steps);
    trace.f.resize(steps);
    trace.g.resize(steps);
    trace.o.resize(steps);
    trace.c.resize(steps);
    trace.tanh_c.resize(steps);
    trace.h.resize(steps);
    for (int s = 0; s < steps; ++s) {
        Eigen::MatrixXd ai = d.W_i * xs[s] + d.U_i * h;
        Eigen::MatrixXd af = d.W_f * xs[s] + d.U_f * h;
        Eigen::MatrixXd ag = d.W_g * xs[s] + d.U_g * h;
        Eigen::MatrixXd ao = d.W_o * xs[s] + d.U_o * h;
        ai.colwise() += d.b_i;
        af.colwise() += d.b_f;
        ag.colwise() += d.b_g;
        ao.colwise() += d.b_o;
        const Eigen::MatrixXd i = (1.0 / (1.0 + (-ai.array()).exp())).matrix();
        const Eigen::MatrixXd f = (1.0 / (1.0 + (-af.array()).exp())).matrix();
        const Eigen::MatrixXd g = ag.array().tanh().matrix();
        const Eigen::MatrixXd o = (1.0 / (1.0 + (-ao.array()).exp())).matrix();
        c = (f.array() * c.array() + i.array() * g.array()).matrix();
        const Eigen::MatrixXd tc = c.array().tanh().matrix();
        h = (o.array() * tc.array()).matrix();
        trace.x[s] = xs[s];
        trace.i[s] = i;
        trace.f[s] = f;
        trace.g[s] = g;
        trace.o[s] = o;
        trace.c[s] = c;
        trace.tanh_c[s] = tc;
        trace.h[s] = h;
    }
    return h;
}

void lstm_backward(const LstmDirection& d, const BatchLstmDirTrace& trace,
                   const std::vector<Eigen::MatrixXd>& dh_ext, LstmDirection& grads,
                   std::vector<Eigen::MatrixXd>& dx) {
    const int hidden = static_cast<int>(d.b_i.size());
    const int steps = static_cast<int>(trace.x.size());
    const int m = static_cast<int>(trace.x[0].cols());
    dx.resize(steps);
    Eigen::MatrixXd dh_rec = Eigen::MatrixXd::Zero(hidden, m);
    Eigen::MatrixXd dc = Eigen::MatrixXd::Zero(hidden, m);
    const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(hidden, m);
    for (int s = steps - 1; s >= 0; --s) {
        const auto i = trace.i[s].array();
        const auto f = trace.f[s].array();
        const auto g = trace.g[s].array();
        const auto o = trace.o[s].array();
        const auto tc = trace.tanh_c[s].array();
        const Eigen::MatrixXd& c_prev = s > 0 ? trace.c[s - 1] : zero;
        const Eigen::MatrixXd& h_prev = s > 0 ? trace.h[s - 1] : zero;

        const Eigen::ArrayXXd dh = dh_ext[s].array() + dh_rec.array();
        const Eigen::ArrayXXd dc_total = dc.array() + dh * o * (1.0 - tc.square());
        const Eigen::MatrixXd da_o = (dh * tc * o * (1.0 - o)).matrix();
        const Eigen::MatrixXd da_f = (dc_total * c_prev.array() * f * (1.0 - f)).matrix();
        const Eigen::MatrixXd da_i = (dc_total * g * i * (1.0 - i)).matrix();
        const Eigen::MatrixXd da_g = (dc_total * i * (1.0 - g.square())).matrix();

        grads.W_i.noalias() += da_i * trace.x[s].transpose();
        grads.W_f.noalias() += da_f * trace.x[s].transpose();
        grads.W_g.noalias() += da_g * trace.x[s].transpose();
        grads.W_o.noalias() += da_o * trace.x[s].transpose();
        grads.U_i.noalias() += da_i * h_prev.transpose();
        grads.U_f.noalias() += da_f * h_prev.transpose();
        grads.U_g.noalias() += da_g * h_prev.transpose();
        grads.U_o.noalias() += da_o * h_prev.transpose();
        grads.b_i += da_i.rowwise().sum();
        grads.b_f += da_f.rowwise().sum();
        grads.b_g += da_g.rowwise().sum();
        grads.b_o += da_o.rowwise().sum();

        dx[s] = d.W_i.transpose() * da_i + d.W_f.transpose() * da_f + d.W_g.transpose() * da_g +
                d.W_o.transpose() * da_o;
        dh_rec = d.U_i.transpose() * da_i + d.U_f.transpose() * da_f + d.U_g.transpose() * da_g +
                 d.U_o.transpose() * da_o;
        dc = (dc_total * f).matrix();
    }
}

} // namespace

Eigen::MatrixXd forward_batch(const EmbeddingModel& model, const Eigen::MatrixXd& X, int k,
                              BatchTrace* trace) {
    if (X.rows() != input_dims(k))
        throw_data("shape-mismatch", "batch input rows " + std::to_string(X.rows()) +
                                         " do not match k=" + std::to_string(k));
    const int m = static_cast<int>(X.cols());
    const ModelParams& p = model.params;
    const int slots = k + 1; // k neighbours then the central descriptor

    // Gather every descriptor into one 512 x (k+1)m matrix.
    Eigen::MatrixXd D(kDescriptorBits, static_cast<Eigen::Index>(slots) * m);
    for (int j = 0; j < m; ++j) {
        for (int t = 0; t < k; ++t)
            D.col(static_cast<Eigen::Index>(j) * slots + t) =
                X.block(kCentralDims + kNeighborDims * t, j, kDescriptorBits, 1);
        D.col(static_cast<Eigen::Index>(j) * slots + k) = X.block(0, j, kDescriptorBits, 1);
    }

    BatchMlpTrace local_desc;
    BatchMlpTrace& desc_trace = trace ? trace->desc_mlp : local_desc;
    const Eigen::MatrixXd E = mlp_forward(p.descriptor_mlp, std::move(D), &desc_trace);

    // Per-step LSTM inputs: embedded neighbour descriptor plus its geometry.
    std::vector<Eigen::MatrixXd> steps(k);
    for (int t = 0; t < k; ++t) {
        Eigen::MatrixXd s(kStepDims, m);
        for (int j = 0; j < m; ++j) {
            s.col(j).head(kDescEmbedDims) = E.col(static_cast<Eigen::Index>(j) * slots + t);
            s.col(j).tail(kGeometryDims) =
                X.block(kCentralDims + kNeighborDims * t + kDescriptorBits, j, kGeometryDims, 1);
        }
        steps[t] = std::move(s);
    }

    std::array<std::array<BatchLstmDirTrace, 2>, 2> local_lstm;
    auto& lstm_trace = trace ? trace->lstm : local_lstm;
    std::vector<Eigen::MatrixXd> steps_rev(steps.rbegin(), steps.rend());
    lstm_run(p.bilstm[0].fwd, steps, lstm_trace[0][0]);
    lstm_run(p.bilstm[0].bwd, steps_rev, lstm_trace[0][1]);

    std::vector<Eigen::MatrixXd> layer2_in(k);
    for (int t = 0; t < k; ++t) {
        Eigen::MatrixXd y(kBiLstmOut, m);
        y.topRows(kLstmHidden) = lstm_trace[0][0].h[t];
        y.bottomRows(kLstmHidden) = lstm_trace[0][1].h[k - 1 - t];
        layer2_in[t] = std::move(y);
    }
    std::vector<Eigen::MatrixXd> layer2_rev(layer2_in.rbegin(), layer2_in.rend());
    const Eigen::MatrixXd hf = lstm_run(p.bilstm[1].fwd, layer2_in, lstm_trace[1][0]);
    const Eigen::MatrixXd hb = lstm_run(p.bilstm[1].bwd, layer2_rev, lstm_trace[1][1]);

    Eigen::MatrixXd bilstm_out(kBiLstmOut, m);
    bilstm_out.topRows(kLstmHidden) = hf;
    bilstm_out.bottomRows(kLstmHidden) = hb;

    BatchMlpTrace local_nn;
    const Eigen::MatrixXd neighborhood =
        mlp_forward(p.nn_head, bilstm_out, trace ? &trace->nn_head : &local_nn);

    Eigen::MatrixXd cat(kCentralCatDims, m);
    cat.topRows(kNeighborhoodDims) = neighborhood;
    for (int j = 0; j < m; ++j)
        cat.col(j).segment(kNeighborhoodDims, kDescEmbedDims) =
            E.col(static_cast<Eigen::Index>(j) * slots + k);
    cat.row(kNeighborhoodDims + kDescEmbedDims) = X.row(kDescriptorBits);
    cat.row(kNeighborhoodDims + kDescEmbedDims + 1) = X.row(kDescriptorBits + 1);

    BatchMlpTrace local_final;
    Eigen::MatrixXd embedding =
        mlp_forward(p.final_head, cat, trace ? &trace->final_head : &local_final);

    if (trace) {
        trace->valid = true;
        trace->k = k;
        trace->m = m;
        trace->input = X;
        trace->embedding = embedding;
    }
    return embedding;
}

void backward_batch(const EmbeddingModel& model, const BatchTrace& trace,
                    const Eigen::MatrixXd& upstream, Gradients& grads) {
    if (!trace.valid) throw_data("missing-cache", "backward requires a forward trace");
    if (upstream.rows() != kEmbeddingDims || upstream.cols() != trace.m)
        throw_data("shape-mismatch", "upstream must be 48 x batch");
    const ModelParams& p = model.params;
    const int k = trace.k;
    const int m = trace.m;
    const int slots = k + 1;

    const Eigen::MatrixXd d_cat = mlp_backward(p.final_head, trace.final_head, upstream,
                                               grads.final_head);
    const Eigen::MatrixXd d_bilstm_out = mlp_backward(
        p.nn_head, trace.nn_head, d_cat.topRows(kNeighborhoodDims), grads.nn_head);

    const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(kLstmHidden, m);
    std::vector<Eigen::MatrixXd> dh_f1(k, zero), dh_b1(k, zero);
    dh_f1[k - 1] = d_bilstm_out.topRows(kLstmHidden);
    dh_b1[k - 1] = d_bilstm_out.bottomRows(kLstmHidden);
    std::vector<Eigen::MatrixXd> dx_f1, dx_b1;
    lstm_backward(p.bilstm[1].fwd, trace.lstm[1][0], dh_f1, grads.bilstm[1].fwd, dx_f1);
    lstm_backward(p.bilstm[1].bwd, trace.lstm[1][1], dh_b1, grads.bilstm[1].bwd, dx_b1);

    std::vector<Eigen::MatrixXd> dh_f0(k), dh_b0(k);
    for (int t = 0; t < k; ++t) {
        const Eigen::MatrixXd d_y = dx_f1[t] + dx_b1[k - 1 - t];
        dh_f0[t] = d_y.topRows(kLstmHidden);
        dh_b0[k - 1 - t] = d_y.bottomRows(kLstmHidden);
    }
    std::vector<Eigen::MatrixXd> dx_f0, dx_b0;
    lstm_backward(p.bilstm[0].fwd, trace.lstm[0][0], dh_f0, grads.bilstm[0].fwd, dx_f0);
    lstm_backward(p.bilstm[0].bwd, trace.lstm[0][1], dh_b0, grads.bilstm[0].bwd, dx_b0);

    // Scatter per-slot descriptor-embedding grads back into one matrix so the
    // descriptor MLP backward runs as a single set of matrix products.
    Eigen::MatrixXd dE(kDescEmbedDims, static_cast<Eigen::Index>(slots) * m);
    for (int t = 0; t < k; ++t) {
        const Eigen::MatrixXd d_step = dx_f0[t] + dx_b0[k - 1 - t];
        for (int j = 0; j < m; ++j)
            dE.col(static_cast<Eigen::Index>(j) * slots + t) =
                d_step.col(j).head(kDescEmbedDims);
    }
    for (int j = 0; j < m; ++j)
        dE.col(static_cast<Eigen::Index>(j) * slots + k) =
            d_cat.col(j).segment(kNeighborhoodDims, kDescEmbedDims);
    mlp_backward(p.descriptor_mlp, trace.desc_mlp, dE, grads.descriptor_mlp);
}

Eigen::MatrixXd embed_constellations(const EmbeddingModel& model,
                                     const std::vector<Constellation>& cs) {
    const int n = static_cast<int>(cs.size());
    if (n == 0) return Eigen::MatrixXd(kEmbeddingDims, 0);
    const int k = cs[0].k;
    for (const Constellation& c : cs)
        if (c.k != k) throw_data("shape-mismatch", "batch requires a uniform k");
    Eigen::MatrixXd out(kEmbeddingDims, n);
    constexpr int kChunk = 256;
    for (int lo = 0; lo < n; lo += kChunk) {
        const int len = std::min(kChunk, n - lo);
        Eigen::MatrixXd X(input_dims(k), len);
#pragma omp parallel for schedule(static)
        for (int j = 0; j < len; ++j)
            assemble_input_into(cs[lo + j], model.norm, X.col(j));
        out.middleCols(lo, len) = forward_batch(model, X, k, nullptr);
    }
    return out;
}

} // namespace scone
