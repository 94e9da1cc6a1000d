#include "scone/neuralnet.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>

#include "scone/error.hpp"

namespace scone {

namespace {

Eigen::ArrayXd sigmoid(const Eigen::ArrayXd& a) { return 1.0 / (1.0 + (-a).exp()); }

Eigen::VectorXd apply_activation(Activation act, const Eigen::VectorXd& z) {
    if (act == Activation::identity) return z;
    return z.unaryExpr([](double v) { return selu(v); });
}

Eigen::VectorXd activation_grad(Activation act, const Eigen::VectorXd& z) {
    if (act == Activation::identity) return Eigen::VectorXd::Ones(z.size());
    return z.unaryExpr([](double v) { return selu_grad(v); });
}

Eigen::VectorXd mlp_forward(const std::array<DenseLayer, 3>& layers, const Eigen::VectorXd& x,
                            MlpTrace* trace) {
    Eigen::VectorXd cur = x;
    for (int l = 0; l < 3; ++l) {
        const DenseLayer& layer = layers[l];
        if (cur.size() != layer.W.cols())
            throw_data("shape-mismatch", "dense layer expects " + std::to_string(layer.W.cols()) +
                                             " inputs, got " + std::to_string(cur.size()));
        Eigen::VectorXd z = layer.W * cur + layer.b;
        if (trace) {
            trace->layers[l].x = cur;
            trace->layers[l].z = z;
        }
        cur = apply_activation(layer.activation, z);
    }
    return cur;
}

// dL/d(mlp input), accumulating parameter grads. upstream is dL/d(mlp output).
Eigen::VectorXd mlp_backward(const std::array<DenseLayer, 3>& layers, const MlpTrace& trace,
                             const Eigen::VectorXd& upstream, std::array<DenseLayer, 3>& grads) {
    Eigen::VectorXd d = upstream;
    for (int l = 2; l >= 0; --l) {
        const Eigen::VectorXd dz =
            d.cwiseProduct(activation_grad(layers[l].activation, trace.layers[l].z));
        grads[l].W.noalias() += dz * trace.layers[l].x.transpose();
        grads[l].b += dz;
        d.noalias() = layers[l].W.transpose() * dz;
    }
    return d;
}

// One direction over xs (already in this direction's consumption order).
// Returns the final hidden state.
Eigen::VectorXd lstm_run(const LstmDirection& d, const std::vector<Eigen::VectorXd>& xs,
                         LstmDirTrace* trace) {
    const int hidden = static_cast<int>(d.b_i.size());
    const int steps = static_cast<int>(xs.size());
    Eigen::VectorXd h = Eigen::VectorXd::Zero(hidden);
    Eigen::VectorXd c = Eigen::VectorXd::Zero(hidden);
    if (trace) {
        trace->x.resize(steps);
        trace->i.resize(steps);
        trace->f.resize(steps);
        trace->g.resize(steps);
        trace->o.resize(steps);
        trace->c.resize(steps);
        trace->tanh_c.resize(steps);
        trace->h.resize(steps);
    }
    for (int s = 0; s < steps; ++s) {
        const Eigen::VectorXd& x = xs[s];
        if (x.size() != d.W_i.cols())
            throw_data("shape-mismatch", "lstm step expects " + std::to_string(d.W_i.cols()) +
                                             " inputs, got " + std::to_string(x.size()));
        const Eigen::ArrayXd ai = (d.W_i * x + d.U_i * h + d.b_i).array();
        const Eigen::ArrayXd af = (d.W_f * x + d.U_f * h + d.b_f).array();
        const Eigen::ArrayXd ag = (d.W_g * x + d.U_g * h + d.b_g).array();
        const Eigen::ArrayXd ao = (d.W_o * x + d.U_o * h + d.b_o).array();
        const Eigen::ArrayXd i = sigmoid(ai);
        const Eigen::ArrayXd f = sigmoid(af);
        const Eigen::ArrayXd g = ag.tanh();
        const Eigen::ArrayXd o = sigmoid(ao);
        c = (f * c.array() + i * g).matrix();
        const Eigen::ArrayXd tc = c.array().tanh();
        h = (o * tc).matrix();
        if (trace) {
            trace->x[s] = x;
            trace->i[s] = i.matrix();
            trace->f[s] = f.matrix();
            trace->g[s] = g.matrix();
            trace->o[s] = o.matrix();
            trace->c[s] = c;
            trace->tanh_c[s] = tc.matrix();
            trace->h[s] = h;
        }
    }
    return h;
}

// Backpropagation through time for one direction. dh_ext holds per-step
// upstream gradients w.r.t. this direction's hidden outputs (its own step
// order). Fills dx per step and accumulates parameter grads.
void lstm_backward(const LstmDirection& d, const LstmDirTrace& trace,
                   const std::vector<Eigen::VectorXd>& dh_ext, LstmDirection& grads,
                   std::vector<Eigen::VectorXd>& dx) {
    const int hidden = static_cast<int>(d.b_i.size());
    const int steps = static_cast<int>(trace.x.size());
    dx.resize(steps);
    Eigen::VectorXd dh_rec = Eigen::VectorXd::Zero(hidden);
    Eigen::VectorXd dc = Eigen::VectorXd::Zero(hidden);
    for (int s = steps - 1; s >= 0; --s) {
        const Eigen::ArrayXd i = trace.i[s].array();
        const Eigen::ArrayXd f = trace.f[s].array();
        const Eigen::ArrayXd g = trace.g[s].array();
        const Eigen::ArrayXd o = trace.o[s].array();
        const Eigen::ArrayXd tc = trace.tanh_c[s].array();
        const Eigen::ArrayXd c_prev =
            s > 0 ? trace.c[s - 1].array() : Eigen::ArrayXd::Zero(hidden).eval();
        const Eigen::VectorXd& h_prev =
            s > 0 ? trace.h[s - 1] : Eigen::VectorXd::Zero(hidden).eval();

        const Eigen::ArrayXd dh = dh_ext[s].array() + dh_rec.array();
        const Eigen::ArrayXd dc_total = dc.array() + dh * o * (1.0 - tc.square());
        const Eigen::ArrayXd da_o = dh * tc * o * (1.0 - o);
        const Eigen::ArrayXd da_f = dc_total * c_prev * f * (1.0 - f);
        const Eigen::ArrayXd da_i = dc_total * g * i * (1.0 - i);
        const Eigen::ArrayXd da_g = dc_total * i * (1.0 - g.square());

        const Eigen::VectorXd vi = da_i.matrix(), vf = da_f.matrix(), vg = da_g.matrix(),
                              vo = da_o.matrix();
        grads.W_i.noalias() += vi * trace.x[s].transpose();
        grads.W_f.noalias() += vf * trace.x[s].transpose();
        grads.W_g.noalias() += vg * trace.x[s].transpose();
        grads.W_o.noalias() += vo * trace.x[s].transpose();
        grads.U_i.noalias() += vi * h_prev.transpose();
        grads.U_f.noalias() += vf * h_prev.transpose();
        grads.U_g.noalias() += vg * h_prev.transpose();
        grads.U_o.noalias() += vo * h_prev.transpose();
        grads.b_i += vi;
        grads.b_f += vf;
        grads.b_g += vg;
        grads.b_o += vo;

        dx[s] = d.W_i.transpose() * vi + d.W_f.transpose() * vf + d.W_g.transpose() * vg +
                d.W_o.transpose() * vo;
        dh_rec = d.U_i.transpose() * vi + d.U_f.transpose() * vf + d.U_g.transpose() * vg +
                 d.U_o.transpose() * vo;
        dc = (dc_total * f).matrix();
    }
}

// Runs the bidirectional stack, caching into `lstm_traces` when given.
// Returns [layer-2 forward final | layer-2 backward final].
Eigen::VectorXd bilstm_run(const std::array<BiLstmLayer, 2>& stack,
                           const std::vector<Eigen::VectorXd>& seq,
                           std::array<std::array<LstmDirTrace, 2>, 2>* traces) {
    if (seq.empty()) throw_data("empty-sequence", "bilstm needs at least one step");
    const int steps = static_cast<int>(seq.size());

    std::vector<Eigen::VectorXd> reversed(seq.rbegin(), seq.rend());
    LstmDirTrace t0f, t0b;
    lstm_run(stack[0].fwd, seq, traces ? &(*traces)[0][0] : &t0f);
    lstm_run(stack[0].bwd, reversed, traces ? &(*traces)[0][1] : &t0b);
    const LstmDirTrace& f0 = traces ? (*traces)[0][0] : t0f;
    const LstmDirTrace& b0 = traces ? (*traces)[0][1] : t0b;

    // Per-step concatenation: position t pairs the forward state after
    // consuming steps 0..t with the backward state after consuming T-1..t.
    std::vector<Eigen::VectorXd> layer2_in(steps);
    for (int t = 0; t < steps; ++t) {
        Eigen::VectorXd y(2 * kLstmHidden);
        y.head(kLstmHidden) = f0.h[t];
        y.tail(kLstmHidden) = b0.h[steps - 1 - t];
        layer2_in[t] = std::move(y);
    }

    std::vector<Eigen::VectorXd> layer2_rev(layer2_in.rbegin(), layer2_in.rend());
    LstmDirTrace t1f, t1b;
    const Eigen::VectorXd hf =
        lstm_run(stack[1].fwd, layer2_in, traces ? &(*traces)[1][0] : &t1f);
    const Eigen::VectorXd hb =
        lstm_run(stack[1].bwd, layer2_rev, traces ? &(*traces)[1][1] : &t1b);

    Eigen::VectorXd out(2 * kLstmHidden);
    out.head(kLstmHidden) = hf;
    out.tail(kLstmHidden) = hb;
    return out;
}

} // namespace

Eigen::VectorXd dense_forward(const DenseLayer& layer, const Eigen::VectorXd& x) {
    if (x.size() != layer.W.cols())
        throw_data("shape-mismatch", "dense layer expects " + std::to_string(layer.W.cols()) +
                                         " inputs, got " + std::to_string(x.size()));
    return apply_activation(layer.activation, layer.W * x + layer.b);
}

Eigen::VectorXd bilstm_forward(const std::array<BiLstmLayer, 2>& stack,
                               const std::vector<Eigen::VectorXd>& seq) {
    return bilstm_run(stack, seq, nullptr);
}

Eigen::VectorXd forward_input(const EmbeddingModel& model, const Eigen::VectorXd& input,
                              int k, ForwardTrace* trace) {
    if (input.size() != input_dims(k))
        throw_data("shape-mismatch", "input length " + std::to_string(input.size()) +
                                         " does not match k=" + std::to_string(k));
    const ModelParams& p = model.params;

    MlpTrace central_trace;
    const Eigen::VectorXd central_embed =
        mlp_forward(p.descriptor_mlp, input.head(kDescriptorBits),
                    trace ? &central_trace : nullptr);

    std::vector<MlpTrace> neighbor_traces(trace ? k : 0);
    std::vector<Eigen::VectorXd> steps(k);
    for (int j = 0; j < k; ++j) {
        const int base = kCentralDims + kNeighborDims * j;
        const Eigen::VectorXd embed = mlp_forward(p.descriptor_mlp, input.segment(base, kDescriptorBits),
                                                  trace ? &neighbor_traces[j] : nullptr);
        Eigen::VectorXd step(kStepDims);
        step.head(kDescEmbedDims) = embed;
        step.tail(kGeometryDims) = input.segment(base + kDescriptorBits, kGeometryDims);
        steps[j] = std::move(step);
    }

    const Eigen::VectorXd bilstm_out =
        bilstm_run(p.bilstm, steps, trace ? &trace->lstm : nullptr);

    MlpTrace nn_trace;
    const Eigen::VectorXd neighborhood =
        mlp_forward(p.nn_head, bilstm_out, trace ? &nn_trace : nullptr);

    Eigen::VectorXd cat(kCentralCatDims);
    cat.head(kNeighborhoodDims) = neighborhood;
    cat.segment(kNeighborhoodDims, kDescEmbedDims) = central_embed;
    cat[kNeighborhoodDims + kDescEmbedDims] = input[kDescriptorBits];         // ln(scale)
    cat[kNeighborhoodDims + kDescEmbedDims + 1] = input[kDescriptorBits + 1]; // orientation

    MlpTrace final_trace;
    Eigen::VectorXd embedding = mlp_forward(p.final_head, cat, trace ? &final_trace : nullptr);

    if (trace) {
        trace->valid = true;
        trace->k = k;
        trace->input = input;
        trace->central_mlp = std::move(central_trace);
        trace->neighbor_mlp = std::move(neighbor_traces);
        trace->bilstm_out = bilstm_out;
        trace->nn_head = std::move(nn_trace);
        trace->final_head = std::move(final_trace);
        trace->embedding = embedding;
    }
    return embedding;
}

Eigen::VectorXd embed_constellation(const EmbeddingModel& model, const Constellation& c) {
    return forward_input(model, assemble_input(c, model.norm), c.k, nullptr);
}

Gradients zero_like(const ModelParams& params) {
    Gradients g = params;
    for_each_tensor(g, [](const std::string&, auto& t) { t.setZero(); });
    return g;
}

void backward_input(const EmbeddingModel& model, const ForwardTrace& trace,
                    const Eigen::VectorXd& upstream, Gradients& grads) {
    if (!trace.valid) throw_data("missing-cache", "backward requires a forward trace");
    if (upstream.size() != kEmbeddingDims)
        throw_data("shape-mismatch", "upstream must have 48 entries");
    const ModelParams& p = model.params;
    const int k = trace.k;

    const Eigen::VectorXd d_cat =
        mlp_backward(p.final_head, trace.final_head, upstream, grads.final_head);
    const Eigen::VectorXd d_neighborhood = d_cat.head(kNeighborhoodDims);
    const Eigen::VectorXd d_central_embed = d_cat.segment(kNeighborhoodDims, kDescEmbedDims);

    const Eigen::VectorXd d_bilstm_out =
        mlp_backward(p.nn_head, trace.nn_head, d_neighborhood, grads.nn_head);

    // Layer 2 BPTT: gradient arrives only at each direction's final step.
    const LstmDirTrace& f1 = trace.lstm[1][0];
    const LstmDirTrace& b1 = trace.lstm[1][1];
    std::vector<Eigen::VectorXd> dh_f1(k, Eigen::VectorXd::Zero(kLstmHidden));
    std::vector<Eigen::VectorXd> dh_b1(k, Eigen::VectorXd::Zero(kLstmHidden));
    dh_f1[k - 1] = d_bilstm_out.head(kLstmHidden);
    dh_b1[k - 1] = d_bilstm_out.tail(kLstmHidden);
    std::vector<Eigen::VectorXd> dx_f1, dx_b1;
    lstm_backward(p.bilstm[1].fwd, f1, dh_f1, grads.bilstm[1].fwd, dx_f1);
    lstm_backward(p.bilstm[1].bwd, b1, dh_b1, grads.bilstm[1].bwd, dx_b1);

    // Combine layer-2 input grads per original position t. The backward
    // direction's step s saw position k-1-s, halves are [fwd | bwd].
    const LstmDirTrace& f0 = trace.lstm[0][0];
    const LstmDirTrace& b0 = trace.lstm[0][1];
    std::vector<Eigen::VectorXd> dh_f0(k), dh_b0(k);
    for (int t = 0; t < k; ++t) {
        const Eigen::VectorXd d_y = dx_f1[t] + dx_b1[k - 1 - t];
        dh_f0[t] = d_y.head(kLstmHidden);
        dh_b0[k - 1 - t] = d_y.tail(kLstmHidden);
    }
    std::vector<Eigen::VectorXd> dx_f0, dx_b0;
    lstm_backward(p.bilstm[0].fwd, f0, dh_f0, grads.bilstm[0].fwd, dx_f0);
    lstm_backward(p.bilstm[0].bwd, b0, dh_b0, grads.bilstm[0].bwd, dx_b0);

    // Neighbour descriptor embeddings feed the first 32 rows of each step.
    for (int t = 0; t < k; ++t) {
        const Eigen::VectorXd d_step = dx_f0[t] + dx_b0[k - 1 - t];
        mlp_backward(p.descriptor_mlp, trace.neighbor_mlp[t], d_step.head(kDescEmbedDims),
                     grads.descriptor_mlp);
    }
    mlp_backward(p.descriptor_mlp, trace.central_mlp, d_central_embed, grads.descriptor_mlp);
}

namespace {

DenseLayer make_dense(Rng& rng, int out, int in, Activation act) {
    DenseLayer layer;
    layer.W.resize(out, in);
    const double std = 1.0 / std::sqrt(static_cast<double>(in));
    for (int r = 0; r < out; ++r)
        for (int c = 0; c < in; ++c) layer.W(r, c) = std * rng.normal();
    layer.b = Eigen::VectorXd::Zero(out);
    layer.activation = act;
    return layer;
}

LstmDirection make_lstm_dir(Rng& rng, int input, int hidden) {
    LstmDirection d;
    auto fill = [&rng](Eigen::MatrixXd& m, int rows, int cols) {
        m.resize(rows, cols);
        const double std = 1.0 / std::sqrt(static_cast<double>(cols));
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) m(r, c) = std * rng.normal();
    };
    fill(d.W_i, hidden, input);
    fill(d.W_f, hidden, input);
    fill(d.W_g, hidden, input);
    fill(d.W_o, hidden, input);
    fill(d.U_i, hidden, hidden);
    fill(d.U_f, hidden, hidden);
    fill(d.U_g, hidden, hidden);
    fill(d.U_o, hidden, hidden);
    d.b_i = Eigen::VectorXd::Zero(hidden);
    d.b_f = Eigen::VectorXd::Ones(hidden); // forget gate open at start
    d.b_g = Eigen::VectorXd::Zero(hidden);
    d.b_o = Eigen::VectorXd::Zero(hidden);
    return d;
}

} // namespace

EmbeddingModel init_model(uint64_t seed) {
    Rng rng = Rng(seed).derive("model-init");
    EmbeddingModel m;
    m.params.descriptor_mlp = {make_dense(rng, 512, kDescriptorBits, Activation::selu),
                               make_dense(rng, 256, 512, Activation::selu),
                               make_dense(rng, kDescEmbedDims, 256, Activation::selu)};
    m.params.bilstm[0] = {make_lstm_dir(rng, kStepDims, kLstmHidden),
                          make_lstm_dir(rng, kStepDims, kLstmHidden)};
    m.params.bilstm[1] = {make_lstm_dir(rng, kBiLstmOut, kLstmHidden),
                          make_lstm_dir(rng, kBiLstmOut, kLstmHidden)};
    m.params.nn_head = {make_dense(rng, 64, kBiLstmOut, Activation::selu),
                        make_dense(rng, 64, 64, Activation::selu),
                        make_dense(rng, kNeighborhoodDims, 64, Activation::selu)};
    m.params.final_head = {make_dense(rng, 64, kCentralCatDims, Activation::selu),
                           make_dense(rng, 64, 64, Activation::selu),
                           make_dense(rng, kEmbeddingDims, 64, Activation::identity)};
    return m;
}

namespace {

constexpr char kModelMagic[6] = {'S', 'C', 'O', 'N', 'E', '1'};

void write_u32(std::ofstream& os, uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

void write_entry(std::ofstream& os, const std::string& name, const double* data, uint32_t rows,
                 uint32_t cols) {
    write_u32(os, static_cast<uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(os, rows);
    write_u32(os, cols);
    // data is column-major (Eigen default); the file stores row-major.
    for (uint32_t r = 0; r < rows; ++r)
        for (uint32_t c = 0; c < cols; ++c)
            os.write(reinterpret_cast<const char*>(&data[static_cast<size_t>(c) * rows + r]),
                     sizeof(double));
}

bool read_u32(std::ifstream& is, uint32_t& v) {
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    return is.gcount() == sizeof(v);
}

} // namespace

void save_model(const EmbeddingModel& model, const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw_data("corrupt-file", "cannot open " + path + " for writing");
    os.write(kModelMagic, sizeof(kModelMagic));
    for_each_tensor(const_cast<ModelParams&>(model.params),
                    [&os](const std::string& name, auto& t) {
                        write_entry(os, name, t.data(), static_cast<uint32_t>(t.rows()),
                                    static_cast<uint32_t>(t.cols()));
                    });
    auto scalar = [&os](const std::string& name, double v) { write_entry(os, name, &v, 1, 1); };
    scalar("norm.orientation_divisor", model.norm.orientation_divisor);
    scalar("norm.min_radius", model.norm.min_radius);
    scalar("meta.trained_k", static_cast<double>(model.trained_k));
    if (!os) throw_data("corrupt-file", "write failed for " + path);
}

EmbeddingModel load_model(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw_data("corrupt-file", "cannot open " + path);
    char magic[6];
    is.read(magic, sizeof(magic));
    if (is.gcount() != sizeof(magic)) throw_data("corrupt-file", "file too short for magic");
    if (std::memcmp(magic, kModelMagic, sizeof(magic)) != 0) {
        if (std::memcmp(magic, kModelMagic, 5) == 0)
            throw_data("version-mismatch",
                       std::string("unsupported model version '") + magic[5] + "'");
        throw_data("corrupt-file", "bad magic");
    }

    std::map<std::string, Eigen::MatrixXd> entries;
    for (;;) {
        uint32_t name_len;
        if (!read_u32(is, name_len)) {
            if (is.eof() && is.gcount() == 0) break; // clean end of file
            throw_data("corrupt-file", "truncated entry header");
        }
        if (name_len == 0 || name_len > 4096) throw_data("corrupt-file", "implausible name length");
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        uint32_t rows, cols;
        if (is.gcount() != name_len || !read_u32(is, rows) || !read_u32(is, cols))
            throw_data("corrupt-file", "truncated entry header");
        if (rows == 0 || cols == 0 || static_cast<uint64_t>(rows) * cols > (1u << 26))
            throw_data("corrupt-file", "implausible tensor shape");
        Eigen::MatrixXd m(rows, cols);
        for (uint32_t r = 0; r < rows; ++r)
            for (uint32_t c = 0; c < cols; ++c) {
                double v;
                is.read(reinterpret_cast<char*>(&v), sizeof(v));
                if (is.gcount() != sizeof(v)) throw_data("corrupt-file", "truncated tensor data");
                m(r, c) = v;
            }
        if (!entries.emplace(std::move(name), std::move(m)).second)
            throw_data("corrupt-file", "duplicate tensor name");
    }

    EmbeddingModel model = init_model(0); // shapes and activations; values replaced below
    size_t used = 0;
    for_each_tensor(model.params, [&entries, &used](const std::string& name, auto& t) {
        auto it = entries.find(name);
        if (it == entries.end()) throw_data("corrupt-file", "missing tensor " + name);
        if (it->second.rows() != t.rows() || it->second.cols() != t.cols())
            throw_data("corrupt-file", "tensor " + name + " has wrong shape");
        t = it->second;
        ++used;
    });
    auto scalar = [&entries, &used](const std::string& name) {
        auto it = entries.find(name);
        if (it == entries.end()) throw_data("corrupt-file", "missing scalar " + name);
        if (it->second.size() != 1) throw_data("corrupt-file", name + " is not a scalar");
        ++used;
        return it->second(0, 0);
    };
    model.norm.orientation_divisor = scalar("norm.orientation_divisor");
    model.norm.min_radius = scalar("norm.min_radius");
    model.trained_k = static_cast<int>(scalar("meta.trained_k"));
    if (used != entries.size()) throw_data("corrupt-file", "unexpected extra tensors");
    return model;
}

} // namespace scone
