#include "scone/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include "scone/config.hpp"
#include "scone/error.hpp"
#include "scone/matching.hpp"
#include "scone/neuralnet_batch.hpp"

namespace scone {

TrainConfig load_train_config(const std::string& path) {
    const ConfigMap cfg = ConfigMap::parse_file(path);
    cfg.require_known_keys({"margin", "batch_size", "pos_fraction", "learning_rate", "epochs",
                            "steps_per_epoch", "seed", "k"});
    TrainConfig c;
    c.margin = cfg.get_double("margin", c.margin);
    c.batch_size = cfg.get_int("batch_size", c.batch_size);
    c.pos_fraction = cfg.get_double("pos_fraction", c.pos_fraction);
    c.learning_rate = cfg.get_double("learning_rate", c.learning_rate);
    c.epochs = cfg.get_int("epochs", c.epochs);
    c.steps_per_epoch = cfg.get_int("steps_per_epoch", c.steps_per_epoch);
    c.seed = cfg.get_u64("seed", c.seed);
    c.k = cfg.get_int("k", c.k);
    return c;
}

namespace {

void validate_config(const TrainConfig& c) {
    if (c.margin <= 0) throw_data("parse", "margin must be positive");
    if (c.batch_size < 1) throw_data("parse", "batch_size must be at least 1");
    if (c.pos_fraction <= 0 || c.pos_fraction >= 1)
        throw_data("parse", "pos_fraction must be in (0, 1)");
    if (c.learning_rate < 0) throw_data("parse", "learning_rate must be non-negative");
    if (c.epochs < 1) throw_data("parse", "epochs must be at least 1");
    if (c.steps_per_epoch < 1) throw_data("parse", "steps_per_epoch must be at least 1");
    if (c.k < 1) throw_data("parse", "k must be at least 1");
}

} // namespace

void write_history_csv(const TrainHistory& history, const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw_data("corrupt-file", "cannot open " + path + " for writing");
    os << "epoch,mean_loss,mean_d_sim,mean_d_dissim,val_precision\n";
    char buf[256];
    for (size_t e = 0; e < history.epochs.size(); ++e) {
        const EpochStats& s = history.epochs[e];
        std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g,%.17g\n", e, s.mean_loss,
                      s.mean_d_sim, s.mean_d_dissim, s.val_precision);
        os << buf;
    }
}

double embedding_distance(const Eigen::VectorXd& e1, const Eigen::VectorXd& e2) {
    return (e1 - e2).norm();
}

LossGrad contrastive_loss(const Eigen::VectorXd& e1, const Eigen::VectorXd& e2, int label,
                          double margin) {
    LossGrad out;
    const Eigen::VectorXd diff = e1 - e2;
    const double d = diff.norm();
    if (label == 0) {
        out.loss = 0.5 * d * d;
        out.grad_e1 = diff;
        out.grad_e2 = -diff;
        return out;
    }
    const double hinge = margin - d;
    if (hinge <= 0 || d == 0.0) {
        // Inactive hinge, or the undefined direction at d = 0 (zero
        // subgradient by convention).
        out.loss = hinge <= 0 ? 0.0 : 0.5 * hinge * hinge;
        out.grad_e1 = Eigen::VectorXd::Zero(e1.size());
        out.grad_e2 = Eigen::VectorXd::Zero(e2.size());
        return out;
    }
    out.loss = 0.5 * hinge * hinge;
    out.grad_e1 = (-hinge / d) * diff;
    out.grad_e2 = (hinge / d) * diff;
    return out;
}

namespace {

// Eligible keypoints of a dataset, with constellations prebuilt once.
struct PairPool {
    std::vector<Constellation> constellations;
    std::vector<std::optional<int64_t>> landmark_ids;
    std::vector<int> frame_of;
    // landmark id -> indices into the vectors above, for ids seen in >= 2
    // distinct frames.
    std::vector<std::vector<int>> landmark_obs;

    static PairPool build(const Dataset& dataset, int k) {
        PairPool pool;
        std::map<int64_t, std::vector<int>> by_landmark;
        for (int fi = 0; fi < static_cast<int>(dataset.frames.size()); ++fi) {
            const Keyframe& frame = dataset.frames[fi];
            if (static_cast<int>(frame.keypoints.size()) <= k) continue;
            const std::vector<Constellation> cs = build_all_constellations(frame, k);
            for (int ki = 0; ki < static_cast<int>(cs.size()); ++ki) {
                const int idx = static_cast<int>(pool.constellations.size());
                pool.constellations.push_back(cs[ki]);
                pool.landmark_ids.push_back(frame.keypoints[ki].landmark_id);
                pool.frame_of.push_back(fi);
                if (frame.keypoints[ki].landmark_id)
                    by_landmark[*frame.keypoints[ki].landmark_id].push_back(idx);
            }
        }
        for (auto& [id, obs] : by_landmark) {
            bool multi_frame = false;
            for (int i : obs)
                if (pool.frame_of[i] != pool.frame_of[obs[0]]) {
                    multi_frame = true;
                    break;
                }
            if (multi_frame) pool.landmark_obs.push_back(obs);
        }
        return pool;
    }

    std::pair<int, int> sample_similar(Rng& rng) const {
        const auto& obs = landmark_obs[rng.uniform_int(landmark_obs.size())];
        const int a = obs[rng.uniform_int(obs.size())];
        std::vector<int> others;
        others.reserve(obs.size());
        for (int i : obs)
            if (frame_of[i] != frame_of[a]) others.push_back(i);
        const int b = others[rng.uniform_int(others.size())];
        return {a, b};
    }

    std::pair<int, int> sample_dissimilar(Rng& rng) const {
        const size_t n = constellations.size();
        for (;;) {
            const int a = static_cast<int>(rng.uniform_int(n));
            const int b = static_cast<int>(rng.uniform_int(n));
            if (a == b) continue;
            if (landmark_ids[a] && landmark_ids[b] && *landmark_ids[a] == *landmark_ids[b])
                continue;
            return {a, b};
        }
    }

    std::vector<ConstellationPair> sample_batch(const TrainConfig& config, Rng& rng) const {
        const int n_pos = static_cast<int>(std::ceil(config.pos_fraction * config.batch_size));
        std::vector<ConstellationPair> batch;
        batch.reserve(config.batch_size);
        for (int i = 0; i < config.batch_size; ++i) {
            const bool positive = i < n_pos;
            const auto [a, b] = positive ? sample_similar(rng) : sample_dissimilar(rng);
            batch.push_back({constellations[a], constellations[b], positive ? 0 : 1});
        }
        return batch;
    }

    void require_usable(const TrainConfig& config) const {
        if (landmark_obs.empty())
            throw_data("insufficient-data",
                       "no landmark is observed in two distinct frames (with > k keypoints)");
        if (constellations.size() < 2)
            throw_data("insufficient-data", "fewer than 2 eligible keypoints");
        (void)config;
    }
};

struct AdamState {
    Gradients m, v;
    int t = 0;
};

void adam_step(ModelParams& params, const Gradients& grads, AdamState& state, double lr) {
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    ++state.t;
    const double bc1 = 1.0 - std::pow(beta1, state.t);
    const double bc2 = 1.0 - std::pow(beta2, state.t);

    // Walk the three isomorphic parameter sets in lockstep.
    std::vector<double*> p_ptrs, m_ptrs, v_ptrs;
    std::vector<const double*> g_ptrs;
    std::vector<long> sizes;
    for_each_tensor(params, [&](const std::string&, auto& t) {
        p_ptrs.push_back(t.data());
        sizes.push_back(t.size());
    });
    for_each_tensor(const_cast<Gradients&>(grads),
                    [&](const std::string&, auto& t) { g_ptrs.push_back(t.data()); });
    for_each_tensor(state.m, [&](const std::string&, auto& t) { m_ptrs.push_back(t.data()); });
    for_each_tensor(state.v, [&](const std::string&, auto& t) { v_ptrs.push_back(t.data()); });

    for (size_t ti = 0; ti < p_ptrs.size(); ++ti) {
        double* p = p_ptrs[ti];
        const double* g = g_ptrs[ti];
        double* m = m_ptrs[ti];
        double* v = v_ptrs[ti];
        for (long i = 0; i < sizes[ti]; ++i) {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

} // namespace

std::vector<ConstellationPair> sample_pairs(const Dataset& dataset, const TrainConfig& config,
                                            Rng& rng) {
    validate_config(config);
    const PairPool pool = PairPool::build(dataset, config.k);
    pool.require_usable(config);
    return pool.sample_batch(config, rng);
}

std::pair<EmbeddingModel, TrainHistory> train(const Dataset& train_set, const Dataset& val_set,
                                              const TrainConfig& config) {
    validate_config(config);
    const PairPool pool = PairPool::build(train_set, config.k);
    pool.require_usable(config);

    const EvalPopulation val_pop = collect_linked_population(val_set, config.k);
    if (val_pop.constellations.size() < 2)
        throw_data("insufficient-data", "validation set has fewer than 2 linked keypoints");
    const int n_val_samples =
        std::min<int>(500, static_cast<int>(val_pop.constellations.size()));

    EmbeddingModel model = init_model(config.seed);
    model.trained_k = config.k;
    AdamState adam{zero_like(model.params), zero_like(model.params), 0};
    Rng pair_rng = Rng(config.seed).derive("pairs");
    Rng val_rng = Rng(config.seed).derive("val-precision");

    TrainHistory history;
    ModelParams best_params = model.params;
    const int dims = input_dims(config.k);

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        double loss_sum = 0.0;
        double d_sim_sum = 0.0, d_dissim_sum = 0.0;
        long n_sim = 0, n_dissim = 0;

        for (int step = 0; step < config.steps_per_epoch; ++step) {
            const std::vector<ConstellationPair> batch = pool.sample_batch(config, pair_rng);
            const int b = static_cast<int>(batch.size());
            Eigen::MatrixXd X(dims, 2 * b);
            for (int p = 0; p < b; ++p) {
                assemble_input_into(batch[p].x1, model.norm, X.col(2 * p));
                assemble_input_into(batch[p].x2, model.norm, X.col(2 * p + 1));
            }
            BatchTrace trace;
            const Eigen::MatrixXd E = forward_batch(model, X, config.k, &trace);

            Eigen::MatrixXd dE(kEmbeddingDims, 2 * b);
            double batch_loss = 0.0;
            for (int p = 0; p < b; ++p) {
                const LossGrad lg =
                    contrastive_loss(E.col(2 * p), E.col(2 * p + 1), batch[p].label, config.margin);
                batch_loss += lg.loss;
                dE.col(2 * p) = lg.grad_e1 / b;
                dE.col(2 * p + 1) = lg.grad_e2 / b;
                const double d = embedding_distance(E.col(2 * p), E.col(2 * p + 1));
                if (batch[p].label == 0) {
                    d_sim_sum += d;
                    ++n_sim;
                } else {
                    d_dissim_sum += d;
                    ++n_dissim;
                }
            }
            batch_loss /= b;
            if (!std::isfinite(batch_loss))
                throw_numeric("divergence", "training loss became non-finite at epoch " +
                                                std::to_string(epoch));
            loss_sum += batch_loss;

            Gradients grads = zero_like(model.params);
            backward_batch(model, trace, dE, grads);
            adam_step(model.params, grads, adam, config.learning_rate);
        }

        EpochStats stats;
        stats.mean_loss = loss_sum / config.steps_per_epoch;
        stats.mean_d_sim = n_sim > 0 ? d_sim_sum / n_sim : 0.0;
        stats.mean_d_dissim = n_dissim > 0 ? d_dissim_sum / n_dissim : 0.0;

        const Eigen::MatrixXd val_embeds = embed_constellations(model, val_pop.constellations);
        const PrecisionResult pr =
            precision_from_embeddings(val_embeds, val_pop.landmark_ids, n_val_samples, val_rng);
        stats.val_precision = pr.precision;
        history.epochs.push_back(stats);

        if (history.best_epoch < 0 || stats.val_precision > history.best_val_precision) {
            history.best_epoch = epoch;
            history.best_val_precision = stats.val_precision;
            best_params = model.params;
        }
    }

    model.params = std::move(best_params);
    return {std::move(model), std::move(history)};
}

} // namespace scone
