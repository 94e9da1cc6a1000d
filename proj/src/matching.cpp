#include "scone/matching.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "scone/error.hpp"
#include "scone/geometry.hpp"

namespace scone {

namespace {

// Nearest and second-nearest scan with (distance, index) tie ordering.
template <class DistFn>
Match scan_nearest(int query_index, int n_database, DistFn&& dist) {
    Match m;
    m.query_index = query_index;
    double best = std::numeric_limits<double>::infinity();
    double second = std::numeric_limits<double>::infinity();
    int best_idx = -1;
    for (int j = 0; j < n_database; ++j) {
        const double d = dist(j);
        if (d < best) {
            second = best;
            best = d;
            best_idx = j;
        } else if (d < second) {
            second = d;
        }
    }
    m.target_index = best_idx;
    m.distance = best;
    m.second_distance = second;
    return m;
}

void check_database(size_t n) {
    if (n < 2)
        throw_data("empty-database",
                   "nearest-neighbour matching needs a database of at least 2 entries");
}

} // namespace

namespace ref {

std::vector<Match> nn_match(const std::vector<Eigen::VectorXd>& queries,
                            const std::vector<Eigen::VectorXd>& database) {
    check_database(database.size());
    std::vector<Match> out(queries.size());
    for (size_t q = 0; q < queries.size(); ++q)
        out[q] = scan_nearest(static_cast<int>(q), static_cast<int>(database.size()),
                              [&](int j) { return (queries[q] - database[j]).norm(); });
    return out;
}

std::vector<Match> nn_match(const std::vector<BinaryDescriptor>& queries,
                            const std::vector<BinaryDescriptor>& database) {
    check_database(database.size());
    std::vector<Match> out(queries.size());
    for (size_t q = 0; q < queries.size(); ++q)
        out[q] = scan_nearest(
            static_cast<int>(q), static_cast<int>(database.size()),
            [&](int j) { return static_cast<double>(hamming_distance(queries[q], database[j])); });
    return out;
}

} // namespace ref

std::vector<Match> nn_match(const std::vector<Eigen::VectorXd>& queries,
                            const std::vector<Eigen::VectorXd>& database) {
    check_database(database.size());
    const int nq = static_cast<int>(queries.size());
    std::vector<Match> out(nq);
#pragma omp parallel for schedule(static)
    for (int q = 0; q < nq; ++q)
        out[q] = scan_nearest(q, static_cast<int>(database.size()),
                              [&](int j) { return (queries[q] - database[j]).norm(); });
    return out;
}

std::vector<Match> nn_match(const std::vector<BinaryDescriptor>& queries,
                            const std::vector<BinaryDescriptor>& database) {
    check_database(database.size());
    const int nq = static_cast<int>(queries.size());
    std::vector<Match> out(nq);
#pragma omp parallel for schedule(static)
    for (int q = 0; q < nq; ++q)
        out[q] = scan_nearest(
            q, static_cast<int>(database.size()),
            [&](int j) { return static_cast<double>(hamming_distance(queries[q], database[j])); });
    return out;
}

std::vector<Match> ratio_test(const std::vector<Match>& matches, double threshold) {
    std::vector<Match> out;
    out.reserve(matches.size());
    for (const Match& m : matches)
        if (m.distance < threshold * m.second_distance) out.push_back(m);
    return out;
}

EvalPopulation collect_linked_population(const Dataset& dataset, int k) {
    EvalPopulation pop;
    for (int fi = 0; fi < static_cast<int>(dataset.frames.size()); ++fi) {
        const Keyframe& frame = dataset.frames[fi];
        if (static_cast<int>(frame.keypoints.size()) <= k) continue;
        const std::vector<Constellation> cs = build_all_constellations(frame, k);
        for (int ki = 0; ki < static_cast<int>(cs.size()); ++ki) {
            if (!frame.keypoints[ki].landmark_id) continue;
            pop.constellations.push_back(cs[ki]);
            pop.descriptors.push_back(frame.keypoints[ki].descriptor);
            pop.landmark_ids.push_back(*frame.keypoints[ki].landmark_id);
            pop.origin.emplace_back(fi, ki);
        }
    }
    return pop;
}

namespace {

// Sample without replacement via partial Fisher-Yates.
std::vector<int> sample_indices(int population, int n_samples, Rng& rng) {
    std::vector<int> idx(population);
    for (int i = 0; i < population; ++i) idx[i] = i;
    for (int i = 0; i < n_samples; ++i) {
        const int j = i + static_cast<int>(rng.uniform_int(population - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(n_samples);
    return idx;
}

template <class DistFn>
PrecisionResult precision_core(int population, const std::vector<int64_t>& landmark_ids,
                               int n_samples, Rng& rng, DistFn&& dist) {
    if (population < 2)
        throw_data("insufficient-data", "precision needs at least 2 linked keypoints");
    if (n_samples < 1 || n_samples > population)
        throw_data("insufficient-data", "cannot sample " + std::to_string(n_samples) +
                                            " of " + std::to_string(population) + " embeddings");
    const std::vector<int> samples = sample_indices(population, n_samples, rng);
    std::vector<uint8_t> correct(n_samples, 0);
#pragma omp parallel for schedule(static)
    for (int s = 0; s < n_samples; ++s) {
        const int q = samples[s];
        double best = std::numeric_limits<double>::infinity();
        int best_idx = -1;
        for (int j = 0; j < population; ++j) {
            if (j == q) continue; // a query never matches itself
            const double d = dist(q, j);
            if (d < best) {
                best = d;
                best_idx = j;
            }
        }
        correct[s] = landmark_ids[best_idx] == landmark_ids[q] ? 1 : 0;
    }
    PrecisionResult out;
    out.n_sampled = n_samples;
    for (uint8_t c : correct) out.n_correct += c;
    out.precision = static_cast<double>(out.n_correct) / n_samples;
    return out;
}

} // namespace

PrecisionResult precision_from_embeddings(const Eigen::MatrixXd& embeddings,
                                          const std::vector<int64_t>& landmark_ids,
                                          int n_samples, Rng& rng) {
    const int n = static_cast<int>(embeddings.cols());
    if (n != static_cast<int>(landmark_ids.size()))
        throw_data("shape-mismatch", "one landmark id per embedding required");
    return precision_core(n, landmark_ids, n_samples, rng, [&](int q, int j) {
        return (embeddings.col(q) - embeddings.col(j)).squaredNorm();
    });
}

PrecisionResult precision_from_descriptors(const std::vector<BinaryDescriptor>& descriptors,
                                           const std::vector<int64_t>& landmark_ids,
                                           int n_samples, Rng& rng) {
    const int n = static_cast<int>(descriptors.size());
    if (n != static_cast<int>(landmark_ids.size()))
        throw_data("shape-mismatch", "one landmark id per descriptor required");
    return precision_core(n, landmark_ids, n_samples, rng, [&](int q, int j) {
        return static_cast<double>(hamming_distance(descriptors[q], descriptors[j]));
    });
}

PrecisionResult precision_eval(const EmbeddingModel& model, const Dataset& dataset, int k,
                               int n_samples, Rng& rng) {
    const EvalPopulation pop = collect_linked_population(dataset, k);
    if (pop.constellations.size() < 2)
        throw_data("insufficient-data", "dataset has fewer than 2 linked keypoints");
    const Eigen::MatrixXd embeds = embed_constellations(model, pop.constellations);
    return precision_from_embeddings(embeds, pop.landmark_ids, n_samples, rng);
}

PrecisionResult hamming_precision_eval(const Dataset& dataset, int k, int n_samples, Rng& rng) {
    const EvalPopulation pop = collect_linked_population(dataset, k);
    if (pop.descriptors.size() < 2)
        throw_data("insufficient-data", "dataset has fewer than 2 linked keypoints");
    return precision_from_descriptors(pop.descriptors, pop.landmark_ids, n_samples, rng);
}

std::vector<SweepRow> sweep_k(const Dataset& train_set, const Dataset& val_set,
                              const std::vector<int>& k_values, const TrainConfig& config) {
    if (k_values.empty()) throw_data("insufficient-data", "k_values must be non-empty");
    std::vector<SweepRow> rows;
    rows.reserve(k_values.size());
    for (size_t i = 0; i < k_values.size(); ++i) {
        TrainConfig per_k = config;
        per_k.k = k_values[i];
        per_k.seed = Rng(config.seed).derive("sweep-k", k_values[i]).seed();
        SweepRow row;
        row.k = k_values[i];
        try {
            const auto [model, history] = train(train_set, val_set, per_k);
            row.precision = history.best_val_precision;
        } catch (const Error&) {
            row.failed = true; // recorded, the sweep continues
        }
        rows.push_back(row);
    }
    return rows;
}

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw_data("corrupt-file", "cannot open " + path + " for writing");
    os << "k,precision\n";
    char buf[64];
    for (const SweepRow& row : rows) {
        if (row.failed) {
            os << row.k << ",failed\n";
        } else {
            std::snprintf(buf, sizeof(buf), "%d,%.17g\n", row.k, row.precision);
            os << buf;
        }
    }
}

void write_curve_csv(const std::vector<CurvePoint>& curve, const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw_data("corrupt-file", "cannot open " + path + " for writing");
    os << "angular_distance_rad,true_positives\n";
    char buf[64];
    for (const CurvePoint& p : curve) {
        std::snprintf(buf, sizeof(buf), "%.17g,%d\n", p.angular_distance, p.true_positives);
        os << buf;
    }
}

std::vector<CurvePoint> true_positive_curve(const Dataset& dataset, const EmbeddingModel* model,
                                            int reference_frame, const std::vector<int>& frames,
                                            MatchMode mode, double ratio_threshold,
                                            double epipolar_threshold_px) {
    const int n_frames = static_cast<int>(dataset.frames.size());
    auto frame_checked = [&](int fi) -> const Keyframe& {
        if (fi < 0 || fi >= n_frames)
            throw_data("insufficient-data", "frame index " + std::to_string(fi) + " out of range");
        const Keyframe& f = dataset.frames[fi];
        if (!f.pose) throw_data("missing-pose", "frame " + std::to_string(f.frame_id) +
                                                    " carries no ground-truth pose");
        return f;
    };
    if (!dataset.intrinsics)
        throw_data("insufficient-data", "dataset carries no intrinsics for the epipolar check");
    const CameraIntrinsics K = *dataset.intrinsics;
    const Keyframe& ref_frame = frame_checked(reference_frame);
    const int k = model ? model->trained_k : 0;

    // Feature sets; in embedding mode every keypoint of a large-enough frame
    // has a constellation, so feature index == keypoint index in both modes.
    auto embed_frame = [&](const Keyframe& f) {
        std::vector<Eigen::VectorXd> out;
        const std::vector<Constellation> cs = build_all_constellations(f, k);
        const Eigen::MatrixXd E = embed_constellations(*model, cs);
        out.reserve(cs.size());
        for (int i = 0; i < E.cols(); ++i) out.push_back(E.col(i));
        return out;
    };
    auto raw_frame = [&](const Keyframe& f) {
        std::vector<BinaryDescriptor> out;
        out.reserve(f.keypoints.size());
        for (const Keypoint& kp : f.keypoints) out.push_back(kp.descriptor);
        return out;
    };

    if (mode == MatchMode::scone && model == nullptr)
        throw_data("insufficient-data", "embedding mode requires a model");

    std::vector<Eigen::VectorXd> ref_embeds;
    std::vector<BinaryDescriptor> ref_descs;
    if (mode == MatchMode::scone)
        ref_embeds = embed_frame(ref_frame);
    else
        ref_descs = raw_frame(ref_frame);

    std::vector<CurvePoint> out;
    out.reserve(frames.size());
    for (int fi : frames) {
        const Keyframe& frame = frame_checked(fi);
        std::vector<Match> kept;
        if (mode == MatchMode::scone) {
            const auto q = embed_frame(frame);
            if (q.empty() || ref_embeds.size() < 2) {
                out.push_back({rotation_error(ref_frame.pose->R, frame.pose->R), 0});
                continue;
            }
            kept = ratio_test(nn_match(q, ref_embeds), ratio_threshold);
        } else {
            const auto q = raw_frame(frame);
            if (q.empty() || ref_descs.size() < 2) {
                out.push_back({rotation_error(ref_frame.pose->R, frame.pose->R), 0});
                continue;
            }
            kept = ratio_test(nn_match(q, ref_descs), ratio_threshold);
        }
        int tp = 0;
        for (const Match& m : kept) {
            const Keypoint& q_kp = frame.keypoints[m.query_index];
            const Keypoint& t_kp = ref_frame.keypoints[m.target_index];
            bool is_tp;
            if (q_kp.landmark_id && t_kp.landmark_id) {
                // Landmark agreement outranks the epipolar test; it is strict.
                is_tp = *q_kp.landmark_id == *t_kp.landmark_id;
            } else {
                is_tp = epipolar_verify({t_kp.x, t_kp.y}, {q_kp.x, q_kp.y}, *ref_frame.pose,
                                        *frame.pose, K, K, epipolar_threshold_px);
            }
            if (is_tp) ++tp;
        }
        out.push_back({rotation_error(ref_frame.pose->R, frame.pose->R), tp});
    }
    return out;
}

} // namespace scone
