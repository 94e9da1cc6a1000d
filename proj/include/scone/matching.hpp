#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "scone/neuralnet_batch.hpp"
#include "scone/training.hpp"

namespace scone {

struct Match {
    int query_index = -1;
    int target_index = -1;
    double distance = 0.0;
    double second_distance = 0.0; // distance to the second-nearest entry
};

/// Brute-force nearest and second-nearest neighbour per query, ties broken by
/// lower database index. Parallel over queries; the serial reference lives in
/// scone::ref. Throws "empty-database" when the database has fewer than two
/// entries.
std::vector<Match> nn_match(const std::vector<Eigen::VectorXd>& queries,
                            const std::vector<Eigen::VectorXd>& database);
std::vector<Match> nn_match(const std::vector<BinaryDescriptor>& queries,
                            const std::vector<BinaryDescriptor>& database);

namespace ref {
std::vector<Match> nn_match(const std::vector<Eigen::VectorXd>& queries,
                            const std::vector<Eigen::VectorXd>& database);
std::vector<Match> nn_match(const std::vector<BinaryDescriptor>& queries,
                            const std::vector<BinaryDescriptor>& database);
} // namespace ref

/// Keeps a match iff distance < threshold * second_distance. Order preserved.
std::vector<Match> ratio_test(const std::vector<Match>& matches, double threshold);

struct PrecisionResult {
    double precision = 0.0;
    int n_sampled = 0;
    int n_correct = 0;
};

/// The landmark-linked keypoints of every frame with more than k keypoints,
/// with their constellations; the population precision is measured over.
struct EvalPopulation {
    std::vector<Constellation> constellations;
    std::vector<BinaryDescriptor> descriptors; // central descriptors
    std::vector<int64_t> landmark_ids;
    std::vector<std::pair<int, int>> origin; // (frame index, keypoint index)
};

EvalPopulation collect_linked_population(const Dataset& dataset, int k);

/// Nearest-neighbour search precision: samples n_samples population members
/// without replacement, finds each one's nearest other member, and counts a
/// hit when the landmarks agree.
PrecisionResult precision_from_embeddings(const Eigen::MatrixXd& embeddings,
                                          const std::vector<int64_t>& landmark_ids,
                                          int n_samples, Rng& rng);
PrecisionResult precision_from_descriptors(const std::vector<BinaryDescriptor>& descriptors,
                                           const std::vector<int64_t>& landmark_ids,
                                           int n_samples, Rng& rng);

/// Embeds the linked population of the dataset and measures precision.
PrecisionResult precision_eval(const EmbeddingModel& model, const Dataset& dataset, int k,
                               int n_samples, Rng& rng);

/// Raw-descriptor (Hamming) baseline over the same population.
PrecisionResult hamming_precision_eval(const Dataset& dataset, int k, int n_samples, Rng& rng);

struct SweepRow {
    int k = 0;
    double precision = 0.0;
    bool failed = false;
};

/// Trains one model per k (per-k derived seeds) and records the best
/// validation precision. A failed run marks its row instead of aborting.
std::vector<SweepRow> sweep_k(const Dataset& train_set, const Dataset& val_set,
                              const std::vector<int>& k_values, const TrainConfig& config);

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::string& path);

enum class MatchMode { raw, scone };

struct CurvePoint {
    double angular_distance = 0.0;
    int true_positives = 0;
};

/// Matches each listed frame against the reference frame (nn_match +
/// ratio_test) and counts true positives: landmark agreement when both
/// endpoints are linked, the ground-truth epipolar check otherwise.
/// model may be null in raw mode.
std::vector<CurvePoint> true_positive_curve(const Dataset& dataset, const EmbeddingModel* model,
                                            int reference_frame, const std::vector<int>& frames,
                                            MatchMode mode, double ratio_threshold,
                                            double epipolar_threshold_px);

/// CSV with header "angular_distance_rad,true_positives".
void write_curve_csv(const std::vector<CurvePoint>& curve, const std::string& path);

} // namespace scone
