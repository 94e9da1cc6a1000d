#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "scone/data_io.hpp"
#include "scone/datagen.hpp"
#include "scone/error.hpp"
#include "scone/geometry.hpp"
#include "scone/matching.hpp"
#include "scone/neuralnet.hpp"
#include "scone/neuralnet_batch.hpp"
#include "scone/training.hpp"
#include "scone/validate.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr const char* kToolVersion = "scone 0.1.0";

class StageTimer {
public:
    void start(const std::string& stage) {
        current_ = stage;
        t0_ = std::chrono::steady_clock::now();
    }
    void stop() {
        const auto t1 = std::chrono::steady_clock::now();
        timings_[current_] += std::chrono::duration<double, std::milli>(t1 - t0_).count();
    }
    const std::map<std::string, double>& timings() const { return timings_; }

private:
    std::string current_;
    std::chrono::steady_clock::time_point t0_;
    std::map<std::string, double> timings_;
};

// Every subcommand writes a manifest next to its primary output: resolved
// configuration, seeds, paths and stage timings. The manifest is a run log;
// unlike the artifacts themselves it is not byte-reproducible (timings).
void write_manifest(const std::string& out_path, const std::string& subcommand,
                    const json& config, const json& seeds, const json& inputs,
                    const json& outputs, const StageTimer& timer) {
    json manifest;
    manifest["subcommand"] = subcommand;
    manifest["tool_version"] = kToolVersion;
    manifest["config"] = config;
    manifest["seeds"] = seeds;
    manifest["inputs"] = inputs;
    manifest["outputs"] = outputs;
    json timings;
    for (const auto& [stage, ms] : timer.timings()) timings[stage] = ms;
    manifest["timings_ms"] = timings;
    const std::string path = out_path + ".manifest.json";
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::trunc);
        os << manifest.dump(2) << "\n";
    }
    fs::rename(tmp, path);
}

// Atomic publication: the writer fills a temp file which is renamed over the
// destination only on success.
template <class WriteFn>
void atomic_write(const std::string& path, WriteFn&& write_fn) {
    const std::string tmp = path + ".tmp";
    write_fn(tmp);
    fs::rename(tmp, path);
}

scone::Dataset load_dataset_checked(const std::string& path) {
    scone::Dataset ds = scone::read_dataset(path);
    const auto violations = scone::validate_dataset(ds);
    if (!violations.empty())
        scone::throw_data("parse", path + " has " + std::to_string(violations.size()) +
                                       " invariant violations, e.g.: " + violations[0].message);
    return ds;
}

std::string format_g17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

int resolve_k(const std::optional<int>& flag_k, const scone::EmbeddingModel* model) {
    if (flag_k) return *flag_k;
    if (model && model->trained_k > 0) return model->trained_k;
    scone::throw_usage("usage", "no --k given and the model records no trained k");
}

std::vector<std::pair<int, int>> parse_pairs_spec(const std::string& pairs,
                                                  std::optional<int> reference, int n_frames) {
    std::vector<std::pair<int, int>> out;
    if (!pairs.empty()) {
        size_t pos = 0;
        while (pos < pairs.size()) {
            const size_t comma = pairs.find(',', pos);
            const std::string item = pairs.substr(pos, comma == std::string::npos ? std::string::npos
                                                                                  : comma - pos);
            const size_t colon = item.find(':');
            if (colon == std::string::npos)
                scone::throw_usage("usage", "--pairs items must look like A:B, got '" + item + "'");
            try {
                out.emplace_back(std::stoi(item.substr(0, colon)), std::stoi(item.substr(colon + 1)));
            } catch (const std::exception&) {
                scone::throw_usage("usage", "bad --pairs item '" + item + "'");
            }
            if (comma == std::string::npos) break;
            pos = comma + 1;
        }
    } else if (reference) {
        for (int f = 0; f < n_frames; ++f)
            if (f != *reference) out.emplace_back(*reference, f);
    } else {
        scone::throw_usage("usage", "give either --pairs or --reference");
    }
    for (const auto& [a, b] : out)
        if (a < 0 || b < 0 || a >= n_frames || b >= n_frames || a == b)
            scone::throw_data("insufficient-data",
                              "pair " + std::to_string(a) + ":" + std::to_string(b) +
                                  " is out of range for " + std::to_string(n_frames) + " frames");
    return out;
}

// Frame features for matching: embeddings (constellation mode) or raw
// descriptors. Feature index == keypoint index.
struct FrameFeatures {
    std::vector<Eigen::VectorXd> embeddings;
    std::vector<scone::BinaryDescriptor> descriptors;
};

FrameFeatures frame_features(const scone::Keyframe& frame, const scone::EmbeddingModel* model,
                             int k, bool raw) {
    FrameFeatures out;
    if (raw) {
        out.descriptors.reserve(frame.keypoints.size());
        for (const auto& kp : frame.keypoints) out.descriptors.push_back(kp.descriptor);
    } else {
        const auto cs = scone::build_all_constellations(frame, k);
        const Eigen::MatrixXd E = scone::embed_constellations(*model, cs);
        out.embeddings.reserve(cs.size());
        for (int i = 0; i < E.cols(); ++i) out.embeddings.push_back(E.col(i));
    }
    return out;
}

int run(int argc, char** argv) {
    CLI::App app{"constellation embedding toolkit"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kToolVersion);

    // generate ---------------------------------------------------------
    auto* cmd_generate = app.add_subcommand("generate", "synthesize a dataset from a world config");
    std::string gen_config_path, gen_out;
    std::optional<uint64_t> gen_seed;
    cmd_generate->add_option("--config", gen_config_path, "world config file")->required();
    cmd_generate->add_option("--out", gen_out, "output dataset path")->required();
    cmd_generate->add_option("--seed", gen_seed, "override the config seed");

    // train ------------------------------------------------------------
    auto* cmd_train = app.add_subcommand("train", "train an embedding model");
    std::string train_dataset, train_config_path, train_model_out, train_val, train_history;
    std::optional<uint64_t> train_seed;
    std::optional<int> train_k;
    std::optional<double> train_margin;
    cmd_train->add_option("--dataset", train_dataset, "training dataset")->required();
    cmd_train->add_option("--config", train_config_path, "training config file");
    cmd_train->add_option("--model-out", train_model_out, "output model path")->required();
    cmd_train->add_option("--val", train_val, "validation dataset (default: 80/20 split)");
    cmd_train->add_option("--history", train_history, "per-epoch history CSV");
    cmd_train->add_option("--seed", train_seed, "override the config seed");
    cmd_train->add_option("--k", train_k, "override the config k");
    cmd_train->add_option("--margin", train_margin, "override the config margin");

    // embed ------------------------------------------------------------
    auto* cmd_embed = app.add_subcommand("embed", "embed all eligible keypoints to CSV");
    std::string embed_model, embed_dataset, embed_out;
    std::optional<int> embed_k;
    cmd_embed->add_option("--model", embed_model)->required();
    cmd_embed->add_option("--dataset", embed_dataset)->required();
    cmd_embed->add_option("--out", embed_out)->required();
    cmd_embed->add_option("--k", embed_k, "override the model's trained k");

    // eval-precision ----------------------------------------------------
    auto* cmd_eval = app.add_subcommand("eval-precision", "nearest-neighbour search precision");
    std::string eval_model, eval_dataset, eval_mode = "scone";
    int eval_n_samples = 1000;
    uint64_t eval_seed = 1;
    std::optional<int> eval_k;
    cmd_eval->add_option("--model", eval_model, "model (required unless --mode raw)");
    cmd_eval->add_option("--dataset", eval_dataset)->required();
    cmd_eval->add_option("--n-samples", eval_n_samples, "sample count (clamped to population)");
    cmd_eval->add_option("--seed", eval_seed);
    cmd_eval->add_option("--k", eval_k);
    cmd_eval->add_option("--mode", eval_mode)->check(CLI::IsMember({"raw", "scone"}));

    // sweep-k ------------------------------------------------------------
    auto* cmd_sweep = app.add_subcommand("sweep-k", "train per k and record precision");
    std::string sweep_dataset, sweep_val, sweep_config_path, sweep_out, sweep_k_list = "1,5,10,15,20,25,30";
    std::optional<uint64_t> sweep_seed;
    cmd_sweep->add_option("--dataset", sweep_dataset)->required();
    cmd_sweep->add_option("--val", sweep_val, "validation dataset (default: 80/20 split)");
    cmd_sweep->add_option("--config", sweep_config_path, "training config file");
    cmd_sweep->add_option("--k-list", sweep_k_list, "comma-separated k values");
    cmd_sweep->add_option("--out", sweep_out, "output CSV")->required();
    cmd_sweep->add_option("--seed", sweep_seed);

    // match-pose ----------------------------------------------------------
    auto* cmd_pose = app.add_subcommand("match-pose", "match frame pairs and estimate poses");
    std::string pose_model, pose_dataset, pose_pairs, pose_out, pose_matches_out,
        pose_curve_out, pose_mode = "scone";
    std::optional<int> pose_reference, pose_k;
    double pose_ratio_threshold = 0.8;
    double pose_epipolar_px = 3.0;
    uint64_t pose_seed = 1;
    cmd_pose->add_option("--model", pose_model, "model (required unless --mode raw)");
    cmd_pose->add_option("--dataset", pose_dataset)->required();
    cmd_pose->add_option("--pairs", pose_pairs, "explicit frame pairs A:B,C:D,...");
    cmd_pose->add_option("--reference", pose_reference, "match this frame against all others");
    cmd_pose->add_option("--out", pose_out, "pose-error CSV")->required();
    cmd_pose->add_option("--matches-out", pose_matches_out, "match dump CSV (single pair only)");
    cmd_pose->add_option("--curve-out", pose_curve_out,
                         "true-positive curve CSV (needs --reference)");
    cmd_pose->add_option("--epipolar-threshold", pose_epipolar_px,
                         "pixel threshold for the curve's epipolar check");
    cmd_pose->add_option("--mode", pose_mode)->check(CLI::IsMember({"raw", "scone"}));
    cmd_pose->add_option("--ratio-threshold", pose_ratio_threshold);
    cmd_pose->add_option("--seed", pose_seed, "RANSAC seed");
    cmd_pose->add_option("--k", pose_k);

    // bench ---------------------------------------------------------------
    auto* cmd_bench = app.add_subcommand("bench", "per-stage timings over consecutive frame pairs");
    std::string bench_model, bench_dataset, bench_out;
    int bench_pairs = 5;
    std::optional<int> bench_k;
    cmd_bench->add_option("--model", bench_model)->required();
    cmd_bench->add_option("--dataset", bench_dataset)->required();
    cmd_bench->add_option("--out", bench_out, "stage,ms CSV")->required();
    cmd_bench->add_option("--n-pairs", bench_pairs, "number of consecutive pairs to time");
    cmd_bench->add_option("--k", bench_k);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e); // prints help/diagnostic
        return rc == 0 ? 0 : 1;    // usage errors exit 1; --help/--version exit 0
    }

    StageTimer timer;

    if (*cmd_generate) {
        timer.start("load-config");
        scone::WorldConfig config = scone::load_world_config(gen_config_path);
        if (gen_seed) config.seed = *gen_seed;
        timer.stop();
        timer.start("generate");
        const scone::Dataset dataset = scone::generate_dataset(config);
        timer.stop();
        timer.start("write");
        atomic_write(gen_out, [&](const std::string& tmp) { scone::write_dataset(dataset, tmp); });
        timer.stop();
        write_manifest(gen_out, "generate",
                       json{{"config_file", gen_config_path},
                            {"n_landmarks", config.n_landmarks},
                            {"n_frames", config.n_frames},
                            {"descriptor_noise", config.descriptor_noise},
                            {"duplicate_descriptor_groups", config.duplicate_descriptor_groups}},
                       json{{"seed", config.seed}}, json{{"config", gen_config_path}},
                       json{{"dataset", gen_out}}, timer);
        std::cout << "wrote " << gen_out << " (" << dataset.frames.size() << " frames, "
                  << dataset.landmarks.size() << " landmarks)\n";
        return 0;
    }

    if (*cmd_train) {
        timer.start("load");
        scone::TrainConfig config = train_config_path.empty()
                                        ? scone::TrainConfig{}
                                        : scone::load_train_config(train_config_path);
        if (train_seed) config.seed = *train_seed;
        if (train_k) config.k = *train_k;
        if (train_margin) config.margin = *train_margin;
        const scone::Dataset full = load_dataset_checked(train_dataset);
        scone::Dataset train_set, val_set;
        if (train_val.empty()) {
            std::tie(train_set, val_set) = scone::make_split(full, 0.8);
        } else {
            train_set = full;
            val_set = load_dataset_checked(train_val);
        }
        timer.stop();
        timer.start("train");
        const auto [model, history] = scone::train(train_set, val_set, config);
        timer.stop();
        timer.start("write");
        atomic_write(train_model_out,
                     [&](const std::string& tmp) { scone::save_model(model, tmp); });
        if (!train_history.empty())
            atomic_write(train_history,
                         [&](const std::string& tmp) { scone::write_history_csv(history, tmp); });
        timer.stop();
        write_manifest(train_model_out, "train",
                       json{{"margin", config.margin},
                            {"batch_size", config.batch_size},
                            {"pos_fraction", config.pos_fraction},
                            {"learning_rate", config.learning_rate},
                            {"epochs", config.epochs},
                            {"steps_per_epoch", config.steps_per_epoch},
                            {"k", config.k}},
                       json{{"seed", config.seed}},
                       json{{"dataset", train_dataset},
                            {"val", train_val.empty() ? "(80/20 split)" : train_val}},
                       json{{"model", train_model_out}, {"history", train_history}}, timer);
        std::cout << "best_val_precision=" << format_g17(history.best_val_precision)
                  << " best_epoch=" << history.best_epoch << "\n";
        return 0;
    }

    if (*cmd_embed) {
        timer.start("load");
        const scone::EmbeddingModel model = scone::load_model(embed_model);
        const scone::Dataset dataset = load_dataset_checked(embed_dataset);
        const int k = resolve_k(embed_k, &model);
        timer.stop();
        timer.start("embed");
        std::string csv = "frame_id,keypoint_idx";
        for (int i = 0; i < scone::kEmbeddingDims; ++i) csv += ",e" + std::to_string(i);
        csv += "\n";
        for (const auto& frame : dataset.frames) {
            const auto cs = scone::build_all_constellations(frame, k);
            if (cs.empty()) continue; // frame too small for k neighbours
            const Eigen::MatrixXd E = scone::embed_constellations(model, cs);
            for (int i = 0; i < E.cols(); ++i) {
                csv += std::to_string(frame.frame_id) + "," + std::to_string(i);
                for (int r = 0; r < E.rows(); ++r) csv += "," + format_g17(E(r, i));
                csv += "\n";
            }
        }
        timer.stop();
        timer.start("write");
        atomic_write(embed_out, [&](const std::string& tmp) {
            std::ofstream os(tmp, std::ios::trunc);
            os << csv;
        });
        timer.stop();
        write_manifest(embed_out, "embed", json{{"k", k}}, json::object(),
                       json{{"model", embed_model}, {"dataset", embed_dataset}},
                       json{{"csv", embed_out}}, timer);
        return 0;
    }

    if (*cmd_eval) {
        timer.start("load");
        const bool raw = eval_mode == "raw";
        std::optional<scone::EmbeddingModel> model;
        if (!raw) {
            if (eval_model.empty())
                scone::throw_usage("usage", "--model is required unless --mode raw");
            model = scone::load_model(eval_model);
        }
        const scone::Dataset dataset = load_dataset_checked(eval_dataset);
        const int k = resolve_k(eval_k, model ? &*model : nullptr);
        timer.stop();
        timer.start("eval");
        scone::Rng rng = scone::Rng(eval_seed).derive("eval-precision");
        const auto pop = scone::collect_linked_population(dataset, k);
        const int n = std::min<int>(eval_n_samples, static_cast<int>(pop.constellations.size()));
        const scone::PrecisionResult result =
            raw ? scone::hamming_precision_eval(dataset, k, n, rng)
                : scone::precision_eval(*model, dataset, k, n, rng);
        timer.stop();
        std::cout << "precision=" << format_g17(result.precision) << "\n";
        std::cout << "n_sampled=" << result.n_sampled << " n_correct=" << result.n_correct << "\n";
        return 0;
    }

    if (*cmd_sweep) {
        timer.start("load");
        scone::TrainConfig config = sweep_config_path.empty()
                                        ? scone::TrainConfig{}
                                        : scone::load_train_config(sweep_config_path);
        if (sweep_seed) config.seed = *sweep_seed;
        const scone::Dataset full = load_dataset_checked(sweep_dataset);
        scone::Dataset train_set, val_set;
        if (sweep_val.empty()) {
            std::tie(train_set, val_set) = scone::make_split(full, 0.8);
        } else {
            train_set = full;
            val_set = load_dataset_checked(sweep_val);
        }
        std::vector<int> k_values;
        {
            std::stringstream ss(sweep_k_list);
            std::string item;
            while (std::getline(ss, item, ',')) k_values.push_back(std::stoi(item));
        }
        timer.stop();
        timer.start("sweep");
        const auto rows = scone::sweep_k(train_set, val_set, k_values, config);
        timer.stop();
        timer.start("write");
        atomic_write(sweep_out,
                     [&](const std::string& tmp) { scone::write_sweep_csv(rows, tmp); });
        timer.stop();
        write_manifest(sweep_out, "sweep-k", json{{"k_list", sweep_k_list}},
                       json{{"seed", config.seed}}, json{{"dataset", sweep_dataset}},
                       json{{"csv", sweep_out}}, timer);
        for (const auto& row : rows)
            std::cout << "k=" << row.k << " precision="
                      << (row.failed ? "failed" : format_g17(row.precision)) << "\n";
        return 0;
    }

    if (*cmd_pose) {
        timer.start("load");
        const bool raw = pose_mode == "raw";
        std::optional<scone::EmbeddingModel> model;
        if (!raw) {
            if (pose_model.empty())
                scone::throw_usage("usage", "--model is required unless --mode raw");
            model = scone::load_model(pose_model);
        }
        const scone::Dataset dataset = load_dataset_checked(pose_dataset);
        if (!dataset.intrinsics)
            scone::throw_data("insufficient-data", "dataset carries no intrinsics");
        const scone::CameraIntrinsics K = *dataset.intrinsics;
        const int k = raw ? 0 : resolve_k(pose_k, &*model);
        const auto pairs = parse_pairs_spec(pose_pairs, pose_reference,
                                            static_cast<int>(dataset.frames.size()));
        if (!pose_matches_out.empty() && pairs.size() != 1)
            scone::throw_usage("usage", "--matches-out needs exactly one pair");
        if (!pose_curve_out.empty() && !pose_reference)
            scone::throw_usage("usage", "--curve-out needs --reference");
        timer.stop();

        timer.start("match-pose");
        std::string csv = "pair_id,angular_gt_rad,rot_err_rad,trans_err,n_matches,n_inliers\n";
        std::string matches_csv = "query_idx,target_idx,distance,second_distance,kept\n";
        // Per-frame features are cached; reference-style specs reuse them.
        std::map<int, FrameFeatures> cache;
        auto features = [&](int fi) -> const FrameFeatures& {
            auto it = cache.find(fi);
            if (it == cache.end())
                it = cache.emplace(fi, frame_features(dataset.frames[fi],
                                                      model ? &*model : nullptr, k, raw))
                         .first;
            return it->second;
        };
        for (const auto& [fa, fb] : pairs) {
            const scone::Keyframe& frame_a = dataset.frames[fa];
            const scone::Keyframe& frame_b = dataset.frames[fb];
            if (!frame_a.pose || !frame_b.pose)
                scone::throw_data("missing-pose", "both frames of a pair need ground-truth poses");
            const FrameFeatures& qa = features(fa);
            const FrameFeatures& qb = features(fb);
            const std::vector<scone::Match> all =
                raw ? scone::nn_match(qa.descriptors, qb.descriptors)
                    : scone::nn_match(qa.embeddings, qb.embeddings);
            const std::vector<scone::Match> kept = scone::ratio_test(all, pose_ratio_threshold);
            if (!pose_matches_out.empty()) {
                size_t kept_i = 0;
                for (const auto& m : all) {
                    const bool is_kept =
                        kept_i < kept.size() && kept[kept_i].query_index == m.query_index;
                    if (is_kept) ++kept_i;
                    matches_csv += std::to_string(m.query_index) + "," +
                                   std::to_string(m.target_index) + "," +
                                   format_g17(m.distance) + "," + format_g17(m.second_distance) +
                                   "," + (is_kept ? "1" : "0") + "\n";
                }
            }
            std::vector<scone::Correspondence> corrs;
            corrs.reserve(kept.size());
            for (const auto& m : kept) {
                const scone::Keypoint& kp_a = frame_a.keypoints[m.query_index];
                const scone::Keypoint& kp_b = frame_b.keypoints[m.target_index];
                corrs.push_back({{kp_a.x, kp_a.y}, {kp_b.x, kp_b.y}});
            }
            const scone::CameraPose gt = scone::relative_pose(*frame_a.pose, *frame_b.pose);
            const double angular_gt = scone::rotation_error(frame_a.pose->R, frame_b.pose->R);
            const std::string pair_id = std::to_string(fa) + ":" + std::to_string(fb);
            scone::RansacConfig rc;
            rc.seed = scone::Rng(pose_seed).derive("ransac-pair", fa * 100003ull + fb).seed();
            try {
                const scone::RelativePose est = scone::estimate_relative_pose(corrs, K, K, rc);
                csv += pair_id + "," + format_g17(angular_gt) + "," +
                       format_g17(scone::rotation_error(est.R, gt.R)) + "," +
                       format_g17(scone::translation_error(est.t, gt.t)) + "," +
                       std::to_string(kept.size()) + "," + std::to_string(est.n_inliers) + "\n";
            } catch (const scone::Error& e) {
                std::cerr << "warning: pair " << pair_id << ": " << e.what() << "\n";
                csv += pair_id + "," + format_g17(angular_gt) + ",nan,nan," +
                       std::to_string(kept.size()) + ",0\n";
            }
        }
        timer.stop();
        if (!pose_curve_out.empty()) {
            timer.start("curve");
            std::vector<int> curve_frames;
            for (const auto& [fa, fb] : pairs) curve_frames.push_back(fb);
            const auto curve = scone::true_positive_curve(
                dataset, model ? &*model : nullptr, *pose_reference, curve_frames,
                raw ? scone::MatchMode::raw : scone::MatchMode::scone, pose_ratio_threshold,
                pose_epipolar_px);
            atomic_write(pose_curve_out, [&](const std::string& tmp) {
                scone::write_curve_csv(curve, tmp);
            });
            timer.stop();
        }
        timer.start("write");
        atomic_write(pose_out, [&](const std::string& tmp) {
            std::ofstream os(tmp, std::ios::trunc);
            os << csv;
        });
        if (!pose_matches_out.empty())
            atomic_write(pose_matches_out, [&](const std::string& tmp) {
                std::ofstream os(tmp, std::ios::trunc);
                os << matches_csv;
            });
        timer.stop();
        write_manifest(pose_out, "match-pose",
                       json{{"mode", pose_mode},
                            {"ratio_threshold", pose_ratio_threshold},
                            {"k", k},
                            {"n_pairs", pairs.size()}},
                       json{{"seed", pose_seed}},
                       json{{"model", pose_model}, {"dataset", pose_dataset}},
                       json{{"csv", pose_out}}, timer);
        return 0;
    }

    if (*cmd_bench) {
        const scone::EmbeddingModel model = scone::load_model(bench_model);
        const scone::Dataset dataset = load_dataset_checked(bench_dataset);
        const int k = resolve_k(bench_k, &model);
        const int n_pairs =
            std::min<int>(bench_pairs, static_cast<int>(dataset.frames.size()) - 1);
        if (n_pairs < 1) scone::throw_data("insufficient-data", "need at least 2 frames");

        std::map<std::string, double> total_ms;
        auto timed = [&total_ms](const std::string& stage, auto&& fn) {
            const auto t0 = std::chrono::steady_clock::now();
            fn();
            const auto t1 = std::chrono::steady_clock::now();
            total_ms[stage] += std::chrono::duration<double, std::milli>(t1 - t0).count();
        };

        for (int p = 0; p < n_pairs; ++p) {
            const scone::Keyframe& fa = dataset.frames[p];
            const scone::Keyframe& fb = dataset.frames[p + 1];
            std::vector<scone::Constellation> ca, cb;
            timed("constellation_build", [&] {
                ca = scone::build_all_constellations(fa, k);
                cb = scone::build_all_constellations(fb, k);
            });
            Eigen::MatrixXd ea, eb;
            timed("embed", [&] {
                ea = scone::embed_constellations(model, ca);
                eb = scone::embed_constellations(model, cb);
            });
            std::vector<Eigen::VectorXd> va, vb;
            for (int i = 0; i < ea.cols(); ++i) va.push_back(ea.col(i));
            for (int i = 0; i < eb.cols(); ++i) vb.push_back(eb.col(i));
            std::vector<scone::BinaryDescriptor> da, db;
            for (const auto& kp : fa.keypoints) da.push_back(kp.descriptor);
            for (const auto& kp : fb.keypoints) db.push_back(kp.descriptor);
            std::vector<scone::Match> m_scone, m_raw, kept;
            timed("match_embedding", [&] { m_scone = scone::nn_match(va, vb); });
            timed("match_hamming", [&] { m_raw = scone::nn_match(da, db); });
            timed("ratio_test", [&] { kept = scone::ratio_test(m_scone, 0.8); });
            timed("ransac_pose", [&] {
                if (dataset.intrinsics && kept.size() >= 8) {
                    std::vector<scone::Correspondence> corrs;
                    for (const auto& m : kept)
                        corrs.push_back({{fa.keypoints[m.query_index].x,
                                          fa.keypoints[m.query_index].y},
                                         {fb.keypoints[m.target_index].x,
                                          fb.keypoints[m.target_index].y}});
                    scone::RansacConfig rc;
                    try {
                        scone::estimate_relative_pose(corrs, *dataset.intrinsics,
                                                      *dataset.intrinsics, rc);
                    } catch (const scone::Error&) {
                    }
                }
            });
        }

        std::string csv = "stage,ms\n";
        for (const auto& [stage, ms] : total_ms)
            csv += stage + "," + format_g17(ms / n_pairs) + "\n";
        atomic_write(bench_out, [&](const std::string& tmp) {
            std::ofstream os(tmp, std::ios::trunc);
            os << csv;
        });
        write_manifest(bench_out, "bench", json{{"k", k}, {"n_pairs", n_pairs}}, json::object(),
                       json{{"model", bench_model}, {"dataset", bench_dataset}},
                       json{{"csv", bench_out}}, timer);
        std::cout << csv;
        return 0;
    }

    return 0;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const scone::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        switch (e.kind()) {
            case scone::ErrorKind::usage: return 1;
            case scone::ErrorKind::data: return 2;
            case scone::ErrorKind::numeric: return 3;
        }
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
