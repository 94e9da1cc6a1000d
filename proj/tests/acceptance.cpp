// Acceptance suite: runs every acceptance criterion at its stated tolerance
// and prints one pass/fail line per criterion. Exits nonzero if any fails.

#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "scone/data_io.hpp"
#include "scone/datagen.hpp"
#include "scone/error.hpp"
#include "scone/geometry.hpp"
#include "scone/matching.hpp"
#include "scone/neuralnet.hpp"
#include "scone/neuralnet_batch.hpp"
#include "scone/training.hpp"

namespace fs = std::filesystem;
using namespace scone;

namespace {

struct CheckFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require(bool cond, const std::string& what) {
    if (!cond) throw CheckFailure(what);
}

struct Suite {
    int failures = 0;
    fs::path dir;

    Suite() {
        dir = fs::temp_directory_path() / ("scone_acceptance_" + std::to_string(::getpid()));
        fs::create_directories(dir);
    }
    ~Suite() { fs::remove_all(dir); }

    std::string file(const std::string& name) const { return (dir / name).string(); }

    void criterion(int n, const std::string& title, const std::function<void()>& body) {
        const auto t0 = std::chrono::steady_clock::now();
        std::string verdict = "PASS";
        std::string detail;
        try {
            body();
        } catch (const std::exception& e) {
            verdict = "FAIL";
            detail = e.what();
            ++failures;
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("criterion %2d: %s  (%.1fs)  %s%s%s\n", n, verdict.c_str(), secs,
                    title.c_str(), detail.empty() ? "" : " -- ", detail.c_str());
        std::fflush(stdout);
    }
};

int run_cli(const std::string& args, const std::string& stdout_path = "/dev/null") {
    const std::string cmd =
        std::string(SCONE_CLI_PATH) + " " + args + " >" + stdout_path + " 2>/dev/null";
    return WEXITSTATUS(std::system(cmd.c_str()));
}

std::string read_bytes(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    require(static_cast<bool>(is), "cannot open " + path);
    return std::string(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

void write_text(const std::string& path, const std::string& content) {
    std::ofstream os(path, std::ios::trunc);
    os << content;
}

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
    std::vector<std::vector<std::string>> rows;
    std::ifstream is(path);
    std::string line;
    while (std::getline(is, line)) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        rows.push_back(cells);
    }
    return rows;
}

Constellation random_constellation(uint64_t seed, int k) {
    Rng rng(seed);
    Keyframe frame;
    for (int i = 0; i < k + 6; ++i) {
        Keypoint kp;
        kp.x = rng.uniform(0, 640);
        kp.y = rng.uniform(0, 480);
        kp.scale = std::exp(rng.uniform(-1, 1));
        kp.orientation = rng.uniform(-kPi, kPi);
        kp.descriptor = BinaryDescriptor::random(rng);
        frame.keypoints.push_back(kp);
    }
    return build_constellation(frame, 0, k);
}

// The dataset family for the separation criteria: duplicated descriptors
// (and duplicated canonical orientations) so only neighbourhood context can
// tell group members apart.
WorldConfig duplicates_world() {
    WorldConfig wc;
    wc.n_landmarks = 60;
    wc.n_frames = 40;
    wc.orbit_step_deg = 5.0;
    wc.descriptor_noise = 0.02;
    wc.duplicate_descriptor_groups = 20;
    wc.unlinked_fraction = 0.1;
    wc.seed = 404;
    return wc;
}

TrainConfig separation_train_config() {
    TrainConfig tc;
    tc.epochs = 200;
    tc.steps_per_epoch = 6;
    tc.batch_size = 16;
    tc.k = 10;
    tc.learning_rate = 1e-3;
    tc.margin = 1.0;
    tc.pos_fraction = 0.5;
    tc.seed = 606;
    return tc;
}

// Noise-free two-view scene for the geometry criteria.
struct Scene {
    CameraIntrinsics K{500, 500, 320, 240};
    Eigen::Matrix3d R;
    Eigen::Vector3d t;
    std::vector<Correspondence> corrs;
};

Scene make_scene(uint64_t seed, int n_points) {
    Rng rng(seed);
    Scene scene;
    const Eigen::Vector3d axis =
        Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal()).normalized();
    scene.R = Eigen::AngleAxisd(0.2 + 0.2 * rng.uniform(), axis).toRotationMatrix();
    scene.t = Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal()).normalized();
    while (static_cast<int>(scene.corrs.size()) < n_points) {
        const Eigen::Vector3d X(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(4, 9));
        const Eigen::Vector3d X2 = scene.R * X + scene.t;
        if (X2.z() < 0.5) continue;
        const Eigen::Vector2d p1 = scene.K.project(X), p2 = scene.K.project(X2);
        if (p1.x() < 0 || p1.x() >= 640 || p1.y() < 0 || p1.y() >= 480) continue;
        if (p2.x() < 0 || p2.x() >= 640 || p2.y() < 0 || p2.y() >= 480) continue;
        scene.corrs.push_back({p1, p2});
    }
    return scene;
}

// Relative error with an absolute floor at 1e-5: central differences at
// h = 1e-5 carry up to ~1e-10 of cancellation noise, so the floor pins the
// implied absolute tolerance at 1e-9 without masking real errors (a wrong
// gradient term shows up h-independent at the gradient's own magnitude).
double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-5});
}

double pair_loss(const EmbeddingModel& m, const Eigen::VectorXd& xa, const Eigen::VectorXd& xb,
                 int k, int label, double margin) {
    const Eigen::VectorXd ea = forward_input(m, xa, k, nullptr);
    const Eigen::VectorXd eb = forward_input(m, xb, k, nullptr);
    return contrastive_loss(ea, eb, label, margin).loss;
}

} // namespace

int main() {
    Suite suite;

    // Shared state across criteria (6 trains the model that 8 consumes).
    EmbeddingModel trained_model;
    Dataset duplicates_train, duplicates_val;
    double raw_baseline = 0.0, scone_precision = 0.0;

    suite.criterion(1, "gradient suite: contrastive-loss gradients vs central differences "
                       "(k=5 and k=20, >=5 entries per tensor, h=1e-5, rel err < 1e-4, < 60s)",
                    [&] {
        const auto t0 = std::chrono::steady_clock::now();
        const double h = 1e-5;
        for (const int k : {5, 20}) {
            EmbeddingModel model = init_model(9000 + k);
            const Constellation ca = random_constellation(9100 + k, k);
            const Constellation cb = random_constellation(9200 + k, k);
            const Eigen::VectorXd xa = assemble_input(ca, model.norm);
            const Eigen::VectorXd xb = assemble_input(cb, model.norm);
            // margin at twice the pair distance keeps the dissimilar hinge
            // active with the kink a full D away from the evaluation point
            const double d0 = embedding_distance(forward_input(model, xa, k, nullptr),
                                                 forward_input(model, xb, k, nullptr));
            require(d0 > 1e-3, "degenerate test pair: embeddings nearly coincide");
            const double margin = 2.0 * d0;
            for (const int label : {0, 1}) {
                ForwardTrace ta, tb;
                const Eigen::VectorXd ea = forward_input(model, xa, k, &ta);
                const Eigen::VectorXd eb = forward_input(model, xb, k, &tb);
                const LossGrad lg = contrastive_loss(ea, eb, label, margin);
                Gradients grads = zero_like(model.params);
                backward_input(model, ta, lg.grad_e1, grads);
                backward_input(model, tb, lg.grad_e2, grads);

                std::vector<double*> grad_data;
                for_each_tensor(grads, [&](const std::string&, auto& t) {
                    grad_data.push_back(t.data());
                });
                int ti = 0;
                int n_tensors = 0;
                for_each_tensor(model.params, [&](const std::string& name, auto& t) {
                    Rng entry_rng(7000 + 13 * ti + label);
                    for (int s = 0; s < 5; ++s) {
                        const long idx = static_cast<long>(entry_rng.uniform_int(t.size()));
                        double* p = t.data() + idx;
                        const double orig = *p;
                        *p = orig + h;
                        const double up = pair_loss(model, xa, xb, k, label, margin);
                        *p = orig - h;
                        const double down = pair_loss(model, xa, xb, k, label, margin);
                        *p = orig;
                        const double fd = (up - down) / (2 * h);
                        const double analytic = grad_data[ti][idx];
                        require(rel_err(analytic, fd) < 1e-4,
                                "gradient mismatch at " + name + "[" + std::to_string(idx) +
                                    "] k=" + std::to_string(k) + " label=" +
                                    std::to_string(label) + ": analytic " +
                                    std::to_string(analytic) + " vs fd " + std::to_string(fd));
                    }
                    ++ti;
                    ++n_tensors;
                });
                require(n_tensors == 66, "expected 66 parameter tensors");
            }
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        require(secs < 60.0, "gradient suite took " + std::to_string(secs) + "s (limit 60)");
    });

    suite.criterion(2, "loss algebra: the four exact contrastive-loss cases (0, 0.5, 0, 2.0)",
                    [&] {
        const Eigen::VectorXd zero = Eigen::VectorXd::Zero(48);
        Eigen::VectorXd two = zero;
        two[0] = 2.0;
        require(contrastive_loss(zero, zero, 0, 1.0).loss == 0.0, "similar identical != 0");
        require(contrastive_loss(zero, zero, 1, 1.0).loss == 0.5,
                "dissimilar at D=0, margin=1 != 0.5");
        require(contrastive_loss(zero, two, 1, 1.0).loss == 0.0, "inactive hinge != 0");
        require(contrastive_loss(zero, two, 0, 1.0).loss == 2.0, "similar at D=2 != 2.0");
    });

    suite.criterion(3, "dimension contract: input length 10834 at k=20, embedding length 48",
                    [&] {
        const Constellation c = random_constellation(3001, 20);
        require(assemble_input(c).size() == 10834, "assemble_input length != 10834");
        const EmbeddingModel model = init_model(3002);
        require(embed_constellation(model, c).size() == 48, "embedding length != 48");
    });

    suite.criterion(4, "geometry oracle: noise-free recovery to 1e-6; RANSAC at 30% outliers "
                       "within 0.5 deg in >= 95/100 seeded trials (< 30s)",
                    [&] {
        const auto t0 = std::chrono::steady_clock::now();
        {
            const Scene scene = make_scene(4001, 100);
            const EssentialMatrix E = normalize_and_eight_point(scene.corrs, scene.K, scene.K);
            const RelativePose pose = decompose_essential(E, scene.corrs, scene.K, scene.K);
            require(rotation_error(pose.R, scene.R) < 1e-6, "rotation recovery above 1e-6 rad");
            require(translation_error(pose.t, scene.t) < 1e-6,
                    "translation direction above 1e-6");
        }
        int ok = 0;
        for (uint64_t seed = 0; seed < 100; ++seed) {
            Scene scene = make_scene(40100 + seed, 140);
            Rng out_rng(seed * 7 + 1);
            for (int i = 0; i < 60; ++i)
                scene.corrs.push_back({{out_rng.uniform(0, 640), out_rng.uniform(0, 480)},
                                       {out_rng.uniform(0, 640), out_rng.uniform(0, 480)}});
            RansacConfig rc;
            rc.seed = seed;
            try {
                const RelativePose pose =
                    estimate_relative_pose(scene.corrs, scene.K, scene.K, rc);
                if (rotation_error(pose.R, scene.R) < 0.5 * kPi / 180.0) ++ok;
            } catch (const Error&) {
            }
        }
        require(ok >= 95, "only " + std::to_string(ok) + "/100 trials within 0.5 deg");
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        require(secs < 30.0, "geometry oracle took " + std::to_string(secs) + "s (limit 30)");
    });

    suite.criterion(5, "rotation-error formula: theta in {0.1, pi/2, 3} within 1e-9", [&] {
        for (const double theta : {0.1, kPi / 2, 3.0}) {
            for (const Eigen::Vector3d axis : {Eigen::Vector3d(0, 0, 1),
                                               Eigen::Vector3d(1, -2, 0.5),
                                               Eigen::Vector3d(-1, 1, 1)}) {
                const Eigen::Matrix3d base =
                    Eigen::AngleAxisd(0.8, Eigen::Vector3d(0.2, 0.5, -0.8).normalized())
                        .toRotationMatrix();
                const Eigen::Matrix3d rel =
                    Eigen::AngleAxisd(theta, axis.normalized()).toRotationMatrix();
                require(std::abs(rotation_error(base, base * rel) - theta) < 1e-9,
                        "angle " + std::to_string(theta) + " not recovered within 1e-9");
            }
        }
    });

    suite.criterion(6, "separation end-to-end: 200-epoch training beats the raw-Hamming "
                       "baseline by >= 0.05 on the duplicated-descriptor family (< 15 min)",
                    [&] {
        const auto t0 = std::chrono::steady_clock::now();
        const Dataset full = generate_dataset(duplicates_world());
        std::tie(duplicates_train, duplicates_val) = make_split(full, 0.8);
        const TrainConfig tc = separation_train_config();
        auto [model, history] = train(duplicates_train, duplicates_val, tc);
        trained_model = std::move(model);

        const auto pop = collect_linked_population(duplicates_val, tc.k);
        const int n = static_cast<int>(pop.constellations.size());
        require(n >= 100, "validation population unexpectedly small");
        Rng r_raw(707), r_scone(707);
        raw_baseline = hamming_precision_eval(duplicates_val, tc.k, n, r_raw).precision;
        scone_precision = precision_eval(trained_model, duplicates_val, tc.k, n, r_scone).precision;
        require(scone_precision > raw_baseline + 0.05,
                "precision " + std::to_string(scone_precision) + " vs raw " +
                    std::to_string(raw_baseline) + ": gap below 0.05");
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        require(secs < 900.0, "separation run took " + std::to_string(secs) + "s (limit 900)");
        std::printf("              [raw %.4f -> embedding %.4f over %d validation keypoints]\n",
                    raw_baseline, scone_precision, n);
    });

    suite.criterion(7, "k-sweep shape: precision non-decreasing over k in {1, 5, 10} on the "
                       "same family",
                    [&] {
        require(!duplicates_train.frames.empty(), "criterion 6 must have prepared the split");
        const auto rows =
            sweep_k(duplicates_train, duplicates_val, {1, 5, 10}, separation_train_config());
        require(rows.size() == 3, "expected 3 sweep rows");
        for (const auto& row : rows)
            require(!row.failed, "sweep failed at k=" + std::to_string(row.k));
        require(rows[0].precision <= rows[1].precision,
                "precision decreased from k=1 (" + std::to_string(rows[0].precision) +
                    ") to k=5 (" + std::to_string(rows[1].precision) + ")");
        require(rows[1].precision <= rows[2].precision,
                "precision decreased from k=5 (" + std::to_string(rows[1].precision) +
                    ") to k=10 (" + std::to_string(rows[2].precision) + ")");
        std::printf("              [k=1: %.4f  k=5: %.4f  k=10: %.4f]\n", rows[0].precision,
                    rows[1].precision, rows[2].precision);
    });

    suite.criterion(8, "pose end-to-end: trained model over 20 pairs at 5-degree steps, "
                       "median rotation error < 1 degree and >= 8 surviving matches per pair",
                    [&] {
        require(trained_model.trained_k == 10, "criterion 6 must have trained the model");
        const std::string model_path = suite.file("acc_model.bin");
        save_model(trained_model, model_path);

        WorldConfig wc;
        wc.n_landmarks = 60;
        wc.n_frames = 21; // reference + 20 pairs, 5 degrees apart
        wc.orbit_step_deg = 5.0;
        wc.descriptor_noise = 0.02;
        wc.unlinked_fraction = 0.1;
        wc.seed = 505;
        write_dataset(generate_dataset(wc), suite.file("pose_data.bin"));

        require(run_cli("match-pose --model " + model_path + " --dataset " +
                        suite.file("pose_data.bin") + " --reference 0 --out " +
                        suite.file("pose.csv")) == 0,
                "match-pose subcommand failed");
        const auto rows = read_csv(suite.file("pose.csv"));
        require(rows.size() == 21, "expected header + 20 pairs");
        std::vector<double> rot_errs;
        for (size_t i = 1; i < rows.size(); ++i) {
            require(rows[i].size() == 6, "malformed pose CSV row");
            const double err = std::stod(rows[i][2]);
            require(std::isfinite(err), "pose estimation failed for pair " + rows[i][0]);
            rot_errs.push_back(err);
            require(std::stoi(rows[i][4]) >= 8,
                    "pair " + rows[i][0] + " has fewer than 8 surviving matches");
        }
        std::sort(rot_errs.begin(), rot_errs.end());
        const double median = rot_errs[rot_errs.size() / 2];
        require(median < kPi / 180.0,
                "median rotation error " + std::to_string(median) + " rad exceeds 1 degree");
    });

    suite.criterion(9, "determinism: seeded CLI subcommands are byte-identical on re-run; "
                       "model save/load round-trips exactly",
                    [&] {
        // library round-trip
        EmbeddingModel m = init_model(31337);
        m.trained_k = 7;
        const std::string mp1 = suite.file("rt1.bin"), mp2 = suite.file("rt2.bin");
        save_model(m, mp1);
        const EmbeddingModel loaded = load_model(mp1);
        save_model(loaded, mp2);
        require(read_bytes(mp1) == read_bytes(mp2), "save/load/save is not byte-identical");
        bool params_match = true;
        for_each_tensor(m.params, [&](const std::string& name, auto& t) {
            for_each_tensor(const_cast<ModelParams&>(loaded.params),
                            [&](const std::string& n2, auto& t2) {
                                if (n2 == name && t2 != t) params_match = false;
                            });
        });
        require(params_match && loaded.trained_k == 7, "loaded model differs from saved");

        // seeded subcommands, re-run and compared byte for byte (the
        // *.manifest.json run logs carry wall-clock timings and are exempt)
        write_text(suite.file("w.cfg"),
                   "n_landmarks = 25\nn_frames = 8\ndescriptor_noise = 0.01\nseed = 7\n");
        write_text(suite.file("t.cfg"),
                   "epochs = 2\nsteps_per_epoch = 2\nbatch_size = 4\nk = 3\nseed = 5\n");
        auto rerun_identical = [&](const std::string& args_template,
                                   const std::vector<std::string>& outputs) {
            for (const char* tag : {"A", "B"}) {
                std::string args = args_template;
                size_t pos;
                while ((pos = args.find('@')) != std::string::npos) args.replace(pos, 1, tag);
                require(run_cli(args) == 0, "subcommand failed: " + args);
            }
            for (const auto& out : outputs) {
                std::string a = out, b = out;
                a.replace(a.find('@'), 1, "A");
                b.replace(b.find('@'), 1, "B");
                require(read_bytes(suite.file(a)) == read_bytes(suite.file(b)),
                        out + " differs between identical runs");
            }
        };
        rerun_identical("generate --config " + suite.file("w.cfg") + " --out " +
                            suite.file("data@.bin"),
                        {"data@.bin"});
        rerun_identical("train --dataset " + suite.file("dataA.bin") + " --config " +
                            suite.file("t.cfg") + " --model-out " + suite.file("m@.bin") +
                            " --history " + suite.file("h@.csv"),
                        {"m@.bin", "h@.csv"});
        rerun_identical("embed --model " + suite.file("mA.bin") + " --dataset " +
                            suite.file("dataA.bin") + " --out " + suite.file("e@.csv"),
                        {"e@.csv"});
        rerun_identical("sweep-k --dataset " + suite.file("dataA.bin") + " --config " +
                            suite.file("t.cfg") + " --k-list 2,3 --out " + suite.file("s@.csv"),
                        {"s@.csv"});
        rerun_identical("match-pose --mode raw --dataset " + suite.file("dataA.bin") +
                            " --reference 0 --out " + suite.file("p@.csv") + " --seed 3",
                        {"p@.csv"});
        for (const char* tag : {"A", "B"}) {
            require(run_cli("eval-precision --model " + suite.file("mA.bin") + " --dataset " +
                                suite.file("dataA.bin") + " --n-samples 40 --seed 11",
                            suite.file(std::string("prec") + tag + ".txt")) == 0,
                    "eval-precision failed");
        }
        require(read_bytes(suite.file("precA.txt")) == read_bytes(suite.file("precB.txt")),
                "eval-precision stdout differs between identical runs");
    });

    suite.criterion(10, "nn_match equals the exhaustive double-loop oracle on 100 random "
                        "instances per metric",
                    [&] {
        Rng rng(10101);
        for (int instance = 0; instance < 100; ++instance) {
            const int dims = 4 + static_cast<int>(rng.uniform_int(44));
            const int nd = 2 + static_cast<int>(rng.uniform_int(30));
            const int nq = 1 + static_cast<int>(rng.uniform_int(20));
            std::vector<Eigen::VectorXd> db(nd), q(nq);
            for (auto& v : db) {
                v.resize(dims);
                for (int i = 0; i < dims; ++i) v[i] = rng.normal();
            }
            for (auto& v : q) {
                v.resize(dims);
                for (int i = 0; i < dims; ++i) v[i] = rng.normal();
            }
            const auto got = nn_match(q, db);
            const auto want = ref::nn_match(q, db);
            for (int i = 0; i < nq; ++i)
                require(got[i].target_index == want[i].target_index &&
                            got[i].distance == want[i].distance &&
                            got[i].second_distance == want[i].second_distance,
                        "euclidean mismatch on instance " + std::to_string(instance));
        }
        for (int instance = 0; instance < 100; ++instance) {
            const int nd = 2 + static_cast<int>(rng.uniform_int(30));
            const int nq = 1 + static_cast<int>(rng.uniform_int(20));
            std::vector<BinaryDescriptor> db(nd), q(nq);
            for (auto& d : db) d = BinaryDescriptor::random(rng);
            for (auto& d : q) d = BinaryDescriptor::random(rng);
            const auto got = nn_match(q, db);
            const auto want = ref::nn_match(q, db);
            for (int i = 0; i < nq; ++i)
                require(got[i].target_index == want[i].target_index &&
                            got[i].distance == want[i].distance &&
                            got[i].second_distance == want[i].second_distance,
                        "hamming mismatch on instance " + std::to_string(instance));
        }
    });

    if (suite.failures == 0) {
        std::printf("ACCEPTANCE: ALL 10 CRITERIA PASSED\n");
        return 0;
    }
    std::printf("ACCEPTANCE: %d CRITERIA FAILED\n", suite.failures);
    return 1;
}
