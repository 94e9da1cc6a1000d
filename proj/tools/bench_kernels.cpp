// Compares the serial reference implementations against the batched/OpenMP
// kernels they back: constellation embedding, brute-force matching, and a
// full gradient step. The reference paths are the ones the test suite uses
// as oracles; this target shows what the parallel kernels buy.

#include <chrono>
#include <cstdio>
#include <functional>
#include <vector>

#include <omp.h>

#include "scone/datagen.hpp"
#include "scone/matching.hpp"
#include "scone/neuralnet_batch.hpp"
#include "scone/training.hpp"

using namespace scone;

namespace {

double time_ms(const std::function<void()>& fn, int reps = 3) {
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        const auto t1 = std::chrono::steady_clock::now();
        best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    return best;
}

void report(const char* name, double serial_ms, double parallel_ms) {
    std::printf("%-28s serial %9.2f ms   parallel %9.2f ms   speedup %5.2fx\n", name, serial_ms,
                parallel_ms, serial_ms / parallel_ms);
}

} // namespace

int main() {
    std::printf("threads: %d\n", omp_get_max_threads());

    WorldConfig wc;
    wc.n_landmarks = 150;
    wc.n_frames = 6;
    wc.seed = 99;
    const Dataset dataset = generate_dataset(wc);

    const int k = 10;
    std::vector<Constellation> constellations;
    for (const auto& frame : dataset.frames)
        for (auto& c : build_all_constellations(frame, k)) constellations.push_back(c);
    std::printf("constellations: %zu (k=%d)\n", constellations.size(), k);

    const EmbeddingModel model = init_model(7);

    // Embedding: serial per-constellation loop vs column-batched kernel.
    Eigen::MatrixXd batched;
    const double embed_serial = time_ms([&] {
        for (const auto& c : constellations) (void)embed_constellation(model, c);
    }, 1);
    const double embed_parallel =
        time_ms([&] { batched = embed_constellations(model, constellations); }, 1);
    report("embed_constellations", embed_serial, embed_parallel);

    // Matching: serial double loop vs parallel-over-queries.
    std::vector<Eigen::VectorXd> embeds;
    for (int i = 0; i < batched.cols(); ++i) embeds.push_back(batched.col(i));
    const double match_e_serial = time_ms([&] { (void)ref::nn_match(embeds, embeds); });
    const double match_e_parallel = time_ms([&] { (void)nn_match(embeds, embeds); });
    report("nn_match euclidean", match_e_serial, match_e_parallel);

    std::vector<BinaryDescriptor> descs;
    Rng drng(5);
    for (size_t i = 0; i < 4000; ++i) descs.push_back(BinaryDescriptor::random(drng));
    const double match_h_serial = time_ms([&] { (void)ref::nn_match(descs, descs); });
    const double match_h_parallel = time_ms([&] { (void)nn_match(descs, descs); });
    report("nn_match hamming", match_h_serial, match_h_parallel);

    // One gradient accumulation over a batch of pairs: serial per-pair
    // forward/backward vs the batched kernel.
    const int batch_pairs = 16;
    std::vector<ConstellationPair> pairs;
    for (int p = 0; p < batch_pairs; ++p)
        pairs.push_back({constellations[p], constellations[p + batch_pairs], p % 2});
    const Eigen::VectorXd upstream = Eigen::VectorXd::Constant(kEmbeddingDims, 0.01);

    const double grad_serial = time_ms([&] {
        Gradients grads = zero_like(model.params);
        for (const auto& pair : pairs) {
            for (const Constellation* c : {&pair.x1, &pair.x2}) {
                ForwardTrace trace;
                forward_input(model, assemble_input(*c, model.norm), k, &trace);
                backward_input(model, trace, upstream, grads);
            }
        }
    }, 1);
    const double grad_parallel = time_ms([&] {
        Eigen::MatrixXd X(input_dims(k), 2 * batch_pairs);
        for (int p = 0; p < batch_pairs; ++p) {
            assemble_input_into(pairs[p].x1, model.norm, X.col(2 * p));
            assemble_input_into(pairs[p].x2, model.norm, X.col(2 * p + 1));
        }
        BatchTrace trace;
        forward_batch(model, X, k, &trace);
        Eigen::MatrixXd dE(kEmbeddingDims, 2 * batch_pairs);
        dE.colwise() = upstream;
        Gradients grads = zero_like(model.params);
        backward_batch(model, trace, dE, grads);
    }, 1);
    report("batch gradient (16 pairs)", grad_serial, grad_parallel);

    return 0;
}
