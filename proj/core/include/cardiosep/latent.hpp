#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "cardiosep/matrix.hpp"

namespace cardiosep::latent {

/// Posterior means at one training epoch, aligned with spectrogram columns.
struct LatentCloud {
    Matrix points;  // N x k
    std::size_t epoch = 0;
    std::vector<std::size_t> frame_indices;
};

struct TsneConfig {
    double perplexity = 30.0;
    std::size_t iters = 1000;
    double learning_rate = 200.0;
    double exaggeration = 12.0;
    std::size_t exaggeration_iters = 250;
    double initial_momentum = 0.5;
    double final_momentum = 0.8;
    std::size_t momentum_switch = 250;
    std::uint64_t seed = 0;
    std::size_t cost_log_stride = 10;
};

inline constexpr std::size_t kBisectionSteps = 30;
inline constexpr double kEntropyTolerance = 1e-5;

/// Row-conditional Gaussian affinities p(j|i) calibrated to a perplexity.
struct Affinities {
    Matrix conditional;            // N x N, rows sum to 1, zero diagonal
    std::vector<double> entropy;   // per-row Shannon entropy, bits
    std::vector<double> precision; // per-row 1 / (2 sigma^2)
};

/// Bisection on each row's Gaussian precision so that the row entropy
/// matches log2(perplexity). `sq_dist` is the N x N squared-distance matrix.
Affinities calibrate_affinities(const Matrix& sq_dist, double perplexity);

/// Symmetrized joint probabilities (P + P^T) / 2N.
Matrix joint_probabilities(const Matrix& conditional);

Matrix pairwise_squared_distances(const Matrix& points);

struct Embedding2D {
    Matrix coords;  // N x 2
    /// (iteration, KL(P || Q)) recorded every cost_log_stride iterations,
    /// measured without exaggeration.
    std::vector<std::pair<std::size_t, double>> cost_trace;
};

/// Exact O(N^2) t-SNE.
Embedding2D tsne(const LatentCloud& cloud, const TsneConfig& cfg = {});

struct Clustering {
    std::vector<int> assignments;
    Matrix centroids;  // c x k
    double inertia = 0.0;
    /// Inertia after each assignment step of the winning restart.
    std::vector<double> inertia_trace;
};

inline constexpr std::size_t kMaxLloydIterations = 300;

/// k-means++ seeding then Lloyd iterations; best of `restarts` runs.
Clustering kmeans(const Matrix& points, std::size_t clusters, std::size_t restarts, std::uint64_t seed);

/// Fraction of points whose cluster's majority label matches their own.
double purity(std::span<const int> assignments, std::span<const int> labels);

/// Mean silhouette coefficient under Euclidean distance.
double silhouette(const Matrix& points, std::span<const int> labels);

}  // namespace cardiosep::latent
