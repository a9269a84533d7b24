#include "cardiosep/latent.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <string>

#include "cardiosep/error.hpp"
#include "cardiosep/random.hpp"

namespace cardiosep::latent {

Matrix pairwise_squared_distances(const Matrix& points) {
    const std::size_t n = points.rows();
    Matrix d(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double v = squared_distance(points.row(i), points.row(j));
            d(i, j) = v;
            d(j, i) = v;
        }
    }
    return d;
}

Affinities calibrate_affinities(const Matrix& sq_dist, double perplexity) {
    const std::size_t n = sq_dist.rows();
    if (sq_dist.cols() != n || n < 2) throw InvalidArgument("distance matrix must be square with N >= 2");
    if (!(perplexity > 1.0) || perplexity > static_cast<double>(n - 1)) {
        throw InvalidArgument("perplexity " + std::to_string(perplexity) + " must be in (1, N-1=" +
                              std::to_string(n - 1) + "]");
    }
    const double target = std::log(perplexity);
    Affinities out{Matrix(n, n), std::vector<double>(n), std::vector<double>(n)};
    std::vector<double> shifted(n);

    for (std::size_t i = 0; i < n; ++i) {
        double d_min = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) d_min = std::min(d_min, sq_dist(i, j));
        }
        double mean_shift = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            shifted[j] = (j == i) ? 0.0 : sq_dist(i, j) - d_min;
            mean_shift += shifted[j];
        }
        mean_shift /= static_cast<double>(n - 1);

        double beta = mean_shift > 0.0 ? 1.0 / mean_shift : 1.0;
        double beta_lo = -std::numeric_limits<double>::infinity();
        double beta_hi = std::numeric_limits<double>::infinity();
        auto row = out.conditional.row(i);
        double entropy = 0.0;
        for (std::size_t step = 0; step < kBisectionSteps; ++step) {
            double sum = 0.0;
            double weighted = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                row[j] = (j == i) ? 0.0 : std::exp(-beta * shifted[j]);
                sum += row[j];
                weighted += row[j] * shifted[j];
            }
            entropy = std::log(sum) + beta * weighted / sum;
            for (std::size_t j = 0; j < n; ++j) row[j] /= sum;

            const double diff = entropy - target;
            if (std::abs(diff) < kEntropyTolerance) break;
            if (diff > 0.0) {
                beta_lo = beta;
                beta = std::isinf(beta_hi) ? beta * 2.0 : 0.5 * (beta + beta_hi);
            } else {
                beta_hi = beta;
                beta = std::isinf(beta_lo) ? beta / 2.0 : 0.5 * (beta + beta_lo);
            }
        }
        out.entropy[i] = entropy / std::numbers::ln2;
        out.precision[i] = beta;
    }
    return out;
}

Matrix joint_probabilities(const Matrix& conditional) {
    const std::size_t n = conditional.rows();
    Matrix p(n, n);
    const double scale = 1.0 / (2.0 * static_cast<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double v = (conditional(i, j) + conditional(j, i)) * scale;
            p(i, j) = v;
            p(j, i) = v;
        }
    }
    return p;
}

namespace {

void validate_cloud(const Matrix& points) {
    if (points.rows() < 2) throw InvalidArgument("need at least 2 points");
    if (!points.all_finite()) throw InvalidArgument("points contain non-finite values");
}

bool all_identical(const Matrix& points) {
    for (std::size_t i = 1; i < points.rows(); ++i) {
        if (squared_distance(points.row(0), points.row(i)) > 0.0) return false;
    }
    return true;
}

int sign(double v) { return (v > 0.0) - (v < 0.0); }

double kl_cost(const Matrix& p, const Matrix& y) {
    const std::size_t n = p.rows();
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) z += 2.0 / (1.0 + squared_distance(y.row(i), y.row(j)));
    }
    double cost = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double pij = std::max(p(i, j), 1e-12);
            const double qij = std::max(1.0 / (1.0 + squared_distance(y.row(i), y.row(j))) / z, 1e-12);
            cost += 2.0 * pij * std::log(pij / qij);
        }
    }
    return cost;
}

}  // namespace

Embedding2D tsne(const LatentCloud& cloud, const TsneConfig& cfg) {
    const Matrix& x = cloud.points;
    validate_cloud(x);
    const std::size_t n = x.rows();
    if (!(3.0 * cfg.perplexity < static_cast<double>(n))) {
        throw InvalidArgument("perplexity " + std::to_string(cfg.perplexity) + " too large for " +
                              std::to_string(n) + " points (need 3*perplexity < N)");
    }
    if (cfg.iters < 250) throw InvalidArgument("t-SNE needs at least 250 iterations");
    if (all_identical(x)) throw InvalidArgument("all points are identical; jitter them before t-SNE");
    if (cfg.cost_log_stride == 0) throw InvalidArgument("cost_log_stride must be positive");

    const Matrix p = joint_probabilities(calibrate_affinities(pairwise_squared_distances(x), cfg.perplexity).conditional);

    Rng rng(cfg.seed);
    Embedding2D out;
    out.coords = Matrix(n, 2);
    for (double& v : out.coords.data()) v = rng.normal() * 1e-4;
    Matrix& y = out.coords;

    Matrix update(n, 2);
    Matrix gains(n, 2, 1.0);
    Matrix grad(n, 2);
    Matrix num(n, n);

    for (std::size_t iter = 0; iter < cfg.iters; ++iter) {
        const double exaggeration = iter < cfg.exaggeration_iters ? cfg.exaggeration : 1.0;
        const double momentum = iter < cfg.momentum_switch ? cfg.initial_momentum : cfg.final_momentum;

        double z = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                const double dx = y(i, 0) - y(j, 0);
                const double dy = y(i, 1) - y(j, 1);
                const double q = 1.0 / (1.0 + dx * dx + dy * dy);
                num(i, j) = q;
                num(j, i) = q;
                z += 2.0 * q;
            }
        }
        const double inv_z = 1.0 / z;
        for (std::size_t i = 0; i < n; ++i) {
            double gx = 0.0;
            double gy = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) continue;
                const double q = num(i, j);
                const double mult = (exaggeration * p(i, j) - q * inv_z) * q;
                gx += mult * (y(i, 0) - y(j, 0));
                gy += mult * (y(i, 1) - y(j, 1));
            }
            grad(i, 0) = 4.0 * gx;
            grad(i, 1) = 4.0 * gy;
        }

        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t d = 0; d < 2; ++d) {
                const bool same_sign = sign(grad(i, d)) == sign(update(i, d));
                gains(i, d) = same_sign ? gains(i, d) * 0.8 : gains(i, d) + 0.2;
                gains(i, d) = std::max(gains(i, d), 0.01);
                update(i, d) = momentum * update(i, d) - cfg.learning_rate * gains(i, d) * grad(i, d);
                y(i, d) += update(i, d);
            }
        }
        for (std::size_t d = 0; d < 2; ++d) {
            double mean = 0.0;
            for (std::size_t i = 0; i < n; ++i) mean += y(i, d);
            mean /= static_cast<double>(n);
            for (std::size_t i = 0; i < n; ++i) y(i, d) -= mean;
        }
        if (!y.all_finite()) throw NumericError("t-SNE diverged at iteration " + std::to_string(iter));

        if ((iter + 1) % cfg.cost_log_stride == 0 || iter + 1 == cfg.iters) {
            out.cost_trace.emplace_back(iter + 1, kl_cost(p, y));
        }
    }
    return out;
}

namespace {

struct Lloyd {
    std::vector<int> assignments;
    Matrix centroids;
    double inertia = 0.0;
    std::vector<double> trace;
};

// Nearest centroid, ties to the lower index. Returns the squared distance.
std::pair<int, double> nearest(std::span<const double> point, const Matrix& centroids) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centroids.rows(); ++c) {
        const double d = squared_distance(point, centroids.row(c));
        if (d < best_d) {
            best_d = d;
            best = static_cast<int>(c);
        }
    }
    return {best, best_d};
}

Matrix seed_plus_plus(const Matrix& points, std::size_t clusters, Rng& rng) {
    const std::size_t n = points.rows();
    Matrix centroids(clusters, points.cols());
    std::size_t first = rng.index(n);
    std::copy(points.row(first).begin(), points.row(first).end(), centroids.row(0).begin());
    std::vector<double> d2(n);
    for (std::size_t i = 0; i < n; ++i) d2[i] = squared_distance(points.row(i), centroids.row(0));
    for (std::size_t c = 1; c < clusters; ++c) {
        double total = 0.0;
        for (double v : d2) total += v;
        std::size_t pick = 0;
        if (total > 0.0) {
            const double target = rng.uniform() * total;
            double acc = 0.0;
            pick = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                acc += d2[i];
                if (acc > target && d2[i] > 0.0) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = rng.index(n);
        }
        std::copy(points.row(pick).begin(), points.row(pick).end(), centroids.row(c).begin());
        for (std::size_t i = 0; i < n; ++i) {
            d2[i] = std::min(d2[i], squared_distance(points.row(i), centroids.row(c)));
        }
    }
    return centroids;
}

double assign_all(const Matrix& points, const Matrix& centroids, std::vector<int>& assignments) {
    double inertia = 0.0;
    for (std::size_t i = 0; i < points.rows(); ++i) {
        const auto [c, d] = nearest(points.row(i), centroids);
        assignments[i] = c;
        inertia += d;
    }
    return inertia;
}

void update_centroids(const Matrix& points, std::vector<int>& assignments, Matrix& centroids) {
    const std::size_t k = centroids.rows();
    const std::size_t dim = points.cols();
    std::vector<std::size_t> counts(k, 0);
    for (int a : assignments) ++counts[static_cast<std::size_t>(a)];

    // Empty clusters take the point farthest from its centroid, drawn from a
    // cluster that can spare one.
    for (std::size_t c = 0; c < k; ++c) {
        if (counts[c] != 0) continue;
        std::size_t far = points.rows();
        double far_d = -1.0;
        for (std::size_t i = 0; i < points.rows(); ++i) {
            const auto owner = static_cast<std::size_t>(assignments[i]);
            if (counts[owner] < 2) continue;
            const double d = squared_distance(points.row(i), centroids.row(owner));
            if (d > far_d) {
                far_d = d;
                far = i;
            }
        }
        if (far == points.rows()) continue;
        --counts[static_cast<std::size_t>(assignments[far])];
        assignments[far] = static_cast<int>(c);
        counts[c] = 1;
    }

    Matrix sums(k, dim);
    for (std::size_t i = 0; i < points.rows(); ++i) {
        auto s = sums.row(static_cast<std::size_t>(assignments[i]));
        const auto p = points.row(i);
        for (std::size_t d = 0; d < dim; ++d) s[d] += p[d];
    }
    for (std::size_t c = 0; c < k; ++c) {
        if (counts[c] == 0) continue;
        for (std::size_t d = 0; d < dim; ++d) centroids(c, d) = sums(c, d) / static_cast<double>(counts[c]);
    }
}

Lloyd run_lloyd(const Matrix& points, std::size_t clusters, Rng& rng) {
    Lloyd run;
    run.centroids = seed_plus_plus(points, clusters, rng);
    run.assignments.assign(points.rows(), 0);
    run.inertia = assign_all(points, run.centroids, run.assignments);
    run.trace.push_back(run.inertia);
    std::vector<int> next(points.rows());
    for (std::size_t it = 0; it < kMaxLloydIterations; ++it) {
        update_centroids(points, run.assignments, run.centroids);
        run.inertia = assign_all(points, run.centroids, next);
        run.trace.push_back(run.inertia);
        const bool stable = next == run.assignments;
        run.assignments.swap(next);
        if (stable) break;
    }
    return run;
}

}  // namespace

Clustering kmeans(const Matrix& points, std::size_t clusters, std::size_t restarts, std::uint64_t seed) {
    validate_cloud(points);
    if (clusters < 1) throw InvalidArgument("cluster count must be >= 1");
    if (clusters > points.rows()) {
        throw InvalidArgument("cluster count " + std::to_string(clusters) + " exceeds point count " +
                              std::to_string(points.rows()));
    }
    if (restarts < 1) throw InvalidArgument("restarts must be >= 1");
    Rng rng(seed);
    Lloyd best;
    bool have_best = false;
    for (std::size_t r = 0; r < restarts; ++r) {
        Lloyd run = run_lloyd(points, clusters, rng);
        if (!have_best || run.inertia < best.inertia) {
            best = std::move(run);
            have_best = true;
        }
    }
    return {std::move(best.assignments), std::move(best.centroids), best.inertia, std::move(best.trace)};
}

double purity(std::span<const int> assignments, std::span<const int> labels) {
    if (assignments.size() != labels.size()) {
        throw InvalidArgument("purity: " + std::to_string(assignments.size()) + " assignments vs " +
                              std::to_string(labels.size()) + " labels");
    }
    if (assignments.empty()) throw InvalidArgument("purity needs at least one element");
    std::map<int, std::map<int, std::size_t>> counts;
    for (std::size_t i = 0; i < labels.size(); ++i) ++counts[assignments[i]][labels[i]];
    std::size_t majority = 0;
    for (const auto& [cluster, by_label] : counts) {
        std::size_t best = 0;
        for (const auto& [label, count] : by_label) best = std::max(best, count);
        majority += best;
    }
    return static_cast<double>(majority) / static_cast<double>(labels.size());
}

double silhouette(const Matrix& points, std::span<const int> labels) {
    const std::size_t n = points.rows();
    if (labels.size() != n) throw InvalidArgument("silhouette: labels not aligned with points");
    if (n < 3) throw InvalidArgument("silhouette needs at least 3 points");
    std::map<int, std::size_t> index;
    for (int l : labels) index.emplace(l, 0);
    if (index.size() < 2) throw InvalidArgument("silhouette needs at least 2 distinct labels");
    std::size_t next = 0;
    for (auto& [label, idx] : index) idx = next++;
    std::vector<std::size_t> cluster(n);
    std::vector<std::size_t> sizes(index.size(), 0);
    for (std::size_t i = 0; i < n; ++i) {
        cluster[i] = index.at(labels[i]);
        ++sizes[cluster[i]];
    }

    double total = 0.0;
    std::vector<double> sums(index.size());
    for (std::size_t i = 0; i < n; ++i) {
        std::fill(sums.begin(), sums.end(), 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) sums[cluster[j]] += std::sqrt(squared_distance(points.row(i), points.row(j)));
        }
        const std::size_t own = cluster[i];
        if (sizes[own] < 2) continue;
        const double a = sums[own] / static_cast<double>(sizes[own] - 1);
        double b = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < sizes.size(); ++c) {
            if (c != own) b = std::min(b, sums[c] / static_cast<double>(sizes[c]));
        }
        const double denom = std::max(a, b);
        if (denom > 0.0) total += (b - a) / denom;
    }
    return total / static_cast<double>(n);
}

}  // namespace cardiosep::latent
