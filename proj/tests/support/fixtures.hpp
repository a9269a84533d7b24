#pragma once

#include <cstddef>
#include <cstdint>
#include <numbers>
#include <vector>

#include "cardiosep/matrix.hpp"
#include "cardiosep/random.hpp"

namespace fixture {

/// `per_blob` unit-variance Gaussian points around each of `blobs` centers.
/// Center b sits at spacing/sqrt(2) along axis b, so every pair of centers is
/// `spacing` apart (needs blobs <= dim).
struct Blobs {
    cardiosep::Matrix points;
    std::vector<int> labels;
};

inline Blobs gaussian_blobs(std::size_t blobs, std::size_t per_blob, std::size_t dim, double spacing,
                            std::uint64_t seed) {
    cardiosep::Rng rng(seed);
    Blobs out{cardiosep::Matrix(blobs * per_blob, dim), {}};
    for (std::size_t b = 0; b < blobs; ++b) {
        for (std::size_t i = 0; i < per_blob; ++i) {
            auto row = out.points.row(b * per_blob + i);
            for (double& v : row) v = rng.normal();
            row[b % dim] += spacing / std::numbers::sqrt2;
            out.labels.push_back(static_cast<int>(b));
        }
    }
    return out;
}

inline std::vector<double> noise(std::size_t n, std::uint64_t seed, double scale = 1.0) {
    cardiosep::Rng rng(seed);
    std::vector<double> x(n);
    for (double& v : x) v = scale * rng.normal();
    return x;
}

}  // namespace fixture
