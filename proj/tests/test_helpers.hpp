#pragma once

#include <complex>
#include <random>
#include <vector>

#include "mskam/series.hpp"

namespace mskam::testing {

inline FourierMode mode(std::vector<int> k) { return FourierMode(std::move(k)); }
inline MultiIndex idx(std::vector<int> j) { return MultiIndex(std::move(j)); }

/// Random sparse series with dyadic coefficients (exactly representable
/// products), degree <= max_j, |k| <= max_k.
inline FourierTaylorSeries random_series(std::mt19937_64& rng, int dim, int max_k,
                                         int max_j, int terms,
                                         bool dyadic = false) {
    std::uniform_int_distribution<int> kdist(-max_k, max_k);
    std::uniform_int_distribution<int> jdist(0, max_j);
    std::uniform_real_distribution<double> cdist(-2.0, 2.0);
    std::uniform_int_distribution<int> ddist(-32, 32);
    std::vector<SeriesTerm> ts;
    for (int t = 0; t < terms; ++t) {
        std::vector<int> k(dim), j(dim, 0);
        for (int i = 0; i < dim; ++i) k[i] = kdist(rng);
        int budget = jdist(rng);
        for (int i = 0; i < dim && budget > 0; ++i) {
            std::uniform_int_distribution<int> part(0, budget);
            j[i] = part(rng);
            budget -= j[i];
        }
        Complex c;
        if (dyadic) {
            c = Complex(ddist(rng) / 16.0, ddist(rng) / 16.0);
        } else {
            c = Complex(cdist(rng), cdist(rng));
        }
        if (c == Complex(0.0, 0.0)) c = Complex(1.0, 0.0);
        ts.push_back({mode(std::move(k)), idx(std::move(j)), c});
    }
    return FourierTaylorSeries(dim, ts);
}

/// Random real evaluation points for pointwise-comparison oracles.
inline std::pair<std::vector<Complex>, std::vector<Complex>>
random_point(std::mt19937_64& rng, int dim, double action_scale = 0.7) {
    std::uniform_real_distribution<double> adist(-action_scale, action_scale);
    std::uniform_real_distribution<double> tdist(-3.0, 3.0);
    std::vector<Complex> actions(dim), angles(dim);
    for (int i = 0; i < dim; ++i) {
        actions[i] = adist(rng);
        angles[i] = tdist(rng);
    }
    return {actions, angles};
}

}  // namespace mskam::testing
