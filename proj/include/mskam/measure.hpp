#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "mskam/model.hpp"

namespace mskam {

struct ResonanceQuery {
    std::vector<FourierTaylorSeries> omega_field;  // polynomial in xi, angle-free
    Eigen::VectorXd box_lo, box_hi;
    double gamma = 0.0;
    double tau = 0.0;       // must exceed n - 1
    int k_max = 0;
    ScaleSet scales{{1.0}, 1.0};
    long long sample_count = 1000000;
    std::uint64_t seed = 0;
    /// Resonance denominator exponent; < 0 selects tau. The denominator
    /// appears once with tau and once with tau + 1 in the source estimates;
    /// exposing it keeps both readable.
    double exponent = -1.0;

    void validate() const;
    double box_volume() const;
};

struct ResonanceEstimate {
    double estimate = 0.0;
    double std_error = 0.0;
    long long hits = 0;
    long long samples = 0;
};

/// Monte Carlo estimate of |{xi in box: some 0 < |k| <= k_max has
/// |<k, omega(xi)>| < eps_min gamma / |k|^exponent}|. Deterministic for a
/// fixed seed.
ResonanceEstimate resonance_measure(const ResonanceQuery& q);

/// Estimates for several gamma values sharing one sample stream, so that
/// monotonicity in gamma is exact.
std::vector<ResonanceEstimate> resonance_measure_sweep(const ResonanceQuery& q,
                                                       const std::vector<double>& gammas);

struct MeasureFit {
    double beta = 0.0;
    double std_error = 0.0;
    double ci_low = 0.0, ci_high = 0.0;  // beta -+ 2 stderr
    std::vector<double> gammas;
    std::vector<ResonanceEstimate> estimates;
    int derivative_order = 0;            // the N entering the reference exponents
    bool consistent_lemma = false;       // beta >= 1/(N+1) - 2 stderr
    bool consistent_theorem = false;     // beta >= 1/N   - 2 stderr
};

/// Least-squares slope of log(measure) against log(gamma). Requires at
/// least 4 gammas spanning two decades and positive estimates throughout.
/// N < 0 selects n - 1.
MeasureFit fit_measure_exponent(const ResonanceQuery& q, const std::vector<double>& gammas,
                                int N = -1);

/// Exact resonant-set measure for n = 1: the union of intervals
/// {|k xi| < eps_min gamma / k^exponent} intersected with the box.
double resonance_measure_exact_1d(const ResonanceQuery& q);

}  // namespace mskam
