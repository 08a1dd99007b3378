#include "mskam/measure.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace mskam {

namespace {

// evaluate an angle-free polynomial series at a real point
double real_eval(const FourierTaylorSeries& p, const Eigen::VectorXd& x) {
    const int dim = p.dim();
    double total = 0.0;
    for (const auto& [key, value] : p.coefficients()) {
        double term = value.real();
        for (int i = 0; i < dim; ++i)
            for (int q = 0; q < key[dim + i]; ++q) term *= x[i];
        total += term;
    }
    return total;
}

// canonical representatives: k != 0, first nonzero entry positive
std::vector<std::vector<int>> half_modes(int n, int k_max) {
    std::vector<std::vector<int>> out;
    std::vector<int> cur(n, 0);
    auto rec = [&](auto&& self, int pos, int budget, bool pinned) -> void {
        if (pos == n) {
            if (pinned) out.push_back(cur);
            return;
        }
        const int lo = pinned ? -budget : 0;
        for (int v = lo; v <= budget; ++v) {
            cur[pos] = v;
            self(self, pos + 1, budget - std::abs(v), pinned || v > 0);
        }
    };
    rec(rec, 0, k_max, false);
    return out;
}

struct ModeTable {
    std::vector<int> flat;       // n entries per mode
    std::vector<double> weight;  // |k|^exponent
    int n = 0;
    std::size_t count = 0;
};

ModeTable build_modes(int n, int k_max, double exponent) {
    ModeTable t;
    t.n = n;
    const auto modes = half_modes(n, k_max);
    t.count = modes.size();
    t.flat.reserve(modes.size() * n);
    t.weight.reserve(modes.size());
    for (const auto& k : modes) {
        int norm = 0;
        for (int v : k) norm += std::abs(v);
        for (int v : k) t.flat.push_back(v);
        t.weight.push_back(std::pow(static_cast<double>(norm), exponent));
    }
    return t;
}

// smallest |<k, omega(xi)>| |k|^exponent over the mode table
double resonance_margin(const ModeTable& modes, const Eigen::VectorXd& w) {
    double margin = std::numeric_limits<double>::infinity();
    const int n = modes.n;
    for (std::size_t m = 0; m < modes.count; ++m) {
        double dot = 0.0;
        const int* k = &modes.flat[m * n];
        for (int i = 0; i < n; ++i) dot += k[i] * w[i];
        margin = std::min(margin, std::abs(dot) * modes.weight[m]);
    }
    return margin;
}

}  // namespace

void ResonanceQuery::validate() const {
    const int n = static_cast<int>(omega_field.size());
    if (n == 0) throw std::invalid_argument("resonance query needs a frequency field");
    for (const auto& comp : omega_field) {
        if (comp.dim() != n)
            throw std::invalid_argument("frequency field component dimension mismatch");
        if (comp.max_fourier_norm() != 0)
            throw std::invalid_argument("frequency field must be polynomial (angle-free)");
    }
    if (box_lo.size() != n || box_hi.size() != n)
        throw std::invalid_argument("query box dimension mismatch");
    for (int i = 0; i < n; ++i)
        if (!(box_lo[i] < box_hi[i]))
            throw std::invalid_argument("query box has no volume");
    if (!(gamma > 0.0)) throw std::invalid_argument("gamma must be positive");
    if (!(tau > n - 1)) throw std::invalid_argument("tau must exceed n - 1");
    if (k_max < 1) throw std::invalid_argument("k_max must be >= 1");
    if (sample_count < 1) throw std::invalid_argument("sample_count must be >= 1");
}

double ResonanceQuery::box_volume() const {
    double v = 1.0;
    for (int i = 0; i < box_lo.size(); ++i) v *= box_hi[i] - box_lo[i];
    return v;
}

std::vector<ResonanceEstimate> resonance_measure_sweep(const ResonanceQuery& q,
                                                       const std::vector<double>& gammas) {
    q.validate();
    const int n = static_cast<int>(q.omega_field.size());
    const double exponent = q.exponent < 0.0 ? q.tau : q.exponent;
    const ModeTable modes = build_modes(n, q.k_max, exponent);
    const double eps_min = q.scales.eps_min();

    std::vector<double> thresholds(gammas.size());
    for (std::size_t g = 0; g < gammas.size(); ++g) {
        if (!(gammas[g] > 0.0)) throw std::invalid_argument("gamma must be positive");
        thresholds[g] = eps_min * gammas[g];
    }

    std::mt19937_64 rng(q.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Eigen::VectorXd xi(n), w(n);
    std::vector<long long> hits(gammas.size(), 0);
    for (long long s = 0; s < q.sample_count; ++s) {
        for (int i = 0; i < n; ++i)
            xi[i] = q.box_lo[i] + (q.box_hi[i] - q.box_lo[i]) * unit(rng);
        for (int i = 0; i < n; ++i) w[i] = real_eval(q.omega_field[i], xi);
        const double margin = resonance_margin(modes, w);
        for (std::size_t g = 0; g < gammas.size(); ++g)
            if (margin < thresholds[g]) ++hits[g];
    }

    const double volume = q.box_volume();
    std::vector<ResonanceEstimate> out(gammas.size());
    for (std::size_t g = 0; g < gammas.size(); ++g) {
        const double p = static_cast<double>(hits[g]) / q.sample_count;
        out[g].hits = hits[g];
        out[g].samples = q.sample_count;
        out[g].estimate = volume * p;
        out[g].std_error = volume * std::sqrt(p * (1.0 - p) / q.sample_count);
    }
    return out;
}

ResonanceEstimate resonance_measure(const ResonanceQuery& q) {
    return resonance_measure_sweep(q, {q.gamma}).front();
}

MeasureFit fit_measure_exponent(const ResonanceQuery& q, const std::vector<double>& gammas,
                                int N) {
    if (gammas.size() < 4)
        throw std::invalid_argument("exponent fit needs at least 4 gamma values");
    const auto [mn, mx] = std::minmax_element(gammas.begin(), gammas.end());
    if (*mx / *mn < 100.0)
        throw std::invalid_argument("gamma values must span at least two decades");

    MeasureFit fit;
    fit.gammas = gammas;
    fit.estimates = resonance_measure_sweep(q, gammas);
    const std::size_t count = gammas.size();
    for (std::size_t g = 0; g < count; ++g)
        if (!(fit.estimates[g].estimate > 0.0))
            throw std::runtime_error("resonant set estimate is zero at gamma = " +
                                     std::to_string(gammas[g]) +
                                     "; cannot fit a log-log slope");

    double sx = 0, sy = 0;
    for (std::size_t g = 0; g < count; ++g) {
        sx += std::log(gammas[g]);
        sy += std::log(fit.estimates[g].estimate);
    }
    const double mean_x = sx / count, mean_y = sy / count;
    double sxx = 0, sxy = 0;
    for (std::size_t g = 0; g < count; ++g) {
        const double dx = std::log(gammas[g]) - mean_x;
        const double dy = std::log(fit.estimates[g].estimate) - mean_y;
        sxx += dx * dx;
        sxy += dx * dy;
    }
    fit.beta = sxy / sxx;
    double ss_res = 0;
    for (std::size_t g = 0; g < count; ++g) {
        const double pred = mean_y + fit.beta * (std::log(gammas[g]) - mean_x);
        const double r = std::log(fit.estimates[g].estimate) - pred;
        ss_res += r * r;
    }
    fit.std_error = std::sqrt(ss_res / (count - 2) / sxx);
    fit.ci_low = fit.beta - 2.0 * fit.std_error;
    fit.ci_high = fit.beta + 2.0 * fit.std_error;

    const int n = static_cast<int>(q.omega_field.size());
    fit.derivative_order = N < 0 ? std::max(1, n - 1) : N;
    fit.consistent_lemma =
        fit.beta >= 1.0 / (fit.derivative_order + 1.0) - 2.0 * fit.std_error;
    fit.consistent_theorem =
        fit.beta >= 1.0 / fit.derivative_order - 2.0 * fit.std_error;
    return fit;
}

double resonance_measure_exact_1d(const ResonanceQuery& q) {
    q.validate();
    if (q.omega_field.size() != 1)
        throw std::invalid_argument("exact interval-union measure is 1-d only");
    // omega(xi) = c xi (linear through the origin) keeps the intervals exact
    const auto& comp = q.omega_field.front();
    double slope = 0.0;
    for (const auto& [key, value] : comp.coefficients()) {
        if (key[1] == 1)
            slope = value.real();
        else
            throw std::invalid_argument("exact 1-d measure expects omega(xi) = c xi");
    }
    if (slope == 0.0) throw std::invalid_argument("exact 1-d measure expects c != 0");

    const double exponent = q.exponent < 0.0 ? q.tau : q.exponent;
    const double lo = q.box_lo[0], hi = q.box_hi[0];
    std::vector<std::pair<double, double>> intervals;
    for (int k = 1; k <= q.k_max; ++k) {
        // |k slope xi| < eps gamma / k^exponent
        const double half =
            q.scales.eps_min() * q.gamma /
            (std::pow(static_cast<double>(k), exponent) * std::abs(slope) * k);
        const double a = std::max(lo, -half), b = std::min(hi, half);
        if (a < b) intervals.push_back({a, b});
    }
    std::sort(intervals.begin(), intervals.end());
    double total = 0.0, cur_lo = 0.0, cur_hi = -1.0;
    bool open = false;
    for (const auto& [a, b] : intervals) {
        if (!open || a > cur_hi) {
            if (open) total += cur_hi - cur_lo;
            cur_lo = a;
            cur_hi = b;
            open = true;
        } else {
            cur_hi = std::max(cur_hi, b);
        }
    }
    if (open) total += cur_hi - cur_lo;
    return total;
}

}  // namespace mskam
