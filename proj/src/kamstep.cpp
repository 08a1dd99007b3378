#include "mskam/kamstep.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace mskam {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

std::string mode_to_string(const FourierMode& k) {
    std::string s = "(";
    for (std::size_t i = 0; i < k.entries.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(k.entries[i]);
    }
    return s + ")";
}

double clamped_exp(double x) {
    if (x > 700.0) return std::numeric_limits<double>::infinity();
    if (x < -700.0) return 0.0;
    return std::exp(x);
}

// keys helpers on the raw coefficient layout
int key_order(const FourierTaylorSeries::Key& key, int dim) {
    int n = 0;
    for (int i = 0; i < dim; ++i) n += key[dim + i];
    return n;
}

int key_norm(const FourierTaylorSeries::Key& key, int dim) {
    int n = 0;
    for (int i = 0; i < dim; ++i) n += std::abs(key[i]);
    return n;
}

double mode_dot(const FourierTaylorSeries::Key& key, const Eigen::VectorXd& omega) {
    double v = 0.0;
    for (int i = 0; i < static_cast<int>(omega.size()); ++i)
        v += static_cast<double>(key[i]) * omega[i];
    return v;
}

// accumulation with per-key rounding budget: value, sum of |contributions|,
// contribution count
struct NoisyAccum {
    struct Cell {
        Complex value{0.0, 0.0};
        double abs_sum = 0.0;
        long long count = 0;
    };
    std::map<FourierTaylorSeries::Key, Cell> cells;

    void accumulate(const FourierTaylorSeries::Key& key, Complex v) {
        auto& c = cells[key];
        c.value += v;
        c.abs_sum += std::abs(v);
        c.count += 1;
    }
};

void poisson_into(const FourierTaylorSeries& f, const FourierTaylorSeries& g,
                  NoisyAccum& acc) {
    const int dim = f.dim();
    for (const auto& [k1, c1] : f.coefficients()) {
        for (const auto& [k2, c2] : g.coefficients()) {
            const Complex prod = Complex(0.0, 1.0) * c1 * c2;
            for (int i = 0; i < dim; ++i) {
                const long long weight =
                    static_cast<long long>(k1[i]) * k2[dim + i] -
                    static_cast<long long>(k1[dim + i]) * k2[i];
                if (weight == 0) continue;
                FourierTaylorSeries::Key key(2 * dim);
                for (int q = 0; q < 2 * dim; ++q) key[q] = k1[q] + k2[q];
                key[dim + i] -= 1;
                acc.accumulate(key, prod * static_cast<double>(weight));
            }
        }
    }
}

Eigen::VectorXd minimal_norm_solve(const Eigen::MatrixXd& m, const Eigen::VectorXd& rhs,
                                   int required_rank, const char* phase) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    int rank = 0;
    for (int i = 0; i < sv.size(); ++i)
        if (sv(i) > 0.0) ++rank;
    if (rank < required_rank)
        throw StepError(phase, "no nonsingular block of the required size (rank " +
                                   std::to_string(rank) + " < " +
                                   std::to_string(required_rank) + ")");
    Eigen::VectorXd coeff = svd.matrixU().transpose() * rhs;
    for (int i = 0; i < sv.size(); ++i) coeff(i) = sv(i) > 0.0 ? coeff(i) / sv(i) : 0.0;
    return svd.matrixV() * coeff;
}

// translate a polynomial slice (e, omega, A, h) by I -> I + shift, exactly
struct PolySlice {
    double e = 0.0;
    Eigen::VectorXd omega;
    Eigen::MatrixXd a;
    FourierTaylorSeries h;
};

PolySlice translate_slice(int dim, int m_taylor, double e, const Eigen::VectorXd& omega,
                          const Eigen::MatrixXd& a, const FourierTaylorSeries& h,
                          const Eigen::VectorXd& shift) {
    PolySlice out{0.0, Eigen::VectorXd::Zero(dim), Eigen::MatrixXd::Zero(dim, dim),
                  FourierTaylorSeries(dim).with_rel_floor(0.0)};
    out.e = e + omega.dot(shift) + 0.5 * shift.dot(a * shift);
    out.omega = omega + a * shift;
    out.a = a;
    if (!h.empty()) {
        const auto hs = recenter_actions(h, shift).with_rel_floor(0.0);
        const FourierMode k0(std::vector<int>(dim, 0));
        out.e += hs.coefficient(k0, MultiIndex(std::vector<int>(dim, 0))).real();
        for (int i = 0; i < dim; ++i) {
            std::vector<int> j(dim, 0);
            j[i] = 1;
            out.omega[i] += hs.coefficient(k0, MultiIndex(j)).real();
        }
        for (int i = 0; i < dim; ++i) {
            for (int q = i; q < dim; ++q) {
                std::vector<int> j(dim, 0);
                j[i] += 1;
                j[q] += 1;
                const double c = hs.coefficient(k0, MultiIndex(j)).real();
                if (i == q) {
                    out.a(i, i) += 2.0 * c;
                } else {
                    out.a(i, q) += c;
                    out.a(q, i) += c;
                }
            }
        }
        out.h = hs.filter_taylor_at_least(3).filter_taylor_below(m_taylor - 1);
    }
    return out;
}

NormalForm translate_normal_form(const NormalForm& nf, const Eigen::VectorXd& shift) {
    NormalForm out = nf;
    for (int i = 0; i < nf.scales.count(); ++i) {
        const auto s = translate_slice(nf.dim, nf.m_taylor, nf.e_parts[i],
                                       nf.omega_parts[i], nf.a_parts[i],
                                       nf.h_parts[i], shift);
        out.e_parts[i] = s.e;
        out.omega_parts[i] = s.omega;
        out.a_parts[i] = s.a;
        out.h_parts[i] = s.h;
    }
    const auto s = translate_slice(nf.dim, nf.m_taylor, nf.e_shift, nf.omega_shift,
                                   nf.a_shift, nf.h_shift, shift);
    out.e_shift = s.e;
    out.omega_shift = s.omega;
    out.a_shift = s.a;
    out.h_shift = s.h;
    return out;
}

// split the k = 0 polynomial r_avg into (de, domega, dA, dh)
struct AverageSplit {
    double de = 0.0;
    Eigen::VectorXd domega;
    Eigen::MatrixXd da;
    FourierTaylorSeries dh;
};

AverageSplit split_average(const FourierTaylorSeries& r_avg, int dim, int m_taylor) {
    AverageSplit sp{0.0, Eigen::VectorXd::Zero(dim), Eigen::MatrixXd::Zero(dim, dim),
                    FourierTaylorSeries(dim).with_rel_floor(0.0)};
    const FourierMode k0(std::vector<int>(dim, 0));
    sp.de = r_avg.coefficient(k0, MultiIndex(std::vector<int>(dim, 0))).real();
    for (int i = 0; i < dim; ++i) {
        std::vector<int> j(dim, 0);
        j[i] = 1;
        sp.domega[i] = r_avg.coefficient(k0, MultiIndex(j)).real();
    }
    for (int i = 0; i < dim; ++i) {
        for (int q = i; q < dim; ++q) {
            std::vector<int> j(dim, 0);
            j[i] += 1;
            j[q] += 1;
            const double c = r_avg.coefficient(k0, MultiIndex(j)).real();
            if (i == q) {
                sp.da(i, i) = 2.0 * c;
            } else {
                sp.da(i, q) = c;
                sp.da(q, i) = c;
            }
        }
    }
    sp.dh = r_avg.filter_taylor_at_least(3).filter_taylor_below(m_taylor - 1);
    return sp;
}

std::vector<int> default_rows(int n1, const std::vector<int>& preserved, int dim,
                              const char* phase) {
    std::vector<int> rows = preserved;
    if (rows.empty()) {
        rows.resize(n1);
        for (int i = 0; i < n1; ++i) rows[i] = i;
    }
    if (static_cast<int>(rows.size()) != n1)
        throw StepError(phase, "preserved index set size != n1");
    std::vector<int> sorted = rows;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
        throw StepError(phase, "preserved indices must be distinct");
    if (sorted.front() < 0 || sorted.back() >= dim)
        throw StepError(phase, "preserved index out of range");
    return rows;
}

}  // namespace

void StepParams::validate(int dim) const {
    if (!(window.action_radius > 0.0) || !(window.strip_width > 0.0) ||
        !(window.param_width > 0.0))
        throw std::invalid_argument("step window must be positive");
    if (!(shrink > 0.0) || !(shrink < 0.125))
        throw std::invalid_argument("shrink factor eta must lie in (0, 1/8)");
    if (!(5.0 * strip_loss < window.strip_width))
        throw std::invalid_argument("strip loss too large: 5 sigma must stay below s");
    if (!(tau >= dim - 1))
        throw std::invalid_argument("tau must be >= n - 1");
    if (!(fourier_order >= 1.0))
        throw std::invalid_argument("fourier order K must be >= 1");
    if (m_taylor < 3) throw std::invalid_argument("m_taylor must be >= 3");
    if (!(gamma > 0.0)) throw std::invalid_argument("gamma must be positive");
}

GateReport gate_check(const StepParams& p, int n, double theta_gate) {
    GateReport g;
    g.theta_gate = theta_gate;
    const double K = p.fourier_order;
    const double sigma = p.strip_loss;
    const double eta = p.shrink;
    const double r = p.window.action_radius;
    const double h = p.window.param_width;
    const double eps_min = p.scales.eps_min();
    const double eps_max = p.scales.eps_max();

    // (a) K > (n-1)/sigma
    if (n <= 1) {
        g.margin_a = std::numeric_limits<double>::infinity();
    } else {
        g.margin_a = K * sigma / static_cast<double>(n - 1);
    }
    g.pass_a = g.margin_a > 1.0;

    // (b) closed-form tail bound n! K^n e^{-K sigma} / sigma^{n+1} < eta^m,
    // evaluated in logs
    const double log_bound = std::lgamma(n + 1.0) + n * std::log(K) -
                             (n + 1.0) * std::log(sigma) - K * sigma;
    const double log_target = p.m_taylor * std::log(eta);
    g.margin_b = clamped_exp(log_target - log_bound);
    g.pass_b = log_bound < log_target;

    // (c) eps_max h K^{tau+1} <= theta gamma eps_min
    const double log_rhs_cd = std::log(theta_gate) + std::log(p.gamma) + std::log(eps_min);
    const double log_c = std::log(eps_max) + std::log(h) + (p.tau + 1.0) * std::log(K);
    g.margin_c = clamped_exp(log_rhs_cd - log_c);
    g.pass_c = log_c <= log_rhs_cd;

    // (d) r K^{tau+1} <= theta gamma eps_min
    const double log_d = std::log(r) + (p.tau + 1.0) * std::log(K);
    g.margin_d = clamped_exp(log_rhs_cd - log_d);
    g.pass_d = log_d <= log_rhs_cd;

    // (e) epsilon_ratio < gamma r^2 eta^m sigma^{tau+1}
    const double log_e_rhs = std::log(p.gamma) + 2.0 * std::log(r) +
                             p.m_taylor * std::log(eta) +
                             (p.tau + 1.0) * std::log(sigma);
    const double log_e_lhs = std::log(p.scales.epsilon_ratio);
    g.margin_e = clamped_exp(log_e_rhs - log_e_lhs);
    g.pass_e = log_e_lhs < log_e_rhs;
    return g;
}

DivisorScreenReport screen_divisors(const Eigen::VectorXd& omega, const StepParams& p,
                                    double lipschitz,
                                    const std::vector<FourierMode>& modes) {
    if (lipschitz < 0.0)
        throw std::invalid_argument("lipschitz bound must be >= 0");
    const double eps_min = p.scales.eps_min();
    const double margin_loss = p.fourier_order * p.window.param_width * lipschitz;
    DivisorScreenReport rep;
    rep.divisor_min = std::numeric_limits<double>::infinity();
    long long kept = 0;
    for (const auto& k : modes) {
        const int norm = k.norm();
        if (norm == 0 || norm > p.fourier_order) continue;
        ++rep.modes_checked;
        double dot = 0.0;
        for (int i = 0; i < static_cast<int>(k.entries.size()); ++i)
            dot += static_cast<double>(k.entries[i]) * omega[i];
        const double threshold = eps_min * p.gamma / (2.0 * std::pow(norm, p.tau));
        if (std::abs(dot) - margin_loss < threshold) {
            rep.resonant.push_back(k);
        } else {
            ++kept;
            rep.divisor_min = std::min(
                rep.divisor_min,
                std::abs(dot) * std::pow(norm, p.tau) / (eps_min * p.gamma));
        }
    }
    if (kept == 0) {
        rep.divisor_min = 0.0;
        rep.all_resonant = rep.modes_checked > 0;
    }
    return rep;
}

DivisorScreenReport screen_divisors(const Eigen::VectorXd& omega, const StepParams& p,
                                    double lipschitz) {
    const int n = static_cast<int>(omega.size());
    if (p.fourier_order > 64.0 && n > 2)
        throw std::invalid_argument(
            "exhaustive divisor screen infeasible for this K and dimension; "
            "screen an explicit mode list instead");
    const long long K = static_cast<long long>(p.fourier_order);
    double count_estimate = 1.0;
    for (int i = 0; i < n; ++i) count_estimate *= 2.0 * K + 1.0;
    if (count_estimate > 8e6)
        throw std::invalid_argument(
            "exhaustive divisor screen infeasible for this K and dimension; "
            "screen an explicit mode list instead");

    std::vector<FourierMode> modes;
    std::vector<int> cur(n, 0);
    auto rec = [&](auto&& self, int pos, int budget) -> void {
        if (pos == n) {
            FourierMode k{cur};
            if (k.norm() > 0) modes.push_back(k);
            return;
        }
        for (int v = -budget; v <= budget; ++v) {
            cur[pos] = v;
            self(self, pos + 1, budget - std::abs(v));
        }
    };
    rec(rec, 0, static_cast<int>(K));
    auto rep = screen_divisors(omega, p, lipschitz, modes);
    rep.exhaustive = true;
    return rep;
}

HomologicalSolveResult solve_homological(const NormalForm& nf,
                                         const FourierTaylorSeries& r_series,
                                         const StepParams& p) {
    const int dim = nf.dim;
    if (r_series.dim() != dim)
        throw std::invalid_argument("series dimension mismatch in homological solve");
    if (r_series.max_taylor_order() > p.m_taylor - 1)
        throw StepError("homological", "degree overflow: R has degrees >= m_taylor");
    if (r_series.max_fourier_norm() > p.fourier_order)
        throw StepError("homological", "R carries modes above the Fourier cutoff");

    const Eigen::VectorXd omega = nf.frequency();
    const FourierTaylorSeries n_series = nf.to_series();
    const double eps_min_gamma = nf.scales.eps_min() * p.gamma;

    FourierTaylorSeries f_partial = FourierTaylorSeries(dim).with_rel_floor(0.0);
    double divisor_min = std::numeric_limits<double>::infinity();

    for (int degree = 0; degree <= p.m_taylor - 1; ++degree) {
        // contributions of <k, A I + dh> on lower-degree coefficients
        const FourierTaylorSeries bracket =
            f_partial.empty() ? f_partial : poisson(n_series, f_partial);
        std::vector<SeriesTerm> new_terms;
        auto consider = [&](const FourierTaylorSeries::Key& key, Complex rhs) {
            const int norm = key_norm(key, dim);
            const double dot = mode_dot(key, omega);
            const double screen = eps_min_gamma / (2.0 * std::pow(norm, p.tau));
            if (std::abs(dot) < screen)
                throw StepError("homological",
                                "divisor below the screen threshold at mode " +
                                    mode_to_string(FourierMode(std::vector<int>(
                                        key.begin(), key.begin() + dim))));
            divisor_min = std::min(divisor_min,
                                   std::abs(dot) * std::pow(norm, p.tau) / eps_min_gamma);
            // F = rhs / (i dot)
            const Complex value(rhs.imag() / dot, -rhs.real() / dot);
            SeriesTerm t;
            t.k = FourierMode(std::vector<int>(key.begin(), key.begin() + dim));
            t.j = MultiIndex(std::vector<int>(key.begin() + dim, key.end()));
            t.value = value;
            new_terms.push_back(std::move(t));
        };
        for (const auto& [key, value] : r_series.coefficients()) {
            if (key_norm(key, dim) == 0 || key_order(key, dim) != degree) continue;
            consider(key, value + bracket.coefficient(
                              FourierMode(std::vector<int>(key.begin(), key.begin() + dim)),
                              MultiIndex(std::vector<int>(key.begin() + dim, key.end()))));
        }
        for (const auto& [key, value] : bracket.coefficients()) {
            if (key_norm(key, dim) == 0 || key_order(key, dim) != degree) continue;
            FourierTaylorSeries::Key probe(key);
            if (r_series.coefficients().find(probe) != r_series.coefficients().end())
                continue;  // already handled above
            consider(key, value);
        }
        if (!new_terms.empty())
            f_partial = add(f_partial,
                            FourierTaylorSeries(dim, new_terms, false, 0.0));
    }

    HomologicalSolveResult out;
    if (r_series.real_valued() && !f_partial.empty()) {
        // the coefficient formula maps conjugate-symmetric input to
        // conjugate-symmetric output bit-for-bit; restore the flag
        std::vector<SeriesTerm> ts;
        for (const auto& [key, value] : f_partial.coefficients()) {
            SeriesTerm t;
            t.k = FourierMode(std::vector<int>(key.begin(), key.begin() + dim));
            t.j = MultiIndex(std::vector<int>(key.begin() + dim, key.end()));
            t.value = value;
            ts.push_back(std::move(t));
        }
        f_partial = FourierTaylorSeries(dim, ts, true, 0.0);
    }
    const int k_cut = static_cast<int>(std::min(
        p.fourier_order, static_cast<double>(std::numeric_limits<int>::max())));
    out.gen.series = f_partial.with_cutoffs(p.m_taylor - 1, k_cut);
    out.gen.norm_bound = majorant_norm(out.gen.series, p.window.action_radius,
                                       p.window.strip_width - 2.0 * p.strip_loss);
    out.divisor_min = std::isfinite(divisor_min) ? divisor_min : 0.0;
    out.defect = homological_residual(nf, out.gen.series, r_series);
    return out;
}

FourierTaylorSeries homological_residual(const NormalForm& nf,
                                         const FourierTaylorSeries& f,
                                         const FourierTaylorSeries& r_series) {
    const int dim = nf.dim;
    NoisyAccum acc;
    if (!f.empty()) poisson_into(nf.to_series(), f, acc);
    for (const auto& [key, value] : r_series.coefficients()) acc.accumulate(key, value);
    const auto r_avg = average(r_series);
    for (const auto& [key, value] : r_avg.coefficients()) acc.accumulate(key, -value);

    std::vector<SeriesTerm> kept;
    for (const auto& [key, cell] : acc.cells) {
        const double noise = 32.0 * static_cast<double>(cell.count + 2) * kEps * cell.abs_sum;
        if (std::abs(cell.value) <= noise) continue;
        SeriesTerm t;
        t.k = FourierMode(std::vector<int>(key.begin(), key.begin() + dim));
        t.j = MultiIndex(std::vector<int>(key.begin() + dim, key.end()));
        t.value = cell.value;
        kept.push_back(std::move(t));
    }
    return FourierTaylorSeries(dim, kept, false, 0.0);
}

std::pair<std::vector<FourierTaylorSeries>, std::vector<FourierTaylorSeries>>
flow_deviation(const FourierTaylorSeries& f, int order) {
    const int dim = f.dim();
    std::vector<FourierTaylorSeries> du, dv;
    du.reserve(dim);
    dv.reserve(dim);
    for (int i = 0; i < dim; ++i) {
        // {I_i, F} = -dF/dtheta_i ; {theta_i, F} = dF/dI_i
        FourierTaylorSeries gen_u = f.derivative_angle(i).scaled(-1.0);
        FourierTaylorSeries gen_v = f.derivative_action(i);
        FourierTaylorSeries term_u = gen_u, term_v = gen_v;
        FourierTaylorSeries acc_u = gen_u, acc_v = gen_v;
        for (int l = 2; l <= order; ++l) {
            term_u = poisson(term_u, f).scaled(1.0 / static_cast<double>(l));
            term_v = poisson(term_v, f).scaled(1.0 / static_cast<double>(l));
            if (!term_u.empty()) acc_u = add(acc_u, term_u);
            if (!term_v.empty()) acc_v = add(acc_v, term_v);
        }
        du.push_back(std::move(acc_u));
        dv.push_back(std::move(acc_v));
    }
    return {du, dv};
}

FrequencyCorrectionResult frequency_correction(const NormalForm& nf_plus,
                                               const Eigen::VectorXd& freq_update,
                                               int n1,
                                               const std::vector<int>& preserved_rows,
                                               double window_r) {
    const int n = nf_plus.dim;
    if (n1 < 1 || n1 > n)
        throw StepError("frequency correction", "n1 out of range");
    const auto rows = default_rows(n1, preserved_rows, n, "frequency correction");

    const Eigen::MatrixXd a = nf_plus.hessian();
    Eigen::MatrixXd a_sel(n1, n);
    Eigen::VectorXd rhs(n1);
    for (int i = 0; i < n1; ++i) {
        a_sel.row(i) = a.row(rows[i]);
        rhs(i) = -freq_update(rows[i]);
    }
    const Eigen::VectorXd shift =
        minimal_norm_solve(a_sel, rhs, n1, "frequency correction");
    if (shift.lpNorm<Eigen::Infinity>() > 0.5 * window_r)
        throw StepError("frequency correction",
                        "action shift exceeds half the window radius");

    FrequencyCorrectionResult out;
    out.shift = shift;
    out.nf = translate_normal_form(nf_plus, shift);
    out.preserved_residual = a_sel * shift - rhs;
    out.residual_shift = a * shift + freq_update;
    for (int i = 0; i < n1; ++i) out.residual_shift(rows[i]) = out.preserved_residual(i);
    return out;
}

IsoEnergeticCorrectionResult isoenergetic_correction(
    const NormalForm& nf_plus, const Eigen::VectorXd& freq_update,
    const FourierTaylorSeries& r_average, int n1, const std::vector<int>& selected,
    double tol, int max_iter, double window_r) {
    const int n = nf_plus.dim;
    if (n1 < 1 || n1 > n)
        throw StepError("isoenergetic correction", "n1 out of range");
    if (r_average.max_fourier_norm() != 0)
        throw StepError("isoenergetic correction", "[R] must be angle-free");
    const auto rows = default_rows(n1, selected, n, "isoenergetic correction");

    const Eigen::MatrixXd a = nf_plus.hessian();
    const Eigen::VectorXd omega = nf_plus.frequency();

    // selected rows of (A I + omega t + dw = 0) plus the energy row
    Eigen::MatrixXd m_sel(n1 + 1, n + 1);
    for (int i = 0; i < n1; ++i) {
        m_sel.row(i).head(n) = a.row(rows[i]);
        m_sel(i, n) = omega(rows[i]);
    }
    m_sel.row(n1).head(n) = omega.transpose();
    m_sel(n1, n) = 0.0;

    std::vector<Complex> eval_actions(n), eval_angles(n, Complex(0.0, 0.0));
    auto nonlinear = [&](const Eigen::VectorXd& act) {
        for (int i = 0; i < n; ++i) eval_actions[i] = act[i];
        const double quad = 0.5 * act.dot(a * act);
        return quad + r_average.evaluate(eval_actions, eval_angles).real();
    };

    Eigen::VectorXd x = Eigen::VectorXd::Zero(n + 1);
    int iterations = 0;
    for (; iterations < max_iter; ++iterations) {
        Eigen::VectorXd rhs(n1 + 1);
        for (int i = 0; i < n1; ++i) rhs(i) = -freq_update(rows[i]);
        rhs(n1) = -nonlinear(x.head(n));
        const Eigen::VectorXd next =
            minimal_norm_solve(m_sel, rhs, n1 + 1, "isoenergetic correction");
        const double delta = (next - x).lpNorm<Eigen::Infinity>();
        x = next;
        if (x.head(n).lpNorm<Eigen::Infinity>() > 0.5 * window_r)
            throw StepError("isoenergetic correction",
                            "fixed point diverged past half the window radius");
        if (delta <= tol * std::max(1.0, x.lpNorm<Eigen::Infinity>())) {
            ++iterations;
            break;
        }
    }

    IsoEnergeticCorrectionResult out;
    out.shift = x.head(n);
    out.t = x(n);
    out.iterations = iterations;

    const double e_before = nf_plus.energy();
    out.nf = translate_normal_form(nf_plus, out.shift);
    // e_+ = e by the construction; keep the coefficient bit-identical and
    // report the cancellation defect instead
    const double e_after = out.nf.energy();
    const double r0 = r_average.empty()
                          ? 0.0
                          : average(r_average)
                                .coefficient(FourierMode(std::vector<int>(n, 0)),
                                             MultiIndex(std::vector<int>(n, 0)))
                                .real();
    const double e_target = e_before - r0;
    out.energy_residual = e_after - e_target;
    double base;
    out.nf.e_shift = 0.0;
    base = out.nf.energy();
    out.nf.e_shift = e_target - base;
    if (out.nf.energy() != e_target)
        out.nf.e_shift += e_target - out.nf.energy();

    // residual drift: dw + A I* + omega t, relative to each component
    const Eigen::VectorXd res = freq_update + a * out.shift + omega * out.t;
    out.ratio_drift = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i)
        out.ratio_drift(i) = omega(i) != 0.0 ? res(i) / omega(i) : res(i);
    return out;
}

StepResult apply_step(const NormalForm& nf, const FourierTaylorSeries& pert,
                      const StepParams& p, StepMode mode, const StepOptions& opts) {
    nf.validate();
    const int n = nf.dim;
    p.validate(n);
    if (pert.dim() != n)
        throw std::invalid_argument("perturbation dimension mismatch");

    const double r = p.window.action_radius;
    const double s = p.window.strip_width;
    const double sigma = p.strip_loss;
    const double eta = p.shrink;

    KamStepReport rep;
    rep.shift = Eigen::VectorXd::Zero(n);
    rep.freq_update = Eigen::VectorXd::Zero(n);
    rep.freq_drift = Eigen::VectorXd::Zero(n);
    rep.old_error = majorant_norm(pert, r, s);
    rep.gates = gate_check(p, n, opts.theta_gate);
    if (!rep.gates.hard_pass()) {
        const char* name = !rep.gates.pass_a ? "(a)" : "(b)";
        throw StepError("gates", std::string("truncation gate ") + name + " failed");
    }
    if (opts.enforce_asymptotic_gates && !rep.gates.all_pass()) {
        std::string name = !rep.gates.pass_c ? "(c)" : (!rep.gates.pass_d ? "(d)" : "(e)");
        throw StepError("gates", "asymptotic gate " + name + " failed");
    }

    StepResult result{nf, FourierTaylorSeries(n).with_rel_floor(opts.pert_rel_floor),
                      rep};
    if (pert.empty()) {
        result.report.divisor_min = std::numeric_limits<double>::infinity();
        result.report.contraction_ratio = 0.0;
        return result;
    }

    // truncation: Q keeps |j| <= m-1, R additionally |k| <= K
    const long long k_cut =
        p.fourier_order < 9.0e18 ? static_cast<long long>(p.fourier_order)
                                 : std::numeric_limits<long long>::max();
    auto [q_series, r_series] = truncate(pert, k_cut, p.m_taylor);
    const FourierTaylorSeries tail_degrees = pert.filter_taylor_at_least(p.m_taylor);
    const FourierTaylorSeries tail_modes = sub(q_series, r_series);
    const FourierTaylorSeries tail = add(tail_degrees, tail_modes).with_rel_floor(0.0);

    // divisor screen over the modes actually present
    double lip = opts.lipschitz;
    if (lip < 0.0) lip = nf.hessian().cwiseAbs().rowwise().sum().maxCoeff();
    const auto screen =
        screen_divisors(nf.frequency(), p, lip, r_series.fourier_support());
    if (!screen.resonant.empty())
        throw StepError("divisors",
                        "resonant mode " + mode_to_string(screen.resonant.front()) +
                            (screen.all_resonant ? " (all modes resonant)" : ""));
    result.report.divisor_min = screen.divisor_min;

    // homological solve on the oscillating part
    const FourierTaylorSeries r_avg = average(r_series);
    const FourierTaylorSeries r_osc = sub(r_series, r_avg).with_rel_floor(0.0);
    HomologicalSolveResult hs;
    hs.gen.series = FourierTaylorSeries(n).with_rel_floor(0.0);
    hs.defect = FourierTaylorSeries(n).with_rel_floor(0.0);
    if (!r_osc.empty()) {
        hs = solve_homological(nf, r_series, p);
        result.report.f_norm = hs.gen.norm_bound;
    }
    const FourierTaylorSeries& f = hs.gen.series;

    // map well-definedness on the shrunk window
    if (!f.empty()) {
        double f_angle = 0.0, f_action = 0.0;
        for (int i = 0; i < n; ++i) {
            f_angle = std::max(f_angle, majorant_norm(f.derivative_angle(i), 0.5 * r,
                                                      s - 3.0 * sigma));
            f_action = std::max(f_action, majorant_norm(f.derivative_action(i), 0.5 * r,
                                                        s - 3.0 * sigma));
        }
        if (f_angle >= eta * r || f_action >= sigma)
            throw StepError("window",
                            "generating function too large for the time-1 map");
    }

    // normal-form updates from [R]
    const auto sp = split_average(r_avg, n, p.m_taylor);
    result.report.energy_update = sp.de;
    result.report.freq_update = sp.domega;
    NormalForm nf_tilde = nf;
    const std::vector<double> e_parts_before = nf.e_parts;
    const double e_shift_before = nf.e_shift;
    nf_tilde.e_shift += sp.de;
    nf_tilde.omega_shift += sp.domega;
    nf_tilde.a_shift += sp.da;
    nf_tilde.h_shift = add(nf_tilde.h_shift, sp.dh).with_rel_floor(0.0);

    // new perturbation: G = {N,F} reconstructed exactly from the defect,
    // P_+ = D + T + sum_l [ ad^l(G)/(l+1)! + ad^l(R+T)/l! ]
    const FourierTaylorSeries g_series =
        add(hs.defect, sub(r_avg, r_series)).with_rel_floor(0.0);
    const FourierTaylorSeries rt = add(r_series, tail).with_rel_floor(0.0);
    FourierTaylorSeries p_next = add(hs.defect, tail).with_rel_floor(0.0);
    if (!f.empty()) {
        FourierTaylorSeries term_g = g_series;
        FourierTaylorSeries term_rt = rt;
        double fact = 1.0;
        for (int l = 1; l <= opts.lie_order; ++l) {
            fact *= static_cast<double>(l);
            term_g = poisson(term_g, f);
            term_rt = poisson(term_rt, f);
            if (!term_g.empty())
                p_next = add(p_next, term_g.scaled(1.0 / (fact * (l + 1))));
            if (!term_rt.empty()) p_next = add(p_next, term_rt.scaled(1.0 / fact));
        }
        const double r_new = eta * r;
        const double s_new = s - 5.0 * sigma;
        const double rem_g =
            lie_remainder_majorant(g_series, f, opts.lie_order + 1, r_new, s_new) /
            static_cast<double>(opts.lie_order + 2);
        const double rem_rt =
            lie_remainder_majorant(rt, f, opts.lie_order, r_new, s_new);
        result.report.lie_remainder = rem_g + rem_rt;

        // transform deviation bounds
        const auto [du, dv] = flow_deviation(f, opts.lie_order);
        TransformBounds& tb = result.report.transform_bounds;
        for (int i = 0; i < n; ++i) {
            tb.u_dev = std::max(tb.u_dev, majorant_norm(du[i], 0.5 * r, s - 3.0 * sigma));
            tb.v_dev = std::max(tb.v_dev, majorant_norm(dv[i], 0.5 * r, s - 3.0 * sigma));
            for (int q = 0; q < n; ++q) {
                tb.u_action_dev =
                    std::max(tb.u_action_dev, majorant_norm(du[i].derivative_action(q),
                                                            eta * r, s - 3.0 * sigma));
                tb.v_angle_dev =
                    std::max(tb.v_angle_dev, majorant_norm(dv[i].derivative_angle(q),
                                                           0.5 * r, s - 4.0 * sigma));
                tb.u_angle = std::max(tb.u_angle, majorant_norm(du[i].derivative_angle(q),
                                                                0.5 * r, s - 4.0 * sigma));
                tb.v_action = std::max(tb.v_action, majorant_norm(dv[i].derivative_action(q),
                                                                  eta * r, s - 3.0 * sigma));
            }
        }
    }

    // mode correction
    NormalForm nf_plus = nf_tilde;
    if (mode == StepMode::FrequencyPreserving) {
        const int n1 = opts.n1 > 0 ? opts.n1 : n;
        auto fc = frequency_correction(nf_tilde, sp.domega, n1, opts.preserved, r);
        nf_plus = std::move(fc.nf);
        result.report.shift = fc.shift;
        result.report.freq_drift = fc.residual_shift;
        if (fc.shift.lpNorm<Eigen::Infinity>() > 0.0)
            p_next = recenter_actions(p_next, fc.shift);
    } else if (mode == StepMode::IsoEnergetic) {
        const int n1 = opts.n1 > 0 ? opts.n1 : n;
        auto ic = isoenergetic_correction(nf_tilde, sp.domega, r_avg, n1, opts.preserved,
                                          opts.correction_tol, opts.correction_max_iter,
                                          r);
        nf_plus = std::move(ic.nf);
        result.report.shift = ic.shift;
        result.report.time_scale = ic.t;
        result.report.freq_drift = ic.ratio_drift;
        result.report.energy_residual = ic.energy_residual;
        result.report.correction_iterations = ic.iterations;
        // keep the energy coefficient bit-identical to the pre-step value
        nf_plus.e_parts = e_parts_before;
        nf_plus.e_shift = e_shift_before;
        if (ic.shift.lpNorm<Eigen::Infinity>() > 0.0)
            p_next = recenter_actions(p_next, ic.shift);
    } else {
        result.report.freq_drift = sp.domega;
    }

    result.nf_plus = std::move(nf_plus);
    result.pert_plus = p_next.canonical_with_floor(opts.pert_rel_floor);
    result.report.new_error =
        majorant_norm(result.pert_plus, eta * r, s - 5.0 * sigma) +
        result.report.lie_remainder;
    result.report.contraction_ratio =
        rep.old_error > 0.0 ? result.report.new_error / rep.old_error : 0.0;
    return result;
}

bool error_update(const KamStepReport& report, const StepParams& p,
                  const StepParams& p_next, double slack) {
    const double contraction_bound =
        report.old_error * std::pow(p.shrink, p.m_taylor) * (1.0 + slack);
    const double target = p_next.scales.eps_min() * p_next.gamma *
                          p_next.window.action_radius * p_next.window.action_radius *
                          std::pow(p_next.shrink, p_next.m_taylor) *
                          std::pow(p_next.strip_loss, p_next.tau + 1.0);
    return report.new_error <= contraction_bound && report.new_error <= target;
}

}  // namespace mskam
