#include "mskam/model.hpp"

#include <algorithm>
#include <cmath>

namespace mskam {

namespace {

// binomial for the small exponents of recentering
double binomial(int n, int k) {
    double v = 1.0;
    for (int i = 1; i <= k; ++i) v = v * static_cast<double>(n - k + i) / i;
    return std::round(v);
}

}  // namespace

ScaleSet::ScaleSet(std::vector<double> eps, double ratio)
    : epsilons(std::move(eps)), epsilon_ratio(ratio) {
    if (epsilons.empty()) throw std::invalid_argument("scale set must be nonempty");
    for (double e : epsilons)
        if (!(e > 0.0) || e > 1.0)
            throw std::invalid_argument("scale factors must lie in (0, 1]");
    if (!(epsilon_ratio > 0.0))
        throw std::invalid_argument("epsilon_ratio must be positive");
}

double ScaleSet::eps_min() const {
    return *std::min_element(epsilons.begin(), epsilons.end());
}

double ScaleSet::eps_max() const {
    return *std::max_element(epsilons.begin(), epsilons.end());
}

double ScaleSet::eps_pert() const { return epsilon_ratio * eps_min(); }

NormalForm::NormalForm(int dim_, int m_taylor_, ScaleSet scales_)
    : dim(dim_), m_taylor(m_taylor_), scales(std::move(scales_)),
      h_shift(FourierTaylorSeries(dim_).with_rel_floor(0.0)) {
    if (dim < 1) throw std::invalid_argument("normal form dimension must be >= 1");
    if (m_taylor < 3) throw std::invalid_argument("m_taylor must be >= 3");
    const int m = scales.count();
    e_parts.assign(m, 0.0);
    omega_parts.assign(m, Eigen::VectorXd::Zero(dim));
    a_parts.assign(m, Eigen::MatrixXd::Zero(dim, dim));
    h_parts.assign(m, FourierTaylorSeries(dim).with_rel_floor(0.0));
    e_shift = 0.0;
    omega_shift = Eigen::VectorXd::Zero(dim);
    a_shift = Eigen::MatrixXd::Zero(dim, dim);
}

void NormalForm::validate() const {
    const int m = scales.count();
    if (static_cast<int>(e_parts.size()) != m ||
        static_cast<int>(omega_parts.size()) != m ||
        static_cast<int>(a_parts.size()) != m ||
        static_cast<int>(h_parts.size()) != m)
        throw std::invalid_argument("normal form part count != scale count");
    for (const auto& a : a_parts) {
        if (a.rows() != dim || a.cols() != dim)
            throw std::invalid_argument("hessian part has wrong shape");
        const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
        if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
            throw std::invalid_argument("hessian part is not symmetric");
    }
    for (const auto& h : h_parts) {
        if (h.dim() != dim) throw std::invalid_argument("higher-term dimension mismatch");
        if (h.max_fourier_norm() != 0)
            throw std::invalid_argument("higher terms must be angle-free");
        for (const auto& [key, value] : h.coefficients()) {
            int order = 0;
            for (int i = 0; i < dim; ++i) order += key[dim + i];
            if (order < 3 || order > m_taylor - 1)
                throw std::invalid_argument("higher terms must have degrees 3..m-1");
        }
    }
}

double NormalForm::energy() const {
    double e = e_shift;
    for (int i = 0; i < scales.count(); ++i) e += scales.epsilons[i] * e_parts[i];
    return e;
}

Eigen::VectorXd NormalForm::frequency() const {
    Eigen::VectorXd w = omega_shift;
    for (int i = 0; i < scales.count(); ++i) w += scales.epsilons[i] * omega_parts[i];
    return w;
}

Eigen::MatrixXd NormalForm::hessian() const {
    Eigen::MatrixXd a = a_shift;
    for (int i = 0; i < scales.count(); ++i) a += scales.epsilons[i] * a_parts[i];
    return a;
}

FourierTaylorSeries NormalForm::higher_terms() const {
    FourierTaylorSeries h = h_shift;
    for (int i = 0; i < scales.count(); ++i)
        h = add(h, h_parts[i].scaled(scales.epsilons[i]));
    return h;
}

FourierTaylorSeries NormalForm::to_series() const {
    std::vector<SeriesTerm> terms;
    const FourierMode k0(std::vector<int>(dim, 0));
    terms.push_back({k0, MultiIndex(std::vector<int>(dim, 0)), energy()});
    const Eigen::VectorXd w = frequency();
    for (int i = 0; i < dim; ++i) {
        std::vector<int> j(dim, 0);
        j[i] = 1;
        terms.push_back({k0, MultiIndex(j), w[i]});
    }
    const Eigen::MatrixXd a = hessian();
    for (int i = 0; i < dim; ++i) {
        for (int q = i; q < dim; ++q) {
            std::vector<int> j(dim, 0);
            j[i] += 1;
            j[q] += 1;
            const double c = (i == q) ? 0.5 * a(i, i) : a(i, q);
            terms.push_back({k0, MultiIndex(j), c});
        }
    }
    FourierTaylorSeries low(dim, terms, false, 0.0);
    return add(low, higher_terms()).with_rel_floor(0.0);
}

HamiltonianSpec::HamiltonianSpec(int dim_, int m_taylor_,
                                 std::vector<FourierTaylorSeries> parts,
                                 FourierTaylorSeries pert, ScaleSet scales_,
                                 Eigen::VectorXd lo, Eigen::VectorXd hi)
    : dim(dim_), m_taylor(m_taylor_), integrable_parts(std::move(parts)),
      perturbation(std::move(pert)), scales(std::move(scales_)),
      domain_lo(std::move(lo)), domain_hi(std::move(hi)) {
    validate();
}

void HamiltonianSpec::validate() const {
    if (dim < 1) throw std::invalid_argument("spec dimension must be >= 1");
    if (m_taylor < 3) throw std::invalid_argument("m_taylor must be >= 3");
    if (static_cast<int>(integrable_parts.size()) != scales.count())
        throw std::invalid_argument("integrable part count != scale count");
    for (const auto& p : integrable_parts) {
        if (p.dim() != dim) throw std::invalid_argument("integrable part dimension mismatch");
        if (p.max_fourier_norm() != 0)
            throw std::invalid_argument("integrable parts must contain only k = 0 modes");
    }
    if (perturbation.dim() != dim)
        throw std::invalid_argument("perturbation dimension mismatch");
    if (domain_lo.size() != dim || domain_hi.size() != dim)
        throw std::invalid_argument("domain box dimension mismatch");
    for (int i = 0; i < dim; ++i)
        if (!(domain_lo[i] < domain_hi[i]))
            throw std::invalid_argument("domain box is empty");
}

double HamiltonianSpec::integrable_value(const Eigen::VectorXd& xi) const {
    std::vector<Complex> actions(dim), angles(dim, Complex(0.0, 0.0));
    for (int i = 0; i < dim; ++i) actions[i] = xi[i];
    Complex total(0.0, 0.0);
    for (int i = 0; i < scales.count(); ++i)
        total += scales.epsilons[i] * integrable_parts[i].evaluate(actions, angles);
    return total.real();
}

FourierTaylorSeries recenter_actions(const FourierTaylorSeries& p,
                                     const Eigen::VectorXd& xi) {
    const int dim = p.dim();
    if (xi.size() != dim) throw std::invalid_argument("recenter point dimension mismatch");
    std::vector<SeriesTerm> terms;
    for (const auto& [key, value] : p.coefficients()) {
        // expand prod_i (xi_i + I_i)^{j_i}
        std::vector<std::pair<std::vector<int>, Complex>> partial = {
            {std::vector<int>(dim, 0), value}};
        for (int i = 0; i < dim; ++i) {
            const int ji = key[dim + i];
            if (ji == 0) continue;
            std::vector<std::pair<std::vector<int>, Complex>> next;
            next.reserve(partial.size() * (ji + 1));
            for (const auto& [j, c] : partial) {
                double xpow = 1.0;
                for (int b = ji; b >= 0; --b) {
                    // coefficient of I_i^b: C(ji, b) * xi_i^{ji-b}
                    std::vector<int> jj = j;
                    jj[i] = b;
                    next.push_back({jj, c * binomial(ji, b) * xpow});
                    xpow *= xi[i];
                }
            }
            partial = std::move(next);
        }
        const FourierMode k(std::vector<int>(key.begin(), key.begin() + dim));
        for (auto& [j, c] : partial) terms.push_back({k, MultiIndex(j), c});
    }
    return FourierTaylorSeries(dim, terms, false, p.rel_floor())
        .with_cutoffs(p.taylor_cutoff(), p.fourier_cutoff());
}

ExpandResult expand_at(const HamiltonianSpec& spec, const Eigen::VectorXd& xi,
                       const DomainWindow& window) {
    const int n = spec.dim;
    if (xi.size() != n) throw std::invalid_argument("base point dimension mismatch");
    for (int i = 0; i < n; ++i) {
        if (xi[i] - spec.domain_lo[i] < window.action_radius ||
            spec.domain_hi[i] - xi[i] < window.action_radius)
            throw std::invalid_argument(
                "base point closer than the window radius to the domain boundary");
    }

    NormalForm nf(n, spec.m_taylor, spec.scales);
    FourierTaylorSeries tail = FourierTaylorSeries(n).with_rel_floor(0.0);
    const FourierMode k0(std::vector<int>(n, 0));
    for (int i = 0; i < spec.scales.count(); ++i) {
        const auto shifted = recenter_actions(spec.integrable_parts[i], xi).with_rel_floor(0.0);
        nf.e_parts[i] = shifted.coefficient(k0, MultiIndex(std::vector<int>(n, 0))).real();
        for (int q = 0; q < n; ++q) {
            std::vector<int> j(n, 0);
            j[q] = 1;
            nf.omega_parts[i][q] = shifted.coefficient(k0, MultiIndex(j)).real();
        }
        for (int q = 0; q < n; ++q) {
            for (int w = q; w < n; ++w) {
                std::vector<int> j(n, 0);
                j[q] += 1;
                j[w] += 1;
                const double c = shifted.coefficient(k0, MultiIndex(j)).real();
                if (q == w) {
                    nf.a_parts[i](q, q) = 2.0 * c;
                } else {
                    nf.a_parts[i](q, w) = c;
                    nf.a_parts[i](w, q) = c;
                }
            }
        }
        nf.h_parts[i] =
            shifted.filter_taylor_below(spec.m_taylor - 1).filter_taylor_at_least(3);
        tail = add(tail, shifted.filter_taylor_at_least(spec.m_taylor)
                             .scaled(spec.scales.epsilons[i]));
    }
    nf.validate();

    FourierTaylorSeries pert = recenter_actions(spec.perturbation, xi);
    double tail_constant = 0.0;
    const double eps = spec.scales.eps_pert();
    if (eps > 0.0)
        tail_constant =
            majorant_norm(tail, window.action_radius, window.strip_width) / eps;
    return ExpandResult{std::move(nf), std::move(tail), std::move(pert), tail_constant};
}

bool perturbation_gate(const FourierTaylorSeries& pert, const DomainWindow& window,
                       const ScaleSet& scales, double c) {
    if (!(c > 0.0)) throw std::invalid_argument("gate constant must be positive");
    const double norm =
        majorant_norm(pert, window.action_radius, window.strip_width);
    return norm < c * scales.eps_pert();
}

}  // namespace mskam
