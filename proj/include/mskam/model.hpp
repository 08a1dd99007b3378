#pragma once

#include <Eigen/Dense>

#include "mskam/series.hpp"

namespace mskam {

/// Scale factors of the integrable part. Index 1..m in the normal-form
/// convention; a leading unit scale is stored like any other factor.
struct ScaleSet {
    std::vector<double> epsilons;   // each in (0, 1]
    double epsilon_ratio = 0.0;     // relative perturbation size

    ScaleSet() = default;
    ScaleSet(std::vector<double> eps, double ratio);

    int count() const { return static_cast<int>(epsilons.size()); }
    double eps_min() const;                       // smallest scale
    double eps_max() const;                       // largest scale
    double eps_pert() const;                      // epsilon_ratio * eps_min
};

/// Integrable normal form e + <omega, I> + 1/2 <I, A I> + sum h_j I^j held
/// per scale, with the combined quantities always recomputed on demand.
/// Iteration updates that cannot be attributed to a single scale accumulate
/// in the *_shift slots, which also serve as drift bookkeeping: they stay
/// meaningful even when far below the resolution of the combined values.
struct NormalForm {
    int dim = 0;
    int m_taylor = 0;
    ScaleSet scales;
    std::vector<double> e_parts;
    std::vector<Eigen::VectorXd> omega_parts;
    std::vector<Eigen::MatrixXd> a_parts;          // symmetric per scale
    std::vector<FourierTaylorSeries> h_parts;      // degrees 3..m-1, angle-free

    double e_shift = 0.0;
    Eigen::VectorXd omega_shift;
    Eigen::MatrixXd a_shift;
    FourierTaylorSeries h_shift;

    NormalForm() : NormalForm(1, 3, ScaleSet({1.0}, 1.0)) {}
    NormalForm(int dim, int m_taylor, ScaleSet scales);

    void validate() const;

    double energy() const;
    Eigen::VectorXd frequency() const;
    Eigen::MatrixXd hessian() const;
    /// Combined degree-3..m-1 terms (per-scale plus shift), angle-free.
    FourierTaylorSeries higher_terms() const;
    /// The full normal form as an exact series (rel_floor 0), angle-free.
    FourierTaylorSeries to_series() const;
};

/// Multi-scale Hamiltonian sum_i eps_i H_i(I) + eps_pert * P(I, theta) with
/// polynomial data. The action domain is the box [domain_lo, domain_hi].
struct HamiltonianSpec {
    int dim = 0;
    int m_taylor = 0;
    std::vector<FourierTaylorSeries> integrable_parts;  // angle-free, one per scale
    FourierTaylorSeries perturbation;                   // unscaled P(I, theta)
    ScaleSet scales;
    Eigen::VectorXd domain_lo, domain_hi;

    HamiltonianSpec(int dim, int m_taylor, std::vector<FourierTaylorSeries> parts,
                    FourierTaylorSeries pert, ScaleSet scales,
                    Eigen::VectorXd lo, Eigen::VectorXd hi);

    void validate() const;
    /// Combined integrable value at a real action point.
    double integrable_value(const Eigen::VectorXd& xi) const;
};

struct ExpandResult {
    NormalForm nf;
    FourierTaylorSeries tail;   // combined degrees >= m_taylor, absolute scale
    FourierTaylorSeries pert;   // recentered P, still unscaled
    double tail_constant;       // majorant(tail, r, s) / eps_pert on the window
};

/// Substitute I -> xi + I (exact polynomial recentering).
FourierTaylorSeries recenter_actions(const FourierTaylorSeries& p,
                                     const Eigen::VectorXd& xi);

/// Taylor-expand the spec at base point xi: per-scale normal form up to
/// degree m_taylor-1, tail of degrees >= m_taylor, and the shifted
/// perturbation. Requires xi at distance >= window.r from the domain
/// boundary.
ExpandResult expand_at(const HamiltonianSpec& spec, const Eigen::VectorXd& xi,
                       const DomainWindow& window);

/// True iff majorant(pert, r, s) < c * eps_pert (strict).
bool perturbation_gate(const FourierTaylorSeries& pert, const DomainWindow& window,
                       const ScaleSet& scales, double c);

}  // namespace mskam
