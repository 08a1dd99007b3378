#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "mskam/model.hpp"

namespace mskam {

/// A step refusing to run (gate, divisor, or correction failure).
class StepError : public std::runtime_error {
public:
    StepError(std::string phase, std::string what)
        : std::runtime_error(phase + ": " + what), phase_(std::move(phase)) {}
    const std::string& phase() const { return phase_; }

private:
    std::string phase_;
};

struct StepParams {
    DomainWindow window;        // r, s, h
    double strip_loss = 0.0;    // sigma, the step consumes 5 sigma of strip
    double shrink = 0.0;        // eta in (0, 1/8)
    double fourier_order = 0.0; // K; double because late schedule rows overflow int
    double gamma = 0.0;         // Diophantine constant
    double tau = 0.0;           // Diophantine exponent, >= n-1
    int m_taylor = 0;
    ScaleSet scales;

    void validate(int dim) const;
};

struct GateReport {
    // margins are (satisfied quantity)/(required quantity); >= 1 passes
    bool pass_a = false, pass_b = false, pass_c = false, pass_d = false, pass_e = false;
    double margin_a = 0, margin_b = 0, margin_c = 0, margin_d = 0, margin_e = 0;
    double theta_gate = 0.1;
    bool all_pass() const { return pass_a && pass_b && pass_c && pass_d && pass_e; }
    bool hard_pass() const { return pass_a && pass_b; }
};

/// Evaluate step assumptions (a)-(e). (b) uses the closed-form tail bound
/// n! K^n e^{-K sigma} / sigma^{n+1}; the o(.) conditions (c),(d) are made
/// concrete with the factor theta_gate. Margins are computed in log space
/// so that extreme schedule rows do not overflow.
GateReport gate_check(const StepParams& p, int n, double theta_gate = 0.1);

struct DivisorScreenReport {
    std::vector<FourierMode> resonant;
    double divisor_min = 0.0;  // min over kept modes of |<k,w>| |k|^tau / (eps_min gamma)
    long long modes_checked = 0;
    bool exhaustive = false;
    bool all_resonant = false;
};

/// Screen every mode 0 < |k| <= K (enumeration must be feasible).
DivisorScreenReport screen_divisors(const Eigen::VectorXd& omega, const StepParams& p,
                                    double lipschitz);
/// Screen a supplied mode list (the modes actually present in a series).
DivisorScreenReport screen_divisors(const Eigen::VectorXd& omega, const StepParams& p,
                                    double lipschitz,
                                    const std::vector<FourierMode>& modes);

struct GeneratingFunction {
    FourierTaylorSeries series{1};  // no k = 0 modes, |k| <= K, |j| <= m-1
    double norm_bound = 0.0;        // majorant on (r, s - 2 sigma)
};

struct HomologicalSolveResult {
    GeneratingFunction gen;
    /// Residual of {N,F} + R - [R]; contains only out-of-cutoff orders.
    FourierTaylorSeries defect{1};
    double divisor_min = 0.0;
};

/// Solve {N,F} + R = [R] degree by degree: at Taylor degree d the divisor is
/// i<k,omega> and the contributions of <k, A I + dh> acting on lower-degree
/// coefficients move to the right-hand side.
HomologicalSolveResult solve_homological(const NormalForm& nf,
                                         const FourierTaylorSeries& r_series,
                                         const StepParams& p);

/// Independent evaluation of {N,F} + R - [R] through the generic bracket,
/// with per-coefficient accumulation bounds: coefficients provably
/// attributable to rounding of this very evaluation are dropped, everything
/// else is kept.
FourierTaylorSeries homological_residual(const NormalForm& nf,
                                         const FourierTaylorSeries& f,
                                         const FourierTaylorSeries& r_series);

/// Deviation series of the order-L time-1 map of the flow generated by f:
/// first the action components U_i - I_i, then the angle components
/// V_i - theta_i.
std::pair<std::vector<FourierTaylorSeries>, std::vector<FourierTaylorSeries>>
flow_deviation(const FourierTaylorSeries& f, int order);

struct TransformBounds {
    double u_dev = 0;        // |U - id| on (r/2, s-3s)
    double v_dev = 0;        // |V - id| on (r/2, s-3s)
    double u_action_dev = 0; // |U_I - I| on (eta r, s-3s)
    double v_angle_dev = 0;  // |V_theta - I| on (r/2, s-4s)
    double u_angle = 0;      // |U_theta| on (r/2, s-4s)
    double v_action = 0;     // |V_I| on (eta r, s-3s)
};

struct KamStepReport {
    GateReport gates;
    double divisor_min = 0.0;
    double f_norm = 0.0;
    TransformBounds transform_bounds;
    Eigen::VectorXd shift;          // action translation of the correction
    double time_scale = 0.0;        // t of the iso-energetic correction
    double old_error = 0.0;         // majorant of P on (r, s)
    double new_error = 0.0;         // majorant of P_+ on (eta r, s-5s) + Lie remainder
    double lie_remainder = 0.0;
    double contraction_ratio = 0.0;
    double energy_update = 0.0;     // k = 0, j = 0 coefficient of R
    Eigen::VectorXd freq_update;    // k = 0, |j| = 1 coefficients of R
    /// Per-component frequency drift after the correction (absolute); for
    /// preserved components this is the solve residual, for the others the
    /// residual shift of the correction lemma.
    Eigen::VectorXd freq_drift;
    double energy_residual = 0.0;   // iso-energetic cancellation defect
    int correction_iterations = 0;
};

enum class StepMode { Full, FrequencyPreserving, IsoEnergetic };

struct StepOptions {
    int lie_order = 4;
    double theta_gate = 0.1;
    /// Enforce the asymptotic gates (c),(d),(e); (a),(b) are always enforced.
    bool enforce_asymptotic_gates = true;
    int n1 = 0;                     // correction block size for the modes that use it
    std::vector<int> preserved;     // component indices; empty = 0..n1-1
    double lipschitz = -1.0;        // <0: use the hessian row norm
    double correction_tol = 1e-12;
    int correction_max_iter = 50;
    double pert_rel_floor = 1e-20;  // canonical floor of the outgoing perturbation
};

struct StepResult {
    NormalForm nf_plus;
    FourierTaylorSeries pert_plus{1};
    KamStepReport report;
};

/// One full KAM step: gates, truncation, screening, homological solve, Lie
/// transform, absorption of [R] into the normal form, mode correction, and
/// the new-error estimate. Throws StepError when it refuses to run.
StepResult apply_step(const NormalForm& nf, const FourierTaylorSeries& pert,
                      const StepParams& p, StepMode mode, const StepOptions& opts);

struct FrequencyCorrectionResult {
    Eigen::VectorXd shift;               // I*
    NormalForm nf;
    Eigen::VectorXd preserved_residual;  // (A I* + dw) on the preserved rows
    Eigen::VectorXd residual_shift;      // frequency shift left on the others
};

/// Action translation restoring the selected frequency components after a
/// step: minimal-norm solve of A_S I* = -freq_update over the preserved
/// rows S (|S| = n1), built on a column-pivoted rank-revealing
/// factorization.
FrequencyCorrectionResult frequency_correction(const NormalForm& nf_plus,
                                               const Eigen::VectorXd& freq_update,
                                               int n1,
                                               const std::vector<int>& preserved_rows,
                                               double window_r);

struct IsoEnergeticCorrectionResult {
    Eigen::VectorXd shift;  // I_1*
    double t = 0.0;
    NormalForm nf;
    int iterations = 0;
    Eigen::VectorXd ratio_drift;   // post-correction drift entering the ratio
    double energy_residual = 0.0;  // defect absorbed by reassigning e
};

/// Bordered solve ((A, w), (w^T, 0)) (I*, t) = -(freq_update, energy terms)
/// by fixed-point iteration with the nonlinear vector frozen at the
/// previous iterate. The energy coefficient is kept bit-identical; the
/// cancellation defect is reported instead.
IsoEnergeticCorrectionResult isoenergetic_correction(
    const NormalForm& nf_plus, const Eigen::VectorXd& freq_update,
    const FourierTaylorSeries& r_average, int n1, const std::vector<int>& selected,
    double tol, int max_iter, double window_r);

/// Contraction verdict of the new-error lemma: new_error below both the
/// eta^m contraction of the old error (with slack) and the target
/// eps_min gamma r_+^2 eta_+^m sigma_+^{tau+1}.
bool error_update(const KamStepReport& report, const StepParams& p,
                  const StepParams& p_next, double slack = 0.5);

}  // namespace mskam
