#pragma once

#include <string>
#include <vector>

#include "mskam/conditions.hpp"
#include "mskam/kamstep.hpp"

namespace mskam {

struct ScheduleInit {
    double r0 = 0.0, s0 = 0.0, eta0 = 0.0, h0 = 0.0, gamma0 = 0.0;
    double tau = 0.0;
};

struct ScheduleRow {
    int index = 0;
    double r = 0, s = 0, sigma = 0, eta = 0, h = 0;
    double fourier_order = 0;  // K
    double gamma = 0;
    double eps_target = 0;     // eps_min gamma r^2 eta^m sigma^{tau+1}
    // log-space values stay finite long after the linear ones underflow
    double log_r = 0, log_eta = 0, log_h = 0;
};

struct StepSchedule {
    std::vector<ScheduleRow> rows;  // indices 0..nu_max
    int m_taylor = 0;
    double growth_exponent = 0.0;   // a
    ScheduleInit init;

    int nu_max() const { return static_cast<int>(rows.size()) - 1; }
    StepParams params_at(int nu, const ScaleSet& scales) const;
};

/// Build the iteration sequences r, s, sigma, eta, h, K, gamma. Refuses
/// construction on a named parameter violation or when a gate fails at
/// nu = 0 (gates (c),(d),(e) only when enforce_asymptotic_gates).
StepSchedule make_schedule(const ScheduleInit& init, int m, double a, int nu_max,
                           int dim, const ScaleSet& scales,
                           bool enforce_asymptotic_gates = true,
                           double theta_gate = 0.1);

// closed forms for the exactness checks, in natural logs
double schedule_log_eta(const ScheduleInit& init, int m, int nu);
double schedule_log_r(const ScheduleInit& init, int m, int nu);
double schedule_fourier_order(const ScheduleInit& init, int m, double a, int nu);

struct ConvergenceRow {
    int index = 0;
    double deviation = 0;        // max(eps_rel/(gamma r sigma^{tau+1}), eps/(r h))
    double partial_sum = 0;
    double measured_error = 0;   // error entering the step
    double target_error = 0;     // scheduled bound at this index
    double contraction_ratio = 0;
    bool accepted = false;       // error_update verdict of the step
};

struct ConvergenceTrace {
    std::vector<ConvergenceRow> rows;
    double product_bound = 1.0;  // prod (1 + c1 * deviation)
};

struct ConvergenceSummary {
    std::vector<double> deviations;
    std::vector<double> partial_sums;
    double product_bound = 1.0;
    double tail_estimate = 0.0;
    bool cauchy = false;
};

/// Deviation sequence, partial sums, the product bound, and a Cauchy
/// verdict: deviations must eventually contract and the estimated tail must
/// fall below the tolerance.
ConvergenceSummary convergence_report(const ConvergenceTrace& trace, double tol = 1e-9);

enum class RunStatus {
    Completed,
    ErrorFloor,
    GateFailure,
    DivisorFailure,
    CorrectionFailure
};

struct RunOptions {
    StepMode mode = StepMode::Full;
    int n1 = 0;
    std::vector<int> preserved;
    int lie_order = 4;
    double theta_gate = 0.1;
    bool enforce_asymptotic_gates = true;
    double error_floor = 0.0;
    double slack = 0.5;
    double product_constant = 1.0;
    double pert_rel_floor = 1e-20;
    double correction_tol = 1e-12;
    int correction_max_iter = 50;
    double lipschitz = -1.0;
};

struct RunResult {
    NormalForm nf;
    FourierTaylorSeries pert;
    ConvergenceTrace trace;
    std::vector<KamStepReport> reports;
    RunStatus status = RunStatus::Completed;
    std::string failure_detail;
    int steps_completed = 0;
    Eigen::VectorXd initial_frequency;
    double initial_energy = 0.0;
    /// Componentwise sum of |freq_drift| over the executed steps.
    Eigen::VectorXd accumulated_drift;
    double initial_error = 0.0;

    RunResult(int dim)
        : nf(dim, 3, ScaleSet({1.0}, 1.0)), pert(FourierTaylorSeries(dim)) {}
};

/// Drive repeated KAM steps along the schedule. The condition reports
/// required by the mode must be present and passing: (R) always, plus (K)
/// for frequency-preserving runs, plus (I) for iso-energetic runs.
RunResult run_iteration(const HamiltonianSpec& spec, const Eigen::VectorXd& xi,
                        const StepSchedule& sched, const RunOptions& opts,
                        const std::vector<ConditionReport>& preconditions);

}  // namespace mskam
