#include "mskam/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mskam {

namespace {

double clamped_exp(double x) {
    if (x > 700.0) return std::numeric_limits<double>::infinity();
    if (x < -745.0) return 0.0;
    return std::exp(x);
}

double fourier_order_from_log_eta(double log_eta, int m, double a) {
    // K = (floor(log(1/eta^m)) + 1)^a
    const double l = -static_cast<double>(m) * log_eta;
    return std::pow(std::floor(l) + 1.0, a);
}

}  // namespace

StepParams StepSchedule::params_at(int nu, const ScaleSet& scales) const {
    if (nu < 0 || nu > nu_max())
        throw std::out_of_range("schedule row out of range");
    const auto& row = rows[nu];
    StepParams p;
    p.window = DomainWindow(row.r, row.s, row.h);
    p.strip_loss = row.sigma;
    p.shrink = row.eta;
    p.fourier_order = row.fourier_order;
    p.gamma = row.gamma;
    p.tau = init.tau;
    p.m_taylor = m_taylor;
    p.scales = scales;
    return p;
}

StepSchedule make_schedule(const ScheduleInit& init, int m, double a, int nu_max,
                           int dim, const ScaleSet& scales,
                           bool enforce_asymptotic_gates, double theta_gate) {
    if (m <= 2) throw std::invalid_argument("schedule requires m > 2");
    const double a_min = std::log(4.0) / std::log(2.0 - 2.0 / m);
    if (!(a > a_min))
        throw std::invalid_argument("schedule requires a > log 4 / log(2 - 2/m) = " +
                                    std::to_string(a_min));
    if (!(init.eta0 > 0.0) || !(init.eta0 < 0.125))
        throw std::invalid_argument("schedule requires 0 < eta0 < 1/8");
    if (!(init.r0 > 0.0) || !(init.s0 > 0.0) || !(init.h0 > 0.0))
        throw std::invalid_argument("schedule requires positive r0, s0, h0");
    if (!(init.gamma0 > 0.0))
        throw std::invalid_argument("schedule requires positive gamma0");
    if (!(init.tau >= dim - 1))
        throw std::invalid_argument("schedule requires tau >= n - 1");
    if (nu_max < 1) throw std::invalid_argument("schedule requires nu_max >= 1");

    StepSchedule sched;
    sched.m_taylor = m;
    sched.growth_exponent = a;
    sched.init = init;
    sched.rows.resize(nu_max + 1);

    const double ratio = (2.0 * m - 2.0) / m;
    double log_eta = std::log(init.eta0);
    double log_r = std::log(init.r0);
    double log_h = std::log(init.h0);
    double s = init.s0;
    for (int nu = 0; nu <= nu_max; ++nu) {
        ScheduleRow& row = sched.rows[nu];
        row.index = nu;
        row.log_eta = log_eta;
        row.log_r = log_r;
        row.log_h = log_h;
        row.eta = clamped_exp(log_eta);
        row.r = clamped_exp(log_r);
        row.h = clamped_exp(log_h);
        row.s = s;
        row.sigma = 0.15 * s;
        row.fourier_order = fourier_order_from_log_eta(log_eta, m, a);
        row.gamma = init.gamma0 * (1.0 - std::pow(2.0, -(nu + 1.0)));
        const double log_target = std::log(scales.eps_min()) + std::log(row.gamma) +
                                  2.0 * row.log_r + m * row.log_eta +
                                  (init.tau + 1.0) * std::log(row.sigma);
        row.eps_target = clamped_exp(log_target);

        // next row
        log_r += log_eta;
        log_h += log_eta;
        log_eta *= ratio;
        s *= 0.25;
    }

    const auto gates = gate_check(sched.params_at(0, scales), dim, theta_gate);
    if (!gates.pass_a)
        throw std::invalid_argument("schedule gate (a) fails at nu = 0: K0 sigma0 <= n - 1");
    if (!gates.pass_b)
        throw std::invalid_argument(
            "schedule gate (b) fails at nu = 0: truncation tail above eta0^m");
    if (enforce_asymptotic_gates) {
        if (!gates.pass_c)
            throw std::invalid_argument("schedule gate (c) fails at nu = 0");
        if (!gates.pass_d)
            throw std::invalid_argument("schedule gate (d) fails at nu = 0");
        if (!gates.pass_e)
            throw std::invalid_argument("schedule gate (e) fails at nu = 0");
    }
    return sched;
}

double schedule_log_eta(const ScheduleInit& init, int m, int nu) {
    const double ratio = (2.0 * m - 2.0) / m;
    return std::pow(ratio, nu) * std::log(init.eta0);
}

double schedule_log_r(const ScheduleInit& init, int m, int nu) {
    // r_nu = r0 eta0^{(m^nu - (2m-2)^nu) / (m^{nu-1} (2 - m))}
    if (nu == 0) return std::log(init.r0);
    const double mpow = std::pow(static_cast<double>(m), nu);
    const double qpow = std::pow(2.0 * m - 2.0, nu);
    const double denom = std::pow(static_cast<double>(m), nu - 1) * (2.0 - m);
    const double exponent = (mpow - qpow) / denom;
    return std::log(init.r0) + exponent * std::log(init.eta0);
}

double schedule_fourier_order(const ScheduleInit& init, int m, double a, int nu) {
    return fourier_order_from_log_eta(schedule_log_eta(init, m, nu), m, a);
}

ConvergenceSummary convergence_report(const ConvergenceTrace& trace, double tol) {
    if (trace.rows.empty())
        throw std::invalid_argument("convergence report requires a nonempty trace");
    ConvergenceSummary sum;
    sum.product_bound = trace.product_bound;
    double partial = 0.0;
    for (const auto& row : trace.rows) {
        partial += row.deviation;
        sum.deviations.push_back(row.deviation);
        sum.partial_sums.push_back(partial);
    }
    // contraction ratio of the deviation tail
    const std::size_t n = sum.deviations.size();
    double worst_ratio = 0.0;
    for (std::size_t i = n > 3 ? n - 3 : 1; i < n; ++i) {
        const double prev = sum.deviations[i - 1];
        const double cur = sum.deviations[i];
        if (prev > 0.0)
            worst_ratio = std::max(worst_ratio, cur / prev);
        else if (cur > 0.0)
            worst_ratio = std::numeric_limits<double>::infinity();
    }
    const double last = sum.deviations.back();
    if (last == 0.0) {
        sum.tail_estimate = 0.0;
        sum.cauchy = true;
    } else if (worst_ratio < 1.0) {
        sum.tail_estimate = last * worst_ratio / (1.0 - worst_ratio);
        sum.cauchy = sum.tail_estimate <= tol;
    } else {
        sum.tail_estimate = std::numeric_limits<double>::infinity();
        sum.cauchy = false;
    }
    return sum;
}

RunResult run_iteration(const HamiltonianSpec& spec, const Eigen::VectorXd& xi,
                        const StepSchedule& sched, const RunOptions& opts,
                        const std::vector<ConditionReport>& preconditions) {
    auto require = [&](const std::string& id, const char* why) {
        for (const auto& rep : preconditions)
            if (rep.condition_id == id) {
                if (!rep.pass)
                    throw std::invalid_argument(std::string("run refused: condition (") +
                                                id + ") check failed; " + why);
                return;
            }
        throw std::invalid_argument(std::string("run refused: condition (") + id +
                                    ") check missing; " + why);
    };
    require("R", "every mode needs the rank condition");
    if (opts.mode == StepMode::FrequencyPreserving)
        require("K", "frequency-preserving mode needs the hessian block condition");
    if (opts.mode == StepMode::IsoEnergetic) {
        require("K", "iso-energetic mode needs the hessian block condition");
        require("I", "iso-energetic mode needs the bordered block condition");
    }

    const auto& first = sched.rows.front();
    const DomainWindow window0(first.r, first.s, first.h);
    auto expand = expand_at(spec, xi, window0);

    RunResult result(spec.dim);
    result.nf = expand.nf;
    result.pert = add(expand.tail, expand.pert.scaled(spec.scales.eps_pert()))
                      .with_rel_floor(0.0);
    result.initial_frequency = result.nf.frequency();
    result.initial_energy = result.nf.energy();
    result.accumulated_drift = Eigen::VectorXd::Zero(spec.dim);
    result.initial_error = majorant_norm(result.pert, first.r, first.s);

    StepOptions step_opts;
    step_opts.lie_order = opts.lie_order;
    step_opts.theta_gate = opts.theta_gate;
    step_opts.enforce_asymptotic_gates = opts.enforce_asymptotic_gates;
    step_opts.n1 = opts.n1;
    step_opts.preserved = opts.preserved;
    step_opts.correction_tol = opts.correction_tol;
    step_opts.correction_max_iter = opts.correction_max_iter;
    step_opts.pert_rel_floor = opts.pert_rel_floor;
    step_opts.lipschitz = opts.lipschitz;

    double entering_error = result.initial_error;
    const double eps_min = spec.scales.eps_min();
    for (int nu = 0; nu < sched.nu_max(); ++nu) {
        const StepParams params = sched.params_at(nu, spec.scales);
        StepResult step;
        try {
            step = apply_step(result.nf, result.pert, params, opts.mode, step_opts);
        } catch (const StepError& e) {
            result.failure_detail =
                "step " + std::to_string(nu) + " " + std::string(e.what());
            if (e.phase() == "gates")
                result.status = RunStatus::GateFailure;
            else if (e.phase() == "divisors" || e.phase() == "homological")
                result.status = RunStatus::DivisorFailure;
            else
                result.status = RunStatus::CorrectionFailure;
            return result;
        }

        const StepParams params_next = sched.params_at(nu + 1, spec.scales);
        const bool accepted = error_update(step.report, params, params_next, opts.slack);

        ConvergenceRow row;
        row.index = nu;
        row.measured_error = entering_error;
        row.target_error = sched.rows[nu].eps_target;
        row.contraction_ratio = step.report.contraction_ratio;
        row.accepted = accepted;
        const double eps_rel = entering_error / eps_min;
        const double dev1 = eps_rel / (params.gamma * params.window.action_radius *
                                       std::pow(params.strip_loss, params.tau + 1.0));
        const double dev2 = entering_error /
                            (params.window.action_radius * params.window.param_width);
        row.deviation = std::max(dev1, dev2);
        result.trace.product_bound *= 1.0 + opts.product_constant * row.deviation;
        row.partial_sum = (result.trace.rows.empty()
                               ? 0.0
                               : result.trace.rows.back().partial_sum) +
                          row.deviation;
        result.trace.rows.push_back(row);

        result.nf = std::move(step.nf_plus);
        result.pert = std::move(step.pert_plus);
        result.accumulated_drift += step.report.freq_drift.cwiseAbs();
        result.reports.push_back(std::move(step.report));
        result.steps_completed = nu + 1;
        entering_error = result.reports.back().new_error;

        if (entering_error <= opts.error_floor && nu + 1 < sched.nu_max()) {
            result.status = RunStatus::ErrorFloor;
            return result;
        }
    }
    result.status = RunStatus::Completed;
    return result;
}

}  // namespace mskam
